"""Prediction logs: the on-disk and in-memory model-by-example structure.

A prediction log stores the outputs of m models on a fixed evaluation set
of E examples with C classes.  Log-probabilities are stored rather than
probabilities: dual-space coordinates are what every downstream operation
averages, and full float precision survives the round trip.

File layout (human-inspectable, diff-able):

    line 1   a JSON header
             {"format": "bvlab-predlog", "version": 1, "n_models": m,
              "n_examples": E, "n_classes": C, "generator": "kl",
              "tags": ["seed", "train_id", "group"]}
    line 2   a tab-separated column header
    rest     one tab-separated row per (model, example) pair, model-major:
             model, example, seed, train_id, group, then C log-probabilities

Missing tag values are written as "-".  Floats are written with repr so a
write/read cycle reproduces the in-memory array bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bregman import floor_probs, logsumexp
from .errors import ParseError, SchemaError, UsageError
from .moments import PointTag

FORMAT_NAME = "bvlab-predlog"
FORMAT_VERSION = 1
_TAG_COLUMNS = ("seed", "train_id", "group")
_ROW_NORM_TOL = 1e-6


@dataclass(frozen=True)
class ModelPool:
    """Per-model, per-example log-probability predictions plus provenance."""

    log_probs: np.ndarray                 # (n_models, n_examples, n_classes)
    tags: tuple[PointTag, ...] = field(default=())
    generator: str = "kl"

    def __post_init__(self):
        arr = np.asarray(self.log_probs, dtype=float)
        if arr.ndim != 3:
            raise UsageError(f"log_probs must be (models, examples, classes), got {arr.shape}")
        norms = logsumexp(arr, axis=2)
        if np.any(np.abs(norms) > _ROW_NORM_TOL):
            m, e = np.unravel_index(int(np.argmax(np.abs(norms))), norms.shape)
            raise UsageError(
                f"prediction (model {m}, example {e}) is not normalized "
                f"(logsumexp = {norms[m, e]!r})"
            )
        tags = self.tags or tuple(PointTag() for _ in range(arr.shape[0]))
        if len(tags) != arr.shape[0]:
            raise UsageError(f"{len(tags)} tags for {arr.shape[0]} models")
        arr.setflags(write=False)
        object.__setattr__(self, "log_probs", arr)
        object.__setattr__(self, "tags", tuple(tags))

    @classmethod
    def from_probs(cls, probs, tags: tuple[PointTag, ...] = (), generator: str = "kl") -> "ModelPool":
        """Build a pool from probabilities, flooring every row."""
        probs = floor_probs(np.asarray(probs, dtype=float))
        return cls(np.log(probs), tags, generator)

    @property
    def n_models(self) -> int:
        return self.log_probs.shape[0]

    @property
    def n_examples(self) -> int:
        return self.log_probs.shape[1]

    @property
    def n_classes(self) -> int:
        return self.log_probs.shape[2]

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def restrict(self, model_indices) -> "ModelPool":
        idx = list(model_indices)
        return ModelPool(self.log_probs[idx], tuple(self.tags[i] for i in idx), self.generator)


def _tag_to_text(value) -> str:
    return "-" if value is None else str(value)


def render_prediction_log(pool: ModelPool) -> str:
    """The exact text write_prediction_log puts on disk."""
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n_models": pool.n_models,
        "n_examples": pool.n_examples,
        "n_classes": pool.n_classes,
        "generator": pool.generator,
        "tags": list(_TAG_COLUMNS),
    }
    columns = ["model", "example", *_TAG_COLUMNS]
    columns += [f"lp{c}" for c in range(pool.n_classes)]
    lines = [json.dumps(header, sort_keys=True), "\t".join(columns)]
    for m in range(pool.n_models):
        tag = pool.tags[m]
        tag_cells = [_tag_to_text(tag.seed), _tag_to_text(tag.train_id), _tag_to_text(tag.group)]
        for e in range(pool.n_examples):
            cells = [str(m), str(e), *tag_cells]
            cells += [repr(float(v)) for v in pool.log_probs[m, e]]
            lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_prediction_log(path, pool: ModelPool) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_prediction_log(pool))


def parse_prediction_log(text: str) -> ModelPool:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty prediction log", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"header is not valid JSON: {exc}", line=1) from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise SchemaError(f"not a {FORMAT_NAME} header: {lines[0][:80]}")
    try:
        n_models = int(header["n_models"])
        n_examples = int(header["n_examples"])
        n_classes = int(header["n_classes"])
        generator = str(header.get("generator", "kl"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"incomplete header: {exc}") from None
    if min(n_models, n_examples, n_classes) < 1:
        raise SchemaError("header counts must be positive")

    expected_rows = n_models * n_examples
    data_lines = [
        (i + 1, ln) for i, ln in enumerate(lines[1:], start=1)
        if ln.strip() and not ln.startswith("model\t")
    ]
    if len(data_lines) != expected_rows:
        raise SchemaError(
            f"expected {expected_rows} rows (= {n_models} models x {n_examples} "
            f"examples), found {len(data_lines)}"
        )

    arr = np.empty((n_models, n_examples, n_classes))
    seen = np.zeros((n_models, n_examples), dtype=bool)
    model_tags: dict[int, tuple[str, str, str]] = {}
    n_cols = 5 + n_classes
    for lineno, ln in data_lines:
        cells = ln.split("\t")
        if len(cells) != n_cols:
            raise ParseError(f"expected {n_cols} columns, found {len(cells)}", line=lineno + 1)
        try:
            m = int(cells[0])
            e = int(cells[1])
            values = [float(v) for v in cells[5:]]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno + 1) from None
        if not (0 <= m < n_models and 0 <= e < n_examples):
            raise ParseError(f"indices (model={m}, example={e}) out of range", line=lineno + 1)
        if seen[m, e]:
            raise SchemaError(f"duplicate row for model {m}, example {e}")
        seen[m, e] = True
        arr[m, e] = values
        tag_cells = (cells[2], cells[3], cells[4])
        if m in model_tags and model_tags[m] != tag_cells:
            raise SchemaError(f"inconsistent tags for model {m}")
        model_tags[m] = tag_cells
        norm = logsumexp(np.asarray(values))
        if abs(norm) > _ROW_NORM_TOL:
            raise SchemaError(
                f"row for model {m}, example {e} is not normalized (logsumexp = {norm!r})"
            )
    if not seen.all():
        m, e = np.unravel_index(int(np.argmin(seen)), seen.shape)
        raise SchemaError(f"missing row for model {m}, example {e}")

    tags = tuple(
        PointTag(
            seed=None if model_tags[m][0] == "-" else int(model_tags[m][0]),
            train_id=None if model_tags[m][1] == "-" else model_tags[m][1],
            group=None if model_tags[m][2] == "-" else model_tags[m][2],
        )
        for m in range(n_models)
    )
    return ModelPool(arr, tags, generator)


def read_prediction_log(path) -> ModelPool:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_prediction_log(fh.read())


def render_labels(labels) -> str:
    labels = np.asarray(labels, dtype=int)
    return "\n".join(str(int(v)) for v in labels) + "\n"


def write_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_labels(labels))


def parse_labels(text: str) -> np.ndarray:
    out = []
    for lineno, ln in enumerate(text.splitlines(), start=1):
        ln = ln.strip()
        if not ln:
            continue
        try:
            out.append(int(ln))
        except ValueError:
            raise ParseError(f"expected a class index, found {ln!r}", line=lineno) from None
    if not out:
        raise ParseError("label file contains no labels", line=1)
    return np.asarray(out, dtype=int)


def read_labels(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_labels(fh.read())
