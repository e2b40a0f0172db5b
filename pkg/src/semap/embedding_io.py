"""File formats and loaders/writers for the artifact's public data contract.

Four formats, all little-endian, all bit-exact under write(load(f)) == f:

* label file    - UTF-8 text, one label per line, ``\\n`` terminated.
* embedding file- magic ``SEMAPEMB``, u32 rows, u32 dim, rows*dim f32.
* logit file    - magic ``SEMAPLGT``, u32 N, u32 n, u8 label flag,
  N*n f32 scores, then (flag=1) N u32 labels. The same container is reused
  for image datasets by storing flattened side*side pixel rows.
* mapping file  - magic line ``SEMAPMAP``, then ``key: value`` lines
  (``strategy``, ``m``, ``n`` and, when set, ``epsilon``, ``gamma``, ``cap``,
  ``k``), then one ``i: s1 s2 ...`` line per downstream class in ascending
  order.

Labels are matched to embedding rows by position; order is the contract.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError, ShapeError
from .mapping import MappingTable

EMBEDDING_MAGIC = b"SEMAPEMB"
LOGIT_MAGIC = b"SEMAPLGT"
MAPPING_MAGIC = "SEMAPMAP"

_HYPERPARAM_KEYS = ("epsilon", "gamma", "cap", "k")


@dataclass
class LabelSet:
    """Ordered natural-language class names; index of a name is its class index."""

    names: list[str]
    role: str = "downstream"

    def __post_init__(self):
        if self.role not in ("pretrained", "downstream"):
            raise InvalidInputError(f"unknown label role {self.role!r}")
        if not self.names:
            raise InvalidInputError("label set must be non-empty")
        seen = {}
        for i, name in enumerate(self.names):
            if not name:
                raise InvalidInputError(f"empty label at index {i}")
            if name in seen:
                raise InvalidInputError(
                    f"duplicate label {name!r} at indices {seen[name]} and {i}"
                )
            seen[name] = i

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class EmbeddingMatrix:
    """One real vector per label, float32 storage, used for semantic similarity."""

    vectors: np.ndarray
    labels: LabelSet | None = None

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.size == 0:
            raise InvalidInputError("embedding matrix must be 2-D and non-empty")
        if not np.all(np.isfinite(self.vectors)):
            raise InvalidInputError("embedding matrix contains non-finite values")
        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            row = int(np.argmax(norms == 0.0))
            raise InvalidInputError(f"embedding row {row} has zero norm")
        if self.labels is not None and len(self.labels) != self.vectors.shape[0]:
            raise ShapeError(
                f"{len(self.labels)} labels vs {self.vectors.shape[0]} embedding rows"
            )

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class LogitBatch:
    """N score rows of width n with optional downstream labels."""

    scores: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.scores = np.ascontiguousarray(self.scores, dtype=np.float32)
        if self.scores.ndim != 2 or self.scores.size == 0:
            raise InvalidInputError("logit batch must be 2-D and non-empty")
        if not np.all(np.isfinite(self.scores)):
            raise InvalidInputError("logit batch contains non-finite values")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
            if self.labels.shape != (self.scores.shape[0],):
                raise ShapeError(
                    f"{self.labels.shape} labels vs {self.scores.shape[0]} rows"
                )

    @property
    def count(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


# ---------------------------------------------------------------------------
# label files

def load_labels(path: str | Path, role: str = "downstream") -> LabelSet:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: invalid UTF-8 ({exc})") from exc
    if not text.endswith("\n"):
        raise FormatError(f"{path}: label file must be newline-terminated")
    names: list[str] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.split("\n")[:-1], start=1):
        name = raw.rstrip()
        if not name:
            raise FormatError(f"{path}: blank label at line {lineno}")
        if name in seen:
            raise FormatError(
                f"{path}: duplicate label {name!r} at line {lineno} "
                f"(first at line {seen[name]})"
            )
        seen[name] = lineno
        names.append(name)
    if not names:
        raise FormatError(f"{path}: no labels")
    return LabelSet(names, role)


def write_labels(path: str | Path, labels: LabelSet) -> None:
    Path(path).write_bytes(("\n".join(labels.names) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# binary helpers

def _read_exact(path: Path, magic: bytes, header_fmt: str) -> tuple[tuple, bytes, int]:
    """Parse magic + header; return (header fields, payload bytes, payload offset)."""
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    blob = path.read_bytes()
    if blob[: len(magic)] != magic:
        raise FormatError(f"{path}: bad magic at byte 0, expected {magic!r}")
    header_size = len(magic) + struct.calcsize(header_fmt)
    if len(blob) < header_size:
        raise FormatError(f"{path}: truncated header at byte {len(blob)}")
    fields = struct.unpack_from(header_fmt, blob, len(magic))
    return fields, blob[header_size:], header_size


def _check_payload(path: Path, payload: bytes, expected: int, offset: int) -> None:
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload size mismatch at byte {offset}: "
            f"expected {expected} bytes, found {len(payload)}"
        )


def _check_finite(path: Path, values: np.ndarray, offset: int) -> None:
    finite = np.isfinite(values.reshape(-1))
    if not finite.all():
        idx = int(np.argmin(finite))
        raise FormatError(f"{path}: non-finite entry at byte {offset + 4 * idx}")


# ---------------------------------------------------------------------------
# embedding files

def load_embeddings(path: str | Path, labels: LabelSet | None = None) -> EmbeddingMatrix:
    path = Path(path)
    (rows, dim), payload, offset = _read_exact(path, EMBEDDING_MAGIC, "<II")
    if rows < 1 or dim < 1:
        raise FormatError(f"{path}: header declares empty matrix {rows}x{dim}")
    _check_payload(path, payload, rows * dim * 4, offset)
    vectors = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    _check_finite(path, vectors, offset)
    return EmbeddingMatrix(vectors, labels)


def write_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    blob = EMBEDDING_MAGIC + struct.pack("<II", matrix.rows, matrix.dim)
    blob += matrix.vectors.astype("<f4").tobytes()
    Path(path).write_bytes(blob)


# ---------------------------------------------------------------------------
# logit files

def load_logits(path: str | Path) -> LogitBatch:
    path = Path(path)
    (count, width, flag), payload, offset = _read_exact(path, LOGIT_MAGIC, "<IIB")
    if count < 1 or width < 1:
        raise FormatError(f"{path}: header declares empty batch {count}x{width}")
    if flag not in (0, 1):
        raise FormatError(f"{path}: label flag must be 0 or 1, got {flag}")
    expected = count * width * 4 + (count * 4 if flag else 0)
    _check_payload(path, payload, expected, offset)
    scores = np.frombuffer(payload, dtype="<f4", count=count * width).reshape(count, width)
    _check_finite(path, scores, offset)
    labels = None
    if flag:
        labels = np.frombuffer(payload, dtype="<u4", offset=count * width * 4)
    return LogitBatch(scores, labels)


def write_logits(path: str | Path, batch: LogitBatch) -> None:
    flag = 0 if batch.labels is None else 1
    blob = LOGIT_MAGIC + struct.pack("<IIB", batch.count, batch.width, flag)
    blob += batch.scores.astype("<f4").tobytes()
    if flag:
        blob += batch.labels.astype("<u4").tobytes()
    Path(path).write_bytes(blob)


# ---------------------------------------------------------------------------
# mapping files

def _format_number(value: float | int) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_mapping(path: str | Path, table: MappingTable) -> None:
    lines = [MAPPING_MAGIC, f"strategy: {table.strategy}", f"m: {table.m}", f"n: {table.n}"]
    for key in _HYPERPARAM_KEYS:
        if key in table.hyperparams:
            lines.append(f"{key}: {_format_number(table.hyperparams[key])}")
    for i, idxs in enumerate(table.assignments):
        lines.append(f"{i}: " + " ".join(str(s) for s in idxs))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def load_mapping(path: str | Path) -> MappingTable:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: invalid UTF-8 ({exc})") from exc
    lines = text.split("\n")
    if not lines or lines[0] != MAPPING_MAGIC:
        raise FormatError(f"{path}: bad magic line, expected {MAPPING_MAGIC!r}")
    meta: dict[str, str] = {}
    classes: dict[int, list[int]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "" and lineno == len(lines):
            continue  # trailing newline
        if ":" not in line:
            raise FormatError(f"{path}: malformed line {lineno}: {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key.isdigit():
            idx = int(key)
            if idx in classes:
                raise FormatError(f"{path}: duplicate class {idx} at line {lineno}")
            if not value:
                raise FormatError(f"{path}: empty entry for class {idx} at line {lineno}")
            try:
                classes[idx] = [int(tok) for tok in value.split()]
            except ValueError as exc:
                raise FormatError(f"{path}: bad index at line {lineno}") from exc
        elif key in ("strategy", "m", "n") or key in _HYPERPARAM_KEYS:
            if key in meta:
                raise FormatError(f"{path}: duplicate key {key!r} at line {lineno}")
            meta[key] = value
        else:
            raise FormatError(f"{path}: unknown key {key!r} at line {lineno}")
    for required in ("strategy", "m", "n"):
        if required not in meta:
            raise FormatError(f"{path}: missing required key {required!r}")
    try:
        m = int(meta["m"])
        n = int(meta["n"])
    except ValueError as exc:
        raise FormatError(f"{path}: m and n must be integers") from exc
    hyper: dict[str, float | int] = {}
    for key in _HYPERPARAM_KEYS:
        if key in meta:
            try:
                hyper[key] = int(meta[key]) if key in ("cap", "k") else float(meta[key])
            except ValueError as exc:
                raise FormatError(f"{path}: bad value for {key!r}") from exc
    if sorted(classes) != list(range(m)):
        raise FormatError(
            f"{path}: expected one entry per class in [0, {m}), got {sorted(classes)}"
        )
    assignments = [classes[i] for i in range(m)]
    try:
        return MappingTable(m, n, assignments, meta["strategy"], hyper)
    except InvalidInputError as exc:
        raise FormatError(f"{path}: {exc}") from exc
