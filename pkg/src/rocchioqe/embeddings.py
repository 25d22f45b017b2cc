"""Utterance embeddings: loading, validation, normalization and writing.

Three on-disk formats are supported:

* ``csv``    header ``id,v0,...,v{d-1}[,speaker]``
* ``jsonl``  one ``{"id": ..., "vector": [...], "speaker": ...}`` object per line
* ``binary`` ``QXEB`` magic, little-endian ``u32`` version/N/d, then per record
  ``u16`` id length, UTF-8 id bytes and ``d`` little-endian float32 values
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

FORMATS = ("csv", "jsonl", "binary")

BINARY_MAGIC = b"QXEB"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_ID_LEN = struct.Struct("<H")


class EmbeddingError(ValueError):
    """Raised for malformed or invalid embedding data."""


@dataclass(frozen=True)
class Embedding:
    id: str
    vector: np.ndarray
    speaker_id: Optional[str] = None


@dataclass(frozen=True)
class Violation:
    kind: str
    locus: str

    def __str__(self) -> str:
        return f"{self.kind} @ {self.locus}"


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Immutable, ordered collection of embeddings sharing one dimension.

    Vectors are held as rows of a read-only float64 matrix; the row index
    is the stable index of each utterance.
    """

    ids: tuple
    matrix: np.ndarray
    speakers: Optional[tuple] = None
    id_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2:
            raise EmbeddingError(f"expected a 2-d matrix, got shape {matrix.shape}")
        if matrix.shape[0] != len(self.ids):
            raise EmbeddingError(
                f"{len(self.ids)} ids for {matrix.shape[0]} vectors")
        matrix.setflags(write=False)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "matrix", matrix)
        if self.speakers is not None:
            if len(self.speakers) != len(self.ids):
                raise EmbeddingError("speaker labels do not align with ids")
            object.__setattr__(self, "speakers", tuple(self.speakers))
        index = {}
        for pos, uid in enumerate(self.ids):
            index.setdefault(uid, pos)
        object.__setattr__(self, "id_index", index)

    @classmethod
    def from_embeddings(cls, embeddings: Iterable[Embedding]) -> "EmbeddingSet":
        embeddings = list(embeddings)
        if not embeddings:
            raise EmbeddingError("no embeddings given")
        dims = {np.asarray(e.vector).shape for e in embeddings}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent vector shapes: {sorted(dims)}")
        speakers = [e.speaker_id for e in embeddings]
        return cls(
            ids=tuple(e.id for e in embeddings),
            matrix=np.stack([np.asarray(e.vector, dtype=np.float64) for e in embeddings]),
            speakers=None if all(s is None for s in speakers) else tuple(speakers),
        )

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __iter__(self):
        for pos in range(len(self)):
            yield self[pos]

    def __getitem__(self, pos: int) -> Embedding:
        speaker = None if self.speakers is None else self.speakers[pos]
        return Embedding(self.ids[pos], self.matrix[pos], speaker)

    def index_of(self, uid: str) -> int:
        try:
            return self.id_index[uid]
        except KeyError:
            raise KeyError(f"unknown utterance id {uid!r}") from None

    def vector(self, uid: str) -> np.ndarray:
        return self.matrix[self.index_of(uid)]

    def speaker_of(self, uid: str) -> Optional[str]:
        if self.speakers is None:
            return None
        return self.speakers[self.index_of(uid)]

    def with_matrix(self, matrix: np.ndarray) -> "EmbeddingSet":
        return EmbeddingSet(self.ids, matrix, self.speakers)


def validate(emb: EmbeddingSet) -> list[Violation]:
    """List every invariant violation in ``emb``; empty when the set is clean."""
    report = []
    seen = set()
    for uid in emb.ids:
        if uid in seen:
            report.append(Violation("duplicate-id", uid))
        seen.add(uid)
    finite = np.isfinite(emb.matrix).all(axis=1)
    for pos in np.flatnonzero(~finite):
        report.append(Violation("non-finite", emb.ids[pos]))
    zero = ~np.any(emb.matrix != 0.0, axis=1)
    for pos in np.flatnonzero(zero):
        report.append(Violation("zero-vector", emb.ids[pos]))
    if emb.dimension < 1:
        report.append(Violation("zero-dimension", "set"))
    if len(emb) < 2:
        report.append(Violation("insufficient-size", f"N={len(emb)}"))
    return report


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    norms = np.linalg.norm(emb.matrix, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise EmbeddingError(f"zero vector cannot be normalized: {emb.ids[bad[0]]!r}")
    unit = emb.matrix / norms[:, None]
    # A second pass absorbs the last-ulp residue so re-normalizing is a no-op.
    unit /= np.linalg.norm(unit, axis=1)[:, None]
    return emb.with_matrix(unit)


# -- reading -----------------------------------------------------------------

class _Builder:
    """Accumulates records and enforces invariants with a row/record locus."""

    def __init__(self, unit: str):
        self.unit = unit
        self.ids: list[str] = []
        self.rows: list[np.ndarray] = []
        self.speakers: list[Optional[str]] = []
        self.seen: dict[str, int] = {}
        self.dim: Optional[int] = None

    def add(self, locus: int, uid: str, values: Sequence[float], speaker=None):
        where = f"{self.unit} {locus}"
        if not uid:
            raise EmbeddingError(f"{where}: empty id")
        if uid in self.seen:
            raise EmbeddingError(
                f"{where}: duplicate id {uid!r} (first at {self.unit} {self.seen[uid]})")
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise EmbeddingError(f"{where}: vector must be a non-empty list of numbers")
        if self.dim is None:
            self.dim = vec.size
        elif vec.size != self.dim:
            raise EmbeddingError(
                f"{where}: dimension mismatch for {uid!r}: {vec.size} != {self.dim}")
        if not np.isfinite(vec).all():
            raise EmbeddingError(f"{where}: non-finite component in {uid!r}")
        if not np.any(vec != 0.0):
            raise EmbeddingError(f"{where}: zero vector for {uid!r}")
        self.seen[uid] = locus
        self.ids.append(uid)
        self.rows.append(vec)
        self.speakers.append(speaker)

    def build(self) -> EmbeddingSet:
        if not self.ids:
            raise EmbeddingError("file contains no embeddings")
        speakers = None if all(s is None for s in self.speakers) else tuple(
            "" if s is None else s for s in self.speakers)
        return EmbeddingSet(tuple(self.ids), np.vstack(self.rows), speakers)


def _read_csv(path: Path) -> EmbeddingSet:
    builder = _Builder("row")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "id":
            raise EmbeddingError("row 1: CSV header must start with 'id'")
        header = [h.strip() for h in header]
        has_speaker = header[-1] == "speaker"
        n_dims = len(header) - 1 - has_speaker
        expected = [f"v{k}" for k in range(n_dims)]
        if n_dims < 1 or header[1:1 + n_dims] != expected:
            raise EmbeddingError("row 1: vector columns must be named v0..v{d-1}")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise EmbeddingError(
                    f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[1:1 + n_dims]]
            except ValueError as exc:
                raise EmbeddingError(f"row {rowno}: {exc}") from None
            speaker = row[-1].strip() if has_speaker else None
            builder.add(rowno, row[0].strip(), values, speaker)
    return builder.build()


def _read_jsonl(path: Path) -> EmbeddingSet:
    builder = _Builder("record")
    with open(path, encoding="utf-8") as fh:
        recno = 0
        for line in fh:
            if not line.strip():
                continue
            recno += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingError(f"record {recno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
                raise EmbeddingError(f"record {recno}: expected an object with 'id' and 'vector'")
            vector = obj["vector"]
            if not isinstance(vector, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in vector):
                raise EmbeddingError(f"record {recno}: 'vector' must be a list of numbers")
            speaker = obj.get("speaker")
            builder.add(recno, str(obj["id"]), vector,
                        None if speaker is None else str(speaker))
    return builder.build()


def _read_binary(path: Path) -> EmbeddingSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingError("binary file truncated in header")
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != BINARY_MAGIC:
        raise EmbeddingError(f"bad magic {magic!r}, expected {BINARY_MAGIC!r}")
    if version != BINARY_VERSION:
        raise EmbeddingError(f"unsupported binary version {version}")
    builder = _Builder("record")
    offset = _HEADER.size
    vec_bytes = 4 * d
    for recno in range(1, n + 1):
        if offset + _ID_LEN.size > len(data):
            raise EmbeddingError(f"record {recno}: truncated")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        end = offset + id_len + vec_bytes
        if end > len(data):
            raise EmbeddingError(f"record {recno}: truncated")
        try:
            uid = data[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise EmbeddingError(f"record {recno}: id is not valid UTF-8") from None
        vec = np.frombuffer(data, dtype="<f4", count=d, offset=offset + id_len)
        builder.add(recno, uid, vec.astype(np.float64))
        offset = end
    if offset != len(data):
        raise EmbeddingError(f"{len(data) - offset} trailing bytes after record {n}")
    return builder.build()


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".json"):
        return "jsonl"
    if suffix in (".bin", ".qxeb"):
        return "binary"
    raise EmbeddingError(f"cannot infer embedding format from {str(path)!r}")


def load_embeddings(path, format: Optional[str] = None) -> EmbeddingSet:
    fmt = format or infer_format(path)
    readers = {"csv": _read_csv, "jsonl": _read_jsonl, "binary": _read_binary}
    if fmt not in readers:
        raise EmbeddingError(f"unknown format {fmt!r}; choose from {FORMATS}")
    return readers[fmt](Path(path))


# -- writing -----------------------------------------------------------------

def _write_csv(emb: EmbeddingSet, path: Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["id"] + [f"v{k}" for k in range(emb.dimension)]
        if emb.speakers is not None:
            header.append("speaker")
        writer.writerow(header)
        for pos, uid in enumerate(emb.ids):
            row = [uid] + [repr(float(v)) for v in emb.matrix[pos]]
            if emb.speakers is not None:
                row.append(emb.speakers[pos] or "")
            writer.writerow(row)


def _write_jsonl(emb: EmbeddingSet, path: Path):
    with open(path, "w", encoding="utf-8") as fh:
        for pos, uid in enumerate(emb.ids):
            obj = {"id": uid, "vector": emb.matrix[pos].tolist()}
            if emb.speakers is not None and emb.speakers[pos]:
                obj["speaker"] = emb.speakers[pos]
            fh.write(json.dumps(obj) + "\n")


def _write_binary(emb: EmbeddingSet, path: Path):
    # float32 on disk; float64 values not representable in float32 are rounded.
    chunks = [_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, len(emb), emb.dimension)]
    vectors = emb.matrix.astype("<f4")
    for pos, uid in enumerate(emb.ids):
        raw = uid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingError(f"id too long for binary format: {uid[:40]!r}...")
        chunks.append(_ID_LEN.pack(len(raw)))
        chunks.append(raw)
        chunks.append(vectors[pos].tobytes())
    Path(path).write_bytes(b"".join(chunks))


def save_embeddings(emb: EmbeddingSet, path, format: Optional[str] = None) -> None:
    fmt = format or infer_format(path)
    writers = {"csv": _write_csv, "jsonl": _write_jsonl, "binary": _write_binary}
    if fmt not in writers:
        raise EmbeddingError(f"unknown format {fmt!r}; choose from {FORMATS}")
    writers[fmt](emb, Path(path))

