"""RECAPEMB v1 embedding files and the immutable store they load into.

File layout, little-endian throughout:

    magic         8 bytes   ASCII ``RECAPEMB``
    version       u32       1
    flags         u32       bit 0 set when patch matrices are present
    dim           u32       embedding dimension D, >= 1
    patch_count   u32       patches per record P (0 unless bit 0 is set)
    record_count  u64
    per record:   id_len u16, id (UTF-8), global D*f32,
                  patches P*D*f32 row-major (only when bit 0 is set)

Vectors are stored as float32. Normalization happens once, at ingest, in
float64; rows already within 1e-6 of unit norm are kept bit for bit so that
write -> ingest round trips are exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateVectorError,
    DuplicateIdError,
    FormatError,
    IoError,
    NotFoundError,
)

MAGIC = b"RECAPEMB"
VERSION = 1
FLAG_PATCHES = 0x1

_HEADER = struct.Struct("<8sIIIIQ")
HEADER_SIZE = _HEADER.size

# Rows whose float64 norm is already this close to 1 are kept untouched;
# re-normalizing them would perturb low bits and break round trips.
_NORM_SKIP_ATOL = 1e-6

# Served vectors must satisfy | ||v|| - 1 | <= this bound.
UNIT_NORM_ATOL = 1e-5


@dataclass(frozen=True)
class EmbeddingRecord:
    """One image: its id, unit global vector, and optional patch matrix."""

    id: str
    global_vec: np.ndarray
    patches: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return int(self.global_vec.shape[-1])


@dataclass(frozen=True)
class EmbeddingStore:
    """Read-only collection of embedding records with uniform dimensions.

    Safe to share across threads: the backing arrays are marked
    non-writeable and no mutating operations exist.
    """

    dim: int
    patch_count: int | None
    ids: tuple[str, ...]
    globals: np.ndarray
    patches: np.ndarray | None
    id_index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.id_index:
            object.__setattr__(
                self, "id_index", {i: pos for pos, i in enumerate(self.ids)}
            )

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self.id_index

    def __iter__(self):
        for pos in range(len(self.ids)):
            yield self.record_at(pos)

    def record_at(self, pos: int) -> EmbeddingRecord:
        return EmbeddingRecord(
            id=self.ids[pos],
            global_vec=self.globals[pos],
            patches=None if self.patches is None else self.patches[pos],
        )

    def get(self, record_id: str) -> EmbeddingRecord:
        pos = self.id_index.get(record_id)
        if pos is None:
            raise NotFoundError(f"unknown record id: {record_id!r}")
        return self.record_at(pos)


def get(store: EmbeddingStore, record_id: str) -> EmbeddingRecord:
    """Fetch one record by id; raises NotFoundError for unknown ids."""
    return store.get(record_id)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _normalized_rows(rows: np.ndarray, ids, what: str) -> np.ndarray:
    """L2-normalize the trailing axis in float64, rounding back to float32.

    Rows already within 1e-6 of unit norm pass through bit-exact. Zero or
    non-finite rows are rejected because cosine similarity is undefined
    for them.
    """
    rows64 = rows.astype(np.float64)
    norms = np.linalg.norm(rows64, axis=-1)
    bad = ~np.isfinite(norms) | (norms == 0.0)
    if np.any(bad):
        first = np.argwhere(bad)[0]
        offender = ids[first[0]]
        raise DegenerateVectorError(
            f"{what} of record {offender!r} has zero or non-finite norm"
        )
    scaled = (rows64 / norms[..., None]).astype(np.float32)
    keep = np.abs(norms - 1.0) <= _NORM_SKIP_ATOL
    return np.where(keep[..., None], rows, scaled)


def build_store(
    ids,
    globals_mat,
    patches=None,
    normalize: bool = True,
) -> EmbeddingStore:
    """Assemble a store from in-memory arrays.

    ``globals_mat`` is (N, D); ``patches`` is (N, P, D) or None. Vectors
    are cast to float32 and, unless ``normalize`` is false, row-normalized
    the same way ``ingest`` does.
    """
    ids = tuple(str(i) for i in ids)
    g = np.ascontiguousarray(np.asarray(globals_mat, dtype=np.float32))
    if g.ndim != 2:
        raise FormatError(f"global vectors must form a 2-D array, got ndim={g.ndim}")
    if g.shape[0] != len(ids):
        raise FormatError(
            f"{len(ids)} ids but {g.shape[0]} global vectors"
        )
    if g.shape[1] < 1:
        raise FormatError("embedding dimension must be >= 1")
    seen = set()
    for i in ids:
        if not i:
            raise FormatError("record ids must be nonempty")
        if i in seen:
            raise DuplicateIdError(f"duplicate record id: {i!r}")
        seen.add(i)

    p = None
    patch_count = None
    if patches is not None:
        p = np.ascontiguousarray(np.asarray(patches, dtype=np.float32))
        if p.ndim != 3 or p.shape[0] != len(ids) or p.shape[2] != g.shape[1]:
            raise FormatError(
                f"patches must be (N, P, D) = ({len(ids)}, P, {g.shape[1]}), "
                f"got {p.shape}"
            )
        if p.shape[1] < 1:
            raise FormatError("patch count must be >= 1 when patches are present")
        patch_count = int(p.shape[1])

    if normalize:
        g = _normalized_rows(g, ids, "global vector")
        if p is not None:
            p = _normalized_rows(p, ids, "patch row")

    store = EmbeddingStore(
        dim=int(g.shape[1]),
        patch_count=patch_count,
        ids=ids,
        globals=_freeze(g),
        patches=None if p is None else _freeze(p),
    )
    return store


def ingest(path, normalize: bool = True) -> EmbeddingStore:
    """Load a RECAPEMB v1 file into an immutable store.

    With ``normalize`` (the default) every global vector and patch row is
    L2-normalized; zero vectors raise DegenerateVectorError naming the
    record. ``normalize=False`` trusts the file contents as-is and is only
    appropriate for files this package wrote.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, flags, dim, patch_count, record_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if flags & ~FLAG_PATCHES:
        raise FormatError(f"{path}: unknown flag bits 0x{flags:x}")
    has_patches = bool(flags & FLAG_PATCHES)
    if dim < 1:
        raise FormatError(f"{path}: dim must be >= 1, got {dim}")
    if has_patches and patch_count < 1:
        raise FormatError(f"{path}: patch flag set but patch_count={patch_count}")
    if not has_patches and patch_count != 0:
        raise FormatError(
            f"{path}: patch_count={patch_count} without the patch flag"
        )

    gbytes = 4 * dim
    pbytes = 4 * patch_count * dim if has_patches else 0
    # A record is at least 2 (id_len) + 1 (id byte) + payload bytes; reject
    # counts the file cannot possibly hold before allocating anything.
    min_record = 3 + gbytes + pbytes
    if record_count * min_record > len(data) - HEADER_SIZE:
        raise FormatError(
            f"{path}: header declares {record_count} records but only "
            f"{len(data) - HEADER_SIZE} payload bytes follow"
        )
    ids: list[str] = []
    gl = np.empty((record_count, dim), dtype=np.float32)
    pt = (
        np.empty((record_count, patch_count, dim), dtype=np.float32)
        if has_patches
        else None
    )

    off = HEADER_SIZE
    n = len(data)
    for r in range(record_count):
        if off + 2 > n:
            raise FormatError(f"{path}: record {r}: truncated id length")
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if id_len == 0:
            raise FormatError(f"{path}: record {r}: empty id")
        if off + id_len > n:
            raise FormatError(f"{path}: record {r}: truncated id")
        try:
            rid = data[off : off + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: record {r}: id is not UTF-8") from exc
        off += id_len
        if off + gbytes + pbytes > n:
            raise FormatError(
                f"{path}: record {rid!r}: payload shorter than the header-declared "
                f"dimensions"
            )
        gl[r] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
        off += gbytes
        if has_patches:
            pt[r] = np.frombuffer(
                data, dtype="<f4", count=patch_count * dim, offset=off
            ).reshape(patch_count, dim)
            off += pbytes
        ids.append(rid)
    if off != n:
        raise FormatError(
            f"{path}: {n - off} trailing bytes beyond the declared "
            f"{record_count} records"
        )

    return build_store(ids, gl, pt, normalize=normalize)


def write(store: EmbeddingStore, path) -> None:
    """Serialize a store back to RECAPEMB v1, preserving record order."""
    has_patches = store.patches is not None
    flags = FLAG_PATCHES if has_patches else 0
    patch_count = store.patch_count if has_patches else 0
    try:
        with open(path, "wb") as fh:
            fh.write(
                _HEADER.pack(
                    MAGIC, VERSION, flags, store.dim, patch_count, len(store)
                )
            )
            for pos, rid in enumerate(store.ids):
                encoded = rid.encode("utf-8")
                if len(encoded) > 0xFFFF:
                    raise FormatError(f"id too long to serialize: {rid[:32]!r}...")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(store.globals[pos].astype("<f4", copy=False).tobytes())
                if has_patches:
                    fh.write(store.patches[pos].astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise IoError(f"failed to write {path}: {exc}") from exc
