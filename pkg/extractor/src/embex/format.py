"""RECAPEMB v1 writer (and a reader for verification).

Layout, little-endian: magic ``RECAPEMB`` (8 bytes), version u32 = 1,
flags u32 (bit 0 = patches present), dim u32, patch_count u32,
record_count u64; then per record id_len u16, UTF-8 id, D float32 globals
and, with the patch flag, P*D float32 patches row-major.

Vectors are written exactly as produced; the consuming side owns
normalization.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"RECAPEMB"
VERSION = 1
FLAG_PATCHES = 0x1

_HEADER = struct.Struct("<8sIIIIQ")


def write_records(path, records, dim: int, patch_count: int | None) -> int:
    """Stream (id, global, patches) triples to a RECAPEMB v1 file.

    ``patch_count`` of None writes a global-only file. Returns the number
    of records written.
    """
    has_patches = patch_count is not None
    flags = FLAG_PATCHES if has_patches else 0
    count = 0
    body = []
    for rid, global_vec, patches in records:
        g = np.asarray(global_vec, dtype="<f4")
        if g.shape != (dim,):
            raise ValueError(f"{rid}: global vector shape {g.shape} != ({dim},)")
        encoded = rid.encode("utf-8")
        chunk = [struct.pack("<H", len(encoded)), encoded, g.tobytes()]
        if has_patches:
            p = np.asarray(patches, dtype="<f4")
            if p.shape != (patch_count, dim):
                raise ValueError(
                    f"{rid}: patch shape {p.shape} != ({patch_count}, {dim})"
                )
            chunk.append(p.tobytes())
        body.append(b"".join(chunk))
        count += 1
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, VERSION, flags, dim,
                patch_count if has_patches else 0, count,
            )
        )
        for chunk in body:
            fh.write(chunk)
    return count


def read_records(path) -> list[tuple[str, np.ndarray, np.ndarray | None]]:
    """Parse a file back into (id, global, patches) triples for verification."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, flags, dim, patch_count, record_count = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a RECAPEMB v1 file")
    has_patches = bool(flags & FLAG_PATCHES)
    records = []
    off = _HEADER.size
    for _ in range(record_count):
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        rid = data[off : off + id_len].decode("utf-8")
        off += id_len
        g = np.frombuffer(data[off : off + 4 * dim], dtype="<f4")
        off += 4 * dim
        p = None
        if has_patches:
            n = 4 * patch_count * dim
            p = np.frombuffer(data[off : off + n], dtype="<f4").reshape(
                patch_count, dim
            )
            off += n
        records.append((rid, g, p))
    return records


def read_ids(path) -> list[str]:
    """Record ids in file order, for verification after an export."""
    return [rid for rid, _, _ in read_records(path)]
