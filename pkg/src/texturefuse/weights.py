"""Self-describing binary container for network weights and cached tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"TFWC"
    version u32      currently 1
    count   u32      number of entries
    entry:
        kind    u8 length + that many ascii bytes (layer kind or "tensor")
        nshapes u32
        shape   u32 rank + rank * u32 extents      (nshapes times)
        data    float32 little-endian values for each shape, row-major,
                concatenated in shape order

Saving, loading and saving again yields byte-identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TFWC"
VERSION = 1


def save_container(path, entries) -> None:
    """entries: iterable of (kind, [arrays])."""
    entries = list(entries)
    blob = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for kind, arrays in entries:
        tag = kind.encode("ascii")
        blob.append(struct.pack("<B", len(tag)))
        blob.append(tag)
        blob.append(struct.pack("<I", len(arrays)))
        for a in arrays:
            a = np.asarray(a)
            blob.append(struct.pack("<I", a.ndim))
            blob.append(struct.pack(f"<{a.ndim}I", *a.shape))
        for a in arrays:
            blob.append(np.ascontiguousarray(a, "<f4").tobytes())
    Path(path).write_bytes(b"".join(blob))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n, what):
        if self.off + n > len(self.data):
            raise ValueError(f"{self.path}: truncated container while reading {what}")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_container(path):
    """Returns list of (kind, [float32 arrays]); validates the full file
    before returning anything.
    """
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4, "magic") != MAGIC:
        raise ValueError(f"{path}: not a weight container (bad magic)")
    version = reader.u32("version")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    count = reader.u32("entry count")
    entries = []
    for e in range(count):
        klen = reader.take(1, f"entry {e} kind")[0]
        kind = reader.take(klen, f"entry {e} kind").decode("ascii")
        nshapes = reader.u32(f"entry {e} ({kind}) shape count")
        shapes = []
        for s in range(nshapes):
            rank = reader.u32(f"entry {e} ({kind}) shape {s} rank")
            if rank > 8:
                raise ValueError(f"{path}: entry {e} ({kind}) has implausible rank {rank}")
            dims = struct.unpack(f"<{rank}I", reader.take(4 * rank, f"entry {e} ({kind}) shape {s}"))
            if any(d < 1 for d in dims):
                raise ValueError(f"{path}: entry {e} ({kind}) has non-positive extent in {dims}")
            shapes.append(dims)
        arrays = []
        for dims in shapes:
            n = int(np.prod(dims, dtype=np.int64))
            raw = reader.take(4 * n, f"entry {e} ({kind}) values")
            arrays.append(np.frombuffer(raw, "<f4").reshape(dims).copy())
        entries.append((kind, arrays))
    if reader.off != len(reader.data):
        raise ValueError(f"{path}: {len(reader.data) - reader.off} trailing bytes after last entry")
    return entries


def save_network(net, path) -> None:
    """One entry per layer; conv entries carry [weights, bias]."""
    entries = []
    for i, l in enumerate(net.spec.layers):
        if l.kind == "conv":
            w, b = net.params[i]
            entries.append(("conv", [w, b]))
        else:
            entries.append((l.kind, []))
    save_container(path, entries)


def load_network_params(spec, path, dtype=np.float32):
    """Read a container written by save_network back into a params dict for
    ``spec``, validating kinds and shapes entry by entry.
    """
    entries = load_container(path)
    if len(entries) != len(spec.layers):
        raise ValueError(
            f"{path}: {len(entries)} entries but network {spec.name!r} has {len(spec.layers)} layers"
        )
    expected = dict(spec.conv_shapes())
    params = {}
    for i, (l, (kind, arrays)) in enumerate(zip(spec.layers, entries)):
        if kind != l.kind:
            raise ValueError(f"{path}: layer {i} is {kind!r} in file but {l.kind!r} in network {spec.name!r}")
        if l.kind != "conv":
            continue
        if len(arrays) != 2:
            raise ValueError(f"{path}: conv layer {i} needs weights and bias, found {len(arrays)} arrays")
        w, b = arrays
        if w.shape != expected[i] or b.shape != (expected[i][0],):
            raise ValueError(
                f"{path}: conv layer {i} shape mismatch: file {w.shape}/{b.shape}, "
                f"network wants {expected[i]}/{(expected[i][0],)}"
            )
        params[i] = [w.astype(dtype), b.astype(dtype)]
    return params


def save_tensor(path, array, kind="tensor") -> None:
    save_container(path, [(kind, [array])])


def load_tensor(path) -> np.ndarray:
    entries = load_container(path)
    if len(entries) != 1 or len(entries[0][1]) != 1:
        raise ValueError(f"{path}: expected a single-tensor container")
    return entries[0][1][0]
