"""Named-tensor checkpoint files.

Layout: a little-endian header (magic, format version, integer
architecture metadata as key/value pairs, then a table of named entries
with shape and byte offset), followed by one contiguous payload of raw
little-endian float32 values. Entry names are dotted paths such as
``encoder.char_emb`` or ``crf.transitions``.

Files are written atomically (temp file + rename) so an interrupted run
never leaves a truncated checkpoint behind.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError

_MAGIC = b"LMNR"
FORMAT_VERSION = 1


class Checkpoint:
    """Immutable-ish container mapping dotted names to float32 arrays."""

    def __init__(self, entries: dict, meta: dict | None = None):
        self.entries = {name: np.asarray(arr, dtype=np.float32) for name, arr in entries.items()}
        self.meta = {str(k): int(v) for k, v in (meta or {}).items()}

    def names(self):
        return sorted(self.entries)

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise CheckpointError(f"checkpoint has no entry {name!r}") from None

    def namespace(self, prefix: str) -> dict:
        """All entries under `prefix.`, keyed by their full names."""
        dotted = prefix + "."
        return {n: a for n, a in self.entries.items() if n.startswith(dotted)}

    def save(self, path: str) -> None:
        header = bytearray()
        header += _MAGIC
        header += struct.pack("<I", FORMAT_VERSION)
        header += struct.pack("<I", len(self.meta))
        for key in sorted(self.meta):
            kb = key.encode("utf-8")
            header += struct.pack("<I", len(kb)) + kb + struct.pack("<q", self.meta[key])
        names = self.names()
        header += struct.pack("<I", len(names))
        offset = 0
        for name in names:
            arr = self.entries[name]
            nb = name.encode("utf-8")
            header += struct.pack("<I", len(nb)) + nb
            header += struct.pack("<I", arr.ndim)
            for dim in arr.shape:
                header += struct.pack("<Q", dim)
            header += struct.pack("<Q", offset)
            offset += arr.size * 4

        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(bytes(header))
                for name in names:
                    fh.write(self.entries[name].astype("<f4").tobytes())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @staticmethod
    def load(path: str) -> "Checkpoint":
        with open(path, "rb") as fh:
            blob = fh.read()
        view = memoryview(blob)
        pos = 0

        def take(fmt):
            nonlocal pos
            size = struct.calcsize(fmt)
            if pos + size > len(blob):
                raise CheckpointError(f"truncated checkpoint {path!r}")
            vals = struct.unpack_from(fmt, view, pos)
            pos += size
            return vals if len(vals) > 1 else vals[0]

        def take_bytes(n):
            nonlocal pos
            if pos + n > len(blob):
                raise CheckpointError(f"truncated checkpoint {path!r}")
            out = bytes(view[pos : pos + n])
            pos += n
            return out

        if take_bytes(4) != _MAGIC:
            raise CheckpointError(f"{path!r} is not a checkpoint file")
        version = take("<I")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {version}")
        meta = {}
        for _ in range(take("<I")):
            key = take_bytes(take("<I")).decode("utf-8")
            meta[key] = take("<q")
        table = []
        for _ in range(take("<I")):
            name = take_bytes(take("<I")).decode("utf-8")
            ndim = take("<I")
            shape = tuple(take("<Q") for _ in range(ndim))
            offset = take("<Q")
            table.append((name, shape, offset))
        payload_start = pos
        entries = {}
        for name, shape, offset in table:
            count = int(np.prod(shape)) if shape else 1
            start = payload_start + offset
            end = start + count * 4
            if end > len(blob):
                raise CheckpointError(f"entry {name!r} runs past end of {path!r}")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
            entries[name] = arr.reshape(shape).copy()
        return Checkpoint(entries, meta)


def require_matching_meta(ckpt: Checkpoint, expected: dict, keys) -> None:
    """Raise CheckpointError listing every metadata key that disagrees."""
    mismatched = []
    for key in keys:
        want = int(expected[key])
        got = ckpt.meta.get(key)
        if got != want:
            mismatched.append(f"{key}: checkpoint={got} expected={want}")
    if mismatched:
        raise CheckpointError("architecture mismatch: " + "; ".join(mismatched))
