"""Binary model file.

Layout (little endian): ``b"RSDF"``, u32 version, u32 tensor count, then per
tensor a u16 name length, the UTF-8 name, a u8 rank, one u32 per dimension
and the float32 data in row-major order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np

from ..errors import FormatError
from .network import PARAM_SHAPES, Network

MAGIC = b"RSDF"
VERSION = 1


def dumps(net) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(net.params))]
    for name, arr in net.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(net, path):
    """Write atomically so that a crash never leaves a partial model behind."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(dumps(net))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated model file while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf) -> Network:
    rd = _Reader(buf)
    if rd.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, not a model file")
    version, count = rd.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}")
    if count != len(PARAM_SHAPES):
        raise FormatError(f"model has {count} tensors, expected {len(PARAM_SHAPES)}")
    params = OrderedDict()
    for expected_name, expected_shape in PARAM_SHAPES.items():
        (nlen,) = rd.unpack("<H", "tensor name length")
        try:
            name = rd.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("tensor name is not UTF-8") from exc
        if name != expected_name:
            raise FormatError(f"unexpected tensor {name!r}, expected {expected_name!r}")
        (rank,) = rd.unpack("<B", f"rank of {name}")
        dims = rd.unpack(f"<{rank}I", f"dims of {name}") if rank else ()
        if tuple(dims) != expected_shape:
            raise FormatError(f"tensor {name} has shape {tuple(dims)}, expected {expected_shape}")
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(rd.take(4 * size, f"data of {name}"), dtype="<f4").astype(np.float32)
        params[name] = data.reshape(dims)
    if rd.pos != len(buf):
        raise FormatError(f"{len(buf) - rd.pos} trailing bytes after the last tensor")
    return Network(params)


def load_model(path) -> Network:
    with open(path, "rb") as fh:
        return loads(fh.read())
