"""Pure-Python decoder of the tensor record value format."""

import json
import struct

import numpy as np

_DTYPES = {
    "U8": np.dtype("uint8"),
    "U16": np.dtype("<u2"),
    "I16": np.dtype("<i2"),
    "I32": np.dtype("<i4"),
    "F32": np.dtype("<f4"),
    "F64": np.dtype("<f8"),
}

HEADER_CAP = 1 << 20


class FormatError(ValueError):
    pass


def decode(buf, header_cap=HEADER_CAP):
    """Returns ({name: ndarray}, metadata) for one encoded record."""
    buf = memoryview(buf).cast("B")
    if len(buf) < 8:
        raise FormatError("record shorter than its length prefix")
    (n,) = struct.unpack_from("<Q", buf, 0)
    if n > header_cap:
        raise FormatError(f"header of {n} bytes exceeds the cap")
    if 8 + n > len(buf):
        raise FormatError("header runs past the end of the record")
    try:
        header = json.loads(bytes(buf[8 : 8 + n]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(str(e)) from None
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object")
    payload = buf[8 + n :]
    metadata = header.pop("__metadata__", {})

    arrays = {}
    spans = []
    for name in sorted(header):
        info = header[name]
        if set(info) != {"dtype", "shape", "data_offsets"}:
            raise FormatError(f"tensor {name!r}: needs exactly dtype, shape, data_offsets")
        dtype = _DTYPES.get(info["dtype"])
        if dtype is None:
            raise FormatError(f"tensor {name!r}: unsupported dtype {info['dtype']!r}")
        shape = tuple(int(d) for d in info["shape"])
        begin, end = (int(x) for x in info["data_offsets"])
        if end < begin or (end - begin) != int(np.prod(shape, dtype=np.uint64)) * dtype.itemsize:
            raise FormatError(f"tensor {name!r}: byte length does not match dtype and shape")
        if end > len(payload):
            raise FormatError(f"tensor {name!r} runs past the end of the payload")
        spans.append((begin, end, name))
        arrays[name] = np.frombuffer(payload[begin:end], dtype=dtype).reshape(shape).copy()

    cursor = 0
    for begin, end, name in sorted(spans):
        if begin != cursor:
            raise FormatError(f"tensor {name!r} is not contiguous with the previous tensor")
        cursor = end
    if cursor != len(payload):
        raise FormatError("payload length does not match the header")
    return arrays, dict(metadata)
