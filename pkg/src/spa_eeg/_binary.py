"""JSON-header + little-endian payload container used by every on-disk format.

A file is one UTF-8 JSON object on the first line, a newline, then a raw
little-endian array whose length the header determines.
"""

import json

import numpy as np

from .errors import ParseError


def write_blob(path, header, payload, dtype):
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    arr = np.ascontiguousarray(payload, dtype=np.dtype(dtype).newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        fh.write(arr.tobytes(order="C"))


def read_blob(path, dtype, count_from_header):
    """Return ``(header, payload)``; ``count_from_header(header)`` gives the
    expected number of payload elements."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ParseError("missing header terminator", offset=len(raw))
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed header: {exc}", offset=0) from None
    if not isinstance(header, dict):
        raise ParseError("header is not an object", offset=0)
    dt = np.dtype(dtype).newbyteorder("<")
    try:
        count = int(count_from_header(header))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"header missing or invalid field: {exc}", offset=0) from None
    body = raw[nl + 1:]
    expected = count * dt.itemsize
    if len(body) != expected:
        raise ParseError(
            f"payload is {len(body)} bytes but header implies {expected}",
            offset=nl + 1 + min(len(body), expected),
        )
    return header, np.frombuffer(body, dtype=dt).astype(dt.newbyteorder("="))
