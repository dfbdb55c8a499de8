"""Binary frames for driving an external per-tile predictor over stdin/stdout.

Request:  b"TILE" | u32 version=1 | u32 tile_index | u32 nx, ny, nz | f32 payload
Response: b"PRED" | u32 tile_index | u32 nx, ny, nz | f32 payload

All integers and floats are little-endian; payloads are x-fastest.
"""
from __future__ import annotations

import struct
import sys

import numpy as np

VERSION = 1
REQUEST_MAGIC = b"TILE"
RESPONSE_MAGIC = b"PRED"
_REQ_HEAD = struct.Struct("<4sII3I")
_RESP_HEAD = struct.Struct("<4sI3I")


class ProtocolError(RuntimeError):
    pass


def _payload(values: np.ndarray) -> bytes:
    return np.asarray(values, dtype="<f4").ravel(order="F").tobytes()


def read_exact(stream, n: int) -> bytes:
    """Read exactly ``n`` bytes; a short read means the peer closed the stream."""
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            got = n - remaining
            raise ProtocolError(f"stream ended after {got} of {n} bytes")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _read_payload(stream, dims):
    n = int(np.prod(dims))
    raw = read_exact(stream, 4 * n)
    return np.frombuffer(raw, dtype="<f4").reshape(dims, order="F").astype(np.float32)


def encode_request(tile_index: int, values: np.ndarray) -> bytes:
    head = _REQ_HEAD.pack(REQUEST_MAGIC, VERSION, tile_index, *values.shape)
    return head + _payload(values)


def encode_response(tile_index: int, values: np.ndarray) -> bytes:
    return _RESP_HEAD.pack(RESPONSE_MAGIC, tile_index, *values.shape) + _payload(values)


def read_request(stream):
    """Return ``(tile_index, values)`` or ``None`` at a clean end of stream."""
    first = stream.read(_REQ_HEAD.size)
    if not first:
        return None
    head = first + (read_exact(stream, _REQ_HEAD.size - len(first)) if len(first) < _REQ_HEAD.size else b"")
    magic, version, index, *dims = _REQ_HEAD.unpack(head)
    if magic != REQUEST_MAGIC:
        raise ProtocolError(f"bad request magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    return index, _read_payload(stream, tuple(dims))


def read_response(stream, expected_index: int, expected_dims) -> np.ndarray:
    head = read_exact(stream, _RESP_HEAD.size)
    magic, index, *dims = _RESP_HEAD.unpack(head)
    if magic != RESPONSE_MAGIC:
        raise ProtocolError(f"tile {expected_index}: bad response magic {magic!r}")
    if index != expected_index:
        raise ProtocolError(f"tile index mismatch: expected {expected_index}, got {index}")
    if tuple(dims) != tuple(expected_dims):
        raise ProtocolError(f"tile {expected_index}: dims mismatch, expected {tuple(expected_dims)}, got {tuple(dims)}")
    return _read_payload(stream, tuple(dims))


def serve(predict, stdin=None, stdout=None):
    """Worker loop: answer every request frame with ``predict(values)``.

    Use this to wrap a model: ``serve(lambda tile: model(tile))``.
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        req = read_request(stdin)
        if req is None:
            return
        index, values = req
        out = np.asarray(predict(values), dtype=np.float32)
        stdout.write(encode_response(index, out))
        stdout.flush()
