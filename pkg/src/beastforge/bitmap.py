"""Minimal RGBA8 PNG encode/decode (stdlib only, deterministic bytes).

Covers exactly what remote image payloads need: 8-bit RGBA, no interlacing.
The encoder always emits filter 0 rows; the decoder handles all five
standard filters so externally produced images load too.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError

__all__ = ["encode_png", "decode_png"]

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    body = tag + payload
    return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))


def encode_png(image: np.ndarray) -> bytes:
    """RGBA uint8 (H, W, 4) array -> PNG bytes."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 4:
        raise ValueError("expected an (H, W, 4) RGBA array")
    h, w = img.shape[:2]
    raw = b"".join(b"\x00" + img[row].tobytes() for row in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)
    return (_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw, 6)) + _chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def decode_png(data: bytes) -> np.ndarray:
    if data[:8] != _SIGNATURE:
        raise FormatError("not a PNG")
    pos = 8
    width = height = None
    idat = b""
    while pos + 8 <= len(data):
        (length,) = struct.unpack_from(">I", data, pos)
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or color != 6 or interlace != 0:
                raise FormatError("only 8-bit non-interlaced RGBA is supported")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            break
    if width is None:
        raise FormatError("PNG missing IHDR")
    raw = zlib.decompress(idat)
    stride = width * 4
    if len(raw) != height * (stride + 1):
        raise FormatError("PNG payload size mismatch")
    out = np.zeros((height, stride), dtype=np.uint8)
    prior = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for row in range(height):
        filt = raw[pos]
        line = bytearray(raw[pos + 1 : pos + 1 + stride])
        pos += 1 + stride
        if filt == 1:
            for i in range(4, stride):
                line[i] = (line[i] + line[i - 4]) & 0xFF
        elif filt == 2:
            for i in range(stride):
                line[i] = (line[i] + prior[i]) & 0xFF
        elif filt == 3:
            for i in range(stride):
                left = line[i - 4] if i >= 4 else 0
                line[i] = (line[i] + ((left + int(prior[i])) >> 1)) & 0xFF
        elif filt == 4:
            for i in range(stride):
                left = line[i - 4] if i >= 4 else 0
                up_left = int(prior[i - 4]) if i >= 4 else 0
                line[i] = (line[i] + _paeth(left, int(prior[i]), up_left)) & 0xFF
        elif filt != 0:
            raise FormatError(f"unknown PNG filter {filt}")
        out[row] = np.frombuffer(bytes(line), dtype=np.uint8)
        prior = out[row]
    return out.reshape(height, width, 4)
