"""Minimal PNG and binary PNM codecs.

Only what the pipeline needs: 8-bit non-interlaced PNG (gray, gray+alpha,
RGB, RGBA, palette) and binary PPM/PGM with maxval <= 255. Decoders return a
``(height, width, channels)`` uint8 array with the channels as stored.
"""

import struct
import zlib

import numpy as np

from ..errors import CorruptStreamError, UnsupportedFormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# colour type -> samples per pixel
_PNG_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


def sniff(data):
    """Return ``"png"``, ``"pnm"`` or ``None`` from the leading bytes."""
    if data.startswith(PNG_SIGNATURE):
        return "png"
    if len(data) >= 2 and data[:1] == b"P" and data[1:2] in (b"5", b"6"):
        return "pnm"
    return None


def _paeth(a, b, c):
    p = a + b - c
    pa = abs(p - a)
    pb = abs(p - b)
    pc = abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw, height, stride, bpp):
    if len(raw) != height * (stride + 1):
        raise CorruptStreamError(
            f"decompressed size {len(raw)} does not match {height} rows of {stride} bytes"
        )
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    view = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride + 1)
    for y in range(height):
        ftype = int(view[y, 0])
        line = view[y, 1:]
        if ftype == 0:
            cur = line.copy()
        elif ftype == 1:
            # running sum along each channel lane, mod 256
            pad = (-stride) % bpp
            lanes = np.concatenate([line, np.zeros(pad, np.uint8)]).reshape(-1, bpp)
            cur = np.cumsum(lanes, axis=0, dtype=np.uint8).reshape(-1)[:stride]
        elif ftype == 2:
            cur = line + prev
        elif ftype in (3, 4):
            cur_l = [0] * stride
            line_l = line.tolist()
            prev_l = prev.tolist()
            for x in range(stride):
                a = cur_l[x - bpp] if x >= bpp else 0
                b = prev_l[x]
                if ftype == 3:
                    pred = (a + b) >> 1
                else:
                    c = prev_l[x - bpp] if x >= bpp else 0
                    pred = _paeth(a, b, c)
                cur_l[x] = (line_l[x] + pred) & 0xFF
            cur = np.array(cur_l, dtype=np.uint8)
        else:
            raise CorruptStreamError(f"unknown filter type {ftype} on row {y}")
        out[y] = cur
        prev = cur
    return out


def decode_png(data):
    """Decode PNG bytes to a ``(H, W, C)`` uint8 array.

    Palette images are expanded to RGB (or RGBA when a tRNS chunk exists).
    """
    if not data.startswith(PNG_SIGNATURE):
        raise UnsupportedFormatError("missing PNG signature")
    pos = len(PNG_SIGNATURE)
    header = None
    palette = None
    trns = None
    idat = []
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise CorruptStreamError("truncated chunk header")
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        body_end = pos + 8 + length
        if body_end + 4 > len(data):
            raise CorruptStreamError(f"truncated {ctype!r} chunk")
        body = data[pos + 8:body_end]
        (crc,) = struct.unpack(">I", data[body_end:body_end + 4])
        if zlib.crc32(body, zlib.crc32(ctype)) != crc:
            raise CorruptStreamError(f"CRC mismatch in {ctype!r} chunk")
        pos = body_end + 4
        if ctype == b"IHDR":
            if length != 13:
                raise CorruptStreamError("bad IHDR length")
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"PLTE":
            palette = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3)
        elif ctype == b"tRNS":
            trns = body
        elif ctype == b"IDAT":
            idat.append(body)
        elif ctype == b"IEND":
            seen_end = True
            break
        elif not (ctype[0] & 0x20):
            raise UnsupportedFormatError(f"unknown critical chunk {ctype!r}")
    if header is None:
        raise CorruptStreamError("missing IHDR")
    if not seen_end:
        raise CorruptStreamError("stream ended before IEND")
    width, height, depth, color, comp, filt, interlace = header
    if width == 0 or height == 0:
        raise CorruptStreamError("zero image dimension")
    if depth != 8:
        raise UnsupportedFormatError(f"bit depth {depth} (only 8 supported)")
    if color not in _PNG_CHANNELS:
        raise CorruptStreamError(f"invalid colour type {color}")
    if comp != 0 or filt != 0:
        raise CorruptStreamError("invalid compression/filter method")
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise CorruptStreamError(f"zlib: {exc}") from exc
    channels = _PNG_CHANNELS[color]
    pixels = _unfilter(raw, height, width * channels, channels)
    pixels = pixels.reshape(height, width, channels)
    if color == 3:
        if palette is None:
            raise CorruptStreamError("palette image without PLTE")
        idx = pixels[..., 0]
        if idx.max() >= len(palette):
            raise CorruptStreamError("palette index out of range")
        rgb = palette[idx]
        if trns is not None:
            alpha = np.full(len(palette), 255, dtype=np.uint8)
            t = np.frombuffer(trns, dtype=np.uint8)[: len(palette)]
            alpha[: len(t)] = t
            rgb = np.concatenate([rgb, alpha[idx][..., None]], axis=2)
        pixels = rgb
    return pixels


def _chunk(ctype, body):
    return (
        struct.pack(">I", len(body))
        + ctype
        + body
        + struct.pack(">I", zlib.crc32(body, zlib.crc32(ctype)))
    )


def encode_png(pixels):
    """Encode a ``(H, W)`` or ``(H, W, C)`` uint8 array (C in 1..4) as PNG.

    Rows use filter type 0 and zlib level 9, so output bytes depend only on
    the pixels (and the zlib build).
    """
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise ValueError("encode_png expects uint8 pixels")
    if arr.ndim == 2:
        arr = arr[..., None]
    height, width, channels = arr.shape
    color = {1: 0, 2: 4, 3: 2, 4: 6}[channels]
    rows = np.concatenate(
        [np.zeros((height, 1), np.uint8), arr.reshape(height, width * channels)], axis=1
    )
    ihdr = struct.pack(">IIBBBBB", width, height, 8, color, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(rows.tobytes(), 9))
        + _chunk(b"IEND", b"")
    )


def _pnm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, honouring comments."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptStreamError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates header and raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise CorruptStreamError("truncated PNM header")
    return tokens, pos + 1


def decode_pnm(data):
    """Decode binary PGM (P5) or PPM (P6) bytes to ``(H, W, C)`` uint8."""
    kind = sniff(data)
    if kind != "pnm":
        raise UnsupportedFormatError("not a binary PGM/PPM stream")
    tokens, offset = _pnm_tokens(data, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise CorruptStreamError(f"non-numeric PNM header: {exc}") from exc
    if width < 1 or height < 1:
        raise CorruptStreamError("zero image dimension")
    if not 1 <= maxval <= 255:
        raise UnsupportedFormatError(f"PNM maxval {maxval} (only <= 255 supported)")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise CorruptStreamError(f"PNM raster truncated: {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    if arr.max(initial=0) > maxval:
        raise CorruptStreamError("sample exceeds maxval")
    if maxval != 255:
        arr = ((arr.astype(np.uint32) * 255 + maxval // 2) // maxval).astype(np.uint8)
    return arr.copy()


def encode_ppm(pixels):
    """Encode an ``(H, W, 3)`` uint8 array as binary PPM."""
    arr = np.asarray(pixels, dtype=np.uint8)
    height, width, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (width, height) + arr.tobytes()
