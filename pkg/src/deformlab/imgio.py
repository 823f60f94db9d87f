"""Single-image file IO: PPM (P6) / PGM (P5) hand-rolled, PNG via Pillow.

Images cross this boundary as float32 arrays in [0, 1], channel-last.
Grayscale round-trips through P5, color through P6, both 8-bit maxval 255.
"""

from __future__ import annotations

import numpy as np


class ImageIOError(ValueError):
    pass


def _to_uint8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _from_uint8(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def write_pnm(path, img):
    """Writes (h, w) or (h, w, 1) as P5, (h, w, 3) as P6."""
    raw = _to_uint8(img)
    if raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    if raw.ndim == 2:
        magic = b"P5"
    elif raw.ndim == 3 and raw.shape[2] == 3:
        magic = b"P6"
    else:
        raise ImageIOError(f"cannot encode shape {np.asarray(img).shape} as PNM")
    h, w = raw.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(raw.tobytes())


def _read_pnm_tokens(data: bytes, count: int):
    """Header tokens after the magic, skipping whitespace and # comments."""
    tokens = []
    i = 2
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ImageIOError("truncated PNM header")
        tokens.append(int(data[start:i]))
    return tokens, i + 1  # single whitespace byte separates header from pixels


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageIOError(f"{path}: unsupported PNM magic {magic!r}")
    (w, h, maxval), offset = _read_pnm_tokens(data, 3)
    if maxval != 255:
        raise ImageIOError(f"{path}: only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = h * w * channels
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=offset)
    if pixels.size != need:
        raise ImageIOError(f"{path}: expected {need} pixel bytes")
    return _from_uint8(pixels.reshape(h, w, channels))


def write_png(path, img):
    from PIL import Image

    raw = _to_uint8(img)
    if raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    Image.fromarray(raw).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        raw = np.asarray(im, dtype=np.uint8)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    return _from_uint8(raw)


def read_image(path) -> np.ndarray:
    p = str(path).lower()
    if p.endswith((".ppm", ".pgm", ".pnm")):
        return read_pnm(path)
    if p.endswith(".png"):
        return read_png(path)
    raise ImageIOError(f"{path}: unsupported image extension (use .ppm/.pgm/.png)")


def write_image(path, img):
    p = str(path).lower()
    if p.endswith((".ppm", ".pgm", ".pnm")):
        write_pnm(path, img)
    elif p.endswith(".png"):
        write_png(path, img)
    else:
        raise ImageIOError(f"{path}: unsupported image extension (use .ppm/.pgm/.png)")
