"""Binary PPM (P6) / PGM (P5) reading and writing, maxval 255.

Arrays are channels-first floats in [0, 1]: (H, W) or (1, H, W) for
grayscale, (3, H, W) for color. Writing quantizes with round-to-nearest;
write -> read -> write is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def _quantize(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2:
        raise ValidationError(f"PGM wants a single-channel image, got shape {img.shape}")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(img).tobytes())


def write_ppm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValidationError(f"PPM wants a (3,H,W) image, got shape {img.shape}")
    h, w = img.shape[1:]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(img).transpose(1, 2, 0).tobytes())


def _read_header(blob: bytes, path) -> tuple[bytes, list[int], int]:
    # magic, then three decimal fields (width, height, maxval), each
    # optionally preceded by whitespace and '#' comment lines
    if len(blob) < 2:
        raise ValidationError(f"{path}: truncated image file")
    magic = blob[:2]
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and blob[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: malformed header")
        fields.append(int(blob[start:pos]))
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    return magic, fields, pos


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    magic, (w, h, maxval), pos = _read_header(blob, path)
    if magic != b"P5":
        raise ValidationError(f"{path}: expected P5 magic, got {magic!r}")
    if maxval != 255:
        raise ValidationError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = blob[pos : pos + w * h]
    if len(raster) != w * h:
        raise ValidationError(f"{path}: truncated raster")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0
    return img[None, :, :]


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    magic, (w, h, maxval), pos = _read_header(blob, path)
    if magic != b"P6":
        raise ValidationError(f"{path}: expected P6 magic, got {magic!r}")
    if maxval != 255:
        raise ValidationError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = blob[pos : pos + 3 * w * h]
    if len(raster) != 3 * w * h:
        raise ValidationError(f"{path}: truncated raster")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0
    return img.transpose(2, 0, 1)


def read_image(path) -> np.ndarray:
    """Dispatch on the magic bytes; returns (1,H,W) or (3,H,W)."""
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        return read_pgm(path)
    if magic == b"P6":
        return read_ppm(path)
    raise ValidationError(f"{path}: not a binary PGM/PPM file")
