"""
Image files to unit-range arrays and back.

P6 PPM (maxval 255) is read and written bit-exactly; PNG goes through Pillow.
Arrays are float32 shaped (3, H, W) with values in [0, 1].
"""
import os
from typing import Optional, Tuple

import numpy as np

from src.constants import PPM_MAXVAL
from src.entity.dataset_entity import ImageRecord
from src.exception import DatasetReadError, PPMFormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def quantize(x: np.ndarray) -> np.ndarray:
    """round(x * 255) half away from zero, clamped to [0, 255]."""
    scaled = np.asarray(x, dtype=np.float64) * PPM_MAXVAL
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, 0, PPM_MAXVAL).astype(np.uint8)


def dequantize(v: np.ndarray) -> np.ndarray:
    return (np.asarray(v, dtype=np.float64) / PPM_MAXVAL).astype(np.float32)


def _read_header(data: bytes, path: str) -> Tuple[int, int, int]:
    """Returns (width, height, payload offset)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PPMFormatError(f"{path}: header ends early", path=path)
        tokens.append(data[start:pos])
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PPMFormatError(f"{path}: missing whitespace after maxval", path=path)

    magic, width, height, maxval = tokens
    if magic != b"P6":
        raise PPMFormatError(f"{path}: magic {magic!r} is not P6", path=path, magic=magic.decode("latin-1"))
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError:
        raise PPMFormatError(f"{path}: non-numeric header field", path=path) from None
    if width < 1 or height < 1:
        raise PPMFormatError(f"{path}: empty image {width}x{height}", path=path)
    if maxval != PPM_MAXVAL:
        raise PPMFormatError(f"{path}: maxval {maxval} is not {PPM_MAXVAL}", path=path, maxval=maxval)
    return width, height, pos + 1


def decode_ppm(data: bytes, path: str = "<bytes>") -> np.ndarray:
    """P6 bytes to uint8 (3, H, W)."""
    width, height, offset = _read_header(data, path)
    expected = width * height * 3
    payload = data[offset:offset + expected]
    if len(payload) < expected:
        raise PPMFormatError(f"{path}: payload truncated ({len(payload)} of {expected} bytes)",
                             path=path, found=len(payload), expected=expected)
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).transpose(2, 0, 1).copy()


def encode_ppm(codes: np.ndarray) -> bytes:
    codes = np.asarray(codes, dtype=np.uint8)
    _, height, width = codes.shape
    return f"P6\n{width} {height}\n{PPM_MAXVAL}\n".encode("ascii") + codes.transpose(1, 2, 0).tobytes()


def load_ppm(path: str, label: Optional[int] = None) -> ImageRecord:
    try:
        with open(path, "rb") as file_obj:
            data = file_obj.read()
    except OSError as e:
        raise DatasetReadError(f"cannot read {path}: {e}", path=path) from e
    return ImageRecord(dequantize(decode_ppm(data, path)), label, path)


def save_ppm(record, path: str) -> None:
    image = record.image if isinstance(record, ImageRecord) else record
    with open(path, "wb") as file_obj:
        file_obj.write(encode_ppm(quantize(image)))


def load_png(path: str, label: Optional[int] = None) -> ImageRecord:
    from PIL import Image

    try:
        with Image.open(path) as image:
            codes = np.asarray(image.convert("RGB"), dtype=np.uint8)
    except OSError as e:
        raise DatasetReadError(f"cannot read {path}: {e}", path=path) from e
    return ImageRecord(dequantize(codes.transpose(2, 0, 1)), label, path)


def save_png(record, path: str) -> None:
    from PIL import Image

    image = record.image if isinstance(record, ImageRecord) else record
    Image.fromarray(quantize(image).transpose(1, 2, 0), mode="RGB").save(path)


def load_image(path: str, label: Optional[int] = None) -> ImageRecord:
    if os.path.splitext(path)[1].lower() == ".png":
        return load_png(path, label)
    return load_ppm(path, label)


def save_image(record, path: str) -> None:
    if os.path.splitext(path)[1].lower() == ".png":
        save_png(record, path)
    else:
        save_ppm(record, path)
