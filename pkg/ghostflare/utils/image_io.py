"""Binary PPM (P6, maxval 255) reading and writing for linear [0, 1] images."""
import io
import re
from pathlib import Path

import numpy as np
from PIL import Image

from ghostflare.exceptions import DimMismatch, ParseError


# whitespace, or a # comment running to the end of its line
_SEP = rb"(?:\s|#[^\r\n]*[\r\n])+"
# magic, width, height, maxval, then exactly one whitespace byte
_HEADER = re.compile(rb"P6" + _SEP + rb"(\d+)" + _SEP + rb"(\d+)" + _SEP + rb"(\d+)\s")


def quantize(image: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 by round(255 v), ties to even (numpy rint)."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 255.0


def to_pil(image: np.ndarray) -> Image.Image:
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimMismatch(f"Expected an (h, w, 3) image, got {image.shape}")
    return Image.fromarray(quantize(image))


def encode_ppm(image: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    to_pil(image).save(buffer, format="PPM")
    return buffer.getvalue()


def write_ppm(path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(image))


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes into an (h, w, 3) float image."""
    header = _HEADER.match(data)
    if header is None:
        raise ParseError("Invalid P6 header", offset=0)
    width, height, maxval = (int(group) for group in header.groups())
    if maxval != 255:
        raise ParseError(f"Unsupported maxval {maxval}", offset=header.start(3))
    expected = header.end() + 3 * width * height
    if len(data) < expected:
        raise ParseError(
            f"Truncated pixel data: expected {expected} bytes, found {len(data)}",
            offset=len(data),
        )
    try:
        pixels = np.asarray(Image.frombytes("RGB", (width, height), data[header.end():expected]))
    except ValueError as exc:
        raise ParseError(f"Cannot decode PPM: {exc}", offset=header.end()) from exc
    return dequantize(pixels)


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())
