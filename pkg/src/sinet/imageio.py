"""Image file handling: 8-bit RGB PNG and binary PPM (P6, maxval 255).

Loads return float64 H x W x 3 arrays scaled by 1/255; saves clamp to [0, 1]
and quantize with round-half-to-even. Errors name the offending file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor_ops import check_tensor3

SUPPORTED_SUFFIXES = (".png", ".ppm")


class ImageFormatError(ValueError):
    """Raised for unreadable or unsupported image files."""


def _load_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode not in ("RGB", "RGBA", "L", "LA", "P", "I;16", "I", "1"):
                raise ImageFormatError(f"{path}: unsupported PNG mode {img.mode!r}")
            rgb = img.convert("RGB")
            data = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable PNG file") from exc
    except OSError as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    return data


def _load_ppm(path: Path) -> np.ndarray:
    blob = path.read_bytes()

    # Header: magic, width, height, maxval as whitespace/comment separated
    # ASCII tokens, then exactly one whitespace byte before the raster.
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(blob):
            c = blob[pos : pos + 1]
            if c == b"#":
                while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PPM header at byte {start}")
        return blob[start:pos]

    magic = next_token()
    if magic != b"P6":
        raise ImageFormatError(f"{path}: expected PPM magic b'P6', got {magic!r}")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ImageFormatError(f"{path}: non-numeric PPM header field") from exc
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # the single whitespace byte after maxval
    expected = width * height * 3
    raster = blob[pos : pos + expected]
    if len(raster) != expected:
        raise ImageFormatError(
            f"{path}: PPM raster holds {len(raster)} bytes, expected {expected}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def load_image(path) -> np.ndarray:
    """Load a PNG or PPM file as a float64 H x W x 3 array in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        data = _load_png(path)
    elif suffix == ".ppm":
        data = _load_ppm(path)
    else:
        raise ImageFormatError(
            f"{path}: unsupported image suffix {suffix!r} "
            f"(supported: {', '.join(SUPPORTED_SUFFIXES)})"
        )
    return data.astype(np.float64) / 255.0


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to uint8 with round-half-to-even."""
    image = check_tensor3(image, "image")
    clipped = np.clip(image.astype(np.float64), 0.0, 1.0)
    return np.rint(clipped * 255.0).astype(np.uint8)


def save_image(image: np.ndarray, path) -> None:
    """Save an H x W x 3 float array as PNG or PPM depending on the suffix."""
    image = check_tensor3(image, "image")
    if image.shape[2] != 3:
        raise ValueError(f"expected a 3-channel image, got shape {image.shape}")
    data = quantize(image)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        Image.fromarray(data, mode="RGB").save(path, format="PNG")
    elif suffix == ".ppm":
        header = f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + data.tobytes())
    else:
        raise ImageFormatError(
            f"{path}: unsupported image suffix {suffix!r} "
            f"(supported: {', '.join(SUPPORTED_SUFFIXES)})"
        )


def save_grayscale(plane: np.ndarray, path) -> None:
    """Save a single H x W (or H x W x 1) plane already scaled to [0, 1]."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"expected an H x W plane, got shape {arr.shape}")
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    if path.suffix.lower() != ".png":
        raise ImageFormatError(f"{path}: feature maps are written as PNG")
    Image.fromarray(data, mode="L").save(path, format="PNG")
