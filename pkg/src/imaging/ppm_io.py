"""
Binary PPM (P6, 8-bit) image I/O.

Intensities are quantized as ``round(255 * v)`` on write and read back as
``byte / 255``, so a write/read round trip is exact for images whose
intensities are already multiples of 1/255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..exceptions import CorpusError
from .image_core import ImageTensor


def to_bytes(img: ImageTensor) -> np.ndarray:
    """Quantize an image to uint8."""
    return np.rint(img.data * 255.0).astype(np.uint8)


def quantize(img: ImageTensor) -> ImageTensor:
    """Apply the PPM round-trip quantization without touching the disk."""
    return ImageTensor(to_bytes(img).astype(np.float64) / 255.0)


def write_ppm(path: str | Path, img: ImageTensor) -> Path:
    """Write ``img`` as binary P6 PPM with maxval 255."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_bytes(img)).save(out, format="PPM")
    return out


def read_ppm(path: str | Path) -> ImageTensor:
    """Read an 8-bit PPM file into an ImageTensor."""
    src = Path(path)
    if not src.exists():
        raise CorpusError(f"Image not found: {src}", path=str(src))
    try:
        with Image.open(src) as handle:
            arr = np.asarray(handle.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError) as e:
        raise CorpusError(f"Unreadable image {src}: {e}", path=str(src)) from e
    return ImageTensor(arr / 255.0)


def list_ppm(directory: str | Path) -> list[Path]:
    """Sorted ``*.ppm`` files of a directory."""
    return sorted(Path(directory).glob("*.ppm"))
