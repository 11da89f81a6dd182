"""
Image carrier, channel statistics and PPM I/O.
"""

from .image_core import (
    PSNR_CAP_DB,
    ChannelStats,
    ImageTensor,
    channel_stats,
    clamp_unit,
    gradient_magnitude,
    luminance,
    mse,
    percentile,
    psnr,
)
from .ppm_io import list_ppm, quantize, read_ppm, write_ppm

__all__ = [
    "PSNR_CAP_DB",
    "ChannelStats",
    "ImageTensor",
    "channel_stats",
    "clamp_unit",
    "gradient_magnitude",
    "list_ppm",
    "luminance",
    "mse",
    "percentile",
    "psnr",
    "quantize",
    "read_ppm",
    "write_ppm",
]
