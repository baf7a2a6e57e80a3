"""Deformable Gaussian splatting for dynamic scenes."""

from ._core import (
    Checkpoint,
    Error,
    FormatError,
    IntegrityError,
    InvalidInput,
    NumericalError,
    ParseError,
    ShapeError,
    UnsupportedVersion,
    cli,
    covariance,
    psnr,
    ssim,
)

__all__ = [
    "Checkpoint",
    "Error",
    "FormatError",
    "IntegrityError",
    "InvalidInput",
    "NumericalError",
    "ParseError",
    "ShapeError",
    "UnsupportedVersion",
    "cli",
    "covariance",
    "psnr",
    "ssim",
]
