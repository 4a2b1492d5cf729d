"""Ground-truth distortion and rate measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .estimate import PSNR_SENTINEL
from .field import Field


@dataclass(frozen=True)
class QualityReport:
    mse: float
    rmse: float
    nrmse: float
    psnr: float
    max_abs_error: float
    bit_rate: float
    compression_ratio: float


def compare(original: Field, reconstructed: Field, payload_bits: float) -> QualityReport:
    """Distortion of ``reconstructed`` against ``original`` plus rate figures.

    The value range comes from the original only, and the rate counts the
    payload bits handed in (headers are the caller's business).
    """
    if original.dims != reconstructed.dims or original.dtype != reconstructed.dtype:
        raise ShapeMismatch(
            f"{original.dims}/{original.dtype} vs {reconstructed.dims}/{reconstructed.dtype}"
        )
    diff = original.data.astype(np.float64) - reconstructed.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    rmse = math.sqrt(mse)
    vr = original.vr
    nrmse = rmse / vr if vr > 0 else (0.0 if rmse == 0 else math.inf)
    if nrmse == 0:
        psnr = PSNR_SENTINEL
    elif math.isinf(nrmse):
        psnr = -math.inf
    else:
        psnr = min(PSNR_SENTINEL, -20.0 * math.log10(nrmse))
    bit_rate = payload_bits / original.size
    ratio = original.bits_per_value / bit_rate if bit_rate > 0 else math.inf
    return QualityReport(mse, rmse, nrmse, psnr, float(np.abs(diff).max()), bit_rate, ratio)
