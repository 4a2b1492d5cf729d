"""Online codec selection.

For each field: sample blocks, estimate the transform codec's bit-rate and
PSNR, find the predictor bin size that would give the same PSNR, estimate
the predictor's bit-rate at that bin size, and compress with whichever is
cheaper.  Both estimates read the same block sample.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .codec import PREDICTOR, SELECTION_BIT, TRANSFORM, CodecParams, CompressedArchive, FieldRecord, compress
from .errors import AdcsError, InvalidBound
from .estimate import (
    PSNR_SENTINEL,
    SZ_BITRATE_OFFSET,
    delta_from_psnr,
    estimate_ec,
    estimate_predictor,
    sample_field_blocks,
)
from .field import Field, SamplingConfig
from .transform import DEFAULT_T

AUTO = "auto"


@dataclass(frozen=True)
class ErrorBound:
    """Either an absolute bound or one relative to the field's value range."""

    value: float
    relative: bool = False

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise InvalidBound(f"error bound must be positive and finite, got {self.value}")

    @classmethod
    def absolute(cls, value: float) -> "ErrorBound":
        return cls(value, False)

    @classmethod
    def rel(cls, value: float) -> "ErrorBound":
        return cls(value, True)

    def resolve(self, f: Field) -> float:
        if not self.relative:
            return float(self.value)
        if f.vr > 0:
            return float(self.value * f.vr)
        # a constant field has no range; any positive bound reproduces it
        scale = max(abs(f.vmin), 1.0)
        return float(self.value * scale)


@dataclass(frozen=True)
class SelectionReport:
    name: str
    eb_abs: float
    br_sz: float
    br_zfp: float
    psnr_zfp: float
    delta: float
    eb_sz: float
    family: str
    selection: int
    estimate_seconds: float
    compress_seconds: float


def _sz_bound(delta: float, eb_abs: float, f: Field) -> float:
    """Predictor bound at the matched bin size, never looser than the user's."""
    # keep the integer grid well inside float64 precision
    floor = max(abs(f.vmin), abs(f.vmax)) * 2.0**-48
    return min(max(delta / 2.0, floor), eb_abs)


def estimate_pair(f: Field, eb_abs: float, cfg: SamplingConfig, t: float = DEFAULT_T, offset: float = SZ_BITRATE_OFFSET):
    """Both estimates at matched PSNR.

    Returns the transform estimate, the matched bin size, the predictor
    bound derived from it and the predictor bit-rate estimate.
    """
    idx, values, padded = sample_field_blocks(f, cfg)
    ec, _ = estimate_ec((values, padded), cfg, eb_abs, f.vr, t, f.bits_per_value)
    if f.vr > 0 and ec.psnr < PSNR_SENTINEL:
        delta = delta_from_psnr(f.vr, ec.psnr)
    elif ec.mse > 0:
        delta = math.sqrt(12.0 * ec.mse)
    else:
        delta = 2.0 * eb_abs
    eb_sz = _sz_bound(delta, eb_abs, f)
    br_sz = estimate_predictor(f, idx, eb_sz, offset).br
    return ec, delta, eb_sz, br_sz


def select_and_compress(
    f: Field,
    eb: ErrorBound | float,
    cfg: SamplingConfig | None = None,
    codec: str = AUTO,
    t: float = DEFAULT_T,
) -> tuple[FieldRecord, SelectionReport]:
    cfg = cfg or SamplingConfig()
    if not isinstance(eb, ErrorBound):
        eb = ErrorBound.absolute(eb)
    eb_abs = eb.resolve(f)

    start = time.perf_counter()
    if codec == AUTO:
        ec, delta, eb_sz, br_sz = estimate_pair(f, eb_abs, cfg, t)
        br_zfp, psnr_zfp = ec.br, ec.psnr
        family = PREDICTOR if br_sz < br_zfp else TRANSFORM
    elif codec in (PREDICTOR, TRANSFORM):
        # forced codec: no estimation, the user's bound applies directly
        br_sz = br_zfp = psnr_zfp = delta = math.nan
        eb_sz = eb_abs
        family = codec
    else:
        raise ValueError(f"unknown codec {codec!r}")
    est_time = time.perf_counter() - start

    start = time.perf_counter()
    bound = eb_sz if family == PREDICTOR else eb_abs
    record = compress(f, CodecParams(family, bound, bot_t=t))
    comp_time = time.perf_counter() - start

    report = SelectionReport(
        f.name, eb_abs, br_sz, br_zfp, psnr_zfp, delta, eb_sz, family, SELECTION_BIT[family], est_time, comp_time
    )
    return record, report


class SelectionError(AdcsError):
    def __init__(self, failures: list[tuple[str, Exception]]):
        self.failures = failures
        super().__init__("; ".join(f"{name}: {exc}" for name, exc in failures))


def map_ordered(fn, items, threads: int = 1) -> list:
    """Apply ``fn`` to every item, results in input order; errors captured."""

    def guarded(item):
        try:
            return fn(item), None
        except Exception as exc:  # noqa: BLE001 - reported per item
            return None, exc

    if threads <= 1 or len(items) <= 1:
        return [guarded(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, items))


def select_archive(
    fields: list[Field],
    eb: ErrorBound | float,
    cfg: SamplingConfig | None = None,
    codec: str = AUTO,
    threads: int = 1,
    t: float = DEFAULT_T,
) -> tuple[CompressedArchive, list[SelectionReport]]:
    if not fields:
        raise ValueError("select_archive needs at least one field")
    results = map_ordered(lambda f: select_and_compress(f, eb, cfg, codec, t), list(fields), threads)
    failures = [(f.name, exc) for f, (_, exc) in zip(fields, results) if exc is not None]
    if failures:
        raise SelectionError(failures)
    records = [res[0] for res, _ in results]
    reports = [res[1] for res, _ in results]
    return CompressedArchive(records), reports
