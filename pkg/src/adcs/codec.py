"""The two codec pipelines and the archive container.

Predictor codec
    Lorenzo prediction over reconstructed neighbours, linear quantization of
    the prediction error with bins of width 2*eb, canonical Huffman coding.
    Residuals past the bin range are escape-coded by bit length.
    Because every reconstructed value sits on the ``2*eb`` grid, the
    sequential predict/quantize loop collapses to rounding each point onto
    the grid and taking the integer Lorenzo residual, which vectorizes.

Transform codec
    Edge-padded 4^n blocks, orthogonal block transform, per-block exponent
    alignment, fixed-point conversion and bit-plane embedded coding cut at
    ``eb / 2^n`` per coefficient (the transform columns have absolute sum at
    most 2, so this keeps every reconstructed point within ``eb``).

Both codecs store points whose cast back to the field dtype would break the
bound verbatim, so the pointwise contract is unconditional.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import encode
from .errors import CorruptStream, InvalidParams, UnknownVersion
from .field import Field, blockify, parse_dtype, unblockify
from .quantize import DEFAULT_BIN_COUNT
from .transform import DEFAULT_T, bot_forward_batch, bot_inverse_batch, lorenzo_diff, lorenzo_integrate, make_bot_matrix

FORMAT_VERSION = 1
MAGIC = b"ADCS"
PREDICTOR = "predictor"
TRANSFORM = "transform"
FAMILIES = (PREDICTOR, TRANSFORM)
SELECTION_BIT = {PREDICTOR: 0, TRANSFORM: 1}

# Largest |x| / (2 eb) the integer grid can index exactly.
_MAX_GRID = 2.0**52


@dataclass(frozen=True)
class CodecParams:
    family: str
    eb_abs: float
    bot_t: float = DEFAULT_T
    bin_count: int = DEFAULT_BIN_COUNT
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParams(f"unknown codec family {self.family!r}")
        if not (self.eb_abs > 0 and math.isfinite(self.eb_abs)):
            raise InvalidParams(f"eb_abs must be positive and finite, got {self.eb_abs}")
        if self.bin_count < 3 or self.bin_count % 2 == 0 or self.bin_count > 2**31 - 1:
            raise InvalidParams(f"bin_count must be odd and in [3, 2^31), got {self.bin_count}")
        if not 0.0 <= self.bot_t <= 1.0:
            raise InvalidParams(f"bot_t must lie in [0, 1], got {self.bot_t}")


@dataclass(frozen=True)
class FieldRecord:
    name: str
    dtype: np.dtype
    dims: tuple[int, ...]
    selection: int
    eb_abs: float
    vmin: float
    vmax: float
    payload: bytes

    @property
    def family(self) -> str:
        return TRANSFORM if self.selection else PREDICTOR

    @property
    def vr(self) -> float:
        return self.vmax - self.vmin

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def bit_rate(self) -> float:
        """Payload bits per element (record header excluded)."""
        return 8.0 * len(self.payload) / self.size

    @property
    def compression_ratio(self) -> float:
        bits = 8.0 * len(self.payload)
        return 8.0 * np.dtype(self.dtype).itemsize * self.size / bits if bits else math.inf


# ---------------------------------------------------------------------------
# payload helpers


class _Reader:
    def __init__(self, buf: bytes, offset: int = 0):
        self.buf = buf
        self.pos = offset

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptStream("payload truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def array(self, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt)


def _pack_fixups(out: io.BytesIO, index: np.ndarray, raw: np.ndarray, dtype) -> None:
    out.write(struct.pack("<Q", index.size))
    out.write(index.astype("<u8").tobytes())
    out.write(raw.astype(dtype).tobytes())


def _read_fixups(r: _Reader, dtype, size: int) -> tuple[np.ndarray, np.ndarray]:
    (count,) = r.unpack("<Q")
    if count > size:
        raise CorruptStream("fixup count exceeds field size")
    index = r.array("<u8", count).astype(np.int64)
    raw = r.array(dtype, count)
    if count and index.max() >= size:
        raise CorruptStream("fixup index out of range")
    return index, raw


def _bound_violations(original: np.ndarray, recon: np.ndarray, eb_abs: float) -> np.ndarray:
    return np.nonzero(np.abs(original.astype(np.float64) - recon.astype(np.float64)) > eb_abs)[0]


# ---------------------------------------------------------------------------
# predictor codec


def _grid_indices(x: np.ndarray, delta: float) -> np.ndarray:
    scaled = x / delta
    if scaled.size and np.abs(scaled).max() >= _MAX_GRID:
        raise InvalidParams("error bound is too small for the data magnitude")
    return np.floor(scaled + 0.5).astype(np.int64)


def escape_classes(radius: int, top: int = 63) -> list[tuple[int, int, int]]:
    """(bit length, lowest |d|, highest |d|) of each escape class above ``radius``.

    Residuals beyond the bin range are sent as a class symbol (their bit
    length and sign) followed by their bits below the leading one.
    """
    base = radius.bit_length()
    out = []
    for b in range(base, top + 1):
        lo, hi = max(1 << (b - 1), radius + 1), (1 << b) - 1
        if lo <= hi:
            out.append((b, lo, hi))
    return out


def residual_symbols(d: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Huffman symbols plus raw extra-bit fields (values, widths) for residuals."""
    mag = np.abs(d)
    inside = mag <= radius
    blen = np.zeros(d.shape, dtype=np.int64)
    big = ~inside
    if np.any(big):
        blen[big] = np.frexp(mag[big].astype(np.float64))[1]
        # float rounding can push values just under a power of two up a class
        over = np.left_shift(np.int64(1), blen[big] - 1) > mag[big]
        blen[np.nonzero(big)[0][over]] -= 1
    base = radius.bit_length()
    sym = np.where(inside, d + radius + 1, 2 * radius + 2 + 2 * (blen - base) + (d < 0))
    widths = np.where(big, blen - 1, 0)
    extra = np.where(big, mag - np.left_shift(np.int64(1), np.maximum(blen - 1, 0)), 0)
    return sym.astype(np.int64), extra[big].astype(np.uint64), widths[big]


def residual_values(sym: np.ndarray, radius: int, extra_bits: bytes, extra_nbits: int) -> np.ndarray:
    inside = sym <= 2 * radius + 1
    if np.any(sym < 1):
        raise CorruptStream("residual symbol out of range")
    base = radius.bit_length()
    cls = np.where(inside, 0, sym - (2 * radius + 2))
    blen = cls // 2 + base
    if np.any(blen[~inside] > 63):
        raise CorruptStream("escape class out of range")
    widths = np.where(inside, 0, blen - 1)[~inside]
    extra = encode.unpack_bits(extra_bits, extra_nbits, widths).astype(np.int64)
    d = sym - (radius + 1)
    mag = np.left_shift(np.int64(1), widths) + extra
    d[~inside] = np.where(cls[~inside] % 2 == 1, -mag, mag)
    return d


def compress_predictor(f: Field, p: CodecParams) -> FieldRecord:
    if p.family != PREDICTOR:
        raise InvalidParams("compress_predictor needs family='predictor'")
    x = f.array.astype(np.float64)
    delta = 2.0 * p.eb_abs
    radius = p.bin_count // 2
    k = _grid_indices(x, delta)
    d = lorenzo_diff(k).reshape(-1)

    # The first point has no neighbours and travels raw; the rest are
    # Huffman symbols with escape classes for residuals past the bin range.
    symbols, extra, widths = residual_symbols(d[1:], radius)
    bits, nbits, table = encode.huffman_encode(symbols)
    extra_bits, extra_nbits = encode.pack_bits(extra, widths)

    recon = (k.reshape(-1) * delta).astype(f.dtype)
    fix = _bound_violations(f.data, recon, p.eb_abs)

    out = io.BytesIO()
    out.write(struct.pack("<Iq", radius, int(d[0])))
    out.write(table.to_bytes())
    out.write(struct.pack("<QQQ", symbols.size, nbits, extra_nbits))
    out.write(bits)
    out.write(extra_bits)
    _pack_fixups(out, fix, f.data[fix], f.dtype)
    return _record(f, p, out.getvalue())


def _decompress_predictor(r: FieldRecord) -> np.ndarray:
    rd = _Reader(r.payload)
    radius, first = rd.unpack("<Iq")
    table, rd.pos = encode.HuffmanTable.from_bytes(rd.buf, rd.pos)
    count, nbits, extra_nbits = rd.unpack("<QQQ")
    if count != r.size - 1:
        raise CorruptStream("symbol count disagrees with dims")
    bits = rd.take((nbits + 7) // 8)
    extra_bits = rd.take((extra_nbits + 7) // 8)
    symbols = encode.huffman_decode(bits, table, count, nbits)
    fix_idx, fix_raw = _read_fixups(rd, r.dtype, r.size)

    d = np.empty(r.size, dtype=np.int64)
    d[0] = first
    d[1:] = residual_values(symbols, radius, extra_bits, extra_nbits)
    k = lorenzo_integrate(d.reshape(r.dims)).reshape(-1)
    recon = (k * (2.0 * r.eb_abs)).astype(r.dtype)
    recon[fix_idx] = fix_raw
    return recon


# ---------------------------------------------------------------------------
# transform codec


def sequency_order(ndim: int) -> np.ndarray:
    """Flat in-block coefficient order by total frequency (low first)."""
    idx = np.indices((4,) * ndim).reshape(ndim, -1)
    return np.argsort(idx.sum(axis=0), kind="stable")


def block_exponents(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-block (max |c|, floor(log2 max |c|)); exponent is 0 for zero blocks."""
    flat = coeffs.reshape(coeffs.shape[0], -1)
    max_abs = np.abs(flat).max(axis=1)
    _, e = np.frexp(max_abs)
    return max_abs, np.where(max_abs > 0, e.astype(np.int64) - 1, 0)


def transform_blocks(f: Field, t: float = DEFAULT_T):
    """Forward-transformed blocks of a field, coefficients flat in coding order."""
    blocks, mask, _ = blockify(f.array)
    coeffs = bot_forward_batch(blocks, make_bot_matrix(t))
    order = sequency_order(f.ndim)
    return coeffs.reshape(coeffs.shape[0], -1)[:, order], mask


_NO_PLANES = 255


def compress_transform(f: Field, p: CodecParams) -> FieldRecord:
    if p.family != TRANSFORM:
        raise InvalidParams("compress_transform needs family='transform'")
    n = f.ndim
    coeffs, _ = transform_blocks(f, p.bot_t)
    eb_c = encode.coefficient_bound(p.eb_abs, n)
    max_abs, e_max = block_exponents(coeffs)
    planes = encode.planes_for(e_max, eb_c, max_abs).astype(np.int64)
    cut = math.floor(math.log2(eb_c))
    coded = planes > 0
    if np.any(e_max[coded] - cut + 1 > encode.Q_PLANES):
        raise InvalidParams("error bound is too small for the block dynamic range")
    exp_bytes = np.where(coded, e_max - cut, _NO_PLANES).astype(np.uint8)

    mags, signs = encode.fixed_point(coeffs, e_max, planes)
    bits, nbits = encode.ec_encode_blocks(mags, signs, planes)
    recon = _inverse_blocks(mags, signs, e_max, planes, f.dims, p.bot_t).astype(f.dtype)
    fix = _bound_violations(f.data, recon, p.eb_abs)

    out = io.BytesIO()
    out.write(struct.pack("<dhQ", p.bot_t, cut, nbits))
    out.write(exp_bytes.tobytes())
    out.write(bits)
    _pack_fixups(out, fix, f.data[fix], f.dtype)
    return _record(f, p, out.getvalue())


def _inverse_blocks(mags, signs, e_max, planes, dims, t) -> np.ndarray:
    n = len(dims)
    flat = encode.from_fixed_point(mags, signs, e_max, planes)
    order = sequency_order(n)
    coeffs = np.empty_like(flat)
    coeffs[:, order] = flat
    blocks = bot_inverse_batch(coeffs.reshape((-1,) + (4,) * n), make_bot_matrix(t))
    return unblockify(blocks, dims).reshape(-1)


def _decompress_transform(r: FieldRecord) -> np.ndarray:
    rd = _Reader(r.payload)
    t, cut, nbits = rd.unpack("<dhQ")
    if not 0.0 <= t <= 1.0:
        raise CorruptStream(f"transform parameter {t} out of range")
    n = len(r.dims)
    nblocks = math.prod(-(-d // 4) for d in r.dims)
    exp_bytes = rd.array(np.uint8, nblocks).astype(np.int64)
    coded = exp_bytes != _NO_PLANES
    e_max = np.where(coded, exp_bytes + cut, 0)
    planes = np.where(coded, np.minimum(exp_bytes + 1, encode.Q_PLANES), 0)
    bits = rd.take((nbits + 7) // 8)
    mags, signs = encode.ec_decode_blocks(bits, nbits, planes, 4**n)
    fix_idx, fix_raw = _read_fixups(rd, r.dtype, r.size)
    recon = _inverse_blocks(mags, signs, e_max, planes, r.dims, t).astype(r.dtype)
    recon[fix_idx] = fix_raw
    return recon


# ---------------------------------------------------------------------------
# dispatch


def _record(f: Field, p: CodecParams, payload: bytes) -> FieldRecord:
    return FieldRecord(f.name, f.dtype, f.dims, SELECTION_BIT[p.family], float(p.eb_abs), f.vmin, f.vmax, payload)


def compress(f: Field, p: CodecParams) -> FieldRecord:
    return compress_predictor(f, p) if p.family == PREDICTOR else compress_transform(f, p)


def decompress(r: FieldRecord) -> Field:
    if r.selection not in (0, 1):
        raise CorruptStream(f"unknown selection bit {r.selection}")
    values = _decompress_transform(r) if r.selection else _decompress_predictor(r)
    return Field.from_array(r.name, values.reshape(r.dims), r.dtype)


# ---------------------------------------------------------------------------
# archive container

_DTYPE_CODES = {4: 0, 8: 1}
_CODE_DTYPES = {0: "f32", 1: "f64"}


@dataclass(frozen=True)
class CompressedArchive:
    records: list = dc_field(default_factory=list)
    version: int = FORMAT_VERSION

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        out.write(MAGIC)
        out.write(struct.pack("<HI", self.version, len(self.records)))
        for r in self.records:
            name = r.name.encode("utf-8")
            out.write(struct.pack("<H", len(name)))
            out.write(name)
            out.write(struct.pack("<BB", _DTYPE_CODES[np.dtype(r.dtype).itemsize], len(r.dims)))
            out.write(struct.pack(f"<{len(r.dims)}Q", *r.dims))
            out.write(struct.pack("<BdddQ", r.selection, r.eb_abs, r.vmin, r.vmax, len(r.payload)))
            out.write(r.payload)
        return out.getvalue()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CompressedArchive":
        if len(buf) < 4 or buf[:4] != MAGIC:
            raise UnknownVersion("not an archive: bad magic")
        rd = _Reader(bytes(buf), 4)
        version, count = rd.unpack("<HI")
        if version != FORMAT_VERSION:
            raise UnknownVersion(f"archive version {version} is not supported")
        records = []
        for _ in range(count):
            (name_len,) = rd.unpack("<H")
            try:
                name = rd.take(name_len).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorruptStream("field name is not UTF-8") from exc
            dcode, ndim = rd.unpack("<BB")
            if dcode not in _CODE_DTYPES or not 1 <= ndim <= 3:
                raise CorruptStream("bad dtype or rank in record header")
            dims = rd.unpack(f"<{ndim}Q")
            if any(d < 1 for d in dims):
                raise CorruptStream("zero extent in record header")
            selection, eb_abs, vmin, vmax, plen = rd.unpack("<BdddQ")
            payload = rd.take(plen)
            records.append(
                FieldRecord(name, parse_dtype(_CODE_DTYPES[dcode]), tuple(dims), selection, eb_abs, vmin, vmax, payload)
            )
        if rd.pos != len(rd.buf):
            raise CorruptStream("trailing bytes after last record")
        return cls(records, version)

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "CompressedArchive":
        return cls.from_bytes(Path(path).read_bytes())
