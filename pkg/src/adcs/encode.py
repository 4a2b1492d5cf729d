"""Stage III canonical Huffman coding and stage II bit-plane embedded coding.

Huffman tables are canonical, so only code lengths need to be stored.

The embedded coder works on one 4^n block of transform coefficients at a
time.  Coefficients are aligned to the block's top exponent ``e_max`` (the
plane of the leading bit of the largest magnitude) and converted to
``Q``-plane fixed-point magnitudes.  Planes are emitted MSB first and cut at
a plane derived from the error bound.  Within a plane, coefficients already
in the significance prefix send their bit verbatim; the rest are scanned
with a one-bit "any ones left?" test so leading zeros are nearly free.
Signs are sent once, right after a coefficient's first one bit.
"""

from __future__ import annotations

import heapq
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CorruptStream, InvalidBound

# Fixed-point planes below the block exponent.  62 keeps every shift inside a
# uint64 and leaves room for tight bounds on high-dynamic-range blocks.
Q_PLANES = 62
MAX_CODE_LENGTH = 32
_DENSE, _SPARSE = 0, 1
_DENSE_LIMIT = 1 << 24


# ---------------------------------------------------------------------------
# bit I/O kernels


@njit(cache=True, nogil=True)
def _put(buf, pos, bit):
    if bit:
        buf[pos >> 3] |= np.uint8(1 << (7 - (pos & 7)))
    return pos + 1


@njit(cache=True, nogil=True)
def _pack_codes(index, codes, lengths, nbits):
    buf = np.zeros((nbits + 7) // 8, dtype=np.uint8)
    pos = 0
    for i in range(index.size):
        code = codes[index[i]]
        length = lengths[index[i]]
        for b in range(length - 1, -1, -1):
            pos = _put(buf, pos, (code >> b) & 1)
    return buf


@njit(cache=True, nogil=True)
def _canonical_decode(buf, nbits, count, first_code, first_index, per_length, sorted_syms, out):
    """Decode ``count`` symbols; returns bits consumed or -1 on a bad stream."""
    pos = 0
    max_len = per_length.size - 1
    for i in range(count):
        code = 0
        length = 0
        while True:
            if pos >= nbits:
                return -1
            bit = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
            pos += 1
            code = (code << 1) | bit
            length += 1
            if length > max_len:
                return -1
            offset = code - first_code[length]
            if offset >= 0 and offset < per_length[length]:
                out[i] = sorted_syms[first_index[length] + offset]
                break
    return pos


@njit(cache=True, nogil=True)
def _unpack_fields(buf, nbits, widths, out):
    pos = 0
    for i in range(widths.size):
        w = widths[i]
        if pos + w > nbits:
            return -1
        v = np.uint64(0)
        for _ in range(w):
            v = (v << np.uint64(1)) | np.uint64((buf[pos >> 3] >> (7 - (pos & 7))) & 1)
            pos += 1
        out[i] = v
    return pos


def pack_bits(values, widths) -> tuple[bytes, int]:
    """Concatenate fixed-width unsigned fields MSB-first."""
    values = np.ascontiguousarray(values, dtype=np.uint64)
    widths = np.ascontiguousarray(widths, dtype=np.int64)
    nbits = int(widths.sum())
    buf = _pack_codes(np.arange(values.size), values, widths, nbits)
    return buf.tobytes(), nbits


def unpack_bits(bits, nbits: int, widths) -> np.ndarray:
    widths = np.ascontiguousarray(widths, dtype=np.int64)
    buf = np.frombuffer(bytes(bits), dtype=np.uint8)
    if nbits > 8 * buf.size:
        raise CorruptStream("bit field stream shorter than declared")
    out = np.zeros(widths.size, dtype=np.uint64)
    if _unpack_fields(buf, nbits, widths, out) < 0:
        raise CorruptStream("bit field stream ended early")
    return out


# ---------------------------------------------------------------------------
# Huffman


@dataclass(frozen=True)
class HuffmanTable:
    symbols: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", np.asarray(self.symbols, dtype=np.int64))
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=np.int64))

    @property
    def codes(self) -> np.ndarray:
        """Canonical codewords aligned with ``symbols``."""
        order = np.lexsort((self.symbols, self.lengths))
        codes = np.zeros(self.symbols.size, dtype=np.uint64)
        code = 0
        prev = 0
        for i in order:
            length = int(self.lengths[i])
            if length == 0:
                continue
            code <<= length - prev
            codes[i] = code
            code += 1
            prev = length
        return codes

    def kraft_sum(self) -> float:
        nonzero = self.lengths[self.lengths > 0]
        return float(np.sum(2.0 ** (-nonzero.astype(np.float64))))

    def to_bytes(self) -> bytes:
        """Code lengths, deflated, in dense or sparse form.

        Lengths of neighbouring bin indices are close to each other, so the
        dense form (lengths over the whole symbol span) compresses far better
        than (symbol, length) pairs.  Widely scattered symbols fall back to
        the sparse form.
        """
        if self.symbols.size == 0:
            return struct.pack("<BqI", _DENSE, 0, 0)
        lo = int(self.symbols[0])
        span = int(self.symbols[-1]) - lo + 1
        if span <= _DENSE_LIMIT and span <= 16 * self.symbols.size + 64:
            dense = np.zeros(span, dtype=np.uint8)
            # length 0 marks an absent symbol, so shift real lengths up by one
            dense[self.symbols - lo] = self.lengths + 1
            packed = zlib.compress(dense.tobytes(), 9)
            return struct.pack("<BqII", _DENSE, lo, span, len(packed)) + packed
        gaps = np.diff(self.symbols).astype("<u8")
        raw = self.lengths.astype(np.uint8).tobytes() + gaps.tobytes()
        packed = zlib.compress(raw, 9)
        return struct.pack("<BqII", _SPARSE, lo, self.symbols.size, len(packed)) + packed

    @classmethod
    def from_bytes(cls, buf, offset: int = 0) -> tuple["HuffmanTable", int]:
        try:
            mode, lo, count = struct.unpack_from("<BqI", buf, offset)
            offset += 13
            if count == 0:
                return cls(np.zeros(0), np.zeros(0)), offset
            (plen,) = struct.unpack_from("<I", buf, offset)
            offset += 4
        except struct.error as exc:
            raise CorruptStream("truncated Huffman table") from exc
        if mode not in (_DENSE, _SPARSE):
            raise CorruptStream("unknown Huffman table form")
        if len(buf) < offset + plen:
            raise CorruptStream("truncated Huffman table")
        try:
            raw = zlib.decompress(bytes(buf[offset : offset + plen]))
        except zlib.error as exc:
            raise CorruptStream("malformed Huffman table") from exc
        offset += plen
        if mode == _DENSE:
            dense = np.frombuffer(raw, dtype=np.uint8)
            if dense.size != count or dense.max() > MAX_CODE_LENGTH + 1:
                raise CorruptStream("malformed Huffman table")
            present = np.nonzero(dense)[0]
            return cls(present + lo, dense[present].astype(np.int64) - 1), offset
        if len(raw) != count + 8 * (count - 1):
            raise CorruptStream("malformed Huffman table")
        lengths = np.frombuffer(raw[:count], dtype=np.uint8).astype(np.int64)
        gaps = np.frombuffer(raw[count:], dtype="<u8")
        if lengths.max() > MAX_CODE_LENGTH or np.any(gaps == 0):
            raise CorruptStream("malformed Huffman table")
        symbols = np.concatenate([[0], np.cumsum(gaps)]).astype(np.uint64).view(np.int64) + lo
        return cls(symbols, lengths), offset


def _code_lengths(counts: np.ndarray) -> np.ndarray:
    n = counts.size
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    heap = [(int(c), i, (i,)) for i, c in enumerate(counts)]
    heapq.heapify(heap)
    lengths = np.zeros(n, dtype=np.int64)
    tie = n
    while len(heap) > 1:
        c1, _, a = heapq.heappop(heap)
        c2, _, b = heapq.heappop(heap)
        merged = a + b
        lengths[list(merged)] += 1
        heapq.heappush(heap, (c1 + c2, tie, merged))
        tie += 1
    return lengths


def _limited_lengths(counts: np.ndarray) -> np.ndarray:
    counts = counts.astype(np.int64)
    while True:
        lengths = _code_lengths(counts)
        if lengths.max() <= MAX_CODE_LENGTH:
            return lengths
        counts = (counts + 1) // 2


def build_table(codes) -> HuffmanTable:
    symbols, counts = np.unique(np.asarray(codes, dtype=np.int64), return_counts=True)
    if symbols.size == 0:
        return HuffmanTable(symbols, symbols)
    return HuffmanTable(symbols, _limited_lengths(counts))


def huffman_encode(codes, table: HuffmanTable | None = None) -> tuple[bytes, int, HuffmanTable]:
    """Encode a symbol sequence; returns ``(bitstream, nbits, table)``."""
    seq = np.asarray(codes, dtype=np.int64).reshape(-1)
    if table is None:
        table = build_table(seq)
    if seq.size == 0:
        return b"", 0, table
    index = np.searchsorted(table.symbols, seq)
    if np.any(index >= table.symbols.size) or np.any(table.symbols[np.minimum(index, table.symbols.size - 1)] != seq):
        raise ValueError("sequence holds symbols missing from the table")
    nbits = int(table.lengths[index].sum())
    buf = _pack_codes(index, table.codes, table.lengths, nbits)
    return buf.tobytes(), nbits, table


def huffman_decode(bits, table: HuffmanTable, count: int, nbits: int | None = None) -> np.ndarray:
    out = np.zeros(count, dtype=np.int64)
    if count == 0:
        return out
    if table.symbols.size == 0:
        raise CorruptStream("empty Huffman table for a nonempty stream")
    if table.symbols.size == 1:
        out[:] = table.symbols[0]
        return out
    buf = np.frombuffer(bytes(bits), dtype=np.uint8)
    if nbits is None:
        nbits = 8 * buf.size
    if nbits > 8 * buf.size:
        raise CorruptStream("bitstream shorter than declared")
    max_len = int(table.lengths.max())
    per_length = np.bincount(table.lengths, minlength=max_len + 1).astype(np.int64)
    per_length[0] = 0
    order = np.lexsort((table.symbols, table.lengths))
    sorted_syms = table.symbols[order]
    first_code = np.zeros(max_len + 2, dtype=np.int64)
    first_index = np.zeros(max_len + 2, dtype=np.int64)
    code = 0
    index = 0
    for length in range(1, max_len + 1):
        first_code[length] = code
        first_index[length] = index
        code = (code + per_length[length]) << 1
        index += per_length[length]
    used = _canonical_decode(buf, nbits, count, first_code, first_index, per_length, sorted_syms, out)
    if used < 0:
        raise CorruptStream("Huffman stream ended early or holds an invalid code")
    return out


def shannon_entropy(codes) -> float:
    _, counts = np.unique(np.asarray(codes).reshape(-1), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


# ---------------------------------------------------------------------------
# embedded coding


def top_exponent(max_abs: float) -> int:
    """floor(log2(max_abs)): exponent of the leading plane."""
    _, e = math.frexp(max_abs)
    return e - 1


def coefficient_bound(eb_abs: float, ndim: int) -> float:
    """Per-coefficient truncation budget that keeps pointwise error <= eb_abs.

    Every column of the transform matrix has absolute sum <= 2, so a
    coefficient error of at most ``eb / 2^n`` maps to at most ``eb`` per point.
    """
    return eb_abs / float(2**ndim)


def planes_for(e_max, eb_abs: float, max_abs=None):
    """Number of planes kept so truncation stays under ``eb_abs``.

    When the block's largest magnitude is known and already within the
    bound, nothing needs to be sent.
    """
    if not eb_abs > 0:
        raise InvalidBound(f"embedded coding needs a positive bound, got {eb_abs}")
    cut = math.floor(math.log2(eb_abs))
    planes = np.clip(np.asarray(e_max) - cut + 1, 0, Q_PLANES)
    if max_abs is not None:
        planes = np.where(np.asarray(max_abs) <= eb_abs, 0, planes)
    return planes


def fixed_point(coeffs: np.ndarray, e_max, planes):
    """Truncated magnitudes (in units of the cut plane) and sign bits."""
    c = np.asarray(coeffs, dtype=np.float64)
    e = np.asarray(e_max, dtype=np.int64)
    p = np.asarray(planes, dtype=np.int64)
    shape = e.shape + (1,) * (c.ndim - e.ndim)
    ulp_exp = (e - p + 1).reshape(shape)
    mags = np.floor(np.ldexp(np.abs(c), -ulp_exp))
    mags = np.minimum(mags, np.ldexp(1.0, p.reshape(shape)) - 1)
    return mags.astype(np.uint64), (c < 0).astype(np.uint8)


def from_fixed_point(mags: np.ndarray, signs: np.ndarray, e_max, planes) -> np.ndarray:
    """Half-ulp reconstruction at the cut plane; zero stays zero."""
    e = np.asarray(e_max, dtype=np.int64)
    p = np.asarray(planes, dtype=np.int64)
    shape = e.shape + (1,) * (mags.ndim - e.ndim)
    ulp_exp = (e - p + 1).reshape(shape)
    m = mags.astype(np.float64)
    val = np.where(m > 0, np.ldexp(m + 0.5, ulp_exp), 0.0)
    return np.where(signs.astype(bool), -val, val)


def significant_bits(coeff, e_max: int, planes: int | None = None):
    """Count of significant bits of an aligned coefficient (0 for zero).

    With ``planes`` given, the count runs from the coefficient's leading one
    down to the cut plane, which is what the embedded coder spends on it.
    Without a cut, it runs down to the lowest nonzero bit of the
    full-precision fixed-point value.
    """
    c = np.atleast_1d(np.asarray(coeff, dtype=np.float64))
    cut = Q_PLANES if planes is None else planes
    mags, _ = fixed_point(c, np.int64(e_max), np.int64(cut))
    nsb = _bit_length(mags)
    if planes is None:
        nsb = nsb - _trailing_zeros(mags)
    return int(nsb[0]) if np.ndim(coeff) == 0 else nsb


def _trailing_zeros(mags: np.ndarray) -> np.ndarray:
    m = np.asarray(mags, dtype=np.uint64)
    low = m & (~m + np.uint64(1))
    return np.where(m > 0, _bit_length(low) - 1, 0)


def _bit_length(mags: np.ndarray) -> np.ndarray:
    m = np.asarray(mags, dtype=np.uint64)
    out = np.zeros(m.shape, dtype=np.int64)
    nz = m > 0
    out[nz] = np.floor(np.log2(m[nz].astype(np.float64))).astype(np.int64) + 1
    # log2 of values just below a power of two can round up
    fix = nz & (np.left_shift(np.uint64(1), (out - 1).clip(0).astype(np.uint64)) > m)
    out[fix] -= 1
    return out


@njit(cache=True, nogil=True)
def _ec_encode(mags, signs, planes, capacity):
    nblocks, size = mags.shape
    buf = np.zeros((capacity + 7) // 8, dtype=np.uint8)
    pos = 0
    sig = np.zeros(size, dtype=np.uint8)
    for b in range(nblocks):
        sig[:] = 0
        n = 0
        for k in range(planes[b] - 1, -1, -1):
            for j in range(n):
                bit = (mags[b, j] >> k) & 1
                pos = _put(buf, pos, bit)
                if bit and not sig[j]:
                    pos = _put(buf, pos, signs[b, j])
                    sig[j] = 1
            while n < size:
                anyone = 0
                for j in range(n, size):
                    if (mags[b, j] >> k) & 1:
                        anyone = 1
                        break
                pos = _put(buf, pos, anyone)
                if not anyone:
                    break
                while True:
                    bit = (mags[b, n] >> k) & 1
                    if n < size - 1:
                        pos = _put(buf, pos, bit)
                    n += 1
                    if bit:
                        pos = _put(buf, pos, signs[b, n - 1])
                        sig[n - 1] = 1
                        break
    return buf, pos


@njit(cache=True, nogil=True)
def _ec_decode(buf, nbits, planes, size, mags, signs):
    nblocks = planes.size
    pos = 0
    sig = np.zeros(size, dtype=np.uint8)
    for b in range(nblocks):
        sig[:] = 0
        n = 0
        for k in range(planes[b] - 1, -1, -1):
            for j in range(n):
                if pos >= nbits:
                    return -1
                bit = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                pos += 1
                if bit:
                    mags[b, j] |= np.uint64(1) << np.uint64(k)
                    if not sig[j]:
                        if pos >= nbits:
                            return -1
                        signs[b, j] = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                        pos += 1
                        sig[j] = 1
            while n < size:
                if pos >= nbits:
                    return -1
                anyone = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                pos += 1
                if not anyone:
                    break
                while True:
                    if n < size - 1:
                        if pos >= nbits:
                            return -1
                        bit = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                        pos += 1
                    else:
                        bit = 1
                    n += 1
                    if bit:
                        mags[b, n - 1] |= np.uint64(1) << np.uint64(k)
                        if pos >= nbits:
                            return -1
                        signs[b, n - 1] = (buf[pos >> 3] >> (7 - (pos & 7))) & 1
                        pos += 1
                        sig[n - 1] = 1
                        break
    return pos


def ec_encode_blocks(mags: np.ndarray, signs: np.ndarray, planes: np.ndarray) -> tuple[bytes, int]:
    """Bit-plane code a stack of blocks; coefficient columns in coding order."""
    mags = np.ascontiguousarray(mags, dtype=np.uint64)
    signs = np.ascontiguousarray(signs, dtype=np.uint8)
    planes = np.ascontiguousarray(planes, dtype=np.int64)
    size = mags.shape[1]
    capacity = int(planes.sum()) * (2 * size + 1) + size * planes.size
    buf, nbits = _ec_encode(mags, signs, planes, capacity)
    return buf[: (nbits + 7) // 8].tobytes(), int(nbits)


def ec_decode_blocks(bits, nbits: int, planes: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    buf = np.frombuffer(bytes(bits), dtype=np.uint8)
    if nbits > 8 * buf.size:
        raise CorruptStream("embedded stream shorter than declared")
    planes = np.ascontiguousarray(planes, dtype=np.int64)
    mags = np.zeros((planes.size, size), dtype=np.uint64)
    signs = np.zeros((planes.size, size), dtype=np.uint8)
    used = _ec_decode(buf, nbits, planes, size, mags, signs)
    if used < 0:
        raise CorruptStream("embedded stream ended early")
    return mags, signs


@dataclass(frozen=True)
class EcBlockStream:
    e_max: int
    planes_kept: int
    size: int
    nbits: int
    payload: bytes


def ec_encode_block(coeffs, e_max: int, eb_abs: float) -> EcBlockStream:
    """Embedded-code one block of coefficients (flat, in coding order)."""
    c = np.asarray(coeffs, dtype=np.float64).reshape(1, -1)
    planes = int(planes_for(e_max, eb_abs, np.abs(c).max()))
    mags, signs = fixed_point(c, np.array([e_max]), np.array([planes]))
    payload, nbits = ec_encode_blocks(mags, signs, np.array([planes]))
    return EcBlockStream(int(e_max), planes, c.shape[1], nbits, payload)


def ec_decode_block(stream: EcBlockStream) -> np.ndarray:
    planes = np.array([stream.planes_kept])
    mags, signs = ec_decode_blocks(stream.payload, stream.nbits, planes, stream.size)
    return from_fixed_point(mags, signs, np.array([stream.e_max]), planes)[0]
