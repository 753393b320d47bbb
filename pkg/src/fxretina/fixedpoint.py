"""Signed fixed-point numbers with floor quantization and saturation.

Every datapath signal of the emulator is a two's-complement integer
mantissa ``raw`` interpreted as ``raw * 2**-frac_bits``.  Quantization
truncates toward negative infinity; results that leave the representable
range clamp to the nearest extreme and carry a ``saturated`` flag.

The exponential and the reciprocal used by the bipolar and ganglion stages
are table based (piecewise-linear interpolation between stored knots), so
the fixed-point path never calls a transcendental function at run time.
The table helpers below operate on plain integers and are shared with the
compiled kernels in :mod:`fxretina.kernels`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, total_ordering

import numpy as np

EXP_RANGE = 8            # e**-x is tabulated on [0, 8); larger inputs give 0
EXP_SEGMENT_SHIFT = 5    # 32 segments per unit -> 256 segments over [0, 8)
LUT_GUARD_BITS = 8       # extra fractional bits held by the exp table

RECIP_INDEX_BITS = 8     # mantissa bits selecting a reciprocal segment
RECIP_INTERP_BITS = 8    # mantissa bits used for interpolation
RECIP_SCALE_BITS = 22    # table stores 2**22 / m for m in [1, 2]
_RECIP_TOP_BITS = RECIP_INDEX_BITS + RECIP_INTERP_BITS


class FormatMismatchError(TypeError):
    """Raised when two operands do not share a fixed-point format."""


@dataclass(frozen=True)
class FixedPointFormat:
    """Word layout: ``total_bits`` including sign, ``frac_bits`` after the point."""

    total_bits: int = 19
    frac_bits: int = 10

    def __post_init__(self):
        if not 2 <= self.total_bits <= 64:
            raise ValueError(f"total_bits must be in [2, 64], got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits must be in [0, total_bits), got {self.frac_bits}"
            )

    @property
    def int_bits(self) -> int:
        """Integer bits excluding the sign bit."""
        return self.total_bits - 1 - self.frac_bits

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def lsb(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return math.ldexp(self.min_raw, -self.frac_bits)

    @property
    def max_value(self) -> float:
        return math.ldexp(self.max_raw, -self.frac_bits)

    def with_frac_bits(self, frac_bits: int) -> "FixedPointFormat":
        """Same integer width, different fractional width."""
        return FixedPointFormat(self.int_bits + 1 + frac_bits, frac_bits)


DEFAULT_FORMAT = FixedPointFormat()


@total_ordering
@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    fmt: FixedPointFormat = DEFAULT_FORMAT
    saturated: bool = False

    def __post_init__(self):
        if not self.fmt.min_raw <= self.raw <= self.fmt.max_raw:
            raise ValueError(f"raw mantissa {self.raw} does not fit {self.fmt}")

    @classmethod
    def max(cls, fmt: FixedPointFormat = DEFAULT_FORMAT) -> "FixedPointValue":
        return cls(fmt.max_raw, fmt)

    @classmethod
    def min(cls, fmt: FixedPointFormat = DEFAULT_FORMAT) -> "FixedPointValue":
        return cls(fmt.min_raw, fmt)

    def to_real(self) -> float:
        return math.ldexp(self.raw, -self.fmt.frac_bits)

    __float__ = to_real

    def __add__(self, other: "FixedPointValue") -> "FixedPointValue":
        return fxp_add(self, other)

    def __mul__(self, other: "FixedPointValue") -> "FixedPointValue":
        return fxp_mul(self, other)

    def __neg__(self) -> "FixedPointValue":
        return _saturating(-self.raw, self.fmt, self.saturated)

    def __sub__(self, other: "FixedPointValue") -> "FixedPointValue":
        return fxp_add(self, -other)

    def __eq__(self, other):
        if not isinstance(other, FixedPointValue):
            return NotImplemented
        return self.raw == other.raw and self.fmt == other.fmt

    def __hash__(self):
        return hash((self.raw, self.fmt))

    def __lt__(self, other: "FixedPointValue") -> bool:
        _check_same_format(self, other)
        return self.raw < other.raw

    def __repr__(self) -> str:
        flag = ", saturated" if self.saturated else ""
        return f"FixedPointValue({self.to_real()!r}, Q{self.fmt.int_bits}.{self.fmt.frac_bits}{flag})"


def _check_same_format(a: FixedPointValue, b: FixedPointValue) -> None:
    if a.fmt != b.fmt:
        raise FormatMismatchError(f"operands have different formats: {a.fmt} vs {b.fmt}")


def _saturating(raw: int, fmt: FixedPointFormat, inherited: bool = False) -> FixedPointValue:
    if raw > fmt.max_raw:
        return FixedPointValue(fmt.max_raw, fmt, True)
    if raw < fmt.min_raw:
        return FixedPointValue(fmt.min_raw, fmt, True)
    return FixedPointValue(raw, fmt, inherited)


def quantize(x: float, fmt: FixedPointFormat = DEFAULT_FORMAT) -> FixedPointValue:
    """Truncate ``x`` onto the grid of ``fmt``: ``floor(x * 2**frac) * 2**-frac``."""
    x = float(x)
    if math.isnan(x):
        raise ValueError("cannot quantize NaN")
    if math.isinf(x):
        return FixedPointValue(fmt.max_raw if x > 0 else fmt.min_raw, fmt, True)
    return _saturating(math.floor(math.ldexp(x, fmt.frac_bits)), fmt)


def quantize_real(x: float, fmt: FixedPointFormat = DEFAULT_FORMAT) -> float:
    return quantize(x, fmt).to_real()


def fxp_add(a: FixedPointValue, b: FixedPointValue) -> FixedPointValue:
    _check_same_format(a, b)
    return _saturating(a.raw + b.raw, a.fmt, a.saturated or b.saturated)


def fxp_mul(a: FixedPointValue, b: FixedPointValue) -> FixedPointValue:
    """Full-precision product floored back to ``frac_bits`` then saturated."""
    _check_same_format(a, b)
    return _saturating((a.raw * b.raw) >> a.fmt.frac_bits, a.fmt, a.saturated or b.saturated)


def fxp_exp_neg(x: FixedPointValue) -> FixedPointValue:
    """Table-interpolated ``e**-x`` for ``x >= 0``; zero from ``x >= 8`` on."""
    if x.raw < 0:
        raise ValueError(f"fxp_exp_neg needs a non-negative argument, got {x.to_real()}")
    table = exp_neg_table(x.fmt.frac_bits)
    return FixedPointValue(int(exp_neg_lookup(x.raw, table, x.fmt.frac_bits)), x.fmt, x.saturated)


def fxp_div(a: FixedPointValue, b: FixedPointValue) -> FixedPointValue:
    """``a / b`` through the reciprocal table; ``b`` must be positive."""
    _check_same_format(a, b)
    if b.raw <= 0:
        raise ValueError("fxp_div needs a positive divisor")
    f = a.fmt.frac_bits
    q = divide_lookup(a.raw, f, b.raw, f, f, reciprocal_table())
    return _saturating(int(q), a.fmt, a.saturated or b.saturated)


# --- tables -----------------------------------------------------------------


@lru_cache(maxsize=None)
def exp_neg_table(frac_bits: int) -> np.ndarray:
    """Knots ``floor(e**(-i/32) * 2**(frac+guard))`` for i = 0..256."""
    scale_bits = frac_bits + LUT_GUARD_BITS
    n = EXP_RANGE << EXP_SEGMENT_SHIFT
    knots = [math.floor(math.ldexp(math.exp(-i / (1 << EXP_SEGMENT_SHIFT)), scale_bits))
             for i in range(n + 1)]
    table = np.array(knots, dtype=np.int64)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def reciprocal_table() -> np.ndarray:
    """``floor(2**22 / m)`` for mantissas m = 1 + j/256, j = 0..256."""
    base = 1 << RECIP_INDEX_BITS
    table = np.array([(1 << (RECIP_SCALE_BITS + RECIP_INDEX_BITS)) // (base + j)
                      for j in range(base + 1)], dtype=np.int64)
    table.setflags(write=False)
    return table


def exp_neg_lookup(x_raw, table, frac_bits):
    """Integer core of :func:`fxp_exp_neg`; ``x_raw >= 0``."""
    if x_raw >= (EXP_RANGE << frac_bits):
        return 0
    pos = x_raw << EXP_SEGMENT_SHIFT
    i = pos >> frac_bits
    f = pos - (i << frac_bits)
    y = table[i] + (((table[i + 1] - table[i]) * f) >> frac_bits)
    return y >> LUT_GUARD_BITS


def divide_lookup(num, num_frac, den, out_frac, frac_bits, table):
    """Integer core of table division.

    ``num`` carries ``num_frac`` fractional bits, ``den`` (> 0) carries
    ``frac_bits``; the floored quotient is returned with ``out_frac`` bits.
    """
    k = 0
    v = den
    while v > 1:
        v >>= 1
        k += 1
    if k >= _RECIP_TOP_BITS:
        top = den >> (k - _RECIP_TOP_BITS)
    else:
        top = den << (_RECIP_TOP_BITS - k)
    i = (top >> RECIP_INTERP_BITS) - (1 << RECIP_INDEX_BITS)
    f = top & ((1 << RECIP_INTERP_BITS) - 1)
    r = table[i] + (((table[i + 1] - table[i]) * f) >> RECIP_INTERP_BITS)
    shift = out_frac + frac_bits - k - RECIP_SCALE_BITS - num_frac
    prod = num * r
    if shift >= 0:
        return prod << shift
    return prod >> (-shift)


# --- array helpers used by the streaming pipeline -----------------------------


def quantize_array(x, fmt: FixedPointFormat = DEFAULT_FORMAT) -> tuple[np.ndarray, int]:
    """Vectorised :func:`quantize`; returns raw int64 mantissas and the clamp count."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("cannot quantize NaN")
    scaled = np.floor(np.ldexp(x, fmt.frac_bits))
    lo, hi = fmt.min_raw, fmt.max_raw
    n_sat = int(np.count_nonzero((scaled < lo) | (scaled > hi)))
    raw = np.clip(scaled, lo, hi).astype(np.int64)
    return raw, n_sat


def to_real(raw, fmt: FixedPointFormat = DEFAULT_FORMAT) -> np.ndarray:
    return np.ldexp(np.asarray(raw, dtype=np.float64), -fmt.frac_bits)
