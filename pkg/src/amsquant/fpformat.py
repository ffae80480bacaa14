"""Parametric minifloat formats without Inf/NaN.

A code is laid out ``[sign | exponent | mantissa]`` from most to least
significant bit. The all-ones exponent is an ordinary binade, so every code
decodes to a finite value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "FloatFormat",
    "FORMATS",
    "get_format",
    "decode",
    "enumerate_values",
    "round_to_nearest",
    "round_to_nearest_array",
    "to_fp16_bits",
]


@dataclass(frozen=True)
class FloatFormat:
    """Minifloat with ``exp_bits`` exponent and ``man_bits`` mantissa bits.

    ``bias`` defaults to ``2**(exp_bits - 1) - 1``.
    """

    exp_bits: int
    man_bits: int
    bias: int | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.exp_bits <= 3:
            raise ValueError(f"exp_bits must be in [1, 3], got {self.exp_bits}")
        if not 0 <= self.man_bits <= 4:
            raise ValueError(f"man_bits must be in [0, 4], got {self.man_bits}")
        if 1 + self.exp_bits + self.man_bits > 8:
            raise ValueError("formats wider than 8 bits are not supported")
        if self.bias is None:
            object.__setattr__(self, "bias", (1 << (self.exp_bits - 1)) - 1)

    @property
    def name(self) -> str:
        return f"e{self.exp_bits}m{self.man_bits}"

    @property
    def width(self) -> int:
        return 1 + self.exp_bits + self.man_bits

    @property
    def n_codes(self) -> int:
        return 1 << self.width

    @property
    def sign_mask(self) -> int:
        return 1 << (self.exp_bits + self.man_bits)

    @cached_property
    def code_values(self) -> np.ndarray:
        """Decoded value of every raw code, indexed by code (float64, exact)."""
        values = np.array([decode(c, self) for c in range(self.n_codes)], dtype=np.float64)
        values.flags.writeable = False
        return values

    @cached_property
    def magnitudes(self) -> np.ndarray:
        """Non-negative grid; index ``i`` is the magnitude of code ``i``."""
        mags = self.code_values[: self.sign_mask].copy()
        mags.flags.writeable = False
        return mags

    @property
    def max_value(self) -> float:
        return float(self.magnitudes[-1])

    def __str__(self) -> str:
        return self.name


FORMATS: dict[str, FloatFormat] = {
    "e2m1": FloatFormat(2, 1),
    "e2m2": FloatFormat(2, 2),
    "e2m3": FloatFormat(2, 3),
    "e3m2": FloatFormat(3, 2),
}


def get_format(name: str) -> FloatFormat:
    try:
        return FORMATS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown format {name!r}; expected one of {sorted(FORMATS)}") from None


def decode(code: int, fmt: FloatFormat) -> float:
    """Real value of ``code`` under ``fmt``.

    Normal codes (exponent field ``E != 0``) decode to
    ``(-1)**S * 2**(E - bias) * (1 + M / 2**m)``, subnormals to
    ``(-1)**S * 2**(1 - bias) * (M / 2**m)``. The result is exact in float64.
    """
    if not 0 <= code < fmt.n_codes:
        raise ValueError(f"code {code} does not fit {fmt.name}")
    m = fmt.man_bits
    sign = code >> (fmt.exp_bits + m)
    exp = (code >> m) & ((1 << fmt.exp_bits) - 1)
    man = code & ((1 << m) - 1)
    if exp == 0:
        mag = (man / (1 << m)) * 2.0 ** (1 - fmt.bias)
    else:
        mag = (1.0 + man / (1 << m)) * 2.0 ** (exp - fmt.bias)
    return -mag if sign else mag


def enumerate_values(fmt: FloatFormat) -> list[tuple[float, int]]:
    """All distinct representable values, ascending, with their canonical code.

    ``-0`` is folded into ``+0``, so the list has ``n_codes - 1`` entries.
    """
    neg_zero = fmt.sign_mask
    pairs = [(decode(c, fmt), c) for c in range(fmt.n_codes) if c != neg_zero]
    pairs.sort()
    return pairs


def round_to_nearest_array(w: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Vectorised :func:`round_to_nearest`; returns ``uint8`` codes.

    Magnitudes beyond the largest value clamp to it. Exact midpoints go to the
    neighbour whose code is even (mantissa LSB 0). Decisions compare against
    the midpoint of adjacent grid values, which is exact in float64.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite weight")
    grid = fmt.magnitudes
    a = np.abs(w)
    hi = np.searchsorted(grid, a, side="left")
    hi = np.minimum(hi, grid.size - 1)
    lo = np.maximum(hi - 1, 0)
    mid = (grid[lo] + grid[hi]) * 0.5
    pick_hi = (a > mid) | ((a == mid) & (hi % 2 == 0))
    # exact grid hits land on ``hi`` via side="left"; keep them there
    pick_hi |= a == grid[hi]
    mag_code = np.where(pick_hi, hi, lo).astype(np.uint8)
    neg = (w < 0) & (mag_code != 0)
    return np.where(neg, mag_code | fmt.sign_mask, mag_code).astype(np.uint8)


def round_to_nearest(w: float, fmt: FloatFormat) -> int:
    """Canonical code of the representable value nearest to ``w``."""
    return int(round_to_nearest_array(np.array([w]), fmt)[0])


def to_fp16_bits(code: int, fmt: FloatFormat) -> int:
    """IEEE binary16 bit pattern holding exactly ``decode(code, fmt)``."""
    value = decode(code, fmt)
    bits = struct.unpack("<H", struct.pack("<e", value))[0]
    if struct.unpack("<e", struct.pack("<H", bits))[0] != value:
        raise ValueError(f"{value!r} is not representable in half precision")
    return bits
