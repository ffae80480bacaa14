"""Quantization schemes: a base minifloat plus a mantissa-sharing group size."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .fpformat import FORMATS, FloatFormat

__all__ = ["QuantScheme", "SCHEMES", "SCHEME_IDS", "get_scheme", "format_bits"]


def format_bits(bits: Fraction) -> str:
    """Render a bit-width with at most two decimals, truncating repetends."""
    hundredths = bits.numerator * 100 // bits.denominator
    whole, frac = divmod(hundredths, 100)
    if frac == 0:
        return str(whole)
    return f"{whole}.{frac:02d}".rstrip("0")


@dataclass(frozen=True)
class QuantScheme:
    """A base format whose mantissa LSB is shared by groups of ``k`` weights.

    ``k == 1`` means no sharing.
    """

    name: str
    base_format: FloatFormat
    k: int
    scheme_id: int

    def __post_init__(self) -> None:
        if self.k not in (1, 2, 3, 4):
            raise ValueError(f"group size must be 1..4, got {self.k}")
        if self.k > 1 and self.base_format.man_bits < 1:
            raise ValueError("mantissa sharing needs at least one mantissa bit")

    @property
    def shared(self) -> bool:
        return self.k > 1

    @property
    def bits_per_weight(self) -> Fraction:
        width = self.base_format.width
        if self.k == 1:
            return Fraction(width)
        return Fraction(width - 1) + Fraction(1, self.k)

    @property
    def bits_label(self) -> str:
        return format_bits(self.bits_per_weight)

    def __str__(self) -> str:
        return self.name


_TABLE = [
    ("fp4-e2m1", "e2m1", 1),
    ("fp5-e2m2", "e2m2", 1),
    ("fp6-e2m3", "e2m3", 1),
    ("fp6-e3m2", "e3m2", 1),
    ("fp4.25-e2m2", "e2m2", 4),
    ("fp4.33-e2m2", "e2m2", 3),
    ("fp4.5-e2m2", "e2m2", 2),
    ("fp5.33-e2m3", "e2m3", 3),
]

# insertion order == container scheme id
SCHEMES: dict[str, QuantScheme] = {
    name: QuantScheme(name, FORMATS[fmt], k, i) for i, (name, fmt, k) in enumerate(_TABLE)
}
SCHEME_IDS: dict[int, QuantScheme] = {s.scheme_id: s for s in SCHEMES.values()}

_ALIASES = {"fp5.3-e2m3": "fp5.33-e2m3", "fp4.3-e2m2": "fp4.33-e2m2"}


def get_scheme(scheme: str | QuantScheme) -> QuantScheme:
    if isinstance(scheme, QuantScheme):
        return scheme
    key = scheme.lower()
    key = _ALIASES.get(key, key)
    try:
        return SCHEMES[key]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {list(SCHEMES)}") from None
