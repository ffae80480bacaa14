"""Bit-exact codecs between code rows and little-endian uint16 word streams.

Each scheme has a fixed block: the smallest number of weights whose packed
form fills a whole number of 16-bit words. Inside a word bit 0 is the least
significant. A weight's *high segment* holds its most significant code bits;
the remaining low mantissa bits live in separate words, or, for shared
schemes, a single bit per group of ``k`` weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .schemes import QuantScheme, get_scheme

__all__ = [
    "Segment",
    "PackLayout",
    "layout_of",
    "padded_cols",
    "row_words",
    "payload_nbytes",
    "pack_rows",
    "unpack_rows",
    "pack_row",
    "unpack_row",
]


class Segment(NamedTuple):
    """``width`` code bits starting at code bit ``shift`` stored at ``word``/``offset``."""

    word: int
    offset: int
    width: int
    shift: int


@dataclass(frozen=True)
class PackLayout:
    scheme: QuantScheme
    block: int
    words_per_block: int
    segments: tuple[tuple[Segment, ...], ...]
    # (word, bit) of the shared LSB of each group; empty when k == 1
    shared: tuple[tuple[int, int], ...] = ()

    @property
    def k(self) -> int:
        return self.scheme.k

    def bit_owners(self) -> np.ndarray:
        """Map every packed bit to the weight owning it (-1 shared, -2 unassigned).

        Raises if two segments overlap.
        """
        owner = np.full((self.words_per_block, 16), -2, dtype=np.int64)
        for i, segs in enumerate(self.segments):
            for seg in segs:
                cells = owner[seg.word, seg.offset : seg.offset + seg.width]
                if cells.size != seg.width or np.any(cells != -2):
                    raise ValueError(f"segment {seg} of weight {i} overlaps or overflows")
                cells[:] = i
        for word, bit in self.shared:
            if owner[word, bit] != -2:
                raise ValueError(f"shared bit ({word}, {bit}) overlaps")
            owner[word, bit] = -1
        return owner


def _nibbles(block: int, shift: int) -> list[list[Segment]]:
    return [[Segment(i // 4, 4 * (i % 4), 4, shift)] for i in range(block)]


def _build(scheme: QuantScheme) -> PackLayout:
    name = scheme.name
    if name == "fp4-e2m1":
        return PackLayout(scheme, 16, 4, tuple(map(tuple, _nibbles(16, 0))))
    if name == "fp5-e2m2":
        segs = _nibbles(16, 1)
        for i in range(16):
            segs[i].append(Segment(4, i, 1, 0))
        return PackLayout(scheme, 16, 5, tuple(map(tuple, segs)))
    if name in ("fp6-e2m3", "fp6-e3m2"):
        segs = _nibbles(16, 2)
        for i in range(16):
            segs[i].append(Segment(4 + i // 8, 2 * (i % 8), 2, 0))
        return PackLayout(scheme, 16, 6, tuple(map(tuple, segs)))
    if name == "fp5.33-e2m3":
        segs = tuple((Segment(0, 5 * j, 5, 1),) for j in range(3))
        return PackLayout(scheme, 3, 1, segs, ((0, 15),))
    shared_word = {"fp4.25-e2m2": 16, "fp4.5-e2m2": 8, "fp4.33-e2m2": 12}.get(name)
    if shared_word is not None:
        block = 16 * scheme.k
        segs = tuple(map(tuple, _nibbles(block, 1)))
        return PackLayout(scheme, block, shared_word + 1, segs, tuple((shared_word, g) for g in range(16)))
    raise ValueError(f"no packing layout for scheme {name!r}")


@lru_cache(maxsize=None)
def _layout_cached(name: str) -> PackLayout:
    layout = _build(get_scheme(name))
    if layout.block * layout.scheme.bits_per_weight != layout.words_per_block * 16:
        raise AssertionError(f"layout for {name} does not fill whole words")
    return layout


def layout_of(scheme: str | QuantScheme) -> PackLayout:
    return _layout_cached(get_scheme(scheme).name)


def padded_cols(cols: int, layout: PackLayout) -> int:
    return -(-cols // layout.block) * layout.block


def row_words(cols: int, layout: PackLayout) -> int:
    """uint16 words per packed row holding ``cols`` logical columns."""
    return padded_cols(cols, layout) // layout.block * layout.words_per_block


def payload_nbytes(rows: int, cols: int, scheme: str | QuantScheme) -> int:
    return 2 * rows * row_words(cols, layout_of(scheme))


def pack_rows(codes: np.ndarray, layout: PackLayout) -> np.ndarray:
    """Pack a ``(rows, padded_cols)`` code matrix into ``(rows, words)`` uint16.

    For shared schemes every group's members must agree on their mantissa LSB.
    """
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError("expected a 2-D code matrix")
    rows, cols = codes.shape
    if cols % layout.block:
        raise ValueError(f"row length {cols} is not a multiple of block {layout.block}")
    nblocks = cols // layout.block
    c = codes.astype(np.uint32).reshape(rows, nblocks, layout.block)
    words = np.zeros((rows, nblocks, layout.words_per_block), dtype=np.uint32)
    for i, segs in enumerate(layout.segments):
        for seg in segs:
            words[:, :, seg.word] |= ((c[:, :, i] >> seg.shift) & ((1 << seg.width) - 1)) << seg.offset
    k = layout.k
    for g, (word, bit) in enumerate(layout.shared):
        lsb = c[:, :, g * k : (g + 1) * k] & 1
        if np.any(lsb != lsb[:, :, :1]):
            raise ValueError("inconsistent shared mantissa bit within a group")
        words[:, :, word] |= lsb[:, :, 0] << bit
    return words.reshape(rows, nblocks * layout.words_per_block).astype(np.uint16)


def unpack_rows(words: np.ndarray, layout: PackLayout, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`pack_rows`; returns ``(rows, padded_cols)`` uint8 codes.

    Each group's shared bit is written into the mantissa LSB of all members.
    """
    words = np.asarray(words)
    if words.ndim != 2:
        raise ValueError("expected a 2-D word matrix")
    rows, nwords = words.shape
    if nwords % layout.words_per_block:
        raise ValueError(f"{nwords} words is not a whole number of {layout.words_per_block}-word blocks")
    nblocks = nwords // layout.words_per_block
    if cols is not None and nblocks * layout.block != cols:
        raise ValueError(f"{nwords} words do not hold {cols} padded columns")
    w = words.astype(np.uint32).reshape(rows, nblocks, layout.words_per_block)
    codes = np.zeros((rows, nblocks, layout.block), dtype=np.uint32)
    for i, segs in enumerate(layout.segments):
        for seg in segs:
            codes[:, :, i] |= ((w[:, :, seg.word] >> seg.offset) & ((1 << seg.width) - 1)) << seg.shift
    k = layout.k
    for g, (word, bit) in enumerate(layout.shared):
        codes[:, :, g * k : (g + 1) * k] |= ((w[:, :, word] >> bit) & 1)[:, :, None]
    return codes.reshape(rows, nblocks * layout.block).astype(np.uint8)


def pack_row(codes: np.ndarray, layout: PackLayout) -> np.ndarray:
    return pack_rows(np.asarray(codes)[None, :], layout)[0]


def unpack_row(words: np.ndarray, layout: PackLayout, cols: int | None = None) -> np.ndarray:
    return unpack_rows(np.asarray(words)[None, :], layout, cols)[0]
