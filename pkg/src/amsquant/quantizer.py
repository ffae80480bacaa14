"""Channel-wise round-to-nearest quantization and adaptive mantissa sharing."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_weights, effective_n_jobs
from .fpformat import FloatFormat, round_to_nearest_array
from .packing import PackLayout, layout_of, pack_rows, padded_cols, unpack_rows
from .schemes import QuantScheme, get_scheme

__all__ = [
    "CodeMatrix",
    "QuantizedTensor",
    "channel_scale",
    "channel_scales",
    "rtn_quantize",
    "group_errors",
    "ams_share",
    "force_shared_bit",
    "quantize_tensor",
]

_HALF_MAX = float(np.finfo(np.float16).max)
_HALF_TINY = 2.0**-24  # smallest positive binary16 subnormal

# rows per work item in quantize_tensor; bounds float64 temporaries
_ROW_CHUNK = 256


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Raw codes of shape ``(rows, padded_cols)`` plus sharing metadata.

    ``cols`` is the logical width; columns past it are padding.
    ``shared_bits`` has one entry per group of ``k`` columns when ``k > 1``.
    """

    codes: np.ndarray
    fmt: FloatFormat
    cols: int
    k: int = 1
    shared_bits: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def values(self) -> np.ndarray:
        """Unscaled decoded values (float64)."""
        return self.fmt.code_values[self.codes]


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """Packed weights: per-row half-precision scales and a uint16 payload."""

    scheme: QuantScheme
    rows: int
    cols: int
    padded_cols: int
    scales: np.ndarray  # float16, (rows,)
    payload: np.ndarray  # uint16, (rows, words per row)

    def __post_init__(self) -> None:
        layout = self.layout
        if self.padded_cols != padded_cols(self.cols, layout):
            raise ValueError(f"padded_cols {self.padded_cols} inconsistent with cols {self.cols}")
        expected = (self.rows, self.padded_cols // layout.block * layout.words_per_block)
        if self.payload.shape != expected:
            raise ValueError(f"payload shape {self.payload.shape}, expected {expected}")
        if self.scales.shape != (self.rows,):
            raise ValueError("one scale per row required")

    @property
    def layout(self) -> PackLayout:
        return layout_of(self.scheme)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def payload_nbytes(self) -> int:
        return self.payload.size * 2

    def payload_bytes(self) -> bytes:
        return self.payload.astype("<u2").tobytes()

    def codes(self) -> np.ndarray:
        """Unpack the payload to ``(rows, padded_cols)`` uint8 codes."""
        return unpack_rows(self.payload, self.layout, self.padded_cols)

    def identical(self, other: QuantizedTensor) -> bool:
        return (
            self.scheme == other.scheme
            and self.shape == other.shape
            and self.padded_cols == other.padded_cols
            and np.array_equal(self.scales.view(np.uint16), other.scales.view(np.uint16))
            and np.array_equal(self.payload, other.payload)
        )


def _half_scales(amax: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    raw = np.where(amax > 0, amax / fmt.max_value, 1.0)
    raw = np.clip(raw, _HALF_TINY, _HALF_MAX)
    return raw.astype(np.float16)


def channel_scale(row, fmt: FloatFormat) -> float:
    """``max(|row|) / M`` rounded to half precision; 1.0 for an all-zero row.

    ``M`` is the largest magnitude of ``fmt``. Scales outside the binary16
    range are clamped to it.
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    if row.size == 0:
        raise ValueError("empty channel")
    if not np.all(np.isfinite(row)):
        raise ValueError("non-finite weight")
    return float(_half_scales(np.array([np.max(np.abs(row))]), fmt)[0])


def channel_scales(weights: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Per-row half-precision scales of a 2-D matrix."""
    weights = check_weights(weights)
    return _half_scales(np.max(np.abs(weights), axis=1), fmt)


def rtn_quantize(weights: np.ndarray, fmt: FloatFormat) -> tuple[CodeMatrix, np.ndarray]:
    """Round every ``w / scale[row]`` to the nearest code of ``fmt``."""
    weights = check_weights(weights)
    scales = channel_scales(weights, fmt)
    codes = round_to_nearest_array(weights / scales.astype(np.float64)[:, None], fmt)
    return CodeMatrix(codes, fmt, weights.shape[1]), scales


def _canonical_zero(codes: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    return np.where(codes == fmt.sign_mask, 0, codes).astype(np.uint8)


def group_errors(
    codes: CodeMatrix, original: np.ndarray, scales: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Squared restoration error of every group for shared bit 0 and 1.

    Returns two ``(rows, padded_cols // k)`` float64 arrays. Members past the
    logical width contribute nothing. Members are summed in column order.
    """
    c = codes.codes
    rows, width = c.shape
    if k < 1 or width % k:
        raise ValueError(f"group size {k} does not divide padded width {width}")
    original = np.asarray(original, dtype=np.float64)
    if original.shape[0] != rows or original.shape[1] < codes.cols:
        raise ValueError("original weights do not match the code matrix")
    w = np.zeros((rows, width))
    w[:, : codes.cols] = original[:, : codes.cols]
    valid = np.arange(width) < codes.cols
    s = scales.astype(np.float64)[:, None]
    table = codes.fmt.code_values
    errs = []
    for bit in (0, 1):
        cand = (c & 0xFE) | bit
        e = np.where(valid, (table[cand] * s - w) ** 2, 0.0).reshape(rows, width // k, k)
        total = e[:, :, 0].copy()
        for j in range(1, k):
            total += e[:, :, j]
        errs.append(total)
    return errs[0], errs[1]


def ams_share(codes: CodeMatrix, original: np.ndarray, scales: np.ndarray, k: int) -> CodeMatrix:
    """Pick one mantissa LSB per group of ``k`` columns by minimum squared error.

    Every member's LSB is overwritten with the winning bit; ties pick 0. A
    code whose magnitude becomes zero is canonicalised to +0.
    """
    if codes.k != 1:
        raise ValueError("ams_share expects unshared RTN codes")
    if codes.fmt.man_bits < 1:
        raise ValueError("format has no mantissa bit to share")
    e0, e1 = group_errors(codes, original, scales, k)
    bits = (e1 < e0).astype(np.uint8)
    new = (codes.codes & 0xFE) | np.repeat(bits, k, axis=1)
    return CodeMatrix(_canonical_zero(new, codes.fmt), codes.fmt, codes.cols, k, bits)


def force_shared_bit(codes: CodeMatrix, k: int, bit: int) -> CodeMatrix:
    """Set every group's shared bit to ``bit`` regardless of error."""
    rows, width = codes.shape
    if width % k:
        raise ValueError(f"group size {k} does not divide padded width {width}")
    new = (codes.codes & 0xFE) | bit
    bits = np.full((rows, width // k), bit, dtype=np.uint8)
    return CodeMatrix(_canonical_zero(new, codes.fmt), codes.fmt, codes.cols, k, bits)


def _quantize_chunk(w: np.ndarray, scheme: QuantScheme, layout: PackLayout, width: int):
    padded = np.zeros((w.shape[0], width))
    padded[:, : w.shape[1]] = w
    cm, scales = rtn_quantize(padded, scheme.base_format)
    cm = CodeMatrix(cm.codes, cm.fmt, w.shape[1])
    if scheme.shared:
        cm = ams_share(cm, padded, scales, scheme.k)
    return scales, pack_rows(cm.codes, layout)


def quantize_tensor(weights: np.ndarray, scheme: str | QuantScheme, n_jobs: int | None = None) -> QuantizedTensor:
    """Pad, RTN-quantize, share mantissa LSBs (if ``k > 1``) and pack.

    Rows are processed independently, so the result does not depend on
    ``n_jobs``.
    """
    scheme = get_scheme(scheme)
    weights = check_weights(weights)
    rows, cols = weights.shape
    layout = layout_of(scheme)
    width = padded_cols(cols, layout)
    starts = range(0, rows, _ROW_CHUNK)

    def work(start: int):
        return _quantize_chunk(weights[start : start + _ROW_CHUNK], scheme, layout, width)

    jobs = effective_n_jobs(n_jobs)
    if jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    scales = np.concatenate([p[0] for p in parts]).astype(np.float16)
    payload = np.concatenate([p[1] for p in parts], axis=0)
    return QuantizedTensor(scheme, rows, cols, width, scales, payload)
