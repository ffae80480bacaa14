"""Restoration of packed weights to half precision and dequantize-GEMV.

Two restoration paths exist. The lookup table (one binary16 pattern per code,
built from :func:`~amsquant.fpformat.to_fp16_bits`) is normative; the shift/
and/or path rebuilds the same patterns arithmetically and must agree with it
on every code.

Both GEMV variants accumulate in float32, one input column at a time in
ascending order, so they are bitwise comparable.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ._validation import check_activations, effective_n_jobs
from .fpformat import FloatFormat, to_fp16_bits
from .packing import PackLayout, layout_of, padded_cols, payload_nbytes, unpack_rows
from .quantizer import QuantizedTensor, quantize_tensor
from .schemes import QuantScheme, get_scheme

__all__ = [
    "RestoreTable",
    "restore_table",
    "restore_bits_fast",
    "restore_bits_table",
    "restore_block",
    "restore_half",
    "dequantize",
    "gemv",
    "gemv_reference",
    "dense_gemv",
    "BenchReport",
    "traffic_report",
    "bench",
    "BENCH_PRESETS",
]

BENCH_PRESETS: dict[str, tuple[int, int]] = {
    "qwen3-4b": (2560, 9728),
    "qwen2.5-7b": (3584, 18944),
    "qwen3-32b": (5120, 25600),
}

_HALF_BIAS = 15
_HALF_MAN = 10


@dataclass(frozen=True, eq=False)
class RestoreTable:
    fmt: FloatFormat
    bits: np.ndarray  # uint16, indexed by code

    def __call__(self, codes: np.ndarray) -> np.ndarray:
        return self.bits[codes]


@lru_cache(maxsize=None)
def restore_table(fmt: FloatFormat) -> RestoreTable:
    bits = np.array([to_fp16_bits(c, fmt) for c in range(fmt.n_codes)], dtype=np.uint16)
    bits.flags.writeable = False
    return RestoreTable(fmt, bits)


def restore_bits_table(codes: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    return restore_table(fmt)(np.asarray(codes))


def restore_bits_fast(codes: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Binary16 patterns for ``codes`` using shifts, masks and ors only.

    Normal codes rebias the exponent by ``15 - bias`` and left-align the
    mantissa. Subnormal codes are normalised by shifting the mantissa up until
    the implicit bit appears, decrementing the exponent once per shift.
    """
    m = fmt.man_bits
    c = np.asarray(codes).astype(np.int32)
    sign = (c >> (fmt.exp_bits + m)) & 1
    exp = (c >> m) & ((1 << fmt.exp_bits) - 1)
    man = c & ((1 << m) - 1)

    sub = exp == 0
    nonzero = (exp | man) != 0
    # subnormals behave like exponent 1 without the implicit bit
    exp = np.where(sub, 1, exp)
    implicit = 1 << m
    for _ in range(m):
        need = sub & nonzero & ((man & implicit) == 0)
        man = np.where(need, man << 1, man)
        exp = np.where(need, exp - 1, exp)
    man &= implicit - 1

    body = ((exp + (_HALF_BIAS - fmt.bias)) << _HALF_MAN) | (man << (_HALF_MAN - m))
    out = (sign << 15) | np.where(nonzero, body, 0)
    return out.astype(np.uint16)


def restore_block(words: np.ndarray, layout: PackLayout, fast: bool = True) -> np.ndarray:
    """Restore one packing block (``words_per_block`` words) to binary16 patterns."""
    words = np.asarray(words, dtype=np.uint16).reshape(1, -1)
    if words.shape[1] != layout.words_per_block:
        raise ValueError(f"a {layout.scheme.name} block has {layout.words_per_block} words")
    codes = unpack_rows(words, layout)[0]
    fmt = layout.scheme.base_format
    return restore_bits_fast(codes, fmt) if fast else restore_bits_table(codes, fmt)


def restore_half(qt: QuantizedTensor) -> np.ndarray:
    """Unscaled ``(rows, padded_cols)`` float16 weights; padding columns are 0."""
    halves = restore_bits_table(qt.codes(), qt.scheme.base_format).view(np.float16)
    halves[:, qt.cols :] = 0
    return halves


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    """Dense ``(rows, cols)`` float32 weights, ``restore(code) * scale``."""
    halves = restore_half(qt)[:, : qt.cols].astype(np.float32)
    return halves * qt.scales.astype(np.float32)[:, None]


def _accumulate(acc: np.ndarray, ws: np.ndarray, x32: np.ndarray, start: int, stop: int) -> None:
    # acc: (batch, rows); ws: (rows, n) scaled weights for columns start..stop
    for j, i in enumerate(range(start, stop)):
        acc += ws[:, j][None, :] * x32[:, i][:, None]


def _row_split(rows: int, n_jobs: int | None) -> list[tuple[int, int]]:
    jobs = max(1, min(effective_n_jobs(n_jobs), rows))
    bounds = np.linspace(0, rows, jobs + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_rows(fn, rows: int, n_jobs: int | None) -> np.ndarray:
    spans = _row_split(rows, n_jobs)
    if len(spans) > 1:
        with ThreadPoolExecutor(len(spans)) as pool:
            parts = list(pool.map(lambda span: fn(*span), spans))
    else:
        parts = [fn(*spans[0])]
    return np.concatenate(parts, axis=1)


def gemv(qt: QuantizedTensor, x, n_jobs: int | None = None) -> np.ndarray:
    """Fused dequantize-GEMV: ``(batch, cols)`` half activations to ``(batch, rows)`` halves.

    Each packing block is read once, stitched, restored with the bit-op path,
    scaled and folded into the float32 accumulators before the next block.
    """
    x32 = check_activations(x, qt.cols).astype(np.float32)
    layout = qt.layout
    fmt = qt.scheme.base_format
    nblocks = qt.padded_cols // layout.block
    words = qt.payload.reshape(qt.rows, nblocks, layout.words_per_block)
    scales = qt.scales.astype(np.float32)

    def run(r0: int, r1: int) -> np.ndarray:
        acc = np.zeros((x32.shape[0], r1 - r0), dtype=np.float32)
        s = scales[r0:r1, None]
        for b in range(nblocks):
            start = b * layout.block
            stop = min(start + layout.block, qt.cols)
            if stop <= start:
                break
            codes = unpack_rows(words[r0:r1, b, :], layout)
            ws = restore_bits_fast(codes, fmt).view(np.float16).astype(np.float32) * s
            _accumulate(acc, ws, x32, start, stop)
        return acc

    return _run_rows(run, qt.rows, n_jobs).astype(np.float16)


def gemv_reference(qt: QuantizedTensor, x) -> np.ndarray:
    """Unpack the whole tensor through the lookup table, then accumulate."""
    x32 = check_activations(x, qt.cols).astype(np.float32)
    ws = restore_half(qt).astype(np.float32) * qt.scales.astype(np.float32)[:, None]
    acc = np.zeros((x32.shape[0], qt.rows), dtype=np.float32)
    _accumulate(acc, ws, x32, 0, qt.cols)
    return acc.astype(np.float16)


def dense_gemv(weights: np.ndarray, x, n_jobs: int | None = None) -> np.ndarray:
    """Half-precision dense baseline with the same accumulation order."""
    w32 = np.asarray(weights, dtype=np.float16).astype(np.float32)
    x32 = check_activations(x, w32.shape[1]).astype(np.float32)

    def run(r0: int, r1: int) -> np.ndarray:
        acc = np.zeros((x32.shape[0], r1 - r0), dtype=np.float32)
        _accumulate(acc, w32[r0:r1], x32, 0, w32.shape[1])
        return acc

    return _run_rows(run, w32.shape[0], n_jobs).astype(np.float16)


@dataclass
class BenchReport:
    scheme: str
    rows: int
    cols: int
    padded_cols: int
    batch: int
    median_ns: int | None
    fp16_median_ns: int | None
    payload_bytes: int
    fp16_bytes: int
    traffic_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def traffic_report(rows: int, cols: int, scheme: str | QuantScheme, batch: int = 1) -> BenchReport:
    """Weight bytes moved by the packed kernel versus a dense binary16 matrix."""
    scheme = get_scheme(scheme)
    payload = payload_nbytes(rows, cols, scheme)
    dense = 2 * rows * cols
    return BenchReport(
        scheme=scheme.name,
        rows=rows,
        cols=cols,
        padded_cols=padded_cols(cols, layout_of(scheme)),
        batch=batch,
        median_ns=None,
        fp16_median_ns=None,
        payload_bytes=payload,
        fp16_bytes=dense,
        traffic_ratio=dense / payload,
    )


def _median_ns(fn, repetitions: int) -> int:
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples))


def bench(
    rows: int,
    cols: int,
    scheme: str | QuantScheme,
    batches: Sequence[int] = (1, 2, 4, 8, 16, 32),
    repetitions: int = 3,
    seed: int = 0,
    n_jobs: int | None = None,
    verify: bool = False,
) -> list[BenchReport]:
    """Time the fused GEMV against the dense half-precision baseline.

    Timings are informational; only the byte counts are meaningful across
    machines. With ``verify`` each batch is also checked against
    :func:`gemv_reference`.
    """
    scheme = get_scheme(scheme)
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal((rows, cols), dtype=np.float32)
    qt = quantize_tensor(weights, scheme, n_jobs=n_jobs)
    dense = weights.astype(np.float16)
    reports = []
    for batch in batches:
        x = rng.standard_normal((batch, cols), dtype=np.float32).astype(np.float16)
        if verify and not np.array_equal(
            gemv(qt, x, n_jobs).view(np.uint16), gemv_reference(qt, x).view(np.uint16)
        ):
            raise AssertionError(f"fused gemv disagrees with reference at batch {batch}")
        report = traffic_report(rows, cols, scheme, batch)
        report.median_ns = _median_ns(lambda: gemv(qt, x, n_jobs), repetitions)
        report.fp16_median_ns = _median_ns(lambda: dense_gemv(dense, x, n_jobs), repetitions)
        reports.append(report)
    return reports
