"""Quantization error reports and weight distribution statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple

import numpy as np

from ._validation import check_weights
from .fpformat import FloatFormat
from .kernels import dequantize
from .quantizer import CodeMatrix, ams_share, force_shared_bit, quantize_tensor, rtn_quantize
from .schemes import QuantScheme, get_scheme

__all__ = [
    "ErrorRow",
    "AmsGain",
    "error_report",
    "ams_gain",
    "weight_histogram",
    "write_error_csv",
    "write_histogram_csv",
]


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    bits_per_weight: str
    mse: float
    max_abs_err: float
    payload_bytes: int


class AmsGain(NamedTuple):
    adaptive: float
    forced_zero: float
    forced_one: float


def error_report(weights, schemes: Iterable[str | QuantScheme]) -> list[ErrorRow]:
    """Quantize with each scheme and measure restoration error on logical elements."""
    weights = check_weights(weights)
    rows = []
    for scheme in schemes:
        scheme = get_scheme(scheme)
        qt = quantize_tensor(weights, scheme)
        diff = dequantize(qt).astype(np.float64) - weights
        rows.append(
            ErrorRow(
                scheme=scheme.name,
                bits_per_weight=scheme.bits_label,
                mse=float(np.mean(diff**2)),
                max_abs_err=float(np.max(np.abs(diff))),
                payload_bytes=qt.payload_nbytes,
            )
        )
    return rows


def _mse(cm: CodeMatrix, scales: np.ndarray, weights: np.ndarray) -> float:
    restored = cm.values()[:, : cm.cols] * scales.astype(np.float64)[:, None]
    return float(np.mean((restored - weights) ** 2))


def ams_gain(weights, base_format: FloatFormat, k: int) -> AmsGain:
    """MSE of adaptive sharing against forcing every shared bit to 0 or to 1."""
    weights = check_weights(weights)
    rows, cols = weights.shape
    width = -(-cols // k) * k
    padded = np.zeros((rows, width))
    padded[:, :cols] = weights
    rtn, scales = rtn_quantize(padded, base_format)
    rtn = CodeMatrix(rtn.codes, base_format, cols)
    return AmsGain(
        adaptive=_mse(ams_share(rtn, padded, scales, k), scales, weights),
        forced_zero=_mse(force_shared_bit(rtn, k, 0), scales, weights),
        forced_one=_mse(force_shared_bit(rtn, k, 1), scales, weights),
    )


def weight_histogram(weights, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram over ``[min, max]``; returns ``(edges, counts)``."""
    values = np.asarray(weights, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty input")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


def write_error_csv(rows: Iterable[ErrorRow], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["scheme", "bits_per_weight", "mse", "max_abs_err", "payload_bytes"])
    for r in rows:
        writer.writerow([r.scheme, r.bits_per_weight, repr(r.mse), repr(r.max_abs_err), r.payload_bytes])


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["bin_lo", "bin_hi", "count"])
    for lo, hi, n in zip(edges[:-1], edges[1:], counts):
        writer.writerow([repr(float(lo)), repr(float(hi)), int(n)])
