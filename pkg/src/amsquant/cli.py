"""Command line interface: ``amsquant {quantize,restore,analyze,bench,formats}``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from typing import IO, Iterator, Sequence

import numpy as np

from . import analysis, io, kernels
from .kernels import BENCH_PRESETS
from .packing import layout_of
from .quantizer import quantize_tensor
from .schemes import SCHEMES

log = logging.getLogger("amsquant")


@contextlib.contextmanager
def _text_out(path: str | None) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fp:
            yield fp


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def _scheme_list(text: str) -> list[str]:
    names = [v.strip().lower() for v in text.split(",") if v.strip()]
    unknown = [n for n in names if n not in SCHEMES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {unknown}; choose from {list(SCHEMES)}")
    return names


def cmd_quantize(args: argparse.Namespace) -> int:
    weights = io.load_npy(args.input)
    qt = quantize_tensor(weights, args.scheme, n_jobs=args.threads)
    io.save_amsq(args.output, qt)
    restored = kernels.dequantize(qt).astype(np.float64)
    summary = {
        "rows": qt.rows,
        "cols": qt.cols,
        "bits_per_weight": float(qt.scheme.bits_label),
        "payload_bytes": qt.payload_nbytes,
        "mse": float(np.mean((restored - weights.astype(np.float64)) ** 2)),
    }
    print(json.dumps(summary))
    return 0


def cmd_restore(args: argparse.Namespace) -> int:
    qt = io.load_amsq(args.input)
    dense = kernels.dequantize(qt)
    io.save_npy(args.output, dense.astype(np.float16 if args.dtype == "f2" else np.float32))
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    weights = io.load_npy(args.input)
    rows = analysis.error_report(weights, args.schemes)
    with _text_out(args.output) as fp:
        analysis.write_error_csv(rows, fp)
    if args.histogram:
        edges, counts = analysis.weight_histogram(weights, args.bins)
        with _text_out(args.histogram) as fp:
            analysis.write_histogram_csv(edges, counts, fp)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    if args.preset:
        rows, cols = BENCH_PRESETS[args.preset]
    elif args.rows and args.cols:
        rows, cols = args.rows, args.cols
    else:
        print("error: bench needs --preset or both --rows and --cols", file=sys.stderr)
        return 2
    log.info("benchmarking %s on (%d, %d)", args.scheme, rows, cols)
    reports = kernels.bench(
        rows,
        cols,
        args.scheme,
        batches=args.batches,
        repetitions=args.repetitions,
        seed=args.seed,
        n_jobs=args.threads,
        verify=args.verify,
    )
    with _text_out(args.output) as fp:
        json.dump([r.to_dict() for r in reports], fp, indent=2)
        fp.write("\n")
    return 0


def cmd_formats(args: argparse.Namespace) -> int:
    with _text_out(args.output) as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["scheme", "bits_per_weight", "base_format", "k", "block", "words_per_block"])
        for scheme in SCHEMES.values():
            layout = layout_of(scheme)
            writer.writerow(
                [scheme.name, scheme.bits_label, scheme.base_format.name, scheme.k, layout.block, layout.words_per_block]
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amsquant", description="Minifloat weight quantization with mantissa sharing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
    common.add_argument("--seed", type=int, default=0, help="seed for generated data")

    p = sub.add_parser("quantize", parents=[common], help="quantize an NPY weight matrix into an AMSQ container")
    p.add_argument("--input", required=True)
    p.add_argument("--scheme", required=True, choices=list(SCHEMES), type=str.lower)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("restore", parents=[common], help="restore an AMSQ container to a dense NPY matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dtype", choices=["f2", "f4"], default="f4")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("analyze", parents=[common], help="per-scheme quantization error as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--schemes", type=_scheme_list, default=list(SCHEMES), help="comma-separated scheme ids")
    p.add_argument("--output", default=None)
    p.add_argument("--histogram", default=None, help="also write a weight histogram CSV here")
    p.add_argument("--bins", type=int, default=64)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", parents=[common], help="time fused GEMV against a dense half-precision GEMV")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--preset", choices=list(BENCH_PRESETS))
    p.add_argument("--scheme", default="fp5.33-e2m3", choices=list(SCHEMES), type=str.lower)
    p.add_argument("--batches", type=_int_list, default=[1, 2, 4, 8, 16, 32])
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--verify", action="store_true", help="check fused output against the reference GEMV")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("formats", help="list the supported schemes")
    p.add_argument("--list", action="store_true", help="list scheme ids (default)")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_formats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except io.NpyParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
    except (io.ContainerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
