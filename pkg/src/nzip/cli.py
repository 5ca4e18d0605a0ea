"""Command-line front end: compress, decompress, verify, gen, bench.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 corrupt or
unreadable archive (or failed verification), 4 numeric failure inside the
models.  All commands are deterministic given their flags; compression
requires an explicit --seed so no entropy sneaks in from the clock.
"""

import argparse
import json
import sys
import time

from . import codec, synth, trainer
from .errors import CorruptArchive, NumericError, NzipError, UnsupportedVersion


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(message)


def _mode_config(args) -> codec.ModeConfig:
    return codec.ModeConfig(
        mode=args.mode,
        parts=args.parts,
        update_interval=args.update_interval,
        context=args.context,
        scaled=args.scaled_profile,
    )


def _train_plan(args) -> trainer.TrainPlan:
    return trainer.TrainPlan(epochs=args.epochs, seed=args.seed)


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _add_compress_flags(p: _Parser) -> None:
    p.add_argument("--mode", choices=("combined", "bootstrap"), default="combined")
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--context", type=int, default=64, metavar="K")
    p.add_argument("--parts", type=int, default=0, help="0 picks the mode default")
    p.add_argument("--update-interval", type=int, default=20)
    p.add_argument("--scaled-profile", action="store_true")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trace-hash", action="store_true")


def cmd_compress(args) -> int:
    data = _read(args.input)
    t0 = time.monotonic()
    if args.trace_hash:
        archive, trace = codec.compress_with_trace(
            data, _mode_config(args), plan=_train_plan(args), seed=args.seed
        )
    else:
        archive = codec.compress(
            data, _mode_config(args), plan=_train_plan(args), seed=args.seed
        )
    elapsed = time.monotonic() - t0
    _write(args.output, archive)
    bpc, share = codec.report_bpc(archive, len(data))
    print(
        "%s: %d -> %d bytes  bpc %.4f  model share %.1f%%  (%.1fs)"
        % (args.output, len(data), len(archive), bpc, 100 * share, elapsed)
    )
    if args.trace_hash:
        print("trace %s" % trace)
    return 0


def cmd_decompress(args) -> int:
    archive = _read(args.input)
    t0 = time.monotonic()
    if args.trace_hash:
        data, trace = codec.decompress_with_trace(archive)
    else:
        data = codec.decompress(archive)
    elapsed = time.monotonic() - t0
    _write(args.output, data)
    print(
        "%s: %d -> %d bytes  (%.1fs)"
        % (args.output, len(archive), len(data), elapsed)
    )
    if args.trace_hash:
        print("trace %s" % trace)
    return 0


def cmd_verify(args) -> int:
    """Compress and decompress in memory, then byte-compare."""
    data = _read(args.input)
    archive, h_enc = codec.compress_with_trace(
        data, _mode_config(args), plan=_train_plan(args), seed=args.seed
    )
    out, h_dec = codec.decompress_with_trace(archive)
    bpc, share = codec.report_bpc(archive, len(data))
    if out != data:
        print("verify %s: MISMATCH" % args.input)
        return 3
    if args.trace_hash and h_enc != h_dec:
        print("verify %s: trace hash mismatch" % args.input)
        return 3
    print(
        "verify %s: OK  bpc %.4f  model share %.1f%%" % (args.input, bpc, 100 * share)
    )
    if args.trace_hash:
        print("trace %s" % h_enc)
    return 0


def cmd_gen(args) -> int:
    spec = synth.SyntheticSpec(
        family=args.family, k=args.k, n=args.n, noise_p=args.noise, seed=args.seed
    )
    data = synth.generate(spec)
    _write(args.output, data)
    print(
        "%s: %d bytes of %s-%d (entropy rate %.5f bpc)"
        % (args.output, len(data), args.family, args.k, synth.entropy_rate(spec))
    )
    return 0


def _bench_row(path: str, mode_name: str, args) -> dict:
    data = _read(path)
    alphabet = len(set(data))
    cfg = codec.ModeConfig(
        mode=mode_name,
        parts=args.parts,
        update_interval=args.update_interval,
        context=args.context,
        scaled=args.scaled_profile,
    )
    timings = {}
    t0 = time.monotonic()
    archive = codec.compress(
        data, cfg, plan=_train_plan(args), seed=args.seed, timings=timings
    )
    encode_s = time.monotonic() - t0 - timings.get("train", 0.0)
    t0 = time.monotonic()
    out = codec.decompress(archive)
    decode_s = time.monotonic() - t0
    if out != data:
        raise CorruptArchive(f"round trip mismatch on {path}")
    bpc, share = codec.report_bpc(archive, len(data))
    mb = len(data) / 2**20 if data else 0.0
    per_mb = lambda s: round(s / 60.0 / mb, 4) if mb else 0.0
    return {
        "dataset": path,
        "length": len(data),
        "alphabet": alphabet,
        "mode": mode_name,
        "bpc": round(bpc, 6),
        "model_share_pct": round(100 * share, 2),
        "train_min_per_mb": per_mb(timings.get("train", 0.0)),
        "encode_min_per_mb": per_mb(encode_s),
        "decode_min_per_mb": per_mb(decode_s),
    }


# column name, header format, value format
_BENCH_COLUMNS = [
    ("dataset", "%-24s", "%-24s"),
    ("length", "%10s", "%10d"),
    ("alphabet", "%8s", "%8d"),
    ("mode", "%-10s", "%-10s"),
    ("bpc", "%10s", "%10.6f"),
    ("model_share_pct", "%15s", "%15.2f"),
    ("train_min_per_mb", "%16s", "%16.4f"),
    ("encode_min_per_mb", "%17s", "%17.4f"),
    ("decode_min_per_mb", "%17s", "%17.4f"),
]


def cmd_bench(args) -> int:
    """One row per (dataset, mode); table on stdout, records to --report.

    The table and the report are rendered from the same rounded values, so
    the two never disagree.
    """
    rows = []
    for path in args.datasets:
        for mode_name in args.modes.split(","):
            if mode_name not in ("combined", "bootstrap"):
                raise _UsageError(f"unknown mode {mode_name!r}")
            rows.append(_bench_row(path, mode_name, args))
    print("  ".join(hfmt % name for name, hfmt, _ in _BENCH_COLUMNS))
    for row in rows:
        print("  ".join(vfmt % row[name] for name, _, vfmt in _BENCH_COLUMNS))
    by_dataset = {}
    for row in rows:
        by_dataset.setdefault(row["dataset"], {})[row["mode"]] = row["bpc"]
    for path, modes in by_dataset.items():
        if "combined" in modes and "bootstrap" in modes:
            print(
                "improvement %s: %.6f bpc (bootstrap - combined)"
                % (path, modes["bootstrap"] - modes["combined"])
            )
    if args.report:
        with open(args.report, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="nzip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a file")
    p.add_argument("input")
    p.add_argument("output")
    _add_compress_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decompress an archive")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--trace-hash", action="store_true")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("verify", help="round-trip a file in memory")
    p.add_argument("input")
    _add_compress_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("output")
    p.add_argument("--family", choices=("xor", "hmm"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="bpc/time report over datasets")
    p.add_argument("datasets", nargs="*")
    p.add_argument("--modes", default="combined,bootstrap")
    p.add_argument("--report", help="write line-delimited records here")
    _add_compress_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except (CorruptArchive, UnsupportedVersion, NzipError) as exc:
        print(f"archive error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
