"""Command-line interface.

Every command that writes files also writes a JSON sidecar holding the
fully resolved configuration; ``--config SIDECAR`` replays such a run.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input), 3 numeric or domain error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .metrics import (
    cost,
    design_metrics,
    epsilon_exact,
    generation_rate,
    min_entropy_closed,
    shannon_entropy_closed,
)
from .photon_models import model_to_spec, parse_model, sample_counts, timebin_pmf
from .quantumness import (
    DEFAULT_EPSILON,
    DIRECT_REL_TOL,
    FinalVerdict,
    Phase1Method,
    Verdict,
    two_fold,
)
from .qrng_sim import (
    QrngParams,
    iter_symbol_chunks,
    simulate_interval_comparison,
    symbols_to_bits,
)
from .randomness_tests import run_battery
from .seeding import chunk_seed

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DOMAIN = 0, 1, 2, 3


class DataError(Exception):
    """Unreadable or malformed input."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _dump_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _resolved_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _sidecar_path(out: str) -> Path:
    return Path(str(out) + ".json")


def _read_counts(path: Path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["count"]:
        raise DataError(f"{path}: expected a single 'count' header column")
    try:
        values = [float(r[0]) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: non-numeric count value") from exc
    if any(v < 0 or not math.isfinite(v) for v in values):
        raise DataError(f"{path}: counts must be finite and non-negative")
    return np.asarray(values)


def _write_counts(path: Path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("count\n")
        if np.issubdtype(values.dtype, np.integer):
            fh.write("\n".join(map(str, values.tolist())))
        else:
            fh.write("\n".join(repr(float(v)) for v in values))
        fh.write("\n")


def _params(args: argparse.Namespace) -> QrngParams:
    mu = args.mu
    if getattr(args, "load", None) is not None:
        mu = args.load / (args.cycle * args.efficiency)
    if mu is None:
        raise UsageError("give --mu or --load")
    return QrngParams(mu=mu, T=args.cycle, d=args.efficiency, N=args.bins,
                      delta_t=args.delta_t, seed=args.seed)


def _parse_grid(text: str) -> list:
    """``a,b,c`` | ``start:stop:num`` (linear) | ``log:start:stop:num``."""
    try:
        if text.startswith("log:"):
            lo, hi, num = text[4:].split(":")
            return np.geomspace(float(lo), float(hi), int(num)).tolist()
        if ":" in text:
            lo, hi, num = text.split(":")
            return np.linspace(float(lo), float(hi), int(num)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}") from exc


# ---------------------------------------------------------------------------
# commands


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"missing required option {name.replace('_', '-')}")


def cmd_generate_dataset(args) -> int:
    _require(args, "model", "out")
    model = parse_model(args.model)
    if args.samples < 1 or args.size < 2:
        raise UsageError("need --samples >= 1 and --size >= 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files, seeds = [], []
    width = max(4, len(str(args.samples - 1)))
    for i in range(args.samples):
        seed = chunk_seed(args.seed, i)
        values = sample_counts(model, args.size, seed)
        name = f"sample_{i:0{width}d}.csv"
        _write_counts(out / name, values)
        files.append(name)
        seeds.append(seed)
    manifest = {
        "model": model_to_spec(model),
        "samples": args.samples,
        "size": args.size,
        "seed": args.seed,
        "sample_seeds": seeds,
        "files": files,
        "config": _resolved_config(args),
    }
    _dump_json(manifest, str(out / "manifest.json"))
    return EXIT_OK


def _classify_one(path: Path, args) -> dict:
    report = two_fold(_read_counts(path), args.epsilon, args.method, args.lambda_known, args.rel_tol)
    return report.to_dict()


def cmd_classify(args) -> int:
    _require(args, "input")
    path = Path(args.input)
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text())
            files = [path.parent / f for f in manifest["files"]]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: not a dataset manifest ({exc})") from exc
        reports = [_classify_one(f, args) for f in files]
        close = [r for r in reports if r["phase1_verdict"] == Verdict.MEAN_VAR_CLOSE.value]
        accepted = sum(r["final"] == FinalVerdict.POISSONIAN.value for r in close)
        phase1 = {v.value: sum(r["phase1_verdict"] == v.value for r in reports) for v in Verdict}
        finals = {v.value: sum(r["final"] == v.value for r in reports) for v in FinalVerdict}
        result = {
            "manifest": str(path),
            "model": manifest.get("model"),
            "samples": len(reports),
            "phase1_method": Phase1Method.parse(args.method).value,
            "phase1_counts": phase1,
            "final_counts": finals,
            "phase1_close_rate": len(close) / len(reports),
            "phase2_accept_rate": accepted / len(close) if close else None,
            "phase2_reject_rate": 1.0 - accepted / len(close) if close else None,
            "confidence": 1.0 - args.epsilon,
        }
        if args.per_sample:
            result["reports"] = reports
    else:
        result = _classify_one(path, args)
    _dump_json(result, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    _require(args, "out")
    params = _params(args)
    width = params.bits_per_symbol
    if args.bit_count is not None:
        n_symbols = -(-args.bit_count // width)
    else:
        n_symbols = args.symbols
    if n_symbols is None or n_symbols < 1:
        raise UsageError("give --symbols or --bit-count (>= 1)")
    out = Path(args.out)
    stats = {"params": params.to_dict(), "seed": params.seed, "architecture": args.architecture}
    if args.architecture == "interval":
        if args.format != "bits":
            raise UsageError("interval architecture emits bits only")
        n_bits = args.bit_count if args.bit_count is not None else n_symbols
        stream = simulate_interval_comparison(params, n_bits)
        out.write_bytes(stream.to_bytes())
        stats.update(bit_count=stream.bit_count, cycles_total=None, cycles_empty=None)
    else:
        cycles = 0
        with open(out, "wb") as fh:
            if args.format == "csv":
                fh.write(b"symbol\n")
            for bins, c in iter_symbol_chunks(params, n_symbols, args.architecture, args.mode):
                cycles += c
                if args.format == "csv":
                    fh.write(("\n".join(map(str, bins.tolist())) + "\n").encode())
                else:
                    fh.write(symbols_to_bits(bins, params.N).to_bytes())
        stats.update(
            symbols=n_symbols,
            bit_count=n_symbols * width,
            cycles_total=cycles,
            cycles_empty=cycles - n_symbols,
            mode=args.mode,
        )
        if args.format == "bits" and (n_symbols * width) % 8:
            stats["note"] = "last byte zero-padded"
    stats["config"] = _resolved_config(args)
    _dump_json(stats, str(_sidecar_path(args.out)))
    return EXIT_OK


def cmd_metrics(args) -> int:
    params = _params(args)
    m = design_metrics(params.mu, params.T, params.d, params.N, params.delta_t, args.p_tol,
                       args.alpha, args.beta)
    out = m.to_dict()
    out["config"] = _resolved_config(args)
    _dump_json(out, args.out)
    return EXIT_OK


_SWEEP_FIELDS = ["mu", "T", "d", "x", "epsilon", "h_min", "h_shannon", "rate", "cost"]


def cmd_sweep(args) -> int:
    _require(args, "mu_grid")
    mus = _parse_grid(args.mu_grid)
    cycles = _parse_grid(args.cycle_grid)
    effs = _parse_grid(args.efficiency_grid)
    rows = []
    for mu in mus:
        for T in cycles:
            for d in effs:
                x = mu * T * d
                rows.append({
                    "mu": mu, "T": T, "d": d, "x": x,
                    "epsilon": epsilon_exact(timebin_pmf(args.bins, x)),
                    "h_min": min_entropy_closed(x, args.bins),
                    "h_shannon": shannon_entropy_closed(x, args.bins),
                    "rate": generation_rate(mu, T, d, args.bins),
                    "cost": cost(mu, d, args.alpha, args.beta),
                })
    if args.format == "json":
        _dump_json({"rows": rows, "config": _resolved_config(args)}, args.out)
        return EXIT_OK
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=_SWEEP_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.out not in (None, "-"):
        _dump_json({"config": _resolved_config(args)}, str(_sidecar_path(args.out)))
    return EXIT_OK


def _read_bits_file(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc


def cmd_test(args) -> int:
    _require(args, "input")
    data = _read_bits_file(args.input)
    report = run_battery(data, bit_count=args.bit_count, block_length=args.block_length)
    out = report.to_dict()
    out["input"] = args.input
    _dump_json(out, args.out)
    return EXIT_OK


def cmd_export(args) -> int:
    _require(args, "input")
    data = np.frombuffer(_read_bits_file(args.input), dtype=np.uint8)
    bits = np.unpackbits(data, count=args.bit_count)
    dest = sys.stdout.buffer if args.out in (None, "-") else open(args.out, "wb")
    try:
        if args.format == "ascii-bits":
            dest.write((bits + ord("0")).astype(np.uint8).tobytes())
        else:
            dest.write(np.packbits(bits).tobytes())
    finally:
        if dest is not sys.stdout.buffer:
            dest.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, help="expected photons per unit time")
    p.add_argument("--load", type=float, help="set mu so that mu*T*d equals this load")
    p.add_argument("--cycle", "-T", type=float, default=1.0, help="reference cycle T")
    p.add_argument("--efficiency", "-d", type=float, default=1.0, help="detection efficiency d")
    p.add_argument("--bins", "-N", type=int, default=256, help="bins per cycle (power of two)")
    p.add_argument("--delta-t", type=float, default=0.0, help="maximum timing error")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qrngstats", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--config", help="replay the configuration stored in a sidecar JSON")
        return p

    p = command("generate-dataset", cmd_generate_dataset, "write S count samples and a manifest")
    p.add_argument("--model", help="e.g. poisson:0.5, geometric:0.5, normal:0.5:0.5")
    p.add_argument("--samples", "-S", type=int, default=1)
    p.add_argument("--size", "-n", type=int, default=100_000)
    p.add_argument("--out", help="output directory")

    p = command("classify", cmd_classify, "two-fold classification of a count CSV or manifest")
    p.add_argument("input", nargs="?", help="count CSV or manifest.json")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--method", default=Phase1Method.VAR_INTERVAL.value,
                   help="mean-interval, var-interval, dispersion or direct")
    p.add_argument("--lambda-known", type=float, default=None)
    p.add_argument("--rel-tol", type=float, default=DIRECT_REL_TOL)
    p.add_argument("--per-sample", action="store_true", help="include every report for a manifest")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json"], default="json")

    p = command("simulate", cmd_simulate, "simulate a QRNG and write raw bits or symbols")
    _add_design_flags(p)
    p.add_argument("--architecture", choices=["external", "free", "interval"], default="external")
    p.add_argument("--mode", choices=["event", "pmf"], default="pmf")
    p.add_argument("--symbols", type=int)
    p.add_argument("--bit-count", type=int)
    p.add_argument("--format", choices=["bits", "csv"], default="bits")
    p.add_argument("--out")

    p = command("metrics", cmd_metrics, "print all design metrics of one design point")
    _add_design_flags(p)
    p.add_argument("--p-tol", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=1.0 / 20.0)
    p.add_argument("--beta", type=float, default=40.0)
    p.add_argument("--out")
    p.add_argument("--format", choices=["json"], default="json")

    p = command("sweep", cmd_sweep, "evaluate metrics over a mu x T x d grid")
    p.add_argument("--mu-grid", help="a,b,c | start:stop:num | log:start:stop:num")
    p.add_argument("--cycle-grid", default="1")
    p.add_argument("--efficiency-grid", default="1")
    p.add_argument("--bins", "-N", type=int, default=256)
    p.add_argument("--alpha", type=float, default=1.0 / 20.0)
    p.add_argument("--beta", type=float, default=40.0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")

    p = command("test", cmd_test, "run the randomness battery on a raw bit file")
    p.add_argument("input", nargs="?")
    p.add_argument("--bit-count", type=int)
    p.add_argument("--block-length", type=int, default=128)
    p.add_argument("--out")
    p.add_argument("--format", choices=["json"], default="json")

    p = command("export", cmd_export, "re-emit a raw bit file for external test suites")
    p.add_argument("input", nargs="?")
    p.add_argument("--bit-count", type=int)
    p.add_argument("--format", choices=["ascii-bits", "bits"], default="ascii-bits")
    p.add_argument("--out")
    return parser


def _apply_sidecar(parser: argparse.ArgumentParser, args: argparse.Namespace) -> argparse.Namespace:
    try:
        stored = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.config}: cannot read sidecar ({exc})") from exc
    config = stored.get("config", stored)
    if config.get("command") != args.command:
        raise UsageError(f"sidecar was written by {config.get('command')!r}, not {args.command!r}")
    func = args.func
    # explicit --out on the replay wins so a replay need not clobber the original
    out = args.out if getattr(args, "out", None) else config.get("out")
    merged = argparse.Namespace(**config)
    merged.func = func
    merged.config = args.config
    if hasattr(merged, "out"):
        merged.out = out
    return merged


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if args.config:
            args = _apply_sidecar(parser, args)
        return args.func(args)
    except UsageError as exc:
        print(f"qrngstats: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"qrngstats: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"qrngstats: numeric/domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
