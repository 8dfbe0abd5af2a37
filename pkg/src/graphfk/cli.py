"""Command line front end: ``graphfk {validate,exact,mc,compare,sweep,kato} CONFIG [flags]``.

Exit codes: 0 success, 1 validation failure (or a failed comparison),
2 numeric failure, 3 usage error (bad flags, missing or malformed config).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_HBAR_GRID,
    golden_thompson_check,
    kato_functional,
    semiclassical_sweep,
    write_sweep_csv,
)
from .bundle import kato_decompose
from .config import ConfigError, ProblemConfig, build_config, read_raw, validate_config
from .errors import DomainError, NumericError
from .operator import (
    assemble,
    semigroup_kernel_exact,
    semigroup_trace,
    write_kernel_csv,
    write_trace_csv,
)
from .stochastic import DEFAULT_NMAX, KernelEstimate, fk_kernel_row

log = logging.getLogger("graphfk")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphfk", description="Covariant Schrodinger semigroups on weighted graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=["validate", "exact", "mc", "compare", "sweep", "kato"])
    p.add_argument("config", help="problem instance (JSON)")
    p.add_argument("--time", type=_floats, default=[1.0], help="time(s), comma separated")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--hbar", type=float, default=None, help="overrides the config value")
    p.add_argument("--hbar-grid", type=_floats, default=list(DEFAULT_HBAR_GRID))
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nmax", type=int, default=DEFAULT_NMAX)
    p.add_argument("--x", default=None, help="source vertex id")
    p.add_argument("--y", default=None, help="target vertex id (all vertices if omitted)")
    p.add_argument("--t-grid", type=_floats, default=[1.0, 0.1, 0.01, 0.001])
    p.add_argument("--out-dir", default=".")
    p.add_argument("--tolerance", type=float, default=4.0, help="z-score threshold for compare")
    p.add_argument("--workers", type=int, default=1, help="processes for the Monte Carlo engine")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sidecar(path: Path, cfg: ProblemConfig, command: str, args, seed=None) -> None:
    meta = {
        "command": command,
        "config_sha256": cfg.sha256,
        "version": __version__,
        "seed": seed,
        "report": path.name,
    }
    if command in ("exact", "mc", "compare"):
        meta["time"] = args.time
    if command in ("mc", "compare"):
        meta.update(paths=args.paths, nmax=args.nmax)
    if command == "sweep":
        meta.update(beta=args.beta, hbar_grid=args.hbar_grid)
    _dump(path.with_name(path.name + ".meta.json"), meta)


def _vertex(cfg: ProblemConfig, label) -> int:
    if label is None:
        raise UsageError("this command needs --x")
    try:
        return cfg.graph.index_of(label)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


def _targets(cfg: ProblemConfig, args) -> list[int]:
    return [_vertex(cfg, args.y)] if args.y is not None else list(cfg.graph.vertices())


def _hbar(cfg: ProblemConfig, args) -> float:
    return cfg.hbar if args.hbar is None else args.hbar


def compare_rows(kernel, estimates: dict[int, KernelEstimate], labels) -> list[dict]:
    """Per-entry z-scores ``|exact - mean| / stderr`` for each estimated block."""
    rows = []
    for y, est in sorted(estimates.items()):
        exact = kernel(est.x, y)
        mean, se = est.mean, est.stderr
        nu = est.rank
        for i in range(nu):
            for j in range(nu):
                diff = abs(exact[i, j] - mean[i, j])
                if se[i, j] > 0:
                    z = diff / se[i, j]
                else:
                    z = 0.0 if diff <= 1e-12 else float("inf")
                rows.append({
                    "x": labels[est.x], "y": labels[y], "i": i, "j": j,
                    "exact_re": float(exact[i, j].real), "exact_im": float(exact[i, j].imag),
                    "mean_re": float(mean[i, j].real), "mean_im": float(mean[i, j].imag),
                    "stderr": float(se[i, j]), "z": float(z),
                })
    return rows


def _run_mc(cfg, args, t):
    x = _vertex(cfg, args.x)
    if args.paths < 1 or args.nmax < 1:
        raise UsageError("--paths and --nmax must be positive")
    return fk_kernel_row(cfg.graph, cfg.connection, cfg.potential, _hbar(cfg, args), x, _targets(cfg, args),
                         t, args.paths, seed=args.seed, n_max=args.nmax, workers=args.workers)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw, digest = read_raw(args.config)
        if args.command == "validate":
            problems = validate_config(raw)
            print(json.dumps({"violations": [str(v) for v in problems]}, indent=2))
            return EXIT_INVALID if problems else EXIT_OK
        try:
            cfg = build_config(raw, digest)
        except DomainError as exc:
            print(f"invalid instance: {exc}", file=sys.stderr)
            return EXIT_INVALID
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _dispatch(cfg, args, out)
    except (ConfigError, UsageError) as exc:
        print(f"graphfk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"graphfk: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"graphfk: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _dispatch(cfg: ProblemConfig, args, out: Path) -> int:
    cmd = args.command
    hbar = _hbar(cfg, args)
    if cmd == "exact":
        if any(t < 0 for t in args.time):
            raise UsageError("--time must be nonnegative")
        H = assemble(cfg.graph, cfg.connection, cfg.potential, hbar)
        kernels = [semigroup_kernel_exact(H, t) for t in args.time]
        write_kernel_csv(out / "kernel.csv", kernels)
        write_trace_csv(out / "trace.csv", [(t, semigroup_trace(H, t)) for t in args.time])
        _sidecar(out / "kernel.csv", cfg, cmd, args)
        _sidecar(out / "trace.csv", cfg, cmd, args)
        log.info("wrote kernel.csv and trace.csv to %s", out)
        return EXIT_OK

    if cmd == "mc":
        if len(args.time) != 1 or args.time[0] <= 0:
            raise UsageError("mc needs a single positive --time")
        est = _run_mc(cfg, args, args.time[0])
        reports = [e.report(cfg.graph.labels) for _, e in sorted(est.items())]
        path = out / "mc_report.json"
        _dump(path, reports[0] if len(reports) == 1 else reports)
        _sidecar(path, cfg, cmd, args, seed=args.seed)
        return EXIT_OK

    if cmd == "compare":
        if len(args.time) != 1 or args.time[0] <= 0:
            raise UsageError("compare needs a single positive --time")
        t = args.time[0]
        est = _run_mc(cfg, args, t)
        K = semigroup_kernel_exact(assemble(cfg.graph, cfg.connection, cfg.potential, hbar), t)
        rows = compare_rows(K, est, cfg.graph.labels)
        path = out / "compare.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        _sidecar(path, cfg, cmd, args, seed=args.seed)
        zmax = max(r["z"] for r in rows)
        ok = zmax <= args.tolerance
        print(json.dumps({"max_z": zmax, "tolerance": args.tolerance, "pass": ok}))
        return EXIT_OK if ok else EXIT_INVALID

    if cmd == "sweep":
        if args.beta <= 0:
            raise UsageError("--beta must be positive")
        try:
            rows = semiclassical_sweep(cfg.graph, cfg.connection, cfg.potential, args.beta, args.hbar_grid)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
        write_sweep_csv(out / "sweep.csv", rows)
        _sidecar(out / "sweep.csv", cfg, cmd, args)
        gt = [{"beta": args.beta, "hbar": r.hbar, "quantum_trace": r.quantum_trace,
               "classical_bound": r.classical_trace, "holds": r.holds} for r in rows]
        if args.hbar is not None:
            q, c, holds = golden_thompson_check(cfg.graph, cfg.connection, cfg.potential, args.beta, args.hbar)
            gt = {"beta": args.beta, "hbar": args.hbar, "quantum_trace": q, "classical_bound": c, "holds": holds}
        _dump(out / "golden_thompson.json", gt)
        return EXIT_OK

    if cmd == "kato":
        if any(t <= 0 for t in args.t_grid):
            raise UsageError("--t-grid values must be positive")
        n = cfg.graph.n
        if cfg.potential is None:
            w = np.zeros(n)
        else:
            _, vminus = kato_decompose(cfg.potential)
            w = np.array([np.linalg.norm(vminus(x), 2) for x in range(n)])
        path = out / "kato.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "kato_vminus", "kato_one"])
            for t in args.t_grid:
                wr.writerow([repr(t), repr(kato_functional(cfg.graph, w, t)), repr(kato_functional(cfg.graph, np.ones(n), t))])
        _sidecar(path, cfg, cmd, args)
        return EXIT_OK
    raise UsageError(f"unknown command {cmd}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
