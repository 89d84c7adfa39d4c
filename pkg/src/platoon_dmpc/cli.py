"""Command-line entry point: ``platoon-dmpc <command> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np
import yaml

from . import checks, markov, riccati
from .config import PRESETS, ConfigError, ScenarioConfig, preset
from .dynamics import A_CT
from .export import export
from .sim import SimulationError, compute_moe, run, string_stability_check

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_matrix(path) -> np.ndarray:
    """Read a square matrix: YAML nested lists, or rows of numbers split by
    whitespace or commas (``#`` starts a comment)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    rows = None
    if text.lstrip().startswith("["):
        try:
            rows = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise UsageError(f"{path}: not a valid matrix ({exc})") from exc
    else:
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.replace(",", " ").split())
    if not rows or not all(isinstance(r, list) for r in rows):
        raise UsageError(f"{path}: expected a non-empty list of rows")
    n = len(rows)
    out = np.zeros((n, n))
    for r, row in enumerate(rows, 1):
        if len(row) != n:
            raise UsageError(f"{path}: row {r} has {len(row)} entries, expected {n} (matrix must be square)")
        for c, cell in enumerate(row, 1):
            try:
                val = float(cell)
            except (TypeError, ValueError):
                raise UsageError(f"{path}: cell ({r},{c}) = {cell!r} is not a number") from None
            if not np.isfinite(val):
                raise UsageError(f"{path}: cell ({r},{c}) = {cell!r} is not finite")
            out[r - 1, c - 1] = val
    return out


def _load_config(name) -> ScenarioConfig:
    if name is None:
        raise UsageError("--config is required (a YAML file or a preset name such as reference)")
    if not Path(name).exists() and name not in PRESETS:
        raise UsageError(f"config {name!r} is neither a file nor a known preset")
    try:
        return ScenarioConfig.load(name)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _prepare_out(out, force: bool) -> Path:
    path = Path(out)
    occupied = any(path.iterdir()) if path.is_dir() else path.exists()
    if occupied:
        if not force:
            raise UsageError(f"output {path} already exists; pass --force to overwrite")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    return path


def _moe_table(report) -> str:
    head = f"{'MPE (m)':>10} {'MVE (m/s)':>10} {'APE (m)':>10} {'AVE (m/s)':>10}"
    row = f"{report.MPE:10.4f} {report.MVE:10.4f} {report.APE:10.4f} {report.AVE:10.4f}"
    return head + "\n" + row


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    out = _prepare_out(args.out, args.force)
    try:
        result = run(cfg, args.seed)
    except SimulationError as exc:
        print(exc.describe(), file=sys.stderr)
        return EXIT_FAIL
    report = compute_moe(result, cfg.raw["eps_floor"])
    export(result, report, out)
    print(f"seed {result.seed}  config {result.config_hash}")
    print(_moe_table(report))
    ratios = " ".join(f"{r:.3f}" for r in report.string_ratios)
    print(f"string ratios (i = 2..N): {ratios}")
    print(f"files written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    cfg = _load_config(args.config)
    out = _prepare_out(args.out, args.force)
    out.mkdir(parents=True)
    rows, failed = [], []
    for seed in range(1, args.seeds + 1):
        try:
            result = run(cfg, seed)
        except SimulationError as exc:
            failed.append((seed, exc.describe()))
            print(f"seed {seed}: {exc.describe()}", file=sys.stderr)
            continue
        report = compute_moe(result, cfg.raw["eps_floor"])
        export(result, report, out / f"seed-{seed:03d}")
        verdicts = string_stability_check(result, cfg.raw["beta"])
        rows.append((seed, report, all(v.passed for v in verdicts)))
        print(f"seed {seed}: MPE {report.MPE:.4f} MVE {report.MVE:.4f} "
              f"APE {report.APE:.4f} AVE {report.AVE:.4f} string-stable {rows[-1][2]}")
    lines = [f"config_hash = {cfg.hash()}", f"seeds = {args.seeds}", f"failed_seeds = {len(failed)}"]
    if rows:
        for key in ("MPE", "MVE", "APE", "AVE"):
            vals = np.array([getattr(r, key) for _, r, _ in rows])
            lines.append(f"median_{key} = {np.median(vals)!r}")
            lines.append(f"mean_{key} = {np.mean(vals)!r}")
        lines.append(f"string_stable_fraction = {np.mean([ok for *_, ok in rows])!r}")
    for seed, msg in failed:
        lines.append(f"failure_seed_{seed} = {msg}")
    (out / "sweep_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_FAIL if failed else EXIT_OK


def cmd_verify(args) -> int:
    results = checks.run_suite(args.suite)
    for c in results:
        print(c.line())
    bad = sum(not c.passed for c in results)
    print(f"{len(results) - bad}/{len(results)} checks passed")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_invariant(args) -> int:
    mu = read_matrix(args.mu) if args.mu else markov.DEFAULT_MU
    bad = markov.generator_violations(mu)
    if bad:
        raise UsageError("; ".join(bad))
    try:
        pi = markov.invariant_distribution(mu)
    except markov.GeneratorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print("pi = [" + ", ".join(f"{p:.12g}" for p in pi) + "]")
    print(f"max |pi mu| = {np.abs(pi @ mu).max():.3e}")
    return EXIT_OK


def cmd_care(args) -> int:
    Q = read_matrix(args.q) if args.q else np.eye(3)
    if Q.shape != A_CT.shape:
        raise UsageError(f"Q must be {A_CT.shape[0]}x{A_CT.shape[0]} for the triple integrator, got {Q.shape}")
    try:
        P = riccati.solve_observer_care(A_CT, Q)
    except riccati.RiccatiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep = riccati.verify_care(P, A_CT, Q)
    with np.printoptions(precision=10, suppress=True):
        print("P =")
        print(P)
    print(f"residual = {rep.residual:.3e}")
    print(f"min eig P = {rep.min_eig_P:.6g}")
    return EXIT_OK if rep.ok() else EXIT_FAIL


def cmd_config(args) -> int:
    try:
        raw = preset(args.preset)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    print(ScenarioConfig(raw).dump(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="platoon-dmpc", description="Observer-based DMPC platoon simulator.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one seed and export the results")
    r.add_argument("--config", help="YAML config file or preset name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default="out")
    r.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="simulate seeds 1..K and aggregate")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--out", default="sweep")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run property and oracle suites")
    v.add_argument("--suite", choices=["observer", "markov", "riccati", "qp", "all"], default="all")
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("invariant", help="invariant distribution of a generator")
    i.add_argument("--mu", help="matrix file; defaults to the built-in four-mode generator")
    i.set_defaults(func=cmd_invariant)

    c = sub.add_parser("care", help="solve the observer Riccati equation")
    c.add_argument("--q", help="matrix file for Q; defaults to the identity")
    c.set_defaults(func=cmd_care)

    g = sub.add_parser("config", help="print a complete preset config")
    g.add_argument("--preset", default="reference")
    g.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: run, sweep, verify, invariant, care or config")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
