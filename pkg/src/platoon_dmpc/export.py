"""
Plain-text result files.

``run.csv``
    long format, one value per line: ``time,vehicle,series,value``.
    Vehicle 0 is the leader (series ``p``, ``v``, ``a``). Followers carry
    ``p v a e_p e_v e_a theta_p theta_v theta_a kappa varrho`` at every grid
    time and ``u`` plus the controller diagnostics on every controller step
    (the final grid time has no input).
``modes.csv``
    ``time,mode``: the starting mode at t=0 and then every switch.
``summary.txt``
    ``key = value`` lines in a fixed order; vectors are space separated.

Floats are written with ``repr`` so files are byte-identical across runs
with the same inputs and round-trip exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .sim import MoeReport, SimResult, slack_free_fraction

RUN_HEADER = ("time", "vehicle", "series", "value")
STATE_SERIES = ("p", "v", "a")
FOLLOWER_SERIES = ("e_p", "e_v", "e_a", "theta_p", "theta_v", "theta_a", "kappa", "varrho")


def _f(x) -> str:
    return repr(float(x))


def _run_rows(result: SimResult):
    n = result.n_followers
    K = len(result.inputs)
    diag_names = sorted(result.diagnostics)
    for k, t in enumerate(result.time):
        ts = _f(t)
        for s, val in zip(STATE_SERIES, result.leader[k]):
            yield ts, "0", s, _f(val)
        for i in range(n):
            vi = str(i + 1)
            for s, val in zip(STATE_SERIES, result.states[k, i]):
                yield ts, vi, s, _f(val)
            for s, val in zip(("e_p", "e_v", "e_a"), result.errors[k, i]):
                yield ts, vi, s, _f(val)
            for s, val in zip(("theta_p", "theta_v", "theta_a"), result.theta[k, i]):
                yield ts, vi, s, _f(val)
            yield ts, vi, "kappa", _f(result.kappa[k, i])
            yield ts, vi, "varrho", _f(result.varrho[k, i])
            if k < K:
                yield ts, vi, "u", _f(result.inputs[k, i])
                for name in diag_names:
                    yield ts, vi, name, _f(result.diagnostics[name][k, i])


def summary_items(result: SimResult, report: MoeReport) -> list[tuple[str, str]]:
    def vec(a):
        return " ".join(_f(x) for x in np.asarray(a).ravel())

    items = [
        ("seed", str(result.seed)),
        ("config_hash", result.config_hash),
        ("n_followers", str(result.n_followers)),
        ("steps", str(len(result.inputs))),
        ("MPE", _f(report.MPE)),
        ("MVE", _f(report.MVE)),
        ("APE", _f(report.APE)),
        ("AVE", _f(report.AVE)),
        ("peak_position_errors", vec(report.peak_position_errors)),
        ("string_ratios", vec(report.string_ratios)),
        ("collision", str(report.collision).lower()),
        ("min_gap", _f(report.min_gap)),
        ("mode_switches", str(max(len(result.switches) - 1, 0))),
    ]
    d = result.diagnostics
    if "slack" in d and d["slack"].size:
        items += [
            ("slack_free_fraction", _f(slack_free_fraction(result))),
            ("max_slack", _f(d["slack"].max())),
            ("max_qp_iterations", str(int(d["qp_iterations"].max()))),
            ("dropped_spacing_steps", str(int(d["dropped_spacing"].sum()))),
        ]
    return items


def export(result: SimResult, report: MoeReport, path) -> dict[str, Path]:
    """Write run.csv, modes.csv and summary.txt into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {"run": out / "run.csv", "modes": out / "modes.csv", "summary": out / "summary.txt"}
    with open(files["run"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_HEADER)
        w.writerows(_run_rows(result))
    with open(files["modes"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "mode"))
        for t, m in result.switches:
            w.writerow((_f(t), str(int(m))))
    lines = [f"{k} = {v}" for k, v in summary_items(result, report)]
    files["summary"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return files


# ------------------------------------------------------------------ import

def read_run(path) -> dict[tuple[int, str], tuple[np.ndarray, np.ndarray]]:
    """Return {(vehicle, series): (times, values)} from a run.csv."""
    acc: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is not None and tuple(header) != RUN_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for t, v, s, val in rows:
            acc.setdefault((int(v), s), ([], []))
            acc[(int(v), s)][0].append(float(t))
            acc[(int(v), s)][1].append(float(val))
    return {k: (np.array(ts), np.array(vs)) for k, (ts, vs) in acc.items()}


def read_modes(path) -> list[tuple[float, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        next(rows, None)
        return [(float(t), int(m)) for t, m in rows]


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition(" = ")
        out[key] = val
    return out
