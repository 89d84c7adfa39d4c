"""Acceptance criteria, one test each.

Every test appends a PASS/FAIL line to the terminal summary, then asserts.
Tolerances are fixed up front; nothing here is tuned to the results.
"""

import filecmp
import time

import numpy as np
import pytest

from platoon_dmpc import checks, cli, markov, riccati
from platoon_dmpc.dynamics import A_CT, PlantParams, nonlinear_closed_loop
from platoon_dmpc.export import export
from platoon_dmpc.sim import SimResult, compute_moe, run, slack_free_fraction, string_stability_check

from conftest import ACCEPTANCE_LINES


def verdict(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  [{number:2d}] {title}: {detail}")
    assert passed, f"criterion {number} ({title}) failed: {detail}"


def completed(results):
    return {s: r for s, r in results.items() if isinstance(r, SimResult)}


def test_invariant_distribution(capsys):
    t0 = time.perf_counter()
    code = cli.main(["invariant"])
    elapsed = time.perf_counter() - t0
    printed = capsys.readouterr().out
    pi = markov.invariant_distribution(markov.DEFAULT_MU)
    res = float(np.abs(pi @ markov.DEFAULT_MU).max())
    dev = float(np.abs(pi - np.array([11 / 40, 1 / 5, 2 / 5, 1 / 8])).max())
    ok = code == 0 and "0.275" in printed and res <= 1e-12 and dev <= 1e-12 and elapsed < 1.0
    verdict(1, "invariant distribution", ok,
            f"|pi mu|_inf = {res:.1e}, max |pi - pi_ref| = {dev:.1e}, {elapsed:.3f} s")


def test_riccati_design():
    t0 = time.perf_counter()
    P = riccati.solve_observer_care(A_CT, np.eye(3))
    rep = riccati.verify_care(P, A_CT, np.eye(3))
    lhs = riccati.care_lhs(riccati.DEFAULT_P, A_CT)
    top = float(np.linalg.eigvalsh(0.5 * (lhs + lhs.T)).max())
    elapsed = time.perf_counter() - t0
    ok = rep.min_eig_P > 0 and rep.residual <= 1e-8 and top < 0 and elapsed < 1.0
    verdict(2, "Riccati design", ok,
            f"min eig P = {rep.min_eig_P:.4f}, residual = {rep.residual:.1e}, "
            f"max eig R(P_default) = {top:.4f}, {elapsed:.3f} s")


def test_observer_convergence(reference_sweep):
    _, results, seconds = reference_sweep
    done = completed(results)
    theta_sq, settled = [], True
    for res in done.values():
        k100 = int(np.argmin(np.abs(res.time - 100.0)))
        k90 = int(np.argmin(np.abs(res.time - 90.0)))
        theta_sq.extend(np.sum(res.theta[k100] ** 2, axis=1))
        kap100, kap90 = res.kappa[k100], res.kappa[k90]
        settled &= bool(np.all(np.abs(kap100 - kap90) < 0.05 * kap100))
    mean_sq = float(np.mean(theta_sq)) if theta_sq else np.inf
    slowest = max(seconds.values())
    ok = len(done) == len(results) and mean_sq <= 0.05 and settled and slowest <= 60.0
    verdict(3, "observer convergence", ok,
            f"{len(done)}/{len(results)} runs, mean |theta(100)|^2 = {mean_sq:.2e}, "
            f"kappa settled = {settled}, slowest run {slowest:.1f} s")


def test_tracking_moe_bands(reference_sweep):
    cfg, results, _ = reference_sweep
    done = completed(results)
    reports = [compute_moe(r, cfg.raw["eps_floor"]) for r in done.values()]
    med = {k: float(np.median([getattr(r, k) for r in reports])) if reports else np.inf
           for k in ("MPE", "MVE", "APE", "AVE")}
    ok = (len(done) == len(results)
          and 0.9 <= med["MPE"] <= 2.7 and 0.6 <= med["MVE"] <= 1.8
          and med["APE"] <= 0.30 and med["AVE"] <= 0.15)
    verdict(4, "tracking MOE bands", ok,
            f"median MPE {med['MPE']:.3f} in [0.9, 2.7], MVE {med['MVE']:.3f} in [0.6, 1.8], "
            f"APE {med['APE']:.3f} <= 0.30, AVE {med['AVE']:.3f} <= 0.15")


def test_string_stability(reference_sweep):
    cfg, results, _ = reference_sweep
    good, no_amp, slack_ok = 0, 0, 0
    fractions = []
    for res in completed(results).values():
        amp_free = all(v.passed for v in string_stability_check(res, cfg.raw["beta"]))
        frac = slack_free_fraction(res)
        fractions.append(frac)
        no_amp += amp_free
        slack_ok += frac >= 0.99
        good += amp_free and frac >= 0.99
    ok = good >= 9
    verdict(5, "string stability", ok,
            f"{good}/10 runs satisfy both; no amplification in {no_amp}/10, "
            f"slack-free >= 99% in {slack_ok}/10 (fractions {min(fractions, default=0):.3f}"
            f"..{max(fractions, default=0):.3f})")


def test_input_bounds_and_collisions(reference_sweep):
    _, results, _ = reference_sweep
    done = completed(results)
    u_lo = min(float(r.inputs.min()) for r in done.values())
    u_hi = max(float(r.inputs.max()) for r in done.values())
    gap = min(compute_moe(r).min_gap for r in done.values())
    ok = len(done) == len(results) and u_lo >= -3.0 and u_hi <= 3.0 and gap > 0
    verdict(6, "input bounds and collisions", ok,
            f"{len(done)}/{len(results)} runs, inputs in [{u_lo:.4f}, {u_hi:.4f}], min gap {gap:.3f} m")


def test_qp_oracle_equivalence():
    rows = checks.qp_suite(100, seed=2024)
    ok = all(c.passed for c in rows)
    verdict(7, "QP oracle equivalence", ok, "; ".join(f"{c.name} ({c.detail})" for c in rows))


def test_markov_occupancy():
    pi = markov.invariant_distribution(markov.DEFAULT_MU)
    chain = markov.start_chain(markov.DEFAULT_MU, 1, seed=7)
    path, _ = markov.advance(chain, markov.DEFAULT_MU, 1.0e4)
    l1 = float(np.abs(markov.occupancy(path, 1.0e4, 4) - pi).sum())
    verdict(8, "Markov occupancy", l1 <= 0.05, f"L1 distance over 1e4 s = {l1:.4f} (<= 0.05)")


def lag_solution(x0, u, delta, t):
    """Closed form of delta*a' + a = u with constant u."""
    p0, v0, a0 = x0
    c = a0 - u
    decay = np.exp(-t / delta)
    a = u + c * decay
    v = v0 + u * t + c * delta * (1 - decay)
    p = p0 + v0 * t + 0.5 * u * t * t + c * delta * (t - delta * (1 - decay))
    return np.array([p, v, a])


def test_feedback_linearization_reduction():
    params = PlantParams()
    worst = 0.0
    for x0, u in (([0.0, 20.0, 1.0], 0.5), ([5.0, 12.0, -0.8], -2.0), ([0.0, 25.0, 0.0], 3.0)):
        x = np.array(x0)
        T = params.r_w / params.eta * (params.m * x[2] + params.C_A * x[1] ** 2 + params.m * params.g * params.f)
        for k in range(1, 11):
            x, T = nonlinear_closed_loop(x, T, u, params, 0.1, 1e-3)
            worst = max(worst, float(np.abs(x - lag_solution(x0, u, params.delta, 0.1 * k)).max()))
    verdict(9, "feedback-linearization reduction", worst <= 1e-6,
            f"max deviation from the first-order lag over 1 s = {worst:.1e} (<= 1e-6)")


def test_determinism(reference_sweep, tmp_path):
    cfg, results, _ = reference_sweep
    first = results[1]
    if not isinstance(first, SimResult):
        verdict(10, "determinism", False, f"seed 1 aborted: {first}")
    second = run(cfg, 1)
    a = export(first, compute_moe(first, cfg.raw["eps_floor"]), tmp_path / "a")
    b = export(second, compute_moe(second, cfg.raw["eps_floor"]), tmp_path / "b")
    same = [name for name in a if filecmp.cmp(a[name], b[name], shallow=False)]
    verdict(10, "determinism", len(same) == len(a),
            f"byte-identical files: {', '.join(sorted(same)) or 'none'} of {len(a)}")
