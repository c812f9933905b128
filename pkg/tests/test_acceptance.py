"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from chemolab.analysis import Linearization, StabilityCase, classify, critical_delay
from chemolab.dde import History, SolverOptions, integrate
from chemolab.models import DimensionlessParams, Model, to_wright
from chemolab.suites import (
    bounds_cases,
    dichotomy_cases,
    hutchinson_violation_search,
    lyapunov_cases,
    order_cases,
    wright_verdict,
)
from chemolab.verification import VerdictState

SEED = 1


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")
        return ok
    return emit


def test_1_lyapunov_identity(report):
    start = time.perf_counter()
    cases = lyapunov_cases(SEED, n=50, t_end=10.0)
    elapsed = time.perf_counter() - start
    worst = max(err / bound for _, _, err, bound in cases)
    ok = len(cases) == 50 and worst <= 1.0 and elapsed < 30.0
    assert report(1, "Lyapunov identity", ok,
                  f"max err/(1e-6(1+|V0|)) = {worst:.3g} over 50 runs, {elapsed:.1f} s (< 30 s)")


def test_2_dichotomy(report):
    start = time.perf_counter()
    cases = dichotomy_cases(SEED, n=20)
    elapsed = time.perf_counter() - start
    surv = sum(v.state is VerdictState.SURVIVAL and v.deviation < 1e-4
               for _, v in cases["survival"])
    wash = sum(v.state is VerdictState.WASHOUT and v.deviation < 1e-4
               for _, v in cases["washout"])
    ratios_ok = all(p["m"] * math.exp(-p["r"]) * p["a"] / (1 + p["b"]) > 1
                    for p, _ in cases["survival"])
    ratios_ok &= all(p["m"] * math.exp(-p["r"]) * p["a"] / (1 + p["b"]) < 1
                     for p, _ in cases["washout"])
    horizons_ok = all(v.horizon == 50 * max(p["r"], 1.0)
                      for side in cases.values() for p, v in side)
    ok = surv == 20 and wash == 20 and ratios_ok and horizons_ok and elapsed < 60.0
    assert report(2, "survival/washout dichotomy", ok,
                  f"survival {surv}/20, washout {wash}/20, {elapsed:.1f} s (< 60 s)")


def test_3_bounds(report):
    margins = bounds_cases(SEED, n=100)
    lo = min(m[0] for m in margins)
    over = max(m[1] for m in margins)
    ok = len(margins) == 100 and lo >= -1e-7 and over <= 1e-7
    assert report(3, "positivity and upper bound", ok,
                  f"min x = {lo:.3g} (>= -1e-7), max x - me^-r = {over:.3g} (<= 1e-7)")


def test_4_monotonicity(report):
    reps = order_cases(SEED, "hyperbolic", n=100)
    kept = sum(r.preserved for r in reps)
    tried, violation = hutchinson_violation_search(SEED, n=200, a=1.0, m=3.0, r=2.0)
    ok = kept == 100 and violation is not None
    where = f"t = {violation.first_violation_t:.4g}" if violation else "none"
    assert report(4, "order preservation", ok,
                  f"hyperbolic {kept}/100 preserved; Hutchinson violation after "
                  f"{tried} pair(s) at {where}")


def test_5_classifier_matches_roots(report):
    rng = np.random.default_rng([SEED, 5])
    n = mismatches = 0
    worst_res = 0.0
    while n < 500:
        a, b, r = rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.05, 5)
        # skip 1e-6 neighbourhoods of the case boundaries and of r = r*
        if abs(a + b) < 1e-6 or abs(b - a) < 1e-6:
            continue
        if b < a and a + b < 0 and abs(r - critical_delay(a, b)) < 1e-6:
            continue
        n += 1
        lin = Linearization(a, b, r)
        rep = classify(lin)
        assert rep.case is not StabilityCase.D
        re = rep.leading_root.real
        if (re < 0) != rep.stable or re == 0:
            mismatches += 1
        worst_res = max(worst_res, lin.residual(rep.leading_root))
    ok = mismatches == 0 and worst_res <= 1e-10
    assert report(5, "classifier vs leading root", ok,
                  f"{500 - mismatches}/500 agree, worst residual {worst_res:.3g} (<= 1e-10)")


def test_6_thresholds(report):
    r_star = critical_delay(0.0, -1.0)
    v15 = wright_verdict(1.5)
    periodic = {rho: wright_verdict(rho) for rho in (2.0, 3.0)}
    near = wright_verdict(1.5706)
    spreads = {rho: (max(v.periods) - min(v.periods)) / v.period if v.periods else math.inf
               for rho, v in periodic.items()}
    ok = (abs(r_star - math.pi / 2) <= 1e-10
          and v15.state is VerdictState.SURVIVAL
          and all(v.state is VerdictState.PERIODIC for v in periodic.values())
          and all(s <= 0.01 for s in spreads.values())
          and near.state is not VerdictState.PERIODIC)
    detail = (f"|r* - pi/2| = {abs(r_star - math.pi / 2):.2g}; rho=1.5 {v15.state.value}; "
              + "; ".join(f"rho={rho} {v.state.value} period {v.period:.4f} "
                          f"(spread {spreads[rho]:.2g})" for rho, v in periodic.items())
              + f"; rho=1.5706 {near.state.value}")
    assert report(6, "thresholds", ok, detail)


def test_7_conjugacy(report):
    w = to_wright(DimensionlessParams(1.0, 0.0, 2.0, 1.0))
    T = 50.0
    hut = integrate(Model.hutchinson(1.0, 2.0, 1.0), History.constant(0.5, 1.0), T)
    wr = integrate(Model.wright(w.rho), History.constant(float(w.state_map(0.5)), w.rho),
                   float(w.time_map(T)))
    t = np.union1d(np.linspace(0, T, 2001), hut.nodes)
    err = float(np.max(np.abs(w.state_map(hut(t)[:, 0]) - wr(w.time_map(t))[:, 0])))
    ok = w.rho == 1.0 and err <= 1e-6
    assert report(7, "Hutchinson to Wright conjugacy", ok, f"sup-norm {err:.3g} (<= 1e-6)")


def test_8_method_of_steps(report):
    opts = SolverOptions()
    traj = integrate(Model.linear(0.0, 1.0, 1.0), History.constant(1.0, 1.0), 3.0, opts)

    def exact(t):
        x = 1 + t
        if t > 1:
            x += (t - 1) ** 2 / 2
        if t > 2:
            x += (t - 2) ** 3 / 6
        return x

    ts = np.union1d(np.linspace(0, 3, 3001), traj.nodes)
    err = float(np.max(np.abs(traj(ts)[:, 0] - [exact(t) for t in ts])))
    ok = err <= 10 * opts.abs_tol
    assert report(8, "method-of-steps oracle", ok, f"max error {err:.3g} (<= {10 * opts.abs_tol:g})")


def test_9_determinism(report):
    cmd = [sys.executable, "-m", "chemolab", "verify", "all", "--seed", str(SEED)]
    runs = [subprocess.run(cmd, capture_output=True) for _ in range(2)]
    same = runs[0].stdout == runs[1].stdout
    codes = [r.returncode for r in runs]
    ok = same and codes == [0, 0] and len(runs[0].stdout) > 0
    assert report(9, "verify all determinism", ok,
                  f"byte-identical: {same}, exit codes {codes}, {len(runs[0].stdout)} bytes")
