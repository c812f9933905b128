"""Seeded property suites driving the verification checks.

Each suite draws its random cases from a generator keyed on ``(seed, suite)``,
so a suite gives the same result whether it runs alone or inside ``all``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dde import History, SolverOptions, integrate
from .models import Model
from .verification import (
    VerdictState,
    asymptotic_state,
    bounds_margin,
    check_order_preservation,
    lyapunov_V,
    random_history,
    random_ordered_pair,
)

SUITES = ("lyapunov", "monotone", "dichotomy", "bounds", "wright")

LYAPUNOV_CASES = 50
ORDER_PAIRS = 100
HUTCHINSON_SEARCH = 200
DICHOTOMY_CASES = 20
BOUNDS_CASES = 100
POSITIVITY_CASES = 20

WRIGHT_SURVIVAL = (0.5, 1.0, 1.5, 1.57)
WRIGHT_PERIODIC = (2.0, 3.0)
WRIGHT_NEAR_THRESHOLD = 1.5706
HUTCHINSON_PRE_THRESHOLD = 10


@dataclass
class PropertyResult:
    name: str
    passed: bool
    n_pass: int
    n_total: int
    worst: float
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.n_pass = int(self.n_pass)
        self.n_total = int(self.n_total)
        self.worst = float(self.worst)


@dataclass
class SuiteReport:
    seed: int
    suites: list
    properties: list

    @property
    def passed(self):
        return all(p.passed for p in self.properties)

    def to_dict(self):
        return {
            "seed": self.seed,
            "suites": list(self.suites),
            "passed": self.passed,
            "properties": [asdict(p) for p in self.properties],
        }


def _rng(seed, suite):
    return np.random.default_rng([int(seed), SUITES.index(suite)])


def _random_params(rng):
    return dict(
        a=float(rng.uniform(0.5, 5.0)),
        b=float(rng.uniform(0.0, 2.0)),
        m=float(rng.uniform(0.5, 3.0)),
        r=float(rng.uniform(0.1, 2.0)),
    )


def _threshold_ratio(p):
    """``m e^{-r} f(1)``; survival exists iff this exceeds 1."""
    return p["m"] * math.exp(-p["r"]) * p["a"] / (1.0 + p["b"])


def _horizon(r):
    return 50.0 * max(r, 1.0)


# -- lyapunov ------------------------------------------------------------------

def chemostat_solution_history(model, rng):
    """Initial data for the chemostat that is itself a solution segment.

    The identity ``V' = -V`` uses the substrate equation at ``t - r``, so it
    holds from ``t = 0`` only when the history on ``[-r, 0]`` solves the
    system.  A random history is run for one delay interval and that
    interval becomes the new history.
    """
    r = model.delay
    seed_hist = random_history(rng, 0.0, 1.0, r, dim=2)
    if r == 0:
        return seed_hist
    burn = integrate(model, seed_hist, r)
    return burn.tail_history(r)


def lyapunov_cases(seed, n=LYAPUNOV_CASES, t_end=10.0):
    """Yield ``(params, V0, max error, bound)`` for ``n`` random chemostat runs."""
    rng = _rng(seed, "lyapunov")
    out = []
    for _ in range(n):
        p = _random_params(rng)
        model = Model.chemostat(**p)
        phi = chemostat_solution_history(model, rng)
        traj = integrate(model, phi, t_end)
        ts = np.union1d(traj.nodes, np.linspace(0.0, t_end, 1001))
        V = lyapunov_V(traj, model.params, ts)
        err = float(np.max(np.abs(V - V[0] * np.exp(-ts))))
        out.append((p, float(V[0]), err, 1e-6 * (1.0 + abs(V[0]))))
    return out


def suite_lyapunov(seed):
    cases = lyapunov_cases(seed)
    ratios = [err / bound for _, _, err, bound in cases]
    n_pass = sum(r <= 1.0 for r in ratios)
    return [PropertyResult("lyapunov_identity", n_pass == len(cases), n_pass, len(cases),
                           max(ratios), {"max_abs_error": max(c[2] for c in cases)})]


# -- monotone ------------------------------------------------------------------

def order_cases(seed, family, n=ORDER_PAIRS):
    rng = _rng(seed, "monotone")
    if family == "chemo_logistic":
        rng = np.random.default_rng([int(seed), SUITES.index("monotone"), 1])
    reports = []
    for _ in range(n):
        p = _random_params(rng)
        if family == "hyperbolic":
            model = Model.hyperbolic(**p)
        else:
            model = Model.chemo_logistic(p["a"], p["m"], p["r"])
        K = model.params.survival_scale
        phi1, phi2 = random_ordered_pair(rng, 0.0, K, p["r"])
        reports.append(check_order_preservation(model, phi1, phi2, _horizon(p["r"])))
    return reports


def hutchinson_violation_search(seed, n=HUTCHINSON_SEARCH, a=1.0, m=3.0, r=2.0):
    """Random ordered pairs for Hutchinson's equation until the ordering breaks.

    Returns ``(pairs tried, first violating report or None)``.
    """
    rng = np.random.default_rng([int(seed), SUITES.index("monotone"), 2])
    capacity = (a * m - 1.0) / a
    model = Model.hutchinson(a, m, r)
    for i in range(n):
        phi1, phi2 = random_ordered_pair(rng, 0.0, 2.0 * capacity, r)
        rep = check_order_preservation(model, phi1, phi2, _horizon(r))
        if not rep.preserved:
            return i + 1, rep
    return n, None


def suite_monotone(seed):
    results = []
    for family in ("hyperbolic", "chemo_logistic"):
        reps = order_cases(seed, family)
        n_pass = sum(rep.preserved for rep in reps)
        results.append(PropertyResult(f"order_preserved_{family}", n_pass == len(reps), n_pass,
                                      len(reps), min(rep.margin for rep in reps)))
    tried, rep = hutchinson_violation_search(seed)
    results.append(PropertyResult(
        "order_violated_hutchinson", rep is not None, int(rep is not None), 1,
        rep.margin if rep is not None else 0.0,
        {"pairs_tried": tried, "first_violation_t": rep.first_violation_t if rep else None},
    ))
    return results


# -- dichotomy -----------------------------------------------------------------

def dichotomy_params(rng, side):
    """Rejection-sample hyperbolic parameters clearly on one side of the threshold."""
    while True:
        p = _random_params(rng)
        ratio = _threshold_ratio(p)
        if side == "survival" and 1.5 <= ratio <= 10.0:
            return p
        if side == "washout" and ratio <= 0.7:
            return p


def dichotomy_cases(seed, n=DICHOTOMY_CASES):
    rng = _rng(seed, "dichotomy")
    out = {"survival": [], "washout": []}
    for side in ("survival", "washout"):
        for _ in range(n):
            p = dichotomy_params(rng, side)
            model = Model.hyperbolic(**p)
            K = model.params.survival_scale
            phi = random_history(rng, 0.0, K, p["r"])
            verdict = asymptotic_state(model, phi, horizon=_horizon(p["r"]),
                                       opts=SolverOptions())
            out[side].append((p, verdict))
    return out


def suite_dichotomy(seed):
    cases = dichotomy_cases(seed)
    results = []
    for side, expected in (("survival", VerdictState.SURVIVAL), ("washout", VerdictState.WASHOUT)):
        verdicts = [v for _, v in cases[side]]
        n_pass = sum(v.state is expected for v in verdicts)
        results.append(PropertyResult(f"dichotomy_{side}", n_pass == len(verdicts), n_pass,
                                      len(verdicts), max(v.deviation for v in verdicts)))
    return results


# -- bounds --------------------------------------------------------------------

def bounds_cases(seed, n=BOUNDS_CASES):
    rng = _rng(seed, "bounds")
    out = []
    for _ in range(n):
        p = _random_params(rng)
        model = Model.hyperbolic(**p)
        K = model.params.survival_scale
        phi = random_history(rng, 0.0, K, p["r"], positive_end=False)
        traj = integrate(model, phi, _horizon(p["r"]))
        out.append(bounds_margin(model, traj))
    return out


def positivity_cases(seed, n=POSITIVITY_CASES):
    """Minimum over all components for random runs of every population family."""
    rng = np.random.default_rng([int(seed), SUITES.index("bounds"), 1])
    mins = {}
    for family in ("chemostat", "hyperbolic", "chemo_logistic", "hutchinson"):
        worst = []
        for _ in range(n):
            p = _random_params(rng)
            if family == "chemostat":
                model = Model.chemostat(**p)
                phi = random_history(rng, 0.0, 1.0, p["r"], dim=2)
            elif family == "hyperbolic":
                model = Model.hyperbolic(**p)
                phi = random_history(rng, 0.0, 1.0, p["r"])
            elif family == "chemo_logistic":
                model = Model.chemo_logistic(p["a"], p["m"], p["r"])
                phi = random_history(rng, 0.0, 1.0, p["r"])
            else:
                # moderate growth keeps the Hutchinson minima resolvable in double precision
                growth = float(rng.uniform(0.2, 2.0))
                r = float(rng.uniform(0.1, 1.5))
                model = Model.hutchinson(1.0, 1.0 + growth, r)
                phi = random_history(rng, 0.0, 2.0 * growth, r)
            traj = integrate(model, phi, _horizon(model.delay))
            ts = np.union1d(traj.nodes, np.linspace(0.0, traj.t_end, 2001))
            worst.append(float(traj(ts).min()))
        mins[family] = worst
    return mins


def suite_bounds(seed, tol=1e-8):
    margins = bounds_cases(seed)
    ok = [lo >= -10 * tol and over <= 10 * tol for lo, over in margins]
    results = [PropertyResult(
        "hyperbolic_bounds", all(ok), sum(ok), len(ok),
        min(lo for lo, _ in margins),
        {"max_overshoot": max(over for _, over in margins)},
    )]
    for family, worst in positivity_cases(seed).items():
        ok = [w >= -10 * tol for w in worst]
        results.append(PropertyResult(f"positivity_{family}", all(ok), sum(ok), len(ok), min(worst)))
    return results


# -- wright --------------------------------------------------------------------

def wright_verdict(rho, value=0.5, **kwargs):
    return asymptotic_state(Model.wright(rho), History.constant(value, rho), **kwargs)


def hutchinson_pre_threshold_cases(seed, n=HUTCHINSON_PRE_THRESHOLD):
    """Hutchinson runs below the critical delay started near the carrying capacity.

    Only local convergence is claimed, so the history is a bounded
    perturbation (at most 20%) of the equilibrium.
    """
    rng = np.random.default_rng([int(seed), SUITES.index("wright")])
    out = []
    for _ in range(n):
        growth = float(rng.uniform(0.5, 3.0))
        r = float(rng.uniform(0.2, 0.9)) * (0.5 * math.pi) / growth
        model = Model.hutchinson(1.0, 1.0 + growth, r)
        phi = History.bernstein(growth * (1.0 + rng.uniform(-0.2, 0.2, size=(4, 1))), r)
        out.append(((growth, r), asymptotic_state(model, phi)))
    return out


def suite_wright(seed):
    # the Wright runs use fixed initial data; only the Hutchinson cases are seeded
    survival = {rho: wright_verdict(rho) for rho in WRIGHT_SURVIVAL}
    periodic = {rho: wright_verdict(rho) for rho in WRIGHT_PERIODIC}
    near = wright_verdict(WRIGHT_NEAR_THRESHOLD)
    s_ok = sum(v.state is VerdictState.SURVIVAL for v in survival.values())
    p_ok = sum(v.state is VerdictState.PERIODIC for v in periodic.values())
    pre = hutchinson_pre_threshold_cases(seed)
    h_ok = sum(v.state is VerdictState.SURVIVAL for _, v in pre)
    return [
        PropertyResult("wright_survival", s_ok == len(survival), s_ok, len(survival),
                       max(v.deviation for v in survival.values()),
                       {str(k): v.state.value for k, v in survival.items()}),
        PropertyResult("wright_periodic", p_ok == len(periodic), p_ok, len(periodic),
                       min(v.amplitude or 0.0 for v in periodic.values()),
                       {str(k): {"state": v.state.value, "amplitude": v.amplitude,
                                 "period": v.period} for k, v in periodic.items()}),
        PropertyResult("hutchinson_below_critical_delay", h_ok == len(pre), h_ok, len(pre),
                       max(v.deviation for _, v in pre)),
        PropertyResult("wright_near_threshold_not_periodic",
                       near.state is not VerdictState.PERIODIC,
                       int(near.state is not VerdictState.PERIODIC), 1, near.deviation,
                       {"rho": WRIGHT_NEAR_THRESHOLD, "state": near.state.value,
                        "horizon": near.horizon}),
    ]


_RUNNERS = {
    "lyapunov": suite_lyapunov,
    "monotone": suite_monotone,
    "dichotomy": suite_dichotomy,
    "bounds": suite_bounds,
    "wright": suite_wright,
}


def run_suite(name, seed=0):
    """Run one suite (or ``"all"``) and collect its property results."""
    names = SUITES if name == "all" else (name,)
    for n in names:
        if n not in _RUNNERS:
            raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    props = []
    for n in names:
        props.extend(_RUNNERS[n](seed))
    return SuiteReport(int(seed), list(names), props)


__all__ = [
    "PropertyResult",
    "SUITES",
    "SuiteReport",
    "run_suite",
]
