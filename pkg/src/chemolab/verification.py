"""Numerical checks of the structural claims about the delayed models.

The checks run on integrated trajectories: exponential decay of the chemostat
functional ``V``, order preservation (and its failure for Hutchinson's
equation), positivity and the upper bound of the hyperbolic model, and the
classification of long-run behaviour into washout, survival or a periodic orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .analysis import EquilibriumKind, equilibria
from .dde import History, SolverOptions, integrate
from .models import Family

__all__ = [
    "AsymptoticVerdict",
    "OrderTestReport",
    "VerdictState",
    "asymptotic_state",
    "bounds_margin",
    "check_bounds",
    "check_order_preservation",
    "lyapunov_V",
    "random_history",
    "random_ordered_pair",
]

VERDICT_TOL = 1e-4
AMPLITUDE_FLOOR = 1e-3
PERIOD_RTOL = 0.01
AMPLITUDE_DRIFT_RTOL = 1e-4
DEFAULT_MAX_HORIZON = 1e5


class VerdictState(str, Enum):
    WASHOUT = "washout"
    SURVIVAL = "survival"
    PERIODIC = "periodic"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class AsymptoticVerdict:
    """Long-run classification of one trajectory.

    ``deviation`` is the sup-distance to the nearest equilibrium over the
    terminal window; ``amplitude`` and ``period`` describe the last three
    cycles when an oscillation was detected.
    """

    state: VerdictState
    deviation: float
    horizon: float
    amplitude: float | None = None
    period: float | None = None
    periods: tuple = field(default=(), repr=False)
    amplitudes: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class OrderTestReport:
    preserved: bool
    first_violation_t: float | None
    margin: float


def lyapunov_V(traj, p, t):
    """``x(t) + m e^{-r} s(t - r) - m e^{-r}`` along a chemostat trajectory."""
    if traj.dim != 2:
        raise ValueError("lyapunov_V needs a two-component chemostat trajectory")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > traj.t_end):
        raise ValueError(f"t must lie in [0, {traj.t_end!r}]")
    K = p.survival_scale
    x = traj(t)[..., 1]
    s_lag = traj(t - p.r)[..., 0]
    return x + K * s_lag - K


def _dense_times(traj, t_lo, t_hi, n=2000):
    nodes = traj.nodes
    nodes = nodes[(nodes >= t_lo) & (nodes <= t_hi)]
    grid = np.linspace(t_lo, t_hi, n + 1)
    return np.union1d(nodes, grid)


def _check_ordered(phi1, phi2, n=401):
    lo = max(phi1.t_start, phi2.t_start)
    hi = min(phi1.t_end, phi2.t_end)
    ts = np.union1d(np.linspace(lo, hi, n), np.union1d(phi1.knots, phi2.knots))
    diff = phi2(ts) - phi1(ts)
    if np.any(diff < 0):
        i = int(np.argmin(diff.min(axis=1)))
        raise ValueError(f"initial histories are not ordered: phi1 > phi2 at t={ts[i]!r}")


def check_order_preservation(model, phi1, phi2, horizon, opts=None):
    """Integrate from ordered histories ``phi1 <= phi2`` and test the ordering on ``[0, horizon]``.

    The ordering counts as preserved while ``x2 - x1 >= -10 * abs_tol``.
    """
    if model.dim != 1:
        raise ValueError("order preservation is tested for scalar models only")
    opts = SolverOptions() if opts is None else opts
    _check_ordered(phi1, phi2)
    tr1 = integrate(model, phi1, horizon, opts)
    tr2 = integrate(model, phi2, horizon, opts)
    ts = np.union1d(_dense_times(tr1, 0.0, horizon), tr2.nodes)
    diff = (tr2(ts) - tr1(ts))[:, 0]
    floor = -10.0 * opts.abs_tol
    bad = np.nonzero(diff < floor)[0]
    first = float(ts[bad[0]]) if bad.size else None
    return OrderTestReport(bad.size == 0, first, float(diff.min()))


def bounds_margin(model, traj):
    """``(min x, max x - m e^{-r})`` over the trajectory, nodes and interior points."""
    if model.family not in (Family.HYPERBOLIC, Family.CHEMO_LOGISTIC):
        raise ValueError("bounds are defined for the hyperbolic and chemo-logistic models")
    k = traj.history.knots
    k = k[k >= 0]
    inner = (k[:-1, None] + np.diff(k)[:, None] * np.array([0.2, 0.4, 0.6, 0.8])).ravel()
    x = traj(np.concatenate([k, inner]))[:, 0]
    return float(x.min()), float(x.max() - model.params.survival_scale)


def check_bounds(model, traj, tol=1e-8):
    """True iff ``-10 tol <= x(t) <= m e^{-r} + 10 tol`` along the whole run."""
    lo, over = bounds_margin(model, traj)
    return lo >= -10 * tol and over <= 10 * tol


# -- asymptotic classification -------------------------------------------------

def _component(model):
    """Index of the organism component used to detect oscillations."""
    return 1 if model.dim == 2 else 0


def _crossings(traj, comp, level, t_lo, t_hi, dt):
    ts = np.arange(t_lo, t_hi, dt)
    ys = traj(ts)[:, comp] - level
    idx = np.nonzero((ys[:-1] < 0) & (ys[1:] >= 0))[0]
    out = []
    for i in idx:
        a, b = ts[i], ts[i + 1]
        if ys[i + 1] == 0:
            out.append(float(b))
            continue
        out.append(brentq(lambda t: traj(t)[comp] - level, a, b, xtol=1e-12))
    return np.array(out), ts, ys + level


def _extremum(traj, comp, grid, ys, t0, t1, sign):
    """Max (sign=+1) or min (sign=-1) of one component on [t0, t1], refined from samples."""
    inside = np.nonzero((grid > t0) & (grid < t1))[0]
    i = inside[np.argmax(sign * ys[inside])]
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -sign * traj(t)[comp], bounds=(a, b),
                          method="bounded", options={"xatol": 1e-12})
    return sign * max(sign * float(ys[i]), -float(res.fun))


def _classify_run(model, traj, tol, amplitude_floor):
    r = model.delay
    T = traj.t_end
    window = 10.0 * max(r, 1.0)
    ts = _dense_times(traj, max(T - window, 0.0), T)
    xs = traj(ts)
    devs = {}
    for eq in equilibria(model):
        devs[eq.kind] = float(np.max(np.abs(xs - eq.state)))
    dev = min(devs.values())
    if devs.get(EquilibriumKind.WASHOUT, math.inf) < tol:
        return AsymptoticVerdict(VerdictState.WASHOUT, dev, T)
    if devs.get(EquilibriumKind.SURVIVAL, math.inf) < tol:
        return AsymptoticVerdict(VerdictState.SURVIVAL, dev, T)

    comp = _component(model)
    t_lo = 0.5 * T
    dt = min(0.02 * max(r, 1.0), (T - t_lo) / 2000)
    probe = traj(np.linspace(t_lo, T, 4001))[:, comp]
    level = float(probe.mean())
    ups, grid, ys = _crossings(traj, comp, level, t_lo, T, dt)
    if ups.size < 4:
        return AsymptoticVerdict(VerdictState.UNDECIDED, dev, T)
    periods = np.diff(ups[-4:])
    amps = []
    for c0, c1 in zip(ups[-4:-1], ups[-3:]):
        hi = _extremum(traj, comp, grid, ys, c0, c1, +1)
        lo = _extremum(traj, comp, grid, ys, c0, c1, -1)
        amps.append(0.5 * (hi - lo))
    amps = np.array(amps)
    period = float(periods.mean())
    amplitude = float(amps.mean())
    period_ok = (periods.max() - periods.min()) <= PERIOD_RTOL * period
    amp_ok = amplitude > amplitude_floor and (amps.max() - amps.min()) <= AMPLITUDE_DRIFT_RTOL * amps.max()
    state = VerdictState.PERIODIC if (period_ok and amp_ok) else VerdictState.UNDECIDED
    return AsymptoticVerdict(state, dev, T, amplitude, period, tuple(periods), tuple(amps))


def asymptotic_state(model, phi, horizon=None, tol=VERDICT_TOL, opts=None,
                     amplitude_floor=AMPLITUDE_FLOOR, max_horizon=DEFAULT_MAX_HORIZON):
    """Classify the long-run behaviour of the solution starting from ``phi``.

    With an explicit ``horizon`` the solution is integrated exactly that far.
    Without one, integration starts at ``50 * max(r, 1)`` and the horizon is
    quadrupled while the verdict stays undecided, up to ``max_horizon``.

    A periodic verdict needs an oscillation above ``amplitude_floor`` whose
    last three periods agree within 1% and whose last three amplitudes agree
    within ``AMPLITUDE_DRIFT_RTOL``, so slowly decaying spirals are not
    mistaken for limit cycles.
    """
    r = model.delay
    minimum = 50.0 * max(r, 1.0)
    if opts is None:
        opts = SolverOptions(max_step=r if r > 0 else None)
    if horizon is not None:
        if horizon < minimum:
            raise ValueError(f"horizon must be at least 50 * max(r, 1) = {minimum!r}")
        return _classify_run(model, integrate(model, phi, horizon, opts), tol, amplitude_floor)
    T = minimum
    while True:
        verdict = _classify_run(model, integrate(model, phi, T, opts), tol, amplitude_floor)
        if verdict.state is not VerdictState.UNDECIDED or T >= max_horizon:
            return verdict
        T = min(4.0 * T, max(max_horizon, minimum))


# -- random initial data ---------------------------------------------------------

def random_history(rng, lo, hi, delay_r, dim=1, degree=3, positive_end=True):
    """Random Bernstein-form history with values in ``[lo, hi]``.

    With ``positive_end`` the value at ``t = 0`` is kept away from ``lo``.
    """
    beta = rng.uniform(lo, hi, size=(degree + 1, dim))
    if positive_end:
        beta[-1] = lo + (hi - lo) * rng.uniform(0.05, 1.0, size=dim)
    return History.bernstein(beta, delay_r)


def random_ordered_pair(rng, lo, hi, delay_r, degree=3):
    """Two random histories with ``phi1 <= phi2`` pointwise, both in ``[lo, hi]``.

    Ordered Bernstein coefficients give ordered polynomials because the basis
    functions are non-negative.
    """
    draws = np.sort(rng.uniform(lo, hi, size=(degree + 1, 2)), axis=1)
    return History.bernstein(draws[:, :1], delay_r), History.bernstein(draws[:, 1:], delay_r)
