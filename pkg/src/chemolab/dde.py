"""Method-of-steps integration of autonomous DDEs with one constant delay.

Equations have the form ``x'(t) = F(x(t), x(t - r))`` with a scalar or
two-component state.  Steps are taken with the Dormand-Prince 5(4) pair and
every accepted step is stored as a quartic continuous-extension segment, so
the solution doubles as the history the next steps read their delayed values
from.  Steps never exceed ``r``; every delayed argument therefore falls in the
already-computed part of the solution and no iteration is needed.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DivergedError, OutOfRangeError

__all__ = [
    "DelayEquation",
    "History",
    "SolverOptions",
    "Trajectory",
    "integrate",
]

# Dormand-Prince 5(4) tableau with the 4th-order continuous extension.
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656,
)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40,
)
# Rows: stages 1, 3, 4, 5, 6, 7 (stage 2 has zero weight).  Columns: theta^1..theta^4.
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class DelayEquation:
    """A user-supplied equation ``x' = func(x(t), x(t - delay))``.

    ``func`` receives floats when ``dim == 1`` and length-2 arrays otherwise.
    """

    func: Callable
    delay: float
    dim: int = 1

    def __post_init__(self):
        if self.delay < 0 or not math.isfinite(self.delay):
            raise ValueError(f"delay must be finite and >= 0, got {self.delay!r}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim!r}")

    def vector_field(self):
        return self.func


@dataclass(frozen=True)
class SolverOptions:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_step: float | None = None
    initial_step: float | None = None

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "max_step", "initial_step"):
            value = getattr(self, name)
            if value is None:
                continue
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    def resolved_max_step(self, delay):
        """Largest admissible step for an equation with the given delay."""
        default = min(delay, 0.1) if delay > 0 else 0.1
        h = default if self.max_step is None else self.max_step
        if delay > 0 and h > delay:
            raise ValueError(f"max_step={h!r} exceeds the delay r={delay!r}")
        return h


class History:
    """Piecewise-polynomial state record on ``[knots[0], knots[-1]]``.

    Segment ``i`` covers ``[knots[i], knots[i+1]]`` and evaluates
    ``sum_k coeffs[i, k] * theta**k`` with ``theta`` the normalized position
    inside the segment.  ``values`` holds the state at each knot and is returned
    verbatim when a query hits a knot exactly.

    A history whose window is a single point (delay zero) has no segments.
    """

    def __init__(self, knots, coeffs, values, delay_r):
        knots = np.asarray(knots, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.size < 1:
            raise ValueError("knots must be a non-empty 1-d array")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if coeffs.ndim != 3 or coeffs.shape[0] != knots.size - 1:
            raise ValueError("coeffs must have shape (n_segments, degree + 1, dim)")
        if values.shape != (knots.size, coeffs.shape[2]):
            raise ValueError("values must have shape (n_knots, dim)")
        for arr in (knots, coeffs, values):
            arr.setflags(write=False)
        self.knots = knots
        self.coeffs = coeffs
        self.values = values
        self.delay_r = float(delay_r)

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value, delay_r):
        """Constant initial history on ``[-delay_r, 0]``."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.polynomial(value[np.newaxis, :], delay_r)

    @classmethod
    def polynomial(cls, coeffs, delay_r):
        """Initial history ``phi(t) = sum_k coeffs[k] * t**k`` for t in [-r, 0].

        ``coeffs`` has shape ``(degree + 1,)`` for a scalar state or
        ``(degree + 1, dim)``.
        """
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, np.newaxis]
        if c.ndim != 2 or c.shape[0] == 0:
            raise ValueError("polynomial coefficients must be a non-empty 1-d or 2-d array")
        r = _check_delay(delay_r)
        dim = c.shape[1]
        if r == 0:
            return cls._point(c[0], dim)
        # t = r * (theta - 1)
        sub = np.array([-r, r])
        local = np.zeros_like(c)
        for j in range(dim):
            q = np.zeros(1)
            for k in range(c.shape[0] - 1, -1, -1):
                q = P.polyadd(P.polymul(q, sub), [c[k, j]])
            local[: q.size, j] = q[: c.shape[0]]
        values = np.vstack([P.polyval(-r, c), c[0]])
        return cls([-r, 0.0], local[np.newaxis], values, r)

    @classmethod
    def bernstein(cls, coeffs, delay_r):
        """Initial history in the Bernstein basis over ``[-r, 0]``.

        The history stays inside the convex hull of its coefficients, which is
        what makes this form convenient for drawing bounded or ordered
        random histories.
        """
        beta = np.asarray(coeffs, dtype=float)
        if beta.ndim == 1:
            beta = beta[:, np.newaxis]
        r = _check_delay(delay_r)
        n = beta.shape[0] - 1
        if r == 0:
            return cls._point(beta[-1], beta.shape[1])
        local = np.zeros_like(beta)
        for k in range(n + 1):
            for j in range(k, n + 1):
                local[j] += beta[k] * math.comb(n, k) * math.comb(n - k, j - k) * (-1) ** (j - k)
        values = np.vstack([beta[0], beta[-1]])
        return cls([-r, 0.0], local[np.newaxis], values, r)

    @classmethod
    def from_samples(cls, times, values, delay_r=None):
        """Piecewise-linear history through ``(times[i], values[i])``."""
        t = np.asarray(times, dtype=float)
        y = np.asarray(values, dtype=float)
        if y.ndim == 1:
            y = y[:, np.newaxis]
        if t.size < 2 or y.shape[0] != t.size:
            raise ValueError("need at least two samples with matching values")
        coeffs = np.stack([y[:-1], y[1:] - y[:-1]], axis=1)
        r = t[-1] - t[0] if delay_r is None else delay_r
        return cls(t, coeffs, y, r)

    @classmethod
    def _point(cls, value, dim):
        return cls([0.0], np.zeros((0, 1, dim)), np.reshape(value, (1, dim)), 0.0)

    def window(self, t_lo, t_hi, shift=0.0):
        """Restriction to ``[t_lo, t_hi]`` with time translated by ``-shift``.

        Segments cut by the window are re-expressed on the retained part, so
        the restriction evaluates to the same values as the original.
        """
        if not (self.t_start <= t_lo < t_hi <= self.t_end):
            raise OutOfRangeError(
                f"window [{t_lo!r}, {t_hi!r}] not inside [{self.t_start!r}, {self.t_end!r}]"
            )
        k = self.knots
        first = max(int(np.searchsorted(k, t_lo, side="right")) - 1, 0)
        last = min(int(np.searchsorted(k, t_hi, side="left")), k.size - 1)
        new_knots = [t_lo]
        new_coeffs = []
        for i in range(first, last):
            a, b = k[i], k[i + 1]
            lo, hi = max(a, t_lo), min(b, t_hi)
            if hi <= lo:
                continue
            w = b - a
            new_coeffs.append(_rebase(self.coeffs[i], (lo - a) / w, (hi - a) / w))
            new_knots.append(hi)
        new_knots = np.array(new_knots)
        values = self(new_knots)
        return History(new_knots - shift, np.array(new_coeffs), values, self.delay_r)

    # -- queries ------------------------------------------------------------

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def t_start(self):
        return float(self.knots[0])

    @property
    def t_end(self):
        return float(self.knots[-1])

    def __call__(self, t):
        """State at ``t``; shape ``(dim,)`` for scalar ``t``, else ``(n, dim)``."""
        return self._evaluate(t, derivative=False)

    def derivative(self, t):
        """Time derivative of the interpolant (one-sided at knots, from the right)."""
        return self._evaluate(t, derivative=True)

    def _evaluate(self, t, derivative):
        tt = np.asarray(t, dtype=float)
        scalar = tt.ndim == 0
        tt = np.atleast_1d(tt)
        if tt.size and (np.any(tt < self.knots[0]) or np.any(tt > self.knots[-1])
                        or np.any(np.isnan(tt))):
            bad = tt[(tt < self.knots[0]) | (tt > self.knots[-1]) | np.isnan(tt)][0]
            raise OutOfRangeError(
                f"t={bad!r} outside history window [{self.t_start!r}, {self.t_end!r}]"
            )
        n_seg = self.coeffs.shape[0]
        if n_seg == 0:
            out = np.zeros((tt.size, self.dim)) if derivative else np.repeat(self.values, tt.size, axis=0)
            return out[0] if scalar else out
        idx = np.clip(np.searchsorted(self.knots, tt, side="right") - 1, 0, n_seg - 1)
        t0 = self.knots[idx]
        width = self.knots[idx + 1] - t0
        theta = ((tt - t0) / width)[:, np.newaxis]
        c = self.coeffs[idx]
        deg = c.shape[1] - 1
        if derivative:
            out = np.zeros((tt.size, self.dim))
            for k in range(deg, 0, -1):
                out = out * theta + k * c[:, k]
            out = out / width[:, np.newaxis]
        else:
            out = c[:, deg].copy()
            for k in range(deg - 1, -1, -1):
                out = out * theta + c[:, k]
            hit = np.searchsorted(self.knots, tt, side="left")
            on_knot = (hit < self.knots.size) & (self.knots[np.minimum(hit, self.knots.size - 1)] == tt)
            if np.any(on_knot):
                out[on_knot] = self.values[hit[on_knot]]
        return out[0] if scalar else out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense solution on ``[-r, t_end]``.

    ``history`` contains the initial segment(s) followed by one segment per
    accepted step.  ``breakpoints`` lists the times ``k * r`` up to ``t_end``
    (just ``0`` when ``r == 0``).
    """

    history: History
    breakpoints: np.ndarray
    n_accepted: int
    n_rejected: int
    delay: float

    @property
    def t_end(self):
        return self.history.t_end

    @property
    def dim(self):
        return self.history.dim

    @property
    def nodes(self):
        """Accepted step endpoints, starting at 0."""
        k = self.history.knots
        return k[k >= 0]

    @property
    def node_values(self):
        k = self.history.knots
        return self.history.values[k >= 0]

    def eval(self, t):
        return self.history(t)

    __call__ = eval

    def derivative(self, t):
        return self.history.derivative(t)

    def tail_history(self, t0=None):
        """The solution on ``[t0 - r, t0]`` as an initial history on ``[-r, 0]``.

        Restarting from it continues this trajectory; ``t0`` defaults to ``t_end``.
        """
        r = self.delay
        t0 = self.t_end if t0 is None else float(t0)
        if r == 0:
            return History._point(self.eval(t0), self.dim)
        if t0 - r < -r or t0 > self.t_end:
            raise OutOfRangeError(f"no solution window of length {r!r} ending at {t0!r}")
        h = self.history.window(max(t0 - r, self.history.t_start), t0, shift=t0)
        knots = h.knots.copy()
        knots[0], knots[-1] = -r, 0.0
        keep = np.concatenate([[True], np.diff(knots) > 0])
        if not np.all(keep):
            raise ValueError("degenerate solution window")
        return History(knots, h.coeffs, h.values, r)


def _rebase(c, theta_a, theta_b):
    """Coefficients of ``u -> p(theta_a + (theta_b - theta_a) u)``."""
    if theta_a == 0.0 and theta_b == 1.0:
        return np.array(c)
    sub = np.array([theta_a, theta_b - theta_a])
    out = np.zeros_like(c)
    for j in range(c.shape[1]):
        q = np.zeros(1)
        for k in range(c.shape[0] - 1, -1, -1):
            q = P.polyadd(P.polymul(q, sub), [c[k, j]])
        out[: q.size, j] = q[: c.shape[0]]
    return out


def _check_delay(r):
    r = float(r)
    if not (math.isfinite(r) and r >= 0):
        raise ValueError(f"delay must be finite and >= 0, got {r!r}")
    return r


def _is_finite(y):
    if isinstance(y, float):
        return math.isfinite(y)
    return bool(np.all(np.isfinite(y)))


def integrate(model, phi, t_end, opts=None):
    """Integrate ``model`` from initial history ``phi`` up to ``t_end``.

    Parameters
    ----------
    model
        Any object exposing ``delay``, ``dim`` and ``vector_field()``; see
        :class:`DelayEquation` and :class:`chemolab.models.Model`.
    phi : History
        Initial history on ``[-r, 0]`` (a single point at 0 when ``r == 0``).
    t_end : float
        Final time, must be positive.
    opts : SolverOptions, optional

    Returns
    -------
    Trajectory

    Raises
    ------
    DivergedError
        If the state becomes nonfinite or the step size collapses.
    """
    opts = SolverOptions() if opts is None else opts
    t_end = float(t_end)
    if not (math.isfinite(t_end) and t_end > 0):
        raise ValueError(f"t_end must be finite and > 0, got {t_end!r}")
    r = _check_delay(model.delay)
    dim = model.dim
    if phi.dim != dim:
        raise ValueError(f"history dimension {phi.dim} does not match model dimension {dim}")
    if r > 0:
        if phi.t_start != -r or phi.t_end != 0.0:
            raise ValueError(
                f"history must span exactly [-r, 0] = [{-r!r}, 0], got "
                f"[{phi.t_start!r}, {phi.t_end!r}]"
            )
    elif phi.t_end != 0.0:
        raise ValueError("a delay-free history must end at t = 0")

    F = model.vector_field()
    h_max = opts.resolved_max_step(r)
    atol, rtol = opts.abs_tol, opts.rel_tol
    scalar = dim == 1

    def as_state(v):
        return float(v[0]) if scalar else np.array(v, dtype=float)

    # Mutable record: knots, segment widths and coefficient tuples.
    knots = []
    widths = []
    segs = []
    node_vals = []
    if r > 0:
        knots.extend(float(k) for k in phi.knots)
        widths.extend(float(w) for w in np.diff(phi.knots))
        for c in phi.coeffs:
            segs.append(tuple(as_state(ck) for ck in c))
        node_vals.extend(phi.values)
    else:
        knots.append(0.0)
        node_vals.append(phi.values[-1])
    n_hist = len(segs)

    def lag(tq):
        i = bisect_right(knots, tq) - 1
        n = len(segs)
        if i >= n:
            i = n - 1
        elif i < 0:
            i = 0
        c = segs[i]
        th = (tq - knots[i]) / widths[i]
        v = c[-1]
        for ck in c[-2::-1]:
            v = v * th + ck
        return v

    def norm(e, y0, y1):
        if scalar:
            return abs(e) / (atol + rtol * max(abs(y0), abs(y1)))
        sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
        return math.sqrt(float(np.mean((e / sc) ** 2)))

    t = 0.0
    y = as_state(phi.values[-1])
    k1 = F(y, lag(-r) if r > 0 else y)
    if not (_is_finite(y) and _is_finite(k1)):
        raise DivergedError("nonfinite initial state or derivative", 0.0)

    if opts.initial_step is not None:
        h = min(opts.initial_step, h_max)
    else:
        d0 = norm(y, y, y)
        d1 = norm(k1, y, y)
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, h_max, t_end)

    if r > 0:
        n_bp = int(math.floor(t_end / r + 1e-12))
        breakpoints = np.array([k * r for k in range(n_bp + 1) if k * r <= t_end])
    else:
        breakpoints = np.array([0.0])
    bp_index = 1  # next breakpoint is breakpoints[bp_index]

    n_acc = n_rej = 0
    h_min_rel = 1e-14
    while t < t_end:
        if bp_index < breakpoints.size:
            target = float(breakpoints[bp_index])
        else:
            target = t_end
        remaining = target - t
        h = min(h, h_max)
        if remaining <= h or (remaining <= 1.1 * h and remaining <= h_max):
            h = remaining
            landing = True
        else:
            if remaining < 2 * h:
                h = remaining / 2
            landing = False
        if h <= h_min_rel * max(1.0, abs(t)):
            raise DivergedError("step size underflow", t)

        t_new = target if landing else t + h
        try:
            y2 = y + h * (_A21 * k1)
            k2 = F(y2, lag(t + _C2 * h - r) if r > 0 else y2)
            y3 = y + h * (_A31 * k1 + _A32 * k2)
            k3 = F(y3, lag(t + _C3 * h - r) if r > 0 else y3)
            y4 = y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3)
            k4 = F(y4, lag(t + _C4 * h - r) if r > 0 else y4)
            y5 = y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4)
            k5 = F(y5, lag(t + _C5 * h - r) if r > 0 else y5)
            y6 = y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
            k6 = F(y6, lag(t_new - r) if r > 0 else y6)
            y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            k7 = F(y_new, lag(t_new - r) if r > 0 else y_new)
            err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            e = norm(err, y, y_new)
        except (OverflowError, FloatingPointError):
            e = math.inf
        if not math.isfinite(e) or not _is_finite(y_new):
            n_rej += 1
            h *= _MIN_FACTOR
            continue

        if e <= 1.0:
            ks = (k1, k3, k4, k5, k6, k7)
            q = []
            for j in range(4):
                acc = 0.0
                for row, kk in zip(_P, ks):
                    if row[j] != 0.0:
                        acc = acc + row[j] * kk
                q.append(h * acc)
            segs.append((y, q[0], q[1], q[2], q[3]))
            widths.append(t_new - t)
            knots.append(t_new)
            node_vals.append(y_new)
            t, y, k1 = t_new, y_new, k7
            n_acc += 1
            if landing and bp_index < breakpoints.size and t == breakpoints[bp_index]:
                bp_index += 1
            factor = _MAX_FACTOR if e == 0 else min(_MAX_FACTOR, _SAFETY * e ** -0.2)
        else:
            n_rej += 1
            factor = max(_MIN_FACTOR, _SAFETY * e ** -0.2)
        h = h * factor

    coeffs = _pack(segs, n_hist, dim, phi)
    values = np.array([np.atleast_1d(v) for v in node_vals], dtype=float)
    hist = History(knots, coeffs, values, r)
    return Trajectory(hist, breakpoints, n_acc, n_rej, r)


def _pack(segs, n_hist, dim, phi):
    deg = max([4] + [phi.coeffs.shape[1] - 1])
    out = np.zeros((len(segs), deg + 1, dim))
    if n_hist:
        out[:n_hist, : phi.coeffs.shape[1]] = phi.coeffs
    if len(segs) > n_hist:
        sol = np.array([[np.atleast_1d(c) for c in s] for s in segs[n_hist:]], dtype=float)
        out[n_hist:, :5] = sol
    return out
