"""Equilibria, scalar linearization and stability of the delayed linear equation.

Around an equilibrium a scalar model linearizes to
``xi'(t) = a_lin * xi(t) + b_lin * xi(t - r)`` whose exponential solutions
``e^{lam t}`` satisfy the characteristic equation ``lam = a_lin + b_lin e^{-lam r}``.
The sign pattern of ``(a_lin + b_lin, b_lin - a_lin)`` splits the plane into four
cases:

A  ``a + b > 0``: unstable for every delay
B  ``a + b < 0``, ``b >= a``: stable for every delay
C  ``a + b < 0``, ``b < a``: stable below a critical delay, unstable above
D  ``a + b = 0``: ``lam = 0`` is a root, the linearization is inconclusive
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import RootFindingError, UnsupportedModelError, WrongCaseError
from .models import Family

__all__ = [
    "Equilibrium",
    "EquilibriumKind",
    "Linearization",
    "StabilityCase",
    "StabilityReport",
    "classify",
    "count_roots",
    "critical_delay",
    "equilibria",
    "leading_root",
    "linearize",
]

BOUNDARY_TOL = 1e-12
ROOT_RESIDUAL = 1e-10


class EquilibriumKind(str, Enum):
    WASHOUT = "washout"
    SURVIVAL = "survival"


class StabilityCase(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


@dataclass(frozen=True)
class Equilibrium:
    kind: EquilibriumKind
    value: tuple
    exists: bool = True

    @property
    def state(self):
        return np.array(self.value, dtype=float)


@dataclass(frozen=True)
class Linearization:
    a_lin: float
    b_lin: float
    delay_r: float = 0.0

    def __post_init__(self):
        for name in ("a_lin", "b_lin", "delay_r"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delay_r < 0:
            raise ValueError("delay_r must be >= 0")

    def residual(self, lam):
        """``|lam - a_lin - b_lin e^{-lam r}|``."""
        return abs(_char(complex(lam), self.a_lin, self.b_lin, self.delay_r))


@dataclass(frozen=True)
class StabilityReport:
    case: StabilityCase
    leading_root: complex
    critical_delay: float | None = None
    omega: float | None = None
    delay_r: float = 0.0

    @property
    def stable(self):
        """Local verdict at the configured delay; ``None`` for case D."""
        if self.case is StabilityCase.A:
            return False
        if self.case is StabilityCase.B:
            return True
        if self.case is StabilityCase.C:
            return self.delay_r < self.critical_delay
        return None


# -- equilibria --------------------------------------------------------------

def _survival_substrate(p):
    """Substrate level solving ``m e^{-r} f(s) = 1``, or None if it is not in (0, 1).

    ``f`` is strictly increasing, so the level exists inside (0, 1) exactly when
    ``f(1) > e^r / m``; inverting ``a s / (1 + b s) = c`` gives ``s = c / (a - b c)``.
    """
    c = math.exp(p.r) / p.m
    if not p.f(1.0) > c:
        return None
    return c / (p.a - p.b * c)


def equilibria(model):
    """Non-negative equilibria of ``model``, washout first.

    Wright's equation has its two equilibria at ``xi = -1`` (image of washout)
    and ``xi = 0`` (image of the carrying capacity).
    """
    fam = model.family
    p = model.params
    W, S = EquilibriumKind.WASHOUT, EquilibriumKind.SURVIVAL
    if fam is Family.WRIGHT:
        return [Equilibrium(W, (-1.0,)), Equilibrium(S, (0.0,))]
    if fam is Family.LINEAR:
        return [Equilibrium(W, (0.0,))]
    if fam is Family.CHEMOSTAT:
        out = [Equilibrium(W, (1.0, 0.0))]
        s_bar = _survival_substrate(p)
        if s_bar is not None:
            out.append(Equilibrium(S, (s_bar, p.survival_scale * (1.0 - s_bar))))
        return out
    out = [Equilibrium(W, (0.0,))]
    if fam is Family.HYPERBOLIC:
        s_bar = _survival_substrate(p)
        if s_bar is not None:
            out.append(Equilibrium(S, (p.survival_scale * (1.0 - s_bar),)))
    elif fam is Family.CHEMO_LOGISTIC:
        growth = p.a * p.survival_scale - 1.0
        if growth > 0:
            out.append(Equilibrium(S, (growth / p.a,)))
    elif fam is Family.HUTCHINSON:
        growth = p.a * p.m - 1.0
        if growth > 0:
            out.append(Equilibrium(S, (growth / p.a,)))
    return out


def survival_equilibrium(model):
    """The survival equilibrium of ``model`` or None."""
    for eq in equilibria(model):
        if eq.kind is EquilibriumKind.SURVIVAL:
            return eq
    return None


def linearize(model, eq):
    """Partial derivatives of the right-hand side at ``eq``.

    ``a_lin`` is the derivative with respect to the current state and
    ``b_lin`` with respect to the delayed state.
    """
    fam = model.family
    if fam is Family.CHEMOSTAT:
        raise UnsupportedModelError(
            "the chemostat is two-dimensional; linearize its hyperbolic reduction instead"
        )
    x = float(eq.value[0])
    res = float(model.rhs([x], [x])[0])
    if abs(res) > 1e-10:
        raise ValueError(f"state {x!r} is not an equilibrium (residual {res!r})")
    p = model.params
    if fam is Family.HYPERBOLIC:
        K = p.survival_scale
        s = (K - x) / K
        df = p.a / (1.0 + p.b * s) ** 2
        a_lin = -1.0 - df * x
        b_lin = K * p.f(s)
    elif fam is Family.CHEMO_LOGISTIC:
        a_lin = -1.0 - p.a * x
        b_lin = p.a * p.survival_scale - p.a * x
    elif fam is Family.HUTCHINSON:
        a_lin = p.a * p.m - 1.0 - p.a * x
        b_lin = -p.a * x
    elif fam is Family.WRIGHT:
        a_lin = -x
        b_lin = -(1.0 + x)
    elif fam is Family.LINEAR:
        a_lin, b_lin = p.p, p.q
    else:  # pragma: no cover
        raise UnsupportedModelError(f"no linearization for {fam}")
    return Linearization(float(a_lin) + 0.0, float(b_lin) + 0.0, model.delay)


# -- classification ----------------------------------------------------------

def critical_delay(a_lin, b_lin):
    """First delay at which a root pair of ``lam = a + b e^{-lam r}`` reaches the imaginary axis.

    Only defined in case C.  The crossing happens at ``lam = i omega`` with
    ``omega = sqrt(b^2 - a^2)`` and ``r = arccos(-a/b) / omega``.
    """
    if not (a_lin + b_lin < 0 and b_lin < a_lin):
        raise WrongCaseError(
            f"critical delay needs a + b < 0 and b < a, got a={a_lin!r}, b={b_lin!r}"
        )
    omega = math.sqrt(b_lin * b_lin - a_lin * a_lin)
    return math.acos(-a_lin / b_lin) / omega


def classify(lin):
    """Stability case of ``lin`` with its leading root and, in case C, the critical delay."""
    a, b = lin.a_lin, lin.b_lin
    s = a + b
    r_star = omega = None
    if abs(s) <= BOUNDARY_TOL:
        case = StabilityCase.D
    elif s > 0:
        case = StabilityCase.A
    elif b >= a:
        case = StabilityCase.B
    else:
        case = StabilityCase.C
        omega = math.sqrt(b * b - a * a)
        r_star = critical_delay(a, b)
        res = abs(_char(1j * omega, a, b, r_star))
        if res > ROOT_RESIDUAL * max(1.0, omega):
            raise RootFindingError(
                "i*omega does not solve the characteristic equation at the critical delay",
                {"a": a, "b": b, "omega": omega, "r_star": r_star, "residual": res},
            )
    return StabilityReport(case, leading_root(lin), r_star, omega, lin.delay_r)


# -- characteristic roots ----------------------------------------------------

def _char(lam, a, b, r):
    return lam - a - b * cmath.exp(-lam * r)


def _dchar(lam, b, r):
    return 1.0 + b * r * cmath.exp(-lam * r)


def _real_sign(x, a, b, r):
    """Sign of ``x - a - b e^{-x r}`` without overflowing."""
    e = -x * r
    if e > 700.0:
        return -1.0 if b > 0 else 1.0
    g = x - a - b * math.exp(e)
    return (g > 0) - (g < 0)


def _bisect(lo, hi, a, b, r):
    s_lo = _real_sign(lo, a, b, r)
    if s_lo == 0:
        return lo
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        s = _real_sign(mid, a, b, r)
        if s == 0:
            return mid
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _rightmost_real_root(a, b, r):
    """Largest real root of ``x = a + b e^{-x r}`` for ``r > 0``, or None."""
    if b == 0:
        return a
    if b > 0:
        # g is increasing, g(a) < 0
        step = 1.0
        hi = a + step
        while _real_sign(hi, a, b, r) <= 0:
            step *= 2.0
            hi = a + step
        return _bisect(a, hi, a, b, r)
    # b < 0: g is convex with its minimum at x_min
    x_min = math.log(-b * r) / r
    g_min = x_min - a + 1.0 / r
    if g_min > 0:
        return None
    if g_min == 0:
        return x_min
    return _bisect(x_min, a, a, b, r)


def _newton(seed, a, b, r, max_iter=100):
    lam = complex(seed)
    try:
        g = _char(lam, a, b, r)
    except OverflowError:
        return None
    for _ in range(max_iter):
        try:
            dg = _dchar(lam, b, r)
        except OverflowError:
            return None
        if dg == 0:
            return None
        step = g / dg
        t = 1.0
        while True:
            new = lam - t * step
            try:
                g_new = _char(new, a, b, r)
            except OverflowError:
                g_new = complex(math.inf)
            if abs(g_new) < abs(g) or t < 1e-6:
                break
            t *= 0.5
        if not cmath.isfinite(g_new):
            return None
        moved = abs(new - lam)
        lam, g = new, g_new
        if moved <= 4e-16 * max(1.0, abs(lam)):
            break
    if abs(g) <= ROOT_RESIDUAL * max(1.0, abs(lam)):
        return lam
    return None


def _edge_phase(za, zb, a, b, r, max_levels=60):
    """Total change of arg g along the segment [za, zb], resolved adaptively."""
    n = 64
    z = za + (zb - za) * np.linspace(0.0, 1.0, n + 1)
    g = z - a - b * np.exp(-z * r)
    zl, zr, gl, gr = z[:-1], z[1:], g[:-1], g[1:]
    total = 0.0
    for _ in range(max_levels):
        if not (np.all(np.isfinite(gl)) and np.all(np.isfinite(gr))):
            raise RootFindingError("characteristic function overflowed on the counting contour")
        if np.any(gl == 0) or np.any(gr == 0):
            raise RootFindingError("a characteristic root lies on the counting contour")
        d = np.angle(gr / gl)
        ok = np.abs(d) <= math.pi / 4
        total += float(np.sum(d[ok]))
        if np.all(ok):
            return total
        zl, zr, gl, gr = zl[~ok], zr[~ok], gl[~ok], gr[~ok]
        zm = 0.5 * (zl + zr)
        gm = zm - a - b * np.exp(-zm * r)
        zl, zr = np.concatenate([zl, zm]), np.concatenate([zm, zr])
        gl, gr = np.concatenate([gl, gm]), np.concatenate([gm, gr])
    raise RootFindingError("argument-principle contour could not be resolved")


def count_roots(lin, re_min, re_max, im_min, im_max):
    """Number of characteristic roots inside the open rectangle, via the argument principle."""
    a, b, r = lin.a_lin, lin.b_lin, lin.delay_r
    corners = [
        complex(re_min, im_min),
        complex(re_max, im_min),
        complex(re_max, im_max),
        complex(re_min, im_max),
    ]
    total = 0.0
    for k in range(4):
        total += _edge_phase(corners[k], corners[(k + 1) % 4], a, b, r)
    return int(round(total / (2 * math.pi)))


def _roots_right_of(lin, mu, mu_max):
    """Count of roots with real part in (mu, mu_max + 1); all such roots are inside the box."""
    b, r = lin.b_lin, lin.delay_r
    height = abs(b) * math.exp(-mu * r) + 1.0
    return count_roots(lin, mu, mu_max + 1.0, -height, height)


def _isolate_rightmost(lin, mu_lo, mu_max):
    """Locate the rightmost root by nested argument-principle bisection, then polish."""
    a, b, r = lin.a_lin, lin.b_lin, lin.delay_r
    lo, hi = mu_lo, mu_max + 1.0
    while hi - lo > 1e-3 * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if _roots_right_of(lin, mid, mu_max) > 0:
            lo = mid
        else:
            hi = mid
    height = abs(b) * math.exp(-lo * r) + 1.0
    im_lo, im_hi = 0.0 - 1e-9, height
    # conjugate symmetry: search the closed upper half
    while im_hi - im_lo > 1e-3 * max(1.0, im_hi):
        mid = 0.5 * (im_lo + im_hi)
        if count_roots(lin, lo, hi, mid, im_hi) > 0:
            im_lo = mid
        else:
            im_hi = mid
    return _newton(complex(0.5 * (lo + hi), 0.5 * (im_lo + im_hi)), a, b, r)


def leading_root(lin):
    """Root of ``lam = a_lin + b_lin e^{-lam r}`` with maximal real part.

    Returned with non-negative imaginary part.  The search combines the
    rightmost real root (bisection), damped Newton from a grid of complex seeds
    and an argument-principle count confirming no root lies further right.

    Raises
    ------
    RootFindingError
        If no root passing the residual check can be confirmed as rightmost.
    """
    a, b, r = lin.a_lin, lin.b_lin, lin.delay_r
    if r == 0 or b == 0:
        return complex(a + b, 0.0) if r == 0 else complex(a, 0.0)

    mu_max = _rightmost_real_root(a, abs(b), r)
    candidates = []
    real = _rightmost_real_root(a, b, r)
    if real is not None:
        polished = _newton(real, a, b, r, max_iter=5)
        candidates.append(polished if polished is not None else complex(real))

    im_top = math.pi / r + abs(b)
    for omega in np.linspace(0.0, im_top, 25)[1:]:
        for mu in (mu_max, mu_max - 1.0 / r):
            root = _newton(complex(mu, omega), a, b, r)
            if root is not None:
                candidates.append(complex(root.real, abs(root.imag)))

    best = max(candidates, key=lambda z: (z.real, -z.imag)) if candidates else None
    diagnostics = {"a": a, "b": b, "r": r, "mu_max": mu_max, "n_candidates": len(candidates)}
    if best is not None:
        delta = 1e-7 * max(1.0, abs(best.real))
        if _roots_right_of(lin, best.real + delta, mu_max) == 0:
            return best
        diagnostics["unconfirmed"] = best
    # fallback: bracket by counting, starting from a point left of every candidate
    mu_lo = (best.real if best is not None else mu_max) - 1.0
    while _roots_right_of(lin, mu_lo, mu_max) == 0:
        mu_lo -= 2.0 * (mu_max - mu_lo + 1.0)
        if mu_lo < -1e3:
            raise RootFindingError("no characteristic root located", diagnostics)
    root = _isolate_rightmost(lin, mu_lo, mu_max)
    if root is None:
        raise RootFindingError("Newton polish of the isolated root failed", diagnostics)
    root = complex(root.real, abs(root.imag))
    delta = 1e-7 * max(1.0, abs(root.real))
    if _roots_right_of(lin, root.real + delta, mu_max) != 0:
        raise RootFindingError("rightmost root could not be confirmed", diagnostics)
    return root
