"""Model families for the delayed chemostat and its scalar reductions.

Five right-hand sides are provided, all autonomous with one discrete delay
``r`` and written as ``F(current, delayed)``:

``chemostat``
    two-component substrate/organism system ``(s, x)`` in dimensionless form
``hyperbolic``
    the scalar equation obtained by restricting the chemostat to the
    hyperplane where ``x + m e^{-r} s(t - r) = m e^{-r}``
``chemo_logistic``
    the hyperbolic model with ``b = 0`` (linear uptake)
``hutchinson``
    the classical delayed logistic equation with the same equilibria
``wright``
    Wright's equation ``xi' = -xi(t - rho) (1 + xi(t))``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NoSurvivalStateError, PoleError, UnsupportedModelError

__all__ = [
    "DimensionalChemostat",
    "DimensionalParams",
    "DimensionlessParams",
    "Family",
    "Model",
    "WrightCoordinates",
    "WrightParams",
    "holling_response",
    "hutchinson_product_rhs",
    "nondimensionalize",
    "reduce_to_hyperbolic",
    "rhs",
    "to_wright",
]


class Family(str, Enum):
    CHEMOSTAT = "chemostat"
    HYPERBOLIC = "hyperbolic"
    CHEMO_LOGISTIC = "chemo_logistic"
    HUTCHINSON = "hutchinson"
    WRIGHT = "wright"
    LINEAR = "linear"


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


def _nonnegative(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class DimensionalParams:
    """Chemostat parameters in physical units.

    C inflow concentration, D dilution rate, A search rate, B handling time,
    M conversion factor, R delay.
    """

    C: float
    D: float
    A: float
    B: float
    M: float
    R: float = 0.0

    def __post_init__(self):
        for name in "CDABM":
            _positive(name, getattr(self, name))
        _nonnegative("R", self.R)


@dataclass(frozen=True)
class DimensionlessParams:
    a: float
    b: float
    m: float
    r: float = 0.0

    def __post_init__(self):
        _positive("a", self.a)
        _nonnegative("b", self.b)
        _positive("m", self.m)
        _nonnegative("r", self.r)

    @property
    def survival_scale(self):
        """``m e^{-r}``: upper bound of the hyperbolic model's invariant interval."""
        return self.m * math.exp(-self.r)

    def f(self, s):
        return holling_response(s, self.a, self.b)


@dataclass(frozen=True)
class WrightParams:
    rho: float

    def __post_init__(self):
        _nonnegative("rho", self.rho)


@dataclass(frozen=True)
class LinearParams:
    """Coefficients of the test equation ``x' = p x(t) + q x(t - r)``."""

    p: float
    q: float
    r: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise ValueError("linear coefficients must be finite")
        _nonnegative("r", self.r)


def holling_response(s, a, b):
    """Holling type II uptake ``a s / (1 + b s)``.

    Works elementwise on arrays.  Raises :class:`PoleError` when ``1 + b s``
    vanishes; negative ``s`` right of the pole is legitimate and gives a
    negative response.
    """
    denom = 1.0 + b * s
    if np.any(np.asarray(denom) == 0):
        raise PoleError(f"Holling response has a pole at s = -1/b = {-1.0 / b!r}")
    return a * s / denom


def nondimensionalize(p):
    """Map physical chemostat parameters to ``(a, b, m, r)``.

    ``a = A C / D``, ``b = A B C``, ``m = M``, ``r = D R``; time is measured in
    units of ``1/D`` and concentrations in units of ``C``.
    """
    return DimensionlessParams(
        a=p.A * p.C / p.D,
        b=p.A * p.B * p.C,
        m=p.M,
        r=p.D * p.R,
    )


@dataclass(frozen=True)
class Model:
    """One model family together with its parameters.

    Use the classmethod constructors rather than building instances by hand.
    """

    family: Family
    params: object
    dim: int = field(init=False)

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        expected = {
            Family.WRIGHT: WrightParams,
            Family.LINEAR: LinearParams,
        }.get(family, DimensionlessParams)
        if not isinstance(self.params, expected):
            raise TypeError(f"{family.value} needs {expected.__name__}, got {type(self.params).__name__}")
        object.__setattr__(self, "dim", 2 if family is Family.CHEMOSTAT else 1)

    @classmethod
    def chemostat(cls, a, b, m, r):
        return cls(Family.CHEMOSTAT, DimensionlessParams(a, b, m, r))

    @classmethod
    def hyperbolic(cls, a, b, m, r):
        return cls(Family.HYPERBOLIC, DimensionlessParams(a, b, m, r))

    @classmethod
    def chemo_logistic(cls, a, m, r):
        return cls(Family.CHEMO_LOGISTIC, DimensionlessParams(a, 0.0, m, r))

    @classmethod
    def hutchinson(cls, a, m, r):
        return cls(Family.HUTCHINSON, DimensionlessParams(a, 0.0, m, r))

    @classmethod
    def wright(cls, rho):
        return cls(Family.WRIGHT, WrightParams(rho))

    @classmethod
    def linear(cls, p, q, r):
        return cls(Family.LINEAR, LinearParams(p, q, r))

    @property
    def delay(self):
        if self.family is Family.WRIGHT:
            return self.params.rho
        return self.params.r

    @property
    def is_scalar(self):
        return self.dim == 1

    def vector_field(self):
        """Return ``F(current, delayed)`` specialised to this family.

        Scalar families take and return floats; the chemostat takes and returns
        length-2 arrays ``(s, x)``.
        """
        fam = self.family
        p = self.params
        if fam is Family.WRIGHT:
            return lambda x, y: -y * (1.0 + x)
        if fam is Family.LINEAR:
            pp, qq = p.p, p.q
            return lambda x, y: pp * x + qq * y
        a, b, m = p.a, p.b, p.m
        K = p.survival_scale
        if fam is Family.CHEMOSTAT:
            def F(u, v):
                s, x = u[0], u[1]
                sd, xd = v[0], v[1]
                d_now = 1.0 + b * s
                d_lag = 1.0 + b * sd
                if d_now == 0 or d_lag == 0:
                    raise PoleError("Holling response evaluated at its pole")
                return np.array([
                    1.0 - s - a * s / d_now * x,
                    K * (a * sd / d_lag) * xd - x,
                ])
            return F
        if fam is Family.HYPERBOLIC:
            def F(x, y):
                s = (K - x) / K
                d = 1.0 + b * s
                if d == 0:
                    raise PoleError("Holling response evaluated at its pole")
                return K * (a * s / d) * y - x
            return F
        if fam is Family.CHEMO_LOGISTIC:
            aK = a * K
            return lambda x, y: aK * y - x - a * x * y
        if fam is Family.HUTCHINSON:
            am = a * m
            # rearranged form, exposes the non-monotone -a x(t) x(t-r) term
            return lambda x, y: am * x - x - a * x * y
        raise UnsupportedModelError(f"no vector field for {fam}")  # pragma: no cover

    def rhs(self, current, delayed):
        return rhs(self, current, delayed)


def rhs(model, current, delayed):
    """Evaluate the model right-hand side; returns an array of length ``model.dim``."""
    cur = np.atleast_1d(np.asarray(current, dtype=float))
    lag = np.atleast_1d(np.asarray(delayed, dtype=float))
    if cur.shape != (model.dim,) or lag.shape != (model.dim,):
        raise ValueError(
            f"{model.family.value} expects states of length {model.dim}, "
            f"got {cur.shape} and {lag.shape}"
        )
    F = model.vector_field()
    if model.dim == 1:
        return np.array([F(float(cur[0]), float(lag[0]))])
    return np.asarray(F(cur, lag), dtype=float)


def hutchinson_product_rhs(p, current, delayed):
    """Hutchinson's equation in growth-rate times (1 - N/K) form.

    Agrees with the rearranged form used by :class:`Model` wherever the
    carrying capacity ``(am - 1)/a`` is nonzero.
    """
    growth = p.a * p.m - 1.0
    if growth == 0:
        raise NoSurvivalStateError("carrying capacity (am - 1)/a is zero")
    capacity = growth / p.a
    return growth * current * (1.0 - delayed / capacity)


def reduce_to_hyperbolic(p):
    """Restrict the delayed chemostat to the hyperplane ``V = 0``.

    Eliminating ``s`` through ``s = (m e^{-r} - x) / (m e^{-r})`` leaves the
    scalar hyperbolic equation with the same parameter record.
    """
    return Model(Family.HYPERBOLIC, p)


@dataclass(frozen=True)
class WrightCoordinates:
    """Affine change of variables taking Hutchinson's equation to Wright's.

    ``tau = time_scale * t``, ``rho = time_scale * r`` and
    ``xi = x / carrying_capacity - 1``.
    """

    time_scale: float
    rho: float
    carrying_capacity: float

    def state_map(self, x):
        return np.asarray(x, dtype=float) / self.carrying_capacity - 1.0

    def inverse_state_map(self, xi):
        return (np.asarray(xi, dtype=float) + 1.0) * self.carrying_capacity

    def time_map(self, t):
        return np.asarray(t, dtype=float) * self.time_scale

    def inverse_time_map(self, tau):
        return np.asarray(tau, dtype=float) / self.time_scale

    def model(self):
        return Model.wright(self.rho)


def to_wright(p):
    """Wright coordinates for the Hutchinson model with parameters ``p``.

    Raises :class:`NoSurvivalStateError` unless ``am > 1``.
    """
    growth = p.a * p.m - 1.0
    if not growth > 0:
        raise NoSurvivalStateError(f"am - 1 = {growth!r} <= 0: no positive carrying capacity")
    return WrightCoordinates(time_scale=growth, rho=growth * p.r, carrying_capacity=growth / p.a)


@dataclass(frozen=True)
class DimensionalChemostat:
    """The chemostat in physical units, state ``(S, X)`` and delay ``R``."""

    params: DimensionalParams
    dim: int = 2

    @property
    def delay(self):
        return self.params.R

    def vector_field(self):
        p = self.params
        washout = p.M * math.exp(-p.D * p.R)

        def F(u, v):
            S, X = u[0], u[1]
            Sd, Xd = v[0], v[1]
            uptake = p.A * S / (1.0 + p.A * p.B * S)
            uptake_lag = p.A * Sd / (1.0 + p.A * p.B * Sd)
            return np.array([
                p.C * p.D - p.D * S - uptake * X,
                washout * uptake_lag * Xd - p.D * X,
            ])

        return F
