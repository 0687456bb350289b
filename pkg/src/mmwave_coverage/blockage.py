"""LOS probability models and their links to building statistics.

Every model is a frozen dataclass that is callable on distances (scalar or
array) and also exposes ``los_mass(x) = int_0^x r P_LOS(r) dr``, the quantity
the association and interference integrals are built from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, optimize


class DomainError(ValueError):
    """Raised for inputs outside an operation's mathematical domain."""


class FitError(RuntimeError):
    """Raised when a curve fit does not converge; carries the best iterate."""

    def __init__(self, message, best=None, rmse=None):
        super().__init__(message)
        self.best = best
        self.rmse = rmse


def _positive(name, value):
    if not (value > 0):
        raise DomainError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class ThreeGppUrban:
    """3GPP urban micro-cell LOS function, min(A/d, 1)(1 - e^{-d/B}) + e^{-d/B}."""

    a: float = 18.0
    b: float = 63.0

    def __post_init__(self):
        _positive("A", self.a)
        _positive("B", self.b)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        near = self.a / np.maximum(d, self.a)
        e = np.exp(-d / self.b)
        return near * (1.0 - e) + e

    def breakpoints(self):
        return (self.a,)

    def los_mass(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.a, self.b
        xa = np.maximum(x, a)
        far = (
            a * a / 2.0
            + a * (xa - a)
            + a * b * (np.exp(-xa / b) - math.exp(-a / b))
            + b * (math.exp(-a / b) * (a + b) - np.exp(-xa / b) * (xa + b))
        )
        return np.where(x <= a, x * x / 2.0, far)

    def to_dict(self):
        return {"type": "3gpp_urban", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class SuburbanExp:
    """Negative exponential LOS function e^{-d/C}."""

    c: float = 200.0

    def __post_init__(self):
        _positive("C", self.c)

    def __call__(self, d):
        return np.exp(-np.asarray(d, dtype=float) / self.c)

    def breakpoints(self):
        return ()

    def los_mass(self, x):
        u = np.asarray(x, dtype=float) / self.c
        # 1 - e^{-u}(1+u), written to keep precision for small u
        return self.c**2 * (-np.expm1(-u) - u * np.exp(-u))

    def to_dict(self):
        return {"type": "suburban_exp", "c": self.c}


@dataclass(frozen=True)
class LosBall:
    """Step LOS function: LOS iff d < R_B."""

    radius: float = 200.0

    def __post_init__(self):
        _positive("R_B", self.radius)

    @property
    def p_l(self):
        return 1.0

    def __call__(self, d):
        return np.where(np.asarray(d, dtype=float) < self.radius, self.p_l, 0.0)

    def breakpoints(self):
        return (self.radius,) if math.isfinite(self.radius) else ()

    def los_mass(self, x):
        x = np.minimum(np.asarray(x, dtype=float), self.radius)
        return self.p_l * x * x / 2.0

    def to_dict(self):
        return {"type": "los_ball", "radius": self.radius}


@dataclass(frozen=True)
class GeneralizedLosBall(LosBall):
    """LOS with probability p_l inside the ball of radius R_B, NLOS outside."""

    los_fraction: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.los_fraction <= 1.0:
            raise DomainError(f"p_l must lie in [0, 1], got {self.los_fraction!r}")

    @property
    def p_l(self):
        return self.los_fraction

    def to_dict(self):
        return {"type": "generalized_los_ball", "radius": self.radius, "p_l": self.los_fraction}


@dataclass(frozen=True)
class EmpiricalTable:
    """Tabulated LOS probability, linearly interpolated and clamped at the ends.

    ``counts`` optionally records how many samples backed each entry.
    """

    distances: tuple
    probs: tuple
    counts: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "distances", tuple(d.tolist()))
        object.__setattr__(self, "probs", tuple(p.tolist()))
        if self.counts is not None:
            object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if d.ndim != 1 or d.shape != p.shape or d.size < 1:
            raise DomainError("distances and probs must be 1-D sequences of equal, non-zero length")
        if np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise DomainError("table distances must be non-negative and strictly increasing")
        if np.any((p < 0) | (p > 1)):
            raise DomainError("table probabilities must lie in [0, 1]")

    def __call__(self, d):
        return np.interp(np.asarray(d, dtype=float), self.distances, self.probs)

    def breakpoints(self):
        return tuple(x for x in self.distances if x > 0)

    def los_mass(self, x):
        x = np.asarray(x, dtype=float)
        knots = np.asarray(self.distances)
        p = np.asarray(self.probs)
        # r * P(r) is piecewise quadratic; integrate each linear piece exactly
        k0, k1 = knots[:-1], knots[1:]
        slope = np.diff(p) / np.diff(knots) if knots.size > 1 else np.zeros(0)

        def piece(lo, hi, p_lo, s, k_lo):
            # int_lo^hi r (p_lo + s (r - k_lo)) dr
            c0 = p_lo - s * k_lo
            return c0 * (hi**2 - lo**2) / 2.0 + s * (hi**3 - lo**3) / 3.0

        cum = np.concatenate(
            [[p[0] * knots[0] ** 2 / 2.0], p[0] * knots[0] ** 2 / 2.0 + np.cumsum(piece(k0, k1, p[:-1], slope, k0))]
        )
        idx = np.clip(np.searchsorted(knots, x, side="right") - 1, -1, knots.size - 1)
        out = np.empty_like(x)
        before = idx < 0
        out[before] = p[0] * x[before] ** 2 / 2.0
        after = idx == knots.size - 1
        out[after] = cum[-1] + p[-1] * (x[after] ** 2 - knots[-1] ** 2) / 2.0
        mid = ~(before | after)
        i = idx[mid]
        out[mid] = cum[i] + piece(knots[i], x[mid], p[i], slope[i], knots[i])
        return out

    def to_dict(self):
        out = {"type": "empirical", "distances": list(self.distances), "probs": list(self.probs)}
        if self.counts is not None:
            out["counts"] = list(self.counts)
        return out


LosModel = Union[ThreeGppUrban, SuburbanExp, LosBall, GeneralizedLosBall, EmpiricalTable]


def los_model_from_dict(doc):
    """Build a LosModel from its serialized form (the ``blockage.model`` key)."""
    doc = dict(doc)
    kind = doc.pop("type")
    if kind == "3gpp_urban":
        return ThreeGppUrban(**doc)
    if kind == "suburban_exp":
        return SuburbanExp(**doc)
    if kind == "los_ball":
        return LosBall(**doc)
    if kind == "generalized_los_ball":
        return GeneralizedLosBall(radius=doc["radius"], los_fraction=doc["p_l"])
    if kind == "empirical":
        return EmpiricalTable(doc["distances"], doc["probs"], doc.get("counts"))
    raise DomainError(f"unknown LOS model type {kind!r}")


def p_los(model, d):
    """LOS probability of a link of length ``d`` (meters) under ``model``."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("link distance must be non-negative")
    out = model(arr)
    return float(out) if np.ndim(out) == 0 else out


def los_mass_quad(model, x):
    """Reference value of int_0^x r P_LOS(r) dr by adaptive quadrature."""
    pts = [b for b in model.breakpoints() if 0 < b < x]
    val, _ = integrate.quad(lambda r: r * float(model(r)), 0.0, x, points=pts or None, limit=200)
    return val


@dataclass(frozen=True)
class BuildingStats:
    lambda_bldg: float  # buildings per m^2
    mean_perimeter: float  # m
    mean_area: float  # m^2
    kappa: float  # covered fraction of the region

    def __post_init__(self):
        for name in ("lambda_bldg", "mean_perimeter", "mean_area", "kappa"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.kappa >= 1:
            raise DomainError("kappa must be < 1")


def rst_c(stats, method="perimeter"):
    """Random-shape-theory decay length C of the exponential LOS model."""
    if stats.lambda_bldg <= 0 or stats.mean_perimeter <= 0:
        raise DomainError("building density and mean perimeter must be positive")
    if method == "perimeter":
        return math.pi / (stats.lambda_bldg * stats.mean_perimeter)
    if method == "area":
        if not 0.0 < stats.kappa < 1.0:
            raise DomainError(f"area method needs kappa in (0, 1), got {stats.kappa}")
        if stats.mean_area <= 0:
            raise DomainError("area method needs a positive mean building area")
        return -math.pi * stats.mean_area / (math.log1p(-stats.kappa) * stats.mean_perimeter)
    raise DomainError(f"unknown method {method!r}")


def los_ball_radius(stats):
    """Ball radius whose area equals the mean LOS area of the exponential model.

    pi R_B^2 = 2 pi int_0^inf e^{-r/C} r dr = 2 pi C^2, so R_B = sqrt(2) C with
    C = pi / (lambda_bldg E[L]).
    """
    if stats.lambda_bldg <= 0 or stats.mean_perimeter <= 0:
        raise DomainError("a finite LOS ball needs positive building density and perimeter")
    return math.sqrt(2.0) * rst_c(stats, "perimeter")


@dataclass(frozen=True)
class UrbanFit:
    model: ThreeGppUrban
    rmse_pct: float
    starts: int


def _table_arrays(table):
    d = np.asarray(table.distances, dtype=float)
    p = np.asarray(table.probs, dtype=float)
    if table.counts is not None:
        keep = np.asarray(table.counts) > 0
        d, p = d[keep], p[keep]
    return d, p


def fit_3gpp_urban(table, seed=0, n_starts=5):
    """Least-squares fit of (A, B) of the 3GPP urban function to a table.

    Bounded to A in (0, 100], B in (0, 1000] with multi-start; the returned
    RMSE is in percentage points of probability.
    """
    d, p = _table_arrays(table)
    if d.size < 10 or d.min() > 10.0 or d.max() < 300.0:
        raise DomainError("table needs >= 10 points spanning at least [10 m, 300 m]")

    def resid(theta):
        return ThreeGppUrban(*theta)(d) - p

    rng = np.random.default_rng(seed)
    lo, hi = np.array([1e-3, 1e-2]), np.array([100.0, 1000.0])
    starts = [np.array([18.0, 63.0])] + [lo + (hi - lo) * rng.uniform(0.05, 0.95, 2) for _ in range(n_starts - 1)]
    best = None
    for x0 in starts:
        res = optimize.least_squares(resid, x0, bounds=(lo, hi), x_scale=[10.0, 100.0], xtol=1e-12, ftol=1e-12)
        if best is None or res.cost < best.cost:
            best = res
    rmse = 100.0 * math.sqrt(np.mean(best.fun**2))
    model = ThreeGppUrban(*best.x)
    if not best.success:
        raise FitError(f"3GPP urban fit did not converge: {best.message}", best=model, rmse=rmse)
    return UrbanFit(model=model, rmse_pct=rmse, starts=len(starts))


@dataclass(frozen=True)
class ExpFit:
    model: SuburbanExp
    offset: float  # delta in min(exp(-d/C + delta), 1)
    rmse_pct: float


def fit_suburban_exp(table, with_offset=True):
    """Fit C of e^{-d/C} to a table.

    With ``with_offset`` the fitted curve is min(exp(-d/C + delta), 1), the
    form that applies when both link ends are conditioned to be outdoors.
    """
    d, p = _table_arrays(table)
    if d.size < 3:
        raise DomainError("need at least three table points")

    def curve(theta):
        c, delta = theta[0], (theta[1] if with_offset else 0.0)
        return np.minimum(np.exp(-d / c + delta), 1.0)

    x0 = [100.0, 0.1] if with_offset else [100.0]
    bounds = ([1e-3, 0.0], [1e5, 5.0]) if with_offset else ([1e-3], [1e5])
    best = None
    for c0 in (20.0, 100.0, 500.0):
        x0[0] = c0
        res = optimize.least_squares(lambda t: curve(t) - p, x0, bounds=bounds, xtol=1e-12, ftol=1e-12)
        if best is None or res.cost < best.cost:
            best = res
    rmse = 100.0 * math.sqrt(np.mean(best.fun**2))
    offset = float(best.x[1]) if with_offset else 0.0
    if not best.success:
        raise FitError(f"exponential fit did not converge: {best.message}", best=SuburbanExp(best.x[0]), rmse=rmse)
    return ExpFit(model=SuburbanExp(float(best.x[0])), offset=offset, rmse_pct=rmse)
