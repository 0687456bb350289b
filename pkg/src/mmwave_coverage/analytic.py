"""Numerical evaluation of the stochastic-geometry coverage results.

Association follows the minimum path-loss rule over two independent
inhomogeneous PPPs (LOS with density lambda P(r), NLOS with lambda (1 - P(r))).
SINR coverage uses the Alzer bound for the serving link's Nakagami fading and
the exact Laplace functional of the interference.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .curves import CoverageCurve
from .propagation import nakagami_eta
from .quadrature import Quadrature, integrate_semi_infinite

NU_MAX = 20
TERM_FLOOR = 1e-14  # load-PMF terms below this are dropped from rate sums
COVERAGE_FLOOR = 1e-13  # rate sums stop once S(T) falls below this


def _los_cum(cfg, x):
    """Expected number of LOS BSs within distance x."""
    return 2.0 * math.pi * cfg.bs_density * cfg.los_model.los_mass(x)


def _nlos_cum(cfg, x):
    x = np.asarray(x, dtype=float)
    return np.maximum(math.pi * cfg.bs_density * x * x - _los_cum(cfg, x), 0.0)


def _p_state(cfg, t, los):
    p = cfg.los_model(t)
    return p if los else 1.0 - p


def _serving_density(cfg, x, los):
    """Joint density of serving distance x and serving state (A_s f_s(x))."""
    x = np.asarray(x, dtype=float)
    pl = cfg.pathloss
    lam = cfg.bs_density
    if los:
        own = _los_cum(cfg, x)
        other = _nlos_cum(cfg, pl.nlos_exclusion(x))
    else:
        own = _nlos_cum(cfg, x)
        other = _los_cum(cfg, pl.los_exclusion(x))
    return 2.0 * math.pi * lam * x * _p_state(cfg, x, los) * np.exp(-own - other)


def _scale(cfg):
    return 0.5 / math.sqrt(cfg.bs_density)


def _outer_breakpoints(cfg, los):
    bps = [b for b in cfg.los_model.breakpoints() if math.isfinite(b)]
    mapped = cfg.pathloss.los_exclusion(bps) if los else cfg.pathloss.nlos_exclusion(bps)
    return tuple(bps) + tuple(np.atleast_1d(mapped).tolist() if bps else ())


@dataclass(frozen=True)
class Association:
    a_los: float
    a_nlos: float
    pdf_los: Callable
    pdf_nlos: Callable
    a_nlos_direct: float  # NLOS probability from its own integral, for checks


def association(cfg, quad=Quadrature()):
    """LOS/NLOS association probabilities and conditional serving-distance PDFs."""
    vals = {}
    for los in (True, False):
        f = lambda t, rows, los=los: _serving_density(cfg, t, los)
        vals[los] = float(
            integrate_semi_infinite(f, [0.0], quad, _scale(cfg), _outer_breakpoints(cfg, los), name="association")[0]
        )
    a_los = vals[True]
    a_nlos = 1.0 - a_los

    def pdf_los(x):
        return _serving_density(cfg, x, True) / a_los if a_los > 0 else np.zeros_like(np.asarray(x, float))

    def pdf_nlos(x):
        return _serving_density(cfg, x, False) / a_nlos if a_nlos > 0 else np.zeros_like(np.asarray(x, float))

    return Association(a_los, a_nlos, pdf_los, pdf_nlos, vals[False])


def _f_nakagami(nu, x):
    """F(nu, x) = 1 - (1 + x)^{-nu}, accurate for small x."""
    return -np.expm1(-nu * np.log1p(x))


def _conditional_term_sum(cfg, t_lin, los, quad, interference=True):
    """A_s S_s(T): coverage jointly with association to a state-s BS."""
    pl, fad, lam = cfg.pathloss, cfg.fading, cfg.bs_density
    nu = fad.nu(los)
    if nu > NU_MAX:
        raise ValueError(f"Nakagami parameter {nu} exceeds the supported maximum {NU_MAX}")
    eta = nakagami_eta(nu)
    c_s, a_s = pl.intercept(los), pl.exponent(los)
    gp = cfg.gains
    abar = gp.normalized()
    probs = np.asarray(gp.probs)
    live = probs > 0
    abar, probs = abar[live], probs[live]
    ns = np.arange(1, nu + 1, dtype=float)
    noise_coef = eta * t_lin * cfg.noise_power / (c_s * gp.serving_gain)
    inner_quad = quad.scaled(0.1)
    scale = _scale(cfg)
    bps = tuple(b for b in cfg.los_model.breakpoints() if math.isfinite(b))

    def interferer_sum(x_flat, n_flat, los_j):
        nu_j = fad.nu(los_j)
        c_j, a_j = pl.intercept(los_j), pl.exponent(los_j)
        base = n_flat * eta * t_lin * (c_j / c_s) * x_flat**a_s / nu_j
        if los_j == los:
            lower = x_flat
        elif los:
            lower = pl.nlos_exclusion(x_flat)
        else:
            lower = pl.los_exclusion(x_flat)

        def inner(t, rows):
            u = base[rows][:, None] * t ** (-a_j)
            acc = np.zeros_like(t)
            for ak, bk in zip(abar, probs):
                acc += bk * _f_nakagami(nu_j, ak * u)
            return acc * _p_state(cfg, t, los_j) * t

        name = f"interference integral ({'LOS' if los_j else 'NLOS'} interferers, {'LOS' if los else 'NLOS'} server)"
        return 2.0 * math.pi * lam * integrate_semi_infinite(inner, lower, inner_quad, scale, bps, name=name)

    def outer(x, rows):
        n = ns[rows][:, None] * np.ones_like(x)
        pref = _serving_density(cfg, x, los) * np.exp(-n * noise_coef * x**a_s)
        out = pref.copy()
        live_nodes = pref * scale > quad.abs_tol * 1e-12
        if interference and np.any(live_nodes):
            xf, nf = x[live_nodes], n[live_nodes]
            expo = interferer_sum(xf, nf, True) + interferer_sum(xf, nf, False)
            out[live_nodes] = pref[live_nodes] * np.exp(-expo)
        out[~live_nodes] = 0.0
        return out

    # large thresholds squeeze the mass towards x = 0; mark the length where the
    # noise or interference exponent reaches one
    inner_len = [scale * t_lin ** (-1.0 / a_s)]
    if noise_coef > 0:
        inner_len.append(noise_coef ** (-1.0 / a_s))
    outer_bps = _outer_breakpoints(cfg, los) + tuple(v for v in inner_len if v < scale / 64.0)
    name = f"coverage integral ({'LOS' if los else 'NLOS'} server)"
    terms = integrate_semi_infinite(outer, np.zeros(nu), quad, scale, outer_bps, name=name)
    signs = np.array([(-1) ** (k + 1) * math.comb(nu, k) for k in range(1, nu + 1)], dtype=float)
    return float(np.dot(signs, terms))


def coverage_at(cfg, t_lin, quad=Quadrature(), interference=True):
    """P(SINR > t_lin) for a single linear threshold."""
    if t_lin <= 0:
        return 1.0
    total = _conditional_term_sum(cfg, t_lin, True, quad, interference) + _conditional_term_sum(
        cfg, t_lin, False, quad, interference
    )
    return min(max(total, 0.0), 1.0)


def _curve(kind, cfg, thresholds_db, quad, interference):
    t_db = np.asarray(thresholds_db, dtype=float)
    probs = [coverage_at(cfg, 10.0 ** (t / 10.0), quad, interference) for t in t_db]
    return CoverageCurve(kind, t_db, probs, cfg.fingerprint(), meta={"source": "analytic"})


def sinr_coverage(cfg, thresholds_db, quad=Quadrature()):
    """SINR CCDF at each threshold (dB); thresholds are evaluated independently."""
    kind = "SIR" if cfg.noise_power == 0 else "SINR"
    return _curve(kind, cfg, thresholds_db, quad, True)


def snr_coverage(cfg, thresholds_db, quad=Quadrature()):
    return _curve("SNR", cfg, thresholds_db, quad, False)


def sir_coverage(cfg, thresholds_db, quad=Quadrature()):
    return _curve("SIR", cfg.with_(noise_power=0.0), thresholds_db, quad, True)


def load_pmf(ratio, cell, n):
    """Users attached to the serving BS ('serving') or a typical BS ('typical')."""
    if ratio <= 0:
        raise ValueError("load ratio must be positive")
    n = np.asarray(n)
    k = n - 1 if cell == "serving" else n
    if cell not in ("serving", "typical"):
        raise ValueError(f"cell must be 'serving' or 'typical', got {cell!r}")
    shape = 4.5 if cell == "serving" else 3.5
    kf = np.maximum(k, 0).astype(float)
    logp = (
        3.5 * math.log(3.5)
        + special.gammaln(kf + shape)
        - special.gammaln(kf + 1)
        - special.gammaln(3.5)
        + kf * math.log(ratio)
        - (kf + shape) * math.log(3.5 + ratio)
    )
    out = np.where(k >= 0, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def mean_serving_load(ratio):
    """Mean of the serving-cell load PMF (1 + 4.5/3.5 ratio, i.e. ~1 + 1.28 ratio)."""
    return 1.0 + 4.5 / 3.5 * ratio


def default_n_max(ratio):
    return int(math.ceil(10.0 * (1.0 + ratio)))


def rate_coverage(cfg, tau, quad=Quadrature(), n_max=None):
    """Rate CCDF under round-robin sharing with the serving-cell load PMF."""
    ratio = cfg.load_ratio
    n_max = default_n_max(ratio) if n_max is None else int(n_max)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ns = np.arange(1, n_max + 1)
    w = load_pmf(ratio, "serving", ns)
    tail = float(special.betainc(n_max, 4.5, ratio / (3.5 + ratio)))  # P(load > n_max)
    cache = {}

    def s(t_lin):
        if t_lin not in cache:
            cache[t_lin] = coverage_at(cfg, t_lin, quad)
        return cache[t_lin]

    tau = np.asarray(tau, dtype=float)
    probs = []
    for rate in tau:
        if rate <= 0:
            # any positive SINR gives a positive rate
            probs.append(1.0)
            continue
        acc = 0.0
        for n, wn in zip(ns, w):
            if wn < TERM_FLOOR:
                continue
            sn = s(float(np.expm1(rate * n / cfg.bandwidth * math.log(2.0))))
            acc += wn * sn
            if sn < COVERAGE_FLOOR:
                break  # thresholds grow with n and S is non-increasing
        probs.append(min(acc, 1.0))
    curve = CoverageCurve("RATE", tau, probs, cfg.fingerprint(), meta={"source": "analytic", "n_max": n_max, "tail_mass": tail})
    if tail > 1e-3:
        msg = f"load PMF tail beyond n_max={n_max} is {tail:.3g}"
        curve.warnings.append(msg)
        warnings.warn(msg)
    return curve


def rate_coverage_mean_load(cfg, tau, quad=Quadrature()):
    """Rate CCDF with the load replaced by its mean 1 + 1.28 lambda_u/lambda."""
    load = 1.0 + 1.28 * cfg.load_ratio
    tau = np.asarray(tau, dtype=float)
    probs = [coverage_at(cfg, float(np.expm1(r * load / cfg.bandwidth * math.log(2.0))), quad) for r in tau]
    return CoverageCurve("RATE", tau, probs, cfg.fingerprint(), meta={"source": "analytic-mean-load"})


def uplink_q(cfg, y):
    """P(a user's minimum path loss d^alpha/C to its BSs is below y)."""
    y = np.asarray(y, dtype=float)
    pl = cfg.pathloss
    r_n = (y * pl.c_nlos) ** (1.0 / pl.alpha_nlos)
    r_l = (y * pl.c_los) ** (1.0 / pl.alpha_los)
    return -np.expm1(-(_nlos_cum(cfg, r_n) + _los_cum(cfg, r_l)))


def uplink_densities(cfg, r):
    """Densities of LOS and NLOS other-cell uplink interferers at distance r."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    pl = cfg.pathloss
    p = cfg.los_model(r)
    lam_l = cfg.bs_density * p * uplink_q(cfg, r**pl.alpha_los / pl.c_los)
    lam_n = cfg.bs_density * (1.0 - p) * uplink_q(cfg, r**pl.alpha_nlos / pl.c_nlos)
    return lam_l, lam_n


def hetnet_rate(a_mmw, r_mmw, r_uhf):
    """Total-probability combination of two non-interfering tiers."""
    if not 0.0 <= a_mmw <= 1.0:
        raise ValueError("association probability must lie in [0, 1]")
    if not np.array_equal(r_mmw.thresholds, r_uhf.thresholds):
        raise ValueError("curves must share the same rate grid")
    probs = a_mmw * r_mmw.probs + (1.0 - a_mmw) * r_uhf.probs
    return CoverageCurve("RATE", r_mmw.thresholds.copy(), probs, meta={"source": "hetnet", "a_mmw": a_mmw})
