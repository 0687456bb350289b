"""Per-link physics: path loss, Nakagami fading, antenna patterns and gains."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .blockage import DomainError

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0
D_MIN = 1.0  # reference distance of the path-loss law, m


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def friis_intercept(freq_hz):
    """Free-space gain at 1 m, (lambda_c / 4 pi)^2."""
    return (SPEED_OF_LIGHT / freq_hz / (4.0 * math.pi)) ** 2


def normalized_noise_power(bandwidth_hz, noise_figure_db, tx_power_dbm):
    """Thermal noise plus noise figure, divided by the transmit power (linear)."""
    noise_dbm = THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((noise_dbm - tx_power_dbm) / 10.0)


@dataclass(frozen=True)
class PathLossParams:
    c_los: float
    c_nlos: float
    alpha_los: float = 2.0
    alpha_nlos: float = 4.0

    def __post_init__(self):
        if self.c_los <= 0 or self.c_nlos <= 0:
            raise DomainError("path-loss intercepts must be positive")
        if self.alpha_los < 1 or self.alpha_nlos < 1:
            raise DomainError("path-loss exponents must be >= 1")
        if self.alpha_nlos < self.alpha_los:
            raise DomainError("alpha_nlos must be >= alpha_los")

    def intercept(self, los):
        return self.c_los if los else self.c_nlos

    def exponent(self, los):
        return self.alpha_los if los else self.alpha_nlos

    def gain(self, d, los):
        """Vectorized C_s d^{-alpha_s}; ``los`` is a bool or boolean array."""
        d = np.asarray(d, dtype=float)
        los = np.asarray(los, dtype=bool)
        c = np.where(los, self.c_los, self.c_nlos)
        a = np.where(los, self.alpha_los, self.alpha_nlos)
        return c * d ** (-a)

    def nlos_exclusion(self, x):
        """Distance inside which an NLOS BS would beat a LOS server at x."""
        return (self.c_nlos / self.c_los * np.asarray(x, dtype=float) ** self.alpha_los) ** (1.0 / self.alpha_nlos)

    def los_exclusion(self, x):
        """Distance inside which a LOS BS would beat an NLOS server at x."""
        return (self.c_los / self.c_nlos * np.asarray(x, dtype=float) ** self.alpha_nlos) ** (1.0 / self.alpha_los)


def path_loss(params, d, state):
    """Linear path gain of a link of length ``d`` in state 'LOS' or 'NLOS'."""
    if np.any(np.asarray(d) <= 0):
        raise DomainError("path loss is singular at d = 0")
    if state not in ("LOS", "NLOS"):
        raise DomainError(f"state must be 'LOS' or 'NLOS', got {state!r}")
    out = params.gain(d, state == "LOS")
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AntennaPattern:
    """Sectored pattern: gain ``main_gain`` over ``beamwidth`` rad, ``side_gain`` elsewhere."""

    main_gain: float
    side_gain: float
    beamwidth: float

    def __post_init__(self):
        if not (self.main_gain >= self.side_gain > 0):
            raise DomainError("antenna gains must satisfy main >= side > 0")
        if not (0 < self.beamwidth <= 2 * math.pi):
            raise DomainError("beamwidth must lie in (0, 2 pi]")

    @classmethod
    def from_db(cls, gain_db, side_db, beamwidth_deg):
        return cls(10 ** (gain_db / 10), 10 ** (side_db / 10), math.radians(beamwidth_deg))

    @property
    def main_fraction(self):
        return self.beamwidth / (2 * math.pi)


@dataclass(frozen=True)
class GainPmf:
    gains: tuple
    probs: tuple
    serving_gain: float

    @property
    def mean(self):
        return math.fsum(a * b for a, b in zip(self.gains, self.probs))

    def normalized(self):
        """Gains divided by the serving gain (the a_k bar constants)."""
        return np.asarray(self.gains) / self.serving_gain


def gain_pmf(bs, ms):
    """Distribution of the interferer directivity gain for random beam steering."""
    cb, cm = bs.main_fraction, ms.main_fraction
    gains = (ms.main_gain * bs.main_gain, ms.main_gain * bs.side_gain, ms.side_gain * bs.main_gain, ms.side_gain * bs.side_gain)
    b1, b2, b3 = cm * cb, cm * (1 - cb), (1 - cm) * cb
    b4 = (1 - cm) * (1 - cb)
    probs = (b1, b2, b3, b4)
    return GainPmf(gains=gains, probs=probs, serving_gain=bs.main_gain * ms.main_gain)


def nakagami_eta(nu):
    return nu * math.factorial(nu) ** (-1.0 / nu)


def sample_nakagami(nu, rng, size=None):
    """Normalized Gamma(nu, 1/nu) power fading samples (mean 1)."""
    if nu < 1:
        raise DomainError("Nakagami parameter must be >= 1")
    return rng.gamma(nu, 1.0 / nu, size)


def alzer_ccdf_bound(nu, gamma):
    """Upper bound 1 - (1 - e^{-eta gamma})^nu on P(h > gamma), exact for nu = 1."""
    if nu < 1 or int(nu) != nu:
        raise DomainError("nu must be a positive integer")
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise DomainError("gamma must be positive")
    if nu == 1:
        # closed form; the log1p route loses an ulp
        out = np.exp(-g)
    else:
        out = -np.expm1(nu * np.log1p(-np.exp(-nakagami_eta(int(nu)) * g)))
    return float(out) if np.ndim(out) == 0 else out


def ula_gain(n_antennas, spacing_wavelengths, steer, actual):
    """Beamforming gain |w^* a(actual)|^2 of an n-element ULA with w = a(steer)/sqrt(n)."""
    steer = np.asarray(steer, dtype=float)
    actual = np.asarray(actual, dtype=float)
    psi = 2 * math.pi * spacing_wavelengths * (np.sin(actual) - np.sin(steer))
    k = np.arange(n_antennas)
    field = np.exp(1j * np.multiply.outer(psi, k)).sum(axis=-1)
    out = np.abs(field) ** 2 / n_antennas
    return float(out) if np.ndim(out) == 0 else out


def sectored_fit(n_antennas, spacing_wavelengths=0.5, grid=1 << 15):
    """Two-level approximation of a boresight-steered ULA pattern.

    Main gain is the boresight gain n, the beamwidth is the 3 dB width, and the
    side gain is set so both patterns radiate the same total power over
    [-pi, pi] (the trapezoid rule is spectrally accurate for this periodic
    integrand).
    """
    n = int(n_antennas)
    if n < 2:
        raise DomainError("sectored fit needs at least two antennas")
    first_null = math.asin(min(1.0, 1.0 / (n * spacing_wavelengths)))
    half = optimize.brentq(lambda phi: ula_gain(n, spacing_wavelengths, 0.0, phi) - n / 2.0, 0.0, first_null, xtol=1e-14)
    beamwidth = 2.0 * half
    phi = np.linspace(-math.pi, math.pi, grid, endpoint=False)
    total = ula_gain(n, spacing_wavelengths, 0.0, phi).mean() * 2 * math.pi
    side = (total - n * beamwidth) / (2 * math.pi - beamwidth)
    return AntennaPattern(main_gain=float(n), side_gain=float(side), beamwidth=float(beamwidth))


@dataclass(frozen=True)
class FadingParams:
    nu_los: int = 3
    nu_nlos: int = 2

    def __post_init__(self):
        for v in (self.nu_los, self.nu_nlos):
            if int(v) != v or v < 1:
                raise DomainError("Nakagami parameters must be integers >= 1")

    def nu(self, los):
        return self.nu_los if los else self.nu_nlos
