"""Scenario parameterization shared by the analytic and Monte Carlo paths."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from .blockage import DomainError
from .propagation import AntennaPattern, FadingParams, PathLossParams, gain_pmf

PER_KM2 = 1e-6


@dataclass(frozen=True)
class NetworkConfig:
    """Downlink scenario; densities per m^2, noise normalized by transmit power."""

    bs_density: float
    user_density: float
    los_model: object
    pathloss: PathLossParams
    bs_pattern: AntennaPattern
    ms_pattern: AntennaPattern
    fading: FadingParams = field(default_factory=FadingParams)
    noise_power: float = 0.0
    bandwidth: float = 200e6

    def __post_init__(self):
        if self.bs_density <= 0 or self.user_density <= 0:
            raise DomainError("densities must be positive")
        if self.noise_power < 0:
            raise DomainError("noise power must be non-negative")
        if self.bandwidth <= 0:
            raise DomainError("bandwidth must be positive")

    @property
    def gains(self):
        return gain_pmf(self.bs_pattern, self.ms_pattern)

    @property
    def load_ratio(self):
        return self.user_density / self.bs_density

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "bs_density": self.bs_density,
            "user_density": self.user_density,
            "los_model": self.los_model.to_dict(),
            "pathloss": vars(self.pathloss),
            "bs_pattern": vars(self.bs_pattern),
            "ms_pattern": vars(self.ms_pattern),
            "fading": vars(self.fading),
            "noise_power": self.noise_power,
            "bandwidth": self.bandwidth,
        }

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
