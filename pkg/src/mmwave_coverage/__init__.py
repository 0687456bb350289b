"""Coverage and rate analysis of mmWave cellular downlinks.

Analytic evaluation (stochastic geometry) and a snapshot Monte Carlo simulator
share one scenario description, :class:`NetworkConfig`.
"""
from .blockage import (
    BuildingStats,
    DomainError,
    EmpiricalTable,
    FitError,
    GeneralizedLosBall,
    LosBall,
    SuburbanExp,
    ThreeGppUrban,
    fit_3gpp_urban,
    fit_suburban_exp,
    los_ball_radius,
    p_los,
    rst_c,
)
from .curves import CoverageCurve
from .network import NetworkConfig
from .propagation import AntennaPattern, FadingParams, PathLossParams, gain_pmf
from .quadrature import Quadrature, QuadratureError

__version__ = "0.1.0"
