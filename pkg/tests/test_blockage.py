import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mmwave_coverage.blockage import (
    BuildingStats,
    DomainError,
    EmpiricalTable,
    GeneralizedLosBall,
    LosBall,
    SuburbanExp,
    ThreeGppUrban,
    fit_3gpp_urban,
    fit_suburban_exp,
    los_ball_radius,
    los_mass_quad,
    los_model_from_dict,
    p_los,
    rst_c,
)

MODELS = [
    ThreeGppUrban(18, 63),
    SuburbanExp(200),
    LosBall(200),
    GeneralizedLosBall(200, 0.3),
    EmpiricalTable((0, 50, 120, 400), (1.0, 0.7, 0.3, 0.05)),
]


def test_point_values():
    assert p_los(ThreeGppUrban(18, 63), 10) == 1.0
    assert p_los(SuburbanExp(200), 200) == pytest.approx(math.exp(-1), abs=1e-12)
    assert p_los(LosBall(200), 100) == 1.0
    assert p_los(LosBall(200), 300) == 0.0
    expected = 0.18 * (1 - math.exp(-100 / 63)) + math.exp(-100 / 63)
    assert p_los(ThreeGppUrban(18, 63), 100) == pytest.approx(expected, abs=1e-12)
    assert p_los(ThreeGppUrban(18, 63), 100) == pytest.approx(0.3476, abs=1e-4)


def test_negative_distance_rejected():
    with pytest.raises(DomainError):
        p_los(SuburbanExp(200), -1.0)


def test_empirical_table_interpolates_and_clamps():
    t = EmpiricalTable((10, 20), (0.8, 0.4))
    assert p_los(t, 15) == pytest.approx(0.6)
    assert p_los(t, 0) == 0.8
    assert p_los(t, 1000) == 0.4


@pytest.mark.parametrize(
    "bad",
    [
        lambda: ThreeGppUrban(0, 63),
        lambda: SuburbanExp(-1),
        lambda: LosBall(0),
        lambda: GeneralizedLosBall(200, 1.5),
        lambda: EmpiricalTable((10, 5), (0.5, 0.5)),
        lambda: EmpiricalTable((10, 20), (0.5, 1.2)),
    ],
)
def test_invariants_enforced(bad):
    with pytest.raises(DomainError):
        bad()


@given(st.floats(0, 1e5), st.sampled_from(range(len(MODELS))))
@settings(max_examples=300, deadline=None)
def test_probability_range(d, k):
    assert 0.0 <= p_los(MODELS[k], d) <= 1.0


def test_monotonicity():
    d = np.linspace(0, 2000, 4001)
    assert np.all(np.diff(SuburbanExp(200)(d)) < 0)
    u = ThreeGppUrban(18, 63)
    far = d[d >= 18]
    assert np.all(np.diff(u(far)) <= 1e-15)
    # continuity at the knee
    assert u(18 - 1e-9) == pytest.approx(u(18 + 1e-9), abs=1e-9)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: type(m).__name__)
@pytest.mark.parametrize("x", [5.0, 18.0, 90.0, 200.0, 700.0])
def test_los_mass_matches_quadrature(model, x):
    assert model.los_mass(x) == pytest.approx(los_mass_quad(model, x), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: type(m).__name__)
def test_serialization_round_trip(model):
    assert los_model_from_dict(model.to_dict()) == model


def test_rst_perimeter_arithmetic():
    stats = BuildingStats(math.pi * 1e-4, 100.0, 500.0, 0.1)
    assert rst_c(stats, "perimeter") == pytest.approx(100.0, rel=1e-12)


def test_rst_area_formula():
    stats = BuildingStats(1e-4, 100.0, 600.0, 0.2)
    assert rst_c(stats, "area") == pytest.approx(-math.pi * 600 / (math.log(0.8) * 100), rel=1e-12)


@pytest.mark.parametrize(
    "stats,method",
    [
        (BuildingStats(0.0, 100.0, 500.0, 0.1), "perimeter"),
        (BuildingStats(1e-4, 0.0, 500.0, 0.1), "perimeter"),
        (BuildingStats(1e-4, 100.0, 500.0, 0.0), "area"),
    ],
)
def test_rst_degenerate_inputs(stats, method):
    with pytest.raises(DomainError):
        rst_c(stats, method)


def test_los_ball_radius_area_matching():
    # LOS ball of radius R_B covers the same mean LOS area as e^{-d/C}
    stats = BuildingStats(math.pi * 1e-4, 100.0, 500.0, 0.1)
    c = rst_c(stats, "perimeter")
    exp_area = 2 * math.pi * integrate.quad(lambda r: math.exp(-r / c) * r, 0, math.inf)[0]
    r_b = los_ball_radius(stats)
    assert math.pi * r_b**2 == pytest.approx(exp_area, rel=1e-9)
    assert r_b == pytest.approx(math.sqrt(2) * c, rel=1e-12)


def test_los_ball_radius_rejects_no_blockage():
    with pytest.raises(DomainError):
        los_ball_radius(BuildingStats(0.0, 0.0, 0.0, 0.0))


def _table_from(model, d):
    return EmpiricalTable(tuple(d), tuple(model(d)))


def test_fit_3gpp_recovers_self_generated():
    d = np.arange(5.0, 305.0, 5.0)
    fit = fit_3gpp_urban(_table_from(ThreeGppUrban(18, 63), d))
    assert fit.model.a == pytest.approx(18, rel=0.01)
    assert fit.model.b == pytest.approx(63, rel=0.01)
    assert fit.rmse_pct < 0.1
    again = fit_3gpp_urban(_table_from(fit.model, d))
    assert again.model.a == pytest.approx(fit.model.a, rel=1e-4)


def test_fit_3gpp_needs_enough_points():
    with pytest.raises(DomainError):
        fit_3gpp_urban(EmpiricalTable((10, 20, 30), (1, 0.9, 0.8)))
    with pytest.raises(DomainError):
        fit_3gpp_urban(_table_from(ThreeGppUrban(), np.linspace(10, 100, 20)))


def test_fit_exponential_with_offset():
    d = np.arange(5.0, 600.0, 10.0)
    p = np.minimum(np.exp(-d / 120 + 0.2), 1.0)
    fit = fit_suburban_exp(EmpiricalTable(tuple(d), tuple(p)))
    assert fit.model.c == pytest.approx(120, rel=1e-4)
    assert fit.offset == pytest.approx(0.2, abs=1e-4)
