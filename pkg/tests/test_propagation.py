import math

import numpy as np
import pytest
from scipy import special

from mmwave_coverage.blockage import DomainError
from mmwave_coverage.propagation import (
    AntennaPattern,
    FadingParams,
    PathLossParams,
    alzer_ccdf_bound,
    friis_intercept,
    gain_pmf,
    lin_to_db,
    nakagami_eta,
    path_loss,
    sample_nakagami,
    sectored_fit,
    ula_gain,
)

C28 = friis_intercept(28e9)


def test_friis_28ghz():
    assert C28 == pytest.approx(7.26e-7, rel=0.01)
    assert lin_to_db(C28) == pytest.approx(-61.4, abs=0.05)


def test_path_loss_reference_and_power_law():
    pl = PathLossParams(C28, C28, 2.0, 4.0)
    assert path_loss(pl, 1.0, "LOS") == C28
    vals = [path_loss(pl, d, "LOS") * d**2 for d in (1.0, 10.0, 100.0)]
    assert np.allclose(vals, C28, rtol=1e-14)
    d = np.geomspace(1, 1e4, 200)
    assert np.all(np.diff(path_loss(pl, d, "NLOS")) < 0)
    assert np.all(path_loss(pl, d, "NLOS") <= path_loss(pl, d, "LOS"))


def test_path_loss_errors():
    pl = PathLossParams(C28, C28)
    with pytest.raises(DomainError):
        path_loss(pl, 0.0, "LOS")
    with pytest.raises(DomainError):
        path_loss(pl, 1.0, "los")
    with pytest.raises(DomainError):
        PathLossParams(C28, C28, 3.0, 2.0)


def test_exclusion_radii_are_inverse():
    pl = PathLossParams(C28, C28 * 0.1, 2.0, 3.3)
    x = np.array([5.0, 50.0, 500.0])
    y = pl.nlos_exclusion(x)
    # an NLOS BS at y has the same path gain as a LOS BS at x
    assert np.allclose(pl.gain(y, False), pl.gain(x, True), rtol=1e-12)
    assert np.allclose(pl.los_exclusion(y), x, rtol=1e-12)


def test_gain_pmf_omni_and_table():
    omni = AntennaPattern(3.0, 3.0, 2 * math.pi)
    g = gain_pmf(omni, omni)
    live = [a for a, b in zip(g.gains, g.probs) if b > 0]
    assert set(live) == {9.0} and sum(g.probs) == 1.0
    g = gain_pmf(AntennaPattern.from_db(20, -10, 30), AntennaPattern.from_db(10, -10, 90))
    assert g.probs[0] == pytest.approx(1 / 48, abs=1e-15)
    assert math.fsum(g.probs) == pytest.approx(1.0, abs=1e-15)
    assert g.serving_gain == max(g.gains)
    assert g.mean <= g.serving_gain


def test_antenna_invariants():
    with pytest.raises(DomainError):
        AntennaPattern(1.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        AntennaPattern(2.0, 1.0, 0.0)


def test_paper_bs_pattern_representable():
    p = AntennaPattern.from_db(18, -2, 10)
    assert p.main_gain == pytest.approx(10**1.8)
    assert p.side_gain == pytest.approx(10**-0.2)
    assert p.beamwidth == pytest.approx(math.radians(10))


def test_nakagami_moments():
    rng = np.random.default_rng(7)
    h1 = sample_nakagami(1, rng, 10**6)
    assert abs(h1.mean() - 1) < 0.01
    h3 = sample_nakagami(3, rng, 10**6)
    assert h3.var() == pytest.approx(1 / 3, rel=0.05)
    assert sample_nakagami(10**6, rng, 1000).std() < 0.002
    with pytest.raises(DomainError):
        sample_nakagami(0, rng)


def test_alzer_examples():
    assert alzer_ccdf_bound(1, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert alzer_ccdf_bound(2, 1.0) == pytest.approx(1 - (1 - math.exp(-math.sqrt(2))) ** 2, abs=1e-14)
    assert round(alzer_ccdf_bound(2, 1.0), 5) == 0.42713
    exact = special.gammaincc(2, 2.0)
    assert exact == pytest.approx(3 * math.exp(-2), abs=1e-15)
    assert alzer_ccdf_bound(2, 1.0) >= exact


def test_alzer_matches_alternating_sum():
    for nu in range(1, 9):
        eta = nakagami_eta(nu)
        for g in (0.01, 0.1, 1.0, 10.0):
            alt = sum((-1) ** (n + 1) * math.comb(nu, n) * math.exp(-eta * n * g) for n in range(1, nu + 1))
            assert alzer_ccdf_bound(nu, g) == pytest.approx(alt, abs=1e-12)


def test_ula_examples():
    assert ula_gain(8, 0.5, 0.3, 0.3) == pytest.approx(8.0, rel=1e-12)
    assert ula_gain(8, 0.5, 0.0, math.asin(0.25)) < 1e-10
    phis = np.linspace(-1.5, 1.5, 7)
    assert np.allclose(ula_gain(1, 0.5, 0.2, phis), 1.0)
    phi = np.linspace(-math.pi / 2, math.pi / 2, 20001)
    g = ula_gain(16, 0.5, 0.4, phi)
    assert g.mean() <= 16
    assert g.max() == pytest.approx(16, rel=1e-3)
    assert abs(phi[np.argmax(g)] - 0.4) < 1e-3


def test_sectored_fit_rules():
    p2 = sectored_fit(2)
    assert p2.main_gain == 2.0
    half = p2.beamwidth / 2
    assert ula_gain(2, 0.5, 0.0, half) == pytest.approx(1.0, rel=1e-9)
    # power conservation over [-pi, pi]
    phi = np.linspace(-math.pi, math.pi, 1 << 16, endpoint=False)
    exact = ula_gain(8, 0.5, 0.0, phi).mean() * 2 * math.pi
    p8 = sectored_fit(8)
    sect = p8.main_gain * p8.beamwidth + p8.side_gain * (2 * math.pi - p8.beamwidth)
    assert sect == pytest.approx(exact, rel=1e-9)
    widths = [sectored_fit(n).beamwidth for n in (2, 4, 8, 16, 32)]
    assert all(b < a for a, b in zip(widths, widths[1:]))
    with pytest.raises(DomainError):
        sectored_fit(1)


def test_fading_params():
    assert FadingParams(3, 2).nu(True) == 3
    with pytest.raises(DomainError):
        FadingParams(0, 2)
    with pytest.raises(DomainError):
        FadingParams(1.5, 2)
