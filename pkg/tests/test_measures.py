import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from scz_lab import measures as Me
from scz_lab.critical_radius import builtin_rho, rho_from_measure
from scz_lab.errors import CannotCertify, NoBracket, PreconditionError

LEB = Me.MeasureModel.lebesgue(3)
RHO_LEB = math.sqrt(3 / (4 * math.pi))


@pytest.fixture(scope="module")
def triples():
    return Me.growth_sample(3, 500, seed=0)


@pytest.fixture(scope="module")
def certified_lebesgue(triples):
    return Me.certify_growth(LEB, *triples)[0]


def test_unit_ball_volume():
    assert LEB.ball_measure(np.zeros(3), 1.0) == pytest.approx(4 * math.pi / 3, rel=1e-14)


def test_atom_outside_ball():
    assert Me.MeasureModel.atom([0.0, 0.0, 0.0]).ball_measure([1.0, 0.0, 0.0], 0.5) == 0.0


def test_quadratic_density_ball():
    oracle = integrate.quad(lambda r: r**2 * 4 * math.pi * r**2, 0, 1)[0]
    assert Me.MeasureModel.quadratic(3).ball_measure(np.zeros(3), 1.0) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(4 * math.pi / 5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.05, 2.0))
def test_quadratic_ball_against_cubature(center, r):
    x = np.array(center)
    oracle = integrate.tplquad(
        lambda s, th, ph: np.sum((x + s * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                                                    np.cos(th)])) ** 2) * s**2 * np.sin(th),
        0, 2 * math.pi, 0, math.pi, 0, r, epsabs=0, epsrel=1e-9)[0]
    assert Me.MeasureModel.quadratic(3).ball_measure(x, r) == pytest.approx(oracle, rel=1e-7)


def test_lebesgue_growth_constants(triples):
    _, cert = Me.certify_growth(LEB, *triples)
    # mu(B(x,r))/mu(B(x,R)) = (r/R)^3 = (r/R)^(d-2+delta) with delta = 2
    assert cert.delta == 2.0
    assert cert.C == pytest.approx(1.0, abs=1e-9)
    assert cert.D == 8.0


def test_atom_growth_rejected(triples):
    with pytest.raises(CannotCertify) as info:
        Me.certify_growth(Me.MeasureModel.atom([0.0, 0.0, 0.0]), *triples)
    assert info.value.witness is not None


def test_quadratic_growth_certifies(triples):
    _, cert = Me.certify_growth(Me.MeasureModel.quadratic(3), *triples)
    assert cert.delta > 0 and math.isfinite(cert.C)


def test_integral_estimates_closed_forms(certified_lebesgue):
    res = Me.check_integral_estimates(certified_lebesgue, np.zeros(3), 1.0)
    # int_B |y|^-1 dy = 2 pi R^2 against |B| / R, int_B |y|^-2 dy = 4 pi R against |B| / R^2
    assert res[1].integral == pytest.approx(2 * math.pi, rel=0.02)
    assert res[1].C == pytest.approx(1.5, rel=0.02)
    assert res[2].integral == pytest.approx(4 * math.pi, rel=0.02)
    assert res[2].C == pytest.approx(3.0, rel=0.02)


def test_far_atom_integrals_vanish():
    far = Me.MeasureModel(3, None, 0.0, (((5.0, 0.0, 0.0), 1.0),), delta=2.0, C=1.0, D=8.0)
    res = Me.check_integral_estimates(far, np.zeros(3), 1.0)
    assert all(v.integral == 0.0 and v.C == 0.0 for v in res.values())


def test_extra_decay_lebesgue(certified_lebesgue, triples):
    x, _, R = triples
    res = Me.check_extra_decay(certified_lebesgue, builtin_rho("constant", rho0=RHO_LEB), x, R, N=3.0)
    assert math.isfinite(res["C"])


def test_extra_decay_at_criticality(certified_lebesgue):
    # for R <= rho_mu the definition already gives mu(B)/R^(d-2) <= 1
    R = np.linspace(0.05, RHO_LEB, 20)
    x = np.zeros((20, 3))
    res = Me.check_extra_decay(certified_lebesgue, builtin_rho("constant", rho0=RHO_LEB), x, R, N=3.0)
    assert res["C"] <= 1 + 1e-12


def test_extra_decay_needs_enough_decay(certified_lebesgue):
    with pytest.raises(PreconditionError):
        Me.check_extra_decay(certified_lebesgue, builtin_rho("constant", rho0=RHO_LEB),
                             np.zeros((1, 3)), [1.0], N=2.0)


def test_radius_of_lebesgue():
    assert rho_from_measure(LEB, np.array([0.3, -0.2, 0.9])) == pytest.approx(RHO_LEB, rel=1e-6)


def test_radius_scales_with_measure():
    mu = Me.MeasureModel.lebesgue(3, scale=4.0)
    assert rho_from_measure(mu, np.zeros(3)) == pytest.approx(RHO_LEB / 2, rel=1e-6)


def test_radius_of_atom_has_no_bracket():
    with pytest.raises((NoBracket, CannotCertify)):
        rho_from_measure(Me.MeasureModel.atom([0.0, 0.0, 0.0]), np.zeros(3))
