import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scz_lab.critical_radius import (CriticalRadius, build_covering, builtin_rho, compatibility_constants,
                                     rho_sim_on_neighbors, sample_pairs, validate_critical_radius)
from scz_lab.errors import NoFit, NonPositiveRho, PreconditionError
from scz_lab.grid import GridDomain, ball_index


def test_harmonic_values():
    rho = builtin_rho("harmonic_oscillator")
    assert rho(np.zeros(2)) == 1.0
    assert rho(np.array([2.0, 0.0])) == 0.5


def test_constant_radius_needs_no_slack():
    x, y = sample_pairs(2, 500, 10.0, seed=1)
    need, _, _ = compatibility_constants(builtin_rho("constant", rho0=5.0), x, y, 0.0)
    assert np.all(need == 1.0)


def test_constant_fit_is_trivial():
    x, y = sample_pairs(3, 200, 4.0)
    fit = validate_critical_radius(builtin_rho("constant", rho0=5.0), x, y)
    assert (fit.C0, fit.k0) == (1.0, 0.0)


def test_harmonic_fit_on_ten_thousand_pairs():
    x, y = sample_pairs(2, 10_000, 20.0, seed=0)
    fit = validate_critical_radius(builtin_rho("harmonic_oscillator"), x, y)
    # exhaustive oracle: the returned C0 is the exact sample maximum at the fitted k0
    need, _, _ = compatibility_constants(builtin_rho("harmonic_oscillator"), x, y, fit.k0)
    assert fit.k0 == 1.0
    assert math.isfinite(fit.C0) and fit.C0 == pytest.approx(float(need.max()))


def test_exponential_radius_has_no_fit():
    x, y = sample_pairs(1, 2000, 10.0, seed=2)
    bad = CriticalRadius(lambda p: np.exp(np.linalg.norm(p, axis=1)), "exponential")
    # direct violation search: the requirement exceeds the cap at every lattice k0
    for k0 in np.arange(0, 8.25, 0.25):
        assert compatibility_constants(bad, x, y, k0)[0].max() > 2.0
    with pytest.raises(NoFit) as info:
        validate_critical_radius(bad, x, y)
    assert info.value.witness is not None


def test_nonpositive_constant_rejected():
    with pytest.raises(NonPositiveRho):
        builtin_rho("constant", rho0=0.0)


def test_neighbor_ratio_constant_and_diagonal():
    rho = builtin_rho("constant", rho0=2.0)
    assert rho_sim_on_neighbors(rho, np.zeros(2), np.array([1.0, 0.5])).ratio == 1.0
    h = builtin_rho("harmonic_oscillator")
    x = np.array([3.0, 1.0])
    assert rho_sim_on_neighbors(h, x, x).ratio == 1.0


def test_neighbor_ratio_harmonic_interval():
    h = builtin_rho("harmonic_oscillator")
    res = rho_sim_on_neighbors(h, np.array([1.0]), np.array([1.5]))
    assert res.ratio == pytest.approx(1.5)
    assert 1 / (2 * h.C0) <= res.ratio <= 2 * h.C0
    assert res.holds


def test_neighbor_ratio_requires_closeness():
    with pytest.raises(PreconditionError):
        rho_sim_on_neighbors(builtin_rho("constant", rho0=1.0), np.zeros(1), np.array([3.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-8, 8), min_size=2, max_size=2), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_neighbor_ratio_holds_for_harmonic(x, frac, angle):
    h = builtin_rho("harmonic_oscillator")
    x = np.array(x)
    y = x + frac * h(x) * np.array([math.cos(angle), math.sin(angle)])
    assert rho_sim_on_neighbors(h, x, y).holds


def test_single_ball_covers_when_radius_is_large():
    dom = GridDomain(2, 2.0, 21)
    cov = build_covering(builtin_rho("constant", rho0=2 * dom.L * math.sqrt(2)), dom)
    assert len(cov.centers) == 1
    assert cov.overlaps[0] == 1 and cov.covered_fraction == 1.0


def test_unit_radius_covering_in_one_dimension():
    dom = GridDomain(1, 10.0, 201)
    rho = builtin_rho("constant", rho0=1.0)
    cov = build_covering(rho, dom)
    assert len(cov.centers) <= 21
    hit = np.zeros(dom.size, bool)
    for c, r in zip(cov.centers, cov.radii):
        hit[ball_index(dom, c, r)] = True
    assert hit.all()


def test_harmonic_covering_overlap_fit():
    dom = GridDomain(1, 20.0, 801)
    rho = builtin_rho("harmonic_oscillator")
    cov = build_covering(rho, dom)
    assert cov.covered_fraction == 1.0
    # recount the overlap at sigma = 4 directly
    count = np.zeros(dom.size, int)
    for c, r in zip(cov.centers, cov.radii):
        count[ball_index(dom, c, 4 * r)] += 1
    assert count.max() == cov.overlaps[cov.sigmas.index(4)]
    assert count.max() <= cov.C * 4**cov.N1 * (1 + 1e-12)
