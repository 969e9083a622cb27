import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scz_lab.errors import EmptyBall, NegativeWeight, UnresolvedAnnulus
from scz_lab.grid import (Ball, BallFamily, GridDomain, GridFunction, annulus_nodes, ball_average, ball_count,
                          ball_index, integrate, load_grid_function, save_grid_function, weighted_lp_norm)


def test_domain_rejects_single_node():
    with pytest.raises(ValueError):
        GridDomain(1, 1.0, 1)


def test_constant_field_average():
    dom = GridDomain(2, 3.0, 31)
    f = GridFunction.constant(dom, 3.0)
    assert ball_average(f, Ball((0.4, -1.0), 0.9)) == 3.0


def test_odd_field_averages_to_zero():
    dom = GridDomain(1, 4.0, 81)
    f = GridFunction.from_callable(dom, lambda p: p[:, 0])
    assert abs(ball_average(f, Ball((0.0,), 4.0))) < 1e-14


def test_indicator_average_matches_node_enumeration():
    dom = GridDomain(1, 2.0, 17)  # h = 0.25
    f = GridFunction.from_callable(dom, lambda p: (p[:, 0] > 0).astype(float))
    xs = dom.axis()
    inside = [x for x in xs if abs(x) <= 1.0 + 1e-12]
    expected = sum(1 for x in inside if x > 0) / len(inside)
    assert ball_average(f, Ball((0.0,), 1.0)) == pytest.approx(expected, abs=1e-15)


def test_empty_ball_raises():
    dom = GridDomain(1, 1.0, 3)
    with pytest.raises(EmptyBall):
        ball_average(GridFunction.constant(dom, 1.0), Ball((0.5,), 0.1))


def test_unit_mass_norms():
    dom = GridDomain(1, 0.5, 201)
    one = GridFunction.constant(dom, 1.0)
    # the node sum over-counts the interval by one cell
    assert weighted_lp_norm(one, one, 2) == pytest.approx(1.0, abs=2 * dom.h)
    assert weighted_lp_norm(one, one, math.inf) == 1.0


def test_exponential_l1_norm_against_closed_form():
    dom = GridDomain(1, 10.0, 20001)
    f = GridFunction.from_callable(dom, lambda p: np.exp(-np.abs(p[:, 0])))
    one = GridFunction.constant(dom, 1.0)
    exact = 2 * (1 - math.exp(-10))
    assert weighted_lp_norm(f, one, 1) == pytest.approx(exact, rel=2e-3)


def test_negative_weight_rejected():
    dom = GridDomain(1, 1.0, 5)
    one = GridFunction.constant(dom, 1.0)
    with pytest.raises(NegativeWeight):
        weighted_lp_norm(one, GridFunction.constant(dom, -1.0), 2)


def test_annulus_nodes_one_dimensional():
    dom = GridDomain(1, 4.0, 17)
    pts = dom.points()[annulus_nodes(dom, [0.0], 1.0), 0]
    assert sorted(pts.tolist()) == [-2.0, -1.5, 1.5, 2.0]


@pytest.mark.parametrize("x0", [(0.0, 0.0), (3.0, -2.5)])
def test_annulus_outside_box(x0):
    dom = GridDomain(2, 4.0, 17)
    with pytest.raises(UnresolvedAnnulus):
        annulus_nodes(dom, x0, 2 * dom.diameter)


def test_annulus_matches_brute_force_scan():
    dom = GridDomain(2, 3.0, 25)
    x0, R = np.array([0.3, -0.7]), 0.8
    dist = np.linalg.norm(dom.points() - x0, axis=1)
    expected = np.flatnonzero((dist > R) & (dist <= 2 * R))
    assert np.array_equal(np.sort(annulus_nodes(dom, x0, R)), expected)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 4.0))
def test_ball_index_matches_brute_force(cx, cy, r):
    dom = GridDomain(2, 3.0, 21)
    c = np.array([cx, cy])
    dist = np.linalg.norm(dom.points() - c, axis=1)
    brute = set(np.flatnonzero(dist <= r + 1e-9 * dom.h).tolist())
    assert set(ball_index(dom, c, r).tolist()) == brute


def test_integral_of_gaussian():
    dom = GridDomain(2, 6.0, 121)
    f = GridFunction.from_callable(dom, lambda p: np.exp(-np.sum(p**2, axis=1)))
    assert integrate(f) == pytest.approx(math.pi, rel=1e-8)


def test_random_family_is_nested_and_seeded():
    dom = GridDomain(2, 5.0, 11)
    small = BallFamily.random(dom, 50, seed=3)
    big = BallFamily.random(dom, 100, seed=3)
    assert np.array_equal(big.centers[:50], small.centers)
    assert np.array_equal(big.radii[:50], small.radii)
    again = BallFamily.random(dom, 50, seed=3)
    assert np.array_equal(again.radii, small.radii)


def test_ball_count_is_clipped_to_box():
    dom = GridDomain(1, 1.0, 11)
    assert ball_count(dom, Ball((1.0,), 0.5)) == 3


@pytest.mark.parametrize("fmt", ["binary", "csv"])
def test_serialization_round_trip(tmp_path, fmt):
    dom = GridDomain(2, 1.5, 7)
    vals = np.random.default_rng(0).normal(size=dom.size) * 1e3
    mask = np.zeros(dom.size, bool)
    mask[4] = True
    vals[4] = np.inf
    f = GridFunction(dom, vals, mask)
    g = load_grid_function(save_grid_function(f, tmp_path / "f.grid", fmt))
    assert g.domain == dom
    assert np.array_equal(g.values, f.values)
    assert np.array_equal(g.mask, f.mask)
