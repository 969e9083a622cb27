import numpy as np
import pytest

from scz_lab import agmon as A
from scz_lab.critical_radius import builtin_rho
from scz_lab.grid import GridDomain


@pytest.fixture(scope="module")
def constant_graph():
    return A.AgmonGraph(GridDomain(2, 4.0, 81), builtin_rho("constant", rho0=0.5))


@pytest.fixture(scope="module")
def harmonic_graph():
    return A.AgmonGraph(GridDomain(1, 10.0, 2001), builtin_rho("harmonic_oscillator"))


def test_constant_radius_distance(constant_graph):
    x, y = A.sample_sources_targets(constant_graph.domain, 5, 50, seed=4)
    xs, ys, dist = A.pair_distances(constant_graph, x, y)
    exact = np.linalg.norm(xs - ys, axis=1) / 0.5
    keep = exact > 0
    assert np.max(np.abs(dist[keep] / exact[keep] - 1)) <= 0.08


@pytest.mark.parametrize("a", [1.5, 3.0, 7.25])
def test_harmonic_distance_from_origin(harmonic_graph, a):
    # the path integral of max(1, s) from 0 to a
    assert A.agmon_distance(harmonic_graph, [0.0], [a]) == pytest.approx(1 + (a * a - 1) / 2, rel=1e-2)


def test_distance_to_self_is_zero(constant_graph):
    assert A.agmon_distance(constant_graph, [0.3, -1.1], [0.3, -1.1]) == 0.0


def test_distance_is_symmetric(harmonic_graph):
    assert A.agmon_distance(harmonic_graph, [-2.0], [4.0]) == pytest.approx(
        A.agmon_distance(harmonic_graph, [4.0], [-2.0]), rel=1e-12)


def test_local_equivalence_constant(constant_graph):
    x, y = A.sample_local_pairs(constant_graph, 5, 50, seed=0)
    le = A.check_local_equivalence(constant_graph, x, y)
    assert 1.0 <= le.D0 <= 1.1


def test_local_equivalence_harmonic(harmonic_graph):
    x, y = A.sample_local_pairs(harmonic_graph, 10, 50, seed=1, box=2.0)
    le = A.check_local_equivalence(harmonic_graph, x, y)
    assert np.isfinite(le.D0)


def test_coincident_pair_is_excluded(constant_graph):
    le = A.check_local_equivalence(constant_graph, [[0.0, 0.0]], [[0.0, 0.0]])
    assert le.D0 == 1.0 and le.n_pairs == 0


def test_global_bounds_constant(constant_graph):
    x, y = A.sample_sources_targets(constant_graph.domain, 5, 50, seed=2)
    gb = A.check_global_bounds(constant_graph, x, y, D0=1.05)
    # d_rho = t up to the stencil, so C0d <= 1 and D1 = sup (1 + t) / t <= 2 on t >= 1
    assert gb.C0d <= 1.0 + 0.08
    assert gb.D1 <= 2.0 * 1.08
    assert gb.lower_margin >= 0


def test_global_bounds_harmonic(harmonic_graph):
    x, y = A.sample_sources_targets(harmonic_graph.domain, 10, 50, seed=3)
    gb = A.check_global_bounds(harmonic_graph, x, y, D0=1.1)
    assert np.isfinite(gb.C0d) and np.isfinite(gb.D1)
    assert gb.lower_margin >= 0


def test_lower_bound_at_coincident_pair(constant_graph):
    gb = A.check_global_bounds(constant_graph, [[1.0, 1.0]], [[1.0, 1.0]], D0=1.05)
    assert gb.lower_margin >= 0
