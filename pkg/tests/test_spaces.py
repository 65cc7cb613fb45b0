import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadmean.errors import InvalidPoint, NonUniqueProjection, PointAtBase
from quadmean.spaces import (
    BASE,
    Disc,
    Euclidean,
    MetricTree,
    PlaneWithHole,
    Polygon,
    Power,
    Projection,
    SphereProjection,
    TreePoint,
    WeightedNorm,
    distance,
    metric_axiom_sweep,
    npc_inequality_check,
    project_to_space,
    tree_geodesic_point,
)

TRIPOD = MetricTree.tripod()
DISC = PlaneWithHole(Disc((0.0, 0.0), 1.0))
finite = st.floats(-50, 50, allow_nan=False)


def test_euclidean_distance():
    assert distance(Euclidean(2), np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_tripod_path_goes_through_hub():
    d = distance(TRIPOD, TreePoint(0, 0.4), TreePoint(1, 0.7))
    assert d == pytest.approx(1.1, abs=1e-15)


def test_power_distance_on_line():
    assert distance(Euclidean(1), np.array([0.0]), np.array([9.0]), Power(0.5)) == pytest.approx(3.0)


def test_sphere_projection_matches_projection_metric():
    m, q, p = np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 2.0])
    sphere = distance(Euclidean(2), q, p, SphereProjection(m))
    proj = distance(Euclidean(2), q, p, Projection(m))
    assert sphere == pytest.approx(math.sqrt(2), rel=1e-12)
    assert proj == pytest.approx(sphere, rel=1e-10)


def test_sphere_projection_at_base_point():
    with pytest.raises(PointAtBase):
        distance(Euclidean(2), np.zeros(2), np.ones(2), SphereProjection(np.zeros(2)))


def test_invalid_points_rejected():
    with pytest.raises(InvalidPoint):
        distance(Euclidean(2), np.array([0.0, np.inf]), np.zeros(2))
    with pytest.raises(InvalidPoint):
        TRIPOD.validate(TreePoint(0, 1.5))
    with pytest.raises(InvalidPoint):
        TRIPOD.validate(TreePoint(7, 0.1))


def test_vertex_representations_compare_equal():
    hub_a, hub_b = TreePoint(0, 0.0), TreePoint(2, 0.0)
    assert TRIPOD.same_point(hub_a, hub_b)
    assert distance(TRIPOD, hub_a, hub_b) == 0.0


def test_tree_must_be_acyclic_and_positive():
    with pytest.raises(ValueError):
        MetricTree([(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])
    with pytest.raises(ValueError):
        MetricTree([(0, 1, 0.0)])


@pytest.mark.parametrize("t, expected", [(0.0, TreePoint(0, 1.0)), (1.0, TreePoint(1, 1.0))])
def test_geodesic_endpoints(t, expected):
    z = tree_geodesic_point(TRIPOD, TreePoint(0, 1.0), TreePoint(1, 1.0), t)
    assert TRIPOD.same_point(z, expected)


def test_geodesic_midpoint_is_hub():
    z = tree_geodesic_point(TRIPOD, TreePoint(0, 1.0), TreePoint(1, 1.0), 0.5)
    assert TRIPOD.same_point(z, TRIPOD.vertex_point(0))


def test_geodesic_rejects_bad_t():
    with pytest.raises(ValueError):
        tree_geodesic_point(TRIPOD, TreePoint(0, 1.0), TreePoint(1, 1.0), 1.5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1))
def test_geodesic_arc_lengths(seed, t):
    tree = MetricTree.random(6, seed=3)
    rng = np.random.default_rng(seed)
    x, y = tree.take(tree.sample(rng, 2), 0), tree.take(tree.sample(rng, 2), 1)
    z = tree_geodesic_point(tree, x, y, t)
    dxy = float(tree.base_distance(x, y))
    assert float(tree.base_distance(x, z)) == pytest.approx(t * dxy, abs=1e-12)
    assert float(tree.base_distance(z, y)) == pytest.approx((1 - t) * dxy, abs=1e-12)


def test_projection_identity_outside_hole():
    np.testing.assert_allclose(project_to_space(DISC, np.array([2.0, 0.0])), [2.0, 0.0])


def test_projection_radial():
    np.testing.assert_allclose(project_to_space(DISC, np.array([0.5, 0.0])), [1.0, 0.0], atol=1e-15)


def test_projection_at_disc_center_is_not_unique():
    with pytest.raises(NonUniqueProjection):
        project_to_space(DISC, np.array([0.0, 0.0]))


def test_polygon_projection():
    square = PlaneWithHole(Polygon(((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))))
    np.testing.assert_allclose(project_to_space(square, np.array([0.2, 0.9])), [0.2, 1.0], atol=1e-12)
    with pytest.raises(NonUniqueProjection):
        project_to_space(square, np.array([0.0, 0.0]))


def test_metric_axioms_euclidean():
    assert metric_axiom_sweep(Euclidean(3), BASE, trials=10_000, seed=1).violations == 0


def test_metric_axioms_power_on_tripod():
    assert metric_axiom_sweep(TRIPOD, Power(0.5), trials=100_000, seed=2).violations == 0


def test_metric_axioms_sphere_projection():
    rep = metric_axiom_sweep(Euclidean(3), SphereProjection(np.zeros(3)), trials=100_000, seed=3, check_triangle=True)
    assert rep.violations == 0


def test_projection_metric_triangle_fails_on_tripod():
    # reported, not asserted by the library: the projection metric around a tip is no metric here
    rep = metric_axiom_sweep(TRIPOD, Projection(TreePoint(2, 1.0)), trials=20_000, seed=4, check_triangle=True)
    assert rep.violations > 0


def test_weighted_norms_are_dual():
    w = (1.0, 4.0)
    x, y = np.array([1.0, 1.0]), np.zeros(2)
    # squared norm is sum s_k^2 x_k^2
    assert distance(Euclidean(2), x, y, WeightedNorm(w)) == pytest.approx(math.sqrt(1 + 16))
    assert distance(Euclidean(2), x, y, WeightedNorm(w, inverse=True)) == pytest.approx(math.sqrt(1 + 1 / 16))


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2), st.floats(0.05, 1))
def test_power_is_base_raised(x, y, a):
    x, y = np.array(x), np.array(y)
    base = distance(Euclidean(2), x, y)
    assert distance(Euclidean(2), x, y, Power(a)) == pytest.approx(base**a, rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6))
def test_npc_equality_in_euclidean(v):
    y1, y2, q = np.array(v[:2]), np.array(v[2:4]), np.array(v[4:])
    assert abs(npc_inequality_check(Euclidean(2), y1, y2, q)) <= 1e-9 * (1 + np.dot(v, v))


def test_npc_on_tripod():
    res = npc_inequality_check(TRIPOD, TreePoint(0, 1.0), TreePoint(1, 1.0), TreePoint(2, 1.0))
    assert res == pytest.approx(-2.0)
    assert npc_inequality_check(TRIPOD, TreePoint(0, 0.3), TreePoint(0, 0.3), TreePoint(2, 0.5)) == pytest.approx(0.0, abs=1e-12)


def test_npc_nonpositive_on_random_tree():
    tree = MetricTree.random(8, seed=8)
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b, c = (tree.take(tree.sample(rng, 1), 0) for _ in range(3))
        assert npc_inequality_check(tree, a, b, c) <= 1e-9
