import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadmean.costs import (
    AnchoredPowerCost,
    Bregman,
    BregmanStruct,
    InnerProduct,
    Nice,
    PowerCost,
    PowerStruct,
    ProjectionStructure,
    SquaredDistance,
    StrongIP,
    cost_eval,
    empirical_objective,
    min_structure,
    power_constant,
    product_structure,
    strong_quadruple_residual,
    weak_quadruple_residual,
)
from quadmean.errors import EmptySample, IncompatibleSpace, PointAtBase
from quadmean.lab import sweep_structure
from quadmean.spaces import BASE, Euclidean, MetricTree, Projection, ProductSpace, SphereProjection, TreePoint

R1, R2 = Euclidean(1), Euclidean(2)
coords = st.floats(-20, 20, allow_nan=False)


def vec(*v):
    return np.array(v, dtype=float)


def test_squared_distance_cost():
    assert cost_eval(SquaredDistance(), R2, vec(0, 0), vec(1, 1)) == 2.0


def test_bregman_squared_norm():
    assert cost_eval(Bregman("squared_norm"), R2, vec(1, 0), vec(0, 0)) == pytest.approx(1.0)


def test_anchored_power_cost():
    cost = AnchoredPowerCost(1.0, vec(0))
    assert cost_eval(cost, R1, vec(0), vec(4)) == pytest.approx(4.0)


def test_power_cost_range():
    with pytest.raises(ValueError):
        PowerCost(2.5)


def test_bregman_only_on_euclidean():
    with pytest.raises(IncompatibleSpace):
        cost_eval(Bregman("squared_norm"), MetricTree.tripod(), TreePoint(0, 0.5), TreePoint(1, 0.5))


def test_empirical_objective():
    assert empirical_objective(SquaredDistance(), R1, [[0.0], [2.0]], vec(1)) == pytest.approx(1.0)
    assert empirical_objective(SquaredDistance(), R1, [[3.0]], vec(1)) == pytest.approx(4.0)
    with pytest.raises(EmptySample):
        empirical_objective(SquaredDistance(), R1, [], vec(1))


def test_duplicating_samples_keeps_objective():
    rng = np.random.default_rng(1)
    Y = rng.normal(size=(20, 2))
    q = vec(0.3, -0.2)
    one = empirical_objective(SquaredDistance(), R2, Y, q)
    two = empirical_objective(SquaredDistance(), R2, np.vstack([Y, Y]), q)
    assert two == pytest.approx(one, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.lists(coords, min_size=4, max_size=4))
def test_bregman_squared_norm_is_squared_distance(v):
    y, q = vec(*v[:2]), vec(*v[2:])
    a = cost_eval(Bregman("squared_norm"), R2, y, q)
    b = cost_eval(SquaredDistance(), R2, y, q)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_nice_residual_equal_points():
    y = vec(0.3, 1.0)
    assert weak_quadruple_residual(Nice(), R2, y, y, vec(2, 0), vec(-1, 1)) == pytest.approx(0.0, abs=1e-12)


def test_inner_product_residual():
    r = weak_quadruple_residual(InnerProduct(), R2, vec(1, 0), vec(0, 0), vec(0, 1), vec(0, 0))
    assert r == pytest.approx(-2.0)


def test_inner_product_needs_vectors():
    with pytest.raises(IncompatibleSpace):
        weak_quadruple_residual(InnerProduct(), MetricTree.tripod(), *[TreePoint(0, 0.5)] * 4)


def test_bregman_exponential_residual_is_equality_case():
    # left side is -(grad psi(q) - grad psi(p)) (y - z) = e - 1, right side |y - z| |1 - e|
    r = weak_quadruple_residual(BregmanStruct("coordinate_exponential"), R1, vec(1), vec(0), vec(0), vec(1))
    assert r == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.lists(coords, min_size=8, max_size=8))
def test_nice_residual_closed_form(v):
    y, z, q, p = (vec(*v[i : i + 2]) for i in range(0, 8, 2))
    expected = -2 * np.dot(y - z, q - p) - 2 * np.linalg.norm(y - z) * np.linalg.norm(q - p)
    assert weak_quadruple_residual(Nice(), R2, y, z, q, p) == pytest.approx(expected, abs=1e-10 * (1 + np.dot(v, v)))


def test_power_structure_constant():
    assert PowerStruct(0.75).constant == 8 * 0.75 * 2**-1.5
    assert power_constant(1.0) == 2.0


def test_power_one_matches_nice():
    rng = np.random.default_rng(3)
    for _ in range(200):
        y, z, q, p = rng.normal(size=(4, 3))
        a = weak_quadruple_residual(PowerStruct(1.0), Euclidean(3), y, z, q, p)
        b = weak_quadruple_residual(Nice(), Euclidean(3), y, z, q, p)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_strong_residual_equal_descriptors():
    m = vec(0, 0)
    r = strong_quadruple_residual(StrongIP(m), R2, m, 1.0, BASE, vec(1, 0), vec(0, 0), vec(0, 1), vec(0, 1))
    assert r == pytest.approx(0.0, abs=1e-15)


def test_strong_residual_same_direction():
    m = vec(0, 0)
    r = strong_quadruple_residual(StrongIP(m), R2, m, 1.0, BASE, vec(1, 0), vec(0, 0), vec(0, 1), vec(0, 2))
    assert r == pytest.approx(0.0, abs=1e-12)


def test_strong_residual_at_base_point():
    m = vec(0, 0)
    with pytest.raises(PointAtBase):
        strong_quadruple_residual(StrongIP(m), R2, m, 1.0, BASE, vec(1, 0), vec(0, 0), m, vec(0, 2))


def test_tripod_strong_residual_positive():
    tree = MetricTree.tripod()
    m = TreePoint(2, 1.0)
    eps = 0.1
    structure = ProjectionStructure(m, K=2.0)
    r = strong_quadruple_residual(structure, tree, m, 1.0, BASE, TreePoint(0, eps), TreePoint(0, 0.0), TreePoint(1, 1.0), TreePoint(0, eps))
    assert r > 0


def test_strong_with_xi_zero_is_weak():
    rng = np.random.default_rng(5)
    m = vec(0.1, -0.2)
    for _ in range(100):
        y, z, q, p = rng.normal(size=(4, 2))
        strong = strong_quadruple_residual(Nice(), R2, m, 0.0, BASE, y, z, q, p)
        weak = weak_quadruple_residual(Nice(), R2, y, z, q, p)
        assert strong == pytest.approx(weak, rel=1e-12, abs=1e-12)


def test_sphere_projection_descriptor():
    m = vec(0, 0)
    assert StrongIP(m).descriptor(R2, vec(1, 0), vec(0, 2)) == pytest.approx(SphereProjection(m)(R2, vec(1, 0), vec(0, 2)))
    assert ProjectionStructure(m).descriptor(R2, vec(1, 0), vec(0, 2)) == pytest.approx(Projection(m)(R2, vec(1, 0), vec(0, 2)))


def test_product_single_factor_matches_factor():
    prod = product_structure([Nice()])
    space = ProductSpace([R2])
    rng = np.random.default_rng(7)
    for _ in range(100):
        y, z, q, p = rng.normal(size=(4, 2))
        a = weak_quadruple_residual(prod, space, (y,), (z,), (q,), (p,))
        b = weak_quadruple_residual(Nice(), R2, y, z, q, p)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_product_of_lines_and_plane_sweeps():
    lines = sweep_structure(ProductSpace([R1, R1]), product_structure([Nice(), Nice()]), trials=10_000, seed=1)
    plane = sweep_structure(R2, Nice(), trials=10_000, seed=1)
    assert lines.violations == 0 and plane.violations == 0


def test_product_needs_factors():
    with pytest.raises(ValueError):
        product_structure([])


def test_min_structure_k1_matches_base():
    ms = min_structure(Nice(), 1)
    rng = np.random.default_rng(9)
    for _ in range(100):
        y, z, q, p = rng.normal(size=(4, 1))
        a = weak_quadruple_residual(ms, R1, (y,), (z,), q, p)
        b = weak_quadruple_residual(Nice(), R1, y, z, q, p)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_min_structure_sweep_and_descriptor():
    ms = min_structure(Nice(), 2)
    assert sweep_structure(R1, ms, trials=10_000, seed=2).violations == 0
    q, p = vec(0.0), vec(3.0)
    assert ms.descriptor(R1, q, p) == Nice().descriptor(R1, q, p) == 3.0


def test_min_structure_bounds():
    with pytest.raises(ValueError):
        min_structure(Nice(), 0)


def test_power_struct_alpha_half_constant_data_distance():
    s = PowerStruct(0.5)
    assert s.data_distance(R1, vec(0), vec(5)) == pytest.approx(power_constant(0.5))
    assert math.isclose(power_constant(0.5), 2.0)
