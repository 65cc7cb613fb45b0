"""Cost functions, empirical objectives and quadruple structures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import EmptySample, IncompatibleSpace, PointAtBase
from .spaces import (
    DistanceKind,
    Euclidean,
    MetricTree,
    ProductSpace,
    Projection,
    Space,
    SphereProjection,
    TreePoint,
    WeightedNorm,
    is_vector_space,
)


def as_batch(space: Space, samples):
    """Turn a sequence of points into the batch layout used by ``space``."""
    if isinstance(space, MetricTree):
        if isinstance(samples, TreePoint):
            return TreePoint(np.atleast_1d(samples.edge), np.atleast_1d(np.asarray(samples.offset, dtype=float)))
        samples = list(samples)
        if samples and not isinstance(samples[0], TreePoint):
            arr = np.asarray(samples, dtype=float)
            return TreePoint(arr[:, 0].astype(int), arr[:, 1])
        return TreePoint(
            np.array([int(s.edge) for s in samples], dtype=int),
            np.array([float(s.offset) for s in samples]),
        )
    if isinstance(space, ProductSpace):
        if isinstance(samples, tuple):
            return samples
        samples = list(samples)
        return tuple(as_batch(f, [s[i] for s in samples]) for i, f in enumerate(space.factors))
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1 and getattr(space, "dim", None) == 1:
        arr = arr[:, None]
    return arr


def batch_len(batch) -> int:
    if isinstance(batch, TreePoint):
        return int(np.size(batch.edge))
    if isinstance(batch, tuple):
        return batch_len(batch[0])
    return int(np.shape(batch)[0])


# ---------------------------------------------------------------- costs


class Cost:
    def __call__(self, space: Space, y, q) -> np.ndarray:
        raise NotImplementedError

    def check_space(self, space: Space) -> None:
        pass


@dataclass(frozen=True)
class SquaredDistance(Cost):
    def __call__(self, space, y, q):
        return space.squared_distance(y, q)


@dataclass(frozen=True)
class PowerCost(Cost):
    """``d(y, q) ** two_alpha`` with ``two_alpha`` in [1, 2]."""

    two_alpha: float

    def __post_init__(self):
        if not 1.0 <= self.two_alpha <= 2.0:
            raise ValueError("two_alpha must lie in [1, 2]")

    def __call__(self, space, y, q):
        return space.base_distance(y, q) ** self.two_alpha


@dataclass(frozen=True)
class AnchoredPowerCost(Cost):
    """``d(y,q)**two_alpha - d(y,o)**two_alpha``; finite expectations under heavy tails."""

    two_alpha: float
    anchor: Any

    def __post_init__(self):
        if not 1.0 <= self.two_alpha <= 2.0:
            raise ValueError("two_alpha must lie in [1, 2]")

    def __call__(self, space, y, q):
        d = space.base_distance
        return d(y, q) ** self.two_alpha - d(y, self.anchor) ** self.two_alpha

    def check_space(self, space):
        space.validate(self.anchor)


_PSI = ("squared_norm", "coordinate_exponential")


@dataclass(frozen=True)
class Bregman(Cost):
    """Bregman divergence ``psi(y) - psi(q) - <grad psi(q), y - q>``."""

    psi: str = "squared_norm"

    def __post_init__(self):
        if self.psi not in _PSI:
            raise ValueError(f"psi must be one of {_PSI}")

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        if self.psi == "squared_norm":
            return np.sum(x * x, axis=-1)
        return np.sum(np.exp(x), axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x if self.psi == "squared_norm" else np.exp(x)

    def __call__(self, space, y, q):
        y = np.asarray(y, dtype=float)
        q = np.asarray(q, dtype=float)
        g = self.gradient(q)
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient of psi is not finite at q")
        return self.potential(y) - self.potential(q) - np.sum(g * (y - q), axis=-1)

    def check_space(self, space):
        if not isinstance(space, Euclidean):
            raise IncompatibleSpace("Bregman costs need a Euclidean space")


def cost_eval(cost: Cost, space: Space, y, q) -> float:
    cost.check_space(space)
    value = cost(space, space.validate(y), space.validate(q))
    return float(value) if np.ndim(value) == 0 else value


def empirical_objective(cost: Cost, space: Space, samples, q) -> float:
    """Average cost of ``q`` over the samples."""
    batch = as_batch(space, samples)
    if batch_len(batch) == 0:
        raise EmptySample("empirical objective of an empty sample")
    cost.check_space(space)
    return float(np.mean(cost(space, batch, space.validate(q))))


# ---------------------------------------------------------------- structures


class QuadrupleStructure:
    """A cost with a data distance and a descriptor (pseudo-)metric.

    The weak inequality claims
    ``c(y,q) - c(y,p) - c(z,q) + c(z,p) <= a(y,z) * b(q,p)``.
    """

    name = "structure"
    cost: Cost
    constant: float | None = None

    def data_distance(self, space, y, z):
        raise NotImplementedError

    def descriptor(self, space, q, p):
        return space.base_distance(q, p)

    def strong_descriptor(self, space, m, q, p):
        """Descriptor used by the strong inequality; defaults to the weak one."""
        return self.descriptor(space, q, p)

    def cost_value(self, space, y, q):
        return self.cost(space, y, q)

    def check_space(self, space):
        self.cost.check_space(space)

    def sample_data(self, space, rng, size, box=None):
        return space.sample(rng, size, box)

    def sample_descriptor(self, space, rng, size, box=None):
        return space.sample(rng, size, box)

    def take_data(self, space, batch, i):
        return space.take(batch, i)

    def __repr__(self) -> str:
        return self.name


class Nice(QuadrupleStructure):
    """Squared distance with ``a = 2d`` and ``b = d``; holds exactly in Hadamard spaces."""

    name = "nice"
    constant = 2.0

    def __init__(self):
        self.cost = SquaredDistance()

    def data_distance(self, space, y, z):
        return 2.0 * space.base_distance(y, z)


class BoundedLipschitz(QuadrupleStructure):
    """Squared distance on a space of diameter ``diam``: ``a = 4 diam``, ``b = d``."""

    name = "bounded_lipschitz"

    def __init__(self, diam: float):
        if not diam > 0:
            raise ValueError("diam must be positive")
        self.diam = float(diam)
        self.cost = SquaredDistance()
        self.constant = 4.0 * self.diam

    def data_distance(self, space, y, z):
        return np.full(np.shape(space.base_distance(y, z)), 4.0 * self.diam)


def power_constant(alpha: float) -> float:
    return 8.0 * alpha * 2.0 ** (-2.0 * alpha)


class PowerStruct(QuadrupleStructure):
    """Cost ``d**(2 alpha)`` with ``a = 8 alpha 2**(-2 alpha) d**(2 alpha - 1)``, ``b = d``."""

    name = "power"

    def __init__(self, alpha: float):
        if not 0.5 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [1/2, 1]")
        self.alpha = float(alpha)
        self.cost = PowerCost(2.0 * self.alpha)
        self.constant = power_constant(self.alpha)

    def data_distance(self, space, y, z):
        d = space.base_distance(y, z)
        if self.alpha == 0.5:
            return np.full(np.shape(d), self.constant)
        return self.constant * d ** (2.0 * self.alpha - 1.0)

    def __repr__(self) -> str:
        return f"power(alpha={self.alpha:g})"


class InnerProduct(QuadrupleStructure):
    name = "inner_product"
    constant = 2.0

    def __init__(self):
        self.cost = SquaredDistance()

    def check_space(self, space):
        if not is_vector_space(space):
            raise IncompatibleSpace("inner product structure needs a vector space")

    def data_distance(self, space, y, z):
        return 2.0 * space.base_distance(y, z)


class WeightedIP(QuadrupleStructure):
    """``a = 2 ||y - z||_{1/s}`` and ``b = ||q - p||_s``."""

    name = "weighted_inner_product"
    constant = 2.0

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        self.weights = tuple(w.tolist())
        self.cost = SquaredDistance()
        self._a = WeightedNorm(self.weights, inverse=True)
        self._b = WeightedNorm(self.weights)

    def check_space(self, space):
        if not is_vector_space(space) or space.dim != len(self.weights):
            raise IncompatibleSpace("weighted structure needs a vector space of matching dimension")

    def data_distance(self, space, y, z):
        return 2.0 * self._a(space, y, z)

    def descriptor(self, space, q, p):
        return self._b(space, q, p)


class BregmanStruct(QuadrupleStructure):
    """Bregman cost with ``a = ||y - z||`` and ``b = ||grad psi(q) - grad psi(p)||``."""

    name = "bregman"
    constant = 1.0

    def __init__(self, psi: str = "squared_norm"):
        self.cost = Bregman(psi)

    def data_distance(self, space, y, z):
        return space.base_distance(y, z)

    def descriptor(self, space, q, p):
        g = self.cost.gradient
        return np.linalg.norm(g(q) - g(p), axis=-1)


class StrongIP(QuadrupleStructure):
    """Inner product structure whose descriptor is the sphere projection around ``m``."""

    name = "strong_inner_product"
    constant = 2.0

    def __init__(self, m):
        self.m = np.asarray(m, dtype=float)
        self.cost = SquaredDistance()

    def check_space(self, space):
        InnerProduct.check_space(self, space)

    def data_distance(self, space, y, z):
        return 2.0 * space.base_distance(y, z)

    def descriptor(self, space, q, p):
        return SphereProjection(self.m)(space, q, p)

    def strong_descriptor(self, space, m, q, p):
        return SphereProjection(m)(space, q, p)


class ProjectionStructure(QuadrupleStructure):
    """Squared distance with ``a = K d`` and the projection metric around ``m`` as descriptor.

    On trees this is the candidate strong structure that fails for every finite K.
    """

    name = "projection"

    def __init__(self, m, K: float = 2.0):
        self.m = m
        self.K = float(K)
        self.constant = self.K
        self.cost = SquaredDistance()

    def data_distance(self, space, y, z):
        return self.K * space.base_distance(y, z)

    def descriptor(self, space, q, p):
        return Projection(self.m)(space, q, p)

    def strong_descriptor(self, space, m, q, p):
        return Projection(m)(space, q, p)


class _SumCost(Cost):
    def __init__(self, factors):
        self.factors = factors

    def __call__(self, space, y, q):
        return sum(f.cost_value(s, a, b) for f, s, a, b in zip(self.factors, space.factors, y, q))

    def check_space(self, space):
        if not isinstance(space, ProductSpace) or len(space.factors) != len(self.factors):
            raise IncompatibleSpace("product structure needs a product space with one factor per structure")
        for f, s in zip(self.factors, space.factors):
            f.check_space(s)


class Product(QuadrupleStructure):
    """Sum of factor costs; ``a`` and ``b`` are the l2 norms of the factor values."""

    name = "product"

    def __init__(self, factors: Sequence[QuadrupleStructure]):
        if not factors:
            raise ValueError("product needs at least one factor")
        self.factors = list(factors)
        self.cost = _SumCost(self.factors)

    def _combine(self, method, space, x, y):
        return np.sqrt(sum(getattr(f, method)(s, a, b) ** 2 for f, s, a, b in zip(self.factors, space.factors, x, y)))

    def data_distance(self, space, y, z):
        return self._combine("data_distance", space, y, z)

    def descriptor(self, space, q, p):
        return self._combine("descriptor", space, q, p)

    def sample_data(self, space, rng, size, box=None):
        return tuple(f.sample_data(s, rng, size, box) for f, s in zip(self.factors, space.factors))

    def sample_descriptor(self, space, rng, size, box=None):
        return tuple(f.sample_descriptor(s, rng, size, box) for f, s in zip(self.factors, space.factors))

    def take_data(self, space, batch, i):
        return tuple(f.take_data(s, b, i) for f, s, b in zip(self.factors, space.factors, batch))

    def __repr__(self) -> str:
        return "product(" + ", ".join(map(repr, self.factors)) + ")"


class _MinCost(Cost):
    def __init__(self, base):
        self.base = base

    def __call__(self, space, ys, q):
        return np.minimum.reduce([self.base.cost_value(space, y, q) for y in ys])

    def check_space(self, space):
        self.base.check_space(space)


class MinOverSets(QuadrupleStructure):
    """Data points are k-element sets (tuples); the cost is the minimum over the set.

    ``a`` is the maximum of the base data distance over all pairs, ``b`` is the
    base descriptor unchanged.
    """

    name = "min_over_sets"

    def __init__(self, base: QuadrupleStructure, k: int):
        if int(k) < 1:
            raise ValueError("k must be at least 1")
        if int(k) > 8:
            raise ValueError("minima are enumerated exactly; k is limited to 8")
        self.base = base
        self.k = int(k)
        self.cost = _MinCost(base)

    def data_distance(self, space, ys, zs):
        return np.maximum.reduce([self.base.data_distance(space, y, z) for y in ys for z in zs])

    def descriptor(self, space, q, p):
        return self.base.descriptor(space, q, p)

    def sample_data(self, space, rng, size, box=None):
        return tuple(self.base.sample_data(space, rng, size, box) for _ in range(self.k))

    def sample_descriptor(self, space, rng, size, box=None):
        return self.base.sample_descriptor(space, rng, size, box)

    def take_data(self, space, batch, i):
        return tuple(self.base.take_data(space, b, i) for b in batch)

    def __repr__(self) -> str:
        return f"min_over_sets({self.base!r}, k={self.k})"


def product_structure(factors: Sequence[QuadrupleStructure]) -> Product:
    return Product(factors)


def min_structure(base: QuadrupleStructure, k: int) -> MinOverSets:
    return MinOverSets(base, k)


# ---------------------------------------------------------------- residuals


def quadruple_terms(structure: QuadrupleStructure, space, y, z, q, p):
    """Left and right side of the weak quadruple inequality (vectorized, unvalidated)."""
    c = structure.cost_value
    lhs = c(space, y, q) - c(space, y, p) - c(space, z, q) + c(space, z, p)
    rhs = structure.data_distance(space, y, z) * structure.descriptor(space, q, p)
    return lhs, rhs


def _validate_data(structure, space, y):
    if isinstance(structure, MinOverSets):
        return tuple(_validate_data(structure.base, space, c) for c in y)
    if isinstance(structure, Product):
        return tuple(_validate_data(f, s, c) for f, s, c in zip(structure.factors, space.factors, y))
    return space.validate(y)


def _validate_descriptor(structure, space, q):
    if isinstance(structure, (MinOverSets,)):
        return _validate_descriptor(structure.base, space, q)
    if isinstance(structure, Product):
        return tuple(_validate_descriptor(f, s, c) for f, s, c in zip(structure.factors, space.factors, q))
    return space.validate(q)


def weak_quadruple_residual(structure: QuadrupleStructure, space: Space, y, z, q, p) -> float:
    """``c(y,q) - c(y,p) - c(z,q) + c(z,p) - a(y,z) b(q,p)``; the inequality holds iff it is <= 0."""
    structure.check_space(space)
    y, z = _validate_data(structure, space, y), _validate_data(structure, space, z)
    q, p = _validate_descriptor(structure, space, q), _validate_descriptor(structure, space, p)
    lhs, rhs = quadruple_terms(structure, space, y, z, q, p)
    value = lhs - rhs
    return float(value) if np.ndim(value) == 0 else value


def strong_quadruple_terms(structure, space, m, xi, loss: DistanceKind, y, z, q, p):
    """Left and right side of the strong quadruple inequality (vectorized, unvalidated)."""
    c = structure.cost_value
    lq = loss(space, m, q)
    lp = loss(space, m, p)
    if np.any(lq == 0) or np.any(lp == 0):
        raise PointAtBase("strong quadruple quotients need q and p away from m")
    cym, czm = c(space, y, m), c(space, z, m)
    tq = (c(space, y, q) - cym - c(space, z, q) + czm) / lq**xi
    tp = (c(space, y, p) - cym - c(space, z, p) + czm) / lp**xi
    rhs = structure.data_distance(space, y, z) * structure.strong_descriptor(space, m, q, p)
    return tq - tp, rhs


def strong_quadruple_residual(
    structure: QuadrupleStructure,
    space: Space,
    m,
    xi: float,
    loss: DistanceKind,
    y,
    z,
    q,
    p,
) -> float:
    """Difference of the two normalized quadruple quotients minus ``a(y,z) b_m(q,p)``."""
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    structure.check_space(space)
    m, y, z, q, p = (space.validate(v) for v in (m, y, z, q, p))
    lhs, rhs = strong_quadruple_terms(structure, space, m, xi, loss, y, z, q, p)
    value = lhs - rhs
    return float(value) if np.ndim(value) == 0 else value
