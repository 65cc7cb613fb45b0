"""Empirical Fréchet means, a brute-force oracle and growth-exponent fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np
from scipy import stats
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .costs import (
    AnchoredPowerCost,
    Bregman,
    Cost,
    PowerCost,
    SquaredDistance,
    as_batch,
    batch_len,
)
from .errors import EmptySample, IncompatibleSpace, InvalidCenter, NonUniqueProjection
from .spaces import Disc, Euclidean, MetricTree, PlaneWithHole, Polygon, Space, TreePoint

METHODS = ("auto", "closed_form", "weiszfeld", "subgradient", "edge_scan", "grid")


@dataclass
class EstimatorConfig:
    method: str = "auto"
    tol: float = 1e-10
    max_iter: int = 1000
    grid_step: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not self.tol > 0 or self.max_iter < 1 or not self.grid_step > 0:
            raise ValueError("need tol > 0, max_iter >= 1 and grid_step > 0")


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DEGENERATE = "degenerate"


@dataclass
class MeanResult:
    point: Any
    objective: float
    iterations: int
    status: Status
    trace: list[float] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class GrowthFit:
    gamma_hat: float
    cg_hat: float
    r_squared: float


def _exponent(cost: Cost) -> float | None:
    """Power of the distance inside the cost, or None for Bregman costs."""
    if isinstance(cost, SquaredDistance):
        return 2.0
    if isinstance(cost, (PowerCost, AnchoredPowerCost)):
        return float(cost.two_alpha)
    return None


def _weights(n: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def _vector_samples(space: Space, samples) -> np.ndarray:
    batch = as_batch(space, samples)
    if batch.size == 0:
        raise EmptySample("cannot estimate a mean from an empty sample")
    Y = check_array(batch)
    if Y.shape[1] != space.dim:
        raise ValueError(f"expected points of dimension {space.dim}, got {Y.shape[1]}")
    return Y


def frechet_mean_vector(
    cost: Cost,
    space: Euclidean,
    samples,
    config: EstimatorConfig | None = None,
    weights=None,
) -> MeanResult:
    """Minimize the (weighted) empirical objective over a Euclidean space."""
    config = config or EstimatorConfig()
    if not isinstance(space, Euclidean):
        raise IncompatibleSpace("frechet_mean_vector needs a Euclidean or weighted sequence space")
    cost.check_space(space)
    Y = _vector_samples(space, samples)
    w = _weights(Y.shape[0], weights)

    def objective(q):
        return float(w @ cost(space, Y, q))

    p = _exponent(cost)
    method = config.method
    if method == "auto":
        if p is None or p == 2.0:
            method = "closed_form"
        elif p == 1.0:
            method = "closed_form" if space.dim == 1 and weights is None else "weiszfeld"
        else:
            method = "subgradient"
    if method == "grid":
        return brute_force_mean(cost, space, Y, config.grid_step)
    if method == "closed_form":
        if p is None or p == 2.0:
            # Bregman centroids are the arithmetic mean as well
            point = w @ Y
        elif p == 1.0 and space.dim == 1:
            point = np.array([np.median(Y[:, 0])])
        else:
            raise ValueError("no closed form for this cost")
        return MeanResult(point, objective(point), 0, Status.CONVERGED, [])
    if p is None:
        raise ValueError(f"method {method!r} needs a power cost")
    if method == "weiszfeld":
        return _weiszfeld(Y, w, p, objective, config)
    if method == "subgradient":
        return _descent(Y, w, p, objective, config)
    raise ValueError(f"method {method!r} does not apply to vector spaces")


def _weiszfeld(Y, w, p, objective, config):
    """Reweighted averaging for ``sum w_i |y_i - q|**p`` with ``1 <= p < 2``.

    Each step minimizes a quadratic majorizer, so the objective never increases.
    At a sample point the optimality test for ``p = 1`` is applied; otherwise the
    iterate is pushed off the sample along the descent direction.
    """
    x = w @ Y
    f = objective(x)
    trace = [f]
    tol = config.tol
    for it in range(1, config.max_iter + 1):
        diff = x - Y
        d = np.linalg.norm(diff, axis=1)
        scale = 1.0 + np.linalg.norm(x)
        near = d <= tol * scale
        if near.any():
            far = ~near
            grad = p * (w[far] * d[far] ** (p - 2)) @ diff[far]
            gnorm = np.linalg.norm(grad)
            if gnorm <= (w[near].sum() if p == 1.0 else 0.0) + tol:
                return MeanResult(Y[np.argmax(near)].copy(), objective(Y[np.argmax(near)]), it, Status.CONVERGED, trace)
            step = 10 * tol * scale
            x_new = x - step * grad / gnorm
            while objective(x_new) > f and step > 1e-300:
                step /= 2
                x_new = x - step * grad / gnorm
        else:
            c = w * d ** (p - 2.0)
            x_new = c @ Y / c.sum()
        f_new = objective(x_new)
        moved = np.linalg.norm(x_new - x)
        x, f = x_new, f_new
        trace.append(f_new)
        if moved <= tol * scale:
            return MeanResult(x, f_new, it, Status.CONVERGED, trace)
    return MeanResult(x, f, config.max_iter, Status.MAX_ITER, trace)


def _descent(Y, w, p, objective, config):
    """Gradient descent with Armijo backtracking for ``sum w_i |y_i - q|**p``."""
    x = w @ Y
    f = objective(x)
    trace = [f]
    step = 1.0
    for it in range(1, config.max_iter + 1):
        diff = x - Y
        d = np.linalg.norm(diff, axis=1)
        safe = np.where(d > 0, d, 1.0)
        coef = np.where(d > 0, w * p * safe ** (p - 2.0), 0.0)
        g = coef @ diff
        gn2 = float(g @ g)
        if np.sqrt(gn2) <= config.tol:
            return MeanResult(x, f, it, Status.CONVERGED, trace)
        step *= 2.0
        while True:
            x_new = x - step * g
            f_new = objective(x_new)
            if f_new <= f - 0.5 * step * gn2:
                break
            step *= 0.5
            if step * np.sqrt(gn2) <= config.tol * (1.0 + np.linalg.norm(x)):
                return MeanResult(x, f, it, Status.CONVERGED, trace)
        moved = step * np.sqrt(gn2)
        x, f = x_new, f_new
        trace.append(f)
        if moved <= config.tol * (1.0 + np.linalg.norm(x)):
            return MeanResult(x, f, it, Status.CONVERGED, trace)
    return MeanResult(x, f, config.max_iter, Status.MAX_ITER, trace)


def _tree_objective(cost, tree, batch, w):
    ye = np.asarray(batch.edge)[None, :]
    yo = np.asarray(batch.offset, dtype=float)[None, :]

    def F(edge, offsets):
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        q = TreePoint(np.full((offsets.size, 1), edge), offsets[:, None])
        return cost(tree, TreePoint(ye, yo), q) @ w

    return F


def _parabola_vertex(F, edge: int, length: float) -> float:
    """Exact minimizer on an edge where ``F`` is quadratic (squared cost), clipped to the edge.

    Every geodesic from a point on the edge leaves through a fixed end, so each
    squared distance is a quadratic in the offset.
    """
    f0, f1, f2 = F(edge, [0.0, 0.5 * length, length])
    curvature = f0 - 2.0 * f1 + f2
    if not curvature > 0:
        return 0.0 if f0 <= f2 else length
    return float(np.clip(0.5 * length * (1.0 + 0.5 * (f0 - f2) / curvature), 0.0, length))


def frechet_mean_tree(
    cost: Cost,
    space: MetricTree,
    samples,
    config: EstimatorConfig | None = None,
    weights=None,
) -> MeanResult:
    """Scan every edge with a bounded 1-D minimizer and compare against all vertices."""
    config = config or EstimatorConfig()
    if not isinstance(space, MetricTree):
        raise IncompatibleSpace("frechet_mean_tree needs a metric tree")
    batch = as_batch(space, samples)
    n = batch_len(batch)
    if n == 0:
        raise EmptySample("cannot estimate a mean from an empty sample")
    space.validate(batch)
    if config.method == "grid":
        return brute_force_mean(cost, space, batch, config.grid_step)
    F = _tree_objective(cost, space, batch, _weights(n, weights))
    edges, offsets = np.asarray(batch.edge), np.asarray(batch.offset, dtype=float)
    best_point, best_value, evals = None, np.inf, 0
    status = Status.CONVERGED
    for v in range(space.n_vertices):
        vp = space.vertex_point(v)
        value = float(F(vp.edge, vp.offset)[0])
        if value < best_value:
            best_point, best_value = vp, value
    for k, length in enumerate(space.lengths):
        res = minimize_scalar(
            lambda o: float(F(k, o)[0]),
            bounds=(0.0, float(length)),
            method="bounded",
            options={"xatol": config.tol * (1.0 + length), "maxiter": config.max_iter},
        )
        evals += int(res.nfev)
        if not res.success:
            status = Status.MAX_ITER
        # kinks of power costs sit at sample offsets; try the two nearest ones
        on_edge = offsets[edges == k]
        cand = np.concatenate([[float(res.x)], on_edge[np.argsort(np.abs(on_edge - res.x))[:2]]])
        if isinstance(cost, SquaredDistance):
            cand = np.concatenate([[_parabola_vertex(F, k, float(length))], cand])
        values = F(k, cand)
        i = int(np.argmin(values))
        # earlier candidates (vertices first) win ties at evaluation precision
        if values[i] < best_value - 1e-12 * (1.0 + abs(best_value)):
            best_point, best_value = space.canonical(TreePoint(k, float(cand[i]))), float(values[i])
    return MeanResult(best_point, best_value, evals, status, [])


def frechet_mean_constrained_plane(samples, space: PlaneWithHole, config: EstimatorConfig | None = None) -> MeanResult:
    """Project the arithmetic mean onto the plane with a hole (squared cost)."""
    if not isinstance(space, PlaneWithHole):
        raise IncompatibleSpace("needs a plane with a hole")
    Y = _vector_samples(space, samples)
    mu = Y.mean(axis=0)
    cost = SquaredDistance()
    try:
        point = space.project(mu)
        status = Status.CONVERGED
    except NonUniqueProjection as err:
        point = np.asarray(err.candidates[0], dtype=float)
        status = Status.DEGENERATE
    return MeanResult(point, float(np.mean(cost(space, Y, point))), 0, status, [])


def _axis_grid(lo: float, hi: float, step: float) -> np.ndarray:
    k = int(np.floor((hi - lo) / step + 1e-12))
    grid = lo + step * np.arange(k + 1)
    return grid if grid[-1] >= hi else np.append(grid, hi)


def brute_force_mean(cost: Cost, space: Space, samples, grid_step: float, box=None) -> MeanResult:
    """Exhaustive minimization over a grid; ties go to the lowest grid index.

    Vector grids cover ``box`` (per-axis bounds, default the bounding box of
    the samples, which contains the minimizer of every convex cost here).
    Tree grids place points every ``grid_step`` along each edge plus both ends.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    batch = as_batch(space, samples)
    if batch_len(batch) == 0:
        raise EmptySample("cannot estimate a mean from an empty sample")
    if isinstance(space, MetricTree):
        F = _tree_objective(cost, space, batch, _weights(batch_len(batch), None))
        best = (np.inf, None)
        count = 0
        for k, length in enumerate(space.lengths):
            offsets = _axis_grid(0.0, float(length), grid_step)
            values = F(k, offsets)
            count += offsets.size
            i = int(np.argmin(values))
            if values[i] < best[0]:
                best = (float(values[i]), space.canonical(TreePoint(k, float(offsets[i]))))
        return MeanResult(best[1], best[0], count, Status.CONVERGED, [])
    if not isinstance(space, (Euclidean, PlaneWithHole)):
        raise IncompatibleSpace(f"no grid available for {space!r}")
    Y = np.asarray(batch, dtype=float)
    if box is None:
        lo, hi = Y.min(axis=0), Y.max(axis=0)
    else:
        lo, hi = np.broadcast_to(np.asarray(box[0], dtype=float), (space.dim,)), np.broadcast_to(np.asarray(box[1], dtype=float), (space.dim,))
    axes = [_axis_grid(a, b, grid_step) for a, b in zip(lo, hi)]
    if np.prod([a.size for a in axes]) > 5e7:
        raise ValueError("grid too large; increase grid_step or shrink the box")
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, space.dim)
    if isinstance(space, PlaneWithHole):
        grid = grid[~space.in_hole(grid)]
    best_value, best_index = np.inf, -1
    chunk = max(1, 2_000_000 // Y.shape[0])
    for start in range(0, grid.shape[0], chunk):
        part = grid[start : start + chunk]
        values = cost(space, Y[None, :, :], part[:, None, :]).mean(axis=1)
        i = int(np.argmin(values))
        if values[i] < best_value:
            best_value, best_index = float(values[i]), start + i
    return MeanResult(grid[best_index], best_value, grid.shape[0], Status.CONVERGED, [])


def growth_fit(space: Space, cost: Cost, population, m, probe_points) -> GrowthFit:
    """Fit ``F(q) - F(m) = c l(m,q)**gamma`` on probe points by log-log least squares.

    ``population`` is a callable ``F``, an object with an
    ``objective(cost, space, q)`` method, or a large sample whose empirical
    objective stands in for ``F``.
    """
    F = _population_objective(space, cost, population)
    probes = list(probe_points) if not isinstance(probe_points, np.ndarray) else list(probe_points)
    if len(probes) < 2:
        raise ValueError("need at least two probe points")
    fm = F(m)
    diffs = np.array([F(q) - fm for q in probes])
    losses = np.array([float(space.base_distance(m, q)) for q in probes])
    if np.any(diffs <= 0):
        raise InvalidCenter("some probe has an objective no larger than the proposed center")
    if np.any(losses <= 0):
        raise ValueError("probe points must differ from m")
    fit = stats.linregress(np.log(losses), np.log(diffs))
    gamma = float(fit.slope)
    cg = float(np.min(diffs / losses**gamma))
    return GrowthFit(gamma_hat=gamma, cg_hat=cg, r_squared=float(fit.rvalue**2))


def _population_objective(space, cost, population) -> Callable[[Any], float]:
    if callable(population) and not hasattr(population, "objective"):
        return lambda q: float(population(q))
    if hasattr(population, "objective"):
        return lambda q: float(population.objective(cost, space, q))
    batch = as_batch(space, population)
    return lambda q: float(np.mean(cost(space, batch, q)))


# ---------------------------------------------------------------- estimator API


def _make_cost(cost, two_alpha: float) -> Cost:
    if isinstance(cost, Cost):
        return cost
    if cost == "squared":
        return SquaredDistance()
    if cost == "power":
        return PowerCost(two_alpha)
    if cost == "bregman_exp":
        return Bregman("coordinate_exponential")
    raise ValueError(f"unknown cost {cost!r}")


class FrechetMean(TransformerMixin, BaseEstimator):
    """Fréchet mean of vectors under a squared, power or Bregman cost.

    After ``fit``, ``location_`` holds the minimizer. ``transform`` maps each
    row to its cost relative to the fitted location and ``score`` is the
    negated empirical objective.
    """

    def __init__(self, cost="squared", two_alpha=2.0, method="auto", tol=1e-10, max_iter=1000):
        self.cost = cost
        self.two_alpha = two_alpha
        self.method = method
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X)
        space = Euclidean(X.shape[1])
        res = frechet_mean_vector(
            _make_cost(self.cost, self.two_alpha),
            space,
            X,
            EstimatorConfig(self.method, self.tol, self.max_iter),
        )
        self.location_ = np.asarray(res.point)
        self.objective_ = res.objective
        self.n_iter_ = res.iterations
        self.status_ = res.status
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "location_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        space = Euclidean(X.shape[1])
        return _make_cost(self.cost, self.two_alpha)(space, X, self.location_)[:, None]

    def score(self, X, y=None):
        return -float(self.transform(X).mean())


class TreeFrechetMean(BaseEstimator):
    """Fréchet mean on a metric tree; rows of ``X`` are ``(edge, offset)`` pairs."""

    def __init__(self, tree=None, cost="squared", two_alpha=2.0, tol=1e-10, max_iter=500):
        self.tree = tree
        self.cost = cost
        self.two_alpha = two_alpha
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if not isinstance(self.tree, MetricTree):
            raise ValueError("tree must be a MetricTree")
        batch = as_batch(self.tree, X)
        res = frechet_mean_tree(
            _make_cost(self.cost, self.two_alpha),
            self.tree,
            batch,
            EstimatorConfig("edge_scan", self.tol, self.max_iter),
        )
        self.location_ = res.point
        self.objective_ = res.objective
        self.status_ = res.status
        return self

    def score(self, X, y=None):
        check_is_fitted(self, "location_")
        batch = as_batch(self.tree, X)
        return -float(np.mean(_make_cost(self.cost, self.two_alpha)(self.tree, batch, self.location_)))


class ConstrainedPlaneMean(BaseEstimator):
    """Squared-cost mean restricted to the plane minus a disc or polygon."""

    def __init__(self, hole=None):
        self.hole = hole

    def fit(self, X, y=None):
        if not isinstance(self.hole, (Disc, Polygon)):
            raise ValueError("hole must be a Disc or Polygon")
        X = check_array(X)
        res = frechet_mean_constrained_plane(X, PlaneWithHole(self.hole))
        self.location_ = res.point
        self.objective_ = res.objective
        self.status_ = res.status
        return self
