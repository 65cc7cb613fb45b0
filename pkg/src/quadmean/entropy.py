"""Covering numbers, the entropy functional, eta rates and rate predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

from .errors import NothingToFit
from .spaces import Space


def _as_points(points):
    if isinstance(points, np.ndarray) or isinstance(points, (list, tuple)):
        arr = np.asarray(points, dtype=float)
        return arr[:, None] if arr.ndim == 1 else arr
    return points


def _size(points) -> int:
    if hasattr(points, "edge"):
        return int(np.size(points.edge))
    return int(np.shape(points)[0])


def _take(points, idx):
    if hasattr(points, "edge"):
        return type(points)(np.asarray(points.edge)[idx], np.asarray(points.offset)[idx])
    return points[idx]


def _dist_to(points, i, metric):
    """Distances from every point to point ``i``."""
    if metric is None:
        return np.linalg.norm(points - points[i], axis=1)
    return _dist_to_point(points, _take(points, i), metric)


_PAIR_BUDGET = 200_000


def _count_within(points, cand, uncovered, r, metric, tree=None):
    """For each candidate, the number of uncovered points within distance r."""
    if metric is None:
        if tree is not None and len(cand) ** 2 <= _PAIR_BUDGET:
            lists = tree.query_ball_point(points[cand], r, return_sorted=False)
            lengths = np.fromiter((len(idx) for idx in lists), dtype=np.intp, count=len(lists))
            flat = np.fromiter((j for idx in lists for j in idx), dtype=np.intp, count=int(lengths.sum()))
            return np.add.reduceat(uncovered[flat].astype(np.intp), np.r_[0, np.cumsum(lengths)[:-1]])
        targets = points[uncovered]
        return cKDTree(targets).query_ball_point(points[cand], r, return_length=True)
    sub = _take(points, np.flatnonzero(uncovered))
    return np.array([np.count_nonzero(_dist_to_point(sub, _take(points, c), metric) <= r) for c in cand])


def _dist_to_point(batch, point, metric):
    if isinstance(metric, Space):
        return np.asarray(metric.base_distance(batch, point))
    return np.asarray(metric(batch, point))


def covering_number(points, r: float, metric=None) -> int:
    """Size of a greedy r-cover of a finite point set (an upper bound on the covering number).

    Repeatedly take the uncovered point farthest from the chosen centers and
    cover it with the point of its r-neighbourhood that covers the most
    uncovered points. ``metric`` is ``None`` (Euclidean rows), a ``Space`` or a
    callable ``metric(batch, point) -> distances``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    points = _as_points(points)
    n = _size(points)
    if n == 0:
        raise ValueError("cannot cover an empty region")
    uncovered = np.ones(n, dtype=bool)
    gap = np.full(n, np.inf)
    centers = 0
    tree = cKDTree(points) if metric is None else None
    u = 0
    while True:
        cand = np.flatnonzero(_dist_to(points, u, metric) <= r)
        gains = _count_within(points, cand, uncovered, r, metric, tree)
        c = int(cand[int(np.argmax(gains))])
        dc = _dist_to(points, c, metric)
        uncovered &= dc > r
        centers += 1
        if not uncovered.any():
            return centers
        gap = np.minimum(gap, dc)
        u = int(np.argmax(np.where(uncovered, gap, -np.inf)))


def covering_numbers(points, radii, metric=None) -> np.ndarray:
    """Greedy covers over a radius grid, made monotone non-increasing in the radius.

    A cover at a smaller radius is also a cover at every larger one, so the
    running minimum is still a valid upper bound.
    """
    radii = np.asarray(radii, dtype=float)
    order = np.argsort(radii)
    raw = np.array([covering_number(points, float(radii[i]), metric) for i in order])
    out = np.empty_like(raw)
    out[order] = np.minimum.accumulate(raw)
    return out


def interval_points(lo: float, hi: float, spacing: float) -> np.ndarray:
    k = max(int(math.ceil((hi - lo) / spacing)), 0)
    return np.linspace(lo, hi, k + 1)[:, None]


def ball_points(dim: int, radius: float, spacing: float) -> np.ndarray:
    """Grid points of spacing ``spacing`` inside the closed Euclidean ball at the origin."""
    axis = np.arange(-radius, radius + 0.5 * spacing, spacing)
    axis = axis - axis.mean()
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return grid[np.linalg.norm(grid, axis=1) <= radius]


def diameter(points, metric=None) -> float:
    points = _as_points(points)
    n = _size(points)
    if n <= 1:
        return 0.0
    if metric is None:
        pts = points
        if n > 3000 and points.shape[1] > 1:
            try:
                pts = points[ConvexHull(points).vertices]
            except QhullError:
                pass
        elif points.shape[1] == 1:
            return float(points.max() - points.min())
        return float(pdist(pts).max()) if _size(pts) > 1 else 0.0
    return float(max(_dist_to(points, i, metric).max() for i in range(n)))


def entrn_estimate(points, n: int, metric=None, r_grid=None, grid_size: int = 40) -> float:
    """``inf_eps [eps sqrt(n) + int_eps^inf sqrt(log N(r)) dr]`` on a log-spaced radius grid.

    The integral is an upper Riemann sum of the step function ``sqrt(log N)``,
    truncated at the diameter. The ``eps -> 0`` candidate bounds the integral
    below the first radius by ``r_0 sqrt(log |points|)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    points = _as_points(points)
    if _size(points) == 0:
        raise ValueError("empty region")
    diam = diameter(points, metric)
    if diam == 0:
        return 0.0
    if r_grid is None:
        r_grid = np.geomspace(diam / 100.0, diam, grid_size)
    r = np.unique(np.asarray(r_grid, dtype=float))
    r = r[r < diam]
    r = np.append(r, diam)
    h = np.sqrt(np.log(covering_numbers(points, r, metric)))
    pieces = h[:-1] * np.diff(r)
    tails = np.append(np.cumsum(pieces[::-1])[::-1], 0.0)
    values = r * math.sqrt(n) + tails
    eps_zero = r[0] * math.sqrt(math.log(_size(points))) + tails[0]
    return float(min(values.min(), eps_zero))


def eta(beta: float, n: int) -> float:
    """The rate ``n**-1/2``, ``n**-1/2 log(n+1)`` or ``n**(-1/(2 beta))`` for beta <, =, > 1."""
    if not beta > 0 or n < 1:
        raise ValueError("need beta > 0 and n >= 1")
    if beta < 1:
        return n**-0.5
    if beta == 1:
        return n**-0.5 * math.log(n + 1)
    return n ** (-1.0 / (2.0 * beta))


@dataclass(frozen=True)
class EntropyFit:
    model: str
    c_e_hat: float
    beta_hat: float
    max_residual: float


def fit_entropy_model(ratios, sqrt_log_n, model: str = "power") -> EntropyFit:
    """Least-squares fit of ``sqrt(log N)`` against ``delta / r`` in log coordinates."""
    ratios = np.asarray(ratios, dtype=float)
    y = np.asarray(sqrt_log_n, dtype=float)
    if model == "power":
        keep = (y > 0) & (ratios > 0)
        x = np.log(ratios[keep])
    elif model == "log_power":
        keep = (y > 0) & (ratios > 1)
        x = np.log(np.log(ratios[keep]))
    else:
        raise ValueError("model must be 'power' or 'log_power'")
    if keep.sum() < 2 or np.ptp(x) == 0:
        raise NothingToFit("fewer than two informative cells")
    A = np.column_stack([np.ones_like(x), x])
    (log_c, beta), *_ = np.linalg.lstsq(A, np.log(y[keep]), rcond=None)
    c = math.exp(log_c)
    fitted = c * np.exp(beta * x)
    return EntropyFit(model, c, float(beta), float(np.max(np.abs(fitted - y[keep]))))


def entropy_fit(
    region: Callable[[float], object] | None,
    delta_grid,
    r_grid,
    model: str = "power",
    metric=None,
    covering: Callable[[float, float], float] | None = None,
) -> EntropyFit:
    """Fit the entropy model to covering numbers of ``region(delta)`` over a (delta, r) grid.

    ``covering(delta, r)`` may replace the greedy computation, e.g. for
    synthetic or analytically known covering numbers.
    """
    ratios, values = [], []
    for delta in delta_grid:
        if covering is None:
            pts = region(delta)
            counts = covering_numbers(pts, r_grid, metric)
        else:
            counts = [covering(delta, r) for r in r_grid]
        for r, count in zip(r_grid, counts):
            ratios.append(delta / r)
            values.append(math.sqrt(math.log(count)) if count > 1 else 0.0)
    if not any(v > 0 for v in values):
        raise NothingToFit("every covering number equals one")
    return fit_entropy_model(ratios, values, model)


@dataclass(frozen=True)
class RatePrediction:
    eta_value: float
    loss_exponent: float
    predicted_rate: float
    schedule: dict | None = None


def rate_prediction(
    gamma: float,
    alpha_ent: float,
    beta_ent: float,
    n: float,
    mode: str = "direct",
    kappa: float | None = None,
) -> RatePrediction:
    """Predicted order of the loss from the growth and entropy exponents.

    ``direct``: ``eta(beta, n) ** (1 / (gamma - alpha/beta))``.
    ``scheduled``: ``(n**-1/2 log(n)**beta) ** (kappa / (gamma - 1))`` with the
    schedule ``R_n = n`` and ``xi_n = 1 - 1/log n``.
    """
    if not beta_ent > 0:
        raise ValueError("beta_ent must be positive")
    if alpha_ent / beta_ent >= gamma:
        raise ValueError(f"need alpha/beta < gamma, got {alpha_ent / beta_ent} >= {gamma}")
    if mode == "direct":
        exponent = 1.0 / (gamma - alpha_ent / beta_ent)
        base = eta(beta_ent, n)
        return RatePrediction(base, exponent, base**exponent)
    if mode == "scheduled":
        if kappa is None or not kappa > gamma - 1 or not gamma > 1:
            raise ValueError("the scheduled mode needs gamma > 1 and kappa > gamma - 1")
        if not n > 1:
            raise ValueError("the scheduled mode needs n > 1")
        base = n**-0.5 * math.log(n) ** beta_ent
        exponent = kappa / (gamma - 1.0)
        schedule = {"R_n": n, "xi_n": 1.0 - 1.0 / math.log(n)}
        return RatePrediction(base, exponent, base**exponent, schedule)
    raise ValueError("mode must be 'direct' or 'scheduled'")

