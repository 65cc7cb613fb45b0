"""Seeded Monte Carlo experiments on empirical Fréchet means and their losses."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy import integrate, stats

from .costs import AnchoredPowerCost, Cost, PowerCost, SquaredDistance, as_batch, batch_len
from .entropy import eta
from .errors import AllZeroLoss, IncompatibleSpace, NothingToFit, TooFewReplications
from .estimators import (
    EstimatorConfig,
    MeanResult,
    frechet_mean_constrained_plane,
    frechet_mean_tree,
    frechet_mean_vector,
)
from .spaces import BASE, DistanceKind, Euclidean, MetricTree, PlaneWithHole, Space, TreePoint, distance

# Number of draws behind plug-in population objectives.
PLUGIN_DRAWS = 1_000_000
PLUGIN_SEED = 20240601


def substream(seed: int, n: int, rep: int) -> np.random.Generator:
    """Independent generator for cell (n, rep) of an experiment seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(rep)]))


# ---------------------------------------------------------------- distributions


class DistributionSpec:
    """Law of the data. ``objective`` is the population objective ``q -> E c(Y, q)``."""

    def sample(self, rng: np.random.Generator, n: int):
        raise NotImplementedError

    def minimizer(self, cost: Cost, space: Space):
        raise NotImplementedError

    def objective(self, cost: Cost, space: Space, q) -> float:
        return _plugin(self, cost, space, q)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _plugin(dist: DistributionSpec, cost: Cost, space: Space, q) -> float:
    draws = dist._plugin_draws
    return float(np.mean(cost(space, draws, q)))


def _plugin_draws(dist):
    return dist.sample(np.random.default_rng(PLUGIN_SEED), PLUGIN_DRAWS)


@dataclass(frozen=True)
class GaussianVector(DistributionSpec):
    mean: tuple[float, ...]
    variances: tuple[float, ...]

    def __post_init__(self):
        if len(self.mean) != len(self.variances):
            raise ValueError("mean and variances differ in length")
        if not all(v > 0 for v in self.variances):
            raise ValueError("covariance entries must be positive")

    @property
    def dim(self) -> int:
        return len(self.mean)

    def sample(self, rng, n):
        return np.asarray(self.mean) + rng.standard_normal((n, self.dim)) * np.sqrt(self.variances)

    def minimizer(self, cost, space):
        # symmetric about its mean, so every convex distance-power cost is minimized there
        return np.asarray(self.mean, dtype=float)

    def objective(self, cost, space, q):
        if isinstance(cost, SquaredDistance):
            diff = np.asarray(q, dtype=float) - np.asarray(self.mean)
            return float(diff @ diff + sum(self.variances))
        return _plugin(self, cost, space, q)

    @cached_property
    def _plugin_draws(self):
        return _plugin_draws(self)

    def to_dict(self):
        return {"kind": "gaussian", "mean": list(self.mean), "variances": list(self.variances)}


@dataclass(frozen=True)
class CauchyLine(DistributionSpec):
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def sample(self, rng, n):
        return self.location + self.scale * rng.standard_cauchy((n, 1))

    def minimizer(self, cost, space):
        if not isinstance(cost, (PowerCost, AnchoredPowerCost)) or cost.two_alpha != 1.0:
            raise ValueError("the Cauchy law only has a known minimizer for the absolute-value cost")
        return np.array([self.location])

    def objective(self, cost, space, q):
        """``E[|Y - q| - |Y - anchor|]`` by quadrature; plain costs have no finite mean."""
        if not isinstance(cost, AnchoredPowerCost) or cost.two_alpha != 1.0:
            raise ValueError("Cauchy objectives need the anchored absolute-value cost")
        q = float(np.ravel(q)[0])
        o = float(np.ravel(cost.anchor)[0])
        law = stats.cauchy(self.location, self.scale)
        lo, hi = sorted((q, o))
        # outside [lo, hi] the integrand is the constant +-(q - o)
        inner, _ = integrate.quad(lambda y: (abs(y - q) - abs(y - o)) * law.pdf(y), lo, hi)
        tails = (q - o) * (law.cdf(lo) - law.sf(hi))
        return float(inner + tails)

    def to_dict(self):
        return {"kind": "cauchy", "location": self.location, "scale": self.scale}


@dataclass(frozen=True)
class TreeDiscrete(DistributionSpec):
    points: tuple[TreePoint, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        # accept plain (edge, offset) pairs as well as TreePoints
        points = tuple(p if isinstance(p, TreePoint) else TreePoint(int(p[0]), float(p[1])) for p in self.points)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.points) != len(self.probs) or not self.points:
            raise ValueError("need one probability per point")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    @property
    def _batch(self) -> TreePoint:
        return TreePoint(
            np.array([int(p.edge) for p in self.points]),
            np.array([float(p.offset) for p in self.points]),
        )

    def sample(self, rng, n):
        idx = rng.choice(len(self.points), size=n, p=np.asarray(self.probs))
        b = self._batch
        return TreePoint(b.edge[idx], b.offset[idx])

    def minimizer(self, cost, space):
        return frechet_mean_tree(cost, space, self._batch, weights=np.asarray(self.probs)).point

    def objective(self, cost, space, q):
        return float(np.asarray(self.probs) @ cost(space, self._batch, q))

    def to_dict(self):
        return {
            "kind": "tree_discrete",
            "points": [[int(p.edge), float(p.offset)] for p in self.points],
            "probs": list(self.probs),
        }


@dataclass(frozen=True)
class PlaneCloud(DistributionSpec):
    """Isotropic Gaussian mixture in the plane; the mean is the weighted center."""

    centers: tuple[tuple[float, float], ...]
    weights: tuple[float, ...]
    sigma: float = 1.0

    def __post_init__(self):
        if len(self.centers) != len(self.weights) or not self.centers:
            raise ValueError("need one weight per center")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def mean(self) -> np.ndarray:
        return np.asarray(self.weights) @ np.asarray(self.centers, dtype=float)

    def sample(self, rng, n):
        idx = rng.choice(len(self.centers), size=n, p=np.asarray(self.weights))
        return np.asarray(self.centers, dtype=float)[idx] + self.sigma * rng.standard_normal((n, 2))

    def minimizer(self, cost, space):
        if not isinstance(cost, SquaredDistance):
            raise ValueError("plane clouds only have a known minimizer for the squared cost")
        if isinstance(space, PlaneWithHole):
            return space.project(self.mean)
        return self.mean

    def objective(self, cost, space, q):
        if not isinstance(cost, SquaredDistance):
            return _plugin(self, cost, space, q)
        c = np.asarray(self.centers, dtype=float)
        w = np.asarray(self.weights)
        diff = c - np.asarray(q, dtype=float)
        return float(w @ np.sum(diff * diff, axis=1) + 2.0 * self.sigma**2)

    @cached_property
    def _plugin_draws(self):
        return _plugin_draws(self)

    def to_dict(self):
        return {
            "kind": "plane_cloud",
            "centers": [list(c) for c in self.centers],
            "weights": list(self.weights),
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class PointMass(DistributionSpec):
    point: Any

    def sample(self, rng, n):
        if isinstance(self.point, TreePoint):
            return TreePoint(np.full(n, int(self.point.edge)), np.full(n, float(self.point.offset)))
        return np.tile(np.asarray(self.point, dtype=float), (n, 1))

    def minimizer(self, cost, space):
        return self.point

    def objective(self, cost, space, q):
        return float(np.ravel(cost(space, self.sample(None, 1), q))[0])

    def to_dict(self):
        if isinstance(self.point, TreePoint):
            return {"kind": "point_mass", "point": [int(self.point.edge), float(self.point.offset)]}
        return {"kind": "point_mass", "point": np.asarray(self.point, dtype=float).tolist()}


def tripod_three_point(probs: Sequence[float] = (0.6, 0.25, 0.15), length: float = 1.0):
    """A tripod and the law putting ``probs[k]`` on the tip of pod ``k + 1``."""
    tree = MetricTree.tripod(length)
    points = tuple(TreePoint(k, length) for k in range(3))
    return tree, TreeDiscrete(points, tuple(float(p) for p in probs))


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentConfig:
    space: Space
    cost: Cost
    distribution: DistributionSpec
    n_grid: Sequence[int]
    replications: int
    seed: int = 0
    loss: DistanceKind = BASE
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    known_m: Any = None
    kappa: float = 1.0

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("sample sizes must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.kappa >= 1:
            raise ValueError("kappa must be at least 1")

    def minimizer(self):
        if self.known_m is not None:
            return self.known_m
        return self.distribution.minimizer(self.cost, self.space)


def estimate_mean(space: Space, cost: Cost, samples, config: EstimatorConfig) -> MeanResult:
    if isinstance(space, MetricTree):
        return frechet_mean_tree(cost, space, samples, config)
    if isinstance(space, PlaneWithHole):
        return frechet_mean_constrained_plane(samples, space, config)
    if isinstance(space, Euclidean):
        return frechet_mean_vector(cost, space, samples, config)
    raise IncompatibleSpace(f"no estimator for {space!r}")


CSV_HEADER = ("n", "rep", "loss", "status", "runtime_s")


@dataclass
class LossTable:
    n: np.ndarray
    rep: np.ndarray
    loss: np.ndarray
    status: list[str]
    runtime: np.ndarray

    def __len__(self) -> int:
        return len(self.status)

    def at(self, n: int) -> np.ndarray:
        """Losses of the rows with sample size ``n`` whose estimator did not fail."""
        keep = (self.n == n) & np.isfinite(self.loss)
        return self.loss[keep]

    @classmethod
    def from_losses(cls, losses: dict[int, Sequence[float]]) -> "LossTable":
        """Build a table from per-n loss lists, e.g. synthetic data."""
        ns, reps, vals = [], [], []
        for n, values in losses.items():
            for r, v in enumerate(values):
                ns.append(n)
                reps.append(r)
                vals.append(float(v))
        k = len(vals)
        return cls(np.array(ns, dtype=int), np.array(reps, dtype=int), np.array(vals), ["converged"] * k, np.zeros(k))

    def to_csv(self, path, timing: bool = False) -> None:
        """Write the table. Runtimes are left blank unless ``timing`` so reruns match byte for byte."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i in range(len(self)):
                rt = f"{self.runtime[i]:.6f}" if timing else ""
                w.writerow([int(self.n[i]), int(self.rep[i]), repr(float(self.loss[i])), self.status[i], rt])

    @classmethod
    def from_csv(cls, path) -> "LossTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"expected header {','.join(CSV_HEADER)}")
            rows = list(reader)
        return cls(
            np.array([int(r["n"]) for r in rows], dtype=int),
            np.array([int(r["rep"]) for r in rows], dtype=int),
            np.array([float(r["loss"]) for r in rows]),
            [r["status"] for r in rows],
            np.array([float(r["runtime_s"]) if r["runtime_s"] else math.nan for r in rows]),
        )


def draw(config: ExperimentConfig, n: int, rep: int):
    return config.distribution.sample(substream(config.seed, n, rep), n)


def run_experiment(config: ExperimentConfig) -> LossTable:
    """One row per (n, rep); estimator failures are recorded in the row, not raised."""
    m = config.minimizer()
    ns, reps, losses, status, runtimes = [], [], [], [], []
    for n in config.n_grid:
        for rep in range(config.replications):
            samples = draw(config, n, rep)
            start = time.perf_counter()
            try:
                result = estimate_mean(config.space, config.cost, samples, config.estimator)
                loss = float(np.ravel(distance(config.space, m, result.point, config.loss))[0])
                state = result.status.value
            except Exception as err:  # noqa: BLE001 - failures become table rows
                loss, state = math.nan, f"failed:{type(err).__name__}"
            runtimes.append(time.perf_counter() - start)
            ns.append(n)
            reps.append(rep)
            losses.append(loss)
            status.append(state)
    return LossTable(np.array(ns), np.array(reps), np.array(losses), status, np.array(runtimes))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    r2: float

    def to_json(self) -> str:
        return json.dumps({"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr, "r2": self.r2})


def aggregate(table: LossTable, statistic: str = "median", p: float | None = None, kappa: float = 1.0):
    """Per-n statistic of ``loss ** kappa``; returns (n values, statistics)."""
    ns = np.unique(table.n)
    out = []
    for n in ns:
        values = table.at(n) ** kappa
        if values.size == 0:
            raise NothingToFit(f"no finite losses at n={n}")
        if statistic == "mean":
            out.append(values.mean())
        elif statistic == "median":
            out.append(np.median(values))
        elif statistic == "quantile":
            if p is None or not 0 < p < 1:
                raise ValueError("quantile statistic needs p in (0, 1)")
            out.append(np.quantile(values, p))
        else:
            raise ValueError("statistic must be mean, median or quantile")
    return ns, np.array(out)


def fit_rate(table: LossTable, statistic: str = "median", p: float | None = None, kappa: float = 1.0) -> RateFit:
    """Least-squares line through (log n, log statistic)."""
    ns, values = aggregate(table, statistic, p, kappa)
    if ns.size < 3:
        raise NothingToFit("need at least three distinct sample sizes")
    if np.any(values <= 0):
        raise AllZeroLoss("a per-n statistic is zero; the loss has no rate to fit")
    res = stats.linregress(np.log(ns), np.log(values))
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2))


@dataclass(frozen=True)
class TailCheck:
    slope: float
    theoretical_slope: float
    points: int


MIN_TAIL_REPS = 500


def tail_check(
    table: LossTable,
    n: int,
    loss_exponent: float,
    zeta: float,
    gamma_minus: float,
    beta: float = 0.5,
) -> TailCheck:
    """Log-log slope of the empirical survival function of normalized losses.

    Losses at sample size ``n`` are divided by ``eta(beta, n) ** loss_exponent``;
    the fit uses order statistics whose survival lies in ``[5/N, 0.1]``. The
    theoretical slope ``-zeta * gamma_minus`` is reported alongside.
    """
    losses = table.at(n)
    if losses.size < MIN_TAIL_REPS:
        raise TooFewReplications(f"need {MIN_TAIL_REPS} replications at n={n}, have {losses.size}")
    if not np.any(losses > 0):
        raise AllZeroLoss("every loss is zero")
    t = np.sort(losses / eta(beta, n) ** loss_exponent)
    N = t.size
    survival = 1.0 - np.arange(N) / N
    keep = (survival >= 5.0 / N) & (survival <= 0.1) & (t > 0)
    if np.unique(t[keep]).size < 2:
        raise NothingToFit("tail has fewer than two distinct values")
    res = stats.linregress(np.log(t[keep]), np.log(survival[keep]))
    return TailCheck(float(res.slope), -zeta * gamma_minus, int(keep.sum()))


def moment_estimate(distribution: DistributionSpec, space: Space, structure, zeta: float, draws: int, seed=0) -> float:
    """Monte Carlo ``M(zeta)`` for the data distance of ``structure`` between independent copies.

    ``zeta >= 2`` averages ``a**zeta``; smaller ``zeta`` uses ``mean(a**2) ** (zeta/2)``.
    """
    if not zeta >= 1:
        raise ValueError("zeta must be at least 1")
    if draws < 1:
        raise ValueError("draws must be positive")
    rng = np.random.default_rng(seed)
    y = distribution.sample(rng, draws)
    z = distribution.sample(rng, draws)
    a = np.asarray(structure.data_distance(space, y, z), dtype=float)
    if zeta >= 2:
        return float(np.mean(a**zeta))
    return float(np.mean(a**2) ** (zeta / 2.0))


def empirical_process_sup(config: ExperimentConfig, delta: float, q_grid, n: int, rep: int = 0) -> float:
    """``max_q F(q) - F(m) - F_n(q) + F_n(m)`` over grid points with loss at most ``delta``.

    The sample is the one ``run_experiment`` draws for cell (n, rep). The
    minimizer itself always belongs to the ball, so the result is at least 0.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    space, cost, dist = config.space, config.cost, config.distribution
    m = config.minimizer()
    grid = as_batch(space, q_grid)
    k = batch_len(grid)
    if k == 0:
        raise ValueError("empty q grid")
    samples = draw(config, n, rep)
    Fm = dist.objective(cost, space, m)
    Fnm = float(np.mean(cost(space, samples, m)))
    best = 0.0
    for i in range(k):
        q = space.take(grid, i)
        if float(np.ravel(distance(space, m, q, config.loss))[0]) > delta:
            continue
        value = dist.objective(cost, space, q) - Fm - float(np.mean(cost(space, samples, q))) + Fnm
        best = max(best, value)
    return best
