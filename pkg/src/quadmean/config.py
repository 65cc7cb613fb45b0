"""JSON run configuration shared by every CLI subcommand.

Schema (all sections optional, each subcommand reads what it needs)::

    {"space": {"kind": ...}, "cost": {"kind": ...}, "structure": {"kind": ...},
     "experiment": {"n_grid": [...], "replications": int, "seed": int, "kappa": float,
                    "distribution": {"kind": ...}, "known_m": point, "loss": {"kind": ...}},
     "entropy": {"delta_grid": [...], "r_grid": [...], "model": "power" | "log_power"}}
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

from . import costs
from .estimators import EstimatorConfig
from .harness import CauchyLine, ExperimentConfig, GaussianVector, PlaneCloud, PointMass, TreeDiscrete
from .spaces import (
    BASE,
    Disc,
    Euclidean,
    MetricTree,
    PlaneWithHole,
    Polygon,
    Power,
    ProductSpace,
    Projection,
    SphereProjection,
    TreePoint,
    WeightedSequence,
)


class ConfigError(ValueError):
    """The configuration is malformed or names an unknown kind."""


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from err
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def config_hash(data: Any) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _kind(section: dict, what: str) -> str:
    if not isinstance(section, dict) or "kind" not in section:
        raise ConfigError(f"{what} needs a 'kind'")
    return section["kind"]


def _need(section: dict, key: str, what: str):
    if key not in section:
        raise ConfigError(f"{what} of kind {section.get('kind')!r} needs {key!r}")
    return section[key]


def build_space(section: dict):
    kind = _kind(section, "space")
    if kind == "euclidean":
        return Euclidean(int(_need(section, "dim", "space")), tuple(section.get("box", (-1.0, 1.0))))
    if kind == "weighted_sequence":
        return WeightedSequence(_need(section, "weights", "space"))
    if kind == "tree":
        return MetricTree([tuple(e) for e in _need(section, "edges", "space")])
    if kind == "tripod":
        return MetricTree.tripod(float(section.get("length", 1.0)))
    if kind == "random_tree":
        return MetricTree.random(int(section.get("n_edges", 8)), section.get("seed", 0))
    if kind == "plane_with_hole":
        hole = _need(section, "hole", "space")
        hk = _kind(hole, "hole")
        if hk == "disc":
            shape = Disc(tuple(_need(hole, "center", "hole")), float(_need(hole, "radius", "hole")))
        elif hk == "polygon":
            shape = Polygon(tuple(tuple(v) for v in _need(hole, "vertices", "hole")))
        else:
            raise ConfigError(f"unknown hole kind {hk!r}")
        return PlaneWithHole(shape)
    if kind == "product":
        return ProductSpace([build_space(f) for f in _need(section, "factors", "space")])
    raise ConfigError(f"unknown space kind {kind!r}")


def parse_point(space, value):
    """Vectors are lists of coordinates; tree points are ``[edge, offset]``."""
    if isinstance(space, MetricTree):
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError("tree points are written as [edge, offset]")
        return TreePoint(int(value[0]), float(value[1]))
    return np.asarray(value, dtype=float)


def build_cost(section: dict, space=None):
    kind = _kind(section, "cost")
    if kind == "squared":
        return costs.SquaredDistance()
    if kind == "power":
        return costs.PowerCost(float(_need(section, "two_alpha", "cost")))
    if kind == "anchored_power":
        anchor = parse_point(space, _need(section, "anchor", "cost"))
        return costs.AnchoredPowerCost(float(_need(section, "two_alpha", "cost")), anchor)
    if kind == "bregman":
        return costs.Bregman(section.get("psi", "squared_norm"))
    raise ConfigError(f"unknown cost kind {kind!r}")


STRUCTURE_KINDS = (
    "nice",
    "bounded_lipschitz",
    "power",
    "inner_product",
    "weighted_ip",
    "bregman",
    "strong_ip",
    "projection",
    "product",
    "min",
)


def build_structure(section: dict, space=None):
    kind = _kind(section, "structure")
    if kind == "nice":
        return costs.Nice()
    if kind == "bounded_lipschitz":
        return costs.BoundedLipschitz(float(_need(section, "diam", "structure")))
    if kind == "power":
        return costs.PowerStruct(float(_need(section, "alpha", "structure")))
    if kind == "inner_product":
        return costs.InnerProduct()
    if kind == "weighted_ip":
        return costs.WeightedIP(_need(section, "weights", "structure"))
    if kind == "bregman":
        return costs.BregmanStruct(section.get("psi", "squared_norm"))
    if kind == "strong_ip":
        return costs.StrongIP(parse_point(space, _need(section, "m", "structure")))
    if kind == "projection":
        m = parse_point(space, _need(section, "m", "structure"))
        return costs.ProjectionStructure(m, float(section.get("K", 2.0)))
    if kind == "product":
        factors = _need(section, "factors", "structure")
        spaces = getattr(space, "factors", [None] * len(factors))
        return costs.product_structure([build_structure(f, s) for f, s in zip(factors, spaces)])
    if kind == "min":
        return costs.min_structure(build_structure(_need(section, "base", "structure"), space), int(section.get("k", 2)))
    raise ConfigError(f"unknown structure kind {kind!r}")


def build_loss(section: dict | None, space=None):
    if section is None:
        return BASE
    kind = _kind(section, "loss")
    if kind == "base":
        return BASE
    if kind == "power":
        return Power(float(_need(section, "a", "loss")))
    if kind == "projection":
        return Projection(parse_point(space, _need(section, "m", "loss")))
    if kind == "sphere_projection":
        return SphereProjection(parse_point(space, _need(section, "m", "loss")))
    raise ConfigError(f"unknown loss kind {kind!r}")


def build_distribution(section: dict, space=None):
    kind = _kind(section, "distribution")
    if kind == "gaussian":
        mean = tuple(float(v) for v in _need(section, "mean", "distribution"))
        return GaussianVector(mean, tuple(float(v) for v in section.get("variances", [1.0] * len(mean))))
    if kind == "cauchy":
        return CauchyLine(float(section.get("location", 0.0)), float(section.get("scale", 1.0)))
    if kind == "tree_discrete":
        points = tuple(TreePoint(int(e), float(o)) for e, o in _need(section, "points", "distribution"))
        return TreeDiscrete(points, tuple(float(p) for p in _need(section, "probs", "distribution")))
    if kind == "plane_cloud":
        centers = tuple(tuple(float(x) for x in c) for c in _need(section, "centers", "distribution"))
        return PlaneCloud(centers, tuple(float(w) for w in _need(section, "weights", "distribution")), float(section.get("sigma", 1.0)))
    if kind == "point_mass":
        return PointMass(parse_point(space, _need(section, "point", "distribution")))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def build_experiment(data: dict) -> ExperimentConfig:
    for key in ("space", "cost", "experiment"):
        if key not in data:
            raise ConfigError(f"rate experiments need a {key!r} section")
    space = build_space(data["space"])
    cost = build_cost(data["cost"], space)
    exp = data["experiment"]
    dist = build_distribution(_need(exp, "distribution", "experiment"), space)
    known = exp.get("known_m")
    try:
        estimator = EstimatorConfig(**exp.get("estimator", {}))
        return ExperimentConfig(
            space=space,
            cost=cost,
            distribution=dist,
            n_grid=_need(exp, "n_grid", "experiment"),
            replications=int(exp.get("replications", 100)),
            seed=int(exp.get("seed", 0)),
            loss=build_loss(exp.get("loss"), space),
            estimator=estimator,
            known_m=None if known is None else parse_point(space, known),
            kappa=float(exp.get("kappa", 1.0)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def format_point(x) -> str:
    """Semicolon-joined coordinates, ``edge:offset`` for tree points, ``|``-joined tuples."""
    if x is None:
        return ""
    if isinstance(x, TreePoint):
        return f"{int(x.edge)}:{float(x.offset)!r}"
    if isinstance(x, tuple):
        return "|".join(format_point(v) for v in x)
    return ";".join(repr(float(v)) for v in np.ravel(x))
