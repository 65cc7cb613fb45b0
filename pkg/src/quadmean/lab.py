"""Randomized checks of quadruple inequalities and the power-inequality lemmas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .costs import (
    ProjectionStructure,
    QuadrupleStructure,
    power_constant,
    quadruple_terms,
    strong_quadruple_terms,
)
from .report import CHUNK, Tally, ViolationReport
from .spaces import BASE, MetricTree, Space, TreePoint

DEFAULT_TOL = 1e-9


def _chunks(trials: int):
    if trials <= 0:
        raise ValueError("trials must be positive")
    done = 0
    while done < trials:
        size = min(CHUNK, trials - done)
        yield done, size
        done += size


def sweep_structure(
    space: Space,
    structure: QuadrupleStructure,
    trials: int = 100_000,
    seed=0,
    tol: float = DEFAULT_TOL,
    box=None,
) -> ViolationReport:
    """Sample quadruples and count weak-inequality residuals above ``tol * (1 + |lhs|)``."""
    structure.check_space(space)
    rng = np.random.default_rng(seed)
    tally = Tally(f"{structure!r} on {space!r}")
    for done, size in _chunks(trials):
        y = structure.sample_data(space, rng, size, box)
        z = structure.sample_data(space, rng, size, box)
        q = structure.sample_descriptor(space, rng, size, box)
        p = structure.sample_descriptor(space, rng, size, box)
        lhs, rhs = quadruple_terms(structure, space, y, z, q, p)
        tally.add(
            lhs - rhs,
            tol * (1.0 + np.abs(lhs)),
            lambda i: {
                "trial": done + i,
                "y": structure.take_data(space, y, i),
                "z": structure.take_data(space, z, i),
                "q": space.take(q, i) if not isinstance(q, tuple) else tuple(s.take(c, i) for s, c in zip(space.factors, q)),
                "p": space.take(p, i) if not isinstance(p, tuple) else tuple(s.take(c, i) for s, c in zip(space.factors, p)),
            },
        )
    return tally.report


# ---------------------------------------------------------------- arithmetic form


@dataclass(frozen=True)
class ArithmeticQuadruple:
    a: float
    b: float
    c: float
    r: float
    s: float
    alpha: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) < 0:
            raise ValueError("a, b, c must be nonnegative")
        if not (-1 <= self.r <= 1 and -1 <= self.s <= 1):
            raise ValueError("r and s must lie in [-1, 1]")
        if not 0.5 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [1/2, 1]")


def arithmetic_terms(a, b, c, r, s, alpha):
    """Both sides of the arithmetic form of the power inequality (vectorized).

    The arguments play the role of ``d(y,q)``, ``d(q,p)``, ``d(z,q)`` and the
    cosines of the angles at ``q``.
    """
    ta = 2.0 * alpha
    lhs = (
        a**ta
        - c**ta
        - np.maximum(a * a - 2.0 * r * a * b + b * b, 0.0) ** alpha
        + np.maximum(c * c - 2.0 * s * c * b + b * b, 0.0) ** alpha
    )
    inner = np.maximum(r * a - s * c, np.abs(a - c))
    rhs = power_constant(alpha) * b * inner ** (ta - 1.0)
    return lhs, rhs


def arithmetic_form_check(aq: ArithmeticQuadruple) -> float:
    lhs, rhs = arithmetic_terms(aq.a, aq.b, aq.c, aq.r, aq.s, aq.alpha)
    return float(lhs - rhs)


def arithmetic_form_sweep(trials: int = 1_000_000, seed=0, tol: float = DEFAULT_TOL, high: float = 10.0) -> ViolationReport:
    rng = np.random.default_rng(seed)
    tally = Tally("arithmetic form")
    for done, size in _chunks(trials):
        a, b, c = (_scale_draw(rng, size, high) for _ in range(3))
        r, s = rng.uniform(-1, 1, size), rng.uniform(-1, 1, size)
        alpha = rng.uniform(0.5, 1.0, size)
        lhs, rhs = arithmetic_terms(a, b, c, r, s, alpha)
        tally.add(lhs - rhs, tol * (1 + np.abs(lhs)), _witness(done, a=a, b=b, c=c, r=r, s=s, alpha=alpha))
    return tally.report


def _scale_draw(rng, size, high=10.0):
    """Half uniform on [0, high], half log-uniform over twelve decades below ``high``."""
    uni = rng.uniform(0.0, high, size)
    logu = high * 10.0 ** rng.uniform(-12.0, 0.0, size)
    return np.where(rng.random(size) < 0.5, uni, logu)


def _witness(offset, **arrays):
    return lambda i: {"trial": offset + i, **{k: float(v[i]) for k, v in arrays.items()}}


# ---------------------------------------------------------------- counter-examples

# rows: d(y,q), d(y,p), d(z,q), d(z,p), d(y,z), d(q,p)
_CASES: dict[str, Callable[[float], tuple[float, ...]]] = {
    "a": lambda e: (1 - e, 1 - 3 * e, 1 - 2 * e, 1.0, 2 - 3 * e, 2 * e),
    "b": lambda e: (1.0, e, 1 - e, 2 * e, 2 * e, 1.0),
    "c": lambda e: (2 * e, e, 1.0, 1.0, 1.0, e),
}


def optimality_distances(case: str, epsilon: float) -> tuple[float, ...]:
    if case not in _CASES:
        raise ValueError(f"unknown case {case!r}; expected one of {sorted(_CASES)}")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return _CASES[case](epsilon)


def optimality_case(case: str, alpha: float, epsilon: float) -> float:
    """Quadruple ratio of the power cost at four collinear-type points.

    Case ``a`` tends to the power constant; ``b`` (alpha > 1) and ``c``
    (alpha < 1/2) blow up as epsilon shrinks.
    """
    yq, yp, zq, zp, yz, qp = optimality_distances(case, epsilon)
    valid = {"a": 0.5 <= alpha <= 1.0, "b": alpha > 1.0, "c": 0.0 < alpha < 0.5}[case]
    if not valid:
        raise ValueError(f"alpha={alpha} is outside the range of case {case}")
    ta = 2.0 * alpha
    num = yq**ta - yp**ta - zq**ta + zp**ta
    return num / (yz ** (ta - 1.0) * qp)


@dataclass(frozen=True)
class TripodCounterexample:
    required_K: float
    lhs: float
    descriptor: float


def tripod_strong_counterexample(r: float, epsilon: float, detail: bool = False):
    """Smallest ``K`` for which ``a = K d`` would satisfy the strong inequality on the tripod.

    The configuration puts y and p on pod 1 at ``epsilon``, z at the hub, q on
    pod 2 at ``r`` and the base point on pod 3 at ``r``, with loss ``d`` and
    exponent one. The left side is evaluated directly on the tree.
    """
    if not (r > 0 and 0 < epsilon <= r):
        raise ValueError("need r > 0 and 0 < epsilon <= r")
    tree = MetricTree.tripod(length=max(1.0, r))
    y = TreePoint(0, epsilon)
    z = TreePoint(0, 0.0)
    q = TreePoint(1, r)
    p = TreePoint(0, epsilon)
    m = TreePoint(2, r)
    structure = ProjectionStructure(m, K=1.0)
    lhs, rhs = strong_quadruple_terms(structure, tree, m, 1.0, BASE, y, z, q, p)
    lhs, dyz = float(lhs), float(tree.base_distance(y, z))
    b = float(structure.strong_descriptor(tree, m, q, p))
    closed = math.sqrt(2.0 * (r + epsilon) / epsilon)
    if detail:
        return TripodCounterexample(required_K=closed, lhs=lhs, descriptor=b)
    # the direct value lhs / (d(y,z) b) must agree with the closed form
    if not math.isclose(lhs / (dyz * b), closed, rel_tol=1e-8):
        raise ArithmeticError("direct evaluation disagrees with the closed form")
    return closed


# ---------------------------------------------------------------- weak implies strong


def weak_implies_strong_check(
    space: Space,
    structure: QuadrupleStructure,
    xi: float,
    m,
    trials: int = 100_000,
    seed=0,
    tol: float = DEFAULT_TOL,
    box=None,
) -> ViolationReport:
    """Check the normalized bound ``... <= 2**xi a(y,z) b(q,p)**(1-xi)``.

    Denominators are ``b(q,m)**xi`` and ``b(p,m)**xi``; draws with either
    equal to zero are rejected and not counted.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    structure.check_space(space)
    rng = np.random.default_rng(seed)
    tally = Tally(f"weak implies strong, {structure!r}, xi={xi:g}")
    c = structure.cost_value
    rejected = 0
    for done, size in _chunks(trials):
        y = structure.sample_data(space, rng, size, box)
        z = structure.sample_data(space, rng, size, box)
        q = structure.sample_descriptor(space, rng, size, box)
        p = structure.sample_descriptor(space, rng, size, box)
        bq = structure.descriptor(space, q, m)
        bp = structure.descriptor(space, p, m)
        keep = (bq > 0) & (bp > 0)
        rejected += int(size - keep.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            cym, czm = c(space, y, m), c(space, z, m)
            tq = (c(space, y, q) - cym - c(space, z, q) + czm) / bq**xi
            tp = (c(space, y, p) - cym - c(space, z, p) + czm) / bp**xi
        lhs = (tq - tp)[keep]
        rhs = (2.0**xi * structure.data_distance(space, y, z) * structure.descriptor(space, q, p) ** (1.0 - xi))[keep]
        idx = np.flatnonzero(keep)
        tally.add(
            lhs - rhs,
            tol * (1.0 + np.abs(lhs)),
            lambda i: {
                "trial": done + int(idx[i]),
                "y": structure.take_data(space, y, idx[i]),
                "z": structure.take_data(space, z, idx[i]),
                "q": space.take(q, idx[i]),
                "p": space.take(p, idx[i]),
            },
        )
    tally.report.extra["rejected"] = rejected
    return tally.report


# ---------------------------------------------------------------- lemma battery


@dataclass(frozen=True)
class Lemma:
    """Sampler, precondition and inequality pairs ``(lhs, rhs)`` claiming ``lhs <= rhs``."""

    draw: Callable[[np.random.Generator, int], dict]
    sides: Callable[..., list]
    accept: Callable[..., np.ndarray] | None = None


def _u(rng, n, lo, hi):
    return rng.uniform(lo, hi, n)


def _nonneg(rng, n):
    return _scale_draw(rng, n, 10.0)


def _tight_draw(rng, n):
    x, y = _nonneg(rng, n), _nonneg(rng, n)
    return {"x": np.maximum(x, y), "y": np.minimum(x, y), "a": _u(rng, n, 1, 2)}


def _tight_1(x, y, a):
    mid = (x + y) ** a - (x - y) ** a
    return [(2**a * x ** (a - 1) * y, mid), (mid, 2 * a * x ** (a - 1) * y)]


def _tight_2(x, y, a):
    bound = 2 * a * np.minimum(x * y ** (a - 1), x ** (a - 1) * y)
    return [((x + y) ** a - np.abs(x - y) ** a, bound)]


def _tight_3(x, y, a):
    mid = x**a - y**a
    return [((x + y) ** (a - 1) * (x - y), mid), (mid, a * (x - y) * ((x + y) / 2) ** (a - 1))]


def _merge_rhs(u, b, alpha):
    ta = 2 * alpha
    pos = u > 0
    safe = np.where(pos, u, 0.0)
    return np.where(pos, 2 ** (1 - ta) * ((safe + b) ** ta - np.abs(safe - b) ** ta), 0.0)


def _simple_draw(rng, n):
    sign = lambda: np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return {
        "a": sign() * _nonneg(rng, n),
        "c": sign() * _nonneg(rng, n),
        "b": _nonneg(rng, n),
        "alpha": _u(rng, n, 0.5, 1),
    }


def _simple(a, b, c, alpha):
    ta = 2 * alpha
    lhs = np.abs(a) ** ta - np.abs(c) ** ta - np.abs(a - b) ** ta + np.abs(c - b) ** ta
    return [(lhs, _merge_rhs(a - c, b, alpha))]


def _f1_lhs(a, b, c, r, s, alpha):
    return arithmetic_terms(a, b, c, r, s, alpha)[0]


def _rasc_draw(variant):
    def draw(rng, n):
        d = {
            "a": _nonneg(rng, n),
            "b": _nonneg(rng, n),
            "c": _nonneg(rng, n),
            "r": _u(rng, n, -1, 1),
            "s": _u(rng, n, -1, 1),
            "alpha": _u(rng, n, 0.5, 1),
        }
        if variant == 1:
            d["s"] = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        elif variant == 2:
            d["r"] = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return d

    return draw


def _rasc(a, b, c, r, s, alpha):
    return [(_f1_lhs(a, b, c, r, s, alpha), _merge_rhs(r * a - s * c, b, alpha))]


_RASC_ACCEPT = {
    1: lambda a, b, c, r, s, alpha: 2 * r * a >= b,
    2: lambda a, b, c, r, s, alpha: b >= 2 * s * c,
    3: lambda a, b, c, r, s, alpha: (2 * r * a >= b) & (b >= 2 * s * c),
}


def _asc_draw(rng, n):
    # draw b, then sc in [b/2, a - b] with a >= 3b/2
    b = _nonneg(rng, n)
    a = 1.5 * b + _nonneg(rng, n)
    sc = rng.uniform(0.5 * b, a - b)
    c = sc + _nonneg(rng, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(c > 0, sc / c, 0.0)
    return {"a": a, "b": b, "c": c, "s": np.clip(s, -1, 1), "alpha": _u(rng, n, 0.5, 1)}


def _asc(a, b, c, s, alpha):
    ta = 2 * alpha
    lhs = a**ta - c**ta - (a - b) ** ta + np.maximum(c * c - 2 * s * c * b + b * b, 0.0) ** alpha
    u = a - s * c
    rhs = 2 ** (1 - ta) * ((u + b) ** ta - np.maximum(u - b, 0.0) ** ta)
    return [(lhs, rhs)]


def _asc_accept(a, b, c, s, alpha):
    sc = s * c
    return (0.5 * b <= sc) & (sc <= a - b)


def _asc_proof_accept(a, b, c, s, alpha):
    # the main case analysis only reaches this lemma with s c <= 2a - c
    return _asc_accept(a, b, c, s, alpha) & (s * c <= 2 * a - c)


def _fraction_draw(rng, n):
    a, b, c = _nonneg(rng, n), _nonneg(rng, n), _nonneg(rng, n)
    r = _nonneg(rng, n)
    s = _nonneg(rng, n) + 1e-12
    t = _nonneg(rng, n) + 1e-12
    # t >= s exactly when b >= a: reorder so the pairing holds
    lo_ab, hi_ab = np.minimum(a, b), np.maximum(a, b)
    lo_st, hi_st = np.minimum(s, t), np.maximum(s, t)
    flip = rng.random(n) < 0.5
    a, b = np.where(flip, hi_ab, lo_ab), np.where(flip, lo_ab, hi_ab)
    s, t = np.where(flip, hi_st, lo_st), np.where(flip, lo_st, hi_st)
    A = rng.uniform(-1, 1, n) * r * a
    B = rng.uniform(-1, 1, n) * r * b
    return {"A": A, "B": B, "a": a, "b": b, "c": c, "r": r, "s": s, "t": t}


def _fraction(A, B, a, b, c, r, s, t):
    lhs = np.abs(A / s - B / t)
    rhs = r * (np.minimum(s, t) * c + np.abs(s - t) * np.minimum(a, b)) / (s * t)
    return [(lhs, rhs)]


def _fraction_accept(A, B, a, b, c, r, s, t):
    return np.abs(A - B) <= r * c


def _beta_draw(rng, n):
    a = _nonneg(rng, n) + 1e-9
    b = a + rng.random(n) * _nonneg(rng, n)
    c = _nonneg(rng, n) + 1e-9
    return {"a": a, "b": b, "c": c, "beta": _u(rng, n, 0, 1)}


def _beta(a, b, c, beta):
    lhs = (c * a**beta + (b**beta - a**beta) * a) / (a**beta * b**beta)
    return [(lhs, 2**beta * c ** (1 - beta))]


def _beta_accept(a, b, c, beta):
    return (a <= b) & (b <= a + c) & (c <= a + b)


def _binom_draw(rng, n):
    return {"x": _nonneg(rng, n), "y": _nonneg(rng, n), "alpha": _u(rng, n, 0.5, 1)}


def _binom(x, y, alpha):
    return [((x + y) ** (2 * alpha) - (x**alpha - y**alpha) ** 2, (4 * x * y) ** alpha)]


def _slogs_draw(rng, n):
    s = np.where(rng.random(n) < 0.5, rng.uniform(0, 0.5, n), 0.5 * 10.0 ** rng.uniform(-12, 0, n))
    return {"s": np.where(s > 0, s, 0.25)}


def _slogs(s):
    return [((1 - s) / s, np.log(s) / np.log1p(-s))]


def _abx_draw(rng, n):
    a, b = _nonneg(rng, n) + 1e-9, _nonneg(rng, n) + 1e-9
    return {"a": np.maximum(a, b), "b": np.minimum(a, b), "x": _u(rng, n, 1, 2)}


def _abx(a, b, x):
    s = a + b
    f = (a**x - b**x) / s**x
    fpp = s ** (-x) * (a**x * np.log(a / s) ** 2 - b**x * np.log(b / s) ** 2)
    return [((a - b) / s, f), (fpp, np.zeros_like(fpp))]


LEMMAS: dict[str, Lemma] = {
    "tight_power_1": Lemma(_tight_draw, _tight_1),
    "tight_power_2": Lemma(_tight_draw, _tight_2),
    "tight_power_3": Lemma(_tight_draw, _tight_3),
    "simple_merging": Lemma(_simple_draw, _simple),
    "rasc_merging_1": Lemma(_rasc_draw(1), _rasc, _RASC_ACCEPT[1]),
    "rasc_merging_2": Lemma(_rasc_draw(2), _rasc, _RASC_ACCEPT[2]),
    "rasc_merging_3": Lemma(_rasc_draw(3), _rasc, _RASC_ACCEPT[3]),
    "asc_merging": Lemma(_asc_draw, _asc, _asc_accept),
    "asc_merging_proof_domain": Lemma(_asc_draw, _asc, _asc_proof_accept),
    "fraction_bound": Lemma(_fraction_draw, _fraction, _fraction_accept),
    "beta_bound": Lemma(_beta_draw, _beta, _beta_accept),
    "alpha_binom": Lemma(_binom_draw, _binom),
    "slogs": Lemma(_slogs_draw, _slogs),
    "abxfrac": Lemma(_abx_draw, _abx),
}

MAX_ATTEMPTS = 100


def _draw_accepted(lemma: Lemma, rng, n):
    """Rejection sampling: at most MAX_ATTEMPTS rounds per accepted draw."""
    if lemma.accept is None:
        return lemma.draw(rng, n), 0
    pool: dict[str, list] = {}
    got = 0
    rounds = 0
    while got < n:
        if rounds >= MAX_ATTEMPTS:
            raise RuntimeError("precondition acceptance rate is too low for rejection sampling")
        d = lemma.draw(rng, n)
        mask = lemma.accept(**d)
        for k, v in d.items():
            pool.setdefault(k, []).append(v[mask])
        got += int(mask.sum())
        rounds += 1
    return {k: np.concatenate(v)[:n] for k, v in pool.items()}, rounds


def lemma_terms(lemma_id: str, **inputs) -> list[tuple[float, float]]:
    """Evaluate the ``(lhs, rhs)`` pairs of one lemma at explicit inputs."""
    lemma = _lookup(lemma_id)
    arrays = {k: np.asarray(v, dtype=float) for k, v in inputs.items()}
    return [(float(l), float(r)) for l, r in lemma.sides(**arrays)]


def _lookup(lemma_id):
    if lemma_id not in LEMMAS:
        raise KeyError(f"unknown lemma {lemma_id!r}; known: {sorted(LEMMAS)}")
    return LEMMAS[lemma_id]


def lemma_battery(lemma_id: str, trials: int = 100_000, seed=0, tol: float = DEFAULT_TOL) -> ViolationReport:
    """Draw inputs meeting the lemma's preconditions and count violations of each inequality."""
    lemma = _lookup(lemma_id)
    rng = np.random.default_rng(seed)
    tally = Tally(lemma_id)
    for done, size in _chunks(trials):
        inputs, _ = _draw_accepted(lemma, rng, size)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            pairs = lemma.sides(**inputs)
        raw = np.array([np.broadcast_to(l - r, (size,)) for l, r in pairs])
        allowed = np.array([np.broadcast_to(tol * (1 + np.abs(l)), (size,)) for l, r in pairs])
        # report the pair that comes closest to (or furthest past) its tolerance
        k = np.argmax(np.nan_to_num(raw - allowed, nan=np.inf), axis=0)
        cols = np.arange(size)
        tally.add(raw[k, cols], allowed[k, cols], _witness(done, **inputs))
    return tally.report


# ---------------------------------------------------------------- quadrilateral cosine


def quadrilateral_cosine(space: Space, y, z, q, p) -> float:
    d = space.base_distance
    y, z, q, p = (space.validate(v) for v in (y, z, q, p))
    dyz, dqp = d(y, z), d(q, p)
    if np.any(dyz == 0) or np.any(dqp == 0):
        raise ValueError("quadrilateral cosine needs y != z and q != p")
    value = _cosq(space, y, z, q, p)
    return float(value) if np.ndim(value) == 0 else value


def _cosq(space, y, z, q, p):
    d2 = space.squared_distance
    num = d2(y, q) - d2(y, p) - d2(z, q) + d2(z, p)
    return num / (-2.0 * space.base_distance(y, z) * space.base_distance(q, p))


def cosine_sweep(space: Space, trials: int = 100_000, seed=0, tol: float = DEFAULT_TOL, box=None) -> ViolationReport:
    """Largest quadrilateral cosine over random quadruples; residual is ``|cosq| - 1``."""
    rng = np.random.default_rng(seed)
    tally = Tally(f"quadrilateral cosine on {space!r}")
    worst = -np.inf
    for done, size in _chunks(trials):
        y, z, q, p = (space.sample(rng, size, box) for _ in range(4))
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = _cosq(space, y, z, q, p)
        cos = np.where(np.isfinite(cos), cos, 0.0)
        worst = max(worst, float(cos.max()))
        tally.add(np.abs(cos) - 1.0, tol, lambda i: {"trial": done + i})
    tally.report.extra["max_cosine"] = worst
    return tally.report


def power_constant_peak() -> tuple[float, float]:
    """Location and value of the maximum of ``8 a 2**(-2a)``: ``1/(2 ln 2)`` and ``4/(e ln 2)``."""
    a = 1.0 / (2.0 * math.log(2.0))
    return a, power_constant(a)


__all__ = [
    "ArithmeticQuadruple",
    "LEMMAS",
    "arithmetic_form_check",
    "arithmetic_form_sweep",
    "cosine_sweep",
    "lemma_battery",
    "lemma_terms",
    "optimality_case",
    "power_constant_peak",
    "quadrilateral_cosine",
    "sweep_structure",
    "tripod_strong_counterexample",
    "weak_implies_strong_check",
]
