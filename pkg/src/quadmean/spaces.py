"""Metric spaces, points and distance kinds.

Vector points are plain numpy arrays, a single point has shape ``(dim,)`` and a
batch has shape ``(n, dim)``. Tree points are :class:`TreePoint` instances whose
fields may be scalars or equal-length arrays, so the same code path serves one
point and a batch of them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import IncompatibleSpace, InvalidPoint, NonUniqueProjection, PointAtBase
from .report import CHUNK, Tally, ViolationReport

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class TreePoint:
    """Location on a metric tree: arc length ``offset`` from the first endpoint of ``edge``."""

    edge: Any
    offset: Any

    def __len__(self) -> int:
        return np.size(self.edge)


class Space:
    """Common interface of all metric spaces."""

    def validate(self, x):
        return x

    def base_distance(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def squared_distance(self, x, y) -> np.ndarray:
        return self.base_distance(x, y) ** 2

    def sample(self, rng: np.random.Generator, size: int, box=None):
        raise NotImplementedError

    def take(self, batch, i: int):
        return batch[i]

    def to_dict(self) -> dict:
        raise NotImplementedError


class Euclidean(Space):
    """Real coordinate space with the Euclidean norm."""

    def __init__(self, dim: int, box: tuple[float, float] = (-1.0, 1.0)):
        if int(dim) < 1:
            raise ValueError("dim must be at least 1")
        self.dim = int(dim)
        self.box = (float(box[0]), float(box[1]))

    def __repr__(self) -> str:
        return f"Euclidean(dim={self.dim})"

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise InvalidPoint(f"expected points of dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidPoint("coordinates must be finite")
        return x

    def base_distance(self, x, y):
        return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)

    def squared_distance(self, x, y):
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.sum(diff * diff, axis=-1)

    def sample(self, rng, size, box=None):
        lo, hi = box if box is not None else self.box
        return rng.uniform(lo, hi, size=(size, self.dim))

    def midpoint(self, x, y):
        return 0.5 * (np.asarray(x, dtype=float) + np.asarray(y, dtype=float))

    def to_dict(self):
        return {"kind": "euclidean", "dim": self.dim}


class WeightedSequence(Euclidean):
    """Finite truncation of a weighted sequence space; the metric is Euclidean."""

    def __init__(self, weights: Sequence[float], box=(-1.0, 1.0)):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size < 1:
            raise ValueError("weights must be a nonempty 1-D sequence")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be strictly positive and finite")
        super().__init__(weights.size, box)
        self.weights = weights

    def __repr__(self) -> str:
        return f"WeightedSequence(weights={self.weights.tolist()})"

    def to_dict(self):
        return {"kind": "weighted_sequence", "weights": self.weights.tolist()}


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("polygon needs at least three vertices")


class PlaneWithHole(Space):
    """The plane with a bounded open region removed, carrying the Euclidean metric."""

    dim = 2

    def __init__(self, hole: Disc | Polygon, box: tuple[float, float] = (-3.0, 3.0)):
        self.hole = hole
        self.box = (float(box[0]), float(box[1]))
        if isinstance(hole, Polygon):
            self._poly = np.asarray(hole.vertices, dtype=float)

    def __repr__(self) -> str:
        return f"PlaneWithHole({self.hole})"

    def in_hole(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if isinstance(self.hole, Disc):
            c = np.asarray(self.hole.center, dtype=float)
            return np.linalg.norm(x - c, axis=-1) < self.hole.radius
        inside = _point_in_polygon(x, self._poly)
        return inside & (_polygon_boundary_distance(x, self._poly) > 1e-12)

    def validate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (2,) or not np.all(np.isfinite(x)):
            raise InvalidPoint("expected finite planar points")
        if np.any(self.in_hole(x)):
            raise InvalidPoint("point lies inside the excluded region")
        return x

    base_distance = Euclidean.base_distance
    squared_distance = Euclidean.squared_distance
    midpoint = Euclidean.midpoint

    def sample(self, rng, size, box=None):
        lo, hi = box if box is not None else self.box
        out = np.empty((0, 2))
        while out.shape[0] < size:
            draw = rng.uniform(lo, hi, size=(2 * size, 2))
            out = np.vstack([out, draw[~self.in_hole(draw)]])
        return out[:size]

    def project(self, raw) -> np.ndarray:
        """Closest point of the space to ``raw``; raises NonUniqueProjection on ties."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (2,) or not np.all(np.isfinite(raw)):
            raise InvalidPoint("raw must be a finite planar point")
        if not self.in_hole(raw):
            return raw.copy()
        if isinstance(self.hole, Disc):
            c = np.asarray(self.hole.center, dtype=float)
            v = raw - c
            norm = np.linalg.norm(v)
            if norm <= TIE_RTOL * (1.0 + self.hole.radius):
                # every boundary point ties; report the one in the +x direction
                raise NonUniqueProjection(raw, [c + np.array([self.hole.radius, 0.0])])
            return c + self.hole.radius * v / norm
        cands = _segment_closest(raw, self._poly)
        dist = np.linalg.norm(cands - raw, axis=1)
        best = int(np.argmin(dist))
        scale = TIE_RTOL * (1.0 + dist[best])
        tied = np.abs(dist - dist[best]) < scale
        far = np.linalg.norm(cands - cands[best], axis=1) > scale
        if np.any(tied & far):
            raise NonUniqueProjection(raw, list(cands[tied]))
        return cands[best]

    def to_dict(self):
        if isinstance(self.hole, Disc):
            hole = {"kind": "disc", "center": list(self.hole.center), "radius": self.hole.radius}
        else:
            hole = {"kind": "polygon", "vertices": [list(v) for v in self.hole.vertices]}
        return {"kind": "plane_with_hole", "hole": hole}


def _point_in_polygon(x, poly):
    pts = np.atleast_2d(x)
    px, py = pts[:, 0:1], pts[:, 1:2]
    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    crosses = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    inside = ((crosses & (px < xint)).sum(axis=1) % 2) == 1
    return inside.reshape(np.shape(x)[:-1])


def _segment_closest(x, poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", x - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return a + t[:, None] * ab


def _polygon_boundary_distance(x, poly):
    pts = np.atleast_2d(x)
    out = np.array([np.min(np.linalg.norm(_segment_closest(p, poly) - p, axis=1)) for p in pts])
    return out.reshape(np.shape(x)[:-1])


class MetricTree(Space):
    """Finite metric tree given by weighted edges ``(u, v, length)`` on vertices ``0..V-1``.

    A point on edge ``e`` at ``offset`` lies that far from ``u``. Vertices are
    canonically represented through their lowest-numbered incident edge.
    """

    def __init__(self, edges: Sequence[tuple[int, int, float]]):
        edges = [(int(u), int(v), float(w)) for u, v, w in edges]
        if not edges:
            raise ValueError("a metric tree needs at least one edge")
        n_vertices = max(max(u, v) for u, v, _ in edges) + 1
        if any(w <= 0 or not np.isfinite(w) for _, _, w in edges):
            raise ValueError("edge lengths must be positive and finite")
        if any(u == v for u, v, _ in edges):
            raise ValueError("self loops are not allowed")
        if len(edges) != n_vertices - 1:
            raise ValueError("a tree on V vertices has exactly V-1 edges")
        self.edges = edges
        self.n_vertices = n_vertices
        self.tails = np.array([u for u, _, _ in edges])
        self.heads = np.array([v for _, v, _ in edges])
        self.lengths = np.array([w for _, _, w in edges])
        self._adj: list[list[tuple[int, int]]] = [[] for _ in range(n_vertices)]
        for k, (u, v, _) in enumerate(edges):
            self._adj[u].append((v, k))
            self._adj[v].append((u, k))
        self.vdist = np.full((n_vertices, n_vertices), np.inf)
        self._parent = np.full((n_vertices, n_vertices), -1)
        self._parent_edge = np.full((n_vertices, n_vertices), -1)
        for root in range(n_vertices):
            self._bfs(root)
        if not np.all(np.isfinite(self.vdist)):
            raise ValueError("tree is not connected")
        self._vertex_edge = [min(k for _, k in self._adj[v]) for v in range(n_vertices)]

    def _bfs(self, root):
        self.vdist[root, root] = 0.0
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for b, k in self._adj[a]:
                if np.isinf(self.vdist[root, b]):
                    self.vdist[root, b] = self.vdist[root, a] + self.lengths[k]
                    self._parent[root, b] = a
                    self._parent_edge[root, b] = k
                    queue.append(b)

    @classmethod
    def tripod(cls, length: float = 1.0) -> "MetricTree":
        """Three edges of equal length meeting at hub vertex 0; pod ``k`` is edge ``k - 1``."""
        return cls([(0, 1, length), (0, 2, length), (0, 3, length)])

    @classmethod
    def random(cls, n_edges: int, seed=None, length_range=(0.5, 2.0)) -> "MetricTree":
        rng = np.random.default_rng(seed)
        edges = []
        for v in range(1, n_edges + 1):
            edges.append((int(rng.integers(0, v)), v, float(rng.uniform(*length_range))))
        return cls(edges)

    def __repr__(self) -> str:
        return f"MetricTree(edges={self.edges})"

    def validate(self, x):
        if not isinstance(x, TreePoint):
            raise InvalidPoint("tree points must be TreePoint instances")
        e = np.asarray(x.edge)
        o = np.asarray(x.offset, dtype=float)
        if not np.issubdtype(e.dtype, np.integer) or np.any(e < 0) or np.any(e >= len(self.edges)):
            raise InvalidPoint(f"unknown edge id {x.edge}")
        if not np.all(np.isfinite(o)):
            raise InvalidPoint("offset must be finite")
        slack = 1e-12 * (1.0 + self.lengths[e])
        if np.any(o < -slack) or np.any(o > self.lengths[e] + slack):
            raise InvalidPoint("offset outside the edge")
        return TreePoint(e if e.ndim else int(e), np.clip(o, 0.0, self.lengths[e]) if o.ndim else float(min(max(o, 0.0), self.lengths[e])))

    def vertex_point(self, v: int) -> TreePoint:
        k = self._vertex_edge[v]
        return TreePoint(k, 0.0 if self.tails[k] == v else float(self.lengths[k]))

    def canonical(self, x: TreePoint) -> TreePoint:
        e, o = int(x.edge), float(x.offset)
        if o <= 0.0:
            return self.vertex_point(int(self.tails[e]))
        if o >= self.lengths[e]:
            return self.vertex_point(int(self.heads[e]))
        return TreePoint(e, o)

    def same_point(self, x: TreePoint, y: TreePoint) -> bool:
        return self.canonical(x) == self.canonical(y)

    def base_distance(self, x, y):
        e1, o1 = np.asarray(x.edge), np.asarray(x.offset, dtype=float)
        e2, o2 = np.asarray(y.edge), np.asarray(y.offset, dtype=float)
        L1, L2 = self.lengths[e1], self.lengths[e2]
        u1, v1 = self.tails[e1], self.heads[e1]
        u2, v2 = self.tails[e2], self.heads[e2]
        D = self.vdist
        through = np.minimum(
            np.minimum(o1 + D[u1, u2] + o2, o1 + D[u1, v2] + (L2 - o2)),
            np.minimum((L1 - o1) + D[v1, u2] + o2, (L1 - o1) + D[v1, v2] + (L2 - o2)),
        )
        return np.where(e1 == e2, np.abs(o1 - o2), through)

    def sample(self, rng, size, box=None):
        e = rng.choice(len(self.edges), size=size, p=self.lengths / self.lengths.sum())
        return TreePoint(e, rng.uniform(0.0, 1.0, size=size) * self.lengths[e])

    def take(self, batch, i):
        return TreePoint(int(np.asarray(batch.edge)[i]), float(np.asarray(batch.offset)[i]))

    def _segments(self, x: TreePoint, y: TreePoint):
        """Edge pieces ``(edge, start, end)`` tracing the geodesic from x to y."""
        ex, ox, ey, oy = int(x.edge), float(x.offset), int(y.edge), float(y.offset)
        if ex == ey:
            return [(ex, ox, oy)]
        best = None
        for a_end, a_cost in ((0, ox), (1, self.lengths[ex] - ox)):
            a = self.tails[ex] if a_end == 0 else self.heads[ex]
            for b_end, b_cost in ((0, oy), (1, self.lengths[ey] - oy)):
                b = self.tails[ey] if b_end == 0 else self.heads[ey]
                total = a_cost + self.vdist[a, b] + b_cost
                if best is None or total < best[0]:
                    best = (total, a_end, a, b_end, b)
        _, a_end, a, b_end, b = best
        segs = [(ex, ox, 0.0 if a_end == 0 else float(self.lengths[ex]))]
        # walk from a to b using parents of the tree rooted at b
        w = a
        while w != b:
            nxt, k = self._parent[b, w], self._parent_edge[b, w]
            start = 0.0 if self.tails[k] == w else float(self.lengths[k])
            segs.append((k, start, float(self.lengths[k]) - start))
            w = nxt
        segs.append((ey, 0.0 if b_end == 0 else float(self.lengths[ey]), oy))
        return segs

    def geodesic_point(self, x: TreePoint, y: TreePoint, t: float) -> TreePoint:
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        x, y = self.validate(x), self.validate(y)
        segs = self._segments(x, y)
        remaining = t * sum(abs(b - a) for _, a, b in segs)
        for k, a, b in segs:
            piece = abs(b - a)
            if remaining <= piece:
                return self.canonical(TreePoint(k, a + np.sign(b - a) * remaining))
            remaining -= piece
        k, _, b = segs[-1]
        return self.canonical(TreePoint(k, b))

    def midpoint(self, x, y):
        return self.geodesic_point(x, y, 0.5)

    def to_dict(self):
        return {"kind": "tree", "edges": [[u, v, w] for u, v, w in self.edges]}


class ProductSpace(Space):
    """Cartesian product with the l2 combination of factor metrics; points are tuples."""

    def __init__(self, factors: Sequence[Space]):
        if not factors:
            raise ValueError("product needs at least one factor")
        self.factors = list(factors)

    def __repr__(self) -> str:
        return f"ProductSpace({self.factors})"

    def validate(self, x):
        if len(x) != len(self.factors):
            raise InvalidPoint("wrong number of product components")
        return tuple(f.validate(c) for f, c in zip(self.factors, x))

    def base_distance(self, x, y):
        return np.sqrt(sum(f.base_distance(a, b) ** 2 for f, a, b in zip(self.factors, x, y)))

    def sample(self, rng, size, box=None):
        return tuple(f.sample(rng, size, box) for f in self.factors)

    def take(self, batch, i):
        return tuple(f.take(c, i) for f, c in zip(self.factors, batch))

    def to_dict(self):
        return {"kind": "product", "factors": [f.to_dict() for f in self.factors]}


def is_vector_space(space: Space) -> bool:
    return isinstance(space, (Euclidean, PlaneWithHole))


# ---------------------------------------------------------------- distance kinds


class DistanceKind:
    claims_triangle = True

    def __call__(self, space: Space, x, y) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Base(DistanceKind):
    def __call__(self, space, x, y):
        return space.base_distance(x, y)


@dataclass(frozen=True)
class Power(DistanceKind):
    """The snowflake metric ``d**a``."""

    a: float

    def __post_init__(self):
        if not 0.0 < self.a <= 1.0:
            raise ValueError("power exponent must lie in (0, 1]")

    def __call__(self, space, x, y):
        return space.base_distance(x, y) ** self.a


@dataclass(frozen=True)
class Projection(DistanceKind):
    """``sqrt((d(q,p)^2 - (d(q,m) - d(p,m))^2) / (d(q,m) d(p,m)))`` around a base point ``m``."""

    m: Any
    claims_triangle = False

    def __call__(self, space, q, p):
        dqp = space.base_distance(q, p)
        dqm = space.base_distance(q, self.m)
        dpm = space.base_distance(p, self.m)
        if np.any(dqm == 0) or np.any(dpm == 0):
            raise PointAtBase("projection distance is undefined at the base point")
        num = np.maximum(dqp**2 - (dqm - dpm) ** 2, 0.0)
        return np.sqrt(num / (dqm * dpm))


@dataclass(frozen=True)
class SphereProjection(DistanceKind):
    """Distance between the unit-sphere images of ``q - m`` and ``p - m``."""

    m: Any

    def __call__(self, space, q, p):
        if not is_vector_space(space):
            raise IncompatibleSpace("sphere projection needs a vector space")
        m = np.asarray(self.m, dtype=float)
        u = np.asarray(q, dtype=float) - m
        v = np.asarray(p, dtype=float) - m
        nu = np.linalg.norm(u, axis=-1, keepdims=True)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(nu == 0) or np.any(nv == 0):
            raise PointAtBase("sphere projection is undefined at the base point")
        return np.linalg.norm(u / nu - v / nv, axis=-1)


@dataclass(frozen=True)
class WeightedNorm(DistanceKind):
    """``sqrt(sum s_k^2 (x_k - y_k)^2)``, or with ``1/s_k`` when ``inverse`` is set."""

    weights: tuple[float, ...]
    inverse: bool = False

    def __call__(self, space, x, y):
        if not is_vector_space(space):
            raise IncompatibleSpace("weighted norm needs a vector space")
        s = np.asarray(self.weights, dtype=float)
        if self.inverse:
            s = 1.0 / s
        return np.linalg.norm(s * (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)), axis=-1)


BASE = Base()


def distance(space: Space, x, y, kind: DistanceKind = BASE):
    """Validated distance between two points (or batches) under ``kind``."""
    x, y = space.validate(x), space.validate(y)
    d = kind(space, x, y)
    return float(d) if np.ndim(d) == 0 else d


def tree_geodesic_point(space: MetricTree, x: TreePoint, y: TreePoint, t: float) -> TreePoint:
    if not isinstance(space, MetricTree):
        raise IncompatibleSpace("geodesic points are implemented for metric trees")
    return space.geodesic_point(x, y, t)


def project_to_space(space: PlaneWithHole, raw) -> np.ndarray:
    if not isinstance(space, PlaneWithHole):
        raise IncompatibleSpace("projection is defined for planes with a hole")
    return space.project(raw)


def npc_inequality_check(space: Space, y1, y2, q) -> float:
    """``d(m,q)^2 - (d(y1,q)^2/2 + d(y2,q)^2/2 - d(y1,y2)^2/4)`` with m the midpoint of y1, y2."""
    if not hasattr(space, "midpoint") or isinstance(space, PlaneWithHole):
        raise IncompatibleSpace(f"midpoints are not available in {space!r}")
    y1, y2, q = space.validate(y1), space.validate(y2), space.validate(q)
    m = space.midpoint(y1, y2)
    d = space.base_distance
    return float(d(m, q) ** 2 - (0.5 * d(y1, q) ** 2 + 0.5 * d(y2, q) ** 2 - 0.25 * d(y1, y2) ** 2))


def _sample_off_base(space, rng, size, m, box):
    """Draw points avoiding the base point ``m`` (needed by the projection kinds)."""
    pts = space.sample(rng, size, box)
    dm = space.base_distance(pts, m)
    if np.all(dm > 0):
        return pts
    keep = np.flatnonzero(dm > 0)
    idx = np.concatenate([keep, np.resize(keep, size - keep.size)])
    return _index(space, pts, idx)


def _index(space, batch, idx):
    if isinstance(batch, TreePoint):
        return TreePoint(np.asarray(batch.edge)[idx], np.asarray(batch.offset)[idx])
    if isinstance(batch, tuple):
        return tuple(_index(f, c, idx) for f, c in zip(space.factors, batch))
    return batch[idx]


def metric_axiom_sweep(
    space: Space,
    kind: DistanceKind = BASE,
    trials: int = 10_000,
    seed=0,
    tol: float = 1e-9,
    check_triangle: bool | None = None,
    box=None,
) -> ViolationReport:
    """Check symmetry, nonnegativity, zero diagonal and optionally the triangle inequality.

    The residual of one trial is the largest axiom defect over the sampled
    triple. Slack is ``tol * (1 + scale)`` with ``scale`` the largest distance
    involved.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if check_triangle is None:
        check_triangle = kind.claims_triangle
    rng = np.random.default_rng(seed)
    base_point = getattr(kind, "m", None)
    tally = Tally(f"{type(kind).__name__} on {space!r}")
    done = 0
    while done < trials:
        size = min(CHUNK, trials - done)
        if base_point is None:
            x, y, z = (space.sample(rng, size, box) for _ in range(3))
        else:
            x, y, z = (_sample_off_base(space, rng, size, base_point, box) for _ in range(3))
        dxy, dyx = kind(space, x, y), kind(space, y, x)
        dyz, dxz = kind(space, y, z), kind(space, x, z)
        dxx = kind(space, x, x)
        scale = np.maximum.reduce([dxy, dyz, dxz])
        parts = [np.abs(dxy - dyx), -dxy, -dyz, -dxz, np.abs(dxx)]
        if check_triangle:
            parts.append(dxz - dxy - dyz)
        residual = np.maximum.reduce(parts)
        tally.add(
            residual,
            tol * (1.0 + scale),
            lambda i: {
                "trial": done + i,
                "x": space.take(x, i),
                "y": space.take(y, i),
                "z": space.take(z, i),
            },
        )
        done += size
    return tally.report
