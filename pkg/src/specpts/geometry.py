"""Manifolds, distances and pair enumeration for pointset configurations.

Two manifolds are supported: the unit sphere S^{d-1} in R^d with the chordal
metric, and a flat 2-D torus given by a matrix whose columns are the period
vectors, with the minimum-image metric.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-9
DISTINCT_TOL = 1e-14

# lexicographic order over (p, q); np.argmin keeps the first minimum, which
# gives the documented tie-break on the cut locus
_TRANSLATES = np.array(list(itertools.product((-1, 0, 1), repeat=2)), dtype=float)


@dataclass(frozen=True)
class Sphere:
    """Unit sphere S^{dim-1} embedded in R^dim."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"sphere ambient dimension must be >= 2, got {self.dim}")

    @property
    def ambient_dim(self) -> int:
        return self.dim

    def to_json(self) -> dict:
        return {"kind": "sphere", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class FlatTorus:
    """Flat 2-D torus R^2 / basis(Z^2); period vectors are the columns of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.shape != (2, 2):
            raise ValueError(f"torus basis must be 2x2, got shape {basis.shape}")
        if abs(np.linalg.det(basis)) == 0.0:
            raise ValueError("torus basis is singular")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "FlatTorus":
        return cls(np.diag([float(width), float(height)]))

    @property
    def ambient_dim(self) -> int:
        return 2

    @property
    def area(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map points into the fundamental cell basis @ [0, 1)^2."""
        frac = np.linalg.solve(self.basis, np.asarray(points, dtype=float).T)
        frac -= np.floor(frac)
        return (self.basis @ frac).T

    def to_json(self) -> dict:
        return {"kind": "torus", "basis": self.basis.tolist()}

    def __eq__(self, other):
        return isinstance(other, FlatTorus) and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash(self.basis.tobytes())


Manifold = Sphere | FlatTorus


def manifold_from_json(obj: dict) -> Manifold:
    kind = obj.get("kind")
    if kind == "sphere":
        return Sphere(int(obj["dim"]))
    if kind == "torus":
        return FlatTorus(np.array(obj["basis"], dtype=float))
    raise ValueError(f"unknown manifold kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PointConfig:
    """An ordered set of ``n`` points on a manifold.

    Points are rows of ``points``: unit vectors in R^d for a sphere, Cartesian
    coordinates for a torus. Distinctness is not enforced here; use
    :func:`min_pair_distance` to check it.
    """

    manifold: Manifold
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.manifold.ambient_dim:
            raise ValueError(
                f"points must have shape (n, {self.manifold.ambient_dim}), got {pts.shape}"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray) -> "PointConfig":
        return PointConfig(self.manifold, points)

    def to_json(self) -> dict:
        return {"manifold": self.manifold.to_json(), "points": self.points.tolist()}

    def dumps(self) -> str:
        # json writes floats with repr, which round-trips doubles exactly
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj: dict) -> "PointConfig":
        return cls(manifold_from_json(obj["manifold"]), np.array(obj["points"], dtype=float))

    @classmethod
    def loads(cls, text: str) -> "PointConfig":
        return cls.from_json(json.loads(text))


class EdgeIndex:
    """Lexicographic enumeration of the unordered pairs ``i < j`` of ``n`` vertices.

    Edge ``k = (i, j)`` has head ``j`` (larger index) and tail ``i``.
    """

    def __init__(self, n: int):
        if n < 2:
            raise ValueError(f"need at least two vertices, got {n}")
        self.n = n
        self.tail, self.head = np.triu_indices(n, k=1)
        self._lookup = np.full((n, n), -1, dtype=np.int64)
        k = np.arange(len(self.tail))
        self._lookup[self.tail, self.head] = k
        self._lookup[self.head, self.tail] = k

    def __len__(self) -> int:
        return len(self.tail)

    def pair(self, k: int) -> tuple[int, int]:
        return int(self.tail[k]), int(self.head[k])

    def index(self, i: int, j: int) -> int:
        if i == j:
            raise ValueError("no edge joins a vertex to itself")
        return int(self._lookup[i, j])


def sphere_distance_sq(x, y) -> float:
    """Chordal squared distance ``2 - 2<x, y>`` between unit vectors, clamped to [0, 4]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for v in (x, y):
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValueError(f"expected a unit vector, got norm {np.linalg.norm(v)!r}")
    return float(np.clip(2.0 - 2.0 * np.dot(x, y), 0.0, 4.0))


def torus_displacement(x, y, basis) -> tuple[float, np.ndarray]:
    """Minimum-image squared distance and displacement ``x - y*`` on a flat torus.

    ``y*`` ranges over the 9 translates ``y + basis @ (p, q)``, ``p, q in {-1, 0, 1}``.
    """
    basis = np.asarray(basis, dtype=float)
    cand = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) - _TRANSLATES @ basis.T
    r2 = np.einsum("ij,ij->i", cand, cand)
    m = int(np.argmin(r2))
    return float(r2[m]), cand[m]


def torus_distance_sq(x, y, basis) -> float:
    return torus_displacement(x, y, basis)[0]


def pair_geometry(config: PointConfig) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs displacements and squared distances.

    Returns ``(disp, r2)`` with ``disp[i, k] = x_i - x_k`` (minimum image on a
    torus) of shape (n, n, d) and ``r2[i, k]`` the squared manifold distance.
    """
    x = config.points
    disp = x[:, None, :] - x[None, :, :]
    if isinstance(config.manifold, Sphere):
        gram = x @ x.T
        r2 = np.clip(2.0 - 2.0 * gram, 0.0, 4.0)
        np.fill_diagonal(r2, 0.0)
        return disp, r2
    shifts = _TRANSLATES @ config.manifold.basis.T  # (9, 2)
    cand = disp[:, :, None, :] - shifts[None, None, :, :]
    cand_r2 = np.einsum("ijtk,ijtk->ijt", cand, cand)
    m = np.argmin(cand_r2, axis=2)
    disp = np.take_along_axis(cand, m[:, :, None, None], axis=2)[:, :, 0, :]
    r2 = np.take_along_axis(cand_r2, m[:, :, None], axis=2)[:, :, 0]
    return disp, r2


def all_pair_distances_sq(config: PointConfig) -> np.ndarray:
    """Squared distances of all pairs, ordered as :class:`EdgeIndex`."""
    _, r2 = pair_geometry(config)
    i, j = np.triu_indices(config.n, k=1)
    return r2[i, j]


def min_pair_distance(config: PointConfig) -> float:
    return float(np.sqrt(all_pair_distances_sq(config).min()))


def is_distinct(config: PointConfig, tol: float = DISTINCT_TOL) -> bool:
    return min_pair_distance(config) > tol


def random_config(manifold: Manifold, n: int, seed) -> PointConfig:
    """Independent uniform points: normalized Gaussians on a sphere, uniform cell coordinates on a torus."""
    if n < 2:
        raise ValueError(f"need n >= 2 points, got {n}")
    rng = np.random.default_rng(seed)
    if isinstance(manifold, Sphere):
        g = rng.standard_normal((n, manifold.dim))
        return PointConfig(manifold, g / np.linalg.norm(g, axis=1, keepdims=True))
    frac = rng.random((n, 2))
    return PointConfig(manifold, frac @ manifold.basis.T)


def sphere_tangent_project(x, g) -> np.ndarray:
    """Remove the radial component: ``g - <g, x> x``. Works row-wise on (n, d) arrays."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - np.sum(g * x, axis=-1, keepdims=True) * x


def sphere_retract(points: np.ndarray) -> np.ndarray:
    return points / np.linalg.norm(points, axis=-1, keepdims=True)


def project_gradient(config: PointConfig, grad: np.ndarray) -> np.ndarray:
    """Tangent projection on a sphere; identity on a torus."""
    if isinstance(config.manifold, Sphere):
        return sphere_tangent_project(config.points, grad)
    return np.asarray(grad, dtype=float)


def move(config: PointConfig, step: np.ndarray) -> PointConfig:
    """Add ``step`` to every point, then retract (sphere) or wrap (torus)."""
    pts = config.points + step
    if isinstance(config.manifold, Sphere):
        pts = sphere_retract(pts)
    else:
        pts = config.manifold.wrap(pts)
    return config.with_points(pts)


def unit_density_canvas(n: int) -> FlatTorus:
    """W x H rectangle with W*H = n and H = W*sqrt(3)/2."""
    width = np.sqrt(2.0 * n / np.sqrt(3.0))
    return FlatTorus.rectangle(width, width * np.sqrt(3.0) / 2.0)


def triangular_config(side: int, jitter: float = 0.0, seed=None) -> PointConfig:
    """``side**2`` points forming a triangular lattice on :func:`unit_density_canvas`.

    ``side`` must be even so alternate row offsets close up periodically.
    ``jitter`` adds Gaussian noise of that standard deviation to every coordinate.
    """
    if side < 2 or side % 2:
        raise ValueError(f"side must be an even integer >= 2, got {side}")
    torus = unit_density_canvas(side * side)
    width, height = torus.basis[0, 0], torus.basis[1, 1]
    j, i = np.divmod(np.arange(side * side), side)
    pts = np.column_stack([(i + 0.5 * (j % 2)) * width / side, j * height / side])
    if jitter:
        pts = pts + jitter * np.random.default_rng(seed).standard_normal(pts.shape)
    return PointConfig(torus, torus.wrap(pts))


def regular_simplex(n: int) -> PointConfig:
    """The ``n`` vertices of the regular simplex on S^{n-2} in R^{n-1}."""
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    e = np.eye(n) - 1.0 / n
    # orthonormal basis of the sum-zero hyperplane
    q, _ = np.linalg.qr(e[:, : n - 1])
    pts = e @ q
    return PointConfig(Sphere(n - 1), sphere_retract(pts))
