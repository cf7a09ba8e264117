"""Weight functions and assembly of the distance-weighted graph.

A weight function ``f`` acts on *squared* distances. The graph on a
configuration has adjacency ``W_ij = f(d^2(x_i, x_j))`` for ``i != j``,
degrees ``d_i = sum_j W_ij`` and Laplacian ``L = diag(d) - W``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import EdgeIndex, PointConfig, all_pair_distances_sq, pair_geometry

FAMILIES = ("exp", "oneminusexp", "invpower", "neglog")
_SINGULAR = {"invpower", "neglog"}


class ZeroDistance(ValueError):
    """A kernel singular at zero was evaluated on a coincident pair."""


@dataclass(frozen=True)
class WeightFunction:
    """Radial kernel acting on squared distance ``r``.

    Families: ``exp`` ``e^{-alpha r}``, ``oneminusexp`` ``1 - e^{-alpha r}``,
    ``invpower`` ``r^{-s}`` and ``neglog`` ``-log r``.
    """

    family: str
    param: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}")
        if self.family == "neglog":
            object.__setattr__(self, "param", None)
            return
        if self.param is None or not self.param > 0:
            raise ValueError(f"{self.family} needs a positive parameter, got {self.param!r}")
        object.__setattr__(self, "param", float(self.param))

    @classmethod
    def exp(cls, alpha: float) -> "WeightFunction":
        return cls("exp", alpha)

    @classmethod
    def one_minus_exp(cls, alpha: float) -> "WeightFunction":
        return cls("oneminusexp", alpha)

    @classmethod
    def inverse_power(cls, s: float) -> "WeightFunction":
        return cls("invpower", s)

    @classmethod
    def neg_log(cls) -> "WeightFunction":
        return cls("neglog")

    @property
    def singular(self) -> bool:
        return self.family in _SINGULAR

    @property
    def nonnegative(self) -> bool:
        return self.family != "neglog"

    @property
    def decreasing(self) -> bool:
        return self.family != "oneminusexp"

    @property
    def increasing(self) -> bool:
        return self.family == "oneminusexp"

    @property
    def convex(self) -> bool:
        return self.family != "oneminusexp"

    @property
    def concave(self) -> bool:
        return self.family == "oneminusexp"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        p = self.param
        if self.family == "exp":
            return np.exp(-p * r)
        if self.family == "oneminusexp":
            return -np.expm1(-p * r)
        if self.family == "invpower":
            return r ** (-p)
        return -np.log(r)

    def deriv(self, r):
        """Derivative ``f'(r)`` with respect to the squared distance."""
        r = np.asarray(r, dtype=float)
        p = self.param
        if self.family == "exp":
            return -p * np.exp(-p * r)
        if self.family == "oneminusexp":
            return p * np.exp(-p * r)
        if self.family == "invpower":
            return -p * r ** (-p - 1.0)
        return -1.0 / r

    def to_json(self) -> dict:
        key = {"exp": "alpha", "oneminusexp": "alpha", "invpower": "s"}.get(self.family)
        out = {"family": self.family}
        if key:
            out[key] = self.param
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "WeightFunction":
        family = obj.get("family")
        allowed = {"exp": {"alpha"}, "oneminusexp": {"alpha"}, "invpower": {"s"}, "neglog": set()}
        if family not in allowed:
            raise ValueError(f"unknown weight family {family!r}")
        extra = set(obj) - {"family"} - allowed[family]
        if extra:
            raise ValueError(f"unexpected keys for {family}: {sorted(extra)}")
        if family == "neglog":
            return cls.neg_log()
        (key,) = allowed[family]
        if key not in obj:
            raise ValueError(f"{family} requires {key!r}")
        return cls(family, obj[key])

    @classmethod
    def parse(cls, text: str) -> "WeightFunction":
        """Parse the short CLI form, e.g. ``exp:2``, ``oneminusexp:2``, ``invpower:0.5``, ``neglog``."""
        family, _, arg = text.partition(":")
        family = family.strip().lower()
        if family == "neglog":
            if arg:
                raise ValueError("neglog takes no parameter")
            return cls.neg_log()
        if not arg:
            raise ValueError(f"{family} needs a parameter, e.g. {family}:2")
        return cls(family, float(arg))

    def __str__(self) -> str:
        return self.family if self.param is None else f"{self.family}:{self.param:g}"


def _apply(f: WeightFunction, r2: np.ndarray) -> np.ndarray:
    if f.singular and np.any(r2 <= 0.0):
        raise ZeroDistance(f"{f.family} kernel is singular at zero distance")
    return f(r2)


def weight_vector(config: PointConfig, f: WeightFunction) -> np.ndarray:
    """Edge weights ``w_k = f(d^2(pair k))`` in :class:`~specpts.geometry.EdgeIndex` order."""
    return _apply(f, all_pair_distances_sq(config))


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    weights: np.ndarray
    adjacency: np.ndarray
    degrees: np.ndarray
    laplacian: np.ndarray

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


def graph_from_weights(n: int, w: np.ndarray) -> WeightedGraph:
    w = np.asarray(w, dtype=float)
    edges = EdgeIndex(n)
    if w.shape != (len(edges),):
        raise ValueError(f"expected {len(edges)} weights, got shape {w.shape}")
    adj = np.zeros((n, n))
    adj[edges.tail, edges.head] = w
    adj[edges.head, edges.tail] = w
    return _graph(w, adj)


def _graph(w: np.ndarray, adj: np.ndarray) -> WeightedGraph:
    deg = adj.sum(axis=1)
    lap = np.diag(deg) - adj
    for a in (w, adj, deg, lap):
        a.setflags(write=False)
    return WeightedGraph(w, adj, deg, lap)


def adjacency_from_r2(r2: np.ndarray, f: WeightFunction) -> np.ndarray:
    n = r2.shape[0]
    off = ~np.eye(n, dtype=bool)
    adj = np.zeros_like(r2)
    adj[off] = _apply(f, r2[off])
    return adj


def assemble(config: PointConfig, f: WeightFunction) -> WeightedGraph:
    """Weighted graph of a configuration: weights, ``W``, degrees and ``L``."""
    _, r2 = pair_geometry(config)
    adj = adjacency_from_r2(r2, f)
    i, j = np.triu_indices(config.n, k=1)
    return _graph(adj[i, j].copy(), adj)


@lru_cache(maxsize=32)
def _incidence(n: int) -> np.ndarray:
    edges = EdgeIndex(n)
    k = np.arange(len(edges))
    b = np.zeros((len(edges), n))
    b[k, edges.head] = 1.0
    b[k, edges.tail] = -1.0
    b.setflags(write=False)
    return b


def incidence_matrix(n: int) -> np.ndarray:
    """Arc-vertex incidence matrix of the complete graph: +1 at head, -1 at tail.

    Satisfies ``B.T @ diag(w) @ B == L(w)``.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return _incidence(n)
