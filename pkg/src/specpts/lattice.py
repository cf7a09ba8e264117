"""Two-dimensional Bravais lattices: dispersion relation, density of states,
spectral moments, finite torus graphs and sweeps over the fundamental domain.

Unit-volume lattices up to isometry are parameterized by ``(a, b)`` in
``U = {b > 0, 0 <= a <= 1/2, a^2 + b^2 >= 1}`` with basis
``[[1/sqrt(b), a/sqrt(b)], [0, sqrt(b)]]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import FlatTorus, PointConfig
from .graphkernel import WeightFunction, WeightedGraph, assemble
from .spectral import InvariantId, invariant

TWO_PI = 2.0 * math.pi
TAIL_TOL = 1e-14
MAX_RADIUS = 60.0


class CutoffError(ValueError):
    """The lattice-sum cutoff cannot meet the requested tail tolerance."""


@dataclass(frozen=True)
class LatticeParams:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"lattice parameter b must be positive, got {self.b}")

    @property
    def in_domain(self) -> bool:
        tol = 1e-12
        return (0.0 <= self.a <= 0.5 + tol) and (self.a ** 2 + self.b ** 2 >= 1.0 - tol)

    @property
    def basis(self) -> np.ndarray:
        return basis_from_params(self.a, self.b, strict=False)


SQUARE = LatticeParams(0.0, 1.0)
TRIANGULAR = LatticeParams(0.5, math.sqrt(3.0) / 2.0)


def basis_from_params(a: float, b: float, strict: bool = True) -> np.ndarray:
    """Unit-determinant basis (columns) of the lattice with parameters ``(a, b)``.

    With ``strict`` the parameters must lie in the fundamental domain.
    """
    if not b > 0:
        raise ValueError(f"lattice parameter b must be positive, got {b}")
    if strict and not LatticeParams(a, b).in_domain:
        raise ValueError(f"({a}, {b}) lies outside the fundamental domain")
    rb = math.sqrt(b)
    return np.array([[1.0 / rb, a / rb], [0.0, rb]])


def _as_basis(lattice) -> np.ndarray:
    if isinstance(lattice, LatticeParams):
        return lattice.basis
    return np.asarray(lattice, dtype=float)


def dual_basis(lattice) -> np.ndarray:
    """Reciprocal basis ``2 pi B^{-T}``."""
    return TWO_PI * np.linalg.inv(_as_basis(lattice)).T


def brillouin_area(lattice) -> float:
    return TWO_PI ** 2 / abs(np.linalg.det(_as_basis(lattice)))


@dataclass(frozen=True, eq=False)
class DualCell:
    """Reciprocal fundamental parallelogram spanned by the columns of ``basis``."""

    basis: np.ndarray
    area: float

    @classmethod
    def of(cls, lattice) -> "DualCell":
        return cls(dual_basis(lattice), brillouin_area(lattice))

    def grid(self, m: int) -> np.ndarray:
        """``m x m`` uniform samples ``basis @ (k / m)``, shape (m*m, 2)."""
        k = np.arange(m) / m
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        return np.column_stack([k1.ravel(), k2.ravel()]) @ self.basis.T


def _tail_bound(f: WeightFunction, radius: float, density: float) -> float:
    # crude count: at most 8 (m + 1) points per unit-density shell [m, m + 1)
    total = 0.0
    m = radius
    while m < radius + 1e4:
        term = 8.0 * (m + 1.0) * density * float(f(m * m))
        total += term
        if term < 1e-30:
            break
        m += 1.0
    return total


def auto_cutoff(f: WeightFunction, basis: np.ndarray, tol: float = TAIL_TOL) -> float:
    """Smallest radius (on a 0.25 grid) whose lattice-sum tail is below ``tol``."""
    if not f.decreasing or not f.nonnegative:
        raise CutoffError(f"lattice sums need a nonnegative decaying kernel, got {f}")
    density = 1.0 / abs(np.linalg.det(basis))
    radius = 1.0
    while _tail_bound(f, radius, density) >= tol:
        radius += 0.25
        if radius > MAX_RADIUS:
            raise CutoffError(f"{f} decays too slowly for a tail below {tol:g}")
    return radius


def lattice_vectors(lattice, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero lattice vectors with ``|u| <= radius`` and their integer coordinates."""
    b = _as_basis(lattice)
    binv = np.linalg.inv(b)
    reach = [int(math.ceil(radius * np.linalg.norm(row))) for row in binv]
    i = np.arange(-reach[0], reach[0] + 1)
    j = np.arange(-reach[1], reach[1] + 1)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()])
    u = coords @ b.T
    r2 = np.einsum("ij,ij->i", u, u)
    keep = (r2 > 0) & (r2 <= radius * radius)
    return u[keep], coords[keep]


def _lattice_terms(lattice, f, cutoff_radius, tol):
    b = _as_basis(lattice)
    if cutoff_radius is None:
        cutoff_radius = auto_cutoff(f, b)
    elif f.decreasing and f.nonnegative:
        tail = _tail_bound(f, cutoff_radius, 1.0 / abs(np.linalg.det(b)))
        if tail > tol:
            raise CutoffError(f"cutoff {cutoff_radius} leaves a tail bound {tail:.2e} > {tol:g}")
    else:
        raise CutoffError(f"lattice sums need a nonnegative decaying kernel, got {f}")
    u, coords = lattice_vectors(b, cutoff_radius)
    return u, coords, f(np.einsum("ij,ij->i", u, u))


def dispersion(lattice, f: WeightFunction, xi, cutoff_radius: float | None = None,
               tol: float = 1e-12):
    """``omega_f(xi) = sum_{u != 0} cos(xi . u) f(|u|^2)``; ``xi`` is (2,) or (m, 2)."""
    u, _, fu = _lattice_terms(lattice, f, cutoff_radius, tol)
    xi = np.asarray(xi, dtype=float)
    out = np.cos(np.atleast_2d(xi) @ u.T) @ fu
    return float(out[0]) if xi.ndim == 1 else out


def operator_norm(lattice, f: WeightFunction) -> float:
    """Norm of the lattice adjacency operator, equal to ``omega_f(0)``."""
    _, _, fu = _lattice_terms(lattice, f, None, 1e-12)
    return float(fu.sum())


def dual_grid(lattice, m: int) -> np.ndarray:
    """The ``m x m`` uniform grid on the dual fundamental cell, shape (m*m, 2)."""
    return DualCell.of(lattice).grid(m)


def dispersion_grid(lattice, f: WeightFunction, m: int) -> np.ndarray:
    """``omega_f`` on :func:`dual_grid`, flattened in the same order.

    Lattice terms are folded modulo ``m`` and transformed with an FFT; the
    fold is exact because the grid phases are ``m``-periodic in the integer
    coordinates.
    """
    _, coords, fu = _lattice_terms(lattice, f, None, 1e-12)
    folded = np.zeros((m, m))
    np.add.at(folded, (coords[:, 0] % m, coords[:, 1] % m), fu)
    return np.real(np.fft.fft2(folded)).ravel()


@dataclass(frozen=True, eq=False)
class DoSHistogram:
    edges: np.ndarray
    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def mean(self) -> float:
        """Mass-weighted mean of the bin centres, normalised by total mass."""
        return float(self.centers @ self.mass / self.total)


def dos(lattice, f: WeightFunction, m: int = 256, bins=200, value_range=None) -> DoSHistogram:
    """Histogram of ``omega_f`` over the dual cell, each sample weighted ``|B| / m^2``.

    The total mass equals the Brillouin-zone area.
    """
    omega = dispersion_grid(lattice, f, m)
    if value_range is None and np.ndim(bins) == 0:
        value_range = (omega.min(), omega.max())
    counts, edges = np.histogram(omega, bins=bins, range=value_range)
    if counts.sum() != omega.size:
        raise ValueError("value_range excludes part of the spectrum")
    return DoSHistogram(edges, counts * (brillouin_area(lattice) / omega.size))


def van_hove_peak(hist: DoSHistogram, exclude_top: float = 0.05) -> float:
    """Centre of the heaviest bin below the top ``exclude_top`` fraction of the range."""
    lo, hi = hist.edges[0], hist.edges[-1]
    centers = hist.centers
    interior = centers < hi - exclude_top * (hi - lo)
    idx = np.flatnonzero(interior)[np.argmax(hist.mass[interior])]
    return float(centers[idx])


def moment_W(lattice, f: WeightFunction, p: int, method: str = "closed", m: int = 256) -> float:
    """``p``-th moment of the density of states of the adjacency operator.

    ``closed`` handles ``p`` in {0, 1, 2}; ``quadrature`` handles any ``p``.
    """
    area = brillouin_area(lattice)
    if method == "quadrature":
        return float(area * np.mean(dispersion_grid(lattice, f, m) ** p))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if p == 0:
        return area
    if p == 1:
        return 0.0
    if p == 2:
        _, _, fu = _lattice_terms(lattice, f, None, 1e-12)
        return float(area * np.sum(fu * fu))
    raise ValueError("closed form available for p in {0, 1, 2} only")


def moment_L1(lattice, f: WeightFunction, method: str = "closed", m: int = 256) -> float:
    """First moment of the Laplacian density of states: ``|B| omega_f(0)``."""
    area = brillouin_area(lattice)
    if method == "quadrature":
        omega = dispersion_grid(lattice, f, m)
        return float(area * np.mean(omega[0] - omega))  # grid point 0 is xi = 0
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    return area * operator_norm(lattice, f)


@dataclass(frozen=True, eq=False)
class TorusGraph:
    """``N^2`` lattice sites ``B (i, j)``, ``i, j in {-N/2, ..., N/2 - 1}``, on the torus with periods ``N B``."""

    n_side: int
    params: LatticeParams
    config: PointConfig

    def graph(self, f: WeightFunction) -> WeightedGraph:
        return assemble(self.config, f)


def torus_graph(params: LatticeParams, n_side: int) -> TorusGraph:
    if n_side < 4 or n_side % 2:
        raise ValueError(f"N must be an even integer >= 4, got {n_side}")
    b = params.basis
    idx = np.arange(-n_side // 2, n_side // 2)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    sites = np.column_stack([ii.ravel(), jj.ravel()]) @ b.T
    return TorusGraph(n_side, params, PointConfig(FlatTorus(n_side * b), sites))


def fundamental_domain_grid(na: int = 41, nb: int = 41, b_max: float = 1.7) -> list[LatticeParams]:
    """Grid over ``U``: ``na`` values of ``a`` in [0, 1/2]; for each, ``nb`` values of
    ``b`` from the arc ``sqrt(1 - a^2)`` up to ``b_max``. Both boundaries are nodes.
    """
    out = []
    for a in np.linspace(0.0, 0.5, na):
        for b in np.linspace(math.sqrt(1.0 - a * a), b_max, nb):
            out.append(LatticeParams(float(a), float(b)))
    return out


def torus_spectrum(params: LatticeParams, n_side: int, f: WeightFunction, inv: InvariantId) -> np.ndarray:
    g = torus_graph(params, n_side).graph(f)
    return np.linalg.eigvalsh(g.adjacency if inv.matrix == "W" else g.laplacian)


def sweep_fundamental_domain(inv: InvariantId, f: WeightFunction, n_side: int = 10,
                             grid: list[LatticeParams] | None = None,
                             workers: int = 1) -> list[tuple[float, float, float]]:
    """Value of ``inv`` on the torus graph at every grid node, as ``(a, b, value)``."""
    if grid is None:
        grid = fundamental_domain_grid()

    def node(p):
        return (p.a, p.b, invariant(torus_spectrum(p, n_side, f, inv), inv, n_side * n_side))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(node, grid))
    return [node(p) for p in grid]


def sweep_argopt(field, inv: InvariantId) -> tuple[float, float, float]:
    """Row of the sweep that optimizes ``inv`` in its sense."""
    return min(field, key=lambda row: inv.sign * row[2])


def normalized_histogram(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Fraction of ``values`` per bin; values outside the edges are clipped into the end bins."""
    v = np.clip(values, edges[0], edges[-1])
    counts, _ = np.histogram(v, bins=edges)
    return counts / len(values)


def spectral_measure_distance(lattice: LatticeParams, f: WeightFunction, n_side: int,
                              reference: DoSHistogram) -> float:
    """Sup-norm gap between the eigenvalue fractions of ``W^N`` and the normalised DoS."""
    g = torus_graph(lattice, n_side).graph(f)
    eig_frac = normalized_histogram(np.linalg.eigvalsh(g.adjacency), reference.edges)
    return float(np.abs(eig_frac - reference.mass / reference.total).max())
