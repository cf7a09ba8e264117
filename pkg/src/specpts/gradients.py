"""Analytic gradients of spectral invariants.

For a spectral function ``J o lambda`` of ``A`` (adjacency or Laplacian), the
matrix derivative is ``V = U diag(grad J(lambda)) U^T``. Chaining through the
kernel gives, with ``Delta_ik`` the (minimum-image) displacement ``x_i - x_k``:

* adjacency:  ``grad_i = 4 sum_k V_ik f'(d_ik^2) Delta_ik``
* Laplacian:  ``grad_i = 2 sum_k (V_kk - 2 V_ik + V_ii) f'(d_ik^2) Delta_ik``

The Laplacian form also follows from the edge-weight gradient
``g = diag(B U diag(grad J) (B U)^T)``, which is computed independently in
:func:`grad_positions_L_incidence` and :func:`grad_edge_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointConfig, Sphere, move, pair_geometry, project_gradient
from .graphkernel import WeightFunction, adjacency_from_r2, incidence_matrix
from .spectral import EigenPairs, InvariantId, check_connected, invariant, sym_eigen

GAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConfigGradient:
    ambient: np.ndarray  # (n, d)
    projected: np.ndarray  # tangent projection on a sphere, == ambient on a torus
    repeated_eigenvalue: bool = False

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.projected))


def spectral_gradient(lam: np.ndarray, inv: InvariantId) -> np.ndarray:
    """``grad J(lambda)`` for an ascending spectrum (sense sign not applied)."""
    lam = np.asarray(lam, dtype=float)
    n = len(lam)
    g = np.zeros(n)
    name = inv.name
    if inv.needs_connected:
        check_connected(lam)
    if name == "trace":
        g[:] = 1.0
    elif name == "frob2":
        g = 2.0 * lam
    elif name == "lambda2":
        g[1] = 1.0
    elif name == "lambdamax":
        g[-1] = 1.0
    elif name == "rtot":
        g[1:] = -n / lam[1:] ** 2
    elif name == "cond":
        g[-1] = 1.0 / lam[1]
        g[1] = -lam[-1] / lam[1] ** 2
    elif name == "invlambda2":
        g[1] = -1.0 / lam[1] ** 2
    elif name == "var":
        g = (2.0 * lam - 2.0 * lam.sum() / n) / n
    else:
        # sign(0) = 0 picks the midpoint subgradient at a kink
        g = np.sign(lam - inv.lo) + np.sign(lam - inv.hi)
    return g


def is_degenerate(lam: np.ndarray, inv: InvariantId, tol: float = GAP_TOL) -> bool:
    """True when ``grad J`` is only a subgradient at ``lam``."""
    lam = np.asarray(lam, dtype=float)
    name = inv.name
    if name in ("lambda2", "cond", "invlambda2") and len(lam) > 2 and lam[2] - lam[1] < tol:
        return True
    if name in ("lambdamax", "cond") and lam[-1] - lam[-2] < tol:
        return True
    if name == "interval":
        return bool(np.any(np.abs(lam - inv.lo) < tol) or np.any(np.abs(lam - inv.hi) < tol))
    return False


def _derivative_matrix(eig: EigenPairs, gj: np.ndarray) -> np.ndarray:
    u = eig.vectors
    return (u * gj) @ u.T


def _fprime_offdiag(r2: np.ndarray, f: WeightFunction) -> np.ndarray:
    n = r2.shape[0]
    off = ~np.eye(n, dtype=bool)
    fp = np.zeros_like(r2)
    fp[off] = f.deriv(r2[off])
    return fp


def _position_gradient(config, f, inv, which, disp, r2, eig) -> ConfigGradient:
    v = _derivative_matrix(eig, spectral_gradient(eig.values, inv))
    if which == "W":
        coeff = 4.0 * v
    else:
        dv = np.diag(v)
        coeff = 2.0 * (dv[None, :] - 2.0 * v + dv[:, None])
    return _assemble(config, coeff, _fprime_offdiag(r2, f), disp, is_degenerate(eig.values, inv))


def _assemble(config, coeff, fp, disp, repeated) -> ConfigGradient:
    ambient = np.einsum("ik,ikd->id", coeff * fp, disp)
    return ConfigGradient(ambient, project_gradient(config, ambient), repeated)


def _matrix(config: PointConfig, f: WeightFunction, which: str):
    disp, r2 = pair_geometry(config)
    adj = adjacency_from_r2(r2, f)
    if which == "W":
        return disp, r2, adj
    return disp, r2, np.diag(adj.sum(axis=1)) - adj


def grad_positions_W(config: PointConfig, f: WeightFunction, inv: InvariantId,
                     eig: EigenPairs | None = None) -> ConfigGradient:
    """Gradient of ``J(lambda(W))`` with respect to every point."""
    disp, r2, adj = _matrix(config, f, "W")
    return _position_gradient(config, f, inv, "W", disp, r2, eig or sym_eigen(adj))


def grad_positions_L(config: PointConfig, f: WeightFunction, inv: InvariantId,
                     eig: EigenPairs | None = None) -> ConfigGradient:
    """Gradient of ``J(lambda(L))`` with respect to every point."""
    disp, r2, lap = _matrix(config, f, "L")
    return _position_gradient(config, f, inv, "L", disp, r2, eig or sym_eigen(lap))


def grad_edge_weights(inv: InvariantId, eig: EigenPairs, b: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ``J(lambda(B^T diag(w) B))`` with respect to the edge weights ``w``."""
    if b is None:
        b = incidence_matrix(eig.n)
    bu = b @ eig.vectors
    return (bu * bu) @ spectral_gradient(eig.values, inv)


def grad_positions_L_incidence(config: PointConfig, f: WeightFunction, inv: InvariantId,
                               eig: EigenPairs | None = None) -> ConfigGradient:
    """Same quantity as :func:`grad_positions_L`, routed through the edge-weight gradient."""
    disp, r2, lap = _matrix(config, f, "L")
    if eig is None:
        eig = sym_eigen(lap)
    g = grad_edge_weights(inv, eig)
    n = config.n
    i, j = np.triu_indices(n, k=1)
    gmat = np.zeros((n, n))
    gmat[i, j] = g
    gmat[j, i] = g
    return _assemble(config, 2.0 * gmat, _fprime_offdiag(r2, f), disp,
                     is_degenerate(eig.values, inv))


def objective(config: PointConfig, f: WeightFunction, inv: InvariantId) -> float:
    """Value of the invariant on the configuration's graph (no sense sign)."""
    _, r2 = pair_geometry(config)
    adj = adjacency_from_r2(r2, f)
    mat = adj if inv.matrix == "W" else np.diag(adj.sum(axis=1)) - adj
    return invariant(np.linalg.eigvalsh(mat), inv, config.n)


def value_and_grad(config: PointConfig, f: WeightFunction,
                   inv: InvariantId) -> tuple[float, ConfigGradient]:
    """Invariant value and its position gradient from a single eigendecomposition.

    Uses the adjacency or Laplacian route according to ``inv.matrix``.
    """
    which = inv.matrix
    disp, r2, mat = _matrix(config, f, which)
    eig = sym_eigen(mat)
    value = invariant(eig.values, inv, config.n)
    return value, _position_gradient(config, f, inv, which, disp, r2, eig)


def position_gradient(config, f, inv) -> ConfigGradient:
    return value_and_grad(config, f, inv)[1]


@dataclass(frozen=True, eq=False)
class FDReport:
    max_rel_error: float
    worst: tuple[int, int]  # (point, coordinate or tangent direction)
    analytic: np.ndarray
    numeric: np.ndarray
    nonsmooth: bool


def _tangent_bases(points: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frames, shape (n, d-1, d)."""
    frames = []
    for x in points:
        # right-singular vectors orthogonal to x span its tangent plane
        _, _, vt = np.linalg.svd(x[None, :])
        frames.append(vt[1:])
    return np.array(frames)


def fd_check(config: PointConfig, f: WeightFunction, inv: InvariantId, h: float = 1e-5) -> FDReport:
    """Compare the analytic gradient with central differences in every coordinate.

    On a sphere the comparison is along an orthonormal tangent frame at each
    point, with perturbed points retracted back onto the sphere. The error is
    relative to the largest numerical derivative.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h must be in [1e-7, 1e-3], got {h}")
    value, grad = value_and_grad(config, f, inv)
    n, d = config.points.shape
    sphere = isinstance(config.manifold, Sphere)
    if sphere:
        frames = _tangent_bases(config.points)
    else:
        frames = np.broadcast_to(np.eye(d), (n, d, d))
    analytic = np.einsum("ikd,id->ik", frames, grad.projected)
    numeric = np.zeros_like(analytic)
    for i in range(n):
        for k, e in enumerate(frames[i]):
            step = np.zeros((n, d))
            step[i] = h * e
            plus = objective(move(config, step), f, inv)
            minus = objective(move(config, -step), f, inv)
            numeric[i, k] = (plus - minus) / (2.0 * h)
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), np.finfo(float).tiny)
    err = np.abs(analytic - numeric) / scale
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    return FDReport(float(err.max()), (int(worst[0]), int(worst[1])), analytic, numeric,
                    grad.repeated_eigenvalue)
