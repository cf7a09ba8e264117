"""BFGS descent of spectral invariants over pointset configurations."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import FlatTorus, Manifold, PointConfig, Sphere, min_pair_distance, move, random_config
from .graphkernel import WeightFunction, ZeroDistance
from .gradients import value_and_grad
from .spectral import DisconnectedGraph, InvariantId

log = logging.getLogger(__name__)

CURVATURE_EPS = 1e-12


@dataclass(frozen=True)
class OptimizeSettings:
    max_iter: int = 2000
    gtol: float = 1e-8
    armijo_c: float = 1e-4
    shrink: float = 0.5
    restarts: int = 1
    seed: int = 0
    snapshot_stride: int = 0  # 0 disables snapshots
    max_step: float = 0.25  # cap on any single point's move in a trial step
    max_backtracks: int = 60
    plateau_window: int = 25
    plateau_rtol: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        for name in ("gtol", "armijo_c", "max_step", "plateau_rtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iter < 0 or self.snapshot_stride < 0 or self.workers < 1:
            raise ValueError("max_iter, snapshot_stride must be >= 0 and workers >= 1")


@dataclass
class RunResult:
    config: PointConfig
    value: float  # invariant value, sense sign not applied
    d_min: float | None
    iterations: int
    converged: bool
    status: str
    history: list[float] = field(default_factory=list, repr=False)
    snapshots: list[tuple[int, PointConfig]] = field(default_factory=list, repr=False)
    flagged_subgradient: bool = False


def triangular_spacing(area: float, n: int) -> float:
    """Nearest-neighbour spacing of a triangular lattice with ``n`` points per ``area``."""
    return float(np.sqrt(2.0 * area / (np.sqrt(3.0) * n)))


def d_min(config: PointConfig) -> float:
    """Ideal triangular spacing at the configuration's density minus its closest-pair distance.

    On the ``W x H`` unit-density canvas the spacing equals ``W / sqrt(n)``.
    """
    if not isinstance(config.manifold, FlatTorus):
        raise ValueError("d_min is defined for torus configurations only")
    return triangular_spacing(config.manifold.area, config.n) - min_pair_distance(config)


def _safe_eval(config, f, inv):
    try:
        value, grad = value_and_grad(config, f, inv)
    except (DisconnectedGraph, ZeroDistance):
        return np.inf, None
    if not np.isfinite(value):
        return np.inf, None
    return value, grad


def _tangent(config: PointConfig, v: np.ndarray) -> np.ndarray:
    if isinstance(config.manifold, Sphere):
        x = config.points
        return v - np.sum(v * x, axis=1, keepdims=True) * x
    return v


def bfgs_minimize(config0: PointConfig, f: WeightFunction, inv: InvariantId,
                  settings: OptimizeSettings = OptimizeSettings()) -> RunResult:
    """Minimize ``inv.sign * inv`` from ``config0``.

    Steps are accepted by Armijo backtracking. The inverse Hessian estimate is
    reset to a scaled identity whenever the curvature ``s.y`` is not positive.
    Sphere points are retracted by renormalisation and torus points wrapped
    into the cell after every step.
    """
    sign = inv.sign
    shape = config0.points.shape
    x = config0
    value, grad = _safe_eval(x, f, inv)
    if grad is None:
        raise ValueError(f"{inv} is not finite at the initial configuration")
    phi = sign * value
    g = sign * grad.projected.ravel()
    flagged = grad.repeated_eigenvalue
    hinv = None  # None means "identity, not yet scaled"
    history = [value]
    snapshots = [(0, x)] if settings.snapshot_stride else []
    status, converged, it = "max_iter", False, 0

    while it < settings.max_iter:
        if np.linalg.norm(g) <= settings.gtol:
            status, converged = "gtol", True
            break
        accepted = None
        for attempt in ("bfgs", "steepest"):
            if attempt == "steepest":
                if hinv is None:
                    break
                hinv = None
            p = -g if hinv is None else -(hinv @ g)
            p = _tangent(x, p.reshape(shape)).ravel()
            slope = float(g @ p)
            if slope >= 0:
                continue
            t = 1.0
            biggest = np.linalg.norm(p.reshape(shape), axis=1).max()
            if biggest * t > settings.max_step:
                t = settings.max_step / biggest
            for _ in range(settings.max_backtracks):
                trial = move(x, t * p.reshape(shape))
                tval, tgrad = _safe_eval(trial, f, inv)
                if tgrad is not None and sign * tval <= phi + settings.armijo_c * t * slope:
                    accepted = (trial, tval, tgrad, t * p)
                    break
                t *= settings.shrink
            if accepted is not None:
                break
        if accepted is None:
            status = "line_search_failure"
            break

        x, value, grad, s = accepted
        it += 1
        g_new = sign * grad.projected.ravel()
        flagged = flagged or grad.repeated_eigenvalue
        y = g_new - g
        sy = float(s @ y)
        if sy > CURVATURE_EPS:
            if hinv is None:
                hinv = np.eye(len(s)) * (sy / float(y @ y))
            rho = 1.0 / sy
            hy = hinv @ y
            hinv = (hinv - rho * (np.outer(s, hy) + np.outer(hy, s))
                    + (rho * rho * float(y @ hy) + rho) * np.outer(s, s))
        else:
            hinv = None
        g = g_new
        phi = sign * value
        history.append(value)
        if settings.snapshot_stride and it % settings.snapshot_stride == 0:
            snapshots.append((it, x))

        w = settings.plateau_window
        if len(history) > w:
            old = sign * history[-1 - w]
            if old - phi <= settings.plateau_rtol * abs(phi):
                status = "plateau"
                break

    if settings.snapshot_stride and (not snapshots or snapshots[-1][0] != it):
        snapshots.append((it, x))
    dm = d_min(x) if isinstance(x.manifold, FlatTorus) else None
    log.debug("bfgs %s: %s after %d iterations, value %.12g", inv, status, it, value)
    return RunResult(x, value, dm, it, converged, status, history, snapshots, flagged)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SPECPTS_THREADS", "1")))
    except ValueError:
        return 1


def multi_start(manifold: Manifold, n: int, f: WeightFunction, inv: InvariantId,
                settings: OptimizeSettings = OptimizeSettings(),
                initial: list[PointConfig] | None = None) -> tuple[RunResult, list[RunResult]]:
    """Run ``settings.restarts`` descents from random starts seeded ``seed + r``.

    ``initial`` supplies explicit starting configurations instead. Returns the
    best run (lowest signed objective) and all runs in start order.
    """
    if initial is None:
        starts = [random_config(manifold, n, settings.seed + r) for r in range(settings.restarts)]
    else:
        starts = list(initial)
    workers = min(settings.workers, len(starts))

    def run(c):
        return bfgs_minimize(c, f, inv, settings)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(c) for c in starts]
    best = min(results, key=lambda r: inv.sign * r.value)
    return best, results
