"""Symmetric eigendecomposition and the catalogue of spectral invariants."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

ZERO_MODE_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


class NotSymmetric(ValueError):
    pass


class DisconnectedGraph(ValueError):
    """The Laplacian has more than one (numerically) zero eigenvalue."""


@dataclass(frozen=True, eq=False)
class EigenPairs:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns match ``values``

    @property
    def n(self) -> int:
        return len(self.values)


def sym_eigen(a: np.ndarray) -> EigenPairs:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = np.abs(a).max() if a.size else 0.0
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(a)
    return EigenPairs(vals, vecs)


def spectrum(a: np.ndarray) -> np.ndarray:
    return sym_eigen(a).values


_NAMES = ("trace", "frob2", "lambda2", "lambdamax", "rtot", "cond", "var", "interval", "invlambda2")
_DEFAULT_SENSE = {"lambda2": "maximize"}


@dataclass(frozen=True)
class InvariantId:
    """One entry of the objective menu.

    ``frob2`` is evaluated on the adjacency spectrum; all others on the
    Laplacian spectrum. ``interval`` carries its endpoints ``lo < hi``.
    """

    name: str
    lo: float | None = None
    hi: float | None = None
    sense: str | None = None

    def __post_init__(self):
        if self.name not in _NAMES:
            raise ValueError(f"unknown invariant {self.name!r}; choose from {', '.join(_NAMES)}")
        if self.name == "interval":
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"interval needs lo < hi, got ({self.lo}, {self.hi})")
        elif self.lo is not None or self.hi is not None:
            raise ValueError(f"{self.name} takes no interval endpoints")
        sense = self.sense or _DEFAULT_SENSE.get(self.name, "minimize")
        if sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be minimize or maximize, got {sense!r}")
        object.__setattr__(self, "sense", sense)

    @property
    def matrix(self) -> str:
        return "W" if self.name == "frob2" else "L"

    @property
    def needs_connected(self) -> bool:
        return self.name in ("rtot", "cond", "invlambda2")

    @property
    def sign(self) -> float:
        """Multiplier that turns the invariant into a quantity to minimize."""
        return -1.0 if self.sense == "maximize" else 1.0

    @classmethod
    def interval(cls, lo: float, hi: float) -> "InvariantId":
        return cls("interval", float(lo), float(hi))

    @classmethod
    def interval_centered(cls, center: float, width: float) -> "InvariantId":
        return cls.interval(center - width / 2.0, center + width / 2.0)

    @classmethod
    def parse(cls, text: str, sense: str | None = None) -> "InvariantId":
        """Parse ``trace``, ``lambda2``, ``interval(0.82,0.88)`` and so on."""
        text = text.strip().lower()
        m = re.fullmatch(r"interval\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)", text)
        if m:
            return cls("interval", float(m.group(1)), float(m.group(2)), sense)
        return cls(text, sense=sense)

    def __str__(self) -> str:
        if self.name == "interval":
            return f"interval({self.lo!r},{self.hi!r})"
        return self.name


def check_connected(lam: np.ndarray) -> None:
    if not lam[1] > ZERO_MODE_RTOL * max(lam[-1], 0.0):
        raise DisconnectedGraph(f"lambda_2 = {lam[1]:.3e} is numerically zero")


def invariant(lam: np.ndarray, inv: InvariantId, n: int | None = None) -> float:
    """Value of ``inv`` on an ascending spectrum ``lam`` (without the sense sign)."""
    lam = np.asarray(lam, dtype=float)
    n = len(lam) if n is None else n
    name = inv.name
    if inv.needs_connected:
        check_connected(lam)
    if name == "trace":
        return float(lam.sum())
    if name == "frob2":
        return float(np.dot(lam, lam))
    if name == "lambda2":
        return float(lam[1])
    if name == "lambdamax":
        return float(lam[-1])
    if name == "rtot":
        return float(n * np.sum(1.0 / lam[1:]))
    if name == "cond":
        return float(lam[-1] / lam[1])
    if name == "invlambda2":
        return float(1.0 / lam[1])
    if name == "var":
        mean = lam.sum() / n
        return float(np.dot(lam, lam) / n - mean * mean)
    # interval
    lo, hi = inv.lo, inv.hi
    return float(np.sum(np.abs(lam - lo) + np.abs(lam - hi) - (hi - lo)))


def frobenius_sq(w: np.ndarray) -> float:
    """Squared Frobenius norm, summed entrywise."""
    w = np.asarray(w, dtype=float)
    return float(np.sum(w * w))


def laplacian_pinv(lap: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a connected graph Laplacian.

    Computed as ``(L + J/n)^{-1} - J/n`` with ``J`` the all-ones matrix, which
    avoids an eigendecomposition.
    """
    n = lap.shape[0]
    j = np.full((n, n), 1.0 / n)
    return np.linalg.inv(lap + j) - j
