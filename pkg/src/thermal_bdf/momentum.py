"""Dirac matrices, the free Dirac symbol, its spectral projectors and radial grids.

Units are hbar = c = m = 1 throughout. Momenta are plain length-3 arrays (or
stacks of them with a trailing axis of size 3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)


def _dirac_rep():
    alphas = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in SIGMA])
    beta = np.block([[_I2, _Z2], [_Z2, -_I2]])
    return alphas, beta


def _chiral_rep():
    alphas = np.array([np.block([[-s, _Z2], [_Z2, s]]) for s in SIGMA])
    beta = np.block([[_Z2, _I2], [_I2, _Z2]])
    return alphas, beta


_REPS = {"dirac": _dirac_rep(), "chiral": _chiral_rep()}
for _a, _b in _REPS.values():
    _a.setflags(write=False)
    _b.setflags(write=False)

ALPHA, BETA = _REPS["dirac"]


def dirac_matrices(representation: str = "dirac") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(alphas, beta)`` with ``alphas`` of shape (3, 4, 4).

    ``"dirac"`` is the standard Dirac-Pauli representation, ``"chiral"`` the
    Weyl one. Both satisfy the same anticommutation relations, so every trace,
    eigenvalue and energy computed from them agrees.
    """
    try:
        return _REPS[representation]
    except KeyError:
        raise ValueError(f"unknown representation {representation!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Coupling ``alpha``, inverse temperature ``beta`` and UV cutoff ``lam``."""

    alpha: float
    beta: float
    lam: float

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    @property
    def subcritical(self) -> bool:
        return self.alpha < 4.0 / math.pi

    def require_subcritical(self) -> None:
        if not self.subcritical:
            raise ValueError(f"alpha = {self.alpha} must be below 4/pi = {4 / math.pi:.6f}")


def energy(p) -> np.ndarray | float:
    """E(p) = sqrt(1 + |p|^2) for a momentum (or stack of momenta)."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(1.0 + np.sum(p * p, axis=-1))


def radial_energy(r):
    """E as a function of |p|."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(1.0 + r * r)


def dirac_symbol(p, representation: str = "dirac") -> np.ndarray:
    """D0(p) = alpha.p + beta, shape (..., 4, 4)."""
    alphas, beta = dirac_matrices(representation)
    p = np.asarray(p, dtype=float)
    return np.einsum("...i,ijk->...jk", p, alphas) + beta


def spectral_projectors(p, representation: str = "dirac") -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto the positive and negative spectral subspaces of D0(p)."""
    d = dirac_symbol(p, representation)
    e = energy(p)[..., None, None]
    one = np.eye(4)
    return 0.5 * (one + d / e), 0.5 * (one - d / e)


def projector_overlap_trace(p, q, same_sign: bool):
    """tr[P(p) P'(q)] in closed form.

    Same signs give 1 + (p.q + 1)/(E(p)E(q)); opposite signs give 1 - (...).
    Works elementwise on stacks of momenta.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x = (np.sum(p * q, axis=-1) + 1.0) / (energy(p) * energy(q))
    return 1.0 + x if same_sign else 1.0 - x


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Composite Gauss-Legendre rule on [0, R].

    ``edges`` are the panel boundaries; every panel carries ``order`` nodes.
    """

    R: float
    edges: np.ndarray
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def panels(self) -> int:
        return len(self.edges) - 1

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def gauss_panels(edges, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of ``order``-point Gauss-Legendre on each panel."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def make_radial_grid(R: float, panels: int = 4, order: int = 24, edges=None) -> RadialGrid:
    """Composite Gauss-Legendre grid on [0, R].

    ``edges`` optionally gives the panel boundaries as fractions of R (first
    0, last 1); otherwise the panels are uniform.
    """
    if not (R > 0 and math.isfinite(R)):
        raise ValueError(f"R must be positive and finite, got {R}")
    if order < 2:
        raise ValueError("order must be at least 2")
    if edges is None:
        if panels < 1:
            raise ValueError("panels must be at least 1")
        frac = np.linspace(0.0, 1.0, panels + 1)
    else:
        frac = np.asarray(edges, dtype=float)
        if frac[0] != 0.0 or frac[-1] != 1.0 or np.any(np.diff(frac) <= 0):
            raise ValueError("edges must increase strictly from 0 to 1")
    e = R * frac
    nodes, weights = gauss_panels(e, order)
    for arr in (e, nodes, weights):
        arr.setflags(write=False)
    return RadialGrid(R=float(R), edges=e, order=order, nodes=nodes, weights=weights)
