"""Fermi-Dirac functional calculus and the relative entropy of renormalized
density matrices (Hermitian gamma with -1/2 <= gamma <= 1/2).

Two evaluations of H(gamma, gamma0) are provided: the logarithmic one, via
eigendecompositions, and an integral over u in [-1, 1] that needs no matrix
logarithm of gamma and stays finite when gamma touches +-1/2.
"""
from __future__ import annotations

import functools

import numpy as np
from scipy.special import xlogy

from .momentum import gauss_panels

EIG_TOL = 1e-12


class BoundaryError(ValueError):
    """A reference state has an eigenvalue too close to +-1/2 for logarithms."""


def fermi_scalar(h, beta):
    """g_beta(h) = 1/2[(1+e^{beta h})^-1 - (1+e^{-beta h})^-1] = -tanh(beta h/2)/2."""
    return -0.5 * np.tanh(0.5 * beta * np.asarray(h, dtype=float))


def _hermitian_function(mat, fn):
    w, v = np.linalg.eigh(mat)
    return (v * fn(w)) @ v.conj().T


def fermi_map(H, beta: float) -> np.ndarray:
    """gamma = g_beta(H) by eigendecomposition of the Hermitian matrix H."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return _hermitian_function(np.asarray(H), lambda w: fermi_scalar(w, beta))


def _check_spectrum(w, tol, strict=False, name="gamma"):
    if np.any(np.abs(w) > 0.5 + tol):
        raise ValueError(f"{name} has eigenvalues outside [-1/2, 1/2]: extreme {np.abs(w).max():.3g}")
    if strict and np.any(np.abs(w) >= 0.5 - tol):
        raise BoundaryError(f"{name} has an eigenvalue within {tol:g} of +-1/2")
    w = np.where(np.abs(w) >= 0.5 - tol, np.sign(w) * 0.5, w)
    return w


def eigh_density(gamma, tol: float = EIG_TOL, strict: bool = False, name="gamma"):
    """Eigendecomposition of a renormalized density with clamping at +-1/2."""
    w, v = np.linalg.eigh(np.asarray(gamma))
    return _check_spectrum(w, tol, strict, name), v


def scalar_s(x):
    """s(x) = (1/2+x)ln(1/2+x) + (1/2-x)ln(1/2-x), even, s(+-1/2) = 0."""
    x = np.asarray(x, dtype=float)
    return xlogy(0.5 + x, 0.5 + x) + xlogy(0.5 - x, 0.5 - x)


def entropy(gamma, tol: float = EIG_TOL) -> float:
    """S(gamma) = -tr[(1/2+gamma)ln(1/2+gamma) + (1/2-gamma)ln(1/2-gamma)]."""
    w, _ = eigh_density(gamma, tol)
    return float(-np.sum(scalar_s(w)))


def scalar_f(x, y):
    """Relative entropy of commuting scalars x, y with |y| < 1/2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        xlogy(0.5 + x, 0.5 + x) - xlogy(0.5 + x, 0.5 + y)
        + xlogy(0.5 - x, 0.5 - x) - xlogy(0.5 - x, 0.5 - y)
    )


def log_ratio_scalar(y):
    """L(y) = ln((1/2+y)/(1/2-y)) = 2 artanh(2y)."""
    return 2.0 * np.arctanh(2.0 * np.asarray(y, dtype=float))


def scalar_C(y):
    """C(y) = ln((1/2+y)/(1/2-y))/(2y), with C(0) = 2."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= 0.5):
        raise ValueError("scalar_C needs |y| < 1/2")
    t = 2.0 * y
    small = np.abs(t) < 1e-4
    ts = np.where(small, 0.5, t)
    out = np.where(small, 2.0 * (1.0 + t * t / 3.0 + t**4 / 5.0), 2.0 * np.arctanh(ts) / ts)
    return out if out.ndim else float(out)


def log_ratio(gamma, tol: float = EIG_TOL) -> np.ndarray:
    """Matrix L(gamma) = ln((1/2+gamma)/(1/2-gamma)); gamma strictly inside."""
    w, v = eigh_density(gamma, tol, strict=True)
    return (v * log_ratio_scalar(w)) @ v.conj().T


def rel_entropy_log(gamma, gamma0, tol: float = EIG_TOL) -> float:
    """H(gamma, gamma0) by eigendecomposition of the four logarithms."""
    mu, v0 = eigh_density(gamma0, tol, strict=True, name="gamma0")
    lam, v = eigh_density(gamma, tol)
    # tr[(1/2 + gamma) ln(1/2 + gamma0)] in the eigenbasis of gamma0
    g0basis = v0.conj().T @ np.asarray(gamma) @ v0
    diag = np.real(np.diag(g0basis))
    cross_p = np.sum((0.5 + diag) * np.log(0.5 + mu))
    cross_m = np.sum((0.5 - diag) * np.log(0.5 - mu))
    self_terms = np.sum(scalar_s(lam))
    return float(self_terms - cross_p - cross_m)


def half_logs(gamma0, tol: float = EIG_TOL) -> tuple[np.ndarray, np.ndarray]:
    """(ln(1/2 + gamma0), ln(1/2 - gamma0)) for repeated relative entropies against gamma0."""
    mu, v0 = eigh_density(gamma0, tol, strict=True, name="gamma0")
    return (v0 * np.log(0.5 + mu)) @ v0.conj().T, (v0 * np.log(0.5 - mu)) @ v0.conj().T


def rel_entropy_from_logs(gamma, logs, tol: float = EIG_TOL) -> float:
    """Same value as rel_entropy_log, given half_logs(gamma0); needs only the spectrum of gamma."""
    gamma = np.asarray(gamma)
    lam = _check_spectrum(np.linalg.eigvalsh(gamma), tol)
    lp, lm = logs
    n = gamma.shape[0]
    # tr[X A] = sum(X * A^T)
    cross_p = np.sum((0.5 * np.eye(n) + gamma) * lp.T)
    cross_m = np.sum((0.5 * np.eye(n) - gamma) * lm.T)
    return float(np.sum(scalar_s(lam)) - np.real(cross_p + cross_m))


@functools.lru_cache(maxsize=8)
def _u_rule(order: int, ratio: float, depth: float):
    """Gauss nodes in s = 1 - |u| on (0, 1], graded geometrically toward s = 0.

    Working with the distance to the endpoint keeps 1 - |u| and 1 + 2u*lambda
    exact for lambda = +-1/2.
    """
    levels = int(np.ceil(np.log(depth) / np.log(ratio)))
    edges = np.concatenate([[0.0], ratio ** np.arange(levels, 0, -1), [1.0]])
    s, w = gauss_panels(edges, order)
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def rel_entropy_int(gamma, gamma0, u_quadrature: int = 16, tol: float = EIG_TOL) -> float:
    """H(gamma, gamma0) from the integral over u in [-1, 1].

    In the eigenbases of gamma (lambda_j) and gamma0 (mu_i) the trace reduces to
    sum_ij |Qt_ij|^2 int 2 a_i(u)^2 b_j(u) du, with Qt = V0* (gamma-gamma0) V,
    a_i = 1/(1+2u mu_i) and b_j = (1-|u|)/(1+2u lambda_j). b stays bounded by
    1, so gamma may reach +-1/2. Panels are graded toward both ends.
    """
    mu, v0 = eigh_density(gamma0, tol, strict=True, name="gamma0")
    lam, v = eigh_density(gamma, tol)
    q = np.asarray(gamma) - np.asarray(gamma0)
    qt = v0.conj().T @ q @ v
    s, w = _u_rule(u_quadrature, 0.25, 1e-15)
    kern = np.zeros((len(mu), len(lam)))
    for sign in (1.0, -1.0):
        # u = sign*(1 - s); 1 + 2u*x = (1 + 2*sign*x) - 2*sign*x*s
        a = 1.0 / ((1.0 + 2.0 * sign * mu)[:, None] - 2.0 * sign * np.outer(mu, s))
        b = s / ((1.0 + 2.0 * sign * lam)[:, None] - 2.0 * sign * np.outer(lam, s))
        kern += 2.0 * np.einsum("iu,ju,u->ij", a * a, b, w)
    return float(np.sum(np.abs(qt) ** 2 * kern))


def klein_margin(gamma, H0, beta: float, tol: float = EIG_TOL) -> tuple[float, float]:
    """(T H(gamma, g_beta(H0)), max{tr[Q^2 |H0|], 2T tr[Q^2]}), Q = gamma - g_beta(H0).

    The first entry dominates the second for every admissible gamma. The
    constant 2T (not 2) follows from C(g_beta(h)) = beta h/tanh(beta h/2) >= 2.
    """
    H0 = np.asarray(H0)
    w, v = np.linalg.eigh(H0)
    gamma0 = (v * fermi_scalar(w, beta)) @ v.conj().T
    abs_h = (v * np.abs(w)) @ v.conj().T
    q = np.asarray(gamma) - gamma0
    q2 = q @ q
    T = 1.0 / beta
    lhs = T * rel_entropy_log(gamma, gamma0, tol)
    rhs = max(float(np.real(np.trace(q2 @ abs_h))), 2.0 * T * float(np.real(np.trace(q2))))
    return lhs, rhs


def entropy_expansion_identity(gamma_prime, gamma, gamma0, tol: float = EIG_TOL) -> float:
    """Residual of H(g',g0) = H(g,g0) + H(g',g) + tr[(g'-g)(L(g) - L(g0))]."""
    lhs = rel_entropy_log(gamma_prime, gamma0, tol)
    rhs = (
        rel_entropy_log(gamma, gamma0, tol)
        + rel_entropy_log(gamma_prime, gamma, tol)
        + float(np.real(np.trace((np.asarray(gamma_prime) - gamma) @ (log_ratio(gamma, tol) - log_ratio(gamma0, tol)))))
    )
    return abs(lhs - rhs)
