"""Translation-invariant thermal vacuum.

Within the ansatz gamma(p) = f1(|p|) alpha.p + f0(|p|) beta, the free energy
per unit volume, its exchange term and the self-consistent equation reduce to
radial integrals over [0, Lambda]. The exchange convolution has a logarithmic
singularity at |q| = |p|; it is discretized once per grid as two dense
matrices acting on node values.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .entropy import log_ratio_scalar, scalar_s
from .errors import ConstraintViolation, ConvergenceError
from .momentum import ModelParams, RadialGrid, gauss_panels, make_radial_grid, radial_energy
from .radial import RadialProfile

TWO_PI3 = (2.0 * math.pi) ** 3
DEFAULT_EDGES = (0.0, 0.15, 0.55, 0.9, 1.0)


def vacuum_grid(lam: float, order: int = 24, edges=DEFAULT_EDGES) -> RadialGrid:
    """Default radial grid: 96 Gauss nodes, panels refined toward 0 and Lambda."""
    return make_radial_grid(lam, order=order, edges=edges)


@dataclass(frozen=True)
class VacuumCoefficients:
    """gamma(p) = f1(|p|) alpha.p + f0(|p|) beta."""

    f0: RadialProfile
    f1: RadialProfile

    @property
    def grid(self) -> RadialGrid:
        return self.f0.grid

    @classmethod
    def from_values(cls, grid, f0, f1, rule="panel"):
        return cls(RadialProfile(grid, f0, rule), RadialProfile(grid, f1, rule))

    def norm(self):
        """Matrix norm of gamma(p) at the grid nodes."""
        r = self.grid.nodes
        return np.hypot(self.f1.values * r, self.f0.values)

    def __sub__(self, other):
        return VacuumCoefficients.from_values(
            self.grid, self.f0.values - other.f0.values, self.f1.values - other.f1.values, self.f0.rule
        )


@dataclass(frozen=True)
class EffectiveDirac:
    """D(p) = d1(|p|) alpha.p + d0(|p|) beta."""

    d0: RadialProfile
    d1: RadialProfile

    def norm(self):
        r = self.d0.grid.nodes
        return np.hypot(self.d1.values * r, self.d0.values)


def reduced_vacuum(params: ModelParams, grid: RadialGrid | None = None) -> VacuumCoefficients:
    """f0 = f1 = -tanh(beta E/2)/(2E): the Fermi map of the free Dirac operator."""
    grid = grid or vacuum_grid(params.lam)
    e = radial_energy(grid.nodes)
    f = -np.tanh(0.5 * params.beta * e) / (2.0 * e)
    return VacuumCoefficients.from_values(grid, f, f.copy())


def fermi_coefficients(d0, d1, r, beta):
    """(f0, f1) of g_beta(D) for D = d1 alpha.p + d0 beta (they commute)."""
    n = np.hypot(d1 * r, d0)
    c = -np.tanh(0.5 * beta * n) / (2.0 * n)
    return c * d0, c * d1


# --- exchange kernels -------------------------------------------------------

def _legendre_q0(p, q, dist):
    """ln((p+q)/|p-q|) = 2 artanh(min/max)."""
    x = np.minimum(p, q) / np.maximum(p, q)
    small = x < 0.5
    xs = np.where(small, x, 0.0)
    return np.where(small, 2.0 * np.arctanh(xs), np.log((p + q) / np.where(small, 1.0, dist)))


def _legendre_q1(p, q, dist):
    """z Q0(z) - 1 with z = (p^2+q^2)/(2pq); series in x = min/max when small."""
    x = np.minimum(p, q) / np.maximum(p, q)
    small = x <= 0.3
    x2 = x * x
    series = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, 25):
        term = term * x2
        series = series + term * (1.0 / (2 * k - 1) + 1.0 / (2 * k + 1))
    z = (p * p + q * q) / (2.0 * p * q)
    direct = z * _legendre_q0(p, q, dist) - 1.0
    return np.where(small, series, direct)


def angular_kernels(p, q, dist=None):
    """K0 = \\int dOmega/|p-q|^2 and K1 = \\int dOmega (p^.q^)/|p-q|^2 for |p|=p, |q|=q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dist = np.abs(p - q) if dist is None else dist
    pref = 2.0 * math.pi / (p * q)
    return pref * _legendre_q0(p, q, dist), pref * _legendre_q1(p, q, dist)


def _graded(length, order, ratio, depth):
    """Offsets s in (0, length] graded geometrically toward s = 0."""
    levels = int(math.ceil(math.log(depth) / math.log(ratio)))
    edges = length * np.concatenate([[0.0], ratio ** np.arange(levels, 0, -1), [1.0]])
    return gauss_panels(edges, order)


@dataclass(frozen=True, eq=False)
class ExchangeMatrices:
    """S0 = W0 @ f0 ~ \\int f0(q) q^2 K0(p_i,q) dq and S1 = W1 @ f1 ~ \\int f1(q) q^3 K1 dq.

    Rows come from product integration: f is interpolated on its panel and
    integrated against the kernel with panels graded toward q = p_i. The
    weighted matrices diag(w p^2) W0 and diag(w p^3) W1 are symmetric up to
    quadrature error, which keeps the energy and the mean-field shift
    consistent to ~1e-10. Symmetrizing them explicitly is avoided because
    dividing by w p^3 at the innermost nodes amplifies that error.
    """

    W0: np.ndarray
    W1: np.ndarray


@functools.lru_cache(maxsize=16)
def exchange_matrices(grid: RadialGrid, sub_order: int = 16, ratio: float = 0.2, depth: float = 1e-16) -> ExchangeMatrices:
    """Exchange matrices for a grid (cached per grid object)."""
    return _build_exchange(grid, sub_order, ratio, depth)


def _build_exchange(grid, sub_order, ratio, depth):
    n = grid.order
    xg, _ = npleg.leggauss(n)
    vinv = np.linalg.inv(npleg.legvander(xg, n - 1))
    N = len(grid.nodes)
    W0 = np.zeros((N, N))
    W1 = np.zeros((N, N))
    for i, p in enumerate(grid.nodes):
        for j, (a, b) in enumerate(zip(grid.edges[:-1], grid.edges[1:])):
            pieces = []  # (q nodes, |p-q|, weights)
            if a < p < b:
                for length, sgn in ((p - a, -1.0), (b - p, 1.0)):
                    s, w = _graded(length, sub_order, ratio, depth)
                    pieces.append((p + sgn * s, s, w))
            else:
                near, sgn = (a, 1.0) if p <= a else (b, -1.0)
                gap = abs(p - near)
                s, w = _graded(b - a, sub_order, ratio, depth) if gap < (b - a) else gauss_panels([0.0, b - a], 2 * n)
                pieces.append((near + sgn * s, gap + s, w))
            q = np.concatenate([pc[0] for pc in pieces])
            dist = np.concatenate([pc[1] for pc in pieces])
            w = np.concatenate([pc[2] for pc in pieces])
            basis = npleg.legvander(2.0 * (q - a) / (b - a) - 1.0, n - 1) @ vinv
            k0, k1 = angular_kernels(p, q, dist)
            cols = slice(j * n, (j + 1) * n)
            W0[i, cols] += (w * q * q * k0) @ basis
            W1[i, cols] += (w * q**3 * k1) @ basis
    W0.setflags(write=False)
    W1.setflags(write=False)
    return ExchangeMatrices(W0=W0, W1=W1)


def exchange_shift(gamma: VacuumCoefficients, params: ModelParams) -> EffectiveDirac:
    """Radial coefficients of D_gamma(p) = D0(p) - alpha/(2 pi^2) \\int gamma(q)/|p-q|^2 dq."""
    grid = gamma.grid
    d0, d1 = _shift_values(gamma.f0.values, gamma.f1.values, grid, params.alpha)
    return EffectiveDirac(gamma.f0.with_values(d0), gamma.f1.with_values(d1))


def _shift_values(f0, f1, grid, alpha):
    if alpha == 0.0:
        return np.ones_like(f0), np.ones_like(f1)
    X = exchange_matrices(grid)
    c = alpha / (2.0 * math.pi**2)
    return 1.0 - c * (X.W0 @ f0), 1.0 - c * (X.W1 @ f1) / grid.nodes


def _check_norm(gamma):
    if np.any(gamma.norm() > 0.5 + 1e-12):
        raise ValueError("gamma(p) has matrix norm above 1/2 somewhere on the grid")


def energy_terms(gamma: VacuumCoefficients, params: ModelParams) -> dict:
    """Kinetic, exchange and entropy parts of the free energy per unit volume."""
    _check_norm(gamma)
    grid = gamma.grid
    r, w = grid.nodes, grid.weights
    f0, f1 = gamma.f0.values, gamma.f1.values
    shell = 4.0 * math.pi * w * r * r / TWO_PI3
    kinetic = float(np.dot(shell, 4.0 * (f1 * r * r + f0)))
    exchange = -params.alpha * exchange_pair(gamma, gamma) if params.alpha else 0.0
    entropy_term = params.temperature * float(np.dot(shell, 4.0 * scalar_s(np.minimum(gamma.norm(), 0.5))))
    return {
        "kinetic": kinetic,
        "exchange": exchange,
        "entropy": entropy_term,
        "total": kinetic + exchange + entropy_term,
    }


def exchange_pair(a: VacuumCoefficients, b: VacuumCoefficients) -> float:
    """(2 pi)^-5 \\iint tr[a(p) b(q)]/|p-q|^2 dp dq (no alpha)."""
    grid = a.grid
    X = exchange_matrices(grid)
    r, w = grid.nodes, grid.weights
    m0 = w * r * r
    s = np.dot(a.f0.values * m0, X.W0 @ b.f0.values) + np.dot(a.f1.values * m0 * r, X.W1 @ b.f1.values)
    return 16.0 * math.pi * float(s) / (2.0 * math.pi) ** 5


def energy_per_volume(gamma: VacuumCoefficients, params: ModelParams) -> float:
    """T_T(gamma): kinetic minus exchange minus T times entropy, per unit volume."""
    return energy_terms(gamma, params)["total"]


def energy_gradient_pairing(gamma: VacuumCoefficients, delta: VacuumCoefficients, params: ModelParams) -> float:
    """(2 pi)^-3 \\int tr[(D_gamma + T L(gamma)) delta(p)] dp, L(x) = ln((1/2+x)/(1/2-x))."""
    grid = gamma.grid
    r, w = grid.nodes, grid.weights
    D = exchange_shift(gamma, params)
    n = gamma.norm()
    lfac = log_ratio_scalar(n) / n
    g0 = D.d0.values + params.temperature * lfac * gamma.f0.values
    g1 = D.d1.values + params.temperature * lfac * gamma.f1.values
    tr = 4.0 * (g1 * delta.f1.values * r * r + g0 * delta.f0.values)
    return float(np.dot(4.0 * math.pi * w * r * r, tr)) / TWO_PI3


@dataclass(frozen=True)
class VacuumSolution:
    gamma: VacuumCoefficients
    dirac: EffectiveDirac
    diagnostics: dict


def _residual(f0, f1, g0, g1, r):
    return float(np.max(np.hypot((f1 - g1) * r, f0 - g0)))


def solve_interacting_vacuum(
    params: ModelParams,
    mixing: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 500,
    grid: RadialGrid | None = None,
    start: VacuumCoefficients | None = None,
    strict: bool = False,
) -> VacuumSolution:
    """Damped fixed-point iteration gamma <- (1-m) gamma + m g_beta(D_gamma).

    Starts from the reduced vacuum unless ``start`` is given. Raises
    ConvergenceError after ``max_iter`` iterations. Postcondition failures
    are listed under ``diagnostics["violations"]`` (and raised if ``strict``).
    """
    params.require_subcritical()
    if not (0.0 < mixing <= 1.0):
        raise ValueError("mixing must lie in (0, 1]")
    if start is not None:
        grid = start.grid
    grid = grid or vacuum_grid(params.lam)
    r = grid.nodes
    gamma = start or reduced_vacuum(params, grid)
    f0, f1 = gamma.f0.values.copy(), gamma.f1.values.copy()
    history = []
    for it in range(max_iter + 1):
        d0, d1 = _shift_values(f0, f1, grid, params.alpha)
        g0, g1 = fermi_coefficients(d0, d1, r, params.beta)
        res = _residual(f0, f1, g0, g1, r)
        history.append(res)
        if res < tol:
            break
        if it == max_iter:
            raise ConvergenceError(
                f"vacuum SCF not converged after {max_iter} iterations (residual {res:.3e})",
                {"iterations": it, "residual": res, "history": history},
            )
        f0 = (1.0 - mixing) * f0 + mixing * g0
        f1 = (1.0 - mixing) * f1 + mixing * g1
    gamma = VacuumCoefficients.from_values(grid, f0, f1, gamma.f0.rule)
    dirac = EffectiveDirac(gamma.f0.with_values(d0), gamma.f1.with_values(d1))
    diag = vacuum_diagnostics(gamma, dirac, params)
    diag.update(iterations=it, residual=res, history=history)
    if strict and diag["violations"]:
        raise ConstraintViolation("interacting vacuum postconditions failed", diag["violations"])
    return VacuumSolution(gamma, dirac, diag)


def norm_lower_bound(beta: float) -> float:
    """(e^beta - 1)/(2(1 + e^beta)) = tanh(beta/2)/2."""
    return 0.5 * math.tanh(0.5 * beta)


def vacuum_diagnostics(gamma: VacuumCoefficients, dirac: EffectiveDirac, params: ModelParams, slack: float = 1e-12) -> dict:
    r = gamma.grid.nodes
    f0, f1 = gamma.f0.values, gamma.f1.values
    d0, d1 = dirac.d0.values, dirac.d1.values
    norm = gamma.norm()
    dnorm = dirac.norm()
    lfac = log_ratio_scalar(norm) / norm
    T = params.temperature
    stationarity = float(np.max(np.hypot((d1 + T * lfac * f1) * r, d0 + T * lfac * f0)))
    out = {
        "energy": energy_per_volume(gamma, params),
        "eps_f": float(np.min(np.minimum(-f0, -f1))),
        "eps_norm": float(0.5 - np.max(norm)),
        "min_d0": float(np.min(d0)),
        "min_d1": float(np.min(d1)),
        "min_dirac_gap": float(np.min(dnorm - radial_energy(r))),
        "min_norm": float(np.min(norm)),
        "norm_lower_bound": norm_lower_bound(params.beta),
        "stationarity": stationarity,
    }
    violations = []
    if out["eps_f"] <= 0:
        violations.append("f0, f1 not strictly negative")
    if out["eps_norm"] <= 0:
        violations.append("matrix norm reaches 1/2")
    if min(out["min_d0"], out["min_d1"]) < 1.0 - slack:
        violations.append("d0 or d1 below 1")
    if out["min_dirac_gap"] < -slack:
        violations.append("|D(p)| below E(p)")
    if out["min_norm"] < out["norm_lower_bound"] - slack:
        violations.append("|gamma(p)| below the thermal lower bound")
    out["violations"] = violations
    return out


def _pauli_form(f0, f1, r):
    """2x2 real symmetric matrices with the same spectrum as f1 alpha.p + f0 beta."""
    m = np.empty(f0.shape + (2, 2))
    m[..., 0, 0] = f0
    m[..., 1, 1] = -f0
    m[..., 0, 1] = m[..., 1, 0] = f1 * r
    return m


def relative_entropy_density(gamma: VacuumCoefficients, ref: VacuumCoefficients) -> np.ndarray:
    """tr_{C^4} of the relative entropy of gamma(p) w.r.t. ref(p), per node.

    alpha.p^ and beta generate a copy of the Pauli algebra with multiplicity 2,
    so each 4x4 trace is twice a 2x2 one.
    """
    r = gamma.grid.nodes
    x = _pauli_form(gamma.f0.values, gamma.f1.values, r)
    y = _pauli_form(ref.f0.values, ref.f1.values, r)
    lx, vx = np.linalg.eigh(x)
    ly, vy = np.linalg.eigh(y)
    lx = np.clip(lx, -0.5, 0.5)
    # diagonal of x in the eigenbasis of y
    xd = np.einsum("nij,nik,nkj->nj", vy, x, vy)
    val = np.sum(scalar_s(lx), axis=-1) - np.sum(
        (0.5 + xd) * np.log(0.5 + ly) + (0.5 - xd) * np.log(0.5 - ly), axis=-1
    )
    return 2.0 * val


def _shell_integral(grid, values):
    r, w = grid.nodes, grid.weights
    return float(np.dot(4.0 * math.pi * w * r * r, values)) / TWO_PI3


def klein_per_volume(gamma: VacuumCoefficients, vacuum: VacuumSolution, params: ModelParams) -> tuple[float, float]:
    """(T Hbar(gamma, vac), (2 pi)^-3 \\int tr[|D_vac| (gamma - vac)^2])."""
    q = gamma - vacuum.gamma
    r = gamma.grid.nodes
    lhs = params.temperature * _shell_integral(gamma.grid, relative_entropy_density(gamma, vacuum.gamma))
    q2 = 4.0 * ((q.f1.values * r) ** 2 + q.f0.values**2)
    rhs = _shell_integral(gamma.grid, vacuum.dirac.norm() * q2)
    return lhs, rhs


def vacuum_energy_gap(gamma: VacuumCoefficients, vacuum: VacuumSolution, params: ModelParams) -> tuple[float, float]:
    """(T_T(gamma) - T_T(vac), (1 - pi alpha/4)(2 pi)^-3 \\int tr[|D_vac| (gamma - vac)^2])."""
    gap = energy_per_volume(gamma, params) - energy_per_volume(vacuum.gamma, params)
    q = gamma - vacuum.gamma
    r = gamma.grid.nodes
    q2 = 4.0 * ((q.f1.values * r) ** 2 + q.f0.values**2)
    bound = (1.0 - math.pi * params.alpha / 4.0) * _shell_integral(gamma.grid, vacuum.dirac.norm() * q2)
    return gap, bound


def kato_chain(q: VacuumCoefficients, vacuum: VacuumSolution, params: ModelParams) -> tuple[float, float, float]:
    """(exchange energy of q, (pi alpha/4)(2pi)^-3 \\int tr[|p| q^2], same with |D_vac|)."""
    r = q.grid.nodes
    q2 = 4.0 * ((q.f1.values * r) ** 2 + q.f0.values**2)
    ex = params.alpha * exchange_pair(q, q)
    c = math.pi * params.alpha / 4.0
    return ex, c * _shell_integral(q.grid, r * q2), c * _shell_integral(q.grid, vacuum.dirac.norm() * q2)


def random_admissible(grid: RadialGrid, rng: np.random.Generator, max_norm: float = 0.49, degree: int = 4) -> VacuumCoefficients:
    """Random gamma in the ansatz with f0, f1 < 0 and matrix norm <= max_norm."""
    t = grid.nodes / grid.R
    vals = []
    for _ in range(2):
        c = rng.uniform(0.1, 1.0, degree + 1)
        vals.append(np.polynomial.chebyshev.chebval(2 * t - 1, c * rng.choice([-1, 1], degree + 1) * 0.3) + c.sum())
    u0, u1 = (np.abs(v) + 0.05 for v in vals)
    f0 = -u0
    f1 = -u1
    norm = np.hypot(f1 * grid.nodes, f0)
    s = rng.uniform(0.3, 1.0) * max_norm / norm.max()
    return VacuumCoefficients.from_values(grid, s * f0, s * f1)
