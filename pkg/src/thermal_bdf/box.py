"""Reduced and full free energies on a periodic momentum lattice.

The one-particle space is spanned by plane waves e^{ip.x}/L^{3/2} with
p in (2 pi/L) Z^3, |p| <= Lambda, tensored with C^4. A matrix index is
4*mode + spinor, so the (p, q) block of an operator is a 4x4 matrix.

Densities are stored as Fourier coefficients c_k on the set of differences
p - q of modes, with rho(x) = sum_k c_k e^{ik.x}. The Coulomb zero mode is
left out of the Hartree term and the pairing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .entropy import eigh_density, fermi_map, half_logs, log_ratio, rel_entropy_from_logs
from .errors import ConstraintViolation, ConvergenceError
from .momentum import ModelParams, dirac_symbol
from .radial import ChargeDensitySpec, coulomb_pairing
from .vacuum import VacuumSolution, solve_interacting_vacuum

FOUR_PI = 4.0 * math.pi
# xi in D_lattice(nu, nu) ~ D(nu, nu) - xi Z^2/L for a localized charge in a
# periodic box with the zero mode removed (cubic Madelung constant)
MADELUNG_XI = 2.8372974794806


@dataclass(frozen=True, eq=False)
class BoxConfig:
    L: float
    lam: float
    ints: np.ndarray
    momenta: np.ndarray
    kints: np.ndarray
    kvecs: np.ndarray
    diff_index: np.ndarray
    zero: int
    max_dim: int = 4096

    @classmethod
    def build(cls, L: float, lam: float, max_dim: int = 4096) -> "BoxConfig":
        if not (L > 0 and lam > 0):
            raise ValueError("L and lam must be positive")
        step = 2.0 * math.pi / L
        nmax = int(math.floor(lam / step + 1e-12))
        rng = np.arange(-nmax, nmax + 1)
        grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
        keep = np.sum(grid * grid, axis=1) * step * step <= lam * lam * (1 + 1e-12)
        ints = grid[keep]
        M = len(ints)
        if 4 * M > max_dim:
            raise ValueError(f"box has {4 * M} basis functions, above max_dim = {max_dim}")
        diffs = (ints[:, None, :] - ints[None, :, :]).reshape(-1, 3)
        kints, inv = np.unique(diffs, axis=0, return_inverse=True)
        zero = int(np.flatnonzero(np.all(kints == 0, axis=1))[0])
        arrays = dict(
            ints=ints,
            momenta=step * ints,
            kints=kints,
            kvecs=step * kints,
            diff_index=inv.reshape(M, M),
        )
        for a in arrays.values():
            a.setflags(write=False)
        return cls(L=float(L), lam=float(lam), zero=zero, max_dim=max_dim, **arrays)

    @property
    def M(self) -> int:
        return len(self.ints)

    @property
    def n(self) -> int:
        return 4 * self.M

    @property
    def volume(self) -> float:
        return self.L**3

    @cached_property
    def knorm(self) -> np.ndarray:
        return np.linalg.norm(self.kvecs, axis=1)

    @cached_property
    def coulomb_multiplier(self) -> np.ndarray:
        """4 pi/|k|^2 on the difference set, 0 at k = 0."""
        out = np.zeros(len(self.kvecs))
        nz = np.arange(len(out)) != self.zero
        out[nz] = FOUR_PI / self.knorm[nz] ** 2
        return out

    @cached_property
    def neg_index(self) -> np.ndarray:
        lookup = {tuple(k): i for i, k in enumerate(self.kints)}
        return np.array([lookup[tuple(-k)] for k in self.kints])

    @cached_property
    def exchange_shifts(self):
        """For each k != 0: (4 pi/|k|^2, modes p with p - k a mode, indices of p - k)."""
        lookup = {tuple(m): i for i, m in enumerate(self.ints)}
        out = []
        for idx, k in enumerate(self.kints):
            if idx == self.zero:
                continue
            rows, src = [], []
            for i, m in enumerate(self.ints):
                j = lookup.get(tuple(m - k))
                if j is not None:
                    rows.append(i)
                    src.append(j)
            if rows:
                out.append((self.coulomb_multiplier[idx], np.array(rows), np.array(src)))
        return out

    def shells(self):
        """Distinct |k| > 0 of the difference set, ascending, with index lists."""
        sq = np.sum(self.kints**2, axis=1)
        out = []
        for s in np.unique(sq):
            if s == 0:
                continue
            out.append((math.sqrt(s) * 2.0 * math.pi / self.L, np.flatnonzero(sq == s)))
        return out

    def orbits(self):
        """Index lists of the cubic point-group orbits of the difference set."""
        keys = {}
        for i, k in enumerate(self.kints):
            keys.setdefault(tuple(sorted(np.abs(k))), []).append(i)
        return [np.array(v) for v in keys.values()]


@dataclass(frozen=True, eq=False)
class BoxState:
    """Renormalized density matrix on the box; ``dirac`` is set for references."""

    gamma: np.ndarray
    params: ModelParams
    config: BoxConfig
    dirac: np.ndarray | None = None

    @cached_property
    def logs(self):
        """ln(1/2 +- gamma); computed per 4x4 block for (block-diagonal) references."""
        if self.dirac is None:
            return half_logs(self.gamma)
        M = self.config.M
        blocks = _as_blocks(self.gamma, M)[np.arange(M), np.arange(M)]
        pairs = [half_logs(b) for b in blocks]
        return tuple(block_diag(np.array([p[i] for p in pairs])) for i in range(2))

    def relative_entropy(self, gamma) -> float:
        """H(gamma, self)."""
        return rel_entropy_from_logs(gamma, self.logs)


@dataclass(frozen=True, eq=False)
class BoxDensity:
    config: BoxConfig
    coeffs: np.ndarray

    def hermitian_error(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c[self.config.neg_index] - np.conj(c))))

    def __add__(self, other):
        return BoxDensity(self.config, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return BoxDensity(self.config, self.coeffs - other.coeffs)

    def evaluate(self, x) -> np.ndarray:
        """rho(x) = sum_k c_k exp(i k.x) at points x of shape (..., 3)."""
        phase = np.exp(1j * np.asarray(x, dtype=float) @ self.config.kvecs.T)
        return phase @ self.coeffs

    @property
    def total_charge(self) -> float:
        return float(np.real(self.coeffs[self.config.zero]) * self.config.volume)


def block_diag(blocks: np.ndarray) -> np.ndarray:
    M = len(blocks)
    out = np.zeros((M, M, 4, 4), dtype=complex)
    out[np.arange(M), np.arange(M)] = blocks
    return out.transpose(0, 2, 1, 3).reshape(4 * M, 4 * M)


def _as_blocks(mat, M):
    return mat.reshape(M, 4, M, 4).transpose(0, 2, 1, 3)


def _from_blocks(blocks):
    M = blocks.shape[0]
    return blocks.transpose(0, 2, 1, 3).reshape(4 * M, 4 * M)


def free_dirac(config: BoxConfig) -> np.ndarray:
    return block_diag(dirac_symbol(config.momenta))


def build_reference(config: BoxConfig, params: ModelParams, which: str = "reduced",
                    vacuum: VacuumSolution | None = None) -> BoxState:
    """Translation-invariant reference: g_beta(D0) or g_beta(D_vac) with D_vac from the radial SCF."""
    if which == "reduced":
        blocks = dirac_symbol(config.momenta)
    elif which == "interacting":
        if params.alpha > 0:
            vacuum = vacuum or solve_interacting_vacuum(params, strict=True)
            r = np.linalg.norm(config.momenta, axis=1)
            if np.any(r > vacuum.dirac.d0.R * (1 + 1e-12)):
                raise ValueError("lattice momenta outside the radial grid")
            r = np.minimum(r, vacuum.dirac.d0.R)
            d0 = vacuum.dirac.d0(r)
            d1 = vacuum.dirac.d1(r)
            blocks = (d1[:, None, None] * dirac_symbol(config.momenta)
                      + (d0 - d1)[:, None, None] * dirac_symbol(np.zeros(3))[None])
        else:
            blocks = dirac_symbol(config.momenta)
    else:
        raise ValueError(f"unknown reference {which!r}")
    D = block_diag(blocks)
    gamma = block_diag(np.array([fermi_map(b, params.beta) for b in blocks]))
    return BoxState(gamma=gamma, params=params, config=config, dirac=D)


def density_of(Q: np.ndarray, config: BoxConfig) -> BoxDensity:
    """c_k = L^-3 sum_p tr Q(p, p - k)."""
    M = config.M
    tr = np.einsum("pqii->pq", _as_blocks(np.asarray(Q), M))
    idx = config.diff_index.ravel()
    K = len(config.kvecs)
    c = (np.bincount(idx, weights=tr.real.ravel(), minlength=K)
         + 1j * np.bincount(idx, weights=tr.imag.ravel(), minlength=K))
    return BoxDensity(config, c / config.volume)


def lattice_density(nu: ChargeDensitySpec, config: BoxConfig) -> BoxDensity:
    """nu_k = (2 pi)^{3/2} nu^(|k|)/L^3 on the difference set."""
    c = (2.0 * math.pi) ** 1.5 * nu.hat(config.knorm) / config.volume
    return BoxDensity(config, c.astype(complex))


def zero_density(config: BoxConfig) -> BoxDensity:
    return BoxDensity(config, np.zeros(len(config.kvecs), dtype=complex))


def coulomb_energy(f: BoxDensity, g: BoxDensity) -> float:
    """D(f, g) = 4 pi L^3 sum_{k != 0} conj(f_k) g_k/|k|^2."""
    cfg = f.config
    return float(np.real(cfg.volume * np.sum(cfg.coulomb_multiplier * np.conj(f.coeffs) * g.coeffs)))


def hartree(rho: BoxDensity, alpha: float) -> np.ndarray:
    """(p, q) block alpha (4 pi/|p-q|^2) rho_{p-q} I_4, zero mode omitted."""
    cfg = rho.config
    coef = alpha * (cfg.coulomb_multiplier * rho.coeffs)[cfg.diff_index]
    return np.kron(coef, np.eye(4))


def exchange_kernel(Q: np.ndarray, config: BoxConfig) -> np.ndarray:
    """X(Q)(p, q) = L^-3 sum_{k != 0} (4 pi/|k|^2) Q(p - k, q - k)."""
    M = config.M
    qb = _as_blocks(np.asarray(Q, dtype=complex), M)
    out = np.zeros_like(qb)
    for w, rows, src in config.exchange_shifts:
        out[np.ix_(rows, rows)] += w * qb[np.ix_(src, src)]
    return _from_blocks(out) / config.volume


def exchange_operator(Q, config, alpha):
    """Exchange(Q) = -alpha X(Q); minus the gradient of -(alpha/2) tr[X(Q) Q]."""
    return -alpha * exchange_kernel(Q, config)


def exchange_energy(Q, config) -> float:
    """tr[X(Q) Q] >= 0, the lattice version of \\iint |Q(x,y)|^2/|x-y|."""
    return float(np.real(np.vdot(exchange_kernel(Q, config).conj().T, Q)))


def _check_mode(mode):
    if mode not in ("reduced", "full"):
        raise ValueError(f"mode must be 'reduced' or 'full', got {mode!r}")


def mean_field_operator(gamma: BoxState, nu: BoxDensity, reference: BoxState, mode: str = "reduced") -> np.ndarray:
    """D_gamma = D_ref + Hartree(rho_Q - nu) [+ Exchange(Q) in full mode], Q = gamma - ref."""
    _check_mode(mode)
    cfg = reference.config
    alpha = reference.params.alpha
    Q = gamma.gamma - reference.gamma
    D = reference.dirac + hartree(density_of(Q, cfg) - nu, alpha)
    if mode == "full":
        D = D + exchange_operator(Q, cfg, alpha)
    return D


def free_energy_terms(gamma: BoxState, nu: BoxDensity, reference: BoxState, mode: str = "reduced") -> dict:
    _check_mode(mode)
    p = reference.params
    cfg = reference.config
    Q = gamma.gamma - reference.gamma
    rho = density_of(Q, cfg)
    out = {
        "entropy": p.temperature * reference.relative_entropy(gamma.gamma),
        "external": -p.alpha * coulomb_energy(nu, rho),
        "hartree": 0.5 * p.alpha * coulomb_energy(rho, rho),
        "exchange": -0.5 * p.alpha * exchange_energy(Q, cfg) if mode == "full" else 0.0,
    }
    out["total"] = sum(out.values())
    return out


def free_energy(gamma: BoxState, nu: BoxDensity, reference: BoxState, mode: str = "reduced") -> float:
    """T H(gamma, ref) - alpha D(nu, rho_Q) + alpha/2 D(rho_Q, rho_Q) [- alpha/2 tr X(Q) Q]."""
    return free_energy_terms(gamma, nu, reference, mode)["total"]


def free_energy_gradient(gamma: BoxState, nu: BoxDensity, reference: BoxState, mode: str = "reduced") -> np.ndarray:
    """D_gamma + T ln((1/2 + gamma)/(1/2 - gamma)); T ln(...) of the reference equals -D_ref."""
    D = mean_field_operator(gamma, nu, reference, mode)
    return D + reference.params.temperature * log_ratio(gamma.gamma)


def energy_lower_bound(params: ModelParams, nu: BoxDensity) -> float:
    """-(alpha/2) D(nu, nu)."""
    return -0.5 * params.alpha * coulomb_energy(nu, nu)


def madelung_corrected(D_lattice: float, Z: float, L: float) -> float:
    """Undo the leading periodic-image shift of a localized self-energy."""
    return D_lattice + MADELUNG_XI * Z * Z / L


def uniqueness_condition(params: ModelParams, nu) -> tuple[float, bool]:
    """d = [1 - alpha(pi/2 sqrt((alpha/2)/(1 - alpha pi/4)) + pi^{1/6} 2^{11/6}) D(nu,nu)^{1/2}]^{-1}.

    ``nu`` is a ChargeDensitySpec or the value D(nu, nu). Returns (nan, False)
    when the bracket is not positive.
    """
    params.require_subcritical()
    a = params.alpha
    dnn = float(nu) if isinstance(nu, (int, float)) else coulomb_pairing(nu, nu)
    if dnn < 0:
        raise ValueError("D(nu, nu) must be non-negative")
    bracket = 1.0 - a * (0.5 * math.pi * math.sqrt(0.5 * a / (1.0 - a * math.pi / 4.0))
                         + math.pi ** (1 / 6) * 2 ** (11 / 6)) * math.sqrt(dnn)
    if bracket <= 0:
        return math.nan, False
    d = 1.0 / bracket
    return d, bool(0.0 <= a * math.pi * d / 4.0 <= 1.0)


def abs_matrix(H) -> np.ndarray:
    w, v = np.linalg.eigh(H)
    return (v * np.abs(w)) @ v.conj().T


def coercivity_margin(gamma: BoxState, reference: BoxState) -> float:
    """T H(gamma, ref) - tr[|D_ref| (gamma - ref)^2]."""
    Q = gamma.gamma - reference.gamma
    lhs = reference.params.temperature * reference.relative_entropy(gamma.gamma)
    return lhs - float(np.real(np.trace(abs_matrix(reference.dirac) @ Q @ Q)))


def operator_bound_margin(D_gamma, config: BoxConfig, d: float) -> float:
    """Smallest eigenvalue of |D_gamma| - |D0|/d (non-negative when the bound holds)."""
    e = np.sqrt(1.0 + np.sum(config.momenta**2, axis=1))
    abs_d0 = np.diag(np.repeat(e, 4))
    return float(np.linalg.eigvalsh(abs_matrix(D_gamma) - abs_d0 / d)[0])


def random_admissible_state(config: BoxConfig, params: ModelParams, rng: np.random.Generator,
                            bound: float = 0.45) -> BoxState:
    """Random Hermitian gamma with spectrum in [-bound, bound]."""
    n = config.n
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    u, _ = np.linalg.qr(a)
    w = rng.uniform(-bound, bound, n)
    return BoxState((u * w) @ u.conj().T, params, config)


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


@dataclass
class SCFResult:
    state: BoxState
    reference: BoxState
    diagnostics: dict = field(default_factory=dict)

    @property
    def density(self) -> BoxDensity:
        return density_of(self.state.gamma - self.reference.gamma, self.state.config)


DEFAULT_MIXING = {"reduced": 0.6, "full": 0.3}


def scf_solve(config: BoxConfig, params: ModelParams, nu: BoxDensity, mode: str = "reduced",
              mixing: float | None = None, tol: float = 1e-10, max_iter: int = 3000,
              reference: BoxState | None = None, start: BoxState | None = None,
              strict: bool = True, uniqueness_nu=None) -> SCFResult:
    """Damped iteration gamma <- (1 - m) gamma + m g_beta(D_gamma).

    The step m is halved (at most 30 times) until the free energy does not
    increase, so accepted iterates descend. Converged when
    ||gamma - g_beta(D_gamma)||_F < tol. ``uniqueness_nu`` (a density spec or
    D(nu, nu)) enables the operator-bound check in full mode.
    """
    _check_mode(mode)
    params.require_subcritical()
    mixing = DEFAULT_MIXING[mode] if mixing is None else mixing
    if not (0.0 < mixing <= 1.0):
        raise ValueError("mixing must lie in (0, 1]")
    if reference is None:
        reference = build_reference(config, params, "reduced" if mode == "reduced" else "interacting")
    state = start or BoxState(reference.gamma.copy(), params, config)
    ref_residual = float(np.linalg.norm(reference.gamma - fermi_map(reference.dirac, params.beta)))
    if ref_residual >= tol / 10:
        raise ConstraintViolation("reference is not a fixed point of its own Dirac operator",
                                  [f"reference residual {ref_residual:.3e}"])

    F = free_energy(state, nu, reference, mode)
    history = []
    residual = math.inf
    for it in range(max_iter + 1):
        D = mean_field_operator(state, nu, reference, mode)
        target = fermi_map(D, params.beta)
        residual = float(np.linalg.norm(state.gamma - target))
        history.append({"iteration": it, "free_energy": F, "residual": residual, "step": None})
        if residual < tol:
            break
        if it == max_iter:
            diag = {"iterations": it, "residual": residual, "history": history}
            raise ConvergenceError(f"box SCF not converged after {max_iter} iterations (residual {residual:.3e})", diag)
        step = mixing
        for _ in range(30):
            trial = BoxState((1.0 - step) * state.gamma + step * target, params, config)
            F_trial = free_energy(trial, nu, reference, mode)
            if F_trial <= F + 1e-12 * max(1.0, abs(F)):
                break
            step *= 0.5
        history[-1]["step"] = step
        state, F = trial, F_trial

    w, _ = eigh_density(state.gamma)
    lower = energy_lower_bound(params, nu)
    diag = {
        "mode": mode,
        "iterations": it,
        "residual": residual,
        "free_energy": F,
        "lower_bound": lower,
        "reference_residual": ref_residual,
        "coercivity_margin": coercivity_margin(state, reference),
        "max_abs_eigenvalue": float(np.max(np.abs(w))),
        "history": history,
    }
    violations = []
    if diag["max_abs_eigenvalue"] >= 0.5:
        violations.append("gamma saturates +-1/2")
    if F < lower - 1e-10:
        violations.append("free energy below -(alpha/2) D(nu, nu)")
    if diag["coercivity_margin"] < -1e-10:
        violations.append("coercivity bound violated")
    if mode == "full" and uniqueness_nu is not None:
        d, ok = uniqueness_condition(params, uniqueness_nu)
        diag["uniqueness_d"] = d
        diag["uniqueness_satisfied"] = ok
        if ok:
            diag["operator_bound_margin"] = operator_bound_margin(D, config, d)
            if diag["operator_bound_margin"] < -1e-10:
                violations.append("|D_gamma| >= |D0|/d violated")
    diag["violations"] = violations
    if strict and violations:
        raise ConstraintViolation("box SCF postconditions failed", violations)
    return SCFResult(state=state, reference=reference, diagnostics=diag)


def shell_averages(rho: BoxDensity):
    """[(|k|, mean Re c_k)] over the nonzero shells of the difference set."""
    return [(k, float(np.mean(rho.coeffs[idx].real))) for k, idx in rho.config.shells()]


def symmetry_error(rho: BoxDensity) -> float:
    """Largest spread of c_k inside a cubic point-group orbit."""
    c = rho.coeffs
    return float(max(np.ptp(c[idx].real) + np.ptp(c[idx].imag) for idx in rho.config.orbits()))


def charge_screening_check(result: SCFResult, nu: BoxDensity) -> dict:
    """Compare the response charge L^3 c_0 of gamma - gamma0 with L^3 nu_0."""
    response = result.density.total_charge
    external = nu.total_charge
    mismatch = abs(response - external) / abs(external) if external != 0 else abs(response)
    return {"L": result.state.config.L, "response_charge": response, "external_charge": external,
            "relative_mismatch": mismatch, "within_10_percent": bool(mismatch <= 0.1)}


def linear_prediction_ratio(rho: BoxDensity, nu: BoxDensity, kernel, alpha: float, shells: int = 3):
    """Per shell: (|k|, c_k/nu_k on the box, alpha C/(|k|^2 + alpha C) from the kernel)."""
    out = []
    for k, idx in rho.config.shells()[:shells]:
        ratio = float(np.mean(rho.coeffs[idx].real / nu.coeffs[idx].real))
        ac = alpha * float(kernel(k))
        out.append((k, ratio, ac / (k * k + ac)))
    return out
