"""Seeded randomized property suites, shared by ``thermal-bdf check`` and the tests.

Every suite returns a plain dict: name, passed, number of samples, the worst
observed value of its test statistic, the seed and the failing sample indices.
Nothing time-dependent goes into the result, so a fixed seed gives identical
reports.
"""
from __future__ import annotations

import math

import numpy as np

from .box import (
    BoxConfig,
    BoxState,
    build_reference,
    coercivity_margin,
    energy_lower_bound,
    free_energy,
    free_energy_gradient,
    lattice_density,
    random_admissible_state,
    random_hermitian,
)
from .entropy import entropy_expansion_identity, fermi_map, klein_margin, rel_entropy_int, rel_entropy_log
from .momentum import ModelParams
from .radial import ChargeDensitySpec
from .response import response_direct, response_reduced
from .vacuum import (
    VacuumCoefficients,
    energy_gradient_pairing,
    energy_per_volume,
    random_admissible,
    vacuum_grid,
)


def random_density_matrix(n, rng, bound=0.5, boundary_fraction=0.0):
    """Hermitian matrix with spectrum in [-bound, bound]; some eigenvalues pinned to +-bound."""
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    u, _ = np.linalg.qr(a)
    w = rng.uniform(-bound, bound, n)
    pin = rng.random(n) < boundary_fraction
    w[pin] = bound * rng.choice([-1.0, 1.0], pin.sum())
    return (u * w) @ u.conj().T


def _report(name, seed, stats, ok, **extra):
    stats = np.asarray(stats, dtype=float)
    fails = [int(i) for i in np.flatnonzero(~np.asarray(ok))]
    out = {"name": name, "passed": not fails, "samples": int(len(stats)),
           "worst": float(np.max(stats)) if len(stats) else 0.0, "seed": seed,
           "failed_samples": len(fails), "failures": fails[:20]}
    out.update(extra)
    return out


def entropy_equivalence_suite(seed=0, samples=500, rel_tol=1e-8):
    """|H_log - H_int| <= rel_tol (1 + |H|) for n in 2..12, gamma0 spectrum in [-0.45, 0.45]."""
    rng = np.random.default_rng(seed)
    stats, ok = [], []
    for _ in range(samples):
        n = int(rng.integers(2, 13))
        g0 = random_density_matrix(n, rng, 0.45)
        g = random_density_matrix(n, rng, 0.5, boundary_fraction=0.2)
        h_log = rel_entropy_log(g, g0)
        h_int = rel_entropy_int(g, g0)
        err = abs(h_log - h_int) / (1.0 + abs(h_log))
        stats.append(err)
        ok.append(err <= rel_tol)
    return _report("entropy_equivalence", seed, stats, ok)


def klein_suite(seed=0, samples=500, slack=1e-12, inject_fault=False, beta_range=(0.1, 10.0)):
    """T H(gamma, g_beta(H0)) >= max{tr[Q^2 |H0|], 2T tr[Q^2]}.

    ``inject_fault`` swaps the constant 2T for 2, a known-false variant when
    beta > 1, to confirm the suite can fail.
    """
    rng = np.random.default_rng(seed)
    stats, ok = [], []
    for _ in range(samples):
        n = int(rng.integers(1, 9))
        beta = float(np.exp(rng.uniform(*np.log(beta_range))))
        H0 = random_hermitian(n, rng, float(np.exp(rng.uniform(np.log(0.01), np.log(3.0)))))
        # keep g_beta(H0) representable away from +-1/2
        top = beta * np.max(np.abs(np.linalg.eigvalsh(H0)))
        if top > 20.0:
            H0 *= 20.0 / top
        g = random_density_matrix(n, rng, 0.5, boundary_fraction=0.1)
        lhs, rhs = klein_margin(g, H0, beta)
        if inject_fault:
            gamma0 = fermi_map(H0, beta)
            q = g - gamma0
            rhs = max(rhs, 2.0 * float(np.real(np.trace(q @ q))))
        stats.append(rhs - lhs)
        ok.append(lhs >= rhs - slack)
    return _report("klein" + ("_injected" if inject_fault else ""), seed, stats, ok)


def expansion_identity_suite(seed=0, samples=100, tol=1e-9):
    rng = np.random.default_rng(seed)
    stats, ok = [], []
    for _ in range(samples):
        n = int(rng.integers(2, 9))
        g0 = random_density_matrix(n, rng, 0.45)
        g = random_density_matrix(n, rng, 0.45)
        gp = random_density_matrix(n, rng, 0.5, boundary_fraction=0.2)
        r = entropy_expansion_identity(gp, g, g0)
        stats.append(r)
        ok.append(r <= tol)
    return _report("entropy_expansion_identity", seed, stats, ok)


def _smooth_direction(grid, rng, scale):
    t = 2.0 * grid.nodes / grid.R - 1.0
    f0 = np.polynomial.chebyshev.chebval(t, rng.normal(size=5)) * scale
    f1 = np.polynomial.chebyshev.chebval(t, rng.normal(size=5)) * scale
    return VacuumCoefficients.from_values(grid, f0, f1)


def vacuum_gradient_suite(seed=0, samples=20, rel_tol=1e-5, params=None, h=1e-4):
    """Central differences of energy_per_volume against the analytic directional derivative."""
    params = params or ModelParams(0.5, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    grid = vacuum_grid(params.lam)
    stats, ok = [], []
    for _ in range(samples):
        g = random_admissible(grid, rng, max_norm=0.45)
        d = _smooth_direction(grid, rng, 1e-2)
        plus = VacuumCoefficients.from_values(grid, g.f0.values + h * d.f0.values, g.f1.values + h * d.f1.values)
        minus = VacuumCoefficients.from_values(grid, g.f0.values - h * d.f0.values, g.f1.values - h * d.f1.values)
        fd = (energy_per_volume(plus, params) - energy_per_volume(minus, params)) / (2.0 * h)
        an = energy_gradient_pairing(g, d, params)
        err = abs(fd - an) / max(abs(an), 1e-300)
        stats.append(err)
        ok.append(err <= rel_tol)
    return _report("vacuum_gradient", seed, stats, ok)


def _interior_state(cfg, params, ref, rng):
    rand = random_admissible_state(cfg, params, rng, bound=0.45)
    t = rng.uniform(0.2, 0.8)
    return BoxState((1.0 - t) * ref.gamma + t * rand.gamma, params, cfg)


def box_gradient_suite(seed=0, samples=20, rel_tol=1e-5, mode="reduced", L=8.0, params=None, h=1e-4):
    """Central differences of the box free energy along random Hermitian directions."""
    params = params or ModelParams(0.3, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    cfg = BoxConfig.build(L, params.lam)
    ref = build_reference(cfg, params, "reduced" if mode == "reduced" else "interacting")
    nu = lattice_density(ChargeDensitySpec("gaussian", 1.0, 1.0), cfg)
    stats, ok = [], []
    for _ in range(samples):
        g = _interior_state(cfg, params, ref, rng)
        d = random_hermitian(cfg.n, rng, 1e-3)
        grad = free_energy_gradient(g, nu, ref, mode)
        an = float(np.real(np.sum(grad * d.T)))
        fp = free_energy(BoxState(g.gamma + h * d, params, cfg), nu, ref, mode)
        fm = free_energy(BoxState(g.gamma - h * d, params, cfg), nu, ref, mode)
        fd = (fp - fm) / (2.0 * h)
        err = abs(fd - an) / max(abs(an), 1e-300)
        stats.append(err)
        ok.append(err <= rel_tol)
    return _report(f"box_gradient_{mode}", seed, stats, ok)


def box_bounds_suite(seed=0, samples=100, mode="reduced", L=8.0, params=None):
    """F >= -(alpha/2) D(nu, nu) and T H(gamma, ref) >= tr[|D_ref| Q^2] on random admissible states."""
    params = params or ModelParams(0.3, 1.0, 1.0)
    rng = np.random.default_rng(seed)
    cfg = BoxConfig.build(L, params.lam)
    ref = build_reference(cfg, params, "reduced" if mode == "reduced" else "interacting")
    nu = lattice_density(ChargeDensitySpec("gaussian", 1.0, 1.0), cfg)
    lower = energy_lower_bound(params, nu)
    stats, ok = [], []
    for _ in range(samples):
        g = random_admissible_state(cfg, params, rng, bound=0.5)
        gap = free_energy(g, nu, ref, mode) - lower
        cm = coercivity_margin(g, ref)
        stats.append(-min(gap, cm))
        ok.append(gap >= -1e-10 and cm >= -1e-10)
    return _report(f"box_bounds_{mode}", seed, stats, ok)


def response_suite(seed=0, samples=20, rel_tol=1e-6, pairs=((1.0, 1.0), (2.0, 1.0))):
    """Lens quadrature against the reduced integrals; C, C1, C2 >= 0."""
    rng = np.random.default_rng(seed)
    stats, ok = [], []
    for beta, lam in pairs:
        params = ModelParams(0.0, beta, lam)
        for k in np.sort(rng.uniform(0.0, 2.0 * lam, samples)):
            k = max(float(k), 1e-6)
            c1, c2 = response_reduced(k, params)
            cd = response_direct(k, params)
            err = abs(cd - c1 - c2) / cd if cd > 0 else abs(c1 + c2)
            stats.append(err)
            ok.append(err <= rel_tol and min(c1, c2, cd) >= 0.0)
    return _report("response_cross_formula", seed, stats, ok)


QUICK_SUITES = ("entropy_equivalence", "klein", "expansion_identity", "vacuum_gradient",
                "box_gradient_reduced", "box_gradient_full", "box_bounds_reduced", "box_bounds_full", "response")


def run_all(seed=0, inject_fault=False, suites=QUICK_SUITES):
    table = {
        "entropy_equivalence": lambda: entropy_equivalence_suite(seed),
        "klein": lambda: klein_suite(seed, inject_fault=inject_fault),
        "expansion_identity": lambda: expansion_identity_suite(seed),
        "vacuum_gradient": lambda: vacuum_gradient_suite(seed),
        "box_gradient_reduced": lambda: box_gradient_suite(seed, mode="reduced"),
        "box_gradient_full": lambda: box_gradient_suite(seed, mode="full"),
        "box_bounds_reduced": lambda: box_bounds_suite(seed, mode="reduced"),
        "box_bounds_full": lambda: box_bounds_suite(seed, mode="full"),
        "response": lambda: response_suite(seed),
    }
    results = [table[name]() for name in suites]
    return {"seed": seed, "inject_fault": inject_fault, "passed": all(r["passed"] for r in results),
            "suites": results}


def literal_klein_counterexample():
    """(T H, 2 tr Q^2) for the scalar case H0 = 0.1, beta = 10, gamma = 0.3."""
    lhs, _ = klein_margin(np.array([[0.3]]), np.array([[0.1]]), 10.0)
    gamma0 = -0.5 * math.tanh(0.5)
    return lhs, 2.0 * (0.3 - gamma0) ** 2
