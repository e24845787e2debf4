import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermal_bdf.checks import literal_klein_counterexample, random_density_matrix
from thermal_bdf.entropy import (
    BoundaryError,
    entropy,
    entropy_expansion_identity,
    fermi_map,
    fermi_scalar,
    half_logs,
    klein_margin,
    log_ratio,
    rel_entropy_from_logs,
    rel_entropy_int,
    rel_entropy_log,
    scalar_C,
    scalar_f,
)
from thermal_bdf.momentum import dirac_symbol


def test_fermi_map_odd_and_closed_form():
    assert np.allclose(fermi_map(np.zeros((3, 3)), 1.0), 0)
    g = fermi_map(np.diag([2.0]), 1.0)
    assert math.isclose(g[0, 0].real, -0.3807970780, rel_tol=1e-9)
    # the two exponential terms evaluated directly
    h = 2.0
    direct = 0.5 * (1 / (1 + math.exp(h)) - 1 / (1 + math.exp(-h)))
    assert math.isclose(g[0, 0].real, direct, rel_tol=1e-14)


def test_fermi_map_of_free_symbol_at_cutoff():
    w = np.linalg.eigvalsh(fermi_map(dirac_symbol([1.0, 0, 0]), 1.0))
    e = math.sqrt(2)
    edge = 0.5 - math.exp(-e) / (1 + math.exp(-e))
    assert np.allclose(np.sort(w), [-edge, -edge, edge, edge])
    assert math.isclose(edge, 0.5 * math.tanh(e / 2))


def test_entropy_values():
    assert math.isclose(entropy(np.zeros((4, 4))), 4 * math.log(2))
    assert entropy(np.diag([0.5, -0.5])) == 0.0
    expected = -2 * (0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert math.isclose(entropy(np.diag([0.25, -0.25])), expected)
    assert math.isclose(expected, 1.1246702, rel_tol=1e-6)


def test_rel_entropy_commuting_pair():
    val = rel_entropy_log(np.diag([0.1]), np.diag([-0.1]))
    ref = 0.6 * math.log(0.6 / 0.4) + 0.4 * math.log(0.4 / 0.6)
    assert math.isclose(val, ref, rel_tol=1e-14)
    assert math.isclose(ref, 0.081093, rel_tol=1e-5)
    assert math.isclose(rel_entropy_int(np.diag([0.1]), np.diag([-0.1])), ref, rel_tol=1e-12)


def test_rel_entropy_zero_on_diagonal(rng):
    g = random_density_matrix(6, rng, 0.45)
    assert abs(rel_entropy_log(g, g)) < 1e-13
    assert rel_entropy_int(g, g) == 0.0


def test_rel_entropy_boundary_eigenvalue():
    g = np.diag([0.5, -0.2])
    g0 = np.diag([0.1, 0.3])
    expected = float(np.sum(scalar_f(np.diag(g), np.diag(g0))))
    assert math.isclose(rel_entropy_log(g, g0), expected, rel_tol=1e-13)
    assert math.isclose(rel_entropy_int(g, g0), expected, rel_tol=1e-12)


def test_reference_on_boundary_rejected():
    with pytest.raises(BoundaryError):
        rel_entropy_log(np.zeros((2, 2)), np.diag([0.5, 0.0]))
    with pytest.raises(ValueError):
        entropy(np.diag([0.7]))


@pytest.mark.parametrize("n", [2, 8, 12])
def test_representations_agree(rng, n):
    g0 = random_density_matrix(n, rng, 0.45)
    g = random_density_matrix(n, rng, 0.5, boundary_fraction=0.3)
    a, b = rel_entropy_log(g, g0), rel_entropy_int(g, g0)
    assert abs(a - b) <= 1e-8 * (1 + abs(a))


def test_cached_logs_match_log_form(rng):
    g0 = random_density_matrix(7, rng, 0.45)
    g = random_density_matrix(7, rng, 0.5, boundary_fraction=0.3)
    assert math.isclose(rel_entropy_from_logs(g, half_logs(g0)), rel_entropy_log(g, g0), rel_tol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_rel_entropy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    g0 = random_density_matrix(n, rng, 0.45)
    g = random_density_matrix(n, rng, 0.5, boundary_fraction=0.2)
    assert rel_entropy_log(g, g0) >= -1e-13


def test_scalar_C_values():
    assert scalar_C(0.0) == 2.0
    y = float(fermi_scalar(2.0, 1.0))
    assert math.isclose(scalar_C(y), 2 / math.tanh(1), rel_tol=1e-14)
    assert math.isclose(scalar_C(0.49), math.log(99) / 0.98, rel_tol=1e-14)
    assert math.isclose(scalar_C(1e-6), 2 * (1 + 4e-12 / 3), rel_tol=1e-15)
    with pytest.raises(ValueError):
        scalar_C(0.5)


@given(st.floats(-0.49, 0.49))
def test_scalar_C_at_least_two(y):
    assert scalar_C(y) >= 2.0


def test_log_ratio_inverts_fermi_map(rng):
    h = rng.normal(size=(5, 5))
    h = h + h.T
    beta = 1.7
    assert np.allclose(log_ratio(fermi_map(h, beta)), -beta * h, atol=1e-10)


def test_klein_scalar_case():
    g0 = float(fermi_scalar(2.0, 1.0))
    lhs, rhs = klein_margin(np.zeros((1, 1)), np.array([[2.0]]), 1.0)
    assert math.isclose(lhs, float(scalar_f(0.0, g0)), rel_tol=1e-13)
    assert math.isclose(rhs, 2 * g0**2, rel_tol=1e-13)
    assert lhs > rhs


def test_klein_zero_at_reference():
    h = np.diag([0.4, -1.0])
    lhs, rhs = klein_margin(fermi_map(h, 2.0), h, 2.0)
    assert abs(lhs) < 1e-14 and abs(rhs) < 1e-28


def test_klein_randomized(rng):
    for _ in range(200):
        n = int(rng.integers(1, 11))
        beta = float(rng.uniform(0.2, 5.0))
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        h = 0.3 * (a + a.conj().T)
        g = random_density_matrix(n, rng, 0.5, boundary_fraction=0.1)
        lhs, rhs = klein_margin(g, h, beta)
        assert lhs >= rhs - 1e-12


def test_literal_klein_constant_fails_at_low_temperature():
    lhs, literal = literal_klein_counterexample()
    assert lhs < literal
    assert lhs >= literal / 10.0 - 1e-15  # the 2T form with T = 0.1 holds


def test_expansion_identity(rng):
    g0 = random_density_matrix(6, rng, 0.45)
    g = random_density_matrix(6, rng, 0.45)
    assert entropy_expansion_identity(g, g, g0) < 1e-12
    assert entropy_expansion_identity(g0, g, g0) <= 1e-10
    gp = random_density_matrix(6, rng, 0.5, boundary_fraction=0.3)
    assert entropy_expansion_identity(gp, g, g0) <= 1e-9
