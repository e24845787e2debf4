"""Thermal polarization kernel C(|k|), screening kernels and linear screening.

C is computed two ways: by direct quadrature over the lens
{|p + k/2| <= Lambda, |p - k/2| <= Lambda}, and from the reduced
two-variable integrals C = C1 + C2 (intraband and interband parts). The
prefactor of the reduced form is fixed so that C1 + C2 equals the lens
integral, and C(0) = C1(0) = (2 beta/pi) \\int_0^Lambda p^2 sech^2(beta E/2) dp.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .momentum import ModelParams, RadialGrid, gauss_panels, make_radial_grid, projector_overlap_trace
from .radial import ChargeDensitySpec, RadialProfile, sine_transform


def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(xs) / xs)


def zeta_lambda(r, lam: float):
    """Z(r) = (E(Lambda) - E(Lambda - r))/r, written as (2 Lambda - r)/(E(Lambda) + E(Lambda - r))."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > 2.0 * lam * (1 + 1e-14)):
        raise ValueError("zeta_lambda needs 0 <= r <= 2 Lambda")
    r = np.minimum(r, 2.0 * lam)
    out = (2.0 * lam - r) / (math.sqrt(1.0 + lam * lam) + np.sqrt(1.0 + (lam - r) ** 2))
    return out if out.ndim else float(out)


def w_kernel(k, z):
    """w(k, z) = sqrt((1 + k^2 (1 - z^2)/4)/(1 - z^2)) for 0 <= z < 1."""
    z = np.asarray(z, dtype=float)
    if np.any(z >= 1.0) or np.any(z < 0.0):
        raise ValueError("w_kernel needs 0 <= z < 1")
    one_m = 1.0 - z * z
    out = np.sqrt((1.0 + 0.25 * k * k * one_m) / one_m)
    return out if out.ndim else float(out)


def _tensor_rule(z_edges, order_z, order_s):
    z, wz = gauss_panels(z_edges, order_z)
    s, ws = gauss_panels([0.0, 1.0], order_s)
    return z[:, None], wz[:, None], s[None, :], ws[None, :]


def _graded_toward(upper, gap, levels_max=30):
    """Panel edges on [0, upper], halving toward ``upper`` down to ~gap."""
    edges = [0.0]
    step = 0.5 * upper
    while step > 0.5 * gap and len(edges) < levels_max:
        edges.append(edges[-1] + step)
        step *= 0.5
    edges.append(upper)
    return np.array(edges)


def response_reduced(k: float, params: ModelParams, order: int = 24) -> tuple[float, float]:
    """(C1(k), C2(k)) from the reduced two-variable integrals, 0 < k <= 2 Lambda."""
    lam, beta = params.lam, params.beta
    if not (0.0 < k <= 2.0 * lam * (1 + 1e-14)):
        raise ValueError("response_reduced needs 0 < k <= 2 Lambda")
    zk = zeta_lambda(min(k, 2.0 * lam), lam)
    if zk <= 0.0:
        return 0.0, 0.0
    el = math.sqrt(1.0 + lam * lam)
    kk4 = 0.25 * k * k

    # first pair: z in [0, Z], v = (k z/2) s; refine toward z = Z where 1/(1-z^2)^3 is steep
    z, wz, s, ws = _tensor_rule(_graded_toward(zk, 1.0 - zk), order, order)
    one_m = 1.0 - z * z
    w = np.sqrt((1.0 + kk4 * one_m) / one_m)
    v = 0.5 * k * z * s
    jac = 0.5 * k * z * wz * ws
    den = 2.0 * (np.cosh(beta * w) + np.cosh(beta * v))
    i1 = np.sum(jac * beta * _sinhc(beta * v) * z / (w * one_m**3) / den)
    j1 = np.sum(jac * np.sinh(beta * w) / (w * w * one_m) * (kk4 - v * v) * z / one_m / den)

    # second pair: z in [0, k Z/2], v = z s
    z, wz, s, ws = _tensor_rule(np.linspace(0.0, 0.5 * k * zk, 3), order, order)
    e = el - z
    v = z * s
    jac = z * wz * ws
    den = 2.0 * (np.cosh(beta * e) + np.cosh(beta * v))
    i2 = np.sum(jac * beta * _sinhc(beta * v) * (e * e - kk4) / den)
    j2 = np.sum(jac * np.sinh(beta * e) / e * (kk4 - v * v) / den)

    pref = 16.0 / (math.pi * k)
    return float(pref * (i1 + i2)), float(pref * (j1 + j2))


def _lens_integrand(p, c, k, beta):
    """p^2 [T1 B+ + T2 B-] with T1 the intraband and T2 the interband Fermi factor."""
    a2 = 1.0 + p * p + p * k * c + 0.25 * k * k
    b2 = 1.0 + p * p - p * k * c + 0.25 * k * k
    a, b = np.sqrt(a2), np.sqrt(b2)
    diff = 2.0 * p * k * c / (a + b)
    t1 = 0.25 * beta * _sinhc(0.5 * beta * diff) / (np.cosh(0.5 * beta * a) * np.cosh(0.5 * beta * b))
    t2 = 0.5 * (np.tanh(0.5 * beta * a) + np.tanh(0.5 * beta * b)) / (a + b)
    x = (p * p - 0.25 * k * k + 1.0) / (a * b)
    return p * p * (t1 * (1.0 + x) + t2 * (1.0 - x))


def response_direct(k: float, params: ModelParams, order: int = 24) -> float:
    """C(k) by quadrature over the lens in (|p|, cos theta), overall factor 1/pi^2.

    The intraband ratio (n(E') - n(E))/(E - E') is evaluated through sinh(x)/x,
    which is regular where E = E'.
    """
    lam, beta = params.lam, params.beta
    if not (0.0 <= k <= 2.0 * lam * (1 + 1e-14)):
        raise ValueError("response_direct needs 0 <= k <= 2 Lambda")
    eps2 = 4.0 * lam * lam - k * k
    if eps2 <= 0.0:
        return 0.0
    eps = math.sqrt(eps2)
    if k == 0.0:
        c_edges = np.array([0.0, 1.0])
    else:
        c0 = min(1.0, eps / k)
        c_edges = [0.0]
        c = c0 / 16.0
        while c < 1.0:
            c_edges.append(c)
            c *= 2.0
        c_edges = np.array(c_edges + [1.0])
    c, wc = gauss_panels(c_edges, order)
    pmax = 0.5 * (-k * c + np.sqrt(k * k * c * c + eps2))
    s, ws = gauss_panels([0.0, 0.5, 1.0], order)
    p = pmax[:, None] * s[None, :]
    vals = _lens_integrand(p, c[:, None], k, beta)
    total = np.sum(wc[:, None] * pmax[:, None] * ws[None, :] * vals)
    # (1/pi^2) * 2 pi * (two symmetric halves in c)
    return float(4.0 / math.pi * total)


def lens_integrand_traces(p_vec, k_vec, beta):
    """Same integrand built from explicit projector traces (for cross-checks)."""
    pp = np.asarray(p_vec) + 0.5 * np.asarray(k_vec)
    pm = np.asarray(p_vec) - 0.5 * np.asarray(k_vec)
    a = np.sqrt(1.0 + np.sum(pp * pp, -1))
    b = np.sqrt(1.0 + np.sum(pm * pm, -1))
    na = 1.0 / (1.0 + np.exp(beta * a))
    nb = 1.0 / (1.0 + np.exp(beta * b))
    same = projector_overlap_trace(pp, pm, True)
    opp = projector_overlap_trace(pp, pm, False)
    with np.errstate(invalid="ignore", divide="ignore"):
        t1 = np.where(np.abs(a - b) > 1e-9, (nb - na) / (a - b), beta * na * (1 - na))
    t2 = (1.0 - na - nb) / (a + b)
    return t1 * same + t2 * opp


def _fermi_product(t, beta):
    # 1/((1+e^{-beta t})(1+e^{beta t})) = 1/(4 cosh^2(beta t/2))
    return 0.25 / np.cosh(0.5 * beta * t) ** 2


def C1_at_zero(params: ModelParams, order: int = 40) -> float:
    """C(0) = (8 beta/pi) \\int_1^{E(Lambda)} t sqrt(t^2-1) / ((1+e^{-beta t})(1+e^{beta t})) dt.

    Evaluated with the substitution t = sqrt(1 + p^2), which removes the
    square-root endpoint behaviour at t = 1.
    """
    lam, beta = params.lam, params.beta
    p, w = gauss_panels(np.linspace(0.0, lam, 5), order)
    t = np.sqrt(1.0 + p * p)
    # t sqrt(t^2-1) dt = p^2 dp
    return float(8.0 * beta / math.pi * np.sum(w * p * p * _fermi_product(t, beta)))


@dataclass(frozen=True, eq=False)
class ResponseKernel:
    """C, C1, C2 tabulated on Gauss nodes of [0, 2 Lambda]."""

    params: ModelParams
    grid: RadialGrid
    C1: np.ndarray
    C2: np.ndarray
    C_direct: np.ndarray | None = None
    C0: float = 0.0

    @property
    def C(self) -> np.ndarray:
        return self.C1 + self.C2

    def profile(self, part: str = "C") -> RadialProfile:
        vals = {"C": self.C, "C1": self.C1, "C2": self.C2}[part]
        return RadialProfile(self.grid, vals, rule="panel")

    def __call__(self, k):
        return self.profile("C")(k)


TABLE_EDGES = (0.0, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 3 / 4, 1.0)


def tabulate_response(params: ModelParams, order: int = 16, edges=TABLE_EDGES,
                      with_direct: bool = True, threads: int = 1) -> ResponseKernel:
    """Tabulate C1, C2 (reduced route) and optionally C (lens route) on [0, 2 Lambda].

    Panels are refined toward k = 0, where the screening kernels built from C
    vary on the scale sqrt(alpha C(0)).
    """
    grid = make_radial_grid(2.0 * params.lam, order=order, edges=edges)
    ks = list(grid.nodes)

    def one(k):
        c1, c2 = response_reduced(k, params)
        cd = response_direct(k, params) if with_direct else np.nan
        return c1, c2, cd

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, ks))
    else:
        rows = [one(k) for k in ks]
    arr = np.array(rows)
    return ResponseKernel(
        params=params,
        grid=grid,
        C1=arr[:, 0],
        C2=arr[:, 1],
        C_direct=arr[:, 2] if with_direct else None,
        C0=C1_at_zero(params),
    )


@dataclass(frozen=True, eq=False)
class ScreeningKernels:
    """b1^(r) = r^2/(r^2 + alpha C) and b2^(r) = 1/(r^2 + alpha C) on [0, 2 Lambda].

    ``truncation`` records how the kernels are applied: the induced density
    r-space kernel 1 - b1^ = alpha C/(r^2 + alpha C) vanishes to second order at
    2 Lambda and is used on [0, 2 Lambda] only; the total potential continues
    b2^ as 1/k^2 (C = 0) beyond 2 Lambda.
    """

    alpha: float
    response: ResponseKernel
    b1hat: RadialProfile
    b2hat: RadialProfile
    truncation: str = "density band-limited to [0, 2 Lambda]; potential continued with C = 0"

    def alpha_C(self, r):
        r = np.asarray(r, dtype=float)
        c = np.where(r == 0.0, self.response.C0, self.response(r))
        return self.alpha * np.where(r <= 2.0 * self.response.params.lam, c, 0.0)

    def density_factor(self, r):
        """alpha C/(r^2 + alpha C) = 1 - b1^ (equal to 1 at r = 0)."""
        ac = self.alpha_C(r)
        return ac / (np.asarray(r) ** 2 + ac)

    def potential_factor(self, r):
        """b2^ = 1/(r^2 + alpha C), continued as 1/r^2 beyond 2 Lambda."""
        return 1.0 / (np.asarray(r) ** 2 + self.alpha_C(r))


def build_screening_kernels(params: ModelParams, response: ResponseKernel) -> ScreeningKernels:
    if params.alpha <= 0:
        raise ValueError("screening kernels need alpha > 0")
    r = response.grid.nodes
    ac = params.alpha * response.C
    b1 = RadialProfile(response.grid, r * r / (r * r + ac), rule="panel")
    b2 = RadialProfile(response.grid, 1.0 / (r * r + ac), rule="panel")
    return ScreeningKernels(alpha=params.alpha, response=response, b1hat=b1, b2hat=b2)


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    nu: ChargeDensitySpec
    params: ModelParams
    kernels: ScreeningKernels
    x: np.ndarray
    rho_tot: np.ndarray
    V: np.ndarray
    response_charge: float
    external_charge: float
    k_cut: float = field(default=0.0)

    def rho_tot_at(self, x):
        return induced_density(self.nu, self.kernels, x)

    def potential_at(self, x):
        return screened_potential(self.nu, self.kernels, x, self.k_cut)


def induced_density(nu: ChargeDensitySpec, kernels: ScreeningKernels, x):
    """rho_tot(x) from rho_tot^ = nu^ alpha C/(k^2 + alpha C) on [0, 2 Lambda]."""
    edges = kernels.b1hat.grid.edges
    return sine_transform(lambda r: nu.hat(r) * kernels.density_factor(r), edges, x)


def screened_potential(nu: ChargeDensitySpec, kernels: ScreeningKernels, x, k_cut=None):
    """V(x) from V^ = -4 pi nu^/(k^2 + alpha C), with C = 0 beyond 2 Lambda."""
    two_lam = kernels.b1hat.R
    k_cut = k_cut or max(nu.k_cutoff(), two_lam)
    inner = sine_transform(lambda r: -4.0 * math.pi * nu.hat(r) * kernels.potential_factor(r),
                           kernels.b1hat.grid.edges, x)
    if k_cut <= two_lam:
        return inner
    n = max(1, int(math.ceil((k_cut - two_lam) / two_lam)))
    outer = sine_transform(lambda r: -4.0 * math.pi * nu.hat(r) / (r * r),
                           np.linspace(two_lam, k_cut, n + 1), x)
    return inner + outer


def linear_screen(nu: ChargeDensitySpec, params: ModelParams, kernels: ScreeningKernels, x=None) -> ScreeningResult:
    """Linearized screening of an external density nu (second-order term dropped)."""
    if params.alpha <= 0:
        raise ValueError("linear screening needs alpha > 0")
    x = np.linspace(1.0, 50.0, 491) if x is None else np.asarray(x, dtype=float)
    k_cut = max(nu.k_cutoff(), kernels.b1hat.R)
    rho = induced_density(nu, kernels, x)
    V = screened_potential(nu, kernels, x, k_cut)
    pref = (2.0 * math.pi) ** 1.5
    return ScreeningResult(
        nu=nu,
        params=params,
        kernels=kernels,
        x=x,
        rho_tot=rho,
        V=V,
        response_charge=float(pref * nu.hat(0.0) * kernels.density_factor(0.0)),
        external_charge=float(pref * nu.hat(0.0)),
        k_cut=k_cut,
    )


def unscreened_potential(nu: ChargeDensitySpec, x, k_cut=None):
    """alpha = 0 baseline V0 = -nu * 1/|x|; closed form -Z erf(x/(sigma sqrt 2))/x for a Gaussian."""
    x = np.asarray(x, dtype=float)
    if nu.kind == "gaussian":
        from scipy.special import erf

        return -nu.Z * erf(x / (nu.sigma * math.sqrt(2.0))) / x
    k_cut = k_cut or nu.k_cutoff()
    n = max(1, int(math.ceil(k_cut)))
    return sine_transform(lambda r: -4.0 * math.pi * nu.hat(r) / (r * r), np.linspace(0.0, k_cut, n + 1), x)


@dataclass(frozen=True)
class DebyeReport:
    x: np.ndarray
    xV: np.ndarray
    xV_ratio: float
    decay_exponent: float
    charge_integral: float
    external_charge: float
    abs_charge_integral: float
    baseline_tail: float

    @property
    def charge_mismatch(self) -> float:
        return abs(self.charge_integral - self.external_charge) / abs(self.external_charge)

    @property
    def screened(self) -> bool:
        return self.xV_ratio < 1e-3 and self.decay_exponent > 2.0


def _ball_integral(fn, X, panel=1.0, order=16):
    x, w = gauss_panels(np.linspace(0.0, X, int(math.ceil(X / panel)) + 1), order)
    vals = np.concatenate([fn(x[i:i + 800]) for i in range(0, len(x), 800)])
    return x, w, vals


def debye_report(result: ScreeningResult, fit_range=(10.0, 40.0), x_max_charge: float = 300.0) -> DebyeReport:
    """Decay of the screened potential and the charge balance of the response."""
    x = np.linspace(1.0, 50.0, 981)
    V = result.potential_at(x)
    xV = x * np.abs(V)
    # running maximum from the right gives an envelope free of the oscillation zeros
    env = np.maximum.accumulate(np.abs(V)[::-1])[::-1]
    sel = (x >= fit_range[0]) & (x <= fit_range[1])
    slope = np.polyfit(np.log(x[sel]), np.log(env[sel]), 1)[0]

    xs, ws, rho = _ball_integral(result.rho_tot_at, x_max_charge)
    shell = 4.0 * math.pi * ws * xs * xs
    charge = float(np.dot(shell, rho))
    abs_charge = float(np.dot(shell, np.abs(rho - result.nu.density(xs))))
    baseline = float(50.0 * abs(unscreened_potential(result.nu, np.array([50.0]))[0]))
    return DebyeReport(
        x=x,
        xV=xV,
        xV_ratio=float(xV[-1] / xV[0]),
        decay_exponent=float(-slope),
        charge_integral=charge,
        external_charge=result.external_charge,
        abs_charge_integral=abs_charge,
        baseline_tail=baseline,
    )
