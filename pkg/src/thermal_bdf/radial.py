"""Radial profiles, the Fourier convention, the Coulomb pairing and radial
Fourier inversion.

Convention (used everywhere in the package):

    f^(k) = (2 pi)^{-3/2} \\int f(x) e^{-i k.x} dx.

With it the Coulomb kernel 1/|x| has transform (2 pi)^{-3/2} 4 pi/|k|^2, a
convolution picks up (2 pi)^{3/2}, and for radial functions

    f(x) = sqrt(2/pi) / x \\int_0^inf r f^(r) sin(r x) dr.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import QuadratureError
from .momentum import RadialGrid, gauss_panels

FOURIER_PREFACTOR = (2.0 * math.pi) ** -1.5
RADIAL_PREFACTOR = math.sqrt(2.0 / math.pi)  # (2 pi)^{-3/2} * 4 pi


def fourier_convention() -> dict:
    """Description of the transform convention and its derived constants."""
    return {
        "forward": "f^(k) = (2pi)^(-3/2) int f(x) exp(-i k.x) dx",
        "prefactor": FOURIER_PREFACTOR,
        "radial_prefactor": RADIAL_PREFACTOR,
        "coulomb_kernel": "4 pi / |k|^2 (times the prefactor)",
    }


class RadialProfile:
    """Function of a radial variable sampled on the nodes of a RadialGrid.

    ``rule="cubic"`` interpolates with a not-a-knot cubic spline through the
    nodes. ``rule="panel"`` uses the degree order-1 polynomial through the
    Gauss nodes of each panel, which is spectrally accurate for smooth data
    and can be differentiated exactly. Values outside [0, R] are 0.
    """

    def __init__(self, grid: RadialGrid, values, rule: str = "cubic"):
        values = np.array(values, dtype=float)
        if values.shape != grid.nodes.shape:
            raise ValueError("one value per grid node expected")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        if rule not in ("cubic", "panel"):
            raise ValueError(f"unknown interpolation rule {rule!r}")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.rule = rule
        if rule == "cubic":
            self._spline = CubicSpline(grid.nodes, values, extrapolate=True)
        else:
            x, _ = npleg.leggauss(grid.order)
            vinv = np.linalg.inv(npleg.legvander(x, grid.order - 1))
            self._coef = values.reshape(grid.panels, grid.order) @ vinv.T

    @property
    def R(self) -> float:
        return self.grid.R

    def with_values(self, values) -> "RadialProfile":
        return RadialProfile(self.grid, values, self.rule)

    def __call__(self, r, derivative: int = 0):
        r = np.asarray(r, dtype=float)
        inside = (r >= 0.0) & (r <= self.R)
        rr = np.clip(r, 0.0, self.R)
        if self.rule == "cubic":
            out = self._spline(rr, derivative)
        else:
            edges = self.grid.edges
            idx = np.clip(np.searchsorted(edges, rr, side="right") - 1, 0, self.grid.panels - 1)
            a, b = edges[idx], edges[idx + 1]
            t = 2.0 * (rr - a) / (b - a) - 1.0
            coef = self._coef[idx]
            if derivative:
                coef = npleg.legder(coef, derivative, axis=-1) * (2.0 / (b - a))[..., None] ** derivative
            # legvander promotes 0-d input to 1-d
            van = npleg.legvander(t, coef.shape[-1] - 1).reshape(t.shape + (coef.shape[-1],))
            out = np.sum(van * coef, axis=-1)
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)

    def integrate(self, weight=None) -> float:
        v = self.values if weight is None else self.values * weight(self.grid.nodes)
        return self.grid.integrate(v)


@dataclass(frozen=True)
class ChargeDensitySpec:
    """Radial external charge density.

    ``gaussian``: nu(x) = Z (2 pi s^2)^{-3/2} exp(-x^2/(2 s^2)).
    ``point-regularized``: nu(x) = Z exp(-x/s)/(8 pi s^3), a smeared point
    charge with nu^(k) proportional to (1 + s^2 k^2)^{-2}.
    ``tabulated``: nu^ given by ``table`` (a RadialProfile in k), zero beyond
    its range.
    """

    kind: str
    Z: float
    sigma: float = 1.0
    table: RadialProfile | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("gaussian", "point-regularized", "tabulated"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")
        if self.kind == "tabulated" and self.table is None:
            raise ValueError("tabulated density needs a table")

    @property
    def k_support(self) -> float:
        return self.table.R if self.kind == "tabulated" else math.inf

    def hat(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "gaussian":
            return self.Z * FOURIER_PREFACTOR * np.exp(-0.5 * (self.sigma * k) ** 2)
        if self.kind == "point-regularized":
            return self.Z * FOURIER_PREFACTOR / (1.0 + (self.sigma * k) ** 2) ** 2
        return self.table(k)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        s = self.sigma
        if self.kind == "gaussian":
            return self.Z * (2.0 * math.pi * s * s) ** -1.5 * np.exp(-0.5 * (x / s) ** 2)
        if self.kind == "point-regularized":
            return self.Z * np.exp(-x / s) / (8.0 * math.pi * s**3)
        return radial_inverse_fourier(self.table, x)

    def k_cutoff(self, rel: float = 1e-17) -> float:
        """Radius beyond which |nu^(k)| < rel * |nu^(0)|."""
        if self.kind == "tabulated":
            return self.table.R
        if self.kind == "gaussian":
            return math.sqrt(-2.0 * math.log(rel)) / self.sigma
        return (rel ** -0.25) / self.sigma


def _hat_of(f):
    if isinstance(f, ChargeDensitySpec):
        return f.hat, f.k_support, ()
    if isinstance(f, RadialProfile):
        return f, f.R, tuple(f.grid.edges[1:-1])
    raise TypeError("expected a ChargeDensitySpec or a k-space RadialProfile")


def coulomb_pairing(f, g, tol: float = 1e-10) -> float:
    """D(f, g) = 4 pi \\int conj(f^) g^ / |k|^2 dk = 16 pi^2 \\int_0^inf f^(r) g^(r) dr."""
    fh, fr, fp = _hat_of(f)
    gh, gr, gp = _hat_of(g)
    upper = min(fr, gr)
    points = sorted(p for p in set(fp + gp) if p < upper)

    def integrand(r):
        return float(fh(r) * gh(r))

    if math.isinf(upper):
        val, err = integrate.quad(integrand, 0.0, np.inf, limit=400, epsabs=1e-15, epsrel=1e-13)
    else:
        val, err = integrate.quad(integrand, 0.0, upper, points=points or None, limit=400,
                                  epsabs=1e-15, epsrel=1e-13)
    if err > tol * max(1.0, abs(val)):
        raise QuadratureError(f"Coulomb pairing did not converge (error estimate {err:.2e})")
    return 16.0 * math.pi**2 * val


def oscillatory_nodes(edges, x_max: float, order: int = 12):
    """Gauss nodes on [edges[0], edges[-1]] with sub-panels no longer than
    pi/(4 x_max), aligned with the given edges."""
    edges = np.asarray(edges, dtype=float)
    width = math.pi / (4.0 * max(x_max, 1e-300))
    fine = [edges[:1]]
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((b - a) / width)))
        fine.append(np.linspace(a, b, m + 1)[1:])
    return gauss_panels(np.concatenate(fine), order)


def sine_transform(func, edges, x, order: int = 12, chunk: int = 256):
    """sqrt(2/pi)/x * \\int r func(r) sin(r x) dr over [edges[0], edges[-1]]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise ValueError("radial inverse transform needs x > 0")
    r, w = oscillatory_nodes(edges, float(x.max()), order)
    rw = r * np.asarray(func(r), dtype=float) * w
    out = np.empty_like(x)
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        out[s:s + chunk] = np.sin(np.outer(xs, r)) @ rw
    return RADIAL_PREFACTOR * out / x


def radial_inverse_fourier(bhat: RadialProfile, x):
    """b(x) = sqrt(2/pi)/x \\int_0^R r b^(r) sin(r x) dr for a profile on [0, R].

    Sub-panels follow both the profile's panel edges and the oscillation
    wavelength (length at most pi/(4x)).
    """
    xa = np.asarray(x, dtype=float)
    out = sine_transform(bhat, bhat.grid.edges, xa.ravel())
    return out.reshape(xa.shape) if xa.ndim else float(out[0])


def radial_forward_fourier(f, k, x_max: float, edges=None, order: int = 12):
    """f^(k) = sqrt(2/pi)/k \\int_0^{x_max} x f(x) sin(k x) dx for a callable f."""
    if edges is None:
        edges = [0.0, x_max]
    return sine_transform(f, edges, k, order)


_D1 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D2 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0


def _one_sided(fn, r0, h, direction, deriv):
    stencil = _D1 if deriv == 1 else _D2
    pts = r0 + direction * h * np.arange(len(stencil))
    val = float(np.dot(stencil, fn(pts))) / h**deriv
    return val * direction if deriv == 1 else val


@dataclass(frozen=True)
class DecayCoefficients:
    """Ingredients of the large-|x| representation of b = inverse transform of b^.

    With g = r b^ and R the support radius, integration by parts gives

      x^4 b(x) sqrt(pi/2) = -g(R) x^2 cos(Rx) + g'(R) x sin(Rx) + g''(R) cos(Rx)
                            - g''(0) - \\int_0^R g'''(r) cos(rx) dr.

    ``endpoint_curvature`` = R b^''(R) and ``origin_slope`` = 2 b^'(0) are the
    two constants that survive when b^(R) = b^'(R) = 0; the boundary terms
    carry the general case.
    """

    endpoint_curvature: float
    origin_slope: float
    third_derivative: RadialProfile
    boundary_value: float
    boundary_slope: float
    boundary_curvature: float
    third_derivative_l1: float

    def __iter__(self):
        yield self.endpoint_curvature
        yield self.origin_slope
        yield self.third_derivative

    def envelope(self, x):
        """Upper bound for x^4 |b(x)|."""
        x = np.asarray(x, dtype=float)
        return RADIAL_PREFACTOR * (
            abs(self.boundary_value) * x * x
            + abs(self.boundary_slope) * x
            + abs(self.boundary_curvature)
            + abs(self.origin_slope)
            + self.third_derivative_l1
        )


def decay_coefficient(bhat: RadialProfile, h: float | None = None, noise_tol: float = 1e-4) -> DecayCoefficients:
    """Endpoint derivatives of b^ plus the (r b^)''' profile, for the |x|^-4
    decay representation.

    Panel-rule profiles are differentiated exactly. Cubic-spline profiles use
    one-sided 4th-order differences, and each finite difference is repeated with step h/2; disagreement above
    ``noise_tol`` (relative to the profile scale) raises QuadratureError.
    """
    R = bhat.R
    h = R / 200.0 if h is None else h
    scale = float(np.max(np.abs(bhat.values))) or 1.0

    def stable(r0, direction, deriv):
        if bhat.rule == "panel":
            # piecewise polynomials differentiate exactly
            return float(bhat(r0, deriv))
        a = _one_sided(bhat, r0, h, direction, deriv)
        b = _one_sided(bhat, r0, 0.5 * h, direction, deriv)
        ref = abs(b) + scale / R**deriv
        if abs(a - b) > noise_tol * ref:
            raise QuadratureError(
                f"derivative estimate of order {deriv} at r={r0} is noise-dominated ({a:.6g} vs {b:.6g})"
            )
        return b

    d1_0 = stable(0.0, +1, 1)
    d1_R = stable(R, -1, 1)
    d2_R = stable(R, -1, 2)
    b_R = float(bhat(R))

    nodes = bhat.grid.nodes
    third = bhat.with_values(3.0 * bhat(nodes, 2) + nodes * bhat(nodes, 3))
    fine_r, fine_w = gauss_panels(np.linspace(0.0, R, 8 * bhat.grid.panels + 1), 16)
    l1 = float(np.dot(fine_w, np.abs(3.0 * bhat(fine_r, 2) + fine_r * bhat(fine_r, 3))))
    return DecayCoefficients(
        endpoint_curvature=R * d2_R,
        origin_slope=2.0 * d1_0,
        third_derivative=third,
        boundary_value=R * b_R,
        boundary_slope=b_R + R * d1_R,
        boundary_curvature=2.0 * d1_R + R * d2_R,
        third_derivative_l1=l1,
    )


def decay_bound_ratio(bhat: RadialProfile, coeffs: DecayCoefficients, x) -> np.ndarray:
    """x^4 |b(x)| divided by the envelope; values <= 1 confirm the bound."""
    x = np.asarray(x, dtype=float)
    return x**4 * np.abs(radial_inverse_fourier(bhat, x)) / coeffs.envelope(x)
