"""Closed-form predictions for the heat-bath-driven inelastic gas.

Everything here is derived for the spatially homogeneous model

    df/dt = Q_alpha(f, f) + tau * Laplacian_v f,

where Q_alpha is the inelastic hard-sphere collision operator with constant
restitution alpha and the Laplacian models Brownian velocity forcing.  The
velocity-squared balance of that equation,

    (1 - alpha^2) * D_E(f) = 2 N rho tau,       D_E(f) = b1 * II f f_* |u|^3,

fixes the steady temperature; with the diffusion strength tied to the
inelasticity (tau = rho (1 - alpha)) the steady state tends to a Maxwellian
with the elastic-limit temperature computed here, and the energy mode
relaxes with a spectral-gap rate linear in (1 - alpha).

Closed forms are paired with quadrature evaluators so each can serve as the
other's cross-check in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import NumericsError
from .kinematics import KernelConstants
from .quadrature import pair_speed_cubed_integral, radial_integral

# Radial quadrature window: Gaussian-weighted integrands are below 1e-14
# of their peak beyond 12 thermal speeds.
RADIAL_CUTOFF = 12.0
RADIAL_ORDER = 256


@dataclass(frozen=True)
class MaxwellianParams:
    """Mass rho, mean velocity u, and per-component temperature theta."""

    rho: float
    u: np.ndarray
    theta: float

    def __post_init__(self):
        if self.rho <= 0 or self.theta <= 0:
            raise ValueError("Maxwellian needs rho > 0 and theta > 0")
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))

    @property
    def dim(self) -> int:
        return self.u.size


def maxwellian_pdf(p: MaxwellianParams, v) -> np.ndarray:
    """Gaussian velocity density rho / (2 pi theta)^{N/2} * exp(-|v-u|^2 / 2 theta)."""
    v = np.asarray(v, dtype=float)
    sq = np.sum((v - p.u) ** 2, axis=-1)
    norm = p.rho / (2.0 * math.pi * p.theta) ** (p.dim / 2.0)
    return norm * np.exp(-0.5 * sq / p.theta)


def maxwellian_radial(rho: float, theta: float, dim: int):
    """Isotropic profile r -> density of the centered Maxwellian at speed r."""
    norm = rho / (2.0 * math.pi * theta) ** (dim / 2.0)
    return lambda r: norm * np.exp(-0.5 * np.asarray(r) ** 2 / theta)


def gaussian_moment(dim: int, k: float) -> float:
    """E|v|^k for the unit Maxwellian: 2^{k/2} Gamma((N+k)/2) / Gamma(N/2)."""
    if k < 0 or not math.isfinite(k):
        raise ValueError("moment order must be finite and non-negative")
    return 2.0 ** (k / 2.0) * math.gamma((dim + k) / 2.0) / math.gamma(dim / 2.0)


def gaussian_moment_table(dim: int, orders=(1, 2, 3, 4, 6, 8)) -> dict[float, float]:
    """Speed moments E|v|^k of the unit Maxwellian for a set of orders."""
    return {float(k): gaussian_moment(dim, k) for k in orders}


def mean_relative_speed_cubed(dim: int) -> float:
    """II M M_* |u|^3 for two independent unit Maxwellians.

    The relative velocity of two unit Gaussians is Gaussian with variance 2,
    so the double integral is 2^{3/2} times the single-particle cube moment.
    """
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    return 2.0 ** 1.5 * gaussian_moment(dim, 3)


def maxwellian_dissipation(theta: float, rho: float, b1: float, dim: int) -> float:
    """Energy-dissipation functional D_E of a centered Maxwellian.

    D_E(M) = b1 rho^2 theta^{3/2} 2^{3/2} m3 with m3 the unit-Maxwellian
    cube moment; scales like theta^{3/2} and rho^2.
    """
    return b1 * rho * rho * theta ** 1.5 * mean_relative_speed_cubed(dim)


def elastic_limit_temperature(b1: float, dim: int) -> float:
    """Steady temperature in the elastic limit of the rescaled model.

    Root of N rho^2 = D_E(M_theta); evaluates to
    (1/2) N^{2/3} b1^{-2/3} m3^{-2/3} and is independent of the mass.
    """
    if b1 <= 0:
        raise ValueError("b1 must be positive")
    return 0.5 * dim ** (2.0 / 3.0) * (b1 * gaussian_moment(dim, 3)) ** (-2.0 / 3.0)


def steady_temperature(alpha: float, b1: float, dim: int) -> float:
    """Maxwellian-closure steady temperature at restitution alpha.

    Root of (1 + alpha) D_E(M_theta) = 2 N rho^2; mass-independent, equal to
    the elastic-limit temperature at alpha = 1 and decreasing in alpha.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    denom = (1.0 + alpha) * 2.0 ** 1.5 * b1 * gaussian_moment(dim, 3)
    return (2.0 * dim / denom) ** (2.0 / 3.0)


def energy_balance(theta: float, rho: float, dim: int, b1: float) -> float:
    """Stationary energy-balance function k1 - k2 theta^{3/2}.

    k1 = 2 rho^2 N is the heat-bath input at unit diffusion scaling and
    k2 theta^{3/2} the Maxwellian-closure dissipation.  Strictly concave in
    theta with a single positive root.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    k1 = 2.0 * rho * rho * dim
    k2 = rho * rho * b1 * mean_relative_speed_cubed(dim)
    return k1 - k2 * theta ** 1.5


def energy_balance_root(rho: float, dim: int, b1: float, tol: float = 1e-12) -> float:
    """Unique positive zero of the balance function, located by bisection.

    Note this root sits a factor 2^{2/3} above the elastic-limit
    temperature: the balance constant k1 carries the full heat-bath input
    while the elastic-limit temperature is defined through the half-rate
    balance N rho^2 = D_E.  Both are kept; tests assert the exact ratio.
    """
    if b1 <= 0 or rho <= 0:
        raise ValueError("need b1 > 0 and rho > 0")
    k1 = 2.0 * rho * rho * dim
    k2 = rho * rho * b1 * mean_relative_speed_cubed(dim)
    scale = (k1 / k2) ** (2.0 / 3.0)
    lo, hi = 1e-8 * scale, 4.0 * scale
    f = lambda t: energy_balance(t, rho, dim, b1)
    if not f(lo) > 0 > f(hi):
        raise NumericsError("energy-balance root bracket does not change sign",
                            diagnostics={"lo": lo, "hi": hi,
                                         "f_lo": f(lo), "f_hi": f(hi)})
    return float(optimize.bisect(f, lo, hi, xtol=tol * scale))


def energy_bounds(alpha: float, rho: float, kc: KernelConstants,
                  dim: int) -> tuple[float, float]:
    """A-priori lower/upper bounds on the steady-state energy.

    upper: rho (2N / b1)^{2/3} from Jensen + Hoelder on the dissipation;
    lower: rho (alpha^2 N^2 / (sqrt(2) b2))^{2/3} from the entropy argument.
    """
    if not 0.0 < alpha <= 1.0 or rho <= 0:
        raise ValueError("need alpha in (0, 1] and rho > 0")
    upper = rho * (2.0 * dim / kc.b1) ** (2.0 / 3.0)
    lower = rho * (alpha * alpha * dim * dim / (math.sqrt(2.0) * kc.b2)) ** (2.0 / 3.0)
    return lower, upper


def energy_relaxation_rate(alpha: float, rho: float, theta_limit: float) -> float:
    """First-order spectral-gap prediction -3 rho (1 - alpha) / theta_limit.

    theta_limit is the elastic-limit steady temperature; the rate vanishes
    at alpha = 1 and is linear in (1 - alpha).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    return -3.0 * rho * (1.0 - alpha) / theta_limit


def energy_relaxation_rate_unscaled(alpha: float, rho: float) -> float:
    """Alternative first-order rate -3 rho (1 - alpha), without the
    1/theta factor; kept so simulation fits can arbitrate between the two."""
    return -3.0 * rho * (1.0 - alpha)


# ---------------------------------------------------------------------------
# Energy eigenfunction
# ---------------------------------------------------------------------------

def energy_eigenfunction_normalizer(rho: float, theta: float, dim: int) -> float:
    """Constant c0 making the energy eigenfunction have unit L1_2 norm.

    The eigenfunction is c0 (|v|^2 - N theta) M_{rho,0,theta}; c0 solves
    int |phi(v)| (1 + |v|^2) dv = 1 by radial quadrature.  The integrand has
    a kink where |v|^2 = N theta, so the integral is split there to keep
    Gauss-Legendre at spectral accuracy.
    """
    prof = maxwellian_radial(rho, theta, dim)

    def integrand(r):
        return np.abs(r * r - dim * theta) * (1.0 + r * r) * prof(r)

    kink = math.sqrt(dim * theta)
    r_max = RADIAL_CUTOFF * math.sqrt(theta)
    norm = radial_integral(integrand, dim, kink, order=RADIAL_ORDER) + \
        radial_integral(integrand, dim, r_max, order=RADIAL_ORDER, r_min=kink)
    if not (norm > 0 and math.isfinite(norm)):
        raise NumericsError("eigenfunction normalizer quadrature failed",
                            diagnostics={"norm": norm})
    return 1.0 / norm


def energy_eigenfunction(v, rho: float, theta: float, c0: float | None = None):
    """Slow eigenmode c0 (|v|^2 - N theta) M_{rho,0,theta}(v) of the
    linearized dynamics near the elastic limit."""
    v = np.asarray(v, dtype=float)
    dim = v.shape[-1]
    if c0 is None:
        c0 = energy_eigenfunction_normalizer(rho, theta, dim)
    params = MaxwellianParams(rho=rho, u=np.zeros(dim), theta=theta)
    sq = np.sum(v * v, axis=-1)
    return c0 * (sq - dim * theta) * maxwellian_pdf(params, v)


def eigenfunction_energy(rho: float, theta: float, dim: int,
                         c0: float | None = None) -> float:
    """int phi |v|^2 dv by radial quadrature; closed form 2 N c0 rho theta^2."""
    if c0 is None:
        c0 = energy_eigenfunction_normalizer(rho, theta, dim)
    prof = maxwellian_radial(rho, theta, dim)

    def integrand(r):
        return c0 * (r * r - dim * theta) * r * r * prof(r)

    return radial_integral(integrand, dim, RADIAL_CUTOFF * math.sqrt(theta),
                           order=RADIAL_ORDER)


def eigenfunction_dissipation_pairing(rho: float, theta: float, dim: int,
                                      b1: float, c0: float | None = None) -> float:
    """b1 * II M(v) phi(v_*) |u|^3 by nested radial quadrature.

    Pairs the steady Maxwellian with the energy eigenfunction inside the
    dissipation functional; closed form (3/2) N c0 rho^2 theta.
    """
    if c0 is None:
        c0 = energy_eigenfunction_normalizer(rho, theta, dim)
    prof = maxwellian_radial(rho, theta, dim)
    phi = lambda r: c0 * (np.asarray(r) ** 2 - dim * theta) * prof(r)
    val = pair_speed_cubed_integral(prof, phi, dim,
                                    RADIAL_CUTOFF * math.sqrt(theta))
    return b1 * val


# ---------------------------------------------------------------------------
# Prediction bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyPrediction:
    """All closed-form predictions for one (cross-section, dimension, mass).

    Bundles the elastic-limit temperature, the alpha-dependent steady
    temperature and relaxation rate, the eigenfunction normalizer, and the
    a-priori energy bounds, so simulation harnesses carry one object.
    """

    kc: KernelConstants
    dim: int
    rho: float
    theta_limit: float
    c0: float

    @classmethod
    def from_kernel(cls, kc: KernelConstants, dim: int, rho: float) -> "SteadyPrediction":
        theta_limit = elastic_limit_temperature(kc.b1, dim)
        c0 = energy_eigenfunction_normalizer(rho, theta_limit, dim)
        return cls(kc=kc, dim=dim, rho=rho, theta_limit=theta_limit, c0=c0)

    def steady_temperature(self, alpha: float) -> float:
        return steady_temperature(alpha, self.kc.b1, self.dim)

    def steady_energy(self, alpha: float) -> float:
        return self.rho * self.dim * self.steady_temperature(alpha)

    def relaxation_rate(self, alpha: float) -> float:
        return energy_relaxation_rate(alpha, self.rho, self.theta_limit)

    def relaxation_rate_unscaled(self, alpha: float) -> float:
        return energy_relaxation_rate_unscaled(alpha, self.rho)

    def energy_bounds(self, alpha: float) -> tuple[float, float]:
        return energy_bounds(alpha, self.rho, self.kc, self.dim)

    def export_table(self, alphas, cross_section_id: str = "") -> dict:
        """JSON-ready prediction table keyed by (alpha, rho, N, cross-section)."""
        rows = []
        for alpha in alphas:
            lower, upper = self.energy_bounds(alpha)
            rows.append({
                "alpha": float(alpha),
                "theta_steady": self.steady_temperature(alpha),
                "energy_steady": self.steady_energy(alpha),
                "relaxation_rate": self.relaxation_rate(alpha),
                "relaxation_rate_unscaled": self.relaxation_rate_unscaled(alpha),
                "energy_lower": lower,
                "energy_upper": upper,
            })
        return {
            "cross_section": cross_section_id,
            "dim": self.dim,
            "rho": self.rho,
            "b0": self.kc.b0, "b1": self.kc.b1, "b2": self.kc.b2,
            "theta_limit": self.theta_limit,
            "c0": self.c0,
            "rows": rows,
        }
