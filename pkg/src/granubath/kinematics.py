"""Binary collision rules for inelastic hard spheres with constant restitution.

Velocities are numpy arrays of shape (N,) or batches (..., N) with N >= 2.
A collision between v and v_* with impact direction sigma on the unit sphere
and restitution coefficient alpha in [0, 1] maps the pair to

    v'  = w/2 + u'/2,   v'_* = w/2 - u'/2,
    w   = v + v_*,      u'   = ((1-alpha)/2) u + ((1+alpha)/2) |u| sigma,

which conserves momentum exactly and dissipates kinetic energy by
-((1-alpha^2)/4) (1 - uhat.sigma) |u|^2.  The angular cross-section b(x),
x = uhat.sigma, weights the impact-direction distribution; its sphere
integrals (total rate b0, momentum-transfer b1, L1 norm b2) feed both the
collision-rate majorant of the particle solver and every closed-form
prediction of the analytics module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import adaptive_gauss_legendre, sphere_area

UNIT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Cross-sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossSection:
    """Angular cross-section b(x) on x in [-1, 1].

    kind is one of:
      * "constant":  b(x) = b0_prime
      * "power-law": b(x) = b0_prime * (1-x)^(-(dim-3)/2), the hard-sphere
        form; bounded (hence usable for sampling) only in dimension 3
      * "tabulated": piecewise-linear interpolation of (grid, values);
        linear interpolation preserves the min/max bounds used by the
        rejection sampler

    bounds = (b_min, b_max) over [-1, 1], computed at construction.
    """

    kind: str
    b0_prime: float = 1.0
    dim: int = 3
    grid: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    bounds: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.kind not in ("constant", "power-law", "tabulated"):
            raise ValueError(f"unknown cross-section kind {self.kind!r}")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g.size < 2:
                raise ValueError("tabulated cross-section needs matching 1-d grid/values")
            if not (np.all(np.diff(g) > 0) and g[0] >= -1.0 and g[-1] <= 1.0):
                raise ValueError("tabulated grid must be strictly ascending within [-1, 1]")
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "bounds", (float(v.min()), float(v.max())))
        else:
            if self.b0_prime <= 0:
                raise ValueError("b0_prime must be positive")
            probe = self(np.linspace(-1.0, 1.0, 4097))
            object.__setattr__(self, "bounds", (float(probe.min()), float(probe.max())))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.b0_prime)
        if self.kind == "power-law":
            expo = -(self.dim - 3) / 2.0
            # clip away the x=1 endpoint so dim>3 evaluates finitely;
            # validation flags the unbounded case
            return self.b0_prime * np.maximum(1.0 - x, 1e-300) ** expo
        return np.interp(x, self.grid, self.values)

    @property
    def identifier(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.b0_prime:g}"
        if self.kind == "power-law":
            return f"power-law:{self.b0_prime:g}:dim{self.dim}"
        return f"tabulated:{len(self.grid)}pts"


def load_cross_section_table(path) -> CrossSection:
    """Read a tabulated cross-section from a plain-text file.

    Format: one "x value" pair per line, x ascending in [-1, 1]; blank
    lines and lines starting with '#' are skipped.
    """
    xs, vals = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x value', got {line!r}")
            xs.append(float(parts[0]))
            vals.append(float(parts[1]))
    return CrossSection(kind="tabulated", grid=np.array(xs), values=np.array(vals))


@dataclass(frozen=True)
class KernelConstants:
    """Sphere integrals of the angular cross-section.

    b0: total angular rate, integral of b over S^{N-1}.
    b1: momentum-transfer constant, (1/8) integral of (1-x) b over S^{N-1};
        controls the kinetic-energy dissipation rate.
    b2: L1 norm of b over the sphere (equals b0 for positive b).
    """

    b0: float
    b1: float
    b2: float

    def __post_init__(self):
        if not (self.b0 > 0 and self.b1 > 0 and self.b2 > 0):
            raise ValueError("kernel constants must be positive")


def kernel_constants(cs: CrossSection, dim: int, tol: float = 1e-10) -> KernelConstants:
    """Compute (b0, b1, b2) by adaptive quadrature on the polar angle.

    The sphere integral of a function of x = sigma_1 reduces to
    |S^{N-2}| * int_0^pi f(cos phi) sin^{N-2}(phi) dphi; the polar-angle
    form keeps the integrand smooth in every dimension >= 2 (in the
    x variable the N=2 weight has endpoint singularities).
    """
    ring = sphere_area(dim - 1)

    def on_sphere(f):
        def integrand(phi):
            return f(np.cos(phi)) * np.sin(phi) ** (dim - 2)
        return ring * adaptive_gauss_legendre(integrand, 0.0, math.pi, tol=tol)

    b0 = on_sphere(lambda x: cs(x))
    b1 = 0.125 * on_sphere(lambda x: (1.0 - x) * cs(x))
    b2 = on_sphere(lambda x: np.abs(cs(x)))
    return KernelConstants(b0=b0, b1=b1, b2=b2)


# ---------------------------------------------------------------------------
# Collision kinematics
# ---------------------------------------------------------------------------

def _check_pair(v: np.ndarray, v_star: np.ndarray, sigma: np.ndarray) -> None:
    if v.shape != v_star.shape or v.shape != sigma.shape:
        raise ValueError(
            f"dimension mismatch: v {v.shape}, v_star {v_star.shape}, sigma {sigma.shape}")
    norms = np.linalg.norm(sigma, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"sigma is not a unit vector (|norm-1| = {worst:.3e})")


def post_collision(v, v_star, sigma, alpha: float, check: bool = True):
    """Post-collisional pair (v', v'_*) for restitution coefficient alpha.

    Accepts single velocities of shape (N,) or batches (..., N); sigma must
    be unit length within 1e-12.  Momentum v' + v'_* equals v + v_* up to
    floating-point rounding for every alpha.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if check:
        _check_pair(v, v_star, sigma)
    u = v - v_star
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    u_post = 0.5 * (1.0 - alpha) * u + 0.5 * (1.0 + alpha) * speed * sigma
    half_w = 0.5 * (v + v_star)
    return half_w + 0.5 * u_post, half_w - 0.5 * u_post


def energy_loss(v, v_star, sigma, alpha: float, check: bool = True):
    """Kinetic-energy change |v'|^2 + |v'_*|^2 - |v|^2 - |v_*|^2 of one collision.

    Closed form -((1-alpha^2)/4) (1 - uhat.sigma) |u|^2; always <= 0.
    A zero relative velocity makes the collision a no-op, so the loss is 0.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if check:
        _check_pair(v, v_star, sigma)
    u = v - v_star
    speed = np.linalg.norm(u, axis=-1)
    cosx = np.divide(np.sum(u * sigma, axis=-1), speed,
                     out=np.ones_like(speed), where=speed > 0)
    return -0.25 * (1.0 - alpha * alpha) * (1.0 - cosx) * speed * speed


def relative_speed_factor(alpha: float, cos_x):
    """|u'|^2 / |u|^2 as a function of uhat.sigma (kinematics identity)."""
    a = 0.5 * (1.0 - alpha)
    c = 0.5 * (1.0 + alpha)
    return a * a + c * c + 2.0 * a * c * np.asarray(cos_x, dtype=float)


# ---------------------------------------------------------------------------
# Impact-direction sampling
# ---------------------------------------------------------------------------

def uniform_sphere(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n points uniform on S^{dim-1} (normalized Gaussians)."""
    pts = rng.standard_normal((n, dim))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def sample_sigma_batch(cs: CrossSection, u_hat: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Impact directions with density proportional to b(uhat.sigma).

    u_hat: (n, N) unit vectors.  Uniform-sphere proposals are accepted with
    probability b(x)/b_max, so the expected acceptance is at least
    b_min/b_max and the loop terminates almost surely.  Constant b skips
    the rejection test entirely.
    """
    u_hat = np.atleast_2d(np.asarray(u_hat, dtype=float))
    n, dim = u_hat.shape
    out = uniform_sphere(rng, n, dim)
    if cs.kind == "constant":
        return out
    b_max = cs.bounds[1]
    pending = np.arange(n)
    while pending.size:
        x = np.sum(out[pending] * u_hat[pending], axis=1)
        accept = rng.random(pending.size) * b_max <= cs(x)
        pending = pending[~accept]
        if pending.size:
            out[pending] = uniform_sphere(rng, pending.size, dim)
    return out


def sample_sigma(cs: CrossSection, u_hat: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Single impact direction distributed like b(uhat.sigma) d sigma."""
    u_hat = np.asarray(u_hat, dtype=float)
    if abs(np.linalg.norm(u_hat) - 1.0) > UNIT_TOL:
        raise ValueError("u_hat must be a unit vector")
    return sample_sigma_batch(cs, u_hat[None, :], rng)[0]


def angular_density(cs: CrossSection, x, dim: int):
    """Unnormalized marginal density of x = uhat.sigma under b-weighted sampling.

    Equals b(x) (1-x^2)^{(N-3)/2}, the sphere surface measure times the
    cross-section weight; used as the oracle for sampler tests.
    """
    x = np.asarray(x, dtype=float)
    return cs(x) * np.maximum(1.0 - x * x, 0.0) ** ((dim - 3) / 2.0)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    """Grid check of the cross-section hypotheses (positivity bounds,
    monotonicity, discrete convexity); violations are entries, not faults."""

    grid_size: int
    passed: bool
    violations: list[dict]

    def to_json(self) -> str:
        return json.dumps(
            {"grid_size": self.grid_size, "passed": self.passed,
             "violations": self.violations}, indent=2)


def validate_cross_section(cs: CrossSection, grid_size: int = 257,
                           tol: float = 1e-12) -> ValidationReport:
    """Check 0 < b_min <= b <= b_max, b non-decreasing, and b convex
    on a uniform grid over [-1, 1].  Every violated grid point is listed."""
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    x = np.linspace(-1.0, 1.0, grid_size)
    b = cs(x)
    lo, hi = cs.bounds
    violations: list[dict] = []

    def flag(kind, idx, value):
        violations.append({"kind": kind, "index": int(idx),
                           "x": float(x[idx]), "value": float(value)})

    for i in np.nonzero(~((b > 0) & (b >= lo - tol) & (b <= hi + tol)))[0]:
        flag("bounds", i, b[i])
    diffs = np.diff(b)
    for i in np.nonzero(diffs < -tol * max(1.0, hi))[0]:
        flag("monotonicity", i + 1, b[i + 1])
    second = b[2:] - 2.0 * b[1:-1] + b[:-2]
    for i in np.nonzero(second < -tol * max(1.0, hi))[0]:
        flag("convexity", i + 1, b[i + 1])

    return ValidationReport(grid_size=grid_size, passed=not violations,
                            violations=violations)
