"""Gauss-Legendre quadrature helpers for sphere and velocity-space integrals.

All integrands in this package are smooth (Gaussian-weighted polynomials or
bounded angular kernels), so fixed-order Gauss-Legendre panels with doubling
refinement converge fast.  The radial rules integrate isotropic functions of
velocity over R^N by reducing to the speed variable with the shell factor
|S^{N-1}| r^{N-1}.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NumericsError

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = leggauss(order)
    return _GL_CACHE[order]


def sphere_area(n: int) -> float:
    """Surface area |S^{n-1}| of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def gauss_legendre(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                   order: int = 64, panels: int = 1) -> float:
    """Composite Gauss-Legendre integral of a vectorized callable on [a, b]."""
    x, w = _gl_nodes(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return float(np.sum(vals @ w * half))


def adaptive_gauss_legendre(f: Callable[[np.ndarray], np.ndarray], a: float,
                            b: float, tol: float = 1e-10,
                            order: int = 32, max_doublings: int = 12) -> float:
    """Panel-doubling Gauss-Legendre until two refinements agree within tol.

    The error estimate is the difference between successive refinements
    (absolute).  Raises NumericsError with the achieved error when the
    doubling budget is exhausted.
    """
    prev = gauss_legendre(f, a, b, order=order, panels=1)
    panels = 2
    for _ in range(max_doublings):
        cur = gauss_legendre(f, a, b, order=order, panels=panels)
        err = abs(cur - prev)
        if err <= tol:
            return cur
        prev = cur
        panels *= 2
    raise NumericsError(
        f"quadrature did not converge to {tol:g} on [{a}, {b}]",
        diagnostics={"achieved_error": err, "panels": panels // 2},
    )


def radial_integral(f: Callable[[np.ndarray], np.ndarray], dim: int,
                    r_max: float, order: int = 256,
                    r_min: float = 0.0) -> float:
    """Integral over R^dim of an isotropic integrand f(|v|).

    Gauss-Legendre on [r_min, r_max]; callers choose r_max large enough
    that the tail is negligible (12*sqrt(theta) for Gaussian-weighted
    factors) and may split at integrand kinks via r_min.
    """
    x, w = _gl_nodes(order)
    half = 0.5 * (r_max - r_min)
    r = r_min + half * (x + 1.0)
    wr = half * w
    return sphere_area(dim) * float(np.sum(f(r) * r ** (dim - 1) * wr))


def pair_speed_cubed_integral(f: Callable[[np.ndarray], np.ndarray],
                              g: Callable[[np.ndarray], np.ndarray],
                              dim: int, r_max: float, order: int = 200,
                              angular_order: int = 64) -> float:
    """Double velocity integral of f(|v|) g(|v_*|) |v - v_*|^3.

    Reduces the 2N-dimensional integral to (r, s, angle-between) with the
    two shell factors and the (N-2)-sphere measure sin^{N-2} of the angle.
    Tensorized Gauss-Legendre on all three axes.
    """
    x, w = _gl_nodes(order)
    r = 0.5 * r_max * (x + 1.0)
    wr = 0.5 * r_max * w
    xg, wg = _gl_nodes(angular_order)
    ang = 0.5 * math.pi * (xg + 1.0)
    wang = 0.5 * math.pi * wg

    rr = r[:, None, None]
    ss = r[None, :, None]
    gg = ang[None, None, :]
    kernel = (rr * rr + ss * ss - 2.0 * rr * ss * np.cos(gg)) ** 1.5
    angular = (kernel * np.sin(gg) ** (dim - 2)) @ wang

    fv = f(r) * r ** (dim - 1) * wr
    gv = g(r) * r ** (dim - 1) * wr
    return sphere_area(dim) * sphere_area(dim - 1) * float(fv @ angular @ gv)
