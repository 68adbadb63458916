"""Estimators over particle ensembles: moments, dissipation, entropy, norms.

All estimators are pure functions of (ensemble, parameters): repeatable,
invariant under particle relabeling, and rotation-invariant for the
isotropic quantities.  Distribution-level functionals (relative entropy,
weighted L1 distances) go through an isotropic radial histogram; the
steady state and the Maxwellian references are isotropic, and anisotropy
is monitored separately through the momentum and a quadrupole diagnostic.

Histogram entropies are computed on binned masses (including the overflow
bin), so the discrete Csiszar-Kullback-Pinsker inequality
||f - M||_1^2 <= 2 rho H(f|M) holds exactly snapshot by snapshot.  The
binning bias of the entropy estimator is bounded by bins / n_particles,
exposed as `entropy_bias_floor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .analytics import MaxwellianParams, SteadyPrediction
from .engine import SimState, VelocityEnsemble
from .kinematics import KernelConstants
from .quadrature import sphere_area

MOMENT_ORDERS = (1.0, 1.5, 2.0, 3.0, 4.0)  # m_k = int f |v|^{2k}


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentSet:
    """Weighted moments of one ensemble.

    moments maps k to m_k = weight * sum |v_i|^{2k} for
    2k in {2, 3, 4, 6, 8}; theta = m_1 / (rho * dim).
    """

    rho: float
    momentum: np.ndarray
    moments: dict[float, float]
    theta: float
    degenerate: bool

    @property
    def energy(self) -> float:
        return self.moments[1.0]


def moments(ens: VelocityEnsemble) -> MomentSet:
    """Mass, momentum, and speed moments of the ensemble."""
    speeds_sq = np.sum(ens.velocities ** 2, axis=1)
    table = {k: ens.weight * float(np.sum(speeds_sq ** k)) for k in MOMENT_ORDERS}
    theta = table[1.0] / (ens.rho * ens.dim)
    return MomentSet(rho=ens.rho, momentum=ens.momentum(), moments=table,
                     theta=theta, degenerate=not theta > 0.0)


def maxwellian_fit(ens: VelocityEnsemble) -> MaxwellianParams:
    """Maxwellian with the ensemble's mass and central temperature.

    Mean velocity is dropped (the solver keeps it at zero); temperature is
    taken from the variance about the mean so a residual drift never
    inflates it.
    """
    mean = ens.velocities.mean(axis=0)
    central = ens.velocities - mean
    theta = float(np.sum(central ** 2)) / (ens.n_particles * ens.dim)
    return MaxwellianParams(rho=ens.rho, u=np.zeros(ens.dim), theta=theta)


def quadrupole(ens: VelocityEnsemble) -> float:
    """Anisotropy diagnostic weight * sum (v_x^2 - v_y^2); zero in law
    for isotropic ensembles."""
    v = ens.velocities
    return ens.weight * float(np.sum(v[:, 0] ** 2 - v[:, 1] ** 2))


# ---------------------------------------------------------------------------
# Dissipation functional
# ---------------------------------------------------------------------------

def dissipation_estimate(ens: VelocityEnsemble, b1: float,
                         pair_budget: int = 200_000,
                         seed: int = 0,
                         exhaustive: bool | None = None) -> tuple[float, float]:
    """Pair estimator of the dissipation functional b1 * II f f_* |u|^3.

    Returns (estimate, stderr).  The estimator is b1 rho^2 times the mean
    of |v_i - v_j|^3 over distinct pairs: exhaustive over all n(n-1)/2
    pairs when n <= 4096 (override with the exhaustive flag), otherwise
    over pair_budget uniformly sampled distinct pairs.  The fixed internal
    seed keeps the estimator a pure function of its arguments.
    """
    if pair_budget < 1:
        raise ValueError("pair_budget must be >= 1")
    v = ens.velocities
    n = ens.n_particles
    if n < 2:
        raise ValueError("need at least two particles")
    if exhaustive is None:
        exhaustive = n <= 4096
    if exhaustive:
        from scipy.spatial.distance import pdist
        cubes = pdist(v) ** 3
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, pair_budget)
        jj = rng.integers(0, n - 1, pair_budget)
        jj = jj + (jj >= ii)
        diff = v[ii] - v[jj]
        cubes = np.sum(diff * diff, axis=1) ** 1.5
    scale = b1 * ens.rho * ens.rho
    est = scale * float(cubes.mean())
    err = scale * float(cubes.std(ddof=1)) / math.sqrt(cubes.size) if cubes.size > 1 else 0.0
    return est, err


def stationarity_residual(ens: VelocityEnsemble, alpha: float, tau: float,
                          kc: KernelConstants, pair_budget: int = 200_000,
                          seed: int = 0) -> float:
    """Relative defect of the stationary energy balance.

    (1 - alpha^2) D_E(f) = 2 N rho tau at the steady state, so the return
    value (1-alpha^2) D_E / (2 N rho tau) - 1 fluctuates around zero once
    the run is stationary.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    de, _ = dissipation_estimate(ens, kc.b1, pair_budget=pair_budget, seed=seed)
    return (1.0 - alpha * alpha) * de / (2.0 * ens.dim * ens.rho * tau) - 1.0


# ---------------------------------------------------------------------------
# Radial histogram and histogram functionals
# ---------------------------------------------------------------------------

@dataclass
class RadialHistogram:
    """Isotropic speed histogram with shell-volume normalized densities.

    density[b] estimates the velocity-space density of f on the shell
    [edges[b], edges[b+1]]; masses (density * shell volume) plus the
    overflow mass sum to the ensemble mass exactly.
    """

    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    shell_volumes: np.ndarray
    overflow_mass: float
    rho: float
    dim: int
    n_particles: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.shell_volumes

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    def mass_total(self) -> float:
        return float(self.masses.sum()) + self.overflow_mass


def entropy_bias_floor(hist: RadialHistogram) -> float:
    """Documented bias bound of histogram entropy estimates: bins / n."""
    return hist.counts.size / hist.n_particles


def radial_histogram(ens: VelocityEnsemble, bins: int = 64,
                     r_max: float | None = None) -> RadialHistogram:
    """Bin particle speeds into equal-width shells on [0, r_max].

    r_max defaults to 8 sqrt(theta); speeds beyond it land in the overflow
    mass so the histogram remains exhaustive.
    """
    if bins < 8:
        raise ValueError("need at least 8 bins")
    speeds = np.linalg.norm(ens.velocities, axis=1)
    if r_max is None:
        theta = ens.temperature()
        if theta <= 0:
            raise ValueError("degenerate ensemble: zero temperature")
        r_max = 8.0 * math.sqrt(theta)
    edges = np.linspace(0.0, r_max, bins + 1)
    counts, _ = np.histogram(speeds, bins=edges)
    overflow = int(np.sum(speeds >= r_max))
    volumes = sphere_area(ens.dim) * np.diff(edges ** ens.dim) / ens.dim
    density = ens.weight * counts / volumes
    return RadialHistogram(edges=edges, counts=counts, density=density,
                           shell_volumes=volumes,
                           overflow_mass=ens.weight * overflow,
                           rho=ens.rho, dim=ens.dim,
                           n_particles=ens.n_particles)


def average_histograms(hists: list[RadialHistogram]) -> RadialHistogram:
    """Mean of histograms sharing one binning; averaging over snapshots and
    replicas drives the sampling-noise floor of distance estimates down."""
    if not hists:
        raise ValueError("no histograms to average")
    h0 = hists[0]
    for h in hists[1:]:
        if h.edges.shape != h0.edges.shape or not np.allclose(h.edges, h0.edges):
            raise ValueError("histograms do not share a binning")
    counts = np.mean([h.counts for h in hists], axis=0)
    density = np.mean([h.density for h in hists], axis=0)
    overflow = float(np.mean([h.overflow_mass for h in hists]))
    n_total = int(sum(h.n_particles for h in hists))
    return RadialHistogram(edges=h0.edges.copy(), counts=counts, density=density,
                           shell_volumes=h0.shell_volumes, overflow_mass=overflow,
                           rho=h0.rho, dim=h0.dim, n_particles=n_total)


def maxwellian_shell_masses(m: MaxwellianParams, edges: np.ndarray,
                            dim: int) -> tuple[np.ndarray, float]:
    """Exact per-shell masses of a centered Maxwellian and its overflow.

    |v|^2 / theta is chi-square with dim degrees of freedom, so shell
    masses are regularized incomplete-gamma differences.
    """
    cdf = special.gammainc(dim / 2.0, 0.5 * edges ** 2 / m.theta)
    return m.rho * np.diff(cdf), m.rho * float(1.0 - cdf[-1])


def relative_entropy(hist: RadialHistogram, m: MaxwellianParams) -> float:
    """Binned relative entropy H(f | M) = sum mass_f log(mass_f / mass_M).

    Computed on per-shell masses including the overflow bin; empty f bins
    contribute zero, and bins where the Maxwellian mass underflows to zero
    while f is positive are excluded (counted via the module logger).
    Non-negative whenever the two total masses agree.
    """
    mf = np.append(hist.masses, hist.overflow_mass)
    mm_shell, mm_over = maxwellian_shell_masses(m, hist.edges, hist.dim)
    mm = np.append(mm_shell, mm_over)
    live = mf > 0
    bad = live & (mm <= 0)
    if np.any(bad):
        import logging
        logging.getLogger(__name__).warning(
            "relative_entropy: %d bins with zero Maxwellian mass excluded",
            int(bad.sum()))
        live &= ~bad
    return float(np.sum(mf[live] * np.log(mf[live] / mm[live])))


def ckp_slack(hist: RadialHistogram, m: MaxwellianParams) -> float:
    """Csiszar-Kullback-Pinsker slack 2 rho H - ||f - M||_1^2 (>= 0)."""
    h = relative_entropy(hist, m)
    l1 = weighted_l1_distance(hist, m, q=0)
    return 2.0 * hist.rho * h - l1 * l1


def weighted_l1_distance(hist: RadialHistogram, m: MaxwellianParams,
                         q: int = 0) -> float:
    """Weighted distance sum |f_b - M_b| <r_b>^q vol_b with <r> = sqrt(1+r^2).

    The overflow contribution is bounded below by the overflow-mass
    difference times <r_max>^q, so the result is a lower bound on the
    continuum weighted distance for q > 0.
    """
    if q not in (0, 1, 2, 3):
        raise ValueError("q must be one of 0, 1, 2, 3")
    mm_shell, mm_over = maxwellian_shell_masses(m, hist.edges, hist.dim)
    br = np.sqrt(1.0 + hist.centers ** 2) ** q
    val = float(np.sum(np.abs(hist.masses - mm_shell) * br))
    val += abs(hist.overflow_mass - mm_over) * math.sqrt(1.0 + hist.r_max ** 2) ** q
    return val


def lyapunov_h1(ens: VelocityEnsemble, hist: RadialHistogram,
                prediction: SteadyPrediction, alpha: float,
                steady_energy: float | None = None) -> float:
    """Near-elastic Liapunov functional H(f|M[f]) + (E - E_steady)^2.

    The steady energy defaults to the closure prediction
    rho N theta_steady(alpha); pass steady_energy to use an empirical
    long-run value instead.
    """
    if steady_energy is None:
        steady_energy = prediction.steady_energy(alpha)
    h = relative_entropy(hist, maxwellian_fit(ens))
    energy = moments(ens).energy
    return h + (energy - steady_energy) ** 2


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------

SERIES_COLUMNS = ("time", "rho", "theta", "m2", "m3", "DE_hat", "residual",
                  "H_rel", "CKP_slack", "H1", "L1q0", "L1q1", "L1q2", "L1q3")


@dataclass
class ObservableSeries:
    """Snapshot records of scalar observables plus per-snapshot histograms."""

    columns: tuple = SERIES_COLUMNS
    rows: list[tuple] = field(default_factory=list)
    histograms: list[RadialHistogram] = field(default_factory=list)
    quadrupoles: list[float] = field(default_factory=list)

    def append(self, row: tuple) -> None:
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError("snapshot times must be strictly increasing")
        self.rows.append(row)

    @property
    def times(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([r[idx] for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


class SeriesRecorder:
    """Callable recorder computing the standard observable row per snapshot.

    Histogram binning is frozen at construction (bins, r_max) so snapshots
    and replicas can be averaged bin by bin afterwards.
    """

    def __init__(self, prediction: SteadyPrediction, alpha: float, tau: float,
                 kc: KernelConstants, bins: int = 64,
                 r_max: float | None = None, pair_budget: int = 200_000,
                 steady_energy: float | None = None,
                 keep_histograms: bool = True):
        self.prediction = prediction
        self.alpha = alpha
        self.tau = tau
        self.kc = kc
        self.bins = bins
        self.r_max = r_max if r_max is not None else \
            8.0 * math.sqrt(prediction.steady_temperature(alpha))
        self.pair_budget = pair_budget
        self.steady_energy = steady_energy
        self.keep_histograms = keep_histograms
        self.series = ObservableSeries()

    def __call__(self, state: SimState) -> None:
        ens = state.ensemble
        mom = moments(ens)
        hist = radial_histogram(ens, bins=self.bins, r_max=self.r_max)
        fit = maxwellian_fit(ens)
        de, _ = dissipation_estimate(ens, self.kc.b1, pair_budget=self.pair_budget,
                                     exhaustive=False)
        resid = (1.0 - self.alpha ** 2) * de / (2.0 * ens.dim * ens.rho * self.tau) - 1.0 \
            if self.tau > 0 else math.nan
        h_rel = relative_entropy(hist, fit)
        l1 = [weighted_l1_distance(hist, fit, q=q) for q in (0, 1, 2, 3)]
        slack = 2.0 * ens.rho * h_rel - l1[0] ** 2
        h1 = lyapunov_h1(ens, hist, self.prediction, self.alpha,
                         steady_energy=self.steady_energy)
        self.series.append((state.time, ens.rho, mom.theta,
                            mom.moments[2.0], mom.moments[3.0], de, resid,
                            h_rel, slack, h1, *l1))
        if self.keep_histograms:
            self.series.histograms.append(hist)
        self.series.quadrupoles.append(quadrupole(ens))
