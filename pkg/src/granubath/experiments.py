"""Scripted studies confronting DSMC runs with the closed-form predictions.

Five experiment kinds:

  steady    equilibrate one restitution coefficient, time-average the
            temperature and the stationarity residual, measure distances
            to the reference Maxwellians
  sweep     steady states across a list of restitution coefficients plus a
            log-log fit of the distance to the elastic-limit Maxwellian
            against (1 - alpha)
  relax     energy-perturbed runs and a log-linear fit of the energy decay
            rate (the spectral-gap estimate)
  lyapunov  far-from-equilibrium runs checking monotonicity of the
            entropy + energy Liapunov functional and the separation of the
            entropy and energy timescales
  scaling   invariance of temperature trajectories under the velocity/time
            rescaling of the model

Every experiment is a deterministic function of (spec, seed): replica
streams are split from the root seed, replicas may execute in parallel
processes, and aggregation is an ordered reduce over replica indices, so
reruns reproduce every number bit-exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analytics import SteadyPrediction, gaussian_moment
from .engine import BimodalInit, MaxwellianInit, SimConfig, make_state, run
from .errors import ConfigError, NumericsError
from .kinematics import KernelConstants, kernel_constants
from .observables import ObservableSeries, RadialHistogram, SeriesRecorder, \
    average_histograms, maxwellian_shell_masses, weighted_l1_distance
from .analytics import MaxwellianParams

DEFAULT_BINS = 64
DEFAULT_PAIR_BUDGET = 200_000
SNAPSHOTS_PER_WINDOW = 120
FIT_NOISE_MULTIPLE = 5.0


# ---------------------------------------------------------------------------
# Specs and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a base run configuration plus study parameters.

    burn_in and t_end left as None are sized automatically from the
    predicted relaxation time of the energy mode.
    """

    kind: str
    config: SimConfig
    replicas: int = 8
    burn_in: float | None = None
    t_end: float | None = None
    alphas: tuple[float, ...] = ()
    delta: float = 0.15
    lam: float = 1.5
    bins: int = DEFAULT_BINS
    pair_budget: int = DEFAULT_PAIR_BUDGET
    workers: int | None = None

    def __post_init__(self):
        if self.kind not in ("steady", "relax", "sweep", "lyapunov", "scaling"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}", key="kind")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1", key="replicas")
        if self.burn_in is not None and self.t_end is not None \
                and not self.burn_in < self.t_end:
            raise ConfigError("burn-in must be shorter than t_end", key="burn_in")
        if self.kind == "sweep" and self.alphas and len(self.alphas) < 3:
            raise ConfigError("sweep needs at least 3 alphas", key="alphas")


@dataclass(frozen=True)
class FitResult:
    estimate: float
    stderr: float
    window: tuple[float, float]
    n_points: int
    r_squared: float

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")


@dataclass
class SteadyStateResult:
    alpha: float
    theta: float
    theta_err: float
    residual: float
    residual_err: float
    theta_predicted: float
    theta_limit: float
    distance_limit: float       # pooled L1_2 distance to the elastic-limit Maxwellian
    distance_limit_err: float
    distance_predicted: float   # pooled L1_2 distance to M(theta_predicted)
    distance_predicted_err: float
    noise_floor: float
    non_stationary: bool
    burn_in: float
    t_end: float
    series: list[ObservableSeries] = field(repr=False, default_factory=list)
    pooled_histogram: RadialHistogram | None = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "alpha", "theta", "theta_err", "residual", "residual_err",
            "theta_predicted", "theta_limit", "distance_limit",
            "distance_limit_err", "distance_predicted",
            "distance_predicted_err", "noise_floor", "non_stationary",
            "burn_in", "t_end")}


@dataclass
class SweepResult:
    rows: list[SteadyStateResult]
    slope: FitResult | None
    excluded_alphas: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "rows": [r.to_json_dict() for r in self.rows],
            "slope": None if self.slope is None else vars(self.slope) | {
                "window": list(self.slope.window)},
            "excluded_alphas": list(self.excluded_alphas),
        }


@dataclass
class RelaxationResult:
    alpha: float
    fit: FitResult
    rate_scaled: float       # -3 rho (1-alpha) / theta_limit
    rate_unscaled: float     # -3 rho (1-alpha)
    supported: str           # which prediction the fit is closer to
    relative_gap: float      # |fit/supported - 1|
    steady_energy_used: float
    series: list[ObservableSeries] = field(repr=False, default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "mu_hat": self.fit.estimate, "mu_stderr": self.fit.stderr,
            "window": list(self.fit.window), "n_points": self.fit.n_points,
            "r_squared": self.fit.r_squared,
            "rate_scaled": self.rate_scaled,
            "rate_unscaled": self.rate_unscaled,
            "supported": self.supported, "relative_gap": self.relative_gap,
            "steady_energy_used": self.steady_energy_used,
        }


@dataclass
class LyapunovResult:
    alpha: float
    monotone: bool
    worst_increase_sigmas: float
    entropy_efold: float
    energy_efold: float
    timescale_ratio: float
    times: np.ndarray = field(repr=False, default=None)
    h1_smoothed: np.ndarray = field(repr=False, default=None)
    h1_stderr: np.ndarray = field(repr=False, default=None)
    series: list[ObservableSeries] = field(repr=False, default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "alpha", "monotone", "worst_increase_sigmas", "entropy_efold",
            "energy_efold", "timescale_ratio")} | {"passed": self.passed}


@dataclass
class ScalingResult:
    lam: float
    max_deviation: float
    tolerance: float
    times: np.ndarray = field(repr=False, default=None)
    theta_base: np.ndarray = field(repr=False, default=None)
    theta_mapped: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_json_dict(self) -> dict:
        return {"lambda": self.lam, "max_deviation": self.max_deviation,
                "tolerance": self.tolerance, "passed": self.passed}


# ---------------------------------------------------------------------------
# Replica plumbing
# ---------------------------------------------------------------------------

def _worker_count(spec: ExperimentSpec) -> int:
    if spec.workers is not None:
        return max(1, spec.workers)
    env = os.environ.get("GRANUBATH_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, min(os.cpu_count() or 1, spec.replicas))


def _run_payload(payload) -> tuple[ObservableSeries, dict]:
    """Top-level replica worker: run one configured trajectory to t_end."""
    config, t_end, seed_seq, rec_kwargs = payload
    state = make_state(config, seed_seq=seed_seq)
    recorder = SeriesRecorder(**rec_kwargs)
    run(config, t_end, recorder, state=state)
    return recorder.series, state.counters()


def _run_replicas(payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [_run_payload(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_payload, payloads))


def _replica_sequences(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _mean_stderr(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased replica mean and standard error along an axis."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=axis)
    n = values.shape[axis]
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=axis, ddof=1) / math.sqrt(n)


def relaxation_time(pred: SteadyPrediction, alpha: float) -> float:
    """Predicted e-folding time of the energy mode; infinite at alpha = 1."""
    rate = pred.relaxation_rate(alpha)
    return math.inf if rate == 0 else 1.0 / abs(rate)


def _resolve_dt(config: SimConfig, kc: KernelConstants, theta0: float) -> tuple[float, float]:
    """(umax, dt) as make_state would resolve them, from the init temperature."""
    umax = config.umax_initial
    if umax is None:
        umax = 8.0 * math.sqrt(2.0 * theta0 * config.dim)
    dt = config.dt
    if dt is None:
        dt = 0.95 * 0.2 / (kc.b0 * config.rho * umax)
    return umax, dt


def _init_temperature(config: SimConfig) -> float:
    """Nominal temperature of the configured initial condition."""
    if config.target_energy is not None:
        return config.target_energy / (config.rho * config.dim)
    spec = config.init
    if isinstance(spec, MaxwellianInit):
        return spec.theta0
    if isinstance(spec, BimodalInit):
        return spec.fraction * spec.theta_a + (1.0 - spec.fraction) * spec.theta_b
    # uniform ball of radius R: E|v|^2 = R^2 dim/(dim+2)
    return spec.radius ** 2 / (config.dim + 2)


def _noise_floor_l1(hist: RadialHistogram, n_effective: int) -> float:
    """Sampling-noise scale of an L1 histogram distance.

    Half-normal expectation of per-bin mass fluctuations at n_effective
    independent samples; distances at or below this level are
    indistinguishable from zero.
    """
    p = np.append(hist.masses, hist.overflow_mass) / hist.rho
    sig = hist.rho * np.sqrt(np.maximum(p, 0.0) / max(n_effective, 1))
    return float(math.sqrt(2.0 / math.pi) * sig.sum())


def prediction_for(config: SimConfig) -> tuple[KernelConstants, SteadyPrediction]:
    kc = kernel_constants(config.cross_section, config.dim)
    return kc, SteadyPrediction.from_kernel(kc, config.dim, config.rho)


# ---------------------------------------------------------------------------
# steady
# ---------------------------------------------------------------------------

def _steady_horizons(spec: ExperimentSpec, pred: SteadyPrediction,
                     alpha: float) -> tuple[float, float]:
    t_relax = relaxation_time(pred, alpha)
    if not math.isfinite(t_relax):
        if spec.burn_in is None or spec.t_end is None:
            raise ConfigError("alpha = 1 needs explicit burn_in and t_end",
                              key="burn_in")
    burn = spec.burn_in if spec.burn_in is not None else max(3.0 * t_relax, 2.0)
    t_end = spec.t_end if spec.t_end is not None else burn + max(10.0 * t_relax, 5.0)
    return burn, t_end


def _steady_config(spec: ExperimentSpec, pred: SteadyPrediction, alpha: float,
                   kc: KernelConstants, window: float) -> SimConfig:
    """Per-alpha run config: warm start at the predicted steady state."""
    base = spec.config
    theta = pred.steady_temperature(alpha)
    cfg = replace(base, alpha=alpha, tau_mode="rescaled", tau_value=None,
                  init=MaxwellianInit(theta),
                  target_energy=base.rho * base.dim * theta)
    umax, dt = _resolve_dt(cfg, kc, theta)
    interval = max(1, int(round(window / (SNAPSHOTS_PER_WINDOW * dt))))
    return replace(cfg, dt=dt, umax_initial=umax, snapshot_interval=interval)


def steady_state(spec: ExperimentSpec, alpha: float | None = None,
                 _shared: tuple | None = None) -> SteadyStateResult:
    """Equilibrate and time-average one steady state.

    Runs the replicas, discards the burn-in, and reports replica-mean
    temperature and stationarity residual with replica standard errors plus
    pooled-histogram L1_2 distances to the elastic-limit Maxwellian and to
    the closure-predicted one.  A first-half/second-half drift test flags
    (without failing) non-stationary windows.
    """
    kc, pred = _shared if _shared is not None else prediction_for(spec.config)
    alpha = spec.config.alpha if alpha is None else alpha
    burn, t_end = _steady_horizons(spec, pred, alpha)
    cfg = _steady_config(spec, pred, alpha, kc, t_end - burn)

    rec_kwargs = dict(prediction=pred, alpha=alpha, tau=cfg.tau, kc=kc,
                      bins=spec.bins, pair_budget=spec.pair_budget,
                      r_max=8.0 * math.sqrt(pred.steady_temperature(alpha)))
    payloads = [(cfg, t_end, seq, rec_kwargs)
                for seq in _replica_sequences(cfg.seed, spec.replicas)]
    outputs = _run_replicas(payloads, _worker_count(spec))
    series = [s for s, _ in outputs]

    times = series[0].times
    keep = times > burn
    thetas = np.array([s.column("theta")[keep] for s in series])
    residuals = np.array([s.column("residual")[keep] for s in series])

    theta_by_rep = thetas.mean(axis=1)
    resid_by_rep = residuals.mean(axis=1)
    theta, theta_err = _mean_stderr(theta_by_rep)
    resid, resid_err = _mean_stderr(resid_by_rep)

    # drift test on replica-paired half-window differences
    half = thetas.shape[1] // 2
    drift = thetas[:, half:].mean(axis=1) - thetas[:, :half].mean(axis=1)
    dmean, derr = _mean_stderr(drift)
    non_stationary = bool(derr > 0 and abs(dmean) > 4.0 * derr)

    # pooled histogram over replicas and post-burn-in snapshots
    kept_idx = np.nonzero(keep)[0]
    rep_hists = [average_histograms([s.histograms[i] for i in kept_idx])
                 for s in series]
    pooled = average_histograms(rep_hists)
    m_limit = MaxwellianParams(rho=cfg.rho, u=np.zeros(cfg.dim),
                               theta=pred.theta_limit)
    m_pred = MaxwellianParams(rho=cfg.rho, u=np.zeros(cfg.dim),
                              theta=pred.steady_temperature(alpha))
    d_limit = weighted_l1_distance(pooled, m_limit, q=2)
    d_pred = weighted_l1_distance(pooled, m_pred, q=2)
    d_limit_rep = [weighted_l1_distance(h, m_limit, q=2) for h in rep_hists]
    d_pred_rep = [weighted_l1_distance(h, m_pred, q=2) for h in rep_hists]
    _, d_limit_err = _mean_stderr(np.array(d_limit_rep))
    _, d_pred_err = _mean_stderr(np.array(d_pred_rep))
    n_eff = cfg.n_particles * len(kept_idx) * spec.replicas
    floor = _noise_floor_l1(pooled, n_eff)

    return SteadyStateResult(
        alpha=alpha, theta=float(theta), theta_err=float(theta_err),
        residual=float(resid), residual_err=float(resid_err),
        theta_predicted=pred.steady_temperature(alpha),
        theta_limit=pred.theta_limit,
        distance_limit=d_limit, distance_limit_err=float(d_limit_err),
        distance_predicted=d_pred, distance_predicted_err=float(d_pred_err),
        noise_floor=floor, non_stationary=non_stationary,
        burn_in=burn, t_end=t_end, series=series, pooled_histogram=pooled)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def alpha_sweep(spec: ExperimentSpec) -> SweepResult:
    """Steady states across spec.alphas plus the distance-decay fit.

    The log-log regression of the L1_2 distance to the elastic-limit
    Maxwellian against (1 - alpha) excludes points indistinguishable from
    the sampling-noise floor; its slope estimates the convergence exponent
    of the elastic limit.
    """
    alphas = spec.alphas or (0.90, 0.93, 0.96, 0.98, 0.99)
    if len(alphas) < 3:
        raise ConfigError("sweep needs at least 3 alphas", key="alphas")
    shared = prediction_for(spec.config)
    rows = [steady_state(spec, alpha=a, _shared=shared) for a in alphas]

    usable, excluded = [], []
    for row in rows:
        if row.alpha < 1.0 and row.distance_limit > 2.0 * row.noise_floor:
            usable.append(row)
        else:
            excluded.append(row.alpha)
    slope = None
    if len(usable) >= 3:
        x = np.log([1.0 - r.alpha for r in usable])
        y = np.log([r.distance_limit for r in usable])
        slope = _linear_fit(x, y)
    return SweepResult(rows=rows, slope=slope, excluded_alphas=tuple(excluded))


def _linear_fit(x: np.ndarray, y: np.ndarray) -> FitResult:
    """OLS slope with standard error and R^2."""
    n = x.size
    coeffs, cov = np.polyfit(x, y, 1, cov=True) if n > 2 else (np.polyfit(x, y, 1), None)
    slope = float(coeffs[0])
    resid = y - np.polyval(coeffs, x)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    err = float(math.sqrt(cov[0, 0])) if cov is not None else 0.0
    return FitResult(estimate=slope, stderr=err,
                     window=(float(x.min()), float(x.max())),
                     n_points=int(n), r_squared=r2)


# ---------------------------------------------------------------------------
# relax
# ---------------------------------------------------------------------------

def relaxation_fit(spec: ExperimentSpec, delta: float | None = None,
                   steady_energy: str = "empirical") -> RelaxationResult:
    """Fit the decay rate of an energy perturbation (spectral-gap estimate).

    Starts from a Maxwellian with energy offset by delta, averages
    E(t) over replicas, and fits a log-linear slope on the window where the
    signal exceeds five replica standard errors.  The steady energy is the
    replica-mean tail average by default ("empirical"); "predicted" uses
    the closure value instead.
    """
    delta = spec.delta if delta is None else delta
    kc, pred = prediction_for(spec.config)
    alpha = spec.config.alpha
    if not alpha < 1.0:
        raise ConfigError("relaxation fit needs alpha < 1", key="alpha")
    e_bar_pred = pred.steady_energy(alpha)
    if abs(delta) > 0.2:
        raise ConfigError("perturbation must satisfy |delta| <= 0.2", key="delta")

    t_relax = relaxation_time(pred, alpha)
    t_end = spec.t_end if spec.t_end is not None else 8.0 * t_relax + 2.0
    theta0 = pred.steady_temperature(alpha) * (1.0 + delta)
    cfg = replace(spec.config, tau_mode="rescaled", tau_value=None,
                  init=MaxwellianInit(theta0),
                  target_energy=e_bar_pred * (1.0 + delta))
    umax, dt = _resolve_dt(cfg, kc, theta0)
    interval = max(1, int(round(t_relax / (15.0 * dt))))
    cfg = replace(cfg, dt=dt, umax_initial=umax, snapshot_interval=interval)

    rec_kwargs = dict(prediction=pred, alpha=alpha, tau=cfg.tau, kc=kc,
                      bins=spec.bins, pair_budget=spec.pair_budget,
                      keep_histograms=False)
    payloads = [(cfg, t_end, seq, rec_kwargs)
                for seq in _replica_sequences(cfg.seed, spec.replicas)]
    outputs = _run_replicas(payloads, _worker_count(spec))
    series = [s for s, _ in outputs]

    times = series[0].times
    energies = np.array([cfg.rho * cfg.dim * s.column("theta") for s in series])
    e_mean, e_err = _mean_stderr(energies)

    if steady_energy == "empirical":
        tail = times >= 0.75 * times[-1]
        e_bar = float(e_mean[tail].mean())
    elif steady_energy == "predicted":
        e_bar = e_bar_pred
    else:
        raise ConfigError("steady_energy must be 'empirical' or 'predicted'",
                          key="steady_energy")

    signal = e_mean - e_bar
    sign = 1.0 if delta >= 0 else -1.0
    # exclude the fast shape transient, then keep the 5-sigma window
    usable = (times >= min(1.0, 0.3 * t_relax)) \
        & (sign * signal > FIT_NOISE_MULTIPLE * e_err)
    if int(usable.sum()) < 10:
        raise NumericsError(
            "relaxation fit refused: fewer than 10 snapshots above noise",
            diagnostics={"n_usable": int(usable.sum())})
    fit = _linear_fit(times[usable], np.log(sign * signal[usable]))

    mu_scaled = pred.relaxation_rate(alpha)
    mu_unscaled = pred.relaxation_rate_unscaled(alpha)
    gap_scaled = abs(math.log(abs(fit.estimate / mu_scaled)))
    gap_unscaled = abs(math.log(abs(fit.estimate / mu_unscaled)))
    supported = "scaled" if gap_scaled <= gap_unscaled else "unscaled"
    best = mu_scaled if supported == "scaled" else mu_unscaled
    return RelaxationResult(
        alpha=alpha, fit=fit, rate_scaled=mu_scaled, rate_unscaled=mu_unscaled,
        supported=supported, relative_gap=abs(fit.estimate / best - 1.0),
        steady_energy_used=e_bar, series=series)


# ---------------------------------------------------------------------------
# lyapunov
# ---------------------------------------------------------------------------

def _moving_average(y: np.ndarray, width: int) -> np.ndarray:
    kernel = np.ones(width) / width
    pad_lo = width // 2
    pad_hi = width - 1 - pad_lo
    padded = np.concatenate([np.full(pad_lo, y[0]), y, np.full(pad_hi, y[-1])])
    return np.convolve(padded, kernel, mode="valid")


def _efold_time(times: np.ndarray, values: np.ndarray, errs: np.ndarray,
                floor: float) -> float:
    """e-folding time from a log-linear fit over the usable decay window."""
    usable = (values > floor) & (values > FIT_NOISE_MULTIPLE * errs)
    if int(usable.sum()) < 5:
        raise NumericsError("timescale fit refused: too few usable snapshots",
                            diagnostics={"n_usable": int(usable.sum())})
    fit = _linear_fit(times[usable], np.log(values[usable]))
    if fit.estimate >= 0:
        raise NumericsError("timescale fit found no decay",
                            diagnostics={"slope": fit.estimate})
    return -1.0 / fit.estimate


def lyapunov_trace(spec: ExperimentSpec, smooth_width: int = 21) -> LyapunovResult:
    """Monotonicity check of the Liapunov functional from a bimodal start.

    PASS when the smoothed replica-mean series never rises by more than two
    replica standard errors between consecutive snapshots.  Also fits the
    e-folding times of the entropy term and of the squared energy offset;
    their separation is the two-timescale mechanism that makes the
    functional decrease near the elastic limit.
    """
    if smooth_width < 20:
        raise ConfigError("smoothing window must span at least 20 snapshots",
                          key="smooth_width")
    kc, pred = prediction_for(spec.config)
    alpha = spec.config.alpha
    t_relax = relaxation_time(pred, alpha)
    t_end = spec.t_end if spec.t_end is not None else 3.0 * t_relax

    theta_ss = pred.steady_temperature(alpha)
    e_bar = pred.steady_energy(alpha)
    base = spec.config
    if not isinstance(base.init, BimodalInit):
        init = BimodalInit(theta_a=0.1 * theta_ss, theta_b=2.5 * theta_ss,
                           fraction=0.5)
        base = replace(base, init=init, target_energy=1.3 * e_bar)
    theta0 = _init_temperature(base)
    umax, dt = _resolve_dt(base, kc, theta0)
    # snapshots must resolve the collisional (entropy) timescale, which is
    # much faster than the horizon set by the energy mode
    t_coll = 1.0 / (0.5 * base.rho * kc.b0 * math.sqrt(2.0 * theta0)
                    * gaussian_moment(base.dim, 1))
    interval = max(1, int(round(min(t_end / 200.0, 0.4 * t_coll) / dt)))
    cfg = replace(base, tau_mode="rescaled", tau_value=None, dt=dt,
                  umax_initial=umax, snapshot_interval=interval)

    rec_kwargs = dict(prediction=pred, alpha=alpha, tau=cfg.tau, kc=kc,
                      bins=spec.bins, pair_budget=spec.pair_budget,
                      r_max=8.0 * math.sqrt(theta0),
                      keep_histograms=False)
    payloads = [(cfg, t_end, seq, rec_kwargs)
                for seq in _replica_sequences(cfg.seed, spec.replicas)]
    outputs = _run_replicas(payloads, _worker_count(spec))
    series = [s for s, _ in outputs]

    times = series[0].times
    h1 = np.array([s.column("H1") for s in series])
    smoothed = np.array([_moving_average(row, smooth_width) for row in h1])
    h1_mean, h1_err = _mean_stderr(smoothed)

    increases = np.diff(h1_mean)
    tol = 2.0 * h1_err[:-1]
    worst = float(np.max((increases - tol) / np.maximum(h1_err[:-1], 1e-300)))
    monotone = bool(np.all(increases <= tol))

    h_rel = np.array([s.column("H_rel") for s in series])
    h_mean, h_err = _mean_stderr(h_rel)
    bias_floor = spec.bins / cfg.n_particles
    entropy_efold = _efold_time(times, h_mean, h_err, 10.0 * bias_floor)

    energies = np.array([cfg.rho * cfg.dim * s.column("theta") for s in series])
    e_mean, e_err = _mean_stderr(energies)
    esq = (e_mean - e_bar) ** 2
    esq_err = 2.0 * np.abs(e_mean - e_bar) * e_err
    energy_efold = _efold_time(times, esq, esq_err, 0.0)

    return LyapunovResult(
        alpha=alpha, monotone=monotone, worst_increase_sigmas=worst + 2.0,
        entropy_efold=entropy_efold, energy_efold=energy_efold,
        timescale_ratio=energy_efold / entropy_efold,
        times=times, h1_smoothed=h1_mean, h1_stderr=h1_err, series=series)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def scaling_check(spec: ExperimentSpec, lam: float | None = None,
                  tolerance: float = 0.03,
                  independent_streams: bool = False) -> ScalingResult:
    """Velocity/time rescaling invariance of the temperature trajectory.

    A run with diffusion tau and a run with tau / lam^3 started from the
    same sample scaled by 1/lam must satisfy
    theta_base(t) = lam^2 theta_scaled(lam t).  By default both runs share
    replica streams, under which the solver is exactly equivariant (pair
    selections, acceptance tests, and bath kicks all map onto each other),
    so any deviation beyond rounding exposes a scale-breaking code path.
    With independent_streams the scaled runs draw fresh randomness and the
    comparison is statistical at the given tolerance.
    """
    lam = spec.lam if lam is None else lam
    if not 0.5 <= lam <= 2.0:
        raise ConfigError("lambda must lie in [0.5, 2]", key="lambda")
    kc, pred = prediction_for(spec.config)
    base = spec.config
    if base.tau_mode != "explicit":
        base = replace(base, tau_mode="explicit",
                       tau_value=base.rho * (1.0 - base.alpha))
    t_end = spec.t_end if spec.t_end is not None else \
        3.0 * relaxation_time(pred, base.alpha)

    theta0 = _init_temperature(base)
    umax, dt = _resolve_dt(base, kc, theta0)
    interval = max(1, int(round(t_end / (40.0 * dt))))
    cfg_a = replace(base, dt=dt, umax_initial=umax, snapshot_interval=interval)

    init = cfg_a.init
    if not isinstance(init, MaxwellianInit):
        raise ConfigError("scaling check needs a Maxwellian init", key="init")
    cfg_b = replace(
        cfg_a,
        tau_value=cfg_a.tau_value / lam ** 3,
        init=MaxwellianInit(init.theta0 / lam ** 2),
        target_energy=None if cfg_a.target_energy is None
        else cfg_a.target_energy / lam ** 2,
        dt=lam * dt, umax_initial=umax / lam)

    rec_kwargs = dict(prediction=pred, alpha=cfg_a.alpha, tau=cfg_a.tau, kc=kc,
                      bins=spec.bins, pair_budget=spec.pair_budget,
                      keep_histograms=False)
    rec_b = dict(rec_kwargs, tau=cfg_b.tau)
    if independent_streams:
        seqs = _replica_sequences(cfg_a.seed, 2 * spec.replicas)
        seqs_a, seqs_b = seqs[:spec.replicas], seqs[spec.replicas:]
    else:
        seqs_a = seqs_b = _replica_sequences(cfg_a.seed, spec.replicas)
    payloads = [(cfg_a, t_end, seq, rec_kwargs) for seq in seqs_a] + \
               [(cfg_b, lam * t_end, seq, rec_b) for seq in seqs_b]
    outputs = _run_replicas(payloads, _worker_count(spec))
    series_a = [s for s, _ in outputs[:spec.replicas]]
    series_b = [s for s, _ in outputs[spec.replicas:]]

    theta_a, _ = _mean_stderr(np.array([s.column("theta") for s in series_a]))
    theta_b, _ = _mean_stderr(np.array([s.column("theta") for s in series_b]))
    n = min(theta_a.size, theta_b.size)
    mapped = lam ** 2 * theta_b[:n]
    deviation = np.abs(mapped - theta_a[:n]) / theta_a[:n]
    return ScalingResult(lam=lam, max_deviation=float(deviation.max()),
                         tolerance=tolerance, times=series_a[0].times[:n],
                         theta_base=theta_a[:n], theta_mapped=mapped)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def run_experiment(spec: ExperimentSpec):
    if spec.kind == "steady":
        return steady_state(spec)
    if spec.kind == "sweep":
        return alpha_sweep(spec)
    if spec.kind == "relax":
        return relaxation_fit(spec)
    if spec.kind == "lyapunov":
        return lyapunov_trace(spec)
    if spec.kind == "scaling":
        return scaling_check(spec)
    raise ConfigError(f"unknown experiment kind {spec.kind!r}", key="kind")
