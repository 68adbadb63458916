"""Stochastic particle solver for the heat-bath-driven inelastic gas.

Time stepping splits each step of length dt into a binary-collision substep
(no-time-counter pair selection with a relative-speed majorant) followed by
an Euler-Maruyama heat-bath substep (independent Gaussian velocity kicks).
The ensemble carries n_particles velocities with fixed particle weight
rho / n_particles, so mass is conserved exactly by construction; momentum is
conserved by the collision rules and, with the projection flag on, by the
recentred bath kicks as well.

Collision selection follows the standard majorant scheme: with umax an upper
bound on relative speeds, each unordered pair collides at bounded rate
(rho/n) b0 umax, candidates are drawn uniformly and accepted with
probability |u|/umax, so accepted pairs reproduce the hard-sphere kernel
b0 |u| exactly.  Candidates are processed in first-come order; a vectorized
partition groups candidates so that no particle is touched twice within a
group, which reproduces sequential semantics at numpy speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericsError
from .kinematics import CrossSection, KernelConstants, kernel_constants, \
    post_collision, sample_sigma_batch

# Per-pair collision probability bound: dt * b0 * rho * umax must stay below
# this for the candidate-count formula to remain a faithful rate bound.
MAX_COLLISION_COURANT = 0.2

UMAX_DECAY_INTERVAL = 1000
UMAX_DECAY_FACTOR = 0.999
UMAX_RAISE_FACTOR = 1.05


# ---------------------------------------------------------------------------
# Ensemble and initial conditions
# ---------------------------------------------------------------------------

@dataclass
class VelocityEnsemble:
    """Weighted particle representation of the velocity distribution.

    velocities: (n_particles, dim) array; every particle carries mass
    rho / n_particles, so the represented distribution has mass rho exactly.
    """

    velocities: np.ndarray
    rho: float

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.velocities.ndim != 2 or self.velocities.shape[0] < 2:
            raise ValueError("ensemble needs a (n>=2, dim) velocity array")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    @property
    def n_particles(self) -> int:
        return self.velocities.shape[0]

    @property
    def dim(self) -> int:
        return self.velocities.shape[1]

    @property
    def weight(self) -> float:
        return self.rho / self.n_particles

    def momentum(self) -> np.ndarray:
        return self.weight * self.velocities.sum(axis=0)

    def energy(self) -> float:
        return self.weight * float(np.sum(self.velocities ** 2))

    def temperature(self) -> float:
        return self.energy() / (self.rho * self.dim)

    def copy(self) -> "VelocityEnsemble":
        return VelocityEnsemble(self.velocities.copy(), self.rho)


@dataclass(frozen=True)
class MaxwellianInit:
    theta0: float = 1.0


@dataclass(frozen=True)
class UniformBallInit:
    radius: float = 1.0


@dataclass(frozen=True)
class BimodalInit:
    """Two-temperature isotropic mixture: fraction of the particles at
    theta_a, the rest at theta_b.  Far from Maxwellian when the two
    temperatures are well separated."""

    theta_a: float
    theta_b: float
    fraction: float = 0.5


InitSpec = MaxwellianInit | UniformBallInit | BimodalInit


def init_ensemble(spec: InitSpec, rho: float, target_energy: float | None,
                  n_particles: int, rng: np.random.Generator,
                  dim: int = 3) -> VelocityEnsemble:
    """Sample an initial ensemble, then enforce the constraint set exactly.

    After sampling, velocities are shifted to exact zero mean; when
    target_energy is given, they are rescaled so the ensemble energy equals
    it exactly (not just in expectation).
    """
    if n_particles < 2:
        raise ValueError("need at least two particles")
    if isinstance(spec, MaxwellianInit):
        if spec.theta0 <= 0:
            raise ValueError("theta0 must be positive")
        v = rng.standard_normal((n_particles, dim)) * math.sqrt(spec.theta0)
    elif isinstance(spec, UniformBallInit):
        if spec.radius <= 0:
            raise ValueError("radius must be positive")
        dirs = rng.standard_normal((n_particles, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = spec.radius * rng.random(n_particles) ** (1.0 / dim)
        v = dirs * radii[:, None]
    elif isinstance(spec, BimodalInit):
        if spec.theta_a <= 0 or spec.theta_b <= 0 or not 0.0 <= spec.fraction <= 1.0:
            raise ValueError("bimodal init needs positive temperatures and fraction in [0,1]")
        n_a = int(round(spec.fraction * n_particles))
        sig = np.full(n_particles, math.sqrt(spec.theta_b))
        sig[:n_a] = math.sqrt(spec.theta_a)
        v = rng.standard_normal((n_particles, dim)) * sig[:, None]
    else:
        raise TypeError(f"unknown init spec {spec!r}")

    v -= v.mean(axis=0)
    ens = VelocityEnsemble(v, rho)
    if target_energy is not None:
        current = ens.energy()
        if current <= 0:
            raise ValueError("degenerate init: zero variance, cannot hit target energy")
        v *= math.sqrt(target_energy / current)
    return ens


# ---------------------------------------------------------------------------
# Configuration and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Immutable run configuration.

    tau_mode "rescaled" ties the bath strength to the inelasticity,
    tau = rho (1 - alpha); "explicit" uses tau_value as given.  dt and
    umax_initial may be left None to be resolved from the initial ensemble
    (umax = 8 sqrt(2 theta0 dim), dt = 0.16 / (b0 rho umax)).
    """

    alpha: float
    n_particles: int
    seed: int = 0
    rho: float = 1.0
    dim: int = 3
    tau_mode: str = "rescaled"
    tau_value: float | None = None
    dt: float | None = None
    umax_initial: float | None = None
    momentum_projection: bool = True
    snapshot_interval: int = 100
    init: InitSpec = field(default_factory=MaxwellianInit)
    target_energy: float | None = None
    cross_section: CrossSection = field(
        default_factory=lambda: CrossSection(kind="constant", b0_prime=1.0))

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]", key="alpha")
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2", key="np")
        if self.rho <= 0:
            raise ConfigError("rho must be positive", key="rho")
        if self.dim < 2:
            raise ConfigError("dimension must be >= 2", key="dimension")
        if self.tau_mode not in ("rescaled", "explicit"):
            raise ConfigError("tau_mode must be 'rescaled' or 'explicit'", key="tau")
        if self.tau_mode == "explicit" and (self.tau_value is None or self.tau_value < 0):
            raise ConfigError("explicit tau mode needs tau_value >= 0", key="tau")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive", key="dt")
        if self.snapshot_interval < 1:
            raise ConfigError("snapshot_interval must be >= 1", key="snapshot_interval")

    @property
    def tau(self) -> float:
        if self.tau_mode == "rescaled":
            return self.rho * (1.0 - self.alpha)
        return float(self.tau_value)


@dataclass
class SimState:
    """Mutable solver state owned by exactly one worker at a time."""

    config: SimConfig
    ensemble: VelocityEnsemble
    kc: KernelConstants
    umax: float
    collision_rng: np.random.Generator
    diffusion_rng: np.random.Generator
    time: float = 0.0
    step_count: int = 0
    candidates: int = 0
    accepted: int = 0
    umax_violations: int = 0
    # largest accepted relative speed in the current decay window; floors
    # the periodic umax decay so the majorant never drops below live data
    window_peak_u: float = 0.0

    @property
    def dt(self) -> float:
        return float(self.config.dt)

    def counters(self) -> dict:
        return {"candidates": self.candidates, "accepted": self.accepted,
                "umax_violations": self.umax_violations}


def make_state(config: SimConfig,
               seed_seq: np.random.SeedSequence | None = None) -> SimState:
    """Build the initial solver state and resolve deferred config fields.

    One root seed is split deterministically into independent streams for
    initialization, collisions, and bath kicks, so replicas and substeps
    never share randomness.  Validates the collision-probability invariant
    dt * b0 * rho * umax <= 0.2.
    """
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.seed)
    init_seq, coll_seq, diff_seq = seed_seq.spawn(3)
    ens = init_ensemble(config.init, config.rho, config.target_energy,
                        config.n_particles, np.random.default_rng(init_seq),
                        dim=config.dim)
    kc = kernel_constants(config.cross_section, config.dim)

    umax = config.umax_initial
    if umax is None:
        umax = 8.0 * math.sqrt(2.0 * max(ens.temperature(), 1e-300) * config.dim)
    dt = config.dt
    if dt is None:
        dt = 0.8 * MAX_COLLISION_COURANT / (kc.b0 * config.rho * umax)
    courant = dt * kc.b0 * config.rho * umax
    if courant > MAX_COLLISION_COURANT + 1e-12:
        raise ConfigError(
            f"dt*b0*rho*umax = {courant:.3g} exceeds {MAX_COLLISION_COURANT} "
            "(reduce dt)", key="dt")

    resolved = replace(config, dt=dt, umax_initial=umax)
    return SimState(config=resolved, ensemble=ens, kc=kc, umax=umax,
                    collision_rng=np.random.default_rng(coll_seq),
                    diffusion_rng=np.random.default_rng(diff_seq))


# ---------------------------------------------------------------------------
# Substeps
# ---------------------------------------------------------------------------

def _first_use_groups(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    """Mask of candidates that are the first users of both their particles.

    Equivalent to a sequential scan: a candidate enters the current group
    iff no earlier remaining candidate touches either of its particles.
    """
    m = i.size
    pos = np.arange(m)
    min_pos = np.full(n, m, dtype=np.int64)
    np.minimum.at(min_pos, i, pos)
    np.minimum.at(min_pos, j, pos)
    return (min_pos[i] == pos) & (min_pos[j] == pos)


def collision_substep(state: SimState, config: SimConfig | None = None) -> SimState:
    """One no-time-counter collision sweep over candidate pairs.

    Candidate count: round(0.5 n (n-1) (rho/n) b0 umax dt), the number of
    unordered pairs times the per-pair rate bound.  Each candidate picks a
    uniform random unordered pair, is accepted with probability |u|/umax,
    and on acceptance scatters with an impact direction drawn from the
    angular cross-section.  Accepted pairs faster than umax are still
    collided; the majorant is raised to 1.05 |u| afterwards and the
    violation counted.
    """
    cfg = config or state.config
    ens = state.ensemble
    v = ens.velocities
    n = ens.n_particles
    dt = float(cfg.dt)

    pair_rate = ens.weight * state.kc.b0 * state.umax * dt
    m = int(round(0.5 * n * (n - 1) * pair_rate))
    state.candidates += m
    if m == 0:
        return state

    rng = state.collision_rng
    i = rng.integers(0, n, m)
    j = rng.integers(0, n - 1, m)
    j = j + (j >= i)
    accept_u = rng.random(m)

    peak = 0.0
    violations = 0
    remaining = np.arange(m)
    while remaining.size:
        in_group = _first_use_groups(i[remaining], j[remaining], n)
        group = remaining[in_group]
        remaining = remaining[~in_group]

        gi, gj = i[group], j[group]
        u = v[gi] - v[gj]
        speed = np.linalg.norm(u, axis=1)
        acc = accept_u[group] * state.umax < speed
        if not np.any(acc):
            continue
        gi, gj, u, speed = gi[acc], gj[acc], u[acc], speed[acc]

        fast = speed > state.umax
        if np.any(fast):
            violations += int(fast.sum())
        peak = max(peak, float(speed.max()))

        sigma = sample_sigma_batch(cfg.cross_section, u / speed[:, None], rng)
        v_post, v_star_post = post_collision(v[gi], v[gj], sigma, cfg.alpha,
                                             check=False)
        v[gi] = v_post
        v[gj] = v_star_post
        state.accepted += gi.size

    state.umax_violations += violations
    if violations:
        state.umax = max(state.umax, UMAX_RAISE_FACTOR * peak)
    state.window_peak_u = max(state.window_peak_u, peak)
    return state


def diffusion_substep(state: SimState, tau: float, dt: float,
                      projection: bool = True) -> SimState:
    """Heat-bath substep: independent Gaussian kicks, variance 2 tau dt
    per component.  With projection on, kicks are recentred to zero mean,
    preserving total momentum exactly at an O(1/n) energy-input cost."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0.0:
        return state
    v = state.ensemble.velocities
    kicks = state.diffusion_rng.standard_normal(v.shape)
    kicks *= math.sqrt(2.0 * tau * dt)
    if projection:
        kicks -= kicks.mean(axis=0)
    v += kicks
    return state


def step(state: SimState, config: SimConfig | None = None) -> SimState:
    """Advance one time step: collisions, then bath kicks.

    First-order splitting; the collision-probability bound enforced at
    configuration time keeps the splitting bias below statistical noise.
    """
    cfg = config or state.config
    collision_substep(state, cfg)
    diffusion_substep(state, cfg.tau, float(cfg.dt), cfg.momentum_projection)
    state.step_count += 1
    state.time = state.step_count * float(cfg.dt)

    if state.step_count % UMAX_DECAY_INTERVAL == 0:
        state.umax = max(state.umax * UMAX_DECAY_FACTOR, state.window_peak_u)
        state.window_peak_u = 0.0

    if not np.all(np.isfinite(state.ensemble.velocities)):
        bad_rows = np.nonzero(~np.isfinite(state.ensemble.velocities).all(axis=1))[0]
        raise NumericsError(
            f"non-finite velocities after step {state.step_count}",
            diagnostics={"time": state.time,
                         "bad_particles": bad_rows[:16].tolist(),
                         "bad_count": int(bad_rows.size),
                         "umax": state.umax,
                         "counters": state.counters()})
    return state


def run(config: SimConfig, t_end: float, recorder=None,
        state: SimState | None = None) -> SimState:
    """Step the solver to t_end, invoking the recorder on snapshots.

    The recorder (any callable taking the state) fires on the initial
    state, every snapshot_interval steps, and on the final step.  Runs are
    deterministic functions of (config, t_end): identical inputs give
    identical trajectories and identical recorder calls.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if state is None:
        state = make_state(config)
    cfg = state.config
    n_steps = max(1, int(round(t_end / float(cfg.dt))))
    interval = cfg.snapshot_interval

    if recorder is not None and state.step_count == 0:
        recorder(_read_only(state))
    for k in range(1, n_steps + 1):
        step(state, cfg)
        if recorder is not None and (k % interval == 0 or k == n_steps):
            recorder(_read_only(state))
    return state


def _read_only(state: SimState) -> SimState:
    state.ensemble.velocities.flags.writeable = False
    try:
        return state
    finally:
        state.ensemble.velocities.flags.writeable = True


# ---------------------------------------------------------------------------
# Snapshot persistence
# ---------------------------------------------------------------------------

SNAPSHOT_VERSION = 1


def save_snapshot(path, state: SimState) -> None:
    """Persist the ensemble as versioned CSV: a header row with
    (time, n, rho, alpha, tau), then one velocity row per particle."""
    cfg = state.config
    ens = state.ensemble
    with open(path, "w") as fh:
        fh.write(f"# granubath-snapshot v{SNAPSHOT_VERSION}\n")
        fh.write("time,n,rho,alpha,tau\n")
        fh.write(f"{state.time!r},{ens.n_particles},{cfg.rho!r},"
                 f"{cfg.alpha!r},{cfg.tau!r}\n")
        fh.write(",".join(f"v{k}" for k in range(ens.dim)) + "\n")
        for row in ens.velocities:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_snapshot(path) -> tuple[dict, np.ndarray]:
    """Read a snapshot written by save_snapshot; returns (meta, velocities)."""
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != f"# granubath-snapshot v{SNAPSHOT_VERSION}":
            raise ValueError(f"unsupported snapshot header: {magic!r}")
        keys = fh.readline().strip().split(",")
        vals = fh.readline().strip().split(",")
        meta = dict(zip(keys, (float(x) for x in vals)))
        fh.readline()  # velocity column names
        velocities = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, velocities
