"""Configuration files, run manifests, and atomic result persistence.

Config files are flat "key = value" lines with '#' comments.  Unknown keys
are rejected; command-line flags override file values.  Result files are
written to a temporary name and renamed into place so no output is ever
partially written; the manifest records a SHA-256 digest of every emitted
file together with the config echo, root seed, and wall-clock timestamps.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .engine import BimodalInit, InitSpec, MaxwellianInit, SimConfig, \
    UniformBallInit
from .errors import ConfigError
from .experiments import ExperimentSpec
from .kinematics import CrossSection, load_cross_section_table

_BOOL_WORDS = {"on": True, "true": True, "1": True, "yes": True,
               "off": False, "false": False, "0": False, "no": False}


def _parse_bool(raw: str, key: str) -> bool:
    try:
        return _BOOL_WORDS[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"key '{key}': expected on/off, got {raw!r}", key=key)


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': expected a number, got {raw!r}", key=key)


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': expected an integer, got {raw!r}", key=key)


def parse_init(raw: str) -> InitSpec:
    """Initial-condition spec: maxwellian:theta0 | uniform-ball:R |
    bimodal:theta_a:theta_b:fraction."""
    parts = raw.strip().split(":")
    kind = parts[0]
    try:
        if kind == "maxwellian":
            return MaxwellianInit(theta0=float(parts[1]) if len(parts) > 1 else 1.0)
        if kind == "uniform-ball":
            return UniformBallInit(radius=float(parts[1]) if len(parts) > 1 else 1.0)
        if kind == "bimodal":
            return BimodalInit(theta_a=float(parts[1]), theta_b=float(parts[2]),
                               fraction=float(parts[3]) if len(parts) > 3 else 0.5)
    except (IndexError, ValueError):
        raise ConfigError(f"key 'init': malformed spec {raw!r}", key="init")
    raise ConfigError(f"key 'init': unknown kind {kind!r}", key="init")


def parse_cross_section(raw: str) -> CrossSection:
    """Cross-section spec: constant:b0' | power-law:b0' | table:path."""
    parts = raw.strip().split(":", 1)
    kind = parts[0]
    arg = parts[1] if len(parts) > 1 else ""
    try:
        if kind == "constant":
            return CrossSection(kind="constant", b0_prime=float(arg or 1.0))
        if kind == "power-law":
            return CrossSection(kind="power-law", b0_prime=float(arg or 1.0))
        if kind == "table":
            return load_cross_section_table(arg)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"key 'cross_section': {exc}", key="cross_section")
    raise ConfigError(f"key 'cross_section': unknown kind {kind!r}",
                      key="cross_section")


# key -> (parser, description); the single source of truth for config keys
CONFIG_KEYS: dict[str, tuple] = {
    "alpha": (_parse_float, "restitution coefficient in (0, 1]"),
    "np": (_parse_int, "particle count (>= 2)"),
    "seed": (_parse_int, "root random seed"),
    "rho": (_parse_float, "total mass (default 1)"),
    "dimension": (_parse_int, "velocity dimension (default 3)"),
    "dt": (_parse_float, "time step (default auto from the rate bound)"),
    "tau": (str, "'rescaled' or an explicit diffusion coefficient"),
    "t_end": (_parse_float, "run horizon (default auto)"),
    "burn_in": (_parse_float, "discarded equilibration time (default auto)"),
    "replicas": (_parse_int, "independent replicas (default per experiment)"),
    "snapshot_interval": (_parse_int, "steps between snapshots (default auto)"),
    "momentum_projection": (_parse_bool, "recentre bath kicks (default on)"),
    "umax_initial": (_parse_float, "initial relative-speed majorant (default auto)"),
    "init": (parse_init, "initial condition (default maxwellian:1)"),
    "target_energy": (_parse_float, "exact initial energy (default none)"),
    "cross_section": (parse_cross_section, "angular cross-section (default constant:1)"),
    "alphas": (str, "comma list of restitution coefficients for sweep"),
    "delta": (_parse_float, "relative energy perturbation for relax (default 0.15)"),
    "lambda": (_parse_float, "rescaling factor for scaling (default 1.5)"),
    "bins": (_parse_int, "radial histogram bins (default 64)"),
    "pair_budget": (_parse_int, "sampled pairs per dissipation estimate"),
    "workers": (_parse_int, "parallel replica processes (default = cpu count)"),
}


def parse_config_file(path) -> dict:
    """Read 'key = value' lines into a raw string map; unknown keys fail."""
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'", key=key)
            raw[key] = value.strip()
    return raw


def typed_config(raw: dict) -> dict:
    """Apply per-key parsers; raises ConfigError naming the offending key."""
    out = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key '{key}'", key=key)
        parser, _ = CONFIG_KEYS[key]
        out[key] = parser(value, key) if parser in (_parse_bool, _parse_float,
                                                    _parse_int) else parser(value)
    return out


def build_spec(kind: str, options: dict) -> ExperimentSpec:
    """Assemble a validated ExperimentSpec from typed config options."""
    tau_raw = options.get("tau", "rescaled")
    if isinstance(tau_raw, str) and tau_raw.strip() == "rescaled":
        tau_mode, tau_value = "rescaled", None
    else:
        tau_mode, tau_value = "explicit", _parse_float(str(tau_raw), "tau")

    config = SimConfig(
        alpha=float(options.get("alpha", 0.95)),
        n_particles=int(options.get("np", 20_000)),
        seed=int(options.get("seed", 0)),
        rho=float(options.get("rho", 1.0)),
        dim=int(options.get("dimension", 3)),
        tau_mode=tau_mode,
        tau_value=tau_value,
        dt=options.get("dt"),
        umax_initial=options.get("umax_initial"),
        momentum_projection=bool(options.get("momentum_projection", True)),
        snapshot_interval=int(options.get("snapshot_interval", 100)),
        init=options.get("init", MaxwellianInit()),
        target_energy=options.get("target_energy"),
        cross_section=options.get("cross_section",
                                  CrossSection(kind="constant", b0_prime=1.0)),
    )

    alphas: tuple[float, ...] = ()
    if "alphas" in options:
        try:
            alphas = tuple(float(a) for a in str(options["alphas"]).split(",") if a)
        except ValueError:
            raise ConfigError("key 'alphas': expected comma-separated numbers",
                              key="alphas")

    default_replicas = {"steady": 8, "sweep": 8, "relax": 20,
                        "lyapunov": 8, "scaling": 20}.get(kind, 8)
    return ExperimentSpec(
        kind=kind, config=config,
        replicas=int(options.get("replicas", default_replicas)),
        burn_in=options.get("burn_in"),
        t_end=options.get("t_end"),
        alphas=alphas,
        delta=float(options.get("delta", 0.15)),
        lam=float(options.get("lambda", 1.5)),
        bins=int(options.get("bins", 64)),
        pair_budget=int(options.get("pair_budget", 200_000)),
        workers=options.get("workers"),
    )


def config_echo(options: dict) -> dict:
    """JSON-ready echo of the typed options (specs rendered as strings)."""
    echo = {}
    for key, value in sorted(options.items()):
        if isinstance(value, CrossSection):
            echo[key] = value.identifier
        elif isinstance(value, (MaxwellianInit, UniformBallInit, BimodalInit)):
            echo[key] = repr(value)
        else:
            echo[key] = value
    return echo


# ---------------------------------------------------------------------------
# Output directory, atomic writes, manifest
# ---------------------------------------------------------------------------

def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record: config echo, seed, version, timing, digests."""

    tool_version: str
    root_seed: int
    config: dict
    started: str = ""
    finished: str = ""
    outputs: dict[str, str] = field(default_factory=dict)

    def start(self) -> "RunManifest":
        self.started = datetime.now(timezone.utc).isoformat()
        return self

    def finish(self, out_dir: Path) -> None:
        self.finished = datetime.now(timezone.utc).isoformat()
        for entry in sorted(out_dir.iterdir()):
            if entry.name == "manifest.json" or entry.name.endswith(".tmp"):
                continue
            self.outputs[entry.name] = sha256_file(entry)
        write_json(out_dir / "manifest.json", {
            "tool": "granubath",
            "version": self.tool_version,
            "root_seed": self.root_seed,
            "config": self.config,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        })


def resolve_out_dir(kind: str, seed: int, explicit: str | None) -> Path:
    """Output directory: --out when given, otherwise timestamp+seed."""
    if explicit:
        path = Path(explicit)
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        path = Path("runs") / f"{kind}-{stamp}-seed{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path
