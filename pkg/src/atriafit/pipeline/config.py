"""Pipeline configuration: TOML schema, defaults, validation and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import tomli
import tomli_w

from ..calibration.space import C_FIXED_KPA, ParameterSpace, alpha_space, table1_space
from ..errors import ConfigError

PAPER_SCALE = {"hm.n_test": 100000, "mcmc.steps": 100000, "mcmc.burn_in": 10000}

# centre-ish default truth for the 9-input verification study
DEFAULT_TRUTH = {
    "alpha_anterior": 1.8,
    "alpha_posterior": 1.6,
    "alpha_septum": 2.2,
    "alpha_lateral": 1.6,
    "alpha_roof": 2.1,
    "EDP": 6.5,
    "ESP": 25.0,
    "k_peri": 0.0025,
    "PTH": 0.72,
}


@dataclass(frozen=True)
class MeshConfig:
    radius_mm: float = 20.0
    refinement: int = 2
    thickness_mm: float = 2.0
    n_steps: int = 10


@dataclass(frozen=True)
class DesignConfig:
    n_wave1: int = 200


@dataclass(frozen=True)
class SimulateConfig:
    workers: int = 1


@dataclass(frozen=True)
class EmulatorSettings:
    n_restarts: int = 8
    cv_folds: int = 5
    learn_nugget: bool = True


@dataclass(frozen=True)
class GsaConfig:
    n_base: int = 16384
    n_bootstrap: int = 100
    C_fixed_kPa: float = C_FIXED_KPA


@dataclass(frozen=True)
class ObservationConfig:
    source: str = "synthetic"  # synthetic | file
    features_file: str = ""
    truth: dict = field(default_factory=lambda: dict(DEFAULT_TRUTH))
    displacement_sd_mm: float = 0.2
    esv_rel_sd: float = 0.05
    high_displacement_sd_mm: float = 1.0
    high_esv_rel_sd: float = 0.20


@dataclass(frozen=True)
class HmConfig:
    first_threshold: float = 3.5
    threshold_step: float = 0.5
    final_threshold: float = 3.0
    n_first: int = 200
    n_later: int = 100
    n_test: int = 20000
    max_waves: int = 5
    stop_reduction: float = 0.01


@dataclass(frozen=True)
class McmcConfig:
    walkers: int = 18
    steps: int = 20000
    burn_in: int = 2000
    thin: int = 10


@dataclass(frozen=True)
class SeedConfig:
    design: int = 1
    train: int = 2
    gsa: int = 3
    hm: int = 4
    mcmc: int = 5


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = "atriafit_run"
    allow_out_of_range: bool = False
    ranges: dict = field(default_factory=dict)  # name -> [lower, upper] overrides
    mesh: MeshConfig = MeshConfig()
    design: DesignConfig = DesignConfig()
    simulate: SimulateConfig = SimulateConfig()
    emulator: EmulatorSettings = EmulatorSettings()
    gsa: GsaConfig = GsaConfig()
    observation: ObservationConfig = ObservationConfig()
    hm: HmConfig = HmConfig()
    mcmc: McmcConfig = McmcConfig()
    seeds: SeedConfig = SeedConfig()

    # -- derived -------------------------------------------------------------

    def space14(self) -> ParameterSpace:
        space = table1_space()
        for name, (lo, hi) in self.ranges.items():
            if name in space.names:
                space = space.with_bounds(name, float(lo), float(hi))
        return space

    def space9(self) -> ParameterSpace:
        s14 = self.space14()
        space = alpha_space(self.gsa.C_fixed_kPa)
        for name in space.names:
            p = s14.parameters[s14.index(name)]
            space = space.with_bounds(name, p.lower, p.upper)
        return space

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def hash(self) -> str:
        """Digest of everything that affects results (the output location does not)."""
        data = self.to_dict()
        data.pop("out_dir")
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where or 'top level'}]")
    kw = {}
    defaults = cls()
    for name, value in data.items():
        default = getattr(defaults, name)
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"[{name}] must be a table")
            kw[name] = _build(type(default), value, name)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name} must be true or false")
            kw[name] = value
        elif isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}.{name} must be an integer")
            kw[name] = value
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{name} must be a number")
            kw[name] = float(value)
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{name} must be a table")
            kw[name] = {**default, **value}  # partial tables override individual entries
        else:
            kw[name] = value
    return replace(defaults, **kw)


def config_from_dict(data: dict) -> PipelineConfig:
    cfg = _build(PipelineConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a TOML config (or defaults) and apply dotted-key overrides."""
    data = {}
    if path is not None:
        try:
            data = tomli.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return config_from_dict(data)


def validate(cfg: PipelineConfig) -> None:
    base = table1_space()
    for name, rng in cfg.ranges.items():
        if name not in base.names:
            raise ConfigError(f"ranges: unknown parameter {name!r}")
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2 and float(rng[0]) < float(rng[1])):
            raise ConfigError(f"ranges.{name} must be [lower, upper] with lower < upper")
        p = base.parameters[base.index(name)]
        if (float(rng[0]) < p.lower or float(rng[1]) > p.upper) and not cfg.allow_out_of_range:
            raise ConfigError(
                f"ranges.{name} = {list(rng)} leaves the default range [{p.lower}, {p.upper}]; "
                "pass --allow-out-of-range to accept")
    space9 = cfg.space9()
    unknown = set(cfg.observation.truth) - set(space9.names)
    if unknown:
        raise ConfigError(f"observation.truth: unknown parameter(s) {sorted(unknown)}")
    missing = set(space9.names) - set(cfg.observation.truth)
    if cfg.observation.source == "synthetic" and missing:
        raise ConfigError(f"observation.truth lacks {sorted(missing)}")
    if cfg.observation.source not in ("synthetic", "file"):
        raise ConfigError("observation.source must be 'synthetic' or 'file'")
    if cfg.observation.source == "file" and not cfg.observation.features_file:
        raise ConfigError("observation.features_file is required when source = 'file'")
    if cfg.observation.source == "synthetic" and not cfg.allow_out_of_range:
        inside = space9.contains([cfg.observation.truth[n] for n in space9.names])[0]
        if not inside:
            raise ConfigError("observation.truth lies outside the parameter ranges")
    if cfg.mesh.refinement < 0 or cfg.mesh.n_steps < 2:
        raise ConfigError("mesh.refinement must be >= 0 and mesh.n_steps >= 2")
    if cfg.mcmc.burn_in >= cfg.mcmc.steps or cfg.mcmc.thin < 1:
        raise ConfigError("mcmc needs burn_in < steps and thin >= 1")
    if cfg.hm.final_threshold <= 0 or cfg.hm.first_threshold < cfg.hm.final_threshold:
        raise ConfigError("hm thresholds must satisfy first >= final > 0")
    if min(cfg.design.n_wave1, cfg.hm.n_first, cfg.hm.n_later, cfg.hm.n_test) < 1:
        raise ConfigError("design sizes must be positive")


def paper_scale(cfg: PipelineConfig) -> PipelineConfig:
    return replace(cfg, hm=replace(cfg.hm, n_test=PAPER_SCALE["hm.n_test"]),
                   mcmc=replace(cfg.mcmc, steps=PAPER_SCALE["mcmc.steps"], burn_in=PAPER_SCALE["mcmc.burn_in"]))


def dump_config(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
