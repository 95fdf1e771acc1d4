"""Experiment configuration: TOML file with [data], [model], [train],
[turbulence], and [eval] sections.  Every key has a documented default
except the CSV paths, which become required when [data].source = "csv".
Unknown sections or keys are rejected so typos cannot silently fall back
to defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import InvalidConfig


@dataclass
class DataSection:
    source: str = "synth"
    # synth generator
    n_regions: int = 6
    days: int = 10
    intervals_per_day: int = 24
    base_intensity: float = 100.0
    daily_amplitude: float = 30.0
    weekly_amplitude: float = 10.0
    phase_jitter: float = 0.1
    event_rate: float = 0.0
    event_amplitude: float = 40.0
    noise_std: float = 0.0
    box_km: float = 10.0
    start_time: str = "2024-01-01T00:00:00"
    # csv ingestion (required when source = "csv")
    regions_csv: str = ""
    mobility_csv: str = ""
    context_csv: str = ""
    interval_minutes: int = 60


@dataclass
class ModelSection:
    p: int = 6
    q: int = 3
    rho: float = 0.6
    gcn_layers: int = 2
    gcn_hidden: int = 16
    seq_hidden: int = 32
    seq_layers: int = 2
    embed_width: int = 8
    field_width: int = 4
    interact_width: int = 2
    fm_hidden: int = 8
    fm_layers: int = 2
    evolve_hidden: int = 16
    evolve_layers: int = 2


@dataclass
class TrainSection:
    epochs: int = 1500
    batch_size: int = 8
    learning_rate: float = 0.001
    lr_decay: float = 0.98
    lr_decay_every: int = 10
    train_fraction: float = 0.6
    test_fraction: float = 0.3
    val_fraction: float = 0.1
    seed: int = 42


@dataclass
class TurbulenceSection:
    enabled: bool = True
    noisy_fraction: float = 0.05
    ood_fraction: float = 0.5


@dataclass
class EvalSection:
    mape_floor: float = 1.0
    indicator_layer: str = "noisy"


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    turbulence: TurbulenceSection = field(default_factory=TurbulenceSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


_SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection,
             "turbulence": TurbulenceSection, "eval": EvalSection}


def _build_section(cls, name: str, raw: dict):
    known = {f.name: f.type for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise InvalidConfig(f"unknown key [{name}].{sorted(unknown)[0]}")
    return cls(**raw)


def parse_config(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise InvalidConfig(f"unknown config section [{sorted(unknown)[0]}]")
    sections = {name: _build_section(cls, name, raw.get(name, {}))
                for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**sections)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.data.source not in ("synth", "csv"):
        raise InvalidConfig(f"[data].source must be 'synth' or 'csv', got {cfg.data.source!r}")
    if cfg.data.source == "csv":
        for key in ("regions_csv", "mobility_csv", "context_csv"):
            if not getattr(cfg.data, key):
                raise InvalidConfig(f"missing config key [data].{key} (required for csv source)")
    fracs = (cfg.train.train_fraction, cfg.train.test_fraction, cfg.train.val_fraction)
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise InvalidConfig("[train] split fractions must sum to 1")
    if cfg.model.p < 1 or cfg.model.q < 1:
        raise InvalidConfig("[model].p >= 1 and [model].q >= 1 required")
    if cfg.model.rho < 0:
        raise InvalidConfig("[model].rho must be nonnegative")
    if cfg.turbulence.noisy_fraction < 0 or cfg.turbulence.ood_fraction < 0:
        raise InvalidConfig("[turbulence] fractions must be nonnegative")
    if cfg.eval.indicator_layer not in ("pure", "noisy", "ood"):
        raise InvalidConfig("[eval].indicator_layer must be pure, noisy, or ood")


def load_config(path=None, seed: int | None = None) -> ExperimentConfig:
    """Parse the TOML file (or take all defaults); --seed overrides [train].seed."""
    raw = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from exc
    cfg = parse_config(raw)
    if seed is not None:
        cfg.train.seed = int(seed)
        validate_config(cfg)
    return cfg
