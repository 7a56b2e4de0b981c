"""Run configuration: one JSON document per run, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import Dispenser
from .dataset import GridConfig
from .errors import ConfigError
from .plant import PlantModel
from .pump import DEFAULT_CORRECTIONS, CorrectionTable, PumpParameters
from .training import MODES, TrainConfig

CLUSTER_SPACES = ("raw", "standardized")


@dataclass(frozen=True)
class Seeds:
    plant: int = 0
    data: int = 0
    train: int = 0


@dataclass(frozen=True)
class CalibrationConfig:
    noise_sd: float = 2.0  # uL per volume reading
    period: float = 10.0
    duration: float = 600.0
    f_pressure: float = 2.0
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    plant: PlantModel = PlantModel()
    grid: GridConfig = GridConfig()
    pump: PumpParameters = PumpParameters()
    corrections: CorrectionTable = DEFAULT_CORRECTIONS
    flow_sign: int = 1
    k: int = 5
    restarts: int = 10
    max_iter: int = 300
    standardize: bool = True
    cluster_space: str = "raw"
    train: dict = field(default_factory=lambda: {m: TrainConfig(mode=m) for m in MODES})
    seeds: Seeds = Seeds()
    fixed_angle: float = 30.0
    calibration: CalibrationConfig = CalibrationConfig()
    out: str = "run"

    def __post_init__(self):
        if self.k < 1 or self.restarts < 1 or self.max_iter < 1:
            raise ConfigError("k, restarts and max_iter must be at least 1")
        if self.k > self.grid.split[0]:
            raise ConfigError(f"k={self.k} exceeds the training split size {self.grid.split[0]}")
        if self.cluster_space not in CLUSTER_SPACES:
            raise ConfigError(f"cluster_space must be one of {CLUSTER_SPACES}")
        if self.flow_sign not in (1, -1):
            raise ConfigError("flow_sign must be +1 or -1")
        if not 0.0 <= self.fixed_angle <= 45.0:
            raise ConfigError("fixed_angle must lie in [0, 45] degrees")
        if set(self.train) != set(MODES):
            raise ConfigError(f"train needs one entry per mode {MODES}")

    def with_seed(self, seed: int) -> "RunConfig":
        """Override all three seeds at once."""
        return dataclasses.replace(self, seeds=Seeds(seed, seed, seed))

    def plant_model(self) -> PlantModel:
        return dataclasses.replace(self.plant, seed=self.seeds.plant)

    def train_config(self, mode: str) -> TrainConfig:
        return dataclasses.replace(self.train[mode], seed=self.seeds.train)

    def dispenser(self) -> Dispenser:
        c = self.calibration
        return Dispenser(self.corrections, self.pump, self.flow_sign, c.noise_sd, seed=c.seed)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    kw = dict(data)
    try:
        for key, cls in (("plant", PlantModel), ("grid", GridConfig), ("pump", PumpParameters),
                         ("seeds", Seeds), ("calibration", CalibrationConfig)):
            if key in kw:
                kw[key] = _build(cls, kw[key], key)
        if "corrections" in kw:
            kw["corrections"] = CorrectionTable.from_rows(kw["corrections"])
        if "train" in kw:
            given = kw["train"]
            if not isinstance(given, dict) or set(given) - set(MODES):
                raise ConfigError(f"train: keys must be drawn from {MODES}")
            train = {}
            for mode in MODES:
                entry = dict(given.get(mode, {}))
                if entry.get("mode", mode) != mode:
                    raise ConfigError(f"train.{mode}: mode field disagrees with its key")
                entry["mode"] = mode
                train[mode] = _build(TrainConfig, entry, f"train.{mode}")
            kw["train"] = train
        return RunConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-JSON view used in manifests."""

    def plain(obj):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(obj).items()}

    return {
        "plant": plain(cfg.plant_model()),
        "grid": plain(cfg.grid),
        "pump": plain(cfg.pump),
        "corrections": [list(r) for r in cfg.corrections.to_rows()],
        "flow_sign": cfg.flow_sign,
        "k": cfg.k,
        "restarts": cfg.restarts,
        "max_iter": cfg.max_iter,
        "standardize": cfg.standardize,
        "cluster_space": cfg.cluster_space,
        "train": {m: plain(cfg.train_config(m)) for m in MODES},
        "seeds": plain(cfg.seeds),
        "fixed_angle": cfg.fixed_angle,
        "calibration": plain(cfg.calibration),
        "out": cfg.out,
    }
