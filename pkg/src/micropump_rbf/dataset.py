"""Labeled operating-point datasets: generation against the plant and CSV I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .errors import DomainError
from .plant import LabeledPoint, PlantModel, sweep_angle
from .pump import (
    FLUIDS,
    DEFAULT_CORRECTIONS,
    CorrectionTable,
    FluidSpec,
    OperatingPoint,
    PumpParameters,
    make_operating_point,
)

CSV_COLUMNS = (
    "fluid",
    "mu_cP",
    "back_pressure_MPa",
    "period_s",
    "set_flow_mL_min",
    "omega_rev_min",
    "valve_flow_mL_min",
    "optimal_angle_deg",
    "min_pulse_MPa",
    "split",
)
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class GridConfig:
    flow: tuple = (0.1, 5.0)  # mL/min
    pressure: tuple = (1.0, 40.0)  # MPa
    period: tuple = (3.0, 15.0)  # s
    fluids: tuple = ("water", "methanol", "acetonitrile")
    n_points: int = 500
    split: tuple = (400, 50, 50)
    sweep_step: float = 1.0

    def __post_init__(self):
        for name in ("flow", "pressure", "period"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise DomainError(f"{name} range must satisfy 0 < lo < hi, got {(lo, hi)}")
        if not self.fluids or any(f not in FLUIDS for f in self.fluids):
            raise DomainError(f"fluids must be drawn from {sorted(FLUIDS)}")
        if sum(self.split) != self.n_points or any(s < 0 for s in self.split):
            raise DomainError(f"split {self.split} does not partition {self.n_points} points")
        if not self.sweep_step > 0:
            raise DomainError("sweep_step must be positive")


@dataclass
class Dataset:
    records: list  # LabeledPoint
    splits: list  # "train" | "val" | "test", parallel to records

    def __len__(self):
        return len(self.records)

    def subset(self, split: str) -> "Dataset":
        idx = [i for i, s in enumerate(self.splits) if s == split]
        return Dataset([self.records[i] for i in idx], [split] * len(idx))

    def features(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, 4))
        return np.array([r.point.features() for r in self.records])

    def angles(self) -> np.ndarray:
        return np.array([r.angle for r in self.records], dtype=float)

    def counts(self) -> tuple:
        return tuple(self.splits.count(s) for s in SPLITS)


def sample_settings(grid: GridConfig, rng: np.random.Generator) -> list[tuple]:
    """Latin-hypercube over (flow, pressure, period); fluid drawn uniformly."""
    unit = qmc.LatinHypercube(d=3, rng=rng).random(grid.n_points)
    lows = np.array([grid.flow[0], grid.pressure[0], grid.period[0]])
    highs = np.array([grid.flow[1], grid.pressure[1], grid.period[1]])
    values = qmc.scale(unit, lows, highs)
    fluids = rng.integers(0, len(grid.fluids), size=grid.n_points)
    return [(grid.fluids[f], *map(float, v)) for f, v in zip(fluids, values)]


def generate_dataset(
    plant: PlantModel,
    grid: GridConfig = GridConfig(),
    seed: int = 0,
    params: PumpParameters = PumpParameters(),
    table: CorrectionTable = DEFAULT_CORRECTIONS,
    flow_sign: int = 1,
) -> Dataset:
    rng = np.random.default_rng(seed)
    records = []
    for fluid, flow, pressure, period in sample_settings(grid, rng):
        point = make_operating_point(FLUIDS[fluid], pressure, period, flow, params, table, flow_sign)
        records.append(sweep_angle(plant, point, step=grid.sweep_step))
    order = rng.permutation(len(records))
    n_train, n_val, _ = grid.split
    splits = [""] * len(records)
    for rank, i in enumerate(order):
        splits[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return Dataset(records, splits)


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec, split in zip(ds.records, ds.splits):
        p = rec.point
        w.writerow(
            [p.fluid.name]
            + [repr(v) for v in (p.fluid.mu, p.back_pressure, p.period, p.set_flow, p.omega, p.valve_flow)]
            + [repr(rec.angle), repr(rec.min_pulse), split]
        )
    return buf.getvalue()


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(ds))


def read_dataset(path) -> Dataset:
    """Parse a dataset CSV; malformed rows raise DomainError with the line number."""
    records, splits = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise DomainError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        for row in reader:
            try:
                split = row["split"]
                if split not in SPLITS:
                    raise ValueError(f"unknown split {split!r}")
                point = OperatingPoint(
                    fluid=FluidSpec(row["fluid"], float(row["mu_cP"])),
                    back_pressure=float(row["back_pressure_MPa"]),
                    period=float(row["period_s"]),
                    set_flow=float(row["set_flow_mL_min"]),
                    omega=float(row["omega_rev_min"]),
                    valve_flow=float(row["valve_flow_mL_min"]),
                )
                records.append(LabeledPoint(point, float(row["optimal_angle_deg"]), float(row["min_pulse_MPa"])))
                splits.append(split)
            except (TypeError, ValueError) as exc:
                raise DomainError(f"{path}:{reader.line_num}: {exc}") from exc
    return Dataset(records, splits)
