"""Per-cluster comparison of overlap-angle strategies on the synthetic plant."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import clustering
from .dataset import Dataset
from .plant import SWEEP_HI, SWEEP_LO, PlantModel, simulate_pulse
from .rbf import FeatureScaler, RbfModel, predict

NO_DATA = "n/a"
STRATEGY_LABELS = {
    "none": "No overlap",
    "fixed": "Fixed angle",
    "weights": "Trained weights/bias",
    "centers": "Trained centers",
}


@dataclass(frozen=True)
class ClusterReport:
    strategies: tuple  # column keys, e.g. ("none", "fixed", "weights", "centers")
    counts: tuple  # test points per cluster
    drops: tuple  # per cluster: tuple of mean drop per strategy, or None when empty
    mean_angles: tuple  # per cluster: {model name: mean predicted angle} or None
    fixed_angle: float

    @property
    def k(self) -> int:
        return len(self.counts)

    def column(self, strategy: str) -> list:
        j = self.strategies.index(strategy)
        return [None if row is None else row[j] for row in self.drops]


def assign_test_points(test: Dataset, joint_scaler: FeatureScaler, joint_centers: np.ndarray) -> np.ndarray:
    """Nearest joint center for each (features, label angle) row, standardized."""
    if len(test) == 0:
        return np.empty(0, dtype=int)
    joint = np.column_stack([test.features(), test.angles()])
    return clustering.assign(joint_scaler.transform(joint), joint_centers)


def applied_angle(angle: float) -> float:
    """Predictions are clamped to the sweep window before they reach the pump."""
    return min(max(angle, SWEEP_LO), SWEEP_HI)


def _predict(model, X) -> np.ndarray:
    if X.shape[0] == 0:
        return np.empty(0)
    out = predict(model, X) if isinstance(model, RbfModel) else model(X)
    return np.asarray(out, dtype=float)


def evaluate(
    models: dict,
    test: Dataset,
    plant: PlantModel,
    joint_scaler: FeatureScaler,
    joint_centers: np.ndarray,
    fixed_angle: float = 30.0,
) -> ClusterReport:
    """Average the simulated shifting-point drop per cluster for no overlap, a
    fixed angle, and each trained model (in ``models`` order). A model may also
    be any callable mapping a feature matrix to angles."""
    labels = assign_test_points(test, joint_scaler, joint_centers)
    X = test.features()
    predictions = {name: _predict(m, X) for name, m in models.items()}
    strategies = ("none", "fixed", *models)

    per_point = np.empty((len(test), len(strategies)))
    for u, rec in enumerate(test.records):
        angles = [0.0, fixed_angle] + [applied_angle(float(predictions[n][u])) for n in models]
        per_point[u] = [simulate_pulse(plant, rec.point, a) for a in angles]

    k = joint_centers.shape[0]
    counts, drops, mean_angles = [], [], []
    for j in range(k):
        mask = labels == j
        counts.append(int(mask.sum()))
        if not mask.any():
            drops.append(None)
            mean_angles.append(None)
            continue
        drops.append(tuple(float(v) for v in per_point[mask].mean(axis=0)))
        mean_angles.append({n: float(predictions[n][mask].mean()) for n in models})
    return ClusterReport(tuple(strategies), tuple(counts), tuple(drops), tuple(mean_angles), float(fixed_angle))


def _fmt(v) -> str:
    return NO_DATA if v is None else f"{v:.4f}"


def render_table(headers, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(str(h).rjust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(c).rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def _strategy_header(report: ClusterReport, s: str) -> str:
    if s == "fixed":
        return f"Fixed {report.fixed_angle:g} deg (MPa)"
    return f"{STRATEGY_LABELS.get(s, s)} (MPa)"


def render_drops(report: ClusterReport) -> str:
    headers = ["Cluster", "N"] + [_strategy_header(report, s) for s in report.strategies]
    rows = []
    for j in range(report.k):
        row = report.drops[j]
        values = [None] * len(report.strategies) if row is None else row
        rows.append([j + 1, report.counts[j], *(_fmt(v) for v in values)])
    return render_table(headers, rows)


def render_angles(report: ClusterReport) -> str:
    names = [s for s in report.strategies if s not in ("none", "fixed")]
    headers = ["Cluster"] + [f"{STRATEGY_LABELS.get(n, n)} angle (deg)" for n in names]
    rows = []
    for j in range(report.k):
        angles = report.mean_angles[j]
        rows.append([j + 1, *(_fmt(None if angles is None else angles[n]) for n in names)])
    return render_table(headers, rows)


def drops_csv(report: ClusterReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster", "n", *report.strategies])
    for j in range(report.k):
        row = report.drops[j]
        values = [""] * len(report.strategies) if row is None else [repr(v) for v in row]
        w.writerow([j + 1, report.counts[j], *values])
    return buf.getvalue()


def angles_csv(report: ClusterReport) -> str:
    names = [s for s in report.strategies if s not in ("none", "fixed")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster", *names])
    for j in range(report.k):
        angles = report.mean_angles[j]
        w.writerow([j + 1, *("" if angles is None else repr(angles[n]) for n in names)])
    return buf.getvalue()


def strategy_ordering_holds(report: ClusterReport) -> bool:
    """none > fixed > every trained strategy, in every non-empty cluster."""
    for row in report.drops:
        if row is None:
            continue
        none, fixed, *trained = row
        if not (none > fixed and all(fixed > t for t in trained)):
            return False
    return True


def mean_drop(report: ClusterReport, strategy: str) -> float:
    """Unweighted mean over non-empty clusters."""
    vals = [v for v in report.column(strategy) if v is not None]
    return float(np.mean(vals)) if vals else math.nan
