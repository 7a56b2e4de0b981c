import csv
import io

import numpy as np
import pytest

from micropump_rbf.dataset import GridConfig, generate_dataset
from micropump_rbf.evaluation import (
    NO_DATA,
    angles_csv,
    applied_angle,
    drops_csv,
    evaluate,
    mean_drop,
    render_angles,
    render_drops,
    strategy_ordering_holds,
)
from micropump_rbf.plant import PlantModel, simulate_pulse
from micropump_rbf.rbf import FeatureScaler, RbfModel

PLANT = PlantModel()


@pytest.fixture(scope="module")
def test_split():
    ds = generate_dataset(PLANT, GridConfig(n_points=120, split=(60, 20, 40)), seed=2)
    return ds.subset("test")


def latent_angle_predictor(plant):
    """Closed-form optimum computed directly from the feature columns."""
    def predict(X):
        mu, P, omega, Q = X.T
        return plant.theta0 + plant.a * P / plant.p_max + plant.b * omega / plant.omega_ref + plant.c * Q / plant.q_ref + plant.d * mu / plant.mu_ref
    return predict


def constant_model(angle):
    return RbfModel(np.zeros((1, 4)), np.ones(1), np.zeros(1), angle, FeatureScaler.identity(4))


def joint_centers_for(test, k=3):
    joint = np.column_stack([test.features(), test.angles()])
    return joint[np.linspace(0, len(test) - 1, k).astype(int)]


def test_oracle_predictions_land_in_residual_band(test_split):
    centers = joint_centers_for(test_split)
    report = evaluate({"oracle": latent_angle_predictor(PLANT)}, test_split, PLANT, FeatureScaler.identity(5), centers)
    slack = 3 * PLANT.noise_sd
    for v in report.column("oracle"):
        if v is not None:
            assert PLANT.rho_lo - slack <= v <= PLANT.rho_hi + slack


def test_no_overlap_column_is_resummed(test_split):
    centers = joint_centers_for(test_split)
    report = evaluate({}, test_split, PLANT, FeatureScaler.identity(5), centers)
    joint = np.column_stack([test_split.features(), test_split.angles()])
    nearest = [int(np.argmin([np.sum((row - c) ** 2) for c in centers])) for row in joint]
    for j in range(3):
        members = [r for r, lab in zip(test_split.records, nearest) if lab == j]
        expected = sum(simulate_pulse(PLANT, r.point, 0.0) for r in members) / len(members)
        assert report.column("none")[j] == pytest.approx(expected, rel=1e-12)
        assert report.counts[j] == len(members)


def test_strategy_columns_and_fixed_angle(test_split):
    centers = joint_centers_for(test_split)
    models = {"weights": constant_model(20.0), "centers": constant_model(22.0)}
    report = evaluate(models, test_split, PLANT, FeatureScaler.identity(5), centers, fixed_angle=30.0)
    assert report.strategies == ("none", "fixed", "weights", "centers")
    assert report.fixed_angle == 30.0
    for j, angles in enumerate(report.mean_angles):
        if angles is not None:
            assert angles == {"weights": 20.0, "centers": 22.0}
    assert all(v >= 0 for row in report.drops if row for v in row)


def test_predictions_are_clamped():
    assert applied_angle(-3.0) == 5.0 and applied_angle(60.0) == 45.0 and applied_angle(17.0) == 17.0


def test_empty_cluster_renders_marker(test_split):
    centers = np.vstack([joint_centers_for(test_split, 2), np.full((1, 5), 1e6)])
    report = evaluate({"weights": constant_model(20.0)}, test_split, PLANT, FeatureScaler.identity(5), centers)
    assert report.counts[2] == 0 and report.drops[2] is None
    assert NO_DATA in render_drops(report).splitlines()[-1]
    assert NO_DATA in render_angles(report).splitlines()[-1]
    rows = list(csv.reader(io.StringIO(drops_csv(report))))
    assert rows[0] == ["cluster", "n", "none", "fixed", "weights"]
    assert rows[3][2:] == ["", "", ""]
    assert mean_drop(report, "none") == pytest.approx(np.mean([report.drops[0][0], report.drops[1][0]]))


def test_tables_use_four_decimals(test_split):
    centers = joint_centers_for(test_split)
    report = evaluate({"weights": constant_model(20.0)}, test_split, PLANT, FeatureScaler.identity(5), centers)
    body = render_drops(report).splitlines()[2]
    values = body.split()[2:]
    assert all(len(v.split(".")[1]) == 4 for v in values)
    full = list(csv.reader(io.StringIO(drops_csv(report))))[1][2]
    assert float(full) == report.drops[0][0]
    assert list(csv.reader(io.StringIO(angles_csv(report))))[0] == ["cluster", "weights"]


def test_ordering_helper():
    from micropump_rbf.evaluation import ClusterReport

    good = ClusterReport(("none", "fixed", "w"), (3,), ((20.0, 1.0, 0.2),), ({"w": 20.0},), 30.0)
    bad = ClusterReport(("none", "fixed", "w"), (3,), ((20.0, 0.1, 0.2),), ({"w": 20.0},), 30.0)
    assert strategy_ordering_holds(good) and not strategy_ordering_holds(bad)
    assert mean_drop(good, "w") == 0.2
