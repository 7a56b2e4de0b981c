"""Artifact-producing steps behind the command line: generate, calibrate,
train, evaluate, predict and report. Every step is a pure function of its
inputs and the run configuration, so repeated runs give identical bytes."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import clustering
from .calibration import calibrate_corrections
from .config import RunConfig, config_to_dict
from .dataset import Dataset, generate_dataset, read_dataset, write_dataset
from .errors import ConfigError, DomainError, ModelFileError
from .evaluation import (
    angles_csv,
    drops_csv,
    evaluate,
    render_angles,
    render_drops,
    render_table,
)
from .pump import overlap_time
from .rbf import FeatureScaler, RbfModel, fit_scaler, load_model, predict, save_model
from .training import TrainingDiverged, initialize_model, train

CLUSTERS_VERSION = 1
MODE_ALIASES = {"weights": ("weights_bias",), "centers": ("centers",), "both": ("weights_bias", "centers")}
MODEL_FILES = {"weights_bias": "model_weights.json", "centers": "model_centers.json"}
STRATEGY_KEYS = {"weights_bias": "weights", "centers": "centers"}
PREDICT_COLUMNS = ("mu_cP", "back_pressure_MPa", "omega_rev_min", "valve_flow_mL_min")
CENTER_HEADERS = ["Center", "mu (cP)", "P (MPa)", "omega (rev/min)", "Q (mL/min)", "angle (deg)"]


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _outdir(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _nan_to_none(values):
    return [None if not math.isfinite(v) else v for v in values]


# generate -----------------------------------------------------------------


def cmd_generate(cfg: RunConfig, out) -> Dataset:
    out = _outdir(out)
    ds = generate_dataset(cfg.plant_model(), cfg.grid, cfg.seeds.data, cfg.pump, cfg.corrections, cfg.flow_sign)
    write_dataset(ds, out / "dataset.csv")
    counts = ds.counts()
    _write_json(
        out / "manifest.json",
        {
            "dataset": "dataset.csv",
            "sha256": sha256_file(out / "dataset.csv"),
            "rows": len(ds),
            "split_counts": {"train": counts[0], "val": counts[1], "test": counts[2]},
            "seeds": config_to_dict(cfg)["seeds"],
            "config": config_to_dict(cfg),
        },
    )
    return ds


# calibrate ----------------------------------------------------------------


def cmd_calibrate(cfg: RunConfig, out):
    out = _outdir(out)
    c = cfg.calibration
    result = calibrate_corrections(
        cfg.dispenser(), bands=cfg.corrections.bands, period=c.period, duration=c.duration, f_pressure=c.f_pressure
    )
    rows, text_rows = [], []
    for band, ref, z_raw, p in zip(result.table.bands, cfg.corrections.bands, result.Z_estimates, result.pressures):
        dF, dZ = band.F - ref.F, band.Z - ref.Z
        rows.append(
            {
                "band_MPa": [band.lo, band.hi],
                "calibration_pressure_MPa": p,
                "F": band.F,
                "Z": band.Z,
                "Z_estimate": z_raw,
                "F_reference": ref.F,
                "Z_reference": ref.Z,
                "dF": dF,
                "dZ": dZ,
            }
        )
        text_rows.append(
            [f"{band.lo:g}-{band.hi:g}", f"{band.F:g}", f"{band.Z:g}", f"{ref.F:g}", f"{ref.Z:g}", f"{dF:+g}", f"{dZ:+g}"]
        )
    _write_json(out / "calibration.json", {"F_estimate": result.F_estimate, "bands": rows, "config": config_to_dict(cfg)["calibration"]})
    headers = ["Band (MPa)", "F", "Z", "F ref", "Z ref", "dF", "dZ"]
    (out / "calibration.txt").write_text(
        f"Recovered correction table (raw F estimate {result.F_estimate:.4f})\n" + render_table(headers, text_rows)
    )
    return result


# train --------------------------------------------------------------------


def _cluster_doc(init, space: str) -> dict:
    res = init.clusters
    return {
        "format_version": CLUSTERS_VERSION,
        "space": space,
        "joint_scaler": {"means": init.joint_scaler.means.tolist(), "sds": init.joint_scaler.sds.tolist()},
        "centers": res.centers.tolist(),
        "raw_centers": init.raw_joint_centers().tolist(),
        "assignments": res.assignments.tolist(),
        "iterations": res.iterations,
        "converged": res.converged,
        "sse": res.sse,
        "quantization_error": res.quantization_error,
        "history": list(res.history),
        "sse_history": list(res.sse_history),
        "seed": res.seed,
        "restart": res.restart,
    }


def load_clusters(path):
    """Joint scaler and clustering-space centers written by the train step."""
    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("format_version") != CLUSTERS_VERSION:
            raise ModelFileError(f"{path}: unsupported clusters format_version {doc.get('format_version')!r}")
        scaler = FeatureScaler(doc["joint_scaler"]["means"], doc["joint_scaler"]["sds"])
        centers = np.asarray(doc["centers"], dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"{path}: cannot load clusters ({exc})") from exc
    if centers.ndim != 2 or centers.shape[1] != scaler.dim:
        raise ModelFileError(f"{path}: centers do not match the joint scaler dimension")
    return scaler, centers


def cluster_mean_predictions(model: RbfModel, X) -> np.ndarray:
    """Mean prediction over the rows nearest each center (input space); a
    center with no rows reports the prediction at its own location."""
    Z = model.scaler.transform(X)
    labels = clustering.assign(Z, model.centers)
    pred = predict(model, X)
    at_center = predict(model, model.raw_centers())
    return np.array([pred[labels == j].mean() if np.any(labels == j) else at_center[j] for j in range(model.k)])


def center_table(model: RbfModel, title: str) -> str:
    angles = model.metadata["center_angles"]
    rows = [[j + 1, *(f"{v:.4f}" for v in (*c, angles[j]))] for j, c in enumerate(model.raw_centers())]
    return f"{title}\n" + render_table(CENTER_HEADERS, rows)


def _losses_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for e, (tr, va) in enumerate(zip(report.train_loss, report.val_loss)):
        w.writerow([e, repr(tr), "" if not math.isfinite(va) else repr(va)])
    return buf.getvalue()


def _report_doc(report, config, status: str) -> dict:
    return {
        "mode": config.mode,
        "status": status,
        "seed": config.seed,
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "converged": report.converged,
        "diagnostic": report.diagnostic,
        "train_loss": _nan_to_none(report.train_loss),
        "val_loss": _nan_to_none(report.val_loss),
    }


def cmd_train(cfg: RunConfig, dataset_path, mode: str, out) -> dict:
    """Shared unsupervised phase, then one supervised run per requested mode.
    Returns the trained models keyed by mode."""
    if mode not in MODE_ALIASES:
        raise ConfigError(f"mode must be one of {sorted(MODE_ALIASES)}, got {mode!r}")
    out = _outdir(out)
    ds = read_dataset(dataset_path)
    tr, va = ds.subset("train"), ds.subset("val")
    if len(tr) < cfg.k:
        raise DomainError(f"training split has {len(tr)} rows, fewer than k={cfg.k}")
    X, y = tr.features(), tr.angles()
    init = initialize_model(
        X, y, k=cfg.k, seed=cfg.seeds.train, restarts=cfg.restarts, max_iter=cfg.max_iter,
        standardize=cfg.standardize, cluster_space=cfg.cluster_space,
    )
    doc = _cluster_doc(init, cfg.cluster_space)
    _write_json(out / "clusters.json", doc)
    if not init.clusters.converged:
        raise DomainError(f"clustering did not converge within {cfg.max_iter} iterations (clusters.json flagged)")
    base = init.model.with_params(
        metadata={**init.model.metadata, "standardize": cfg.standardize, "dataset_sha256": sha256_file(dataset_path)}
    )

    models, tables = {}, []
    for m in MODE_ALIASES[mode]:
        tcfg = cfg.train_config(m)
        try:
            report = train(base, X, y, va.features(), va.angles(), tcfg)
        except TrainingDiverged as exc:
            _write_json(out / f"train_report_{m}.json", _report_doc(exc.report, tcfg, "diverged"))
            (out / f"losses_{m}.csv").write_text(_losses_csv(exc.report))
            raise
        model = report.model
        if m == "weights_bias":
            angles = init.center_angles()
            title = "Centers after unsupervised learning (weights/bias mode)"
        else:
            angles = cluster_mean_predictions(model, X)
            title = "Centers after supervised learning (centers mode)"
        model = model.with_params(metadata={**model.metadata, "center_angles": [float(a) for a in angles]})
        save_model(model, out / MODEL_FILES[m])
        _write_json(out / f"train_report_{m}.json", _report_doc(report, tcfg, "ok"))
        (out / f"losses_{m}.csv").write_text(_losses_csv(report))
        tables.append(center_table(model, title))
        models[m] = model
    (out / "centers.txt").write_text("\n".join(tables))
    return models


# evaluate -----------------------------------------------------------------


def _check_model_matches(model: RbfModel, train_X, path) -> None:
    if model.input_dim != train_X.shape[1]:
        raise DomainError(f"{path}: model expects {model.input_dim} features, dataset has {train_X.shape[1]}")
    standardized = model.metadata.get("standardize", True)
    expected = fit_scaler(train_X) if standardized else FeatureScaler.identity(train_X.shape[1])
    if not (
        np.allclose(model.scaler.means, expected.means, rtol=1e-12, atol=0)
        and np.allclose(model.scaler.sds, expected.sds, rtol=1e-12, atol=0)
    ):
        raise DomainError(f"{path}: model scaler does not match the dataset's training split")


def cmd_evaluate(cfg: RunConfig, model_paths, dataset_path, clusters_path, out, fixed_angle=None):
    out = _outdir(out)
    ds = read_dataset(dataset_path)
    test = ds.subset("test")
    if len(test) == 0:
        raise DomainError(f"{dataset_path}: test split is empty")
    train_X = ds.subset("train").features()
    joint_scaler, joint_centers = load_clusters(clusters_path)
    if joint_centers.shape[1] != train_X.shape[1] + 1:
        raise DomainError(f"{clusters_path}: joint centers have {joint_centers.shape[1]} columns, expected {train_X.shape[1] + 1}")

    loaded = {}
    for path in model_paths:
        model = load_model(path)
        mode = model.metadata.get("mode")
        if mode not in STRATEGY_KEYS:
            raise ModelFileError(f"{path}: metadata lacks a known training mode")
        if mode in loaded:
            raise ConfigError(f"two models given for mode {mode}")
        _check_model_matches(model, train_X, path)
        loaded[mode] = model
    models = {STRATEGY_KEYS[m]: loaded[m] for m in ("weights_bias", "centers") if m in loaded}

    angle = cfg.fixed_angle if fixed_angle is None else fixed_angle
    if not 0.0 <= angle <= 45.0:
        raise ConfigError("fixed angle must lie in [0, 45] degrees")
    report = evaluate(models, test, cfg.plant_model(), joint_scaler, joint_centers, fixed_angle=angle)
    (out / "evaluation.txt").write_text(
        "Average shifting-point pressure drop per cluster\n"
        + render_drops(report)
        + "\nAverage predicted overlap angle per cluster\n"
        + render_angles(report)
    )
    (out / "drops.csv").write_text(drops_csv(report))
    (out / "angles.csv").write_text(angles_csv(report))
    return report


# predict ------------------------------------------------------------------


def read_feature_rows(path):
    """Feature rows from a CSV with named columns; returns (rows, errors) where
    errors carry line numbers."""
    rows, errors = [], []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in PREDICT_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise DomainError(f"{path}:1: missing column(s) {', '.join(missing)}")
        for row in reader:
            try:
                values = [float(row[c]) for c in PREDICT_COLUMNS]
                if not all(math.isfinite(v) for v in values):
                    raise ValueError("non-finite value")
                rows.append(values)
            except (TypeError, ValueError) as exc:
                errors.append(f"{path}:{reader.line_num}: {exc}")
    return rows, errors


def cmd_predict(model_path, features=None, csv_path=None, period=None) -> str:
    """Predicted overlap angle per row as CSV text, optionally with the overlap
    time for a pump period."""
    model = load_model(model_path)
    if (features is None) == (csv_path is None):
        raise ConfigError("give exactly one of --features or --csv")
    if features is not None:
        if len(features) != model.input_dim:
            raise DomainError(f"expected {model.input_dim} feature values, got {len(features)}")
        rows = [list(map(float, features))]
    else:
        rows, errors = read_feature_rows(csv_path)
        if errors:
            raise DomainError("malformed input rows:\n" + "\n".join(errors))
    if period is not None and not period > 0:
        raise DomainError("period must be positive")
    angles = predict(model, np.array(rows, dtype=float).reshape(len(rows), model.input_dim)) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle_deg"] + (["t_op_s"] if period is not None else []))
    for a in angles:
        a = float(a)
        w.writerow([repr(a)] + ([repr(overlap_time(period, a))] if period is not None else []))
    return buf.getvalue()


# report -------------------------------------------------------------------

REPORT_PARTS = ("centers.txt", "evaluation.txt", "calibration.txt")


def cmd_report(out) -> str:
    """Collect the human-readable tables of a run directory into report.txt."""
    out = Path(out)
    parts = [(out / name).read_text() for name in REPORT_PARTS if (out / name).exists()]
    if not parts:
        raise DomainError(f"{out}: no tables to report; run train/evaluate/calibrate first")
    text = "\n".join(parts)
    (out / "report.txt").write_text(text)
    return text


def cmd_run(cfg: RunConfig, out, mode: str = "both", fixed_angle=None):
    """generate -> train -> evaluate -> report, all under one directory."""
    out = _outdir(out)
    cmd_generate(cfg, out)
    models = cmd_train(cfg, out / "dataset.csv", mode, out)
    paths = [out / MODEL_FILES[m] for m in models]
    report = cmd_evaluate(cfg, paths, out / "dataset.csv", out / "clusters.json", out, fixed_angle)
    cmd_report(out)
    return report
