"""Hybrid training: K-means initialization followed by Adam on either the
output layer (weights and bias) or the center locations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import clustering
from .errors import DomainError
from .rbf import FeatureScaler, RbfModel, design_matrix, fit_scaler, hidden_activations
from .pump import FEATURE_NAMES

MODES = ("weights_bias", "centers")


def sse_loss(predictions, truths) -> float:
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise DomainError("predictions and truths must be 1-D arrays of equal length")
    if predictions.size == 0:
        raise DomainError("loss needs at least one sample")
    r = predictions - truths
    return float(r @ r)


def _check_data(model: RbfModel, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim or y.shape != (X.shape[0],):
        raise DomainError(f"expected X of shape (N, {model.input_dim}) and y of shape (N,)")
    return X, y


def grad_weights(model: RbfModel, X, y) -> np.ndarray:
    """Gradient of the summed squared error w.r.t. [w_1..w_K, bias]."""
    X, y = _check_data(model, X, y)
    V = design_matrix(model, X)
    residual = V @ model.W - y
    return 2.0 * V.T @ residual


def grad_centers(model: RbfModel, X, y) -> np.ndarray:
    """Gradient of the summed squared error w.r.t. the standardized centers, (K, M)."""
    X, y = _check_data(model, X, y)
    Z = model.scaler.transform(X)
    phi = hidden_activations(model, Z)
    residual = phi @ model.weights + model.bias - y
    coef = 2.0 * residual[:, None] * phi * (model.weights / model.widths**2)[None, :]  # (N, K)
    # sum_u coef_uj * (z_u - c_j)
    return coef.T @ Z - coef.sum(axis=0)[:, None] * model.centers


def solve_least_squares(V, y) -> np.ndarray:
    """Minimum-norm minimizer of ||V W - y||_2 via column-pivoted QR.

    Rank-deficient systems go through a complete orthogonal decomposition so
    the returned solution is the minimum-norm one.
    """
    V = np.asarray(V, dtype=float)
    y = np.asarray(y, dtype=float)
    if V.ndim != 2 or y.shape != (V.shape[0],) or V.shape[0] < 1:
        raise DomainError("need V of shape (N, n) and y of shape (N,) with N >= 1")
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(y))):
        raise DomainError("least-squares inputs must be finite")
    n = V.shape[1]
    Q, R, piv = scipy.linalg.qr(V, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(V.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    x = np.zeros(n)
    if rank == 0:
        return x
    qty = Q[:, :rank].T @ y
    if rank == n:
        x[piv] = scipy.linalg.solve_triangular(R[:n, :n], qty)
        return x
    # R[:rank].T = Zq T  =>  V P = Q1 T^T Zq^T
    Zq, T = scipy.linalg.qr(R[:rank, :].T, mode="economic")
    u = scipy.linalg.solve_triangular(T, qty, trans="T")
    x[piv] = Zq @ u
    return x


class Adam:
    """Adam with bias-corrected moment estimates; updates arrays in place."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, p in params.items():
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * (g * g)
            p -= self.lr * (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "weights_bias"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    patience: int = 50
    batch: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.lr > 0:
            raise DomainError("step size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise DomainError("moment decays must lie in (0, 1)")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if self.epochs < 1 or self.patience < 1:
            raise DomainError("epochs and patience must be at least 1")
        if self.batch != "full":
            raise DomainError("only full-batch training is supported")


@dataclass
class TrainReport:
    model: RbfModel
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    converged: bool = False
    diagnostic: str = ""


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


def refresh_widths(model: RbfModel, Z: np.ndarray) -> np.ndarray:
    """Recompute widths from nearest-center membership of standardized rows;
    a center that attracts no rows keeps its previous width."""
    labels = clustering.assign(Z, model.centers)
    out = model.widths.copy()
    for j in range(model.k):
        members = Z[labels == j]
        if members.shape[0] == 0:
            continue
        if members.shape[0] == 1:
            out[j] = clustering.WIDTH_FLOOR
        else:
            out[j] = max(float(np.linalg.norm(members - model.centers[j], axis=1).mean()), clustering.WIDTH_FLOOR)
    return out


def refit_output_layer(model: RbfModel, X, y) -> RbfModel:
    W = solve_least_squares(design_matrix(model, X), y)
    return model.with_params(weights=W[:-1], bias=W[-1])


def train(model: RbfModel, X_train, y_train, X_val=None, y_val=None, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Supervised phase. Model selection uses validation loss when a
    validation split is given, training loss otherwise."""
    X_train, y_train = _check_data(model, X_train, y_train)
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val, y_val = _check_data(model, X_val, y_val)
    Z_train = model.scaler.transform(X_train)
    adam = Adam(config.lr, config.beta1, config.beta2, config.eps)

    def losses(m):
        tr = sse_loss(design_matrix(m, X_train) @ m.W, y_train)
        va = sse_loss(design_matrix(m, X_val) @ m.W, y_val) if has_val else math.nan
        return tr, va

    report = TrainReport(model=model)
    tr, va = losses(model)
    report.train_loss.append(tr)
    report.val_loss.append(va)
    best_score = va if has_val else tr
    stale = 0

    for epoch in range(1, config.epochs + 1):
        if config.mode == "weights_bias":
            W = model.W.copy()
            adam.step({"W": W}, {"W": grad_weights(model, X_train, y_train)})
            model = model.with_params(weights=W[:-1], bias=W[-1])
        else:
            C = model.centers.copy()
            adam.step({"C": C}, {"C": grad_centers(model, X_train, y_train)})
            model = model.with_params(centers=C)
            model = model.with_params(widths=refresh_widths(model, Z_train))
            model = refit_output_layer(model, X_train, y_train)

        tr, va = losses(model)
        report.train_loss.append(tr)
        report.val_loss.append(va)
        report.epochs_run = epoch
        if not math.isfinite(tr) or (has_val and not math.isfinite(va)):
            report.diagnostic = f"non-finite loss at epoch {epoch} (train={tr}, val={va})"
            raise TrainingDiverged(report.diagnostic, report)

        score = va if has_val else tr
        if score < best_score:
            best_score = score
            report.model = model
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                report.converged = True
                break

    report.model = report.model.with_params(
        metadata={
            **report.model.metadata,
            "mode": config.mode,
            "seed": config.seed,
            "epochs": report.epochs_run,
            "best_epoch": report.best_epoch,
            "final_loss": report.train_loss[report.best_epoch],
        }
    )
    return report


@dataclass(frozen=True)
class Initialization:
    """Outcome of the unsupervised phase shared by both supervised modes."""

    model: RbfModel
    joint_scaler: FeatureScaler  # features + angle
    clusters: clustering.ClusterResult  # joint, standardized space

    def center_angles(self) -> np.ndarray:
        """Angle coordinate of each joint center, in degrees."""
        return self.joint_scaler.inverse_transform(self.clusters.centers)[:, -1]

    def raw_joint_centers(self) -> np.ndarray:
        return self.joint_scaler.inverse_transform(self.clusters.centers)


def initialize_model(
    X,
    y,
    k: int = 5,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
    standardize: bool = True,
    cluster_space: str = "raw",
) -> Initialization:
    """Cluster (features, angle) jointly, take widths in the network's input
    space, and solve the output layer by least squares.

    ``cluster_space`` selects whether K-means sees raw units or z-scores;
    ``standardize`` controls the network's own distance metric.
    """
    if cluster_space not in ("raw", "standardized"):
        raise DomainError(f"cluster_space must be 'raw' or 'standardized', got {cluster_space!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m = X.shape[1]
    joint = np.column_stack([X, y])
    if cluster_space == "standardized":
        joint_scaler = fit_scaler(joint, names=(*FEATURE_NAMES, "optimal_angle_deg"))
    else:
        joint_scaler = FeatureScaler.identity(joint.shape[1])
    result = clustering.kmeans(joint_scaler.transform(joint), k, seed=seed, max_iter=max_iter, restarts=restarts)

    if standardize:
        feature_scaler = fit_scaler(X, names=FEATURE_NAMES)
    else:
        feature_scaler = FeatureScaler.identity(m)
    raw_centers = joint_scaler.inverse_transform(result.centers)[:, :m]
    centers = feature_scaler.transform(raw_centers)
    w = clustering.widths(feature_scaler.transform(X), result.assignments, centers)
    model = RbfModel(
        centers=centers,
        widths=w,
        weights=np.zeros(k),
        bias=0.0,
        scaler=feature_scaler,
        metadata={"cluster_seed": seed, "restarts": restarts, "cluster_space": cluster_space},
    )
    model = refit_output_layer(model, X, y)
    return Initialization(model=model, joint_scaler=joint_scaler, clusters=result)
