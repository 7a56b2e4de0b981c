"""Gaussian RBF network with a single scalar output, feature standardization,
and a versioned JSON model file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DomainError, ModelFileError

FORMAT_VERSION = 1


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def kernel(distance, width):
    """Gaussian activation exp(-d^2 / (2 sigma^2)); accepts scalars or arrays."""
    width = np.asarray(width, dtype=float)
    if np.any(width <= 0):
        raise DomainError("kernel width must be positive")
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < 0):
        raise DomainError("distance must be non-negative")
    out = np.exp(-(distance**2) / (2.0 * width**2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FeatureScaler:
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        object.__setattr__(self, "sds", _frozen(self.sds))
        if self.means.shape != self.sds.shape or self.means.ndim != 1:
            raise DomainError("scaler means and sds must be 1-D arrays of equal length")
        if np.any(~(self.sds > 0)):
            raise DomainError("scaler standard deviations must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "FeatureScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.sds

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.sds + self.means


def fit_scaler(X, names=None) -> FeatureScaler:
    """Z-score scaler over the rows of ``X`` (population standard deviation)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise CalibrationError("need at least two rows to fit a scaler")
    sds = X.std(axis=0)
    for i, sd in enumerate(sds):
        if not sd > 0:
            label = names[i] if names is not None else f"column {i}"
            raise CalibrationError(f"feature {label} is constant over the training rows")
    return FeatureScaler(X.mean(axis=0), sds)


@dataclass(frozen=True)
class RbfModel:
    """Centers live in standardized feature space; the output is in degrees."""

    centers: np.ndarray  # (K, M)
    widths: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)
    bias: float
    scaler: FeatureScaler
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        centers = _frozen(self.centers)
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise DomainError("centers must be a non-empty (K, M) array")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", _frozen(self.widths))
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", float(self.bias))
        K, M = centers.shape
        if self.widths.shape != (K,) or self.weights.shape != (K,):
            raise DomainError(f"widths and weights must have shape ({K},)")
        if np.any(~(self.widths > 0)):
            raise DomainError("all widths must be positive")
        if self.scaler.dim != M:
            raise DomainError(f"scaler dimension {self.scaler.dim} does not match input dimension {M}")
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise DomainError("model parameters must be finite")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def W(self) -> np.ndarray:
        """Weights followed by bias, the column vector of the linear output layer."""
        return np.append(self.weights, self.bias)

    def with_params(self, **changes) -> "RbfModel":
        return replace(self, **changes)

    def raw_centers(self) -> np.ndarray:
        return self.scaler.inverse_transform(self.centers)


def _as_rows(model: RbfModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.input_dim)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DomainError(f"expected rows of dimension {model.input_dim}, got shape {X.shape}")
    return X


def hidden_activations(model: RbfModel, Z: np.ndarray) -> np.ndarray:
    """Kernel activations for already-standardized rows ``Z``; shape (N, K)."""
    diff = Z[:, None, :] - model.centers[None, :, :]
    dist = np.sqrt(np.einsum("nkm,nkm->nk", diff, diff))
    return np.exp(-(dist**2) / (2.0 * model.widths**2))


def design_matrix(model: RbfModel, X) -> np.ndarray:
    """N x (K+1) matrix of activations with a trailing bias column of ones."""
    X = _as_rows(model, X)
    V = np.ones((X.shape[0], model.k + 1))
    if X.shape[0]:
        V[:, : model.k] = hidden_activations(model, model.scaler.transform(X))
    return V


def predict(model: RbfModel, X) -> np.ndarray:
    return design_matrix(model, X) @ model.W


def forward(model: RbfModel, x) -> float:
    """Predicted overlap angle in degrees for one raw feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise DomainError(f"expected a vector of dimension {model.input_dim}, got shape {x.shape}")
    return float(predict(model, x[None, :])[0])


def model_to_dict(model: RbfModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "k": model.k,
        "scaler": {"means": model.scaler.means.tolist(), "sds": model.scaler.sds.tolist()},
        "centers": model.centers.tolist(),
        "widths": model.widths.tolist(),
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "metadata": model.metadata,
    }


def model_from_dict(doc: dict) -> RbfModel:
    if not isinstance(doc, dict):
        raise ModelFileError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}")
    try:
        scaler = FeatureScaler(doc["scaler"]["means"], doc["scaler"]["sds"])
        model = RbfModel(
            centers=doc["centers"],
            widths=doc["widths"],
            weights=doc["weights"],
            bias=doc["bias"],
            scaler=scaler,
            metadata=dict(doc.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    if model.k != doc.get("k") or model.input_dim != doc.get("input_dim"):
        raise ModelFileError("declared k/input_dim disagree with stored arrays")
    return model


def save_model(model: RbfModel, path) -> None:
    # json writes floats with repr(), the shortest text that round-trips bit-exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, allow_nan=False) + "\n")


def load_model(path) -> RbfModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
