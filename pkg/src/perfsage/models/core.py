"""Runtime predictors: augmented NN (nnc), plain NN (nn) and the regression baselines.

Families and the inputs they see:

========  =====================================  =========================
family    inputs                                 learner
========  =====================================  =========================
``nnc``   kernel/hardware features + ``c``       tiny ReLU MLP
``nn``    kernel/hardware features               tiny ReLU MLP
``const`` ``c`` only                             least squares
``lrc``   kernel/hardware features + ``c``       least squares
``nlrc``  kernel/hardware features + ``c``       random forest
========  =====================================  =========================

All learners work on features and targets min-max scaled to [0, 1] with
train-set statistics; predictions are mapped back to seconds and clamped at
``MIN_PREDICTION``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from perfsage.errors import (
    FitError,
    ModelLoadError,
    ParameterError,
    SchemaMismatchError,
    UnsupportedModelError,
)
from perfsage.kernels.params import KernelKind
from perfsage.models import forest as _forest
from perfsage.models import nn as _nn
from perfsage.models.features import COMPLEXITY, FeatureVector

FAMILIES = ("nnc", "nn", "const", "lrc", "nlrc")
NN_FAMILIES = ("nnc", "nn")
LEARNING_RATES = (1e-2, 1e-3, 1e-4)
MAX_LIGHTWEIGHT_PARAMS = 75
MIN_PREDICTION = 1e-9
RIDGE = 1e-8
FOREST_TREES = 100
FOREST_DEPTH = 12
UNCONSTRAINED_WIDTH_FACTOR = 8

MODEL_FORMAT = "perfsage-model"
MODEL_VERSION = 1

# replaced in tests to make recorded training times reproducible
clock = time.perf_counter

# Hidden widths per (kind, has-thread-feature). One hidden layer for the four
# prediction kernels, two for the schedule-selection kernel.
_DEFAULT_WIDTHS = {
    (KernelKind.MM, True): (7,),
    (KernelKind.MV, True): (7,),
    (KernelKind.MC, True): (9,),
    (KernelKind.MP, True): (8,),
    (KernelKind.MM, False): (5,),
    (KernelKind.MV, False): (12,),
    (KernelKind.MC, False): (7,),
    (KernelKind.MP, False): (9,),
    (KernelKind.BLUR, False): (5, 5),
    (KernelKind.BLUR, True): (5, 5),
}


@dataclass(frozen=True)
class ModelConfig:
    family: str = "nnc"
    hidden_widths: tuple[int, ...] = (7,)
    activation: str = "relu"
    learning_rate: float = 1e-2
    epochs: int = 5000
    seed: int = 0
    unconstrained: bool = False
    # independent initializations; the one with the lowest final train loss wins
    restarts: int = 4
    # "prediction" nets have one hidden layer, "selection" nets two
    purpose: str = "prediction"
    # min-max scale log2(x) instead of x; suits power-of-two schedule factors
    log_inputs: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.family not in FAMILIES:
            raise ParameterError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.activation != "relu":
            raise ParameterError(f"only relu activation is supported, got {self.activation!r}")
        if self.purpose not in ("prediction", "selection"):
            raise ParameterError(f"purpose must be 'prediction' or 'selection', got {self.purpose!r}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not any(math.isclose(self.learning_rate, lr) for lr in LEARNING_RATES):
            raise ParameterError(f"learning_rate must be one of {LEARNING_RATES}, got {self.learning_rate}")
        if self.restarts < 1:
            raise ParameterError(f"restarts must be >= 1, got {self.restarts}")
        if self.family in NN_FAMILIES:
            if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
                raise ParameterError(f"hidden widths must be positive, got {self.hidden_widths}")
            depth = 1 if self.purpose == "prediction" else 2
            if not self.unconstrained and len(self.hidden_widths) != depth:
                raise ParameterError(
                    f"lightweight {self.purpose} nets need {depth} hidden layer(s), got {self.hidden_widths}"
                )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def default_config(kind, family: str = "nnc", threads: bool = True, unconstrained: bool = False, **overrides):
    """Shipped configuration for a kernel kind; widths scale up when unconstrained."""
    kind = KernelKind.parse(kind)
    widths = _DEFAULT_WIDTHS[(kind, threads and kind is not KernelKind.BLUR)]
    if unconstrained:
        widths = tuple(w * UNCONSTRAINED_WIDTH_FACTOR for w in widths)
    selection = kind is KernelKind.BLUR
    fields = dict(
        family=family,
        hidden_widths=widths,
        unconstrained=unconstrained,
        purpose="selection" if selection else "prediction",
        log_inputs=selection,
    )
    if unconstrained:
        # wide nets rarely land in the poor minima that restarts guard against
        fields["restarts"] = 1
    fields.update(overrides)
    return ModelConfig(**fields)


def input_names(family: str, schema: Sequence[str]) -> tuple[str, ...]:
    """Model inputs for a family given a dataset's (non-augmented) feature schema."""
    schema = tuple(n for n in schema if n != COMPLEXITY)
    if family == "nn":
        return schema
    if family == "const":
        return (COMPLEXITY,)
    return schema + (COMPLEXITY,)


@dataclass
class Normalizer:
    """Min-max scaling; with ``log_x`` the feature stats are taken on log2(x)."""

    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float
    log_x: bool = False

    @classmethod
    def fit(cls, X, y, log_x: bool = False) -> "Normalizer":
        Z = _log2_inputs(X) if log_x else X
        return cls(Z.min(axis=0), Z.max(axis=0), float(y.min()), float(y.max()), log_x)

    @property
    def x_scale(self):
        span = self.x_max - self.x_min
        return np.where(span > 0, span, 1.0)

    @property
    def y_scale(self):
        span = self.y_max - self.y_min
        return span if span > 0 else 1.0

    def fx(self, X):
        if self.log_x:
            X = _log2_inputs(X)
        return (X - self.x_min) / self.x_scale

    def fy(self, y):
        return (y - self.y_min) / self.y_scale

    def inv_y(self, yn):
        return yn * self.y_scale + self.y_min

    def to_dict(self):
        return {
            "x_min": self.x_min.tolist(),
            "x_max": self.x_max.tolist(),
            "y_min": self.y_min,
            "y_max": self.y_max,
            "log_x": self.log_x,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["x_min"], float),
            np.asarray(d["x_max"], float),
            float(d["y_min"]),
            float(d["y_max"]),
            bool(d.get("log_x", False)),
        )


def _log2_inputs(X):
    X = np.asarray(X, dtype=np.float64)
    if np.any(X <= 0):
        raise ParameterError("log-scaled inputs must be positive")
    return np.log2(X)


@dataclass
class TrainedModel:
    config: ModelConfig
    schema: tuple[str, ...]
    norm: Normalizer
    layers: list = field(default_factory=list)
    trees: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    kind: Optional[KernelKind] = None

    @property
    def family(self) -> str:
        return self.config.family

    @property
    def param_count(self) -> int:
        return param_count(self)

    def _raw(self, Xn):
        if self.family == "nlrc":
            return _forest.predict_forest(self.trees, Xn)
        return _nn.forward(self.layers, Xn)

    def predict_matrix(self, X) -> np.ndarray:
        """Predict seconds for rows whose columns follow ``self.schema``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.schema):
            raise SchemaMismatchError(f"expected {len(self.schema)} features {self.schema}, got {X.shape[1]}")
        out = self.norm.inv_y(self._raw(self.norm.fx(X)))
        return np.maximum(out, MIN_PREDICTION)

    def predict(self, features) -> float:
        """Predict seconds for one feature vector.

        A :class:`FeatureVector` is matched by name, so it may carry extra
        features (e.g. ``c`` for the plain NN); a bare sequence must match the
        schema exactly.
        """
        if isinstance(features, FeatureVector):
            x = features.select(self.schema)
        else:
            x = np.asarray(features, dtype=np.float64)
            if x.shape != (len(self.schema),):
                raise SchemaMismatchError(f"expected {len(self.schema)} features {self.schema}, got shape {x.shape}")
        return float(self.predict_matrix(x[None, :])[0])


def predict(model: TrainedModel, features) -> float:
    return model.predict(features)


def param_count(model: TrainedModel) -> int:
    if model.family not in NN_FAMILIES:
        raise UnsupportedModelError(f"param_count is defined for neural families, not {model.family!r}")
    return sum((W.shape[0] + 1) * W.shape[1] for W, _ in model.layers)


def _check_data(X, y, minimum):
    if X.shape[0] < minimum:
        raise ParameterError(f"need at least {minimum} training samples, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ParameterError("training data contains non-finite values")


def _data(train, names):
    """(X, y) from a Dataset or an (X, y) pair already in ``names`` order."""
    if isinstance(train, tuple):
        X, y = train
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)
    return train.matrix(names), train.targets()


def fit_nn(X, y, names, config: ModelConfig, kind=None) -> TrainedModel:
    _check_data(X, y, 2)
    n_params = _nn.count_params(X.shape[1], config.hidden_widths)
    if not config.unconstrained and n_params > MAX_LIGHTWEIGHT_PARAMS:
        raise ParameterError(
            f"lightweight model would have {n_params} parameters (limit {MAX_LIGHTWEIGHT_PARAMS})"
        )
    norm = Normalizer.fit(X, y, config.log_inputs)
    rng = np.random.default_rng(config.seed)
    Xn, yn = norm.fx(X), norm.fy(y)
    start = clock()
    layers, trace = None, None
    for _ in range(config.restarts):
        init = _nn.init_layers(X.shape[1], config.hidden_widths, rng)
        cand, cand_trace = _nn.train_adam(init, Xn, yn, config.epochs, config.learning_rate)
        if trace is None or cand_trace[-1] < trace[-1]:
            layers, trace = cand, cand_trace
    elapsed = clock() - start
    model = TrainedModel(config, tuple(names), norm, layers=layers, loss_trace=trace, kind=kind)
    model.metrics = {
        "train_seconds": elapsed,
        "final_loss": trace[-1],
        "param_count": param_count(model),
        "restarts": config.restarts,
    }
    return model


def train_nn(train, config: ModelConfig) -> TrainedModel:
    """Train an ``nnc`` or ``nn`` model on a Dataset (or an (X, y) pair with columns already chosen)."""
    if config.family not in NN_FAMILIES:
        raise ParameterError(f"train_nn handles {NN_FAMILIES}, got {config.family!r}")
    names = input_names(config.family, train.schema) if not isinstance(train, tuple) else None
    X, y = _data(train, names)
    if names is None:
        names = tuple(f"x{i}" for i in range(X.shape[1]))
    return fit_nn(X, y, names, config, kind=getattr(train, "kind", None))


def fit_linear(X, y, names, config: ModelConfig, kind=None) -> TrainedModel:
    _check_data(X, y, 2)
    norm = Normalizer.fit(X, y, config.log_inputs)
    Xn, yn = norm.fx(X), norm.fy(y)
    A = np.hstack([Xn, np.ones((Xn.shape[0], 1))])
    gram = A.T @ A + RIDGE * np.eye(A.shape[1])
    try:
        coef = np.linalg.solve(gram, A.T @ yn)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise FitError("normal equations produced non-finite coefficients")
    layers = [(coef[:-1, None].copy(), coef[-1:].copy())]
    resid = A @ coef - yn
    model = TrainedModel(config, tuple(names), norm, layers=layers, kind=kind)
    model.metrics = {"train_mse": float(np.mean(resid * resid))}
    return model


def _train_linear(train, family, config):
    config = config or ModelConfig(family=family)
    names = input_names(family, train.schema)
    X, y = _data(train, names)
    return fit_linear(X, y, names, config, kind=train.kind)


def train_const(train, config: Optional[ModelConfig] = None) -> TrainedModel:
    """Least squares on the operation count alone."""
    return _train_linear(train, "const", config)


def train_lrc(train, config: Optional[ModelConfig] = None) -> TrainedModel:
    """Least squares on all features plus the operation count."""
    return _train_linear(train, "lrc", config)


def linear_coefficients(model: TrainedModel) -> tuple[np.ndarray, float]:
    """(weights, intercept) of a linear model in raw feature/second units."""
    if model.family not in ("const", "lrc"):
        raise UnsupportedModelError(f"{model.family!r} is not a linear model")
    W, b = model.layers[0]
    w = W[:, 0] / model.norm.x_scale * model.norm.y_scale
    intercept = (b[0] - float(np.sum(W[:, 0] * model.norm.x_min / model.norm.x_scale))) * model.norm.y_scale
    return w, intercept + model.norm.y_min


def train_nlrc(train, config: Optional[ModelConfig] = None) -> TrainedModel:
    """Random forest on all features plus the operation count."""
    config = config or ModelConfig(family="nlrc")
    names = input_names("nlrc", train.schema)
    X, y = _data(train, names)
    _check_data(X, y, 10)
    norm = Normalizer.fit(X, y, config.log_inputs)
    trees = _forest.fit_forest(norm.fx(X), norm.fy(y), FOREST_TREES, FOREST_DEPTH, seed=config.seed)
    model = TrainedModel(config, tuple(names), norm, trees=trees, kind=train.kind)
    model.metrics = {"trees": len(trees), "nodes": int(sum(len(t.value) for t in trees))}
    return model


def train(train_set, config: ModelConfig) -> TrainedModel:
    """Dispatch on ``config.family``."""
    if config.family in NN_FAMILIES:
        return train_nn(train_set, config)
    if config.family == "const":
        return train_const(train_set, config)
    if config.family == "lrc":
        return train_lrc(train_set, config)
    return train_nlrc(train_set, config)


# -- persistence ----------------------------------------------------------


def model_to_dict(model: TrainedModel) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.family,
        "kind": model.kind.value if model.kind is not None else None,
        "schema": list(model.schema),
        "norm_stats": model.norm.to_dict(),
        "layers": [
            {
                "rows": int(W.shape[0]),
                "cols": int(W.shape[1]),
                "weights": W.ravel().tolist(),
                "biases": b.tolist(),
            }
            for W, b in model.layers
        ],
        "config": model.config.to_dict(),
        "metrics": model.metrics,
        "loss_trace": list(model.loss_trace),
    }
    if model.trees:
        doc["trees"] = [t.to_dict() for t in model.trees]
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelLoadError("not a perfsage model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelLoadError(f"unsupported model version {doc.get('version')!r} (expected {MODEL_VERSION})")
    try:
        config = ModelConfig.from_dict(doc["config"])
        if config.family != doc["family"]:
            raise ModelLoadError(f"family {doc['family']!r} disagrees with config {config.family!r}")
        schema = tuple(doc["schema"])
        norm = Normalizer.from_dict(doc["norm_stats"])
        if len(norm.x_min) != len(schema):
            raise ModelLoadError("normalization stats do not match the feature schema")
        layers = []
        for layer in doc["layers"]:
            W = np.asarray(layer["weights"], dtype=np.float64).reshape(layer["rows"], layer["cols"])
            b = np.asarray(layer["biases"], dtype=np.float64)
            if b.shape != (layer["cols"],):
                raise ModelLoadError("bias length does not match layer width")
            layers.append((W, b))
        if layers and layers[0][0].shape[0] != len(schema):
            raise ModelLoadError("first layer width does not match the feature schema")
        trees = [_forest.Tree.from_dict(t) for t in doc.get("trees", [])]
        if config.family == "nlrc" and not trees:
            raise ModelLoadError("forest model has no trees")
        if config.family != "nlrc" and not layers:
            raise ModelLoadError("model has no layers")
        kind = KernelKind.parse(doc["kind"]) if doc.get("kind") else None
    except ModelLoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model document: {exc!r}") from exc
    return TrainedModel(
        config, schema, norm, layers, trees, list(doc.get("loss_trace", [])), dict(doc.get("metrics", {})), kind
    )


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path) -> TrainedModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelLoadError(f"cannot read model {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)

