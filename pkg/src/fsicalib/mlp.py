"""Dense ReLU network mapping probe observations to parameter triples.

Forward pass, backpropagation, Adam, and early stopping are written out
against numpy arrays.  Inputs and labels are both normalized to [-1, 1]
with corpus statistics; a trained model bundles its layers with those
statistics so prediction works in physical units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    Dataset,
    NormalizationStats,
    denormalize_labels,
    fit_normalization,
    normalize_inputs,
    normalize_labels,
    split,
)


@dataclass
class TrainConfig:
    hidden_layers: tuple = (32, 32)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 2000
    patience: int = 20         # epochs without validation improvement
    min_delta: float = 0.0
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if any(int(h) <= 0 for h in self.hidden_layers):
            raise ValueError(f"hidden widths must be positive: {self.hidden_layers}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError(
                f"validation fraction must be in (0, 1), got {self.val_fraction}"
            )
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    train_losses: list
    val_losses: list
    best_val_loss: float
    stopped_early: bool


def init_params(layer_sizes, seed: int) -> list:
    """He-initialized (W, b) pairs: W ~ N(0, 2/fan_in), b = 0."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive: {sizes}")
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append((w, np.zeros(fan_out)))
    return params


def forward(params, x: np.ndarray) -> np.ndarray:
    """ReLU on hidden layers, identity on the output layer."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    for w, b in params[:-1]:
        a = np.maximum(a @ w + b, 0.0)
    w, b = params[-1]
    return a @ w + b


def loss_and_gradient(params, x: np.ndarray, y: np.ndarray):
    """Mean squared error over every output entry, with its gradient.

    Returns ``(loss, grads)`` where grads mirrors the (W, b) structure.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    acts = [x]
    a = x
    for w, b in params[:-1]:
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    w, b = params[-1]
    out = a @ w + b

    diff = out - y
    loss = float(np.mean(diff**2))
    # d loss / d out, for the mean over batch * n_out entries
    delta = 2.0 * diff / diff.size
    grads = [None] * len(params)
    for layer in range(len(params) - 1, -1, -1):
        a_prev = acts[layer]
        grads[layer] = (a_prev.T @ delta, delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ params[layer][0].T) * (acts[layer] > 0)
    return loss, grads


def evaluate_loss(params, x: np.ndarray, y: np.ndarray) -> float:
    diff = forward(params, x) - np.atleast_2d(y)
    return float(np.mean(diff**2))


class AdamState:
    """First/second moment accumulators for one parameter list."""

    def __init__(self, params, config: TrainConfig):
        self.config = config
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
        self.t = 0

    def update(self, params, grads) -> list:
        c = self.config
        self.t += 1
        bias1 = 1 - c.beta1**self.t
        bias2 = 1 - c.beta2**self.t
        new_params = []
        for i, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw = c.beta1 * mw + (1 - c.beta1) * gw
            mb = c.beta1 * mb + (1 - c.beta1) * gb
            vw = c.beta2 * vw + (1 - c.beta2) * gw**2
            vb = c.beta2 * vb + (1 - c.beta2) * gb**2
            self.m[i] = (mw, mb)
            self.v[i] = (vw, vb)
            w = w - c.learning_rate * (mw / bias1) / (np.sqrt(vw / bias2) + c.eps)
            b = b - c.learning_rate * (mb / bias1) / (np.sqrt(vb / bias2) + c.eps)
            new_params.append((w, b))
        return new_params


def train(
    params,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    config: TrainConfig,
):
    """Minibatch Adam with early stopping on the validation loss.

    Stops once ``patience`` epochs pass without the validation loss
    improving by more than ``min_delta``, and restores the best weights.
    Returns ``(params, report)``.
    """
    rng = np.random.default_rng(config.seed)
    n = len(x_train)
    best_val = np.inf
    best_epoch = 0
    best_params = [(w.copy(), b.copy()) for w, b in params]
    adam = AdamState(params, config)
    train_losses, val_losses = [], []
    stopped_early = False

    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grads = loss_and_gradient(params, x_train[batch], y_train[batch])
            params = adam.update(params, grads)
        train_losses.append(evaluate_loss(params, x_train, y_train))
        val_loss = evaluate_loss(params, x_val, y_val)
        val_losses.append(val_loss)
        if val_loss < best_val - config.min_delta:
            best_val = val_loss
            best_epoch = epoch
            best_params = [(w.copy(), b.copy()) for w, b in params]
        elif epoch - best_epoch >= config.patience:
            stopped_early = True
            break

    report = TrainReport(
        epochs_run=epoch,
        best_epoch=best_epoch,
        train_losses=train_losses,
        val_losses=val_losses,
        best_val_loss=float(best_val),
        stopped_early=stopped_early,
    )
    return best_params, report


@dataclass
class InverterModel:
    """Trained layers plus the statistics needed to use them."""

    params: list
    stats: NormalizationStats
    hidden_layers: tuple
    meta: dict = field(default_factory=dict)

    def predict(self, w: np.ndarray) -> np.ndarray:
        """Physical observations in, physical parameter triples out."""
        w = np.asarray(w, dtype=float)
        single = w.ndim == 1
        x = normalize_inputs(np.atleast_2d(w), self.stats)
        y = forward(self.params, x)
        p = denormalize_labels(y, self.stats)
        return p[0] if single else p


def fit_inverter(
    dataset: Dataset, config: TrainConfig | None = None
) -> tuple[InverterModel, TrainReport]:
    """Normalize, split, train; the returned model predicts in physical units."""
    config = config or TrainConfig()
    if len(dataset) < 2:
        raise ValueError("need at least two samples to split off validation data")
    stats = dataset.meta.stats or fit_normalization(dataset)
    train_set, val_set = split(dataset, config.val_fraction, config.seed)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError(
            f"split left an empty side ({len(train_set)} train, "
            f"{len(val_set)} validation); adjust M or val_fraction"
        )
    x_tr = normalize_inputs(train_set.observations, stats)
    y_tr = normalize_labels(train_set.params, stats)
    x_va = normalize_inputs(val_set.observations, stats)
    y_va = normalize_labels(val_set.params, stats)

    sizes = [dataset.meta.grid.k, *config.hidden_layers, 3]
    params = init_params(sizes, config.seed)
    params, report = train(params, x_tr, y_tr, x_va, y_va, config)
    model = InverterModel(
        params=params,
        stats=stats,
        hidden_layers=tuple(int(h) for h in config.hidden_layers),
        meta={
            "n_train": len(train_set),
            "n_val": len(val_set),
            "dataset_fingerprint": dataset.meta.fingerprint(),
            "seed": config.seed,
        },
    )
    return model, report


def mean_relative_errors(model: InverterModel, dataset: Dataset) -> np.ndarray:
    """Per-parameter mean |predicted - true| / |true| over a corpus."""
    pred = model.predict(dataset.observations)
    rel = np.abs(pred - dataset.params) / np.abs(dataset.params)
    return rel.mean(axis=0)


def save_model(model: InverterModel, path: str | Path) -> None:
    blob = {
        "hidden_layers": list(model.hidden_layers),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()} for w, b in model.params
        ],
        "stats": model.stats.to_dict(),
        "meta": model.meta,
    }
    with Path(path).open("w") as fh:
        json.dump(blob, fh)
        fh.write("\n")


def load_model(path: str | Path) -> InverterModel:
    path = Path(path)
    try:
        with path.open() as fh:
            blob = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not a valid model file: {exc}") from exc
    for key in ("hidden_layers", "layers", "stats"):
        if key not in blob:
            raise ValueError(f"{path} is missing model field '{key}'")
    params = []
    for i, layer in enumerate(blob["layers"]):
        try:
            w = np.asarray(layer["w"], dtype=float)
            b = np.asarray(layer["b"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed layer {i}: {exc}") from exc
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != len(b):
            raise ValueError(f"{path}: inconsistent shapes in layer {i}")
        if params and params[-1][0].shape[1] != w.shape[0]:
            raise ValueError(
                f"{path}: layer {i} input width {w.shape[0]} does not match "
                f"previous output width {params[-1][0].shape[1]}"
            )
        params.append((w, b))
    if not params:
        raise ValueError(f"{path}: model has no layers")
    return InverterModel(
        params=params,
        stats=NormalizationStats.from_dict(blob["stats"]),
        hidden_layers=tuple(blob["hidden_layers"]),
        meta=blob.get("meta", {}),
    )
