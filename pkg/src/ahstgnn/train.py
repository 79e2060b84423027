"""Data preparation, Adam, the training loop and evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .data import DistanceGraph, Normalizer, TrafficDataset, fit_normalizer, make_windows, split_counts, stack, anchor_range
from .errors import ContractError, TrainingError
from .metrics import EvalReport, report
from .model import ModelConfig, ModelParams, forward, mae_loss

logger = logging.getLogger(__name__)


@dataclass
class WindowArrays:
    """Stacked windows of one split. Inputs/targets normalised; ``y_raw`` in data units."""

    x_r: np.ndarray
    x_d: np.ndarray
    x_w: np.ndarray
    y: np.ndarray
    y_raw: np.ndarray
    anchors: np.ndarray

    def __len__(self) -> int:
        return len(self.anchors)

    def take(self, idx) -> "WindowArrays":
        return WindowArrays(self.x_r[idx], self.x_d[idx], self.x_w[idx], self.y[idx], self.y_raw[idx], self.anchors[idx])


@dataclass
class PreparedData:
    dataset: TrafficDataset
    adjacency: np.ndarray
    normalizer: Normalizer
    train: WindowArrays
    val: WindowArrays
    test: WindowArrays
    T: int
    M: int
    train_end: int  # series index one past the last training target

    @property
    def n_nodes(self) -> int:
        return self.dataset.n_nodes

    @property
    def n_features(self) -> int:
        return self.dataset.n_features


def _arrays(samples, raw_y) -> WindowArrays:
    if not samples:
        shape = (0,)
        return WindowArrays(*(np.zeros(shape) for _ in range(5)), anchors=np.zeros(0, dtype=int))
    s = stack(samples)
    return WindowArrays(s["x_r"], s["x_d"], s["x_w"], s["y"], raw_y, s["anchor"])


def prepare_data(
    ds: TrafficDataset,
    graph: DistanceGraph | np.ndarray,
    T: int = 12,
    M: int = 12,
    L_D: int = 1,
    L_W: int = 1,
    ratios: Sequence[float] = (2, 1, 1),
    normalizer: Normalizer | None = None,
) -> PreparedData:
    """Window the series, split chronologically and z-score with training statistics."""
    A = graph.adjacency if isinstance(graph, DistanceGraph) else np.asarray(graph, dtype=np.float64)
    anchors = list(anchor_range(ds.n_steps, ds.q, T, M, L_D, L_W))
    n_train, n_val, _ = split_counts(len(anchors), ratios)
    train_end = anchors[n_train - 1] + M + 1
    if normalizer is None:
        normalizer = fit_normalizer(ds.series[:train_end])
    norm_series = normalizer.apply(ds.series)
    samples = make_windows(ds, T, T, T, L_D, L_W, M, series=norm_series)
    raw_y = np.stack([ds.series[s.anchor + 1 : s.anchor + M + 1] for s in samples])
    parts = (slice(0, n_train), slice(n_train, n_train + n_val), slice(n_train + n_val, len(samples)))
    arrays = [_arrays(samples[p], raw_y[p]) for p in parts]
    return PreparedData(ds, A, normalizer, *arrays, T=T, M=M, train_end=train_end)


# ------------------------------------------------------------------ optimiser


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: dict[str, ad.Tensor],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update, in place. Missing gradients count as zero."""
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in parameter {name}")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ------------------------------------------------------------------ training


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    seed: int = 0


@dataclass
class TrainState:
    adam: AdamState
    rng_state: dict
    epoch: int = 0
    best_val: float = math.inf
    best_params: dict[str, np.ndarray] | None = None
    bad_epochs: int = 0
    stopped: bool = False

    @classmethod
    def fresh(cls, seed: int) -> "TrainState":
        return cls(adam=AdamState(), rng_state=np.random.default_rng(seed).bit_generator.state)


@dataclass
class TrainResult:
    params: ModelParams
    state: TrainState
    log: list[dict]


def predict_normalized(params: ModelParams, cfg: ModelConfig, w: WindowArrays, A: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = []
    with ad.no_grad():
        for s in range(0, len(w), batch_size):
            sl = slice(s, s + batch_size)
            out.append(forward(params, cfg, w.x_r[sl], w.x_d[sl], w.x_w[sl], A).data)
    return np.concatenate(out) if out else np.zeros((0, cfg.M, cfg.N, cfg.F))


def train(
    params: ModelParams,
    cfg: ModelConfig,
    data: PreparedData,
    tcfg: TrainConfig,
    state: TrainState | None = None,
    on_epoch_end: Callable[[ModelParams, TrainState, dict], None] | None = None,
) -> TrainResult:
    """Seeded mini-batch Adam on the MAE loss with optional early stopping.

    With an empty validation split exactly ``tcfg.epochs`` epochs run and the
    final parameters are returned; otherwise the best-validation snapshot is
    restored. Passing a ``state`` resumes where it stopped.
    """
    if len(data.train) == 0:
        raise ContractError("training split is empty")
    state = TrainState.fresh(tcfg.seed) if state is None else state
    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state
    named = params.named()
    log: list[dict] = []
    has_val = len(data.val) > 0
    n = len(data.train)

    while state.epoch < tcfg.epochs and not state.stopped:
        t0 = time.perf_counter()
        last_good = params.snapshot()
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, tcfg.batch_size):
            b = data.train.take(order[s : s + tcfg.batch_size])
            params.zero_grad()
            loss = mae_loss(forward(params, cfg, b.x_r, b.x_d, b.x_w, data.adjacency), b.y)
            if not np.isfinite(loss.data).all():
                params.restore(last_good)
                raise TrainingError(f"loss became non-finite in epoch {state.epoch + 1}", last_good=params)
            loss.backward()
            try:
                adam_step(named, state.adam, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
            except TrainingError as exc:
                params.restore(last_good)
                raise TrainingError(f"{exc} in epoch {state.epoch + 1}", last_good=params) from None
            total += loss.item() * len(b)
        state.epoch += 1
        state.rng_state = rng.bit_generator.state
        record = {"epoch": state.epoch, "train_mae": total / n, "val_mae": None}
        if has_val:
            val_pred = predict_normalized(params, cfg, data.val, data.adjacency)
            val_mae = float(np.abs(val_pred - data.val.y).mean())
            record["val_mae"] = val_mae
            if val_mae < state.best_val:
                state.best_val = val_mae
                state.best_params = params.snapshot()
                state.bad_epochs = 0
            else:
                state.bad_epochs += 1
                if state.bad_epochs > tcfg.patience:
                    state.stopped = True
        record["wall_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
        log.append(record)
        logger.info("epoch %d train_mae=%.5f val_mae=%s", state.epoch, record["train_mae"], record["val_mae"])
        if on_epoch_end is not None:
            on_epoch_end(params, state, record)

    if has_val and state.best_params is not None:
        params.restore(state.best_params)
    return TrainResult(params=params, state=state, log=log)


def write_log(path, log: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec) + "\n")


def evaluate(
    params: ModelParams,
    cfg: ModelConfig,
    split: WindowArrays,
    normalizer: Normalizer,
    A: np.ndarray,
    tag: str = "ahstgnn",
) -> EvalReport:
    """De-normalised MAE/RMSE, overall and per horizon."""
    if len(split) == 0:
        raise ContractError("cannot evaluate an empty split")
    pred = normalizer.invert(predict_normalized(params, cfg, split, A))
    return report(pred, split.y_raw, model=tag, config_hash=cfg.structural_hash())
