"""Reference predictors: slot-of-week historical average and last-value persistence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass
class HaModel:
    table: np.ndarray  # [7q, N, F]
    q: int
    first_slot: int  # slot-of-week of series index 0

    def slot(self, index) -> np.ndarray:
        return (self.first_slot + np.asarray(index)) % (7 * self.q)


def ha_fit(train_series: np.ndarray, q: int, first_slot: int = 0) -> HaModel:
    """Mean per (slot-of-week, node, feature) over the training series.

    ``first_slot`` is the slot-of-week of ``train_series[0]``. Slots never
    observed fall back to the per-node global mean.
    """
    x = np.asarray(train_series, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    week = 7 * q
    if x.shape[0] < week:
        raise ContractError(f"historical average needs a full week ({week} steps), got {x.shape[0]}")
    slots = (first_slot + np.arange(x.shape[0])) % week
    sums = np.zeros((week,) + x.shape[1:])
    np.add.at(sums, slots, x)
    counts = np.bincount(slots, minlength=week).astype(np.float64)
    table = np.empty_like(sums)
    seen = counts > 0
    table[seen] = sums[seen] / counts[seen][:, None, None]
    table[~seen] = x.mean(axis=0)
    return HaModel(table=table, q=q, first_slot=first_slot)


def ha_predict(model: HaModel, anchors, M: int) -> np.ndarray:
    """Table lookups for targets ``anchor+1 .. anchor+M``; ``[M, N, F]`` or ``[B, M, N, F]``."""
    anchors = np.asarray(anchors)
    steps = anchors[..., None] + np.arange(1, M + 1)
    return model.table[model.slot(steps)]


def persistence_predict(last_observation: np.ndarray, M: int) -> np.ndarray:
    """Repeat the last observed ``[N, F]`` (or ``[B, N, F]``) frame for M steps."""
    last = np.asarray(last_observation, dtype=np.float64)
    return np.repeat(last[..., None, :, :], M, axis=-3)
