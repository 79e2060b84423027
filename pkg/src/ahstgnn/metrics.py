"""MAE / RMSE reports, overall and per horizon."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError


@dataclass
class EvalReport:
    mae: float
    rmse: float
    mae_per_horizon: list[float]
    rmse_per_horizon: list[float]
    model: str = "ahstgnn"
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def horizons(self) -> int:
        return len(self.mae_per_horizon)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_horizon_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "mae", "rmse"])
            for m, (a, r) in enumerate(zip(self.mae_per_horizon, self.rmse_per_horizon), start=1):
                w.writerow([m, repr(a), repr(r)])


def report(pred: np.ndarray, true: np.ndarray, model: str = "ahstgnn", config_hash: str = "") -> EvalReport:
    """Metrics for ``pred``/``true`` shaped ``[B, M, N, F]`` (horizon on axis 1)."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 4:
        raise ContractError(f"prediction {pred.shape} and truth {true.shape} must both be [B, M, N, F]")
    if pred.shape[0] == 0:
        raise ContractError("cannot evaluate an empty split")
    err = pred - true
    axes = (0, 2, 3)
    mae_h = np.abs(err).mean(axis=axes)
    rmse_h = np.sqrt((err**2).mean(axis=axes))
    return EvalReport(
        mae=float(np.abs(err).mean()),
        rmse=float(np.sqrt((err**2).mean())),
        mae_per_horizon=[float(v) for v in mae_h],
        rmse_per_horizon=[float(v) for v in rmse_h],
        model=model,
        config_hash=config_hash,
    )


def write_comparison(path, reports: list[EvalReport]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "mae", "rmse"])
        for r in reports:
            w.writerow([r.model, repr(r.mae), repr(r.rmse)])
