"""Dataset ingestion, periodic windows, splits, distance graphs and synthetic data."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, IngestionError, WindowingError

logger = logging.getLogger(__name__)

DEFAULT_START = datetime(2021, 1, 4)  # a Monday


@dataclass
class TrafficDataset:
    """Raw series ``[S, N, F]`` sampled ``q`` times per day."""

    series: np.ndarray
    q: int
    start_timestamp: datetime = DEFAULT_START
    node_coords: np.ndarray | None = None
    distances: np.ndarray | None = None

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.series.ndim == 2:
            self.series = self.series[:, :, None]
        if self.series.ndim != 3:
            raise ContractError(f"series must be [S, N, F], got {self.series.shape}")
        if self.n_nodes < 2:
            raise ContractError("a traffic graph needs at least two nodes")
        if not np.isfinite(self.series).all():
            raise ContractError("series contains non-finite values")
        if self.q < 1:
            raise ContractError("q (samples per day) must be positive")

    @property
    def n_steps(self) -> int:
        return self.series.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.series.shape[1]

    @property
    def n_features(self) -> int:
        return self.series.shape[2]

    @property
    def slot(self) -> timedelta:
        return timedelta(seconds=86400 / self.q)

    def timestamp(self, index: int) -> datetime:
        return self.start_timestamp + index * self.slot

    def slot_of_week(self, index) -> np.ndarray:
        """Slot-of-week (0 = Monday 00:00) for series position(s) ``index``."""
        midnight = self.start_timestamp.replace(hour=0, minute=0, second=0, microsecond=0)
        offset = round((self.start_timestamp - midnight) / self.slot)
        first = self.start_timestamp.weekday() * self.q + offset
        return (first + np.asarray(index)) % (7 * self.q)

    def pairwise_distances(self) -> np.ndarray:
        if self.distances is not None:
            return np.asarray(self.distances, dtype=np.float64)
        if self.node_coords is None:
            raise ContractError("dataset has neither node coordinates nor distances")
        return coords_to_distances(self.node_coords)


@dataclass
class PeriodicSample:
    x_r: np.ndarray
    x_d: np.ndarray
    x_w: np.ndarray
    y: np.ndarray
    anchor: int


@dataclass
class DistanceGraph:
    adjacency: np.ndarray
    sigma: float
    kappa: float


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


# ------------------------------------------------------------------ ingestion


def load_csv(path_series, path_coords=None, q: int = 96) -> TrafficDataset:
    """Read ``timestamp,node_0,...`` rows (contiguous slots) and optional ``node_id,x,y`` coordinates."""
    path_series = Path(path_series)
    slot = timedelta(seconds=86400 / q)
    stamps: list[datetime] = []
    rows: list[list[float]] = []
    with path_series.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "timestamp" or len(header) < 3:
            raise IngestionError(f"{path_series}: header must be timestamp,node_0,...")
        expected = [f"node_{i}" for i in range(len(header) - 1)]
        if header[1:] != expected:
            raise IngestionError(f"{path_series}: node columns must be named node_0..node_{len(expected) - 1}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path_series}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                ts = datetime.fromisoformat(row[0])
            except ValueError:
                raise IngestionError(f"{path_series}: row {lineno} has a bad timestamp {row[0]!r}") from None
            if stamps:
                step = ts - stamps[-1]
                if step == timedelta(0):
                    raise IngestionError(f"{path_series}: row {lineno} duplicates timestamp {row[0]}")
                if step != slot:
                    raise IngestionError(
                        f"{path_series}: row {lineno} jumps from {stamps[-1].isoformat()} to {row[0]}"
                        f" (gap of {step}, expected {slot})"
                    )
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise IngestionError(f"{path_series}: row {lineno} has a non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise IngestionError(f"{path_series}: row {lineno} has a NaN or infinite cell")
            stamps.append(ts)
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path_series}: no data rows")
    series = np.asarray(rows, dtype=np.float64)[:, :, None]
    coords = None
    if path_coords is not None:
        coords = load_coords(path_coords, series.shape[1])
    return TrafficDataset(series=series, q=q, start_timestamp=stamps[0], node_coords=coords)


def load_coords(path, n_nodes: int) -> np.ndarray:
    path = Path(path)
    coords = np.full((n_nodes, 2), np.nan)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["node_id", "x", "y"]:
            raise IngestionError(f"{path}: header must be node_id,x,y")
        for lineno, row in enumerate(reader, start=2):
            try:
                i = int(row["node_id"])
                coords[i] = float(row["x"]), float(row["y"])
            except (ValueError, IndexError):
                raise IngestionError(f"{path}: bad row {lineno}") from None
    if np.isnan(coords).any():
        raise IngestionError(f"{path}: coordinates missing for some nodes")
    return coords


def write_dataset(ds: TrafficDataset, out_dir) -> Path:
    """Write series/coords CSVs plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if ds.n_features != 1:
        raise ContractError("CSV interchange supports a single feature")
    series_path = out_dir / "series.csv"
    with series_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + [f"node_{i}" for i in range(ds.n_nodes)])
        for s in range(ds.n_steps):
            w.writerow([ds.timestamp(s).isoformat()] + [repr(float(v)) for v in ds.series[s, :, 0]])
    files = {"series": series_path.name}
    if ds.node_coords is not None:
        coords_path = out_dir / "coords.csv"
        with coords_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "x", "y"])
            for i, (x, y) in enumerate(ds.node_coords):
                w.writerow([i, repr(float(x)), repr(float(y))])
        files["coords"] = coords_path.name
    manifest = {
        "q": ds.q,
        "start_timestamp": ds.start_timestamp.isoformat(),
        "n_nodes": ds.n_nodes,
        "files": files,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def load_manifest(path) -> TrafficDataset:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: invalid manifest JSON ({exc})") from None
    base = path.parent
    files = manifest["files"]
    coords = base / files["coords"] if "coords" in files else None
    ds = load_csv(base / files["series"], coords, int(manifest["q"]))
    if ds.n_nodes != int(manifest["n_nodes"]):
        raise IngestionError(f"{path}: manifest says {manifest['n_nodes']} nodes, series has {ds.n_nodes}")
    start = datetime.fromisoformat(manifest["start_timestamp"])
    if start != ds.start_timestamp:
        raise IngestionError(f"{path}: manifest start {start} disagrees with first row {ds.start_timestamp}")
    return ds


# ------------------------------------------------------------------ graph


def build_distance_adjacency(distances: np.ndarray, sigma: float, kappa: float) -> DistanceGraph:
    """Thresholded Gaussian kernel: exp(-d^2 / sigma^2) where d <= kappa, else 0."""
    if sigma <= 0 or kappa <= 0:
        raise ContractError("sigma and kappa must be positive")
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ContractError(f"distance matrix must be square, got {d.shape}")
    if (d < 0).any():
        raise ContractError("distances must be non-negative")
    a = np.where(d <= kappa, np.exp(-(d**2) / sigma**2), 0.0)
    return DistanceGraph(adjacency=a, sigma=float(sigma), kappa=float(kappa))


def coords_to_distances(coords: np.ndarray) -> np.ndarray:
    c = np.asarray(coords, dtype=np.float64)
    return np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))


# ------------------------------------------------------------------ normalisation


def fit_normalizer(train_slice: np.ndarray) -> Normalizer:
    """Per-feature population mean/std over every axis but the last."""
    x = np.asarray(train_slice, dtype=np.float64)
    if x.size == 0:
        raise ContractError("cannot fit a normalizer on an empty slice")
    axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    std = x.std(axis=axes)
    if (std == 0).any():
        logger.warning("zero-variance feature(s) %s; clamping std to 1", np.flatnonzero(std == 0).tolist())
        std = np.where(std == 0, 1.0, std)
    return Normalizer(mean=mean, std=std)


# ------------------------------------------------------------------ windows


def anchor_range(n_steps: int, q: int, T: int, M: int, L_D: int = 1, L_W: int = 1) -> range:
    """Admissible anchor indices t: full recent/daily/weekly history and t + M < S."""
    first = max(T - 1, L_D * q - 1, 7 * L_W * q - 1)
    last = n_steps - 1 - M
    return range(first, last + 1) if last >= first else range(0)


def min_steps(q: int, T: int, M: int, L_D: int = 1, L_W: int = 1) -> int:
    return max(T - 1, L_D * q - 1, 7 * L_W * q - 1) + M + 1


def make_windows(
    ds: TrafficDataset,
    T_R: int = 12,
    T_D: int | None = None,
    T_W: int | None = None,
    L_D: int = 1,
    L_W: int = 1,
    M: int = 12,
    series: np.ndarray | None = None,
) -> list[PeriodicSample]:
    """One sample per admissible anchor, chronological.

    ``series`` overrides ``ds.series`` (e.g. a normalised copy) while keeping
    the dataset's calendar.
    """
    T_D = T_R if T_D is None else T_D
    T_W = T_R if T_W is None else T_W
    if not (T_R == T_D == T_W):
        raise ContractError(f"recent/daily/weekly lengths must match, got {T_R}, {T_D}, {T_W}")
    T, q = T_R, ds.q
    if min(T, M, L_D, L_W) < 1:
        raise ContractError("T, M, L_D and L_W must be >= 1")
    if T > q:
        raise ContractError(f"window length {T} exceeds one day ({q} slots); daily slices would read the future")
    x = ds.series if series is None else np.asarray(series, dtype=np.float64)
    S = x.shape[0]
    need = min_steps(q, T, M, L_D, L_W)
    if S < need:
        raise WindowingError(f"series has {S} steps; these windows need at least S = {need}")
    out = []
    for t in anchor_range(S, q, T, M, L_D, L_W):
        x_r, x_d, x_w = periodic_inputs(x, q, t, T, L_D, L_W)
        out.append(PeriodicSample(x_r=x_r, x_d=x_d, x_w=x_w, y=x[t + 1 : t + M + 1].copy(), anchor=t))
    return out


def periodic_inputs(x: np.ndarray, q: int, t: int, T: int, L_D: int = 1, L_W: int = 1):
    """Recent slice ending at ``t`` plus the summed daily and weekly slices."""
    if t - T + 1 < 0 or t - L_D * q + 1 < 0 or t - 7 * L_W * q + 1 < 0 or t >= x.shape[0]:
        raise WindowingError(f"anchor {t} lacks the history these windows need")
    x_r = x[t - T + 1 : t + 1].copy()
    x_d = np.zeros_like(x_r)
    for ld in range(1, L_D + 1):
        s = t - ld * q + 1
        x_d = x_d + x[s : s + T]
    x_w = np.zeros_like(x_r)
    for lw in range(1, L_W + 1):
        s = t - 7 * lw * q + 1
        x_w = x_w + x[s : s + T]
    return x_r, x_d, x_w


def stack(samples: Sequence[PeriodicSample]) -> dict[str, np.ndarray]:
    """Stack samples into batch arrays ``[B, T, N, F]`` / ``[B, M, N, F]``."""
    return {
        "x_r": np.stack([s.x_r for s in samples]),
        "x_d": np.stack([s.x_d for s in samples]),
        "x_w": np.stack([s.x_w for s in samples]),
        "y": np.stack([s.y for s in samples]),
        "anchor": np.asarray([s.anchor for s in samples]),
    }


def split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ConfigError(f"split ratios must be three non-negative numbers with a positive sum, got {ratios}")
    total = float(sum(ratios))
    n_train = int(n * ratios[0] / total)
    n_val = int(n * ratios[1] / total)
    n_test = n - n_train - n_val
    for name, r, c in (("train", ratios[0], n_train), ("validation", ratios[1], n_val), ("test", ratios[2], n_test)):
        if r > 0 and c == 0:
            raise ConfigError(f"{name} split is empty ({n} anchors, ratios {list(ratios)})")
    return n_train, n_val, n_test


def split(items: Sequence, ratios: Sequence[float] = (2, 1, 1)) -> tuple[list, list, list]:
    """Chronological contiguous partition of windows (or anchors)."""
    n_train, n_val, _ = split_counts(len(items), ratios)
    items = list(items)
    return items[:n_train], items[n_train : n_train + n_val], items[n_train + n_val :]


# ------------------------------------------------------------------ synthetic


def generate_synthetic(
    n_nodes: int = 20,
    days: int = 30,
    q: int = 96,
    seed: int = 0,
    heterogeneity: float = 0.5,
    noise: float = 1.0,
    sigma: float = 3000.0,
    kappa: float = 5000.0,
    start: datetime = DEFAULT_START,
) -> tuple[TrafficDataset, DistanceGraph]:
    """Periodic traffic with a spatially diffusing random component.

    Each node's series is ``level * weekly + amplitude * daily + z + eps``:
    a per-node level and daily sinusoid, a weekday/weekend modulation, a
    latent AR(1) process ``z`` that diffuses over the distance graph, and
    observation noise. Nodes fall into two classes (weekday- or
    weekend-peaked); ``heterogeneity`` in [0, 1] scales how far node
    parameters spread and how different the classes are. With
    ``heterogeneity=0`` and ``noise=0`` all nodes are identical.
    """
    if n_nodes < 2:
        raise ContractError("n_nodes must be >= 2")
    if days < 15:
        raise ContractError("days must be >= 15")
    if not 0.0 <= heterogeneity <= 1.0:
        raise ContractError("heterogeneity must lie in [0, 1]")
    h = float(heterogeneity)
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 10_000.0, size=(n_nodes, 2))
    graph = build_distance_adjacency(coords_to_distances(coords), sigma, kappa)

    weekend_class = rng.random(n_nodes) < 0.5
    level = 100.0 * (1.0 + 0.5 * h * rng.uniform(-1, 1, n_nodes))
    amplitude = 80.0 * (1.0 + 0.5 * h * rng.uniform(-1, 1, n_nodes))
    phase = h * rng.uniform(-1, 1, n_nodes) * (math.pi / 2)
    # own-history vs neighbour weight of the diffusion term
    coupling = np.clip(0.5 + 0.5 * h * rng.uniform(-1, 1, n_nodes), 0.0, 1.0)

    S = days * q
    steps = np.arange(S)
    tod = (steps % q) / q
    dow = (start.weekday() + steps // q) % 7
    weekday_shape = np.where(dow < 5, 0.25, -0.35)
    # class sign fades from +1 (h=0) to -1 (h=1) for weekend-peaked nodes
    sign = np.where(weekend_class, 1.0 - 2.0 * h, 1.0)
    weekly = 1.0 + sign[None, :] * weekday_shape[:, None]
    daily = np.sin(2 * math.pi * tod[:, None] - math.pi / 2 + phase[None, :])

    innov = rng.standard_normal((S, n_nodes))
    obs = rng.standard_normal((S, n_nodes))
    P = graph.adjacency / graph.adjacency.sum(axis=1, keepdims=True)
    rho = 0.995
    z = np.zeros((S, n_nodes))
    state = np.zeros(n_nodes)
    for s in range(S):
        mixed = (1.0 - coupling) * state + coupling * (P @ state)
        state = rho * mixed + 2.0 * noise * innov[s]
        z[s] = state

    series = level[None, :] * weekly + amplitude[None, :] * weekly * daily + z + 1.0 * noise * obs
    ds = TrafficDataset(series=series[:, :, None], q=q, start_timestamp=start, node_coords=coords)
    return ds, graph
