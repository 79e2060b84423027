"""Run configuration: a schema-validated JSON document driving the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .data import DistanceGraph, Normalizer, TrafficDataset, build_distance_adjacency, generate_synthetic, load_manifest
from .errors import ConfigError
from .model import ModelConfig
from .train import PreparedData, TrainConfig, prepare_data

SCHEMA_FILE = "run_config.schema.json"

SYNTHETIC_DEFAULTS = {"n_nodes": 20, "days": 30, "q": 96, "heterogeneity": 0.5, "noise": 1.0}
WINDOW_DEFAULTS = {"T": 12, "M": 12, "L_D": 1, "L_W": 1}


def load_schema() -> dict:
    return json.loads(resources.files("ahstgnn").joinpath(SCHEMA_FILE).read_text(encoding="utf-8"))


def validate(doc: dict) -> None:
    """Raise ConfigError naming the JSON path of the first schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")


@dataclass
class RunConfig:
    seed: int
    dataset: dict
    sigma: float
    kappa: float
    windows: dict = field(default_factory=lambda: dict(WINDOW_DEFAULTS))
    ratios: tuple = (2.0, 1.0, 1.0)
    eval_split: str = "test"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    output_dir: str = "out"
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        validate(doc)
        split = doc.get("split", {})
        ratios = tuple(float(r) for r in split.get("ratios", (2, 1, 1)))
        if sum(ratios) <= 0:
            raise ConfigError("config error at split/ratios: ratios must sum to a positive value")
        return cls(
            seed=doc["seed"],
            dataset=doc["dataset"],
            sigma=float(doc["graph"]["sigma"]),
            kappa=float(doc["graph"]["kappa"]),
            windows={**WINDOW_DEFAULTS, **doc.get("windows", {})},
            ratios=ratios,
            eval_split=split.get("eval_split", "test"),
            model=dict(doc.get("model", {})),
            train=dict(doc.get("train", {})),
            output_dir=doc.get("output_dir", "out"),
            base_dir=Path(base_dir),
            raw=doc,
        )

    @property
    def run_hash(self) -> str:
        """Hash of the whole document; identical configs produce identical artifacts."""
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def is_synthetic(self) -> bool:
        return "synthetic" in self.dataset

    def synthetic_options(self) -> dict:
        opts = {**SYNTHETIC_DEFAULTS, **self.dataset.get("synthetic", {})}
        opts.setdefault("seed", self.seed)
        return opts

    def load_dataset(self) -> tuple[TrafficDataset, DistanceGraph]:
        """The configured dataset and its distance graph. Missing files raise FileNotFoundError."""
        if self.is_synthetic:
            return generate_synthetic(**self.synthetic_options(), sigma=self.sigma, kappa=self.kappa)
        path = self.base_dir / self.dataset["manifest"]
        if not path.is_file():
            raise FileNotFoundError(f"dataset manifest not found: {path}")
        ds = load_manifest(path)
        if ds.node_coords is None and ds.distances is None:
            raise ConfigError("config error at dataset/manifest: dataset has no coordinates for the distance graph")
        return ds, build_distance_adjacency(ds.pairwise_distances(), self.sigma, self.kappa)

    def prepare(self, ds: TrafficDataset, graph: DistanceGraph, normalizer: Normalizer | None = None) -> PreparedData:
        w = self.windows
        return prepare_data(
            ds, graph, T=w["T"], M=w["M"], L_D=w["L_D"], L_W=w["L_W"], ratios=self.ratios, normalizer=normalizer
        )

    def model_config(self, N: int, F: int, ablation: str | None = None) -> ModelConfig:
        opts = dict(self.model)
        if ablation is not None:
            opts["ablation"] = ablation
        return ModelConfig(N=N, F=F, T=self.windows["T"], M=self.windows["M"], seed=self.seed, **opts)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.train)

    def output_path(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        out = Path(self.output_dir)
        return out if out.is_absolute() else self.base_dir / out


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config error at <root>: not valid JSON ({exc})") from None
    return RunConfig.from_dict(doc, base_dir=path.parent)
