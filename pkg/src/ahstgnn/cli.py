"""Command-line harness: synth, train, eval, predict, baseline and ablate.

Exit codes: 0 success, 2 invalid config or input that does not fit it
(including a checkpoint built for a different model), 3 missing file,
4 training diverged (the last finite parameters are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baseline import ha_fit, ha_predict, persistence_predict
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .data import periodic_inputs, write_dataset
from .errors import AhstgnnError, ConfigError, TrainingError
from .metrics import EvalReport, report, write_comparison
from .model import ABLATIONS, forward, init_params
from .train import evaluate, train, write_log
from . import autodiff as ad

logger = logging.getLogger("ahstgnn")

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4

CHECKPOINT_NAME = "model.ahst"


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_report(out: Path, stem: str, rep: EvalReport) -> None:
    rep.write_json(out / f"{stem}.json")
    rep.write_horizon_csv(out / f"{stem}_horizon.csv")


def _tag(rep: EvalReport, cfg: RunConfig) -> EvalReport:
    rep.extra["run_hash"] = cfg.run_hash
    rep.extra["split"] = cfg.eval_split
    return rep


def _load(cfg: RunConfig, normalizer=None):
    ds, graph = cfg.load_dataset()
    return ds, cfg.prepare(ds, graph, normalizer)


def _eval_split(data, cfg: RunConfig):
    split = getattr(data, cfg.eval_split)
    if len(split) == 0:
        raise ConfigError(f"config error at split/eval_split: the {cfg.eval_split} split is empty")
    return split


def _train_one(cfg: RunConfig, data, out: Path, ablation=None, resume=None):
    mcfg = cfg.model_config(data.n_nodes, data.n_features, ablation)
    tcfg = cfg.train_config()
    meta = {"run_hash": cfg.run_hash}
    state = None
    if resume is not None:
        ckpt = load_checkpoint(resume, expected=mcfg)
        params, state = ckpt.params, ckpt.state
    else:
        params = init_params(mcfg)
    ckpt_path = out / (CHECKPOINT_NAME if ablation is None else f"model_{ablation}.ahst")
    log_path = out / ("train_log.jsonl" if ablation is None else f"train_log_{ablation}.jsonl")
    try:
        result = train(params, mcfg, data, tcfg, state=state)
    except TrainingError as exc:
        if exc.last_good is not None:
            save_checkpoint(ckpt_path, exc.last_good, mcfg, data.normalizer, meta={**meta, "diverged": True})
        raise
    save_checkpoint(ckpt_path, result.params, mcfg, data.normalizer, result.state, meta=meta)
    write_log(log_path, result.log)
    return mcfg, result


def cmd_synth(cfg: RunConfig, args) -> int:
    if not cfg.is_synthetic:
        raise ConfigError("config error at dataset: synth needs a synthetic dataset section")
    ds, _ = cfg.load_dataset()
    out = cfg.output_path(args.out)
    manifest = write_dataset(ds, out)
    _write_json(out / "synth_info.json", {"run_hash": cfg.run_hash, "options": cfg.synthetic_options()})
    print(manifest)
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = cfg.output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, data = _load(cfg)
    mcfg, result = _train_one(cfg, data, out, resume=args.checkpoint)
    last = result.log[-1] if result.log else {}
    print(f"trained {len(result.log)} epochs; config {mcfg.structural_hash()}; last {last}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    out = cfg.output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_NAME
    if not ckpt_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    ds, graph = cfg.load_dataset()
    mcfg = cfg.model_config(ds.n_nodes, ds.n_features)
    ckpt = load_checkpoint(ckpt_path, expected=mcfg)
    data = cfg.prepare(ds, graph, ckpt.normalizer)
    rep = evaluate(ckpt.params, mcfg, _eval_split(data, cfg), data.normalizer, data.adjacency)
    _write_report(out, "eval_report", _tag(rep, cfg))
    print(f"MAE {rep.mae:.6g} RMSE {rep.rmse:.6g}")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    out = cfg.output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_NAME
    if not ckpt_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    ds, graph = cfg.load_dataset()
    mcfg = cfg.model_config(ds.n_nodes, ds.n_features)
    ckpt = load_checkpoint(ckpt_path, expected=mcfg)
    norm = ckpt.normalizer if ckpt.normalizer is not None else cfg.prepare(ds, graph).normalizer
    anchor = ds.n_steps - 1 if args.anchor is None else args.anchor
    if not 0 <= anchor < ds.n_steps:
        raise ConfigError(f"anchor {anchor} lies outside the series (0..{ds.n_steps - 1})")
    w = cfg.windows
    x_r, x_d, x_w = periodic_inputs(norm.apply(ds.series), ds.q, anchor, w["T"], w["L_D"], w["L_W"])
    with ad.no_grad():
        y = forward(ckpt.params, mcfg, x_r[None], x_d[None], x_w[None], graph.adjacency).data[0]
    pred = norm.invert(y)
    path = out / "forecast.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["horizon", "timestamp"] + [f"node_{i}" for i in range(ds.n_nodes)])
        for m in range(mcfg.M):
            wr.writerow([m + 1, ds.timestamp(anchor + m + 1).isoformat()] + [repr(float(v)) for v in pred[m, :, 0]])
    _write_json(
        out / "forecast.json",
        {"anchor": anchor, "config_hash": mcfg.structural_hash(), "run_hash": cfg.run_hash, "file": path.name},
    )
    print(path)
    return 0


def cmd_baseline(cfg: RunConfig, args) -> int:
    out = cfg.output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, data = _load(cfg)
    split = _eval_split(data, cfg)
    h = cfg.run_hash
    ha = ha_fit(ds.series[: data.train_end], ds.q, int(ds.slot_of_week(0)))
    reports = [
        report(ha_predict(ha, split.anchors, data.M), split.y_raw, "ha", h),
        report(persistence_predict(ds.series[split.anchors], data.M), split.y_raw, "persistence", h),
    ]
    for rep in reports:
        _write_report(out, f"baseline_{rep.model}", _tag(rep, cfg))
    write_comparison(out / "baseline_comparison.csv", reports)
    _write_json(out / "baseline_comparison.json", {"run_hash": h, "file": "baseline_comparison.csv"})
    for rep in reports:
        print(f"{rep.model}: MAE {rep.mae:.6g} RMSE {rep.rmse:.6g}")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    out = cfg.output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, data = _load(cfg)
    split = _eval_split(data, cfg)
    reports = []
    for variant in ABLATIONS:
        mcfg, result = _train_one(cfg, data, out, ablation=variant)
        rep = _tag(evaluate(result.params, mcfg, split, data.normalizer, data.adjacency, tag=variant), cfg)
        _write_report(out, f"ablation_{variant}", rep)
        reports.append(rep)
        print(f"{variant}: MAE {rep.mae:.6g} RMSE {rep.rmse:.6g}", flush=True)
    write_comparison(out / "ablation_comparison.csv", reports)
    _write_json(
        out / "ablation_comparison.json",
        {"run_hash": cfg.run_hash, "config_hashes": {r.model: r.config_hash for r in reports}},
    )
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "baseline": cmd_baseline,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ahstgnn", description="Spatial-temporal graph forecasting harness.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--checkpoint", help="checkpoint to read (train: resume from it)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        if name == "predict":
            p.add_argument("--anchor", type=int, help="series index of the last observed step (default: last)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_run_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except AhstgnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
