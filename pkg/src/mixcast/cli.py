"""Command-line surface: train / pretrain / finetune / eval / profile /
export-embeddings. Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric divergence."""

import argparse
import csv
import json
import os
import sys

import numpy as np
from filelock import FileLock

from .config import load_config, parse_variant
from .data import WindowDataset, StandardScaler, chrono_split, load_csv
from .errors import ConfigError, DataError, DivergenceError
from .model import ForecastModel, load_checkpoint, save_checkpoint
from .profiling import cost_report
from .training import (
    RunReport,
    evaluate,
    export_embeddings,
    finetune,
    pretrain_mtsm,
    run_seeds,
    train_supervised,
)


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _load_run_config(args):
    overrides = _parse_overrides(getattr(args, "set", None))
    cfg = load_config(getattr(args, "config", None), overrides)
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if getattr(args, "dataset", None):
        cfg.dataset = args.dataset
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    return cfg


def build_datasets(cfg, pretrain=False):
    if not cfg.dataset:
        raise ConfigError("no dataset given (--dataset or config)")
    if not os.path.exists(cfg.dataset):
        raise DataError(f"dataset file not found: {cfg.dataset}")
    frame = load_csv(cfg.dataset)
    m = cfg.model
    train_f, val_f, test_f, split = chrono_split(frame, cfg.split_profile, m.sl, m.fl)
    scaler = StandardScaler.fit(train_f)
    sets = tuple(
        WindowDataset(scaler.transform(f), m.sl, m.fl) for f in (train_f, val_f, test_f)
    )
    echo = {"split": split.as_dict(), "scaler_mean": scaler.mean.tolist(), "scaler_std": scaler.std.tolist()}
    return sets, scaler, echo


def _save_model(path, model, cfg):
    save_checkpoint(
        path,
        model.named_parameters(),
        manifest_config={
            "scope": "model",
            "variant": model.spec.canonical(),
            "channels": model.c,
            "mode": model.mode,
            "model": {k: getattr(cfg.model, k) for k in ("sl", "pl", "s", "fl", "nl", "fs", "hf", "ef", "do", "cl", "mask_ratio")},
        },
    )


def _finish_run(cfg, report, model=None, ckpt_name="model.ckpt"):
    os.makedirs(cfg.output_dir, exist_ok=True)
    report.to_json(os.path.join(cfg.output_dir, "report.json"))
    if model is not None:
        _save_model(os.path.join(cfg.output_dir, ckpt_name), model, cfg)
    print(report.to_json())


def cmd_train(args):
    cfg = _load_run_config(args)
    spec = cfg.validate()
    (train_ds, val_ds, test_ds), _, echo = build_datasets(cfg)
    seeds = cfg.train.seeds if args.all_seeds else (cfg.train.seeds[0],)
    last_model = {}

    def run_one(seed):
        model, result = train_supervised(spec, cfg.model, train_ds, val_ds, test_ds, cfg.train, seed)
        last_model["m"] = model
        return model, result

    os.makedirs(cfg.output_dir, exist_ok=True)
    with FileLock(os.path.join(cfg.output_dir, ".lock")):
        report = run_seeds(run_one, seeds, config={**cfg.as_dict(), **echo})
        report.profile = cost_report(last_model["m"], len(train_ds)).as_dict()
        _finish_run(cfg, report, last_model["m"])
    return 0


def cmd_pretrain(args):
    cfg = _load_run_config(args)
    spec = cfg.validate(pretrain=True)
    (train_ds, val_ds, _), _, echo = build_datasets(cfg, pretrain=True)
    os.makedirs(cfg.output_dir, exist_ok=True)
    ckpt = os.path.join(cfg.output_dir, "backbone.ckpt")
    with FileLock(os.path.join(cfg.output_dir, ".lock")):
        model, result = pretrain_mtsm(
            spec, cfg.model, train_ds, val_ds, cfg.train, cfg.train.seeds[0], checkpoint_path=ckpt
        )
        report = RunReport.from_results([result], config={**cfg.as_dict(), **echo},
                                        notes={"loss_space": "instance-normalized", "mask_fill": 0.0})
        report.to_json(os.path.join(cfg.output_dir, "report.json"))
        print(report.to_json())
    return 0


def cmd_finetune(args):
    if not args.backbone_checkpoint:
        raise ConfigError("finetune requires --backbone-checkpoint")
    cfg = _load_run_config(args)
    spec = cfg.validate()
    manifest, arrays = load_checkpoint(args.backbone_checkpoint)
    (train_ds, val_ds, test_ds), _, echo = build_datasets(cfg)
    seeds = cfg.train.seeds if args.all_seeds else (cfg.train.seeds[0],)
    last_model = {}

    def run_one(seed):
        model, result = finetune(spec, cfg.model, arrays, manifest, train_ds, val_ds, test_ds, cfg.train, seed)
        last_model["m"] = model
        return model, result

    os.makedirs(cfg.output_dir, exist_ok=True)
    with FileLock(os.path.join(cfg.output_dir, ".lock")):
        report = run_seeds(run_one, seeds, config={**cfg.as_dict(), **echo})
        _finish_run(cfg, report, last_model["m"])
    return 0


def cmd_eval(args):
    if args.best_of:
        reports = []
        for path in args.best_of:
            with open(path) as fh:
                reports.append((path, json.load(fh)))
        best = min(reports, key=lambda item: item[1]["mse_mean"])
        print(json.dumps({
            "chosen": best[0],
            "mse_mean": best[1]["mse_mean"],
            "mae_mean": best[1]["mae_mean"],
            "candidates": [{"path": p, "mse_mean": r["mse_mean"]} for p, r in reports],
        }, indent=2))
        return 0
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint or --best-of")
    cfg = _load_run_config(args)
    manifest, arrays = load_checkpoint(args.checkpoint)
    mc = manifest["config"]
    if mc.get("scope") != "model":
        raise ConfigError("eval needs a full-model checkpoint")
    from .config import ModelConfig

    cfg.variant = mc["variant"]
    cfg.model = ModelConfig(**mc["model"])
    spec = cfg.validate()
    (_, _, test_ds), _, _ = build_datasets(cfg)
    model = ForecastModel(spec, cfg.model, c=mc["channels"], seed=0, mode=mc.get("mode", "predict"))
    model.load_state(arrays)
    mse, mae = evaluate(model, test_ds)
    print(json.dumps({"test_mse": mse, "test_mae": mae, "variant": cfg.variant}, indent=2))
    return 0


def cmd_profile(args):
    cfg = _load_run_config(args)
    spec = cfg.validate()
    channels = args.channels
    windows = args.windows_per_epoch
    if cfg.dataset:
        (train_ds, _, _), _, _ = build_datasets(cfg)
        channels = train_ds.segment.num_channels
        windows = len(train_ds)
    if channels is None:
        raise ConfigError("profile needs --channels or a dataset")
    model = ForecastModel(spec, cfg.model, c=channels, seed=cfg.train.seeds[0])
    rep = cost_report(model, windows or 0)
    print(f"{'variant':<24} {spec.canonical()}")
    print(f"{'NPARAMS':<24} {rep.nparams}")
    print(f"{'MACs/epoch':<24} {rep.macs_per_epoch}")
    for comp, count in rep.nparams_breakdown.items():
        print(f"  params[{comp}]{'':<10} {count}")
    print(json.dumps(rep.as_dict(), indent=2))
    return 0


def cmd_export_embeddings(args):
    cfg = _load_run_config(args)
    manifest, arrays = load_checkpoint(args.checkpoint)
    mc = manifest["config"]
    from .config import ModelConfig

    if mc.get("scope") == "model":
        cfg.variant = mc["variant"]
        cfg.model = ModelConfig(**mc["model"])
    spec = cfg.validate()
    (train_ds, _, _), _, _ = build_datasets(cfg)
    model = ForecastModel(spec, cfg.model, c=train_ds.segment.num_channels, seed=0)
    model.load_state(arrays)
    rows = export_embeddings(
        model, train_ds, num_anchors=args.anchors, k=args.neighbors,
        rng=np.random.default_rng(cfg.train.seeds[0]),
    )
    out_path = args.output or "embeddings.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor_id", "neighbor_rank", "distance"] + [f"v{i}" for i in range(cfg.model.pl)])
        for row in rows:
            writer.writerow([row["anchor_id"], row["neighbor_rank"], row["distance"]] + row["patch"])
    print(f"wrote {len(rows)} rows to {out_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mixcast", description="Patched-mixer forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--variant", help='model name, e.g. "CI-TSMixer(G,H)"')
        p.add_argument("--dataset", help="CSV dataset path")
        p.add_argument("--output-dir", help="artifact directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, e.g. model.fl=192")

    p = sub.add_parser("train", help="supervised training")
    common(p)
    p.add_argument("--all-seeds", action="store_true", help="run every configured seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain", help="masked-reconstruction pretraining")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="probe-then-finetune from a pretrained backbone")
    common(p)
    p.add_argument("--backbone-checkpoint")
    p.add_argument("--all-seeds", action="store_true")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint or pick the best of two reports")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--best-of", nargs=2, metavar="REPORT")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="parameter and MAC accounting")
    common(p)
    p.add_argument("--channels", type=int)
    p.add_argument("--windows-per-epoch", type=int)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("export-embeddings", help="dump anchor patches and nearest neighbors to CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--anchors", type=int, default=5)
    p.add_argument("--neighbors", type=int, default=50)
    p.add_argument("--output")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except DataError as exc:
        print(json.dumps({"error": "data", "message": str(exc)}), file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(json.dumps({"error": "divergence", "message": str(exc), "epoch": exc.epoch}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
