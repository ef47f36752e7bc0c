"""Command line entry point: ``gazepipe {synth-gen,normalize,train,evaluate,heatmap}``.

Every subcommand reads a YAML run configuration (``--config`` or the
``GAZEPIPE_CONFIG`` environment variable).  Sections, all optional::

    seed: 0
    data: {manifest: ..., intrinsics: ..., groups: ..., synth_dir: ..., out_dir: ...}
    synth: {n_subjects: 4, frames_per_subject: 50, trajectory: {kind: pursuit}, scene: {...}}
    normalization: {face_focal: 650, ...}
    model: {scale: 0.125, variant: static, ...}
    train: {learning_rate: 1.0e-4, epochs_stage1: 21, augment: {...}, ...}
    eval: {folds: kfold, k: 4, bin_width: 5}
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import cv2
import numpy as np
import yaml

from . import evalharness as ev
from . import synthgen as sg
from . import trainer as T
from .datamodel import NormalizationConfig, filter_frames, load_group_file, load_manifest, normalize_record, plan_folds
from .network import ModelConfig, load_model, load_parameters, save_parameters

CONFIG_ENV = "GAZEPIPE_CONFIG"
log = logging.getLogger("gazepipe")


class CliError(Exception):
    """Reported as a one-line diagnostic with exit code 1."""


def _known(cls, d: dict, section: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise CliError(f"config section '{section}' has unknown keys: {', '.join(sorted(unknown))}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: top level must be a mapping")
    return cfg


def _configs(cfg: dict, seed: int):
    norm = NormalizationConfig(**_known(NormalizationConfig, cfg.get("normalization") or {}, "normalization"))
    model = ModelConfig(**_known(ModelConfig, cfg.get("model") or {}, "model"))
    train_d = dict(cfg.get("train") or {})
    aug_d = train_d.pop("augment", None) or {}
    from .augment import AugmentConfig

    aug = AugmentConfig(**{**_known(AugmentConfig, aug_d, "train.augment"), "seed": seed})
    train = T.TrainConfig(**{**_known(T.TrainConfig, train_d, "train"), "augment": aug, "seed": seed})
    return norm, model, train


def _data_path(args, cfg, name, flag):
    value = getattr(args, flag, None) or (cfg.get("data") or {}).get(name)
    if not value:
        raise CliError(f"no {name} given (use --{flag.replace('_', '-')} or data.{name} in the config)")
    return Path(value)


def _load(args, cfg, norm):
    manifest = _data_path(args, cfg, "manifest", "manifest")
    if not manifest.exists():
        raise CliError(f"manifest not found: {manifest}")
    intr = (cfg.get("data") or {}).get("intrinsics")
    data, rejected = ev.load_dataset(manifest, intr, norm)
    log.info("%d frames kept, %d rejected", len(data), len(rejected))
    if len(data) == 0:
        raise CliError(f"no usable frames in {manifest}")
    return data


# --------------------------------------------------------------------------
# subcommands

def cmd_synth_gen(args, cfg):
    s = dict(cfg.get("synth") or {})
    traj = sg.TrajectoryParams(**_known(sg.TrajectoryParams, s.pop("trajectory", None) or {}, "synth.trajectory"))
    scene = sg.SceneParams(**_known(sg.SceneParams, s.pop("scene", None) or {}, "synth.scene"))
    if "sessions" in s:
        s["sessions"] = tuple(tuple(x) for x in s["sessions"])
    spec = sg.DatasetSpec(**{**_known(sg.DatasetSpec, s, "synth"), "scene": scene, "trajectory": traj,
                             "seed": args.seed})
    out = _data_path(args, cfg, "synth_dir", "out")
    path = sg.generate_dataset(out, spec, overwrite=args.overwrite)
    print(path)


def cmd_normalize(args, cfg):
    norm, _, _ = _configs(cfg, args.seed)
    manifest = _data_path(args, cfg, "manifest", "manifest")
    out = _data_path(args, cfg, "out_dir", "out")
    records = load_manifest(manifest, (cfg.get("data") or {}).get("intrinsics"))
    kept, rejected = filter_frames(records, norm.constraint_frame, norm)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in kept:
        s = normalize_record(rec, None, norm)
        stem = "_".join(map(str, rec.key))
        cv2.imwrite(str(out / f"{stem}_face.png"), s.face_patch)
        cv2.imwrite(str(out / f"{stem}_eyes.png"), s.eyes_patch)
        rows.append({"key": list(rec.key), "theta": float(s.label[0]), "phi": float(s.label[1]),
                     "R": s.R.tolist(), "landmark_feature": s.landmark_feature.tolist()})
    with open(out / "samples.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    with open(out / "rejected.csv", "w") as fh:
        fh.write("subject,target_kind,head_kind,lighting,frame_index,reason\n")
        for rec, reason in rejected:
            fh.write(",".join(map(str, rec.key)) + f",{reason.value}\n")
    print(f"{len(rows)} samples written to {out} ({len(rejected)} rejected)")


def cmd_train(args, cfg):
    norm, model_cfg, train_cfg = _configs(cfg, args.seed)
    ckpt = _data_path(args, cfg, "checkpoint_dir", "out")
    train_cfg = replace(train_cfg, checkpoint_dir=str(ckpt))
    if args.mode == "temporal":
        stage1 = Path(args.stage1) if args.stage1 else ckpt / "stage1_last.params"
        if not stage1.exists():
            raise CliError(f"temporal training needs the stage-1 parameter file {stage1}; "
                           f"run 'gazepipe train --mode static' first or pass --stage1")
    data = _load(args, cfg, norm)
    train_s, val_s = T.split_validation(data.subjects, train_cfg.val_subjects, args.seed)
    tr = data.subset(data.rows_for_subjects(train_s))
    va = data.subset(data.rows_for_subjects(val_s)) if val_s else None
    if args.mode == "static":
        model, hist = T.train_stage1(tr, va, model_cfg, train_cfg, resume_from=args.resume,
                                     progress=lambda r: log.info("%s", r))
        save_parameters(model, ckpt / "stage1_last.params")
        print(ckpt / "stage1_last.params")
        return
    params = load_parameters(stage1)
    tcfg = ModelConfig(**{**model_cfg.to_dict(), "variant": "temporal"})
    if params.config and params.config.get("variant") == "temporal":
        model = load_model(stage1)
    else:
        log.warning("stage-1 model is static-variant; fusion weights are transferred where shapes agree")
        model = T.temporal_model_from_static(params, tcfg)
    s = model.config.sequence_length
    trc = T.build_feature_cache(model, tr)
    vac = T.build_feature_cache(model, va) if va is not None else None
    model, _ = T.train_stage2(model, trc, tr.window_rows(s), tr.labels, train_cfg, vac,
                              va.window_rows(s) if va is not None else None, va.labels if va is not None else None,
                              resume_from=args.resume, progress=lambda r: log.info("%s", r))
    save_parameters(model, ckpt / "stage2_last.params")
    print(ckpt / "stage2_last.params")


def cmd_evaluate(args, cfg):
    norm, model_cfg, train_cfg = _configs(cfg, args.seed)
    out = _data_path(args, cfg, "out_dir", "out")
    data = _load(args, cfg, norm)
    written = []
    head = ev.head_baseline(data, norm.forward_sign)
    written += head.write(out, "head")
    reports = {"Head": head}
    if args.cross_validate:
        e = cfg.get("eval") or {}
        groups = (cfg.get("data") or {}).get("groups")
        plan = plan_folds(data.subjects, e.get("folds", "kfold"), e.get("k", min(4, len(data.subjects))),
                          load_group_file(groups) if groups else None)
        res = ev.run_cross_validation(data, plan, model_cfg, train_cfg, args.mode)
        reports["Static"] = res.static
        written += res.static.write(out, "static")
        if res.temporal is not None:
            reports["Temporal"] = res.temporal
            written += res.temporal.write(out, "temporal")
            reports["Head"] = head.restrict(res.temporal.keys)
    else:
        if not args.model:
            raise CliError("evaluate needs --model PATH or --cross-validate")
        if not Path(args.model).exists():
            raise CliError(f"model file not found: {args.model}")
        model = load_model(args.model)
        stat = ev.static_report(model, data, model_id="Static")
        if model.config.variant == "temporal":
            s = model.config.sequence_length
            temp = ev.temporal_report(model, T.build_feature_cache(model, data), data, data.window_rows(s))
            stat, temp = ev.comparable(stat, temp)
            reports["Temporal"] = temp
            written += temp.write(out, "temporal")
        reports["Static"] = stat
        written += stat.write(out, "static")
    table = out / "table.txt"
    table.write_text(ev.format_table({k: reports[k] for k in ("Head", "Static", "Temporal") if k in reports}))
    written.append(table)
    for name, r in reports.items():
        print(f"{name}: {r.overall_mean:.2f} deg over {len(r)} frames")
    print("\n".join(map(str, written)))


def cmd_heatmap(args, cfg):
    bw = args.bin_width or (cfg.get("eval") or {}).get("bin_width", 5.0)
    rep = ev.EvalReport.read_frames(args.report)
    out = Path(args.out)
    if args.compare:
        other = ev.EvalReport.read_frames(args.compare)
        grid = ev.difference_grid(rep, other, args.space, bw, out)
    else:
        grid = ev.emit_error_grid(rep, args.space, bw, out)
    print(f"{grid.count.sum()} frames in {int((grid.count > 0).sum())} bins -> {out}")


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazepipe", description="Appearance-based gaze estimation pipeline.")
    p.add_argument("--config", help=f"YAML run configuration (default: ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, default=None, help="seed for every random choice (default: config 'seed' or 0)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="render a synthetic dataset")
    s.add_argument("--out", help="output directory")
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("normalize", help="write normalized face/eye patches for inspection")
    s.add_argument("--manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("train", help="stage-1 (static) or stage-2 (temporal) training")
    s.add_argument("--manifest")
    s.add_argument("--out", help="checkpoint directory")
    s.add_argument("--mode", choices=("static", "temporal"), default="static")
    s.add_argument("--stage1", help="stage-1 parameter file for --mode temporal")
    s.add_argument("--resume", help="*.state.pt checkpoint to resume from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a saved model or run cross-validation")
    s.add_argument("--manifest")
    s.add_argument("--out", help="report directory")
    s.add_argument("--model", help="parameter file")
    s.add_argument("--cross-validate", action="store_true")
    s.add_argument("--mode", choices=("static", "temporal"), default="static")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("heatmap", help="error grid from a per-frame report")
    s.add_argument("--report", required=True, help="*_frames.csv from evaluate")
    s.add_argument("--compare", help="second report; writes the difference grid (report minus compare)")
    s.add_argument("--space", choices=("gaze", "head"), default="gaze")
    s.add_argument("--bin-width", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config_path = args.config or os.environ.get(CONFIG_ENV)
    if not config_path:
        parser.error(f"no run configuration: pass --config or set {CONFIG_ENV}")
    if not Path(config_path).is_file():
        parser.error(f"config file not found: {config_path}")
    try:
        cfg = load_config(config_path)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        np.random.seed(args.seed)
        import torch

        torch.manual_seed(args.seed)
        args.func(args, cfg)
    except (CliError, ValueError, FileExistsError, OSError) as exc:
        print(f"gazepipe {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
