"""Command-line front end: simulate, train, sharpen, evaluate, ablate.

Commands are pure functions of (config, input files, seed): nothing reads the
clock or the environment beyond the documented output-dir override, so a rerun
with identical inputs writes bit-identical artifacts.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .data import (DN_RANGE, RATIO, SceneTriple, degrade_wald, denormalize,
                   normalize, patchify, synth_scene)
from .engine.errors import (ConfigError, DimensionError, FormatError,
                            MetricError, NumericError)
from .formats import (read_tensor, write_pgm, write_ppm, write_tensor)
from .metrics import (MetricReport, full_reference_report,
                      reference_free_report, write_report_csv,
                      write_report_json)
from .model import (BACKBONES, FUSION_OPS, DCNet, ModelConfig)
from .training import (TrainOutcome, build_manifest, config_hash,
                       load_checkpoint, save_checkpoint, stack_patches,
                       train_model, write_manifest)

OUT_DIR_ENV = "DCNET_OUT_DIR"

DEFAULT_CONFIG = {
    "model": {
        "bands": 4, "spectral_channels": 32, "levels": 4,
        "fusion_levels": None, "fusion_op": "s2clstm", "backbone": "2d3d",
        "transpose_projection": False, "l2_weight": 1e-8, "ratio": RATIO,
    },
    "train": {
        "epochs": 200, "batch_size": 4, "base_lr": 1e-3, "seed": None,
        "lr_decay": 0.8, "lr_every": 150, "lambda": None,
    },
    "data": {
        "synth": {"seed": 5, "bands": 4, "height": 128, "width": 128},
        "scene": None, "patch_size": 64, "patch_stride": 64,
        "split_fractions": [0.7, 0.15, 0.15],
        "value_range": list(DN_RANGE),
    },
    "output_dir": "run",
}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing

def _quantize8(arr: np.ndarray, value_range) -> np.ndarray:
    """Map a value-range raster to uint8 the way previews are rendered."""
    lo, hi = float(value_range[0]), float(value_range[1])
    unit = np.clip((np.asarray(arr, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return np.round(unit * 255.0).astype(np.uint8)


def _preview_bands(cube: np.ndarray) -> np.ndarray:
    """First three bands as [3, H, W]; mono cubes are replicated."""
    if cube.shape[0] >= 3:
        return cube[:3]
    return np.repeat(cube[:1], 3, axis=0)


def _write_scene_dir(out_dir, scene: SceneTriple):
    os.makedirs(out_dir, exist_ok=True)
    write_tensor(os.path.join(out_dir, "pan.pten"), scene.pan)
    write_tensor(os.path.join(out_dir, "ms.pten"), scene.ms)
    if scene.truth is not None:
        write_tensor(os.path.join(out_dir, "truth.pten"), scene.truth)
    with open(os.path.join(out_dir, "scene.json"), "w", encoding="utf-8") as fh:
        json.dump({"ratio": scene.ratio,
                   "value_range": list(scene.value_range)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    vr = scene.value_range
    write_pgm(os.path.join(out_dir, "pan.pgm"),
              _quantize8(scene.pan, vr), maxval=255)
    write_ppm(os.path.join(out_dir, "ms.ppm"),
              _quantize8(_preview_bands(scene.ms), vr), maxval=255)
    if scene.truth is not None:
        write_ppm(os.path.join(out_dir, "truth.ppm"),
                  _quantize8(_preview_bands(scene.truth), vr), maxval=255)


def _read_scene_dir(path) -> SceneTriple:
    meta_path = os.path.join(path, "scene.json")
    ratio, vr = RATIO, DN_RANGE
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        ratio = int(meta.get("ratio", RATIO))
        vr = tuple(meta.get("value_range", DN_RANGE))
    pan = read_tensor(os.path.join(path, "pan.pten"))
    ms = read_tensor(os.path.join(path, "ms.pten"))
    truth_path = os.path.join(path, "truth.pten")
    truth = read_tensor(truth_path) if os.path.exists(truth_path) else None
    return SceneTriple(pan=pan, ms=ms, truth=truth, ratio=ratio, value_range=vr)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _load_experiment(args) -> dict:
    """defaults <- config file <- command-line flags, then validation."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}")
        config = _merge(config, file_cfg)

    flag_map = [
        ("epochs", ("train", "epochs")), ("batch_size", ("train", "batch_size")),
        ("base_lr", ("train", "base_lr")), ("seed", ("train", "seed")),
        ("bands", ("model", "bands")),
        ("spectral_channels", ("model", "spectral_channels")),
        ("levels", ("model", "levels")), ("fusion_op", ("model", "fusion_op")),
        ("backbone", ("model", "backbone")),
        ("patch_size", ("data", "patch_size")),
        ("patch_stride", ("data", "patch_stride")),
        ("scene", ("data", "scene")),
    ]
    for flag, (section, key) in flag_map:
        value = getattr(args, flag, None)
        if value is not None:
            config[section][key] = value
    if getattr(args, "fusion_levels", None) is not None:
        levels = [int(tok) for tok in args.fusion_levels.split(",") if tok]
        config["model"]["fusion_levels"] = levels

    config["output_dir"] = _resolve_out_dir(args, config["output_dir"])

    if config["train"]["seed"] is None:
        raise ConfigError("a training seed is mandatory: set train.seed in the "
                          "config file or pass --seed")
    if config["train"]["lambda"] is not None:
        config["model"]["l2_weight"] = config["train"]["lambda"]
    scene = config["data"]["scene"]
    if scene is not None and not os.path.isdir(scene):
        raise ConfigError(f"data.scene directory does not exist: {scene}")
    return config


def _resolve_out_dir(args, config_value: str) -> str:
    """Precedence: --out flag, then {OUT_DIR_ENV} env var, then config file."""
    if getattr(args, "out", None):
        return args.out
    return os.environ.get(OUT_DIR_ENV) or config_value


def _scene_fingerprint(scene_dir: str) -> str:
    """Content digest of a scene directory's rasters and metadata."""
    digest = hashlib.sha256()
    for name in ("pan.pten", "ms.pten", "truth.pten", "scene.json"):
        path = os.path.join(scene_dir, name)
        if os.path.exists(path):
            digest.update(name.encode("utf-8"))
            with open(path, "rb") as fh:
                digest.update(fh.read())
    return "sha256:" + digest.hexdigest()


def _hashable_config(config: dict) -> dict:
    """The run-defining slice: everything except where artifacts land.

    A scene directory is identified by a digest of its contents, so the
    same data trained in two locations hashes identically while different
    data never collides.
    """
    out = copy.deepcopy({k: v for k, v in config.items() if k != "output_dir"})
    if out.get("data", {}).get("scene") is not None:
        out["data"]["scene"] = _scene_fingerprint(out["data"]["scene"])
    return out


def _model_config(config: dict) -> ModelConfig:
    model = dict(config["model"])
    fusion = model.get("fusion_levels")
    if fusion is not None:
        model["fusion_levels"] = tuple(fusion)
    return ModelConfig(**model)


def _experiment_splits(config: dict):
    """Materialize train/val/test patch arrays from the data section."""
    data_cfg = config["data"]
    vr = tuple(data_cfg["value_range"])
    if data_cfg["scene"] is not None:
        scene = _read_scene_dir(data_cfg["scene"])
    else:
        synth = data_cfg["synth"]
        truth, pan_full = synth_scene(seed=synth["seed"], bands=synth["bands"],
                                      height=synth["height"],
                                      width=synth["width"])
        scene = degrade_wald(truth, pan_full, value_range=vr,
                             ratio=config["model"]["ratio"])
    if scene.truth is None:
        raise ConfigError("training needs a scene with ground truth "
                          "(run degrade, or use the synth settings)")
    sets = patchify(scene, size=data_cfg["patch_size"],
                    stride=data_cfg["patch_stride"],
                    split_fractions=tuple(data_cfg["split_fractions"]),
                    seed=config["train"]["seed"])
    arrays = {}
    for name in ("train", "val", "test"):
        patches = sets[name].patches
        arrays[name] = stack_patches(patches, vr) if patches else None
    if arrays["train"] is None:
        raise ConfigError("the split left no training patches; lower "
                          "patch_size or raise the train fraction")
    return arrays, scene


def _mean_report(rows: list) -> MetricReport:
    """Column-wise mean over MetricReport rows, None where nothing computed."""
    values = {}
    for col in MetricReport.COLUMNS[1:]:
        cells = [getattr(r, col) for r in rows if getattr(r, col) is not None]
        values[col] = float(np.mean(cells)) if cells else None
    return MetricReport(scene="mean", **values)


def _split_metrics(net: DCNet, arrays: dict, window: int, ratio: int,
                   value_range) -> dict:
    """Mean full-reference + QNR metrics over the preferred held-out split."""
    for split in ("test", "val", "train"):
        if arrays.get(split) is not None:
            break
    data = arrays[split]
    fused_n = net.predict(data["pan"], data["ms"])
    rows = []
    for i in range(fused_n.shape[0]):
        fused = np.clip(denormalize(fused_n[i], value_range),
                        value_range[0], value_range[1])
        truth = denormalize(data["truth"][i], value_range)
        pan = denormalize(data["pan"][i, 0], value_range)
        ms = denormalize(data["ms"][i], value_range)
        w = _clamp_window(window, fused.shape[1], fused.shape[2],
                          ms.shape[1], ms.shape[2])
        fr = full_reference_report(fused, truth, ratio=ratio, window=w,
                                   scene=f"patch{i}")
        rf = reference_free_report(fused, ms, pan, window=w,
                                   scene=f"patch{i}")
        rows.append(replace(fr, d_lambda=rf.d_lambda, d_s=rf.d_s, qnr=rf.qnr))
    mean = _mean_report(rows)
    return {"split": split, "rows": [r.to_dict() for r in rows],
            "mean": mean.to_dict()}


def _clamp_window(window: int, *dims: int) -> int:
    """Quality-index windows never exceed the smallest image side."""
    return max(1, min(window, *dims))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    out_dir = _resolve_out_dir(args, "synth")
    os.makedirs(out_dir, exist_ok=True)
    truth, pan_full = synth_scene(seed=args.seed, bands=args.bands,
                                  height=args.height, width=args.width)
    write_tensor(os.path.join(out_dir, "truth.pten"), truth)
    write_tensor(os.path.join(out_dir, "pan.pten"), pan_full)
    print(f"synth: wrote truth {tuple(truth.shape)} and pan "
          f"{tuple(pan_full.shape)} to {out_dir}")
    return 0


def cmd_degrade(args) -> int:
    out_dir = _resolve_out_dir(args, "scene")
    truth = read_tensor(args.truth)
    pan_full = read_tensor(args.pan)
    vr = tuple(args.value_range)
    scene = degrade_wald(truth, pan_full, value_range=vr, ratio=args.ratio)
    _write_scene_dir(out_dir, scene)
    print(f"degrade: pan {tuple(scene.pan.shape)}, ms {tuple(scene.ms.shape)}, "
          f"truth {tuple(scene.truth.shape)} -> {out_dir}")
    return 0


def cmd_train(args) -> int:
    config = _load_experiment(args)
    out_dir = config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    arrays, _ = _experiment_splits(config)
    seed = config["train"]["seed"]

    resume = None
    if args.resume:
        net, adam, extra = load_checkpoint(args.resume)
        if net.config != _model_config(config):
            raise ConfigError("checkpoint model config does not match the "
                              "requested experiment config")
        best = extra.get("best", {})
        try:
            best_params = _best_snapshot(args.resume)
        except (FileNotFoundError, FormatError):
            best_params = net.params.snapshot()
        resume = TrainOutcome(curve=extra.get("curve", []),
                              best_epoch=best.get("epoch", -1),
                              best_val_l1=best.get("val_l1", float("inf")),
                              best_params=best_params,
                              start_epoch=extra.get("epoch", 0), adam=adam)
    else:
        net = DCNet(_model_config(config), seed=seed)

    train_cfg = config["train"]
    outcome = train_model(
        net, arrays["train"], arrays["val"],
        epochs=train_cfg["epochs"], batch_size=train_cfg["batch_size"],
        base_lr=train_cfg["base_lr"], seed=seed,
        lr_decay=train_cfg["lr_decay"], lr_every=train_cfg["lr_every"],
        resume=resume,
        progress=None if args.quiet else _print_epoch)

    last_path = os.path.join(out_dir, "checkpoint_last.pten")
    save_checkpoint(last_path, net, adam=outcome.adam,
                    extra={"epoch": outcome.trained_epochs,
                           "curve": outcome.curve,
                           "best": {"epoch": outcome.best_epoch,
                                    "val_l1": outcome.best_val_l1}})
    best_net = DCNet(net.config, seed=seed)
    best_net.params.load_snapshot(outcome.best_params)
    best_path = os.path.join(out_dir, "checkpoint_best.pten")
    save_checkpoint(best_path, best_net,
                    extra={"epoch": outcome.best_epoch,
                           "val_l1": outcome.best_val_l1})

    vr = tuple(config["data"]["value_range"])
    metrics = _split_metrics(best_net, arrays, window=args.window,
                             ratio=config["model"]["ratio"], value_range=vr)
    manifest = build_manifest(_hashable_config(config), outcome,
                              os.path.basename(best_path), metrics)
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    if not args.quiet:
        print(f"train: best val l1 {outcome.best_val_l1:.6f} at epoch "
              f"{outcome.best_epoch}; artifacts in {out_dir}")
    return 0


def _best_snapshot(last_checkpoint_path: str) -> dict:
    best_path = os.path.join(os.path.dirname(last_checkpoint_path),
                             "checkpoint_best.pten")
    net, _, _ = load_checkpoint(best_path)
    return net.params.snapshot()


def _print_epoch(row: dict):
    print(f"epoch {row['epoch']:4d}  lr {row['lr']:.2e}  "
          f"train l1 {row['train_l1']:.6f}  total {row['train_total']:.6f}  "
          f"val l1 {row['val_l1']:.6f}")


def cmd_sharpen(args) -> int:
    out_dir = _resolve_out_dir(args, "sharpened")
    os.makedirs(out_dir, exist_ok=True)
    net, _, _ = load_checkpoint(args.checkpoint)
    pan = read_tensor(args.pan)
    ms = read_tensor(args.ms)
    if pan.ndim != 2:
        raise DimensionError(f"pan must be [H, W], got shape {pan.shape}")
    if ms.ndim != 3:
        raise DimensionError(f"ms must be [bands, h, w], got shape {ms.shape}")
    if ms.shape[0] != net.config.bands:
        raise DimensionError(
            f"checkpoint was trained for {net.config.bands} bands but the ms "
            f"cube has {ms.shape[0]}")
    vr = tuple(args.value_range)
    fused_n = net.predict(normalize(pan, vr)[None, None],
                          normalize(ms, vr)[None])
    if not np.isfinite(fused_n).all():
        raise NumericError("sharpened output contains NaN or Inf")
    fused = np.clip(denormalize(fused_n[0], vr), vr[0], vr[1])
    write_tensor(os.path.join(out_dir, "fused.pten"), fused)
    write_ppm(os.path.join(out_dir, "fused.ppm"),
              _quantize8(_preview_bands(fused), vr), maxval=255)
    print(f"sharpen: wrote fused {tuple(fused.shape)} to {out_dir}")
    return 0


def _evaluate_one(name: str, fused: np.ndarray, ref, pan, ms, window: int,
                  ratio: int) -> MetricReport:
    have_fr = ref is not None
    have_qnr = pan is not None and ms is not None
    if not have_fr and not have_qnr:
        raise ConfigError("evaluate needs --ref for full-reference metrics "
                          "and/or both --pan and --ms for the QNR family")
    dims = [fused.shape[1], fused.shape[2]]
    if have_qnr:
        dims += [ms.shape[1], ms.shape[2]]
    w = _clamp_window(window, *dims)
    if w != window:
        print(f"dcnet: note: {name}: quality-index window clamped from "
              f"{window} to {w} to fit the image", file=sys.stderr)
    row = MetricReport(scene=name)
    if have_fr:
        row = replace(full_reference_report(fused, ref, ratio=ratio, window=w,
                                            scene=name))
    if have_qnr:
        rf = reference_free_report(fused, ms, pan, window=w, scene=name)
        row = replace(row, d_lambda=rf.d_lambda, d_s=rf.d_s, qnr=rf.qnr)
    return row


def cmd_evaluate(args) -> int:
    out_dir = _resolve_out_dir(args, "evaluation")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    if args.scenes:
        names = sorted(entry for entry in os.listdir(args.scenes)
                       if os.path.isdir(os.path.join(args.scenes, entry)))
        for name in names:
            base = os.path.join(args.scenes, name)
            fused_path = os.path.join(base, "fused.pten")
            if not os.path.exists(fused_path):
                continue
            fused = read_tensor(fused_path)
            ref = _optional_tensor(base, "truth.pten")
            pan = _optional_tensor(base, "pan.pten")
            ms = _optional_tensor(base, "ms.pten")
            rows.append(_evaluate_one(name, fused, ref, pan, ms,
                                      args.window, args.ratio))
        if not rows:
            raise ConfigError(f"no scene directory under {args.scenes} "
                              "contains a fused.pten")
        rows.append(_mean_report(rows))
    else:
        if not args.fused:
            raise ConfigError("evaluate needs --fused (or --scenes for "
                              "batch mode)")
        fused = read_tensor(args.fused)
        ref = read_tensor(args.ref) if args.ref else None
        pan = read_tensor(args.pan) if args.pan else None
        ms = read_tensor(args.ms) if args.ms else None
        rows.append(_evaluate_one("scene", fused, ref, pan, ms,
                                  args.window, args.ratio))
    write_report_json(os.path.join(out_dir, "report.json"), rows)
    write_report_csv(os.path.join(out_dir, "report.csv"), rows)
    for row in rows:
        parts = [f"{col} {getattr(row, col):.6f}"
                 for col in MetricReport.COLUMNS[1:]
                 if isinstance(getattr(row, col), float)]
        print(f"{row.scene}: " + "  ".join(parts))
    return 0


def _optional_tensor(base: str, name: str):
    path = os.path.join(base, name)
    return read_tensor(path) if os.path.exists(path) else None


def _ablation_variants(axis: str, config: dict) -> list:
    """(label, model-section overrides) pairs, in the CSV's row order."""
    levels = config["model"]["levels"]
    if axis == "backbone":
        return [(name, {"backbone": name}) for name in BACKBONES]
    if axis == "fusion_op":
        return [(name, {"fusion_op": name}) for name in FUSION_OPS]
    if axis == "fusion_levels":
        variants = []
        for first in range(levels, 0, -1):
            chosen = list(range(first, levels + 1))
            label = "{" + ",".join(str(v) for v in chosen) + "}"
            variants.append((label, {"fusion_levels": chosen}))
        return variants
    if axis == "num_levels":
        return [(str(n), {"levels": n, "fusion_levels": None})
                for n in range(1, 7)]
    raise ConfigError(f"unknown ablation axis '{axis}'")


ABLATION_COLUMNS = ("axis", "variant", "status", "q2n", "uiqi", "sam_deg",
                    "ergas", "scc", "d_lambda", "d_s", "qnr")


def cmd_ablate(args) -> int:
    config = _load_experiment(args)
    out_dir = config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    arrays, _ = _experiment_splits(config)
    seed = config["train"]["seed"]
    train_cfg = config["train"]
    vr = tuple(config["data"]["value_range"])

    rows = []
    for label, overrides in _ablation_variants(args.axis, config):
        variant_cfg = copy.deepcopy(config)
        variant_cfg["model"].update(overrides)
        row = {"axis": args.axis, "variant": label, "status": "ok"}
        try:
            net = DCNet(_model_config(variant_cfg), seed=seed)
            train_model(net, arrays["train"], arrays["val"],
                        epochs=train_cfg["epochs"],
                        batch_size=train_cfg["batch_size"],
                        base_lr=train_cfg["base_lr"], seed=seed,
                        lr_decay=train_cfg["lr_decay"],
                        lr_every=train_cfg["lr_every"])
            metrics = _split_metrics(net, arrays, window=args.window,
                                     ratio=variant_cfg["model"]["ratio"],
                                     value_range=vr)
            row.update({k: v for k, v in metrics["mean"].items()
                        if k != "scene"})
        except Exception as exc:  # keep the sweep alive; record the failure
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
        if not args.quiet:
            print(f"ablate {args.axis} {row['variant']}: {row['status']}")

    csv_path = os.path.join(out_dir, f"ablation_{args.axis}.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            cells = []
            for col in ABLATION_COLUMNS:
                value = row.get(col)
                if value is None:
                    cells.append("")
                elif isinstance(value, float):
                    cells.append(repr(value))
                else:
                    cells.append(str(value))
            writer.writerow(cells)
    print(f"ablate: wrote {csv_path} ({len(rows)} variants)")
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_experiment_flags(p: _Parser):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", help=f"output directory (beats the {OUT_DIR_ENV} "
                                 "env var, which beats the config file)")
    p.add_argument("--seed", type=int, help="training seed (mandatory if the "
                                            "config file does not set one)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--base-lr", dest="base_lr", type=float)
    p.add_argument("--bands", type=int)
    p.add_argument("--spectral-channels", dest="spectral_channels", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--fusion-op", dest="fusion_op", choices=FUSION_OPS)
    p.add_argument("--backbone", choices=BACKBONES)
    p.add_argument("--fusion-levels", dest="fusion_levels",
                   help="comma-separated level indices, e.g. 3,4")
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--patch-stride", dest="patch_stride", type=int)
    p.add_argument("--scene", help="train on a degraded scene directory "
                                   "instead of the synth settings")
    p.add_argument("--window", type=int, default=32,
                   help="quality-index window (clamped to the image)")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="dcnet",
                     description="Dual-channel pan-sharpening toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic "
                       "full-resolution truth/pan pair")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="Wald-protocol reduction of a "
                       "truth/pan pair into a training scene")
    p.add_argument("--truth", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ratio", type=int, default=RATIO)
    p.add_argument("--value-range", dest="value_range", type=float, nargs=2,
                   default=list(DN_RANGE))
    p.add_argument("--out")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train a sharpener and write "
                       "checkpoints + manifest")
    _add_experiment_flags(p)
    p.add_argument("--resume", help="continue from a checkpoint_last.pten")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sharpen", help="apply a checkpoint to a pan/ms pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pan", required=True)
    p.add_argument("--ms", required=True)
    p.add_argument("--value-range", dest="value_range", type=float, nargs=2,
                   default=list(DN_RANGE))
    p.add_argument("--out")
    p.set_defaults(func=cmd_sharpen)

    p = sub.add_parser("evaluate", help="score fused output (full-reference "
                       "and/or QNR family)")
    p.add_argument("--fused")
    p.add_argument("--ref")
    p.add_argument("--pan")
    p.add_argument("--ms")
    p.add_argument("--scenes", help="directory of scene subdirectories for "
                                    "batch mode (adds a mean row)")
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--ratio", type=int, default=RATIO)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score every variant along "
                       "one architecture axis")
    p.add_argument("axis", choices=("backbone", "fusion_levels", "fusion_op",
                                    "num_levels"))
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"dcnet: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DimensionError, FormatError, MetricError) as exc:
        print(f"dcnet: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"dcnet: missing file: {exc}", file=sys.stderr)
        return 2
    except IsADirectoryError as exc:
        print(f"dcnet: expected a file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
