"""Training loop, checkpoints, and run manifests.

Determinism contract: given the same seed, data, and config, every run
produces bit-identical parameters and manifests. All randomness flows through
seeded generators (the per-epoch shuffle is seeded by (seed, epoch)), nothing
reads the clock, and training runs single-threaded float32.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import normalize
from .engine import AdamState, NumericError, Tape, adam_step, lr_schedule
from .engine.errors import ConfigError, FormatError
from .formats import read_tensor_archive, write_tensor_archive
from .model import DCNet, ModelConfig


def stack_patches(patches, value_range=None) -> dict:
    """SceneTriples -> normalized arrays {pan [N,1,h,w], ms, truth}."""
    if not patches:
        raise ConfigError("empty patch list")
    vr = value_range if value_range is not None else patches[0].value_range
    pan = np.stack([normalize(p.pan, vr) for p in patches])[:, None]
    ms = np.stack([normalize(p.ms, vr) for p in patches])
    truth = None
    if patches[0].truth is not None:
        truth = np.stack([normalize(p.truth, vr) for p in patches])
    return {"pan": pan, "ms": ms, "truth": truth, "value_range": vr}


def _batched_l1(net: DCNet, data: dict, batch_size: int) -> float:
    """Mean absolute error over a dataset, outside any tape."""
    n = data["pan"].shape[0]
    total = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        pred = net.forward(data["pan"][start:stop], data["ms"][start:stop]).data
        total += float(np.sum(np.abs(pred - data["truth"][start:stop])))
    return total / float(np.prod(data["truth"].shape))


@dataclass
class TrainOutcome:
    curve: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_l1: float = float("inf")
    best_params: dict = field(default_factory=dict)
    trained_epochs: int = 0
    stopped_early: bool = False
    adam: AdamState | None = None
    start_epoch: int = 0


def train_model(net: DCNet, train_data: dict, val_data: dict | None = None, *,
                epochs: int, batch_size: int, base_lr: float, seed: int,
                lr_decay: float = 0.8, lr_every: int = 150,
                stop_l1: float | None = None, resume: TrainOutcome | None = None,
                progress=None) -> TrainOutcome:
    """Adam training of ``net`` on normalized patch arrays.

    ``val_data`` falls back to the training set when absent; the best
    checkpoint is chosen by validation l1. ``resume`` continues a previous
    outcome (optimizer state, epoch counter, and curve included). ``stop_l1``
    ends training early once the epoch's training l1 falls below it.
    """
    if epochs < 1 or batch_size < 1:
        raise ConfigError(f"epochs ({epochs}) and batch_size ({batch_size}) "
                          "must be >= 1")
    if train_data.get("truth") is None:
        raise ConfigError("training patches carry no ground truth")
    val = val_data if val_data is not None and val_data["pan"].shape[0] else train_data
    n = train_data["pan"].shape[0]

    out = resume if resume is not None else TrainOutcome()
    if out.adam is None:
        out.adam = AdamState(lr=base_lr)
    first_epoch = out.start_epoch

    for epoch in range(first_epoch, epochs):
        out.adam.lr = lr_schedule(epoch, base_lr, lr_decay, lr_every)
        order = np.random.default_rng([seed, epoch]).permutation(n)
        l1_sum = 0.0
        total_sum = 0.0
        seen = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            net.params.zero_grad()
            with Tape() as tape:
                pred = net.forward(train_data["pan"][idx], train_data["ms"][idx])
                total, l1 = net.loss(pred, train_data["truth"][idx])
            total_v = total.item()
            if not np.isfinite(total_v):
                raise NumericError(f"non-finite loss {total_v} at epoch {epoch}")
            tape.backward(total)
            adam_step(net.params, out.adam)
            l1_sum += l1.item() * len(idx)
            total_sum += total_v * len(idx)
            seen += len(idx)
        val_l1 = _batched_l1(net, val, batch_size)
        if not np.isfinite(val_l1):
            raise NumericError(f"non-finite validation l1 at epoch {epoch}")
        row = {"epoch": epoch, "lr": out.adam.lr,
               "train_l1": l1_sum / seen, "train_total": total_sum / seen,
               "val_l1": val_l1}
        out.curve.append(row)
        if val_l1 < out.best_val_l1:
            out.best_val_l1 = val_l1
            out.best_epoch = epoch
            out.best_params = net.params.snapshot()
        if progress is not None:
            progress(row)
        out.trained_epochs = epoch + 1
        out.start_epoch = epoch + 1
        if stop_l1 is not None and row["train_l1"] < stop_l1:
            out.stopped_early = True
            break
    if not out.best_params:
        out.best_params = net.params.snapshot()
    return out


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, net: DCNet, adam: AdamState | None = None,
                    extra: dict | None = None):
    """Parameters (and optionally optimizer moments) + a JSON sidecar."""
    entries = {}
    for name, p in net.params.items():
        entries[f"param.{name}"] = p.data
    meta = {"config": net.config.to_dict(), "format": 1}
    if adam is not None:
        for name in net.params.names():
            entries[f"adam.m.{name}"] = adam.m[name]
            entries[f"adam.v.{name}"] = adam.v[name]
        meta["adam"] = {"t": adam.t, "lr": adam.lr, "beta1": adam.beta1,
                        "beta2": adam.beta2, "eps": adam.eps}
    if extra:
        meta["extra"] = extra
    write_tensor_archive(path, entries)
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar(path) -> str:
    return os.fspath(path) + ".json"


def load_checkpoint(path):
    """Returns (net, adam_or_None, extra_dict)."""
    entries = read_tensor_archive(path)
    try:
        with open(_sidecar(path), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"checkpoint sidecar {_sidecar(path)} is missing")
    config = ModelConfig.from_dict(meta["config"])
    net = DCNet(config, params=None, seed=0)
    params = {name[len("param."):]: arr for name, arr in entries.items()
              if name.startswith("param.")}
    net.params.load_snapshot(params)
    adam = None
    if "adam" in meta:
        a = meta["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                         eps=a["eps"], t=a["t"])
        for name in net.params.names():
            adam.m[name] = entries[f"adam.m.{name}"]
            adam.v[name] = entries[f"adam.v.{name}"]
    return net, adam, meta.get("extra", {})


# ---------------------------------------------------------------------------
# manifests

def config_hash(config: dict) -> str:
    import hashlib
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(experiment_config: dict, outcome: TrainOutcome,
                   checkpoint_path: str | None, metrics: dict | None) -> dict:
    """Deterministic run record: no timestamps, no environment capture."""
    return {
        "config_hash": config_hash(experiment_config),
        "code_version": __version__,
        "epochs": outcome.curve,
        "best_epoch": outcome.best_epoch,
        "best_val_l1": outcome.best_val_l1,
        "trained_epochs": outcome.trained_epochs,
        "stopped_early": outcome.stopped_early,
        "checkpoint": checkpoint_path,
        "metrics": metrics or {},
    }


def write_manifest(path, manifest: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
