"""Scikit-learn style wrapper around the sharpening network.

``DCNetSharpener`` follows the estimator contract: constructor arguments are
stored verbatim, ``fit``/``predict`` do the work, ``get_params`` /
``set_params`` come from ``BaseEstimator``. Samples are (pan, ms) pairs —
a single-band panchromatic image plus the low-resolution band cube it
sharpens — and targets are full-resolution band cubes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import DN_RANGE, denormalize, normalize
from .engine.errors import DimensionError
from .metrics import uiqi
from .model import DCNet, ModelConfig
from .training import train_model


class DCNetSharpener(BaseEstimator):
    """Dual-channel pan-sharpener with an estimator interface.

    Parameters mirror :class:`~dcnet.model.ModelConfig` plus the training
    budget. ``fit`` expects ``X`` as a sequence of ``(pan, ms)`` pairs with
    ``pan`` shaped [H, W] and ``ms`` shaped [bands, H/ratio, W/ratio], and
    ``y`` as a sequence of [bands, H, W] reference cubes on the same grid
    as ``pan``.
    """

    def __init__(self, bands=4, spectral_channels=32, levels=4,
                 fusion_levels=None, fusion_op="s2clstm", backbone="2d3d",
                 transpose_projection=False, epochs=200, batch_size=4,
                 base_lr=1e-3, l2_weight=1e-8, seed=0, value_range=DN_RANGE,
                 validation_fraction=0.0):
        self.bands = bands
        self.spectral_channels = spectral_channels
        self.levels = levels
        self.fusion_levels = fusion_levels
        self.fusion_op = fusion_op
        self.backbone = backbone
        self.transpose_projection = transpose_projection
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.l2_weight = l2_weight
        self.seed = seed
        self.value_range = value_range
        self.validation_fraction = validation_fraction

    # -- data plumbing ------------------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(bands=self.bands,
                           spectral_channels=self.spectral_channels,
                           levels=self.levels,
                           fusion_levels=self.fusion_levels,
                           fusion_op=self.fusion_op,
                           backbone=self.backbone,
                           transpose_projection=self.transpose_projection,
                           l2_weight=self.l2_weight)

    def _stack_pairs(self, X) -> dict:
        pans, mss = [], []
        for i, pair in enumerate(X):
            if len(pair) != 2:
                raise DimensionError(f"sample {i} is not a (pan, ms) pair")
            pan = np.asarray(pair[0], dtype=np.float32)
            ms = np.asarray(pair[1], dtype=np.float32)
            if pan.ndim != 2:
                raise DimensionError(f"sample {i}: pan must be [H, W], "
                                     f"got shape {pan.shape}")
            if ms.ndim != 3:
                raise DimensionError(f"sample {i}: ms must be [bands, h, w], "
                                     f"got shape {ms.shape}")
            pans.append(normalize(pan, self.value_range))
            mss.append(normalize(ms, self.value_range))
        if not pans:
            raise DimensionError("X holds no samples")
        return {"pan": np.stack(pans)[:, None], "ms": np.stack(mss),
                "truth": None, "value_range": self.value_range}

    def _stack_targets(self, y, n: int):
        cubes = [np.asarray(c, dtype=np.float32) for c in y]
        if len(cubes) != n:
            raise DimensionError(f"X has {n} samples but y has {len(cubes)}")
        for i, c in enumerate(cubes):
            if c.ndim != 3:
                raise DimensionError(f"target {i} must be [bands, H, W], "
                                     f"got shape {c.shape}")
        return np.stack([normalize(c, self.value_range) for c in cubes])

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y):
        """Train from scratch on (pan, ms) pairs and reference cubes."""
        data = self._stack_pairs(X)
        data["truth"] = self._stack_targets(y, data["pan"].shape[0])
        n = data["pan"].shape[0]
        n_val = int(round(self.validation_fraction * n))
        if not 0 <= n_val < n:
            raise DimensionError(
                f"validation_fraction {self.validation_fraction} leaves no "
                f"training samples out of {n}")
        val = None
        if n_val:
            order = np.random.default_rng(self.seed).permutation(n)
            tr, va = order[n_val:], order[:n_val]
            val = {k: (v[va] if isinstance(v, np.ndarray) else v)
                   for k, v in data.items()}
            data = {k: (v[tr] if isinstance(v, np.ndarray) else v)
                    for k, v in data.items()}
        self.net_ = DCNet(self._model_config(), seed=self.seed)
        outcome = train_model(self.net_, data, val,
                              epochs=self.epochs, batch_size=self.batch_size,
                              base_lr=self.base_lr, seed=self.seed)
        self.net_.params.load_snapshot(outcome.best_params)
        self.curve_ = outcome.curve
        self.best_epoch_ = outcome.best_epoch
        self.best_val_l1_ = outcome.best_val_l1
        return self

    def predict(self, X):
        """Fused cubes [n, bands, H, W], clamped to the configured range."""
        if not hasattr(self, "net_"):
            raise NotFittedError("this DCNetSharpener is not fitted; "
                                 "call fit first")
        data = self._stack_pairs(X)
        fused = self.net_.predict(data["pan"], data["ms"])
        lo, hi = self.value_range
        return np.clip(denormalize(fused, self.value_range), lo, hi)

    def score(self, X, y):
        """Mean universal image quality index against reference cubes."""
        fused = self.predict(X)
        refs = [np.asarray(c, dtype=np.float64) for c in y]
        if len(refs) != fused.shape[0]:
            raise DimensionError(f"X has {fused.shape[0]} samples but y has "
                                 f"{len(refs)}")
        window = min(8, fused.shape[2], fused.shape[3])
        scores = [uiqi(fused[i], refs[i], window=window)
                  for i in range(fused.shape[0])]
        return float(np.mean(scores))
