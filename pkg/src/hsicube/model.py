"""Spectral-spatial classifier: parallel 2D/3D branches with staged fusion.

The network runs four convolution stages in two branches over an S x S x B
neighborhood patch. The 2D branch treats the patch as a B-channel image and
extracts spatial structure; the 3D branch treats it as a single-channel
volume and follows correlations along the band axis. After every stage the
3D feature volume is folded (depth into channels) and concatenated onto the
2D feature map. The first three fused maps pass a residual pairwise
attention block and a squeeze-excitation residual unit (each optional, for
ablations) and feed the next 2D stage; the fourth fused map goes through a
1x1 convolution head, global average pooling, dropout, and a dense layer to
the class logits.

Stage geometry (spatial kernel/stride/pad per stage, identical in both
branches) takes an 11 x 11 patch through 9 -> 7 -> 3 -> 3, and the depth
kernels (4, 4, 2, 2 with a stride-2 third stage) take 10 bands to a single
fused plane. Depth kernels clamp to the remaining band depth so narrow
inputs (screened band sets, micro test models) stay valid; spatial extents
that fall below the kernel raise a config error naming the stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import ops
from .autograd.layers import (
    AttentionBlock,
    ConvBNRelu2d,
    ConvBNRelu3d,
    Dense,
    Dropout,
    Module,
    SEResNetUnit,
)
from .autograd.optim import Adam
from .autograd.tensor import Tensor
from .errors import ConfigError, DataError
from .hypercube import HyperCube
from .metrics import EvalReport, confusion, report
from .spectral import BandSelection

SPATIAL_KERNELS = ((3, 3), (3, 3), (2, 2), (3, 3))
SPATIAL_STRIDES = ((1, 1), (1, 1), (2, 2), (1, 1))
SPATIAL_PADS = ((0, 0), (0, 0), (0, 0), (1, 1))
DEPTH_KERNELS = (4, 4, 2, 2)
DEPTH_STRIDES = (1, 1, 2, 1)

VARIANTS = ("ours", "ours-a", "ours-s", "ours-a-s", "2dcnn", "3dcnn")


@dataclass
class ModelConfig:
    """Architecture and training hyperparameters."""

    S: int = 11
    B: int = 10
    num_classes: int = 4
    use_attention: bool = True
    use_se: bool = True
    dropout: float = 0.4
    epochs: int = 60
    batch_size: int = 16
    lr: float = 2e-4
    seed: int = 0
    width2d: int = 32
    width3d: int = 8
    head_width: int = 64
    dtype: str = "float32"
    early_stop_acc: float | None = None

    def __post_init__(self):
        if self.S < 1 or self.S % 2 == 0:
            raise ConfigError(f"S must be odd and positive, got {self.S}")
        if self.B < 2:
            raise ConfigError(f"B must be >= 2, got {self.B}")
        if not (0 <= self.dropout < 1):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.num_classes < 2:
            raise ConfigError("need at least 2 classes")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("bad training hyperparameters")
        if np.dtype(self.dtype) not in (np.float32, np.float64):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class Sample:
    """One neighborhood patch (S, S, B) with its class label."""

    patch: np.ndarray
    label: int
    genotype: str = ""


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    epoch_accuracies: list = field(default_factory=list)
    train_report: EvalReport | None = None
    test_report: EvalReport | None = None
    wall_seconds: float = 0.0
    seed: int = 0
    epochs_run: int = 0


def _spatial_schedule(S):
    """Per-stage spatial extents; raises naming the failing stage."""
    extents = []
    e = S
    for i, (k, s, p) in enumerate(zip(SPATIAL_KERNELS, SPATIAL_STRIDES, SPATIAL_PADS), start=1):
        if e + 2 * p[0] < k[0]:
            raise ConfigError(
                f"stage {i}: spatial extent {e} too small for kernel {k[0]} (S too small)"
            )
        e = (e + 2 * p[0] - k[0]) // s[0] + 1
        extents.append(e)
    return extents


def _depth_schedule(B):
    """Per-stage band depths with kernels clamped to the remaining depth."""
    depths, kernels = [], []
    d = B
    for k, s in zip(DEPTH_KERNELS, DEPTH_STRIDES):
        kd = min(k, d)
        d = (d - kd) // s + 1
        kernels.append(kd)
        depths.append(d)
    return depths, kernels


class _Head(Module):
    """1x1 conv + BN + ReLU, global average pool, dropout, dense logits."""

    def __init__(self, in_ch, cfg, rng, drop_rng):
        super().__init__()
        dtype = cfg.np_dtype
        self.conv = ConvBNRelu2d(in_ch, cfg.head_width, (1, 1), rng=rng, dtype=dtype)
        self.drop = Dropout(cfg.dropout, drop_rng)
        self.classifier = Dense(cfg.head_width, cfg.num_classes, rng=rng, dtype=dtype)

    def __call__(self, fmap):
        h = self.conv(fmap)
        z = ops.global_avg_pool(h)
        z = self.drop(z)
        return self.classifier(z)


class FusionNet(Module):
    """The full two-branch fusion classifier (attention/SE switchable)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed)
        self.drop_rng = np.random.default_rng(cfg.seed + 1)
        self.spatial = _spatial_schedule(cfg.S)
        self.depths, depth_kernels = _depth_schedule(cfg.B)
        self.fused_channels = [cfg.width2d + cfg.width3d * d for d in self.depths]

        in2d = [cfg.B] + self.fused_channels[:3]
        self.blocks2d = [
            ConvBNRelu2d(in2d[i], cfg.width2d, SPATIAL_KERNELS[i], SPATIAL_STRIDES[i],
                         SPATIAL_PADS[i], rng=rng, dtype=dtype)
            for i in range(4)
        ]
        in3d = [1, cfg.width3d, cfg.width3d, cfg.width3d]
        self.blocks3d = [
            ConvBNRelu3d(
                in3d[i], cfg.width3d,
                (depth_kernels[i],) + SPATIAL_KERNELS[i],
                (DEPTH_STRIDES[i],) + SPATIAL_STRIDES[i],
                (0,) + SPATIAL_PADS[i],
                rng=rng, dtype=dtype,
            )
            for i in range(4)
        ]
        if cfg.use_attention:
            self.attn = [AttentionBlock(self.fused_channels[i], rng=rng, dtype=dtype)
                         for i in range(3)]
        if cfg.use_se:
            self.se = [SEResNetUnit(self.fused_channels[i], None, rng=rng, dtype=dtype)
                       for i in range(3)]
        self.head = _Head(self.fused_channels[3], cfg, rng, self.drop_rng)
        self.assign_parameter_names()

    def forward(self, patches) -> Tensor:
        """patches: numpy [N, S, S, B] -> class logits Tensor [N, K]."""
        arr = np.ascontiguousarray(
            patches.transpose(0, 3, 1, 2).astype(self.cfg.np_dtype, copy=False)
        )
        n = arr.shape[0]
        w3 = self.cfg.width3d
        x3 = Tensor(arr[:, None])
        fused = Tensor(arr)
        for k in range(4):
            x3 = self.blocks3d[k](x3)
            h2 = self.blocks2d[k](fused)
            e = self.spatial[k]
            folded = ops.reshape(x3, (n, w3 * self.depths[k], e, e))
            fused = ops.concat([h2, folded], axis=1)
            if k < 3:
                if self.cfg.use_attention:
                    fused = self.attn[k](fused)
                if self.cfg.use_se:
                    fused = self.se[k](fused)
        return self.head(fused)


class Baseline2d(Module):
    """The 2D branch alone with the shared head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed)
        self.drop_rng = np.random.default_rng(cfg.seed + 1)
        self.spatial = _spatial_schedule(cfg.S)
        in2d = [cfg.B] + [cfg.width2d] * 3
        self.blocks2d = [
            ConvBNRelu2d(in2d[i], cfg.width2d, SPATIAL_KERNELS[i], SPATIAL_STRIDES[i],
                         SPATIAL_PADS[i], rng=rng, dtype=dtype)
            for i in range(4)
        ]
        self.head = _Head(cfg.width2d, cfg, rng, self.drop_rng)
        self.assign_parameter_names()

    def forward(self, patches) -> Tensor:
        arr = np.ascontiguousarray(
            patches.transpose(0, 3, 1, 2).astype(self.cfg.np_dtype, copy=False)
        )
        x = Tensor(arr)
        for block in self.blocks2d:
            x = block(x)
        return self.head(x)


class Baseline3d(Module):
    """The 3D branch alone with the shared head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dtype = cfg.np_dtype
        rng = np.random.default_rng(cfg.seed)
        self.drop_rng = np.random.default_rng(cfg.seed + 1)
        self.spatial = _spatial_schedule(cfg.S)
        self.depths, depth_kernels = _depth_schedule(cfg.B)
        in3d = [1] + [cfg.width3d] * 3
        self.blocks3d = [
            ConvBNRelu3d(
                in3d[i], cfg.width3d,
                (depth_kernels[i],) + SPATIAL_KERNELS[i],
                (DEPTH_STRIDES[i],) + SPATIAL_STRIDES[i],
                (0,) + SPATIAL_PADS[i],
                rng=rng, dtype=dtype,
            )
            for i in range(4)
        ]
        self.head = _Head(cfg.width3d * self.depths[3], cfg, rng, self.drop_rng)
        self.assign_parameter_names()

    def forward(self, patches) -> Tensor:
        arr = np.ascontiguousarray(
            patches.transpose(0, 3, 1, 2).astype(self.cfg.np_dtype, copy=False)
        )
        n = arr.shape[0]
        x = Tensor(arr[:, None])
        for block in self.blocks3d:
            x = block(x)
        e = self.spatial[3]
        folded = ops.reshape(x, (n, self.cfg.width3d * self.depths[3], e, e))
        return self.head(folded)


def build_fusion_model(cfg: ModelConfig) -> FusionNet:
    return FusionNet(cfg)


def build_baseline(kind: str, cfg: ModelConfig):
    if kind in ("cnn2d", "2dcnn"):
        return Baseline2d(cfg)
    if kind in ("cnn3d", "3dcnn"):
        return Baseline3d(cfg)
    raise ConfigError(f"unknown baseline kind {kind!r}")


def build_model(cfg: ModelConfig, variant: str = "ours"):
    """Build any experiment variant from one config."""
    if variant == "ours":
        return build_fusion_model(replace(cfg, use_attention=True, use_se=True))
    if variant == "ours-a":
        return build_fusion_model(replace(cfg, use_attention=False, use_se=True))
    if variant == "ours-s":
        return build_fusion_model(replace(cfg, use_attention=True, use_se=False))
    if variant == "ours-a-s":
        return build_fusion_model(replace(cfg, use_attention=False, use_se=False))
    if variant in ("2dcnn", "cnn2d", "3dcnn", "cnn3d"):
        return build_baseline(variant, cfg)
    raise ConfigError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


def count_parameters(model) -> int:
    return int(sum(p.size for p in model.parameters()))


def adapt_band_indices(indices, target: int) -> np.ndarray:
    """Fit a band index list to exactly ``target`` entries.

    More bands than needed: evenly spaced subsample (keeps spectral
    coverage). Fewer: pad by repeating the last band.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("cannot adapt an empty band list")
    if target < 1:
        raise ValueError("target band count must be >= 1")
    if indices.size == target:
        return indices
    if indices.size > target:
        pick = np.round(np.linspace(0, indices.size - 1, target)).astype(np.int64)
        return indices[pick]
    pad = np.full(target - indices.size, indices[-1], dtype=np.int64)
    return np.concatenate([indices, pad])


def extract_patches(cube: HyperCube, selection: BandSelection | None, S: int,
                    label: int = 0, genotype: str = "",
                    target_bands: int | None = None) -> list:
    """All samples with a fully valid, fully in-bounds S x S neighborhood.

    Each sample's patch is restricted to the selected bands (all bands when
    ``selection`` is None) and optionally adapted to ``target_bands``.
    Centers whose neighborhood touches a masked or out-of-bounds pixel are
    skipped.
    """
    if S < 1 or S % 2 == 0:
        raise ValueError(f"S must be odd and positive, got {S}")
    if selection is not None and len(selection) == 0:
        raise ValueError("band selection is empty")
    band_idx = selection.indices if selection is not None else np.arange(cube.bands)
    if target_bands is not None:
        band_idx = adapt_band_indices(band_idx, target_bands)
    if S > cube.height or S > cube.width:
        return []
    half = S // 2
    counts = sliding_window_view(cube.mask.astype(np.int32), (S, S)).sum(axis=(2, 3))
    full = np.argwhere(counts == S * S)
    data = cube.data[band_idx]
    samples = []
    for r0, c0 in full:
        patch = data[:, r0:r0 + S, c0:c0 + S].transpose(1, 2, 0).copy()
        samples.append(Sample(patch=patch, label=label, genotype=genotype))
    return samples


def collect_patches(tiles, labels, selection, S, target_bands=None,
                    per_tile=None, seed=0, genotypes=None) -> list:
    """Extract patches from labeled tiles, optionally capped per tile.

    The cap takes a deterministic random subset so large tiles do not flood
    the training set.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i, (tile, label) in enumerate(zip(tiles, labels)):
        genotype = genotypes[i] if genotypes is not None else ""
        samples = extract_patches(tile, selection, S, int(label), genotype, target_bands)
        if per_tile is not None and len(samples) > per_tile:
            pick = rng.choice(len(samples), size=per_tile, replace=False)
            samples = [samples[j] for j in sorted(pick)]
        out.extend(samples)
    return out


def _batch_array(samples, dtype):
    return np.stack([s.patch for s in samples]).astype(dtype, copy=False)


def train(model, train_samples, cfg: ModelConfig, eval_samples=None) -> TrainReport:
    """Mini-batch Adam on softmax cross-entropy; deterministic per seed.

    Shuffle order, dropout and initialization all derive from cfg.seed, so
    two runs with identical inputs produce bit-identical parameters. With
    ``cfg.early_stop_acc`` set, training stops after the first epoch whose
    running training accuracy reaches the threshold.
    """
    if len(train_samples) == 0:
        raise DataError("empty training set")
    labels = np.asarray([s.label for s in train_samples], dtype=np.int64)
    if np.unique(labels).size < 2:
        raise DataError("training set covers a single class; need at least 2")
    X = _batch_array(train_samples, cfg.np_dtype)
    n = X.shape[0]
    t0 = time.perf_counter()
    report_out = TrainReport(seed=cfg.seed)
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(cfg.seed)

    for _ in range(cfg.epochs):
        model.set_training(True)
        perm = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            logits = model.forward(X[idx])
            loss = ops.cross_entropy(logits, labels[idx])
            model.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += loss.item() * idx.size
            correct += int((np.argmax(logits.data, axis=1) == labels[idx]).sum())
        report_out.epoch_losses.append(total_loss / n)
        report_out.epoch_accuracies.append(correct / n)
        report_out.epochs_run += 1
        if cfg.early_stop_acc is not None and correct / n >= cfg.early_stop_acc:
            break

    if report_out.epochs_run > 0:
        report_out.train_report = evaluate(model, train_samples)
        if eval_samples:
            report_out.test_report = evaluate(model, eval_samples)
    report_out.wall_seconds = time.perf_counter() - t0
    return report_out


def predict(model, samples, batch_size: int = 64) -> list:
    """Eval-mode predictions: list of (class, class-probability vector)."""
    model.set_training(False)
    out = []
    X = _batch_array(samples, model.cfg.np_dtype)
    for lo in range(0, X.shape[0], batch_size):
        logits = model.forward(X[lo:lo + batch_size]).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        for row in range(probs.shape[0]):
            out.append((int(np.argmax(probs[row])), probs[row].astype(np.float64)))
    return out


def evaluate(model, samples) -> EvalReport:
    preds = np.asarray([c for c, _ in predict(model, samples)], dtype=np.int64)
    truth = np.asarray([s.label for s in samples], dtype=np.int64)
    matrix = confusion(truth, preds, model.cfg.num_classes)
    return report(matrix)
