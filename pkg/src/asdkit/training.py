"""Training loop: adaptive-gradient optimization over example windows and
the model-variant comparison matrix.

Determinism contract: given the same windows and config, two runs produce
bit-identical parameters. Shuffling depends only on (seed, epoch); batch
reduction order is fixed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .features import ExampleWindow
from .metrics import mann_whitney_auc
from .model import (
    HeadType,
    Modality,
    ModelSpec,
    forward,
    init_parameters,
    loss_and_grads,
)
from .model.spec import parse_variant

VALIDATION_BUCKETS = 10  # one in ten tracks held out


@dataclass(frozen=True)
class TrainConfig:
    spec: ModelSpec = field(default_factory=ModelSpec)
    learning_rate: float = 2.0**-6
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    accumulator_epsilon: float = 1e-7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["spec"] = json.loads(self.spec.to_json())
        return json.dumps(d, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        d = json.loads(text)
        d["spec"] = ModelSpec.from_json(json.dumps(d.get("spec", {})))
        return cls(**d)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total: float
    l_av: float
    l_a: float
    l_v: float
    val_auroc: float | None


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps([dataclasses.asdict(e) for e in self.epochs], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainHistory":
        return cls([EpochRecord(**e) for e in json.loads(text)])


def adagrad_step(params, grads, accumulators, cfg: TrainConfig):
    """acc += g^2; w -= lr * g / (sqrt(acc) + eps). Returns new dicts."""
    new_params, new_acc = {}, {}
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise ValidationError(f"non-finite gradient for parameter {name}")
        g = g.astype(p.dtype, copy=False)
        acc = accumulators[name] + g * g
        new_acc[name] = acc
        new_params[name] = p - cfg.learning_rate * g / (np.sqrt(acc) + cfg.accumulator_epsilon)
    return new_params, new_acc


def split_by_track(windows: list[ExampleWindow]):
    """Deterministic 90/10 train/validation split at track granularity."""
    train, val = [], []
    for w in windows:
        digest = hashlib.sha256(w.track_id.encode()).digest()
        bucket = int.from_bytes(digest[:4], "big") % VALIDATION_BUCKETS
        (val if bucket == 0 else train).append(w)
    return train, val


def _batch_inputs(batch: list[ExampleWindow], spec: ModelSpec):
    visual = audio = None
    if spec.uses_visual:
        visual = np.stack([w.face_stacks(spec.stack_size) for w in batch])
    if spec.uses_audio:
        audio = np.stack([w.mel_features() for w in batch])
    targets = np.stack([w.targets for w in batch])
    mask = np.stack([w.mask for w in batch])
    return visual, audio, targets, mask


def validation_auroc(params, spec: ModelSpec, windows: list[ExampleWindow], batch_size: int):
    """auROC over all unmasked frames of the given windows; None if a
    single class is present (undefined)."""
    if not windows:
        return None
    scores, positives = [], []
    for s in range(0, len(windows), batch_size):
        batch = windows[s : s + batch_size]
        visual, audio, targets, mask = _batch_inputs(batch, spec)
        probs = forward(params, spec, visual=visual, audio=audio)["fused"]
        scores.append(probs[..., 1][mask])
        positives.append(targets[mask] > 0.5)
    scores = np.concatenate(scores)
    positives = np.concatenate(positives)
    if positives.all() or not positives.any():
        return None
    return mann_whitney_auc(scores, positives)


def train(windows: list[ExampleWindow], cfg: TrainConfig):
    """Optimize the configured model over the windows.

    Returns (params, TrainHistory). The corpus is split 90/10 by track so
    overlapping windows of one track never straddle the split.
    """
    if not windows:
        raise ValidationError("empty corpus")
    train_windows, val_windows = split_by_track(windows)
    if not train_windows:
        raise ValidationError("all tracks hashed into the validation split")
    spec = cfg.spec
    params = init_parameters(spec, seed=cfg.seed)
    accumulators = {name: np.zeros_like(p) for name, p in params.items()}
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_windows))
        sums = {"total": 0.0, "l_av": 0.0, "l_a": 0.0, "l_v": 0.0}
        n_windows = 0
        for s in range(0, len(order), cfg.batch_size):
            batch = [train_windows[i] for i in order[s : s + cfg.batch_size]]
            visual, audio, targets, mask = _batch_inputs(batch, spec)
            parts, grads = loss_and_grads(params, spec, targets, mask, visual=visual, audio=audio)
            params, accumulators = adagrad_step(params, grads, accumulators, cfg)
            for key in sums:
                sums[key] += parts[key] * len(batch)
            n_windows += len(batch)
        history.epochs.append(
            EpochRecord(
                epoch=epoch,
                total=sums["total"] / n_windows,
                l_av=sums["l_av"] / n_windows,
                l_a=sums["l_a"] / n_windows,
                l_v=sums["l_v"] / n_windows,
                val_auroc=validation_auroc(params, spec, val_windows, cfg.batch_size),
            )
        )
    return params, history


@dataclass(frozen=True)
class VariantResult:
    variant: str
    params: dict
    val_auroc: float | None
    history: TrainHistory

    def row(self) -> dict:
        return {"variant": self.variant, "val_auroc": self.val_auroc}


def build_variant_matrix(
    windows: list[ExampleWindow], base_cfg: TrainConfig, variants: list[str]
) -> list[VariantResult]:
    """Train one model per variant name (e.g. "AV-GRU-f2") and report its
    validation auROC, mirroring a model-comparison table."""
    results = []
    for name in variants:
        modalities, head, stack = parse_variant(name)
        spec = replace(base_cfg.spec, modalities=modalities, head=head, stack_size=stack)
        cfg = replace(base_cfg, spec=spec)
        params, history = train(windows, cfg)
        _, val_windows = split_by_track(windows)
        auroc = validation_auroc(params, spec, val_windows, cfg.batch_size)
        results.append(
            VariantResult(
                variant=spec.variant_name(), params=params, val_auroc=auroc, history=history
            )
        )
    return results


def render_variant_table(results: list[VariantResult]) -> str:
    lines = [f"{'variant':<14s} val auROC"]
    for r in results:
        shown = f"{r.val_auroc:.4f}" if r.val_auroc is not None else "undefined"
        lines.append(f"{r.variant:<14s} {shown}")
    return "\n".join(lines) + "\n"
