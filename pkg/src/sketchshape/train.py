"""Two-stage training: sketch uncertainty learning, then shape transfer.

Stage 1 trains the sketch encoder, Gaussian head and class centers with the
sampled-embedding margin loss plus the KL term; it returns the frozen class
centers.  Stage 2 trains the shape encoder against those frozen centers and
never touches them.  Both stages run plain SGD (optional momentum) with an
epoch-level cosine-annealed learning rate, shuffle with the run's own Rng,
and keep the last partial batch, so a fixed seed reproduces the parameter
trajectory bitwise.
"""

import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .losses import Classifier, MarginParams, transfer_loss, uncertainty_loss
from .model import (
    encode_shape_batch,
    encode_sketch_batch,
    init_classifier,
    init_shape_model,
    init_sketch_model,
    reparameterize,
    shape_backward,
    sketch_backward,
)
from .rng import Rng


@dataclass
class TrainConfig:
    """Every hyperparameter of the pipeline, with the published defaults
    where the method defines them and desk-scale dimensions elsewhere."""

    feature_dim: int = 16
    hidden: tuple = (64, 64)
    head_hidden: tuple = ()
    embed_dim: int = 32
    classes: int = 10
    views: int = 12
    batch_size: int = 64
    lr0: float = 4e-4
    max_epochs: int = 200
    s_sketch: float = 30.0
    m_s: float = 0.5
    s_shape: float = 15.0
    m_v: float = 0.8
    lam: float = 0.005
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.head_hidden = tuple(int(h) for h in self.head_hidden)
        for name in ("feature_dim", "embed_dim", "batch_size", "max_epochs", "views"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden must be a non-empty tuple of positive ints, got {self.hidden}")
        if any(h < 1 for h in self.head_hidden):
            raise ValueError(f"head_hidden dims must be positive, got {self.head_hidden}")
        if self.lr0 < 0 or self.lam < 0 or self.momentum < 0:
            raise ValueError("lr0, lam and momentum must be >= 0")
        for name in ("m_s", "m_v"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if self.s_sketch <= 0 or self.s_shape <= 0:
            raise ValueError("scales s_sketch and s_shape must be > 0")

    def sketch_margins(self) -> MarginParams:
        return MarginParams(self.s_sketch, self.m_s)

    def shape_margins(self) -> MarginParams:
        return MarginParams(self.s_shape, self.m_v)


def _parse_field(name, kind, raw):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is tuple:
        return tuple(int(v) for v in raw.split(",") if v.strip() != "")
    raise ValueError(f"config key {name} has unsupported type {kind}")


_FIELD_TYPES = {"hidden": tuple, "head_hidden": tuple}
for _f in fields(TrainConfig):
    if _f.name not in _FIELD_TYPES:
        _FIELD_TYPES[_f.name] = type(_f.default)


def load_config(path, base: TrainConfig = None) -> TrainConfig:
    """key=value text file; unknown keys are an error, '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path} line {lineno}: expected key=value, got {line.strip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path} line {lineno}: unknown config key {key!r}")
            values[key] = _parse_field(key, _FIELD_TYPES[key], raw)
    return replace(base, **values) if base is not None else TrainConfig(**values)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines)


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """Epoch-level cosine annealing: lr0 * (1 + cos(pi t / total)) / 2."""
    if total < 1:
        raise ValueError(f"total epochs must be >= 1, got {total}")
    if t < 0 or t > total:
        raise ValueError(f"epoch {t} outside [0, {total}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


def sgd_step(params, grads, lr: float, momentum: float, velocity) -> None:
    """v <- momentum * v + g;  p <- p - lr * v, all in place."""
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape:
            raise ValueError(f"sgd_step shape mismatch: param {p.shape} vs grad {g.shape}")
        v *= momentum
        v += g
        p -= lr * v


@dataclass
class TrainReport:
    """Per-epoch averages plus run metadata.  Wall time is informational
    and deliberately kept out of the written file so identical seeds produce
    identical report files."""

    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    seed: int = 0
    wall_time: float = 0.0

    def lines(self):
        out = [f"# seed {self.seed}", "# epoch loss lr"]
        for epoch, (loss, lr) in enumerate(zip(self.losses, self.lrs)):
            out.append(f"{epoch} {loss!r} {lr!r}")
        return out

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(self.lines()) + "\n")


def _batches(order, batch_size):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _stack_sketches(records, cfg):
    x = np.stack([np.asarray(r.features, dtype=np.float64) for r in records])
    if x.ndim != 2 or x.shape[1] != cfg.feature_dim:
        raise ValueError(f"sketch features have shape {x.shape}, expected Nx{cfg.feature_dim}")
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def train_stage1(records, cfg: TrainConfig, rng: Rng):
    """Sketch uncertainty learning; returns (model, frozen classifier,
    report).  Aborts with a diagnostic if the loss goes non-finite."""
    if not records:
        raise ValueError("stage 1: empty training set")
    x, y = _stack_sketches(records, cfg)
    present = set(y.tolist())
    missing = [c for c in range(cfg.classes) if c not in present]
    if missing:
        raise ValueError(f"stage 1: classes without any training sketch: {missing}")

    model = init_sketch_model(cfg, rng)
    classifier = init_classifier(cfg, rng)
    params = model.parameters() + [classifier.weights]
    velocity = [np.zeros_like(p) for p in params]
    margins = cfg.sketch_margins()

    n = len(records)
    report = TrainReport(seed=cfg.seed)
    start_time = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr0)
        order = rng.permutation(n)
        total = 0.0
        for batch in _batches(order, cfg.batch_size):
            xb, yb = x[batch], y[batch]
            mu, logvar, cache = encode_sketch_batch(model, xb)
            eps = rng.normal_matrix(len(batch), cfg.embed_dim)
            z = reparameterize(mu, logvar, eps)
            loss, dmu, dlogvar, dw = uncertainty_loss(z, mu, logvar, classifier, yb, margins, cfg.lam)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"stage 1 aborted: non-finite loss {loss} at epoch {epoch}, batch starting at {batch[0]}"
                )
            grads = sketch_backward(model, cache, dmu, dlogvar) + [dw]
            sgd_step(params, grads, lr, cfg.momentum, velocity)
            total += loss * len(batch)
        report.losses.append(total / n)
        report.lrs.append(lr)
    report.wall_time = time.perf_counter() - start_time
    return model, classifier.freeze(), report


def _stack_shapes(records, cfg):
    x = np.stack([np.asarray(r.features, dtype=np.float64) for r in records])
    if x.ndim != 3 or x.shape[2] != cfg.feature_dim:
        raise ValueError(f"shape view features have shape {x.shape}, expected NxVx{cfg.feature_dim}")
    y = np.array([r.label for r in records], dtype=np.int64)
    return x, y


def train_stage2(records, classifier: Classifier, cfg: TrainConfig, rng: Rng):
    """Shape feature transfer toward the frozen sketch class centers;
    returns (model, report).  The classifier is bitwise unchanged."""
    if not records:
        raise ValueError("stage 2: empty training set")
    if not classifier.frozen:
        raise ValueError("stage 2 requires a frozen classifier from stage 1")
    x, y = _stack_shapes(records, cfg)
    extra = sorted(set(y.tolist()) - set(range(classifier.num_classes)))
    if extra:
        raise ValueError(f"stage 2: shape labels {extra} missing from the {classifier.num_classes} sketch classes")

    weights_before = classifier.weights.copy()
    model = init_shape_model(cfg, rng)
    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    margins = cfg.shape_margins()

    n = len(records)
    report = TrainReport(seed=cfg.seed)
    start_time = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr0)
        order = rng.permutation(n)
        total = 0.0
        for batch in _batches(order, cfg.batch_size):
            xb, yb = x[batch], y[batch]
            f, cache = encode_shape_batch(model, xb)
            loss, df, _ = transfer_loss(f, classifier, yb, margins)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"stage 2 aborted: non-finite loss {loss} at epoch {epoch}, batch starting at {batch[0]}"
                )
            grads = shape_backward(model, cache, df)
            sgd_step(params, grads, lr, cfg.momentum, velocity)
            total += loss * len(batch)
        report.losses.append(total / n)
        report.lrs.append(lr)
    report.wall_time = time.perf_counter() - start_time
    if not np.array_equal(weights_before, classifier.weights):
        raise RuntimeError("stage 2 modified the frozen classifier")
    return model, report
