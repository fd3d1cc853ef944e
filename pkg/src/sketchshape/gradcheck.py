"""Finite-difference verification of every hand-derived gradient.

Each check builds a small random instance, wraps the loss as a function of
its trainable arrays, and compares the closed-form gradients against central
differences via ops.grad_check.  Returns the worst relative error per check;
anything at or above TOLERANCE means a backward pass is wrong.
"""

import numpy as np

from .losses import Classifier, MarginParams, kl_gaussian, margin_cosine_loss, transfer_loss, uncertainty_loss
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
from .ops import grad_check
from .rng import Rng
from .train import TrainConfig

TOLERANCE = 1e-4


def _rand(rng, rows, cols):
    return rng.uniform_matrix(rows, cols, -2.0, 2.0)


def check_margin_loss(seed: int, n: int = 6, dim: int = 12, classes: int = 5, step: float = 1e-5) -> float:
    rng = Rng(seed)
    z = _rand(rng, n, dim)
    w = _rand(rng, classes, dim)
    labels = np.array([rng.integer(classes) for _ in range(n)])
    params = MarginParams(30.0, 0.5)

    def f(ps):
        loss, dz, dw = margin_cosine_loss(ps[0], ps[1], labels, params)
        return loss, [dz, dw]

    return grad_check(f, [z, w], step)


def check_kl(seed: int, n: int = 6, dim: int = 12, step: float = 1e-5) -> float:
    rng = Rng(seed)
    mu = _rand(rng, n, dim)
    logvar = _rand(rng, n, dim)

    def f(ps):
        loss, dmu, dlv = kl_gaussian(ps[0], ps[1])
        return loss, [dmu, dlv]

    return grad_check(f, [mu, logvar], step)


def check_uncertainty_loss(seed: int, n: int = 6, dim: int = 12, classes: int = 5, step: float = 1e-5) -> float:
    rng = Rng(seed)
    mu = _rand(rng, n, dim)
    logvar = rng.uniform_matrix(n, dim, -1.0, 1.0)
    w = _rand(rng, classes, dim)
    labels = np.array([rng.integer(classes) for _ in range(n)])
    eps = rng.normal_matrix(n, dim)
    params = MarginParams(30.0, 0.5)

    def f(ps):
        classifier = Classifier(ps[2])
        z = reparameterize(ps[0], ps[1], eps)
        loss, dmu, dlv, dw = uncertainty_loss(z, ps[0], ps[1], classifier, labels, params, 0.005)
        return loss, [dmu, dlv, dw]

    return grad_check(f, [mu, logvar, w], step)


def check_transfer_loss(seed: int, n: int = 6, dim: int = 12, classes: int = 5, step: float = 1e-5) -> float:
    rng = Rng(seed)
    emb = _rand(rng, n, dim)
    labels = np.array([rng.integer(classes) for _ in range(n)])
    classifier = Classifier(_rand(rng, classes, dim), frozen=True)
    params = MarginParams(15.0, 0.8)

    def f(ps):
        loss, demb, dw = transfer_loss(ps[0], classifier, labels, params)
        if np.any(dw != 0.0):
            raise AssertionError("transfer_loss produced a non-zero classifier gradient")
        return loss, [demb]

    return grad_check(f, [emb], step)


def check_sketch_chain(seed: int, n: int = 5, step: float = 1e-5) -> float:
    """Full stage-1 objective through the sketch encoder parameters."""
    cfg = TrainConfig(feature_dim=6, hidden=(8,), embed_dim=8, classes=4, seed=seed)
    rng = Rng(seed)
    model = init_sketch_model(cfg, rng)
    classifier = init_classifier(cfg, rng)
    x = _rand(rng, n, cfg.feature_dim)
    labels = np.array([rng.integer(cfg.classes) for _ in range(n)])
    eps = rng.normal_matrix(n, cfg.embed_dim)
    margins = cfg.sketch_margins()
    params = model.parameters() + [classifier.weights]

    def f(_ps):
        mu, logvar, cache = encode_sketch_batch(model, x)
        z = reparameterize(mu, logvar, eps)
        loss, dmu, dlv, dw = uncertainty_loss(z, mu, logvar, classifier, labels, margins, cfg.lam)
        return loss, sketch_backward(model, cache, dmu, dlv) + [dw]

    return grad_check(f, params, step)


def check_shape_chain(seed: int, n: int = 4, views: int = 3, step: float = 1e-5) -> float:
    """Stage-2 objective through the shape encoder parameters."""
    cfg = TrainConfig(feature_dim=6, hidden=(8,), embed_dim=8, classes=4, seed=seed)
    rng = Rng(seed)
    model = init_shape_model(cfg, rng)
    classifier = Classifier(_rand(rng, cfg.classes, cfg.embed_dim), frozen=True)
    x = rng.uniform_matrix(n * views, cfg.feature_dim, -2.0, 2.0).reshape(n, views, cfg.feature_dim)
    labels = np.array([rng.integer(cfg.classes) for _ in range(n)])
    margins = cfg.shape_margins()

    def f(_ps):
        f_emb, cache = encode_shape_batch(model, x)
        loss, dfe, _ = transfer_loss(f_emb, classifier, labels, margins)
        return loss, shape_backward(model, cache, dfe)

    return grad_check(f, model.parameters(), step)


ALL_CHECKS = {
    "margin_loss": check_margin_loss,
    "kl": check_kl,
    "uncertainty_loss": check_uncertainty_loss,
    "transfer_loss": check_transfer_loss,
    "sketch_chain": check_sketch_chain,
    "shape_chain": check_shape_chain,
}


def run_all(seed: int = 0) -> dict:
    """Worst finite-difference relative error per check, keyed by name."""
    return {name: fn(seed) for name, fn in ALL_CHECKS.items()}
