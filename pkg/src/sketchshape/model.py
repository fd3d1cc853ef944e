"""Encoders: sketch MLP with a Gaussian (mu, log-variance) head, and the
multi-view shape encoder that mean-pools per-view features before a final
projection into the shared embedding space.

Forward passes return caches consumed by the matching ``*_backward``
functions; parameters are plain float64 arrays updated in place by the
trainer.  Checkpoints are a line-oriented text format (magic string, one
shape header per matrix, repr-encoded rows) that round-trips bitwise.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .losses import Classifier
from .ops import l2_normalize_rows, require_finite
from .rng import Rng

CHECKPOINT_MAGIC = "sketchshape-checkpoint v1"


@dataclass
class Mlp:
    """Stack of linear layers (weight d_out x d_in, bias d_out) with relu
    between layers; the final layer has no activation."""

    layers: list = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def parameters(self) -> list:
        out = []
        for w, b in self.layers:
            out.append(w)
            out.append(b)
        return out


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Batch forward pass; returns (output, cache)."""
    if x.ndim != 2 or x.shape[1] != mlp.input_dim:
        raise ValueError(f"input shape {x.shape} does not match first layer input dim {mlp.input_dim}")
    last = len(mlp.layers) - 1
    pres = []
    acts = [x]
    a = x
    for i, (w, b) in enumerate(mlp.layers):
        pre = a @ w.T + b
        pres.append(pre)
        a = np.maximum(pre, 0.0) if i < last else pre
        acts.append(a)
    return a, (pres, acts)


def mlp_backward(mlp: Mlp, cache, dout: np.ndarray):
    """Returns (dinput, grads) with grads ordered like Mlp.parameters()."""
    pres, acts = cache
    last = len(mlp.layers) - 1
    grads = [None] * (2 * len(mlp.layers))
    g = dout
    for i in range(last, -1, -1):
        if i < last:
            g = g * (pres[i] > 0.0)
        grads[2 * i] = g.T @ acts[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ mlp.layers[i][0]
    return g, grads


@dataclass
class GaussianEmbedding:
    """One sample's probabilistic embedding: mean vector and log variance."""

    mu: np.ndarray
    logvar: np.ndarray

    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.logvar)

    def sigma2(self) -> np.ndarray:
        return np.exp(self.logvar)

    def sample(self, eps: np.ndarray) -> np.ndarray:
        return reparameterize(self.mu, self.logvar, eps)


@dataclass
class SketchModel:
    backbone: Mlp
    mu_head: Mlp
    logvar_head: Mlp

    @property
    def embed_dim(self) -> int:
        return self.mu_head.output_dim

    def parameters(self) -> list:
        return self.backbone.parameters() + self.mu_head.parameters() + self.logvar_head.parameters()


@dataclass
class ShapeModel:
    backbone: Mlp
    proj: Mlp

    @property
    def embed_dim(self) -> int:
        return self.proj.output_dim

    def parameters(self) -> list:
        return self.backbone.parameters() + self.proj.parameters()


def reparameterize(mu, logvar, eps):
    """z = mu + eps * exp(logvar / 2), elementwise; works on vectors and
    batches alike.  eps = 0 returns mu."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if mu.shape != logvar.shape or mu.shape != eps.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape}")
    return mu + eps * np.exp(0.5 * logvar)


def encode_sketch_batch(model: SketchModel, x: np.ndarray):
    """Returns (mu, logvar, cache) for an NxD_in feature batch.

    Input rows are L2-normalised before the backbone: downstream losses and
    retrieval are cosine-based, so feature magnitude carries no class signal
    and letting it through only couples the learned variance to input scale.
    """
    xn = l2_normalize_rows(np.asarray(x, dtype=np.float64))
    h, bcache = mlp_forward(model.backbone, xn)
    mu, mcache = mlp_forward(model.mu_head, h)
    logvar, vcache = mlp_forward(model.logvar_head, h)
    require_finite(mu, "sketch mu")
    require_finite(logvar, "sketch logvar")
    return mu, logvar, (bcache, mcache, vcache)


def sketch_backward(model: SketchModel, cache, dmu: np.ndarray, dlogvar: np.ndarray):
    """Gradients for every sketch parameter, ordered like
    SketchModel.parameters()."""
    bcache, mcache, vcache = cache
    dh_mu, mu_grads = mlp_backward(model.mu_head, mcache, dmu)
    dh_lv, lv_grads = mlp_backward(model.logvar_head, vcache, dlogvar)
    _, backbone_grads = mlp_backward(model.backbone, bcache, dh_mu + dh_lv)
    return backbone_grads + mu_grads + lv_grads


def encode_sketch(model: SketchModel, x: np.ndarray) -> GaussianEmbedding:
    """Single feature vector -> GaussianEmbedding (deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"encode_sketch expects a feature vector, got shape {x.shape}")
    mu, logvar, _ = encode_sketch_batch(model, x.reshape(1, -1))
    return GaussianEmbedding(mu[0], logvar[0])


def _canonical_view_order(views: np.ndarray) -> np.ndarray:
    # Lexicographic row order; bit-identical pooling for any permutation of
    # the same view set.
    return np.lexsort(views.T[::-1])


def encode_shape_batch(model: ShapeModel, views: np.ndarray):
    """Returns (embeddings, cache) for an N x V x D_in block of view features.

    Per-view features are mean-pooled per sample with the views visited in
    a canonical (lexicographically sorted) order, then projected.
    """
    if views.ndim != 3:
        raise ValueError(f"expected N x V x D_in views, got shape {views.shape}")
    n, v, d = views.shape
    if v < 1:
        raise ValueError("each shape needs at least one view")
    ordered = np.empty_like(views)
    for i in range(n):
        ordered[i] = views[i][_canonical_view_order(views[i])]
    # views get the same per-row L2 normalisation as sketch features
    flat = l2_normalize_rows(ordered.reshape(n * v, d))
    h, bcache = mlp_forward(model.backbone, flat)
    pooled = h.reshape(n, v, -1).mean(axis=1)
    f, pcache = mlp_forward(model.proj, pooled)
    require_finite(f, "shape embedding")
    return f, (bcache, pcache, n, v)


def shape_backward(model: ShapeModel, cache, df: np.ndarray):
    """Gradients for every shape parameter, ordered like
    ShapeModel.parameters()."""
    bcache, pcache, n, v = cache
    dpooled, proj_grads = mlp_backward(model.proj, pcache, df)
    dviews = np.repeat(dpooled / v, v, axis=0)
    _, backbone_grads = mlp_backward(model.backbone, bcache, dviews)
    return backbone_grads + proj_grads


def encode_shape(model: ShapeModel, views: np.ndarray) -> np.ndarray:
    """V view-feature vectors -> one fused embedding."""
    views = np.asarray(views, dtype=np.float64)
    if views.ndim != 2 or views.shape[0] < 1:
        raise ValueError(f"encode_shape expects a non-empty V x D_in view matrix, got shape {views.shape}")
    f, _ = encode_shape_batch(model, views[None, :, :])
    return f[0]


def glorot_matrix(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Uniform(-b, b) with b = sqrt(6 / (rows + cols)), drawn row-major."""
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform_matrix(rows, cols, -bound, bound)


def init_mlp(rng: Rng, dims, weight_scale: float = 1.0) -> Mlp:
    """dims = [d_in, h1, ..., d_out]; weights Glorot-uniform (optionally
    rescaled), biases zero.  Layers are drawn in order."""
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"invalid layer dims {list(dims)}")
    layers = []
    for din, dout in zip(dims[:-1], dims[1:]):
        w = glorot_matrix(rng, dout, din)
        if weight_scale != 1.0:
            w = w * weight_scale
        layers.append((w, np.zeros(dout)))
    return Mlp(layers)


def init_sketch_model(cfg, rng: Rng) -> SketchModel:
    """Draw order: backbone layers, mu head, logvar head.  The logvar head
    weights are scaled by 0.1 so initial sigma is close to 1."""
    backbone = init_mlp(rng, [cfg.feature_dim, *cfg.hidden])
    mu_head = init_mlp(rng, [cfg.hidden[-1], *cfg.head_hidden, cfg.embed_dim])
    logvar_head = init_mlp(rng, [cfg.hidden[-1], *cfg.head_hidden, cfg.embed_dim], weight_scale=0.1)
    return SketchModel(backbone, mu_head, logvar_head)


def init_shape_model(cfg, rng: Rng) -> ShapeModel:
    """Draw order: view backbone layers, then the projection layer."""
    backbone = init_mlp(rng, [cfg.feature_dim, *cfg.hidden])
    proj = init_mlp(rng, [cfg.hidden[-1], cfg.embed_dim])
    return ShapeModel(backbone, proj)


def init_classifier(cfg, rng: Rng) -> Classifier:
    return Classifier(glorot_matrix(rng, cfg.classes, cfg.embed_dim), frozen=False)


def init_params(cfg, rng: Rng):
    """All trainable state in one call: (sketch model, classifier, shape
    model), drawn in that order."""
    sketch = init_sketch_model(cfg, rng)
    classifier = init_classifier(cfg, rng)
    shape = init_shape_model(cfg, rng)
    return sketch, classifier, shape


def _write_matrix(fh, name: str, a: np.ndarray) -> None:
    a2 = np.atleast_2d(np.asarray(a, dtype=np.float64))
    fh.write(f"matrix {name} {a2.shape[0]} {a2.shape[1]}\n")
    for row in a2:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _mlp_matrices(prefix: str, mlp: Mlp):
    for i, (w, b) in enumerate(mlp.layers):
        yield f"{prefix}.{i}.weight", w
        yield f"{prefix}.{i}.bias", b


def save_sketch_checkpoint(path, model: SketchModel, classifier: Classifier) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write("kind sketch\n")
        fh.write(f"classifier_frozen {'true' if classifier.frozen else 'false'}\n")
        for name, a in _mlp_matrices("backbone", model.backbone):
            _write_matrix(fh, name, a)
        for name, a in _mlp_matrices("mu_head", model.mu_head):
            _write_matrix(fh, name, a)
        for name, a in _mlp_matrices("logvar_head", model.logvar_head):
            _write_matrix(fh, name, a)
        _write_matrix(fh, "classifier.weight", classifier.weights)


def save_shape_checkpoint(path, model: ShapeModel) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write("kind shape\n")
        for name, a in _mlp_matrices("backbone", model.backbone):
            _write_matrix(fh, name, a)
        for name, a in _mlp_matrices("proj", model.proj):
            _write_matrix(fh, name, a)


def _read_checkpoint(path):
    meta = {}
    matrices = {}
    with open(path, "r", encoding="ascii") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        line = fh.readline()
        while line:
            parts = line.rstrip("\n").split()
            if not parts:
                line = fh.readline()
                continue
            if parts[0] == "matrix":
                name, rows, cols = parts[1], int(parts[2]), int(parts[3])
                data = np.empty((rows, cols))
                for r in range(rows):
                    vals = fh.readline().split()
                    if len(vals) != cols:
                        raise ValueError(f"{path}: matrix {name} row {r} has {len(vals)} values, expected {cols}")
                    data[r] = [float(v) for v in vals]
                matrices[name] = data
            else:
                meta[parts[0]] = parts[1] if len(parts) > 1 else ""
            line = fh.readline()
    return meta, matrices


def _collect_mlp(matrices, prefix: str) -> Mlp:
    layers = []
    i = 0
    while f"{prefix}.{i}.weight" in matrices:
        w = matrices[f"{prefix}.{i}.weight"]
        b = matrices[f"{prefix}.{i}.bias"].reshape(-1)
        layers.append((w, b))
        i += 1
    return Mlp(layers)


def checkpoint_kind(path) -> str:
    meta, _ = _read_checkpoint(path)
    return meta.get("kind", "")


def load_sketch_checkpoint(path):
    meta, matrices = _read_checkpoint(path)
    if meta.get("kind") != "sketch":
        raise ValueError(f"{path}: expected a sketch checkpoint, found kind {meta.get('kind')!r}")
    model = SketchModel(
        _collect_mlp(matrices, "backbone"),
        _collect_mlp(matrices, "mu_head"),
        _collect_mlp(matrices, "logvar_head"),
    )
    classifier = Classifier(matrices["classifier.weight"], frozen=meta.get("classifier_frozen") == "true")
    return model, classifier


def load_shape_checkpoint(path) -> ShapeModel:
    meta, matrices = _read_checkpoint(path)
    if meta.get("kind") != "shape":
        raise ValueError(f"{path}: expected a shape checkpoint, found kind {meta.get('kind')!r}")
    return ShapeModel(_collect_mlp(matrices, "backbone"), _collect_mlp(matrices, "proj"))
