"""Training objectives for the two-stage pipeline.

All losses operate on cosine similarities between L2-normalised embeddings
and class-center rows, so they are invariant to any positive rescaling of
their inputs.  Each function returns the scalar loss together with
closed-form gradients for exactly the arguments that are trainable; the
finite-difference checker in ``ops`` verifies every formula here.

margin_cosine_loss:
    -mean_i log[ e^{s(cos_yi - m)} / (e^{s(cos_yi - m)} + sum_{j!=yi} e^{s cos_j}) ]
kl_gaussian:
    mean over samples and dimensions of -1/2 (1 + log s2 - mu^2 - s2),
    the divergence of N(mu, s2 I) from N(0, I), averaged per dimension so
    the weight of the term does not depend on the embedding size.
"""

from dataclasses import dataclass

import numpy as np

from .ops import normalize_rows_fwd, normalize_rows_bwd, require_finite


@dataclass
class MarginParams:
    """Scale s and cosine margin m of the margin softmax."""

    scale: float
    margin: float

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if not 0.0 <= self.margin < 1.0:
            raise ValueError(f"margin must be in [0, 1), got {self.margin}")


@dataclass
class Classifier:
    """Class-center weight matrix, one row per class.

    Stage 1 trains the rows; ``freeze()`` takes the bitwise snapshot that
    stage 2 reuses as fixed transfer targets.
    """

    weights: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] < 2:
            raise ValueError(f"classifier needs a Cx D matrix with C >= 2, got shape {self.weights.shape}")
        require_finite(self.weights, "classifier weights")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def freeze(self) -> "Classifier":
        return Classifier(self.weights.copy(), frozen=True)


def _check_labels(labels, num_classes, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)]
        raise ValueError(f"labels out of range [0, {num_classes}): {sorted(set(bad.tolist()))}")
    return labels


def margin_cosine_loss(z, weights, labels, params: MarginParams):
    """Margin softmax over scaled cosines; returns (loss, dz, dweights).

    The margin is subtracted from the ground-truth cosine only.  Logits are
    shifted by their row max before exponentiation (mandatory at s = 30).
    """
    z = np.asarray(z, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError(f"need a non-empty NxD embedding batch, got shape {z.shape}")
    if z.shape[1] != weights.shape[1]:
        raise ValueError(f"embedding dim {z.shape[1]} != class-center dim {weights.shape[1]}")
    n, c = z.shape[0], weights.shape[0]
    labels = _check_labels(labels, c, n)

    zb, znorms, zfull = normalize_rows_fwd(z)
    wb, wnorms, wfull = normalize_rows_fwd(weights)
    cosines = zb @ wb.T
    logits = params.scale * cosines
    rows = np.arange(n)
    logits[rows, labels] -= params.scale * params.margin

    row_max = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - row_max)
    denom = shifted.sum(axis=1, keepdims=True)
    log_prob = (logits[rows, labels] - row_max[:, 0]) - np.log(denom[:, 0])
    loss = float(-np.mean(log_prob))

    probs = shifted / denom
    probs[rows, labels] -= 1.0
    dcos = (params.scale / n) * probs
    dz = normalize_rows_bwd(dcos @ wb, zb, znorms, zfull)
    dweights = normalize_rows_bwd(dcos.T @ zb, wb, wnorms, wfull)
    return loss, dz, dweights


def kl_gaussian(mu, logvar):
    """KL(N(mu, s2 I) || N(0, I)) averaged per dimension and per sample.

    Returns (loss, dmu, dlogvar).  Non-negative; zero exactly when mu = 0
    and s2 = 1; strictly decreasing in each sigma over (0, 1).
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError(f"mu shape {mu.shape} != logvar shape {logvar.shape}")
    sig2 = np.exp(logvar)
    terms = -0.5 * (1.0 + logvar - mu * mu - sig2)
    loss = float(np.mean(terms))
    inv = 1.0 / terms.size
    return loss, mu * inv, 0.5 * (sig2 - 1.0) * inv


def uncertainty_loss(z, mu, logvar, classifier: Classifier, labels, params: MarginParams, lam: float):
    """Margin loss on sampled embeddings plus lam * KL regulariser.

    ``z`` must be the reparameterised batch mu + eps * exp(logvar / 2) built
    from the same (mu, logvar); gradients flow into mu and logvar both
    through z and through the KL term.  Returns (loss, dmu, dlogvar,
    dweights).  With lam = 0 the result equals the plain margin loss.
    """
    if lam < 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if z.shape != mu.shape:
        raise ValueError(f"z shape {z.shape} != mu shape {mu.shape}")
    lmc, dz, dweights = margin_cosine_loss(z, classifier.weights, labels, params)
    kl, dmu_kl, dlv_kl = kl_gaussian(mu, logvar)
    loss = lmc + lam * kl
    dmu = dz + lam * dmu_kl
    # dz/dlogvar = eps * sigma / 2 = (z - mu) / 2 for the fixed eps draw.
    dlogvar = 0.5 * (z - mu) * dz + lam * dlv_kl
    return loss, dmu, dlogvar, dweights


def transfer_loss(embeddings, classifier: Classifier, labels, params: MarginParams):
    """Margin cosine loss against frozen class centers.

    Same formula as margin_cosine_loss, but the classifier must be frozen
    and its gradient is identically zero.  Returns (loss, dembeddings,
    dweights) with dweights an exact zero matrix.
    """
    if not classifier.frozen:
        raise ValueError("transfer_loss requires a frozen classifier")
    loss, dembeddings, _ = margin_cosine_loss(embeddings, classifier.weights, labels, params)
    return loss, dembeddings, np.zeros_like(classifier.weights)


def center_accuracy(embeddings, classifier: Classifier, labels) -> float:
    """Fraction of embeddings whose highest-cosine class center is their label."""
    from .ops import cosine_matrix

    labels = np.asarray(labels, dtype=np.int64)
    preds = np.argmax(cosine_matrix(np.asarray(embeddings, dtype=np.float64), classifier.weights), axis=1)
    return float(np.mean(preds == labels))
