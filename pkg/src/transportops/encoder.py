"""Per-point coefficient-scale encoder trained by consistency regularization.

The encoder is a small fully connected network mapping a latent vector to
one positive Laplace scale per operator (softplus output keeps scales
strictly positive). Coefficients are drawn through the reparameterization

    c_m = -h_m(z) * sgn(u_m) * log(1 - 2 |u_m|),   u_m ~ U(-1/2, 1/2),

which is differentiable in the encoder parameters, so the whole loss

    -log r_y(T(c) z) + kl_weight * sum_m KL(Laplace(0, h_m) || Laplace(0, zeta))

backpropagates through the sampled transformation: the classifier term pulls
scales down wherever a transformation would change the predicted class, and
the closed-form KL term keeps them from collapsing to zero everywhere. The
classifier r is a frozen multinomial logistic model trained separately.

Gradients through T(c) z reuse the expm Frechet machinery: the partial of
the transformed point with respect to c_m is L(A, Psi_m) z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateLabels,
    DimensionMismatch,
    DivergedError,
    EmptyClass,
    InvalidScale,
    UnlabeledPoint,
)
from .numerics import expm_stack
from .operators import (
    LatentPoint,
    OperatorDictionary,
    atomic_write_text,
    sample_transform,
)
from .rng import make_rng

_SCALE_FLOOR = 1e-300


@dataclass(frozen=True)
class EncoderConfig:
    """Coefficient-encoder training settings."""

    zeta_prior: float = 0.1
    kl_weight: float = 0.5
    samples_j: int = 1
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 250
    spread_scale: float = 0.1
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not (self.zeta_prior > 0):
            raise InvalidScale(f"zeta_prior must be positive, got {self.zeta_prior}")
        if self.kl_weight < 0:
            raise ValueError(f"kl_weight must be nonnegative, got {self.kl_weight}")
        if self.samples_j < 1:
            raise ValueError(f"samples_j must be >= 1, got {self.samples_j}")


@dataclass(frozen=True)
class ClassifierConfig:
    lr: float = 0.5
    epochs: int = 2000
    l2: float = 0.0
    seed: int = 0


class Classifier:
    """Multinomial logistic model r(z) = softmax(W z + b)."""

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = np.asarray(bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatch(
                f"bad classifier shapes {self.weights.shape}, {self.bias.shape}"
            )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def log_proba(self, z_batch: np.ndarray) -> np.ndarray:
        logits = z_batch @ self.weights.T + self.bias
        logits = logits - logits.max(axis=-1, keepdims=True)
        return logits - np.log(np.exp(logits).sum(axis=-1, keepdims=True))

    def predict_proba(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        p = np.exp(self.log_proba(np.atleast_2d(z)))
        return p[0] if squeeze else p

    def nll_input_gradient(self, z_batch: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """d(-log r_y(z))/dz for each row: W^T (p - onehot(y))."""
        p = np.exp(self.log_proba(z_batch))
        p[np.arange(len(labels)), labels] -= 1.0
        return p @ self.weights

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_classes": self.num_classes,
                "dim": self.dim,
                "weights": self.weights.tolist(),
                "bias": self.bias.tolist(),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Classifier":
        doc = json.loads(text)
        return cls(np.array(doc["weights"]), np.array(doc["bias"]))

    def save(self, path) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Classifier":
        return cls.from_json(Path(path).read_text())


def _labeled_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    zs, ys = [], []
    for i, p in enumerate(points):
        if not isinstance(p, LatentPoint) or p.label is None:
            raise UnlabeledPoint(f"point {i} carries no class label")
        zs.append(p.z)
        ys.append(p.label)
    return np.stack(zs), np.array(ys, dtype=int)


def train_classifier(
    points, cfg: ClassifierConfig = ClassifierConfig()
) -> tuple[Classifier, float]:
    """Fit the logistic model by full-batch cross-entropy gradient descent.

    Returns the classifier together with its training accuracy.
    """
    z, y = _labeled_arrays(points)
    classes = int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("need at least two classes to fit a classifier")
    n, d = z.shape
    w = np.zeros((classes, d))
    b = np.zeros(classes)
    onehot = np.zeros((n, classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(cfg.epochs):
        logits = z @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = p - onehot
        w -= cfg.lr * (err.T @ z / n + cfg.l2 * w)
        b -= cfg.lr * err.mean(axis=0)
    clf = Classifier(w, b)
    accuracy = float(np.mean(np.argmax(clf.log_proba(z), axis=1) == y))
    return clf, accuracy


def kl_laplace(h, zeta):
    """Closed-form KL(Laplace(0, h) || Laplace(0, zeta)).

    Equals log(h) - log(zeta) + zeta/h - 1; nonnegative, zero iff h == zeta.
    Vectorizes over ``h`` / ``zeta``.
    """
    h = np.asarray(h, dtype=float)
    z = np.asarray(zeta, dtype=float)
    if np.any(h <= 0) or np.any(z <= 0):
        raise InvalidScale("kl_laplace requires strictly positive scales")
    out = np.log(h) - np.log(z) + z / h - 1.0
    return float(out) if out.ndim == 0 else out


class ScaleEncoder:
    """Feed-forward network z -> positive per-operator Laplace scales.

    tanh hidden layers and a softplus output; layer parameters live in
    ``weights``/``biases`` ordered input-to-output.
    """

    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatch("need matching weight/bias lists")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"bad layer shapes {w.shape}, {b.shape}")

    @classmethod
    def init(
        cls,
        dim: int,
        count: int,
        hidden: tuple[int, ...] = (64, 64),
        seed: int = 0,
        initial_scale: float | None = None,
    ) -> "ScaleEncoder":
        """Random 1/sqrt(fan_in) initialization.

        When ``initial_scale`` is given, the output bias is offset so the
        network's scales start near that value (softplus inverse).
        """
        rng = make_rng(seed, 7)
        sizes = [dim, *hidden, count]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        if initial_scale is not None:
            if not (initial_scale > 0):
                raise InvalidScale(f"initial_scale must be positive, got {initial_scale}")
            biases[-1] = biases[-1] + float(np.log(np.expm1(initial_scale)))
        return cls(weights, biases)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def count(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    def copy(self) -> "ScaleEncoder":
        return ScaleEncoder([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward_batch(self, z_batch: np.ndarray):
        a = np.asarray(z_batch, dtype=float)
        activations = [a]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ w.T + b)
            activations.append(a)
        pre = a @ self.weights[-1].T + self.biases[-1]
        h = np.maximum(np.logaddexp(0.0, pre), _SCALE_FLOOR)
        return h, (activations, pre)

    def backward_batch(self, cache, dh: np.ndarray):
        """Mean-over-batch parameter gradients given d(loss)/d(scales)."""
        activations, pre = cache
        nb = dh.shape[0]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dh / (1.0 + np.exp(-pre)) * (1.0 / nb)  # softplus' = logistic
        grads_w[-1] = delta.T @ activations[-1]
        grads_b[-1] = delta.sum(axis=0)
        da = delta @ self.weights[-1]
        for layer in range(len(self.weights) - 2, -1, -1):
            ds = da * (1.0 - activations[layer + 1] ** 2)
            grads_w[layer] = ds.T @ activations[layer]
            grads_b[layer] = ds.sum(axis=0)
            da = ds @ self.weights[layer]
        return grads_w, grads_b

    def scales(self, z) -> np.ndarray:
        """Positive per-operator scales for one latent vector."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {z.shape} != ({self.dim},)")
        h, _ = self.forward_batch(z[None])
        return h[0]

    def scales_batch(self, z_batch: np.ndarray) -> np.ndarray:
        z_batch = np.asarray(z_batch, dtype=float)
        h, _ = self.forward_batch(z_batch)
        return h

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "count": self.count,
                "hidden": list(self.hidden),
                "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases],
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ScaleEncoder":
        doc = json.loads(text)
        return cls([np.array(w) for w in doc["weights"]], [np.array(b) for b in doc["biases"]])

    def save(self, path) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "ScaleEncoder":
        return cls.from_json(Path(path).read_text())


def _unit_laplace(u: np.ndarray) -> np.ndarray:
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    u = rng.uniform(-0.5, 0.5, size=size)
    return np.clip(u, np.nextafter(-0.5, 0.0), np.nextafter(0.5, 0.0))


def _batched_loss_and_grads(enc, classifier, dictionary, z_batch, labels, u, cfg):
    """Mean loss over the batch and mean parameter gradients."""
    psi = dictionary.psi
    d = dictionary.dim
    m = dictionary.count
    nb = z_batch.shape[0]
    h, cache = enc.forward_batch(z_batch)
    s = _unit_laplace(u)
    c = h * s
    a = np.einsum("bm,mij->bij", c, psi)
    blocks = np.zeros((nb, m, 2 * d, 2 * d))
    blocks[:, :, :d, :d] = a[:, None]
    blocks[:, :, d:, d:] = a[:, None]
    blocks[:, :, :d, d:] = psi[None]
    big = expm_stack(blocks.reshape(nb * m, 2 * d, 2 * d)).reshape(nb, m, 2 * d, 2 * d)
    expa = big[:, 0, :d, :d]
    ls = big[:, :, :d, d:]
    zhat = np.einsum("bij,bj->bi", expa, z_batch)
    ce = -enc_take(classifier.log_proba(zhat), labels)
    kl = kl_laplace(h, cfg.zeta_prior).sum(axis=1)
    loss = float(np.mean(ce + cfg.kl_weight * kl))

    dzhat = classifier.nll_input_gradient(zhat, labels)
    dc = np.einsum("bi,bmij,bj->bm", dzhat, ls, z_batch)
    dh = dc * s + cfg.kl_weight * (1.0 / h - cfg.zeta_prior / h**2)
    grads_w, grads_b = enc.backward_batch(cache, dh)
    return loss, grads_w, grads_b


def enc_take(log_proba: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return log_proba[np.arange(len(labels)), labels]


def encoder_loss(
    enc: ScaleEncoder,
    classifier: Classifier,
    dictionary: OperatorDictionary,
    z: LatentPoint,
    cfg: EncoderConfig = EncoderConfig(),
    rng_seed: int = 0,
):
    """Consistency loss and parameter gradients for one labeled point.

    Draws ``cfg.samples_j`` coefficient samples (losses averaged), forms the
    transformed point with no observation noise, and returns
    ``(loss, (weight_grads, bias_grads))`` with layers ordered as in the
    encoder.
    """
    if not isinstance(z, LatentPoint) or z.label is None:
        raise UnlabeledPoint("encoder_loss requires a labeled point")
    if enc.count != dictionary.count:
        raise DimensionMismatch(
            f"encoder outputs {enc.count} scales for {dictionary.count} operators"
        )
    if z.label >= classifier.num_classes:
        raise ValueError(
            f"label {z.label} out of range for {classifier.num_classes} classes"
        )
    rng = make_rng(rng_seed)
    j = cfg.samples_j
    u = _uniform_open(rng, (j, dictionary.count))
    z_batch = np.tile(z.z, (j, 1))
    labels = np.full(j, z.label, dtype=int)
    loss, grads_w, grads_b = _batched_loss_and_grads(
        enc, classifier, dictionary, z_batch, labels, u, cfg
    )
    if not np.isfinite(loss):
        raise DivergedError(f"encoder loss non-finite at point {z.z}")
    return loss, (grads_w, grads_b)


def train_encoder(
    enc: ScaleEncoder,
    classifier: Classifier,
    dictionary: OperatorDictionary,
    points,
    cfg: EncoderConfig = EncoderConfig(),
) -> tuple[ScaleEncoder, np.ndarray]:
    """Minibatch gradient descent on the consistency loss.

    The classifier and dictionary stay frozen; only encoder parameters
    move. Returns the trained encoder (the input is not modified) and the
    per-step loss curve.
    """
    z, y = _labeled_arrays(points)
    if z.shape[1] != dictionary.dim:
        raise DimensionMismatch(
            f"points dim {z.shape[1]} != dictionary dim {dictionary.dim}"
        )
    if int(y.max()) >= classifier.num_classes:
        raise ValueError("labels exceed classifier classes")
    out = enc.copy()
    n = len(y)
    losses = []
    step = 0
    for _epoch in range(cfg.epochs):
        for start in range(0, n, cfg.batch_size):
            idx = slice(start, min(start + cfg.batch_size, n))
            u = _uniform_open(make_rng(cfg.seed, 3, step), (len(y[idx]), dictionary.count))
            loss, grads_w, grads_b = _batched_loss_and_grads(
                out, classifier, dictionary, z[idx], y[idx], u, cfg
            )
            if not np.isfinite(loss):
                raise DivergedError(f"encoder training loss non-finite at step {step}")
            for layer in range(len(out.weights)):
                out.weights[layer] -= cfg.lr * grads_w[layer]
                out.biases[layer] -= cfg.lr * grads_b[layer]
            losses.append(loss)
            step += 1
    return out, np.array(losses)


def spread_matrix(enc: ScaleEncoder, points) -> np.ndarray:
    """Per-class mean encoded scales: entry (y, m) averages h_m over class y.

    Rows cover class ids 0..max(label); a class id in that range with no
    points raises EmptyClass.
    """
    z, y = _labeled_arrays(points)
    classes = int(y.max()) + 1
    h = enc.scales_batch(z)
    rows = []
    for cls in range(classes):
        mask = y == cls
        if not mask.any():
            raise EmptyClass(f"class {cls} has no points")
        rows.append(h[mask].mean(axis=0))
    return np.stack(rows)


def sample_encoded(
    enc: ScaleEncoder,
    dictionary: OperatorDictionary,
    z,
    spread_scale: float = 0.1,
    noise_sigma: float = 0.0,
    rng_seed: int = 0,
):
    """Draw a transformation using the encoder's local scales.

    The opaque ``spread_scale`` multiplies the encoded scales before
    sampling (default 0.1).
    """
    zv = z.z if isinstance(z, LatentPoint) else np.asarray(z, dtype=float)
    scales = spread_scale * enc.scales(zv)
    return sample_transform(dictionary, z, scales, noise_sigma, rng_seed)
