"""Learnable Gumbel-sigmoid feature masks with straight-through binarization.

Each (s, d) position has a logit ``alpha``. During training a soft mask
``sigmoid((alpha + G) / tau)`` is drawn with Gumbel noise ``G``, hardened by
thresholding at 0.5, and the hard mask is used in the forward pass while the
gradient is passed straight through to the soft mask. A sigmoid sparsity
penalty pulls logits down, and ``tau`` is annealed so masks harden over time.

The toy task trains the mask jointly with a linear softmax classifier on
synthetic features where only a known subset carries label information.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MaskParams:
    tau0: float = 5.0
    tau_min: float = 0.5
    total_epochs: int = 10
    lam: float = 0.1

    def __post_init__(self):
        if not (self.tau0 > 0 and self.tau_min > 0):
            raise ValueError("temperatures must be positive")
        if self.tau_min > self.tau0:
            raise ValueError(f"tau_min {self.tau_min} exceeds tau0 {self.tau0}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


# tuned for the toy task: lands on ~20% kept features with the 20%-informative default
TOY_PARAMS = MaskParams(tau0=5.0, tau_min=0.5, total_epochs=40, lam=2.5)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign to stay finite for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gumbel_from_uniform(u):
    return -np.log(-np.log(np.asarray(u, dtype=np.float64)))


def sample_gumbel(shape, rng_seed) -> np.ndarray:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    u = rng.random(shape)
    # random() can return exactly 0.0, whose Gumbel sample is -inf
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return gumbel_from_uniform(u)


def soft_mask(alpha, g, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return sigmoid((np.asarray(alpha) + np.asarray(g)) / tau)


def ste_binarize(soft) -> np.ndarray:
    """Forward pass of the straight-through estimator: strict threshold at 0.5."""
    return (np.asarray(soft) > 0.5).astype(np.float64)


def ste_backward(grad_hard) -> np.ndarray:
    """Backward pass: the hard mask's gradient is handed to the soft mask unchanged."""
    return np.asarray(grad_hard)


def soft_mask_backward(grad_soft, soft, tau: float) -> np.ndarray:
    """Chain a gradient w.r.t. the soft mask back to the logits."""
    return grad_soft * soft * (1.0 - soft) / tau


def sparsity_loss(alpha, lam: float) -> float:
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(lam * sigmoid(alpha).mean())


def sparsity_grad(alpha, lam: float) -> np.ndarray:
    sig = sigmoid(alpha)
    return lam * sig * (1.0 - sig) / np.asarray(alpha).size


def anneal_tau(t: float, params: MaskParams) -> float:
    return max(params.tau_min, params.tau0 * (1.0 - t / params.total_epochs))


def straight_through_surrogate(x, hard):
    """Masked-tensor surrogate ``M*X + (1-M)*stopgrad(X)``.

    Returns the forward value (numerically ``x`` everywhere) and a function
    mapping an upstream gradient to the gradient w.r.t. ``x``, which is blocked
    on masked-off positions. What actually goes over the link is
    ``apply_mask``'s ``M*X``.
    """
    x = np.asarray(x, dtype=np.float64)
    hard = np.asarray(hard, dtype=np.float64)
    forward = hard * x + (1.0 - hard) * x

    def backward(grad):
        return grad * hard

    return forward, backward


# -- toy task -------------------------------------------------------------------


@dataclass
class ToyTask:
    x_train: np.ndarray  # (n, s*d)
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    informative: np.ndarray  # (s, d) bool
    num_classes: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.informative.shape


def make_toy_task(
    s: int = 4,
    d: int = 25,
    informative_fraction: float = 0.2,
    num_classes: int = 4,
    n_train: int = 2000,
    n_test: int = 1000,
    seed: int = 0,
) -> ToyTask:
    """Gaussian features; labels are the argmax of a random linear teacher on a feature subset."""
    rng = np.random.default_rng(seed)
    nfeat = s * d
    k = max(1, int(round(informative_fraction * nfeat)))
    informative = np.zeros(nfeat, dtype=bool)
    informative[rng.permutation(nfeat)[:k]] = True
    teacher = rng.standard_normal((k, num_classes))

    def draw(n):
        x = rng.standard_normal((n, nfeat))
        y = np.argmax(x[:, informative] @ teacher, axis=1)
        return x, y

    x_train, y_train = draw(n_train)
    x_test, y_test = draw(n_test)
    return ToyTask(x_train, y_train, x_test, y_test, informative.reshape(s, d), num_classes)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def task_loss_and_grads(x, y, mask_values, w, b):
    """Cross-entropy of a linear classifier on masked features and its gradients.

    Returns ``(loss, d_mask, d_w, d_b)`` where ``d_mask`` is the gradient w.r.t.
    the (flattened) per-feature mask values.
    """
    n = x.shape[0]
    xm = x * mask_values[None, :]
    p = _softmax(xm @ w + b)
    loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    dz = p
    dz[np.arange(n), y] -= 1.0
    dz /= n
    d_w = xm.T @ dz
    d_b = dz.sum(axis=0)
    d_xm = dz @ w.T
    d_mask = (d_xm * x).sum(axis=0)
    return loss, d_mask, d_w, d_b


def total_loss_soft(alpha, g, tau, lam, x, y, w, b) -> float:
    """Task plus sparsity loss with the soft (non-binarized) mask."""
    mvals = soft_mask(alpha, g, tau).ravel()
    loss, *_ = task_loss_and_grads(x, y, mvals, w, b)
    return loss + sparsity_loss(alpha, lam)


def alpha_grad(alpha, g, tau, lam, x, y, w, b, binarize: bool = True):
    """Gradient of task + sparsity loss w.r.t. the logits.

    With ``binarize`` the forward pass uses the hard mask and the straight-through
    rule; without it the soft mask is used end to end (exactly differentiable).
    Returns ``(loss, grad_alpha, d_w, d_b, hard_mask)``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    soft = soft_mask(alpha, g, tau)
    hard = ste_binarize(soft)
    mvals = (hard if binarize else soft).ravel()
    loss, d_mask, d_w, d_b = task_loss_and_grads(x, y, mvals, w, b)
    d_soft = ste_backward(d_mask).reshape(alpha.shape)
    grad = soft_mask_backward(d_soft, soft, tau) + sparsity_grad(alpha, lam)
    return loss + sparsity_loss(alpha, lam), grad, d_w, d_b, hard


def eval_mask(alpha) -> np.ndarray:
    """Deterministic inference-time mask, no Gumbel noise."""
    return sigmoid(alpha) > 0.5


@dataclass
class TrainResult:
    alpha: np.ndarray
    w: np.ndarray
    b: np.ndarray
    params: MaskParams
    history: list = field(default_factory=list)

    @property
    def keep_fraction(self) -> float:
        return float(eval_mask(self.alpha).mean())


def _accuracy(x, y, mvals, w, b) -> float:
    return float(np.mean(np.argmax((x * mvals[None, :]) @ w + b, axis=1) == y))


def _history_row(epoch, task, alpha, params, w, b, use_mask=True) -> dict:
    mvals = eval_mask(alpha).ravel().astype(np.float64) if use_mask else np.ones(alpha.size)
    loss, *_ = task_loss_and_grads(task.x_train, task.y_train, mvals, w, b)
    return {
        "epoch": epoch,
        "task_loss": loss,
        "sparsity_loss": sparsity_loss(alpha, params.lam),
        "keep_fraction": float(mvals.mean()),
        "toy_acc": _accuracy(task.x_test, task.y_test, mvals, w, b),
    }


def train_toy(
    task: ToyTask,
    params: MaskParams,
    epochs: Optional[int] = None,
    lr: float = 0.5,
    rng_seed: int = 0,
    batch_size: int = 200,
    alpha_init: float = 1.0,
    use_mask: bool = True,
) -> TrainResult:
    """Jointly train mask logits and a linear classifier with plain gradient descent.

    The Gumbel noise is re-sampled for every mini-batch and the temperature
    follows ``anneal_tau`` per epoch. ``use_mask=False`` trains the classifier
    alone on unmasked features (the reference accuracy).
    """
    epochs = params.total_epochs if epochs is None else epochs
    rng = np.random.default_rng(rng_seed)
    s, d = task.shape
    nfeat = s * d
    alpha = np.full((s, d), float(alpha_init))
    w = 0.01 * rng.standard_normal((nfeat, task.num_classes))
    b = np.zeros(task.num_classes)
    history = [_history_row(0, task, alpha, params, w, b, use_mask)]
    n = task.x_train.shape[0]
    for epoch in range(epochs):
        tau = anneal_tau(epoch, params)
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = task.x_train[idx], task.y_train[idx]
            if use_mask:
                g = sample_gumbel((s, d), rng)
                loss, grad, d_w, d_b, _ = alpha_grad(alpha, g, tau, params.lam, xb, yb, w, b)
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch + 1}")
                alpha = alpha - lr * grad
            else:
                loss, _, d_w, d_b = task_loss_and_grads(xb, yb, np.ones(nfeat), w, b)
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            w = w - lr * d_w
            b = b - lr * d_b
        history.append(_history_row(epoch + 1, task, alpha, params, w, b, use_mask))
    return TrainResult(alpha, w, b, params, history)


# -- trained mask file ----------------------------------------------------------
#
# little-endian: magic b"GMSK", u8 version (1), 3 pad bytes, u32 s, u32 d,
# f64 tau0, f64 tau_min, f64 lambda, u32 total_epochs, 4 pad bytes,
# then s*d f64 logits in row-major order

_MASK_MAGIC = b"GMSK"
_MASK_HEADER = struct.Struct("<4sB3xIIdddI4x")


def mask_to_bytes(alpha, params: MaskParams) -> bytes:
    alpha = np.asarray(alpha, dtype="<f8")
    s, d = alpha.shape
    head = _MASK_HEADER.pack(_MASK_MAGIC, 1, s, d, params.tau0, params.tau_min, params.lam, params.total_epochs)
    return head + alpha.tobytes()


def mask_from_bytes(data: bytes) -> tuple[np.ndarray, MaskParams]:
    if len(data) < _MASK_HEADER.size:
        raise ValueError("mask file shorter than its header")
    magic, version, s, d, tau0, tau_min, lam, total = _MASK_HEADER.unpack_from(data)
    if magic != _MASK_MAGIC or version != 1:
        raise ValueError(f"not a version-1 mask file (magic {magic!r}, version {version})")
    body = data[_MASK_HEADER.size :]
    if len(body) != 8 * s * d:
        raise ValueError(f"expected {8 * s * d} bytes of logits, found {len(body)}")
    alpha = np.frombuffer(body, dtype="<f8").reshape(s, d).astype(np.float64)
    return alpha, MaskParams(tau0=tau0, tau_min=tau_min, total_epochs=total, lam=lam)


def save_mask(path, alpha, params: MaskParams) -> None:
    Path(path).write_bytes(mask_to_bytes(alpha, params))


def load_mask(path) -> tuple[np.ndarray, MaskParams]:
    return mask_from_bytes(Path(path).read_bytes())
