"""Desk-scale classifier trained with DP-SGD mechanics (SGD or AdamW).

The model is softmax cross-entropy over a linear or one-hidden-layer tanh
network with a flat parameter vector (layer-major, row-major within layer).
Per-sample gradients are clipped to an L2 threshold, summed, noised with a
seeded Gaussian, and averaged; learning rates follow linear warmup then
linear decay; checkpoints are taken at a fixed step interval.

Checkpoint files use the "CKPT1" format: magic ``CKPT1``, u32-LE step,
f64-LE learning rate, u32-LE parameter count, then float64-LE parameters.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import accountant
from .errors import (
    DivergenceError,
    EmptyBatchError,
    FormatError,
    NonFiniteError,
    OutOfRangeError,
    ShapeMismatchError,
)

CKPT_MAGIC = b"CKPT1"

DIVERGENCE_LOSS_CAP = 1e6


@dataclass(frozen=True)
class ModelSpec:
    """Network shape: hidden_dim = 0 means a plain linear softmax model."""

    input_dim: int
    hidden_dim: int
    num_classes: int

    def __post_init__(self):
        if self.input_dim < 1 or self.num_classes < 1 or self.hidden_dim < 0:
            raise ValueError(f"invalid model spec {self}")

    @property
    def num_params(self) -> int:
        d, h, c = self.input_dim, self.hidden_dim, self.num_classes
        if h == 0:
            return c * d + c
        return h * d + h + c * h + c


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float
    total_steps: int
    batch_size: int
    seed: int
    warmup_steps: int = 50
    clip_threshold: float = 0.1
    noise_multiplier: float = 0.0
    weight_decay: float = 0.01
    optimizer: str = "adamw"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_interval: int = 100
    target_epsilon: float | None = None
    delta: float = 1e-5
    noise_seed: int | None = None

    def __post_init__(self):
        if self.base_lr <= 0 or self.total_steps < 1 or self.batch_size < 1:
            raise ValueError("base_lr, total_steps, batch_size must be positive")
        if self.noise_multiplier < 0 or self.clip_threshold <= 0:
            raise ValueError("noise_multiplier >= 0 and clip_threshold > 0 required")
        if self.optimizer not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.warmup_steps < 0 or self.warmup_steps >= self.total_steps:
            raise ValueError("need 0 <= warmup_steps < total_steps")


@dataclass(frozen=True)
class Checkpoint:
    step: int
    theta: np.ndarray
    eta: float


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray   # (N, d)
    labels: np.ndarray     # (N,) int in [0, c)
    languages: tuple[str, ...]  # (N,) language tag per example

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ShapeMismatchError("features must be (N, d) and labels (N,)")
        if len(self.languages) != features.shape[0]:
            raise ShapeMismatchError("language tags must match example count")
        if not np.all(np.isfinite(features)):
            raise NonFiniteError("dataset features contain NaN/inf")
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative class indices")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "languages", tuple(self.languages))

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class TrainResult:
    theta: np.ndarray
    checkpoints: list[Checkpoint]
    log: list[dict]  # per step: step, lr, loss, accuracy
    sigma: float


def init_theta(spec: ModelSpec, seed: int = 0, scale: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal(spec.num_params)


def _unpack(spec: ModelSpec, theta: np.ndarray):
    d, h, c = spec.input_dim, spec.hidden_dim, spec.num_classes
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.num_params,):
        raise ShapeMismatchError(
            f"theta has {theta.shape}, spec needs ({spec.num_params},)"
        )
    if h == 0:
        W = theta[: c * d].reshape(c, d)
        b = theta[c * d :]
        return W, b
    o = 0
    W1 = theta[o : o + h * d].reshape(h, d); o += h * d
    b1 = theta[o : o + h]; o += h
    W2 = theta[o : o + c * h].reshape(c, h); o += c * h
    b2 = theta[o:]
    return W1, b1, W2, b2


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _forward_batch(spec: ModelSpec, theta: np.ndarray, X: np.ndarray):
    """Returns (probs (B,c), hidden activations or None)."""
    if spec.hidden_dim == 0:
        W, b = _unpack(spec, theta)
        return _softmax(X @ W.T + b), None
    W1, b1, W2, b2 = _unpack(spec, theta)
    A = np.tanh(X @ W1.T + b1)
    return _softmax(A @ W2.T + b2), A


def forward_loss(spec: ModelSpec, theta: np.ndarray, x: np.ndarray, y: int):
    """Softmax cross-entropy loss and class probabilities for one example."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ShapeMismatchError(f"x has {x.shape}, expected ({spec.input_dim},)")
    if not 0 <= y < spec.num_classes:
        raise ShapeMismatchError(f"label {y} outside [0, {spec.num_classes})")
    probs, _ = _forward_batch(spec, theta, x[None, :])
    probs = probs[0]
    loss = -np.log(max(probs[y], np.finfo(np.float64).tiny))
    return float(loss), probs


def grad_batch(spec: ModelSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample loss gradients, one flat row per example (B, num_params)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    B = X.shape[0]
    probs, A = _forward_batch(spec, theta, X)
    D = probs.copy()
    D[np.arange(B), y] -= 1.0  # dloss/dlogits
    if spec.hidden_dim == 0:
        dW = np.einsum("bc,bd->bcd", D, X)
        return np.concatenate([dW.reshape(B, -1), D], axis=1)
    W1, b1, W2, b2 = _unpack(spec, theta)
    dW2 = np.einsum("bc,bh->bch", D, A)
    dZ = (D @ W2) * (1.0 - A**2)
    dW1 = np.einsum("bh,bd->bhd", dZ, X)
    return np.concatenate([dW1.reshape(B, -1), dZ, dW2.reshape(B, -1), D], axis=1)


def grad(spec: ModelSpec, theta: np.ndarray, z: tuple[np.ndarray, int]) -> np.ndarray:
    """Analytic gradient of forward_loss at one example z = (x, y)."""
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ShapeMismatchError(f"x has {x.shape}, expected ({spec.input_dim},)")
    return grad_batch(spec, theta, x[None, :], np.array([y]))[0]


def clip(g: np.ndarray, C: float) -> np.ndarray:
    """Scale g to L2 norm at most C: g * min(1, C / ||g||)."""
    if C <= 0:
        raise ValueError("clip threshold must be > 0")
    norm = np.linalg.norm(g)
    if norm <= C:
        return g
    return g * (C / norm)


def dp_aggregate(
    per_sample_clipped: list[np.ndarray] | np.ndarray,
    sigma: float,
    C: float,
    B: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Noised mean of clipped gradients: (sum g_i + N(0, sigma^2 C^2 I)) / B."""
    grads = np.asarray(per_sample_clipped, dtype=np.float64)
    if grads.size == 0:
        raise EmptyBatchError("no gradients to aggregate")
    if grads.shape[0] != B:
        raise ShapeMismatchError(f"got {grads.shape[0]} gradients for batch size {B}")
    total = grads.sum(axis=0)
    if sigma > 0:
        total = total + sigma * C * rng.standard_normal(total.shape)
    return total / B


@dataclass
class OptimizerState:
    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, theta: np.ndarray) -> "OptimizerState":
        return cls(theta=np.asarray(theta, dtype=np.float64).copy(),
                   m=np.zeros_like(theta, dtype=np.float64),
                   v=np.zeros_like(theta, dtype=np.float64))


def optimizer_step(
    state: OptimizerState, noisy_grad: np.ndarray, eta: float, config: TrainConfig
) -> OptimizerState:
    """One SGD or AdamW update with decoupled weight decay."""
    wd = config.weight_decay
    if config.optimizer == "sgd":
        theta = state.theta - eta * noisy_grad - eta * wd * state.theta
        return OptimizerState(theta=theta, m=state.m, v=state.v, t=state.t + 1)
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * noisy_grad
    v = b2 * state.v + (1 - b2) * noisy_grad**2
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    theta = state.theta - eta * m_hat / (np.sqrt(v_hat) + config.adam_eps) - eta * wd * state.theta
    return OptimizerState(theta=theta, m=m, v=v, t=t)


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear warmup to base_lr, then linear decay to 0 at total_steps."""
    if not 0 <= step <= config.total_steps:
        raise OutOfRangeError(f"step {step} outside [0, {config.total_steps}]")
    if config.warmup_steps > 0 and step <= config.warmup_steps:
        return config.base_lr * step / config.warmup_steps
    return config.base_lr * (config.total_steps - step) / (config.total_steps - config.warmup_steps)


def resolve_sigma(config: TrainConfig, dataset_size: int) -> float:
    """Noise multiplier from config, via the accountant when a target is set."""
    if config.target_epsilon is None:
        return config.noise_multiplier
    return accountant.sigma_for(
        config.target_epsilon,
        q=config.batch_size / dataset_size,
        steps=config.total_steps,
        delta=config.delta,
    )


def train(
    dataset: LabeledDataset,
    spec: ModelSpec,
    config: TrainConfig,
    exclude_index: int | None = None,
) -> TrainResult:
    """Run the full DP training loop; deterministic given config.seed.

    Batch sampling and gradient noise come from two streams spawned off one
    seed, so sigma = 0 runs are unaffected by the noise stream. When
    config.target_epsilon is set, sigma is resolved through the accountant.

    exclude_index supports coupled leave-one-out retraining: batches are
    drawn over the full index space exactly as in the unmodified run, and
    the excluded example is dropped from any batch containing it, so the
    two trajectories differ only through that example's contributions.
    """
    if config.batch_size > len(dataset):
        raise ValueError("batch_size exceeds dataset size")
    if spec.input_dim != dataset.features.shape[1]:
        raise ShapeMismatchError("model input_dim does not match dataset")
    sigma = resolve_sigma(config, len(dataset))
    C = config.clip_threshold
    B = config.batch_size

    batch_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    batch_rng = np.random.default_rng(batch_ss)
    if config.noise_seed is not None:
        noise_rng = np.random.default_rng(config.noise_seed)
    else:
        noise_rng = np.random.default_rng(noise_ss)

    state = OptimizerState.init(init_theta(spec, seed=config.seed))
    checkpoints: list[Checkpoint] = []
    log: list[dict] = []
    N = len(dataset)

    for step in range(1, config.total_steps + 1):
        idx = batch_rng.choice(N, size=B, replace=False)
        if exclude_index is not None:
            idx = idx[idx != exclude_index]
        X = dataset.features[idx]
        y = dataset.labels[idx]
        batch_len = len(idx)
        probs, _ = _forward_batch(spec, state.theta, X)
        p_true = np.maximum(probs[np.arange(batch_len), y], np.finfo(np.float64).tiny)
        loss = float(-np.log(p_true).mean())
        acc = float((probs.argmax(axis=1) == y).mean())
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS_CAP:
            raise DivergenceError(step, f"loss = {loss}")

        per_sample = grad_batch(spec, state.theta, X, y)
        norms = np.linalg.norm(per_sample, axis=1)
        scale = np.minimum(1.0, C / np.maximum(norms, np.finfo(np.float64).tiny))
        clipped = per_sample * scale[:, None]
        noisy = dp_aggregate(clipped, sigma, C, batch_len, noise_rng)

        eta = lr_at(step, config)
        state = optimizer_step(state, noisy, eta, config)
        if not np.all(np.isfinite(state.theta)):
            raise DivergenceError(step, "non-finite parameters")

        log.append({"step": step, "lr": eta, "loss": loss, "accuracy": acc})
        if step % config.checkpoint_interval == 0:
            checkpoints.append(Checkpoint(step=step, theta=state.theta.copy(), eta=eta))

    return TrainResult(theta=state.theta, checkpoints=checkpoints, log=log, sigma=sigma)


def evaluate(
    theta: np.ndarray, spec: ModelSpec, dataset: LabeledDataset
) -> tuple[float, dict[str, float]]:
    """Accuracy (argmax, lowest index wins ties) and per-language mean loss."""
    probs, _ = _forward_batch(spec, theta, dataset.features)
    preds = probs.argmax(axis=1)
    labels = dataset.labels
    accuracy = float((preds == labels).mean())
    p_true = np.maximum(probs[np.arange(len(dataset)), labels], np.finfo(np.float64).tiny)
    losses = -np.log(p_true)
    per_language: dict[str, float] = {}
    tags = np.array(dataset.languages)
    for lang in dict.fromkeys(dataset.languages):  # first-seen order
        per_language[lang] = float(losses[tags == lang].mean())
    return accuracy, per_language


def write_checkpoint(path: Path | str, ckpt: Checkpoint) -> None:
    theta = np.ascontiguousarray(ckpt.theta, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", ckpt.step))
        fh.write(struct.pack("<d", ckpt.eta))
        fh.write(struct.pack("<I", theta.size))
        fh.write(theta.astype("<f8").tobytes())


def read_checkpoint(path: Path | str) -> Checkpoint:
    data = Path(path).read_bytes()
    header = len(CKPT_MAGIC) + 4 + 8 + 4
    if len(data) < header or data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic or truncated header")
    step, = struct.unpack_from("<I", data, 5)
    eta, = struct.unpack_from("<d", data, 9)
    count, = struct.unpack_from("<I", data, 17)
    if len(data) != header + count * 8:
        raise FormatError(f"{path}: payload does not match declared count {count}")
    theta = np.frombuffer(data, dtype="<f8", offset=header).astype(np.float64)
    return Checkpoint(step=step, theta=theta, eta=eta)


def write_training_log(path: Path | str, log: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss", "accuracy"])
        for row in log:
            writer.writerow([
                row["step"],
                format(row["lr"], ".17g"),
                format(row["loss"], ".17g"),
                format(row["accuracy"], ".17g"),
            ])
