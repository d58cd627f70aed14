"""Deterministic training: cross-entropy, exact backprop, and a
finite-difference gradient oracle.

Everything here is desk-scale by design: full analytic gradients through the
im2col convolution path, plain (mini-batch) gradient descent, no momentum, no
regularization. Given the same architecture, examples, and config, two runs
produce bit-identical weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import arch as _arch
from .arch import ArchSpec, Conv, Dense, Flatten, LowRank, SoftmaxOut
from .errors import DivergenceError
from .tensor import Pool, Stride, im2col

__all__ = [
    "LabeledExample",
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "cross_entropy",
    "loss_and_grads",
    "grad_check",
    "train",
    "evaluate",
]

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LabeledExample:
    """One feature window plus its class index."""

    window: np.ndarray
    label: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 0.05

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.init_scale < 0:
            raise ValueError(f"init scale must be >= 0, got {self.init_scale}")


@dataclass(frozen=True)
class EpochStats:
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    weights: dict[str, np.ndarray]
    history: list[EpochStats] = field(default_factory=list)


def cross_entropy(posterior: np.ndarray, label: int) -> float:
    """-log of the probability assigned to the true label.

    The probability is clamped to at least 1e-12 before the log, so the loss
    is finite for any posterior the forward pass can emit.
    """
    posterior = np.asarray(posterior)
    if not 0 <= label < posterior.shape[0]:
        raise ValueError(f"label {label} out of range for {posterior.shape[0]} classes")
    total = float(posterior.sum())
    if not math.isfinite(total) or abs(total - 1.0) > 1e-4:
        raise ValueError(f"posterior does not sum to 1 (sum={total!r})")
    return -math.log(max(float(posterior[label]), LOG_CLAMP))


# ---------------------------------------------------------------------------
# Cached forward / backward. The caches keep the im2col matrices and the
# routing decisions (pool argmaxes, relu masks) needed by the backward pass;
# the routing list doubles as the kink signature used by grad_check.


def _maxpool_argmax(x: np.ndarray, pool: Pool) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    t2, f2 = x.shape[0] // pool.time, x.shape[1] // pool.freq
    c = x.shape[2]
    windows = (
        x[: t2 * pool.time, : f2 * pool.freq, :]
        .reshape(t2, pool.time, f2, pool.freq, c)
        .transpose(0, 2, 4, 1, 3)
        .reshape(t2, f2, c, pool.time * pool.freq)
    )
    # argmax takes the first maximum, i.e. ties break toward the earliest
    # (time, freq) position inside the window
    arg = windows.argmax(axis=3)
    pooled = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    return pooled, arg, (t2, f2)


def _maxpool_scatter(grad_pooled: np.ndarray, arg: np.ndarray, pre_shape: tuple[int, int, int], pool: Pool) -> np.ndarray:
    t2, f2, c = grad_pooled.shape
    windows = np.zeros((t2, f2, c, pool.time * pool.freq), dtype=grad_pooled.dtype)
    np.put_along_axis(windows, arg[..., None], grad_pooled[..., None], axis=3)
    block = windows.reshape(t2, f2, c, pool.time, pool.freq).transpose(0, 3, 1, 4, 2)
    grad_pre = np.zeros(pre_shape, dtype=grad_pooled.dtype)
    grad_pre[: t2 * pool.time, : f2 * pool.freq, :] = block.reshape(
        t2 * pool.time, f2 * pool.freq, c
    )
    return grad_pre


def _col2im(grad_cols: np.ndarray, in_shape: tuple[int, int, int], kernel_t: int, kernel_f: int, stride: Stride, out_t: int, out_f: int) -> np.ndarray:
    grad_x = np.zeros(in_shape, dtype=grad_cols.dtype)
    patches = grad_cols.reshape(out_t, out_f, kernel_t, kernel_f, in_shape[2])
    for ti in range(out_t):
        t0 = ti * stride.time
        for fi in range(out_f):
            f0 = fi * stride.freq
            grad_x[t0 : t0 + kernel_t, f0 : f0 + kernel_f, :] += patches[ti, fi]
    return grad_x


def _forward_cached(arch: ArchSpec, weights: dict[str, np.ndarray], window: np.ndarray):
    """Forward pass keeping what backward needs.

    Returns (posterior, caches, routing) where routing is the list of pool
    argmax and relu mask arrays, in layer order.
    """
    x = np.asarray(window).reshape(arch.input_t, arch.input_f, 1)
    caches: list[dict] = []
    routing: list[np.ndarray] = []
    for name, layer in zip(_arch.layer_names(arch), arch.layers):
        if isinstance(layer, Conv):
            w = weights[f"{name}.weights"]
            b = weights[f"{name}.bias"]
            cols, out_t, out_f = im2col(x, layer.kernel_t, layer.kernel_f, layer.stride)
            wmat = w.reshape(-1, layer.maps)
            pre = (cols @ wmat + b).reshape(out_t, out_f, layer.maps)
            cache = {
                "layer": layer,
                "name": name,
                "cols": cols,
                "in_shape": x.shape,
                "out_t": out_t,
                "out_f": out_f,
            }
            if layer.pool.active:
                pooled, arg, _ = _maxpool_argmax(pre, layer.pool)
                cache["pool_arg"] = arg
                cache["pre_shape"] = pre.shape
                routing.append(arg)
                x = pooled
            else:
                x = pre
            caches.append(cache)
        elif isinstance(layer, Flatten):
            caches.append({"layer": layer, "in_shape": x.shape})
            x = np.ascontiguousarray(x).reshape(-1)
        elif isinstance(layer, LowRank):
            w = weights[f"{name}.weights"]
            caches.append({"layer": layer, "name": name, "x": x})
            x = w @ x
        elif isinstance(layer, Dense):
            w = weights[f"{name}.weights"]
            b = weights[f"{name}.bias"]
            z = w @ x + b
            mask = z > 0
            routing.append(mask)
            caches.append({"layer": layer, "name": name, "x": x, "mask": mask})
            x = np.where(mask, z, 0.0)
        elif isinstance(layer, SoftmaxOut):
            w = weights["softmax.weights"]
            b = weights["softmax.bias"]
            z = (w @ x + b).astype(np.float64)
            e = np.exp(z - z.max())
            p = e / e.sum()
            caches.append({"layer": layer, "name": "softmax", "x": x})
            x = p
    return x, caches, routing


def _backward_example(arch, weights, caches, posterior, label, grads):
    """Accumulate float64 gradients for one example into `grads`."""
    delta = posterior.astype(np.float64).copy()
    delta[label] -= 1.0  # d loss / d logits for softmax + cross-entropy
    for cache in reversed(caches):
        layer = cache["layer"]
        if isinstance(layer, (SoftmaxOut, Dense)):
            name = cache["name"]
            x = cache["x"].astype(np.float64)
            if isinstance(layer, Dense):
                delta = delta * cache["mask"]
            grads[f"{name}.weights"] += np.outer(delta, x)
            grads[f"{name}.bias"] += delta
            delta = weights[f"{name}.weights"].astype(np.float64).T @ delta
        elif isinstance(layer, LowRank):
            name = cache["name"]
            x = cache["x"].astype(np.float64)
            grads[f"{name}.weights"] += np.outer(delta, x)
            delta = weights[f"{name}.weights"].astype(np.float64).T @ delta
        elif isinstance(layer, Flatten):
            delta = delta.reshape(cache["in_shape"])
        elif isinstance(layer, Conv):
            name = cache["name"]
            if layer.pool.active:
                delta = _maxpool_scatter(delta, cache["pool_arg"], cache["pre_shape"], layer.pool)
            dmat = delta.reshape(-1, layer.maps).astype(np.float64)
            cols = cache["cols"].astype(np.float64)
            grads[f"{name}.weights"] += (cols.T @ dmat).reshape(
                layer.kernel_t, layer.kernel_f, cache["in_shape"][2], layer.maps
            )
            grads[f"{name}.bias"] += dmat.sum(axis=0)
            wmat = weights[f"{name}.weights"].astype(np.float64).reshape(-1, layer.maps)
            grad_cols = dmat @ wmat.T
            delta = _col2im(
                grad_cols,
                cache["in_shape"],
                layer.kernel_t,
                layer.kernel_f,
                layer.stride,
                cache["out_t"],
                cache["out_f"],
            )


def loss_and_grads(
    arch: ArchSpec, weights: dict[str, np.ndarray], batch: list[LabeledExample]
) -> tuple[dict[str, np.ndarray], float, int]:
    """Mean loss, mean gradients, and correct-prediction count over a batch.

    Gradients are accumulated in float64 and returned in the dtype of the
    corresponding weight tensor. Averaging over b identical examples yields
    exactly the single-example gradient.
    """
    if not batch:
        raise ValueError("empty batch")
    grads64 = {name: np.zeros(w.shape, dtype=np.float64) for name, w in weights.items()}
    total_loss = 0.0
    correct = 0
    for example in batch:
        posterior, caches, _ = _forward_cached(arch, weights, example.window)
        if not np.all(np.isfinite(posterior)):
            # overflowed weights; report a NaN loss so train() can flag divergence
            total_loss = float("nan")
            break
        total_loss += cross_entropy(posterior, example.label)
        if int(np.argmax(posterior)) == example.label:
            correct += 1
        _backward_example(arch, weights, caches, posterior, example.label, grads64)
    b = len(batch)
    grads = {name: (g / b).astype(weights[name].dtype) for name, g in grads64.items()}
    return grads, total_loss / b, correct


def _routing_equal(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(
    arch: ArchSpec,
    example: LabeledExample,
    epsilon: float = 1e-3,
    samples_per_tensor: int = 200,
    seed: int = 0,
    init_scale: float = 0.05,
    weights: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Weights are initialized from `seed` (or taken from `weights`) and the
    whole comparison runs in float64. For every tensor up to
    `samples_per_tensor` coordinates are drawn without replacement; each is
    perturbed by +/- epsilon and the loss difference quotient is compared
    against the analytic gradient.

    A coordinate whose two perturbed evaluations change the activation
    routing (a max-pool argmax or a ReLU sign) sits on a kink of the loss
    surface, where the difference quotient does not estimate the derivative
    of anything; such draws are discarded and resampled. The relative-error
    denominator is floored at 1e-2, so near-zero gradient coordinates are
    held to absolute rather than relative accuracy.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if weights is None:
        weights = _arch.init_weights(arch, seed, init_scale)
    w64 = {name: np.asarray(w, dtype=np.float64) for name, w in weights.items()}
    window = np.asarray(example.window, dtype=np.float64)

    posterior, caches, base_routing = _forward_cached(arch, w64, window)
    grads = {name: np.zeros(w.shape, dtype=np.float64) for name, w in w64.items()}
    _backward_example(arch, w64, caches, posterior, example.label, grads)

    def loss_at(perturbed):
        p, _, routing = _forward_cached(arch, perturbed, window)
        return cross_entropy(p, example.label), routing

    rng = np.random.default_rng([seed, 0x5EED])
    worst = 0.0
    for name, w in w64.items():
        flat = w.reshape(-1)
        n_coords = min(samples_per_tensor, flat.size)
        # draw extra candidates so kink-adjacent coordinates can be replaced
        order = rng.permutation(flat.size)
        checked = 0
        for coord in order:
            if checked >= n_coords:
                break
            original = flat[coord]
            flat[coord] = original + epsilon
            loss_hi, routing_hi = loss_at(w64)
            flat[coord] = original - epsilon
            loss_lo, routing_lo = loss_at(w64)
            flat[coord] = original
            if not (_routing_equal(routing_hi, base_routing) and _routing_equal(routing_lo, base_routing)):
                continue  # kink inside the probe interval; quotient is meaningless
            checked += 1
            numeric = (loss_hi - loss_lo) / (2 * epsilon)
            analytic = grads[name].reshape(-1)[coord]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-2)
            worst = max(worst, err)
    return worst


def train(arch: ArchSpec, examples: list[LabeledExample], cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch gradient descent; deterministic for a given (arch, data, cfg).

    Weights start from init_weights(arch, cfg.seed, cfg.init_scale); the
    per-epoch shuffle has its own stream derived from the same seed. History
    records the running mean loss and accuracy over each epoch's batches. A
    non-finite batch loss raises DivergenceError naming the epoch.
    """
    if not examples:
        raise ValueError("no training examples")
    for ex in examples:
        if not 0 <= ex.label:
            raise ValueError(f"negative label {ex.label}")
    weights = _arch.init_weights(arch, cfg.seed, cfg.init_scale)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    history: list[EpochStats] = []
    n = len(examples)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = [examples[i] for i in order[start : start + cfg.batch_size]]
            grads, batch_loss, batch_correct = loss_and_grads(arch, weights, batch)
            if not math.isfinite(batch_loss):
                raise DivergenceError(
                    f"training diverged at epoch {epoch}: loss {batch_loss!r}", epoch=epoch
                )
            epoch_loss += batch_loss * len(batch)
            epoch_correct += batch_correct
            lr = np.asarray(cfg.learning_rate, dtype=np.float32)
            for name in weights:
                weights[name] = weights[name] - lr * grads[name]
        history.append(EpochStats(epoch_loss / n, epoch_correct / n))
    return TrainResult(weights, history)


def evaluate(arch: ArchSpec, weights: dict[str, np.ndarray], examples: list[LabeledExample]) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of a fixed model over examples."""
    if not examples:
        raise ValueError("no examples to evaluate")
    total_loss = 0.0
    correct = 0
    for ex in examples:
        posterior = _arch.forward(arch, weights, ex.window)
        total_loss += cross_entropy(posterior, ex.label)
        if int(np.argmax(posterior)) == ex.label:
            correct += 1
    return total_loss / len(examples), correct / len(examples)
