"""Differentiable objectives: quadratics, finite sums, a small MLP, datasets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import LinalgError, check_symmetric

__all__ = [
    "QuadraticProblem",
    "quadratic_value",
    "quadratic_gradient",
    "build_cycle_laplacian",
    "cycle_laplacian_matvec",
    "cycle500_problem",
    "random_spd_problem",
    "FiniteSumObjective",
    "QuadraticSum",
    "LogisticRegression",
    "LabeledDataset",
    "MlpModel",
    "MlpObjective",
    "mlp_loss_and_gradient",
    "minibatch_gradient",
    "finite_difference_gradient",
    "make_rng",
    "two_moons",
    "gaussian_blobs",
]


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator on numpy's PCG64 bit generator (stable bitstream)."""
    return np.random.Generator(np.random.PCG64(seed))


# --------------------------------------------------------------------------
# Quadratics


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """f(w) = 1/2 w^T A w - b^T w with symmetric A."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = check_symmetric(self.A)
        b = np.asarray(self.b, dtype=float)
        if b.shape != (A.shape[0],):
            raise LinalgError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise LinalgError(f"w has shape {w.shape}, expected ({self.dim},)")
        return w

    def value(self, w) -> float:
        w = self._check(w)
        return float(0.5 * w @ (self.A @ w) - self.b @ w)

    def gradient(self, w) -> np.ndarray:
        w = self._check(w)
        return self.A @ w - self.b


def quadratic_value(q: QuadraticProblem, w) -> float:
    return q.value(w)


def quadratic_gradient(q: QuadraticProblem, w) -> np.ndarray:
    return q.gradient(w)


def build_cycle_laplacian(d: int) -> np.ndarray:
    """Graph Laplacian of the d-cycle: 2 on the diagonal, -1 on cyclic neighbours."""
    if d < 3:
        raise ValueError(f"a cycle graph needs d >= 3 vertices, got {d}")
    L = 2.0 * np.eye(d)
    idx = np.arange(d)
    L[idx, (idx + 1) % d] = -1.0
    L[idx, (idx - 1) % d] = -1.0
    return L


def cycle_laplacian_matvec(x) -> np.ndarray:
    """Apply the cycle Laplacian without forming it."""
    x = np.asarray(x, dtype=float)
    return 2.0 * x - np.roll(x, 1) - np.roll(x, -1)


def cycle500_problem() -> QuadraticProblem:
    """500-dimensional cycle-Laplacian quadratic with b = e_1.

    Note that b has a nonzero component along the Laplacian's null space
    (the constant vector), so f is unbounded below along that direction.
    """
    d = 500
    b = np.zeros(d)
    b[0] = 1.0
    return QuadraticProblem(build_cycle_laplacian(d), b)


def random_spd_problem(
    d: int,
    kappa: float,
    rng: np.random.Generator,
    lambda_min: float = 1.0,
    spectrum: str = "uniform",
) -> QuadraticProblem:
    """Random SPD quadratic with prescribed condition number.

    Eigenvalues span ``[lambda_min, kappa * lambda_min]`` (both endpoints
    included), drawn uniformly by default or log-uniformly with
    ``spectrum="loguniform"``; the eigenbasis is Haar-random orthogonal.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    inner = rng.random(d - 2)
    if spectrum == "loguniform":
        lam = lambda_min * kappa ** np.concatenate([[0.0, 1.0], inner])
    elif spectrum == "uniform":
        lam = lambda_min * (1.0 + (kappa - 1.0) * np.concatenate([[0.0, 1.0], inner]))
    else:
        raise ValueError(f"unknown spectrum {spectrum!r}")
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    A = (Q * lam) @ Q.T
    A = 0.5 * (A + A.T)
    b = rng.standard_normal(d)
    return QuadraticProblem(A, b)


# --------------------------------------------------------------------------
# Finite sums


class FiniteSumObjective:
    """Mean of ``n_components`` differentiable terms.

    Subclasses implement ``value_at`` and ``gradient_at``; batch evaluations
    default to the arithmetic mean over the batch and may be overridden with
    vectorized versions that compute the same quantity.
    """

    n_components: int
    dim: int

    def value_at(self, w, index: int) -> float:
        raise NotImplementedError

    def gradient_at(self, w, index: int) -> np.ndarray:
        raise NotImplementedError

    def batch_value(self, w, batch) -> float:
        return float(np.mean([self.value_at(w, i) for i in batch]))

    def batch_gradient(self, w, batch) -> np.ndarray:
        return np.mean([self.gradient_at(w, i) for i in batch], axis=0)

    def value(self, w) -> float:
        return self.batch_value(w, np.arange(self.n_components))

    def gradient(self, w) -> np.ndarray:
        return self.batch_gradient(w, np.arange(self.n_components))


def _check_batch(batch, n: int) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.int64).reshape(-1)
    if batch.size == 0:
        raise ValueError("mini-batch is empty")
    if batch.min() < 0 or batch.max() >= n:
        raise IndexError(f"mini-batch index out of range [0, {n})")
    return batch


def minibatch_gradient(obj: FiniteSumObjective, w, batch) -> np.ndarray:
    """Mean of the per-component gradients over ``batch``."""
    return obj.batch_gradient(w, _check_batch(batch, obj.n_components))


class QuadraticSum(FiniteSumObjective):
    """Mean of quadratic components f_i(w) = 1/2 w^T A_i w - b_i^T w."""

    def __init__(self, components: Sequence[QuadraticProblem]):
        if not components:
            raise ValueError("need at least one component")
        dims = {q.dim for q in components}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        self.components = list(components)
        self.n_components = len(self.components)
        self.dim = dims.pop()

    def value_at(self, w, index):
        return self.components[index].value(w)

    def gradient_at(self, w, index):
        return self.components[index].gradient(w)


class LogisticRegression(FiniteSumObjective):
    """Binary logistic loss log(1 + exp(-s_i x_i^T w)) with labels in {0, 1}."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (N, d) and y must have length N")
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("labels must be 0 or 1")
        self.signs = np.where(self.y == 1, 1.0, -1.0)
        self.n_components, self.dim = self.X.shape

    def batch_value(self, w, batch):
        batch = _check_batch(batch, self.n_components)
        margins = self.signs[batch] * (self.X[batch] @ np.asarray(w, dtype=float))
        return float(np.mean(np.logaddexp(0.0, -margins)))

    def batch_gradient(self, w, batch):
        batch = _check_batch(batch, self.n_components)
        X = self.X[batch]
        s = self.signs[batch]
        margins = s * (X @ np.asarray(w, dtype=float))
        # d/dm log(1 + e^{-m}) = -sigmoid(-m)
        coef = -s * np.exp(-np.logaddexp(0.0, margins))
        return coef @ X / batch.size

    def value_at(self, w, index):
        return self.batch_value(w, [index])

    def gradient_at(self, w, index):
        return self.batch_gradient(w, [index])


# --------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature rows with integer class labels.

    ``bounded`` marks image-like data whose features lie in ``[0, 1]``.
    """

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    bounded: bool = False

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"inputs {X.shape} and labels {y.shape} do not match")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.bounded and X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("bounded dataset has features outside [0, 1]")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def to_csv(self, path) -> None:
        """Write ``f0,...,fk,label`` rows; floats keep 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"f{j}" for j in range(self.n_features)] + ["label"])
            for x, label in zip(self.inputs, self.labels):
                writer.writerow([format(v, ".17g") for v in x] + [int(label)])

    @classmethod
    def from_csv(cls, path, n_classes: int | None = None, bounded: bool = False):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[-1] != "label" or any(
            h != f"f{j}" for j, h in enumerate(header[:-1])
        ):
            raise ValueError(f"{path}: header must be f0,...,fk,label")
        X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(header) - 1)
        y = np.array([int(r[-1]) for r in body], dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1 if y.size else 1
        return cls(X, y, n_classes, bounded)


def two_moons(n_samples: int = 200, noise: float = 0.1, seed: int = 0, unit_box: bool = True):
    """Two interleaved half circles, optionally rescaled into [0, 1]^2.

    The rescaling uses the noise-free extent (with a small margin) and clips,
    so the same affine map applies to every sample.
    """
    rng = make_rng(seed)
    n_out = n_samples // 2
    n_in = n_samples - n_out
    t_out = np.pi * rng.random(n_out)
    t_in = np.pi * rng.random(n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)])
    X = np.vstack([outer, inner]) + noise * rng.standard_normal((n_samples, 2))
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    perm = rng.permutation(n_samples)
    X, y = X[perm], y[perm]
    if unit_box:
        lo = np.array([-1.0, -0.5]) - 3.0 * noise
        hi = np.array([2.0, 1.0]) + 3.0 * noise
        X = np.clip((X - lo) / (hi - lo), 0.0, 1.0)
    return LabeledDataset(X, y, 2, bounded=unit_box)


def gaussian_blobs(
    n_samples: int = 500,
    n_features: int = 64,
    n_classes: int = 10,
    spread: float = 1.0,
    seed: int = 0,
):
    """Isotropic Gaussian clusters around random unit-scale centers."""
    rng = make_rng(seed)
    centers = rng.standard_normal((n_classes, n_features))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    y = np.arange(n_samples) % n_classes
    rng.shuffle(y)
    X = 3.0 * centers[y] + spread * rng.standard_normal((n_samples, n_features)) / np.sqrt(n_features)
    return LabeledDataset(X, y, n_classes)


# --------------------------------------------------------------------------
# MLP with manual backpropagation


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0.0).astype(float)),
}


@dataclass(frozen=True)
class MlpModel:
    """Fully connected classifier with softmax cross-entropy loss.

    Parameters live in one flat vector: for each layer, the weight matrix
    (shape ``(fan_in, fan_out)``, row-major) followed by its bias.
    """

    widths: tuple
    activation: str = "tanh"
    _shapes: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        widths = tuple(int(v) for v in self.widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {self.widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "widths", widths)
        shapes = []
        offset = 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            shapes.append((offset, fan_in, fan_out))
            offset += fan_in * fan_out + fan_out
        object.__setattr__(self, "_shapes", shapes)

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
        w = np.empty(self.n_params)
        for offset, fan_in, fan_out in self._shapes:
            size = fan_in * fan_out + fan_out
            bound = 1.0 / np.sqrt(fan_in)
            w[offset : offset + size] = rng.uniform(-bound, bound, size)
        return w

    def unpack(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_params,):
            raise ValueError(f"parameter vector has shape {w.shape}, model needs ({self.n_params},)")
        layers = []
        for offset, fan_in, fan_out in self._shapes:
            W = w[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            b = w[offset + fan_in * fan_out : offset + fan_in * fan_out + fan_out]
            layers.append((W, b))
        return layers

    def _forward(self, w, X):
        act, _ = _ACTIVATIONS[self.activation]
        layers = self.unpack(w)
        cache = [(None, X)]
        h = X
        for k, (W, b) in enumerate(layers):
            z = h @ W + b
            h = z if k == len(layers) - 1 else act(z)
            cache.append((z, h))
        return layers, cache

    def logits(self, w, X) -> np.ndarray:
        return self._forward(w, np.atleast_2d(np.asarray(X, dtype=float)))[1][-1][1]

    def predict(self, w, X) -> np.ndarray:
        return np.argmax(self.logits(w, X), axis=1)

    def _backward(self, w, X, y, want_params=True):
        """Per-sample losses plus gradients of their mean.

        Returns ``(losses, param_grad, input_grad)``; ``input_grad`` rows are
        gradients of each sample's own loss with respect to its input.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        _, dact = _ACTIVATIONS[self.activation]
        layers, cache = self._forward(w, X)
        logits = cache[-1][1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.sum(np.exp(shifted), axis=1))
        rows = np.arange(X.shape[0])
        losses = lse - shifted[rows, y]
        probs = np.exp(shifted - lse[:, None])
        delta = probs
        delta[rows, y] -= 1.0  # d loss_i / d logits_i
        grad = np.empty(self.n_params) if want_params else None
        m = X.shape[0]
        for k in range(len(layers) - 1, -1, -1):
            W, _ = layers[k]
            h_prev = cache[k][1]
            if want_params:
                offset, fan_in, fan_out = self._shapes[k]
                grad[offset : offset + fan_in * fan_out] = (h_prev.T @ delta / m).ravel()
                grad[offset + fan_in * fan_out : offset + fan_in * fan_out + fan_out] = delta.sum(axis=0) / m
            delta = delta @ W.T
            if k > 0:
                z, a = cache[k]
                delta = delta * dact(z, a)
        return losses, grad, delta

    def loss_and_gradient(self, w, X, y):
        """Mean cross-entropy over the rows of X and its parameter gradient."""
        losses, grad, _ = self._backward(w, X, y)
        return float(np.mean(losses)), grad

    def loss(self, w, X, y) -> float:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        logits = self.logits(w, X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.sum(np.exp(shifted), axis=1))
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        return float(np.mean(lse - shifted[np.arange(X.shape[0]), y]))

    def input_gradient(self, w, X, y) -> np.ndarray:
        """Gradient of each sample's loss with respect to its own input row."""
        _, _, gx = self._backward(w, X, y, want_params=False)
        return gx


def mlp_loss_and_gradient(m: MlpModel, w, data: LabeledDataset, batch):
    batch = _check_batch(batch, len(data))
    return m.loss_and_gradient(w, data.inputs[batch], data.labels[batch])


class MlpObjective(FiniteSumObjective):
    """Cross-entropy of an :class:`MlpModel` over a dataset, as a finite sum."""

    def __init__(self, model: MlpModel, data: LabeledDataset):
        if model.widths[0] != data.n_features or model.widths[-1] != data.n_classes:
            raise ValueError(
                f"model widths {model.widths} do not fit data "
                f"({data.n_features} features, {data.n_classes} classes)"
            )
        self.model = model
        self.data = data
        self.n_components = len(data)
        self.dim = model.n_params

    def batch_value(self, w, batch):
        batch = _check_batch(batch, self.n_components)
        return self.model.loss(w, self.data.inputs[batch], self.data.labels[batch])

    def batch_gradient(self, w, batch):
        return mlp_loss_and_gradient(self.model, w, self.data, batch)[1]

    def value_at(self, w, index):
        return self.batch_value(w, [index])

    def gradient_at(self, w, index):
        return self.batch_gradient(w, [index])

    def accuracy(self, w) -> float:
        return float(np.mean(self.model.predict(w, self.data.inputs) == self.data.labels))


# --------------------------------------------------------------------------


def finite_difference_gradient(f: Callable[[np.ndarray], float], w, h: float = 1e-5, coords=None):
    """Central-difference gradient ``(f(w + h e_j) - f(w - h e_j)) / 2h``.

    ``coords`` restricts evaluation to a subset of coordinates; the others
    are returned as NaN.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    w = np.array(w, dtype=float)
    g = np.full(w.shape, np.nan) if coords is not None else np.empty(w.shape)
    for j in range(w.size) if coords is None else coords:
        wj = w[j]
        w[j] = wj + h
        fp = f(w)
        w[j] = wj - h
        fm = f(w)
        w[j] = wj
        g[j] = (fp - fm) / (2.0 * h)
    return g
