"""Value-function approximators with analytic gradients.

Both models keep all parameters in one flat float64 vector ``w``; the named
weight matrices are views into it, so ``w += step`` updates everything in
place.  The flat layout is row-major ``W1, b1, W2, b2`` for the network and
row-major ``W`` for the linear model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .transforms import SparseBinary, feature_length


class DimensionError(ValueError):
    pass


@dataclass
class InitSpec:
    weight_std: float = 0.5
    bias_std: float = 0.1
    seed: int = 0
    upward_dims: list[int] = field(default_factory=list)


def _check_input(x, n_in):
    if feature_length(x) != n_in:
        raise DimensionError(f"expected {n_in} features, got {feature_length(x)}")


@njit(cache=True)
def _hidden_dense(W1, b1, x, pre):
    n_h, n_in = W1.shape
    for i in range(n_h):
        acc = 0.0
        for j in range(n_in):
            acc += W1[i, j] * x[j]
        pre[i] = acc + b1[i]


@njit(cache=True)
def _hidden_sparse(W1, b1, idx, pre):
    n_h = W1.shape[0]
    for i in range(n_h):
        acc = 0.0
        for j in idx:
            acc += W1[i, j]
        pre[i] = acc + b1[i]


@njit(cache=True)
def _output(W2, b2, pre, out):
    n_out, n_h = W2.shape
    for k in range(n_out):
        acc = 0.0
        for i in range(n_h):
            if pre[i] > 0.0:
                acc += W2[k, i] * pre[i]
        out[k] = acc + b2[k]


@njit(cache=True)
def _semi_gradient(W1, b1, W2, b2, pre, head, target, alpha, threshold, x, idx, dense, dpre, hidden):
    """Apply w += alpha * delta * grad output[head] with all gradient factors
    taken at the pre-update weights.  Nothing is written when delta is
    non-finite or above ``threshold``."""
    n_h, n_in = W1.shape
    value = b2[head]
    for i in range(n_h):
        if pre[i] > 0.0:
            hidden[i] = pre[i]
            dpre[i] = W2[head, i]
            value += W2[head, i] * pre[i]
        else:
            hidden[i] = 0.0
            dpre[i] = 0.0
    delta = target - value
    if not np.isfinite(delta) or abs(delta) > threshold:
        return delta, value
    s = alpha * delta
    if s == 0.0:
        return delta, value
    for i in range(n_h):
        W2[head, i] += s * hidden[i]
        g = s * dpre[i]
        if g != 0.0:
            b1[i] += g
            if dense:
                for j in range(n_in):
                    W1[i, j] += g * x[j]
            else:
                for j in idx:
                    W1[i, j] += g
    b2[head] += s
    return delta, value


_NO_IDX = np.zeros(0, dtype=np.int64)
_NO_X = np.zeros(0)


class ReluNet:
    """One hidden ReLU layer followed by a linear multi-head output layer."""

    kind = "relu_net"

    def __init__(self, n_in: int, n_hidden: int, n_out: int, w: np.ndarray | None = None):
        if min(n_in, n_hidden, n_out) < 1:
            raise ValueError("layer sizes must be positive")
        self.shape = (n_in, n_hidden, n_out)
        n = self.num_params()
        self.w = np.zeros(n) if w is None else np.array(w, dtype=float)
        if self.w.shape != (n,):
            raise DimensionError(f"parameter vector must have length {n}")
        self._bind()

    def _bind(self):
        n_in, n_h, n_out = self.shape
        w = self.w
        i = 0
        self.W1 = w[i : i + n_h * n_in].reshape(n_h, n_in)
        i += n_h * n_in
        self.b1 = w[i : i + n_h]
        i += n_h
        self.W2 = w[i : i + n_out * n_h].reshape(n_out, n_h)
        i += n_out * n_h
        self.b2 = w[i : i + n_out]
        self._slices = {
            "W1": slice(0, n_h * n_in),
            "b1": slice(n_h * n_in, n_h * n_in + n_h),
            "W2": slice(n_h * n_in + n_h, i),
            "b2": slice(i, i + n_out),
        }

    def num_params(self) -> int:
        n_in, n_h, n_out = self.shape
        return n_h * n_in + n_h + n_out * n_h + n_out

    def copy(self) -> "ReluNet":
        return ReluNet(*self.shape, w=self.w.copy())

    def preactivation(self, x) -> np.ndarray:
        _check_input(x, self.shape[0])
        pre = np.empty(self.shape[1])
        if isinstance(x, SparseBinary):
            _hidden_sparse(self.W1, self.b1, x.indices, pre)
        else:
            _hidden_dense(self.W1, self.b1, np.asarray(x, dtype=float), pre)
        return pre

    def forward(self, x):
        """Return (outputs, hidden activations)."""
        pre = self.preactivation(x)
        out = np.empty(self.shape[2])
        _output(self.W2, self.b2, pre, out)
        return out, np.maximum(pre, 0.0)

    def __call__(self, x) -> np.ndarray:
        pre = self.preactivation(x)
        out = np.empty(self.shape[2])
        _output(self.W2, self.b2, pre, out)
        return out

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        """Outputs for the rows of a dense feature matrix, shape (n, out)."""
        hidden = np.maximum(X @ self.W1.T + self.b1, 0.0)
        return hidden @ self.W2.T + self.b2

    def add_gradient(self, x, head: int, out: np.ndarray, scale: float = 1.0) -> float:
        """``out += scale * grad_w output[head]``; returns output[head].

        The ReLU derivative at exactly zero is taken as 0.
        """
        n_in, n_h, n_out = self.shape
        if not 0 <= head < n_out:
            raise IndexError(f"head {head} out of range for {n_out} outputs")
        pre = self.preactivation(x)
        active = pre > 0.0
        hidden = np.where(active, pre, 0.0)
        value = float(self.W2[head] @ hidden + self.b2[head])
        dpre = np.where(active, self.W2[head], 0.0) * scale
        gW1 = out[self._slices["W1"]].reshape(n_h, n_in)
        if isinstance(x, SparseBinary):
            gW1[:, x.indices] += dpre[:, None]
        else:
            gW1 += np.outer(dpre, x)
        out[self._slices["b1"]] += dpre
        gW2 = out[self._slices["W2"]].reshape(n_out, n_h)
        gW2[head] += scale * hidden
        out[self._slices["b2"].start + head] += scale
        return value

    def gradient(self, x, head: int = 0) -> np.ndarray:
        g = np.zeros(self.num_params())
        self.add_gradient(x, head, g)
        return g

    def fused_update(self, x, head: int, target: float, alpha: float, threshold: float):
        """One semi-gradient step toward ``target`` without materializing the
        gradient.  Returns (delta, value, factors); ``factors`` rebuild the
        pre-update gradient through :meth:`gradient_from_factors`."""
        if not 0 <= head < self.shape[2]:
            raise IndexError(f"head {head} out of range for {self.shape[2]} outputs")
        pre = self.preactivation(x)
        dpre = np.empty_like(pre)
        hidden = np.empty_like(pre)
        if isinstance(x, SparseBinary):
            args = (_NO_X, x.indices, False)
        else:
            args = (np.asarray(x, dtype=float), _NO_IDX, True)
        delta, value = _semi_gradient(
            self.W1, self.b1, self.W2, self.b2, pre, head, target, alpha, threshold, *args, dpre, hidden
        )
        return delta, value, (dpre, hidden)

    def gradient_from_factors(self, x, head: int, factors) -> np.ndarray:
        n_in, n_h, n_out = self.shape
        dpre, hidden = factors
        g = np.zeros(self.num_params())
        gW1 = g[self._slices["W1"]].reshape(n_h, n_in)
        if isinstance(x, SparseBinary):
            gW1[:, x.indices] = dpre[:, None]
        else:
            gW1[:] = np.outer(dpre, x)
        g[self._slices["b1"]] = dpre
        g[self._slices["W2"].start + head * n_h : self._slices["W2"].start + (head + 1) * n_h] = hidden
        g[self._slices["b2"].start + head] = 1.0
        return g

    @staticmethod
    def factored_norm_sq(x, factors) -> float:
        dpre, hidden = factors
        xx = float(len(x.indices)) if isinstance(x, SparseBinary) else float(np.dot(x, x))
        dd = float(dpre @ dpre)
        return dd * xx + dd + float(hidden @ hidden) + 1.0

    def node_response(self, node: int, x) -> float:
        if not 0 <= node < self.shape[1]:
            raise IndexError(f"node {node} out of range for {self.shape[1]} hidden units")
        _check_input(x, self.shape[0])
        if isinstance(x, SparseBinary):
            pre = self.W1[node, x.indices].sum() + self.b1[node]
        else:
            pre = self.W1[node] @ x + self.b1[node]
        return max(float(pre), 0.0)


class LinearModel:
    """``outputs = W @ features``; no bias term."""

    kind = "linear"

    def __init__(self, n_in: int, n_out: int, w: np.ndarray | None = None):
        self.shape = (n_in, n_out)
        n = n_in * n_out
        self.w = np.zeros(n) if w is None else np.array(w, dtype=float)
        if self.w.shape != (n,):
            raise DimensionError(f"parameter vector must have length {n}")
        self.W = self.w.reshape(n_out, n_in)

    def num_params(self) -> int:
        return self.shape[0] * self.shape[1]

    def copy(self) -> "LinearModel":
        return LinearModel(*self.shape, w=self.w.copy())

    def forward(self, x):
        _check_input(x, self.shape[0])
        if isinstance(x, SparseBinary):
            return self.W[:, x.indices].sum(axis=1), None
        return self.W @ x, None

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def add_gradient(self, x, head: int, out: np.ndarray, scale: float = 1.0) -> float:
        n_in, n_out = self.shape
        if not 0 <= head < n_out:
            raise IndexError(f"head {head} out of range for {n_out} outputs")
        _check_input(x, n_in)
        row = out[head * n_in : (head + 1) * n_in]
        if isinstance(x, SparseBinary):
            row[x.indices] += scale
            return float(self.W[head, x.indices].sum())
        row += scale * np.asarray(x)
        return float(self.W[head] @ x)

    def gradient(self, x, head: int = 0) -> np.ndarray:
        g = np.zeros(self.num_params())
        self.add_gradient(x, head, g)
        return g

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T

    def fused_update(self, x, head: int, target: float, alpha: float, threshold: float):
        n_in, n_out = self.shape
        if not 0 <= head < n_out:
            raise IndexError(f"head {head} out of range for {n_out} outputs")
        _check_input(x, n_in)
        row = self.W[head]
        sparse = isinstance(x, SparseBinary)
        value = float(row[x.indices].sum()) if sparse else float(row @ x)
        delta = target - value
        if np.isfinite(delta) and abs(delta) <= threshold and alpha * delta != 0.0:
            if sparse:
                row[x.indices] += alpha * delta
            else:
                row += (alpha * delta) * np.asarray(x)
        return delta, value, None

    def gradient_from_factors(self, x, head: int, factors) -> np.ndarray:
        return self.gradient(x, head)

    @staticmethod
    def factored_norm_sq(x, factors) -> float:
        return float(len(x.indices)) if isinstance(x, SparseBinary) else float(np.dot(x, x))


def init_relu_net(n_in: int, n_hidden: int, n_out: int, spec: InitSpec) -> ReluNet:
    """Gaussian init; W1 columns listed in ``spec.upward_dims`` are made nonnegative."""
    if any(not 0 <= d < n_in for d in spec.upward_dims):
        raise ValueError("upward_dims must index input features")
    rng = np.random.default_rng(spec.seed)
    net = ReluNet(n_in, n_hidden, n_out)
    net.W1[:] = rng.normal(0.0, spec.weight_std, size=net.W1.shape)
    net.b1[:] = rng.normal(0.0, spec.bias_std, size=net.b1.shape)
    net.W2[:] = rng.normal(0.0, spec.weight_std, size=net.W2.shape)
    net.b2[:] = rng.normal(0.0, spec.bias_std, size=net.b2.shape)
    if spec.upward_dims:
        cols = list(spec.upward_dims)
        net.W1[:, cols] = np.abs(net.W1[:, cols])
    return net


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, model) -> None:
    np.savez(path, kind=model.kind, shape=np.asarray(model.shape), w=model.w)


def load_checkpoint(path):
    with np.load(path) as data:
        kind = str(data["kind"])
        shape = [int(v) for v in data["shape"]]
        w = data["w"]
    if kind == "relu_net":
        return ReluNet(*shape, w=w)
    if kind == "linear":
        return LinearModel(*shape, w=w)
    raise ValueError(f"unknown checkpoint kind {kind!r}")
