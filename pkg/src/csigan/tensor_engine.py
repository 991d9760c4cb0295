"""Differentiable 1-D primitives with hand-written backward passes.

The public functional ops take ``(slices, width)`` arrays, batches
``(batch, slices, width)`` or FeatureMaps; flattening one sample in C order gives
the stacked-column layout ``[v_1; v_2; ...]`` where ``v_h`` is the width-long
column of slice ``h``.  Layers work channels-last, ``(batch, width, slices)``,
so that every tap of a kernel bank is one contiguous matmul.

Kernel banks are stored as ``(K, F, D)``: ``kernels[k, j, d]`` is tap ``j`` of
kernel ``k`` on input slice ``d``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

DTYPE = np.float64
PROB_CLAMP = 1e-7
LEAKY_ALPHA = 0.2


class ConfigurationError(ValueError):
    """Layer or tensor shapes that cannot work together."""


class UsageError(RuntimeError):
    """API misuse, e.g. backward before forward."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class FeatureMap:
    """A width x slices activation volume stored as stacked slice columns."""

    width: int
    slices: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=DTYPE).reshape(-1)
        if self.width < 1 or self.slices < 1:
            raise ConfigurationError(f"bad feature map shape {self.width}x{self.slices}")
        if self.data.size != self.width * self.slices:
            raise ConfigurationError(
                f"data length {self.data.size} != width*slices {self.width * self.slices}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ConfigurationError("feature map contains non-finite values")

    @classmethod
    def from_array(cls, arr) -> "FeatureMap":
        arr = np.asarray(arr, dtype=DTYPE)
        if arr.ndim == 1:
            arr = arr[None, :]
        slices, width = arr.shape
        return cls(width=width, slices=slices, data=arr.reshape(-1))

    def as_array(self) -> np.ndarray:
        """``(slices, width)`` view."""
        return self.data.reshape(self.slices, self.width)

    def slice(self, h: int) -> np.ndarray:
        return self.as_array()[h]


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=DTYPE)
        self.bias = np.asarray(self.bias, dtype=DTYPE).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.bias.size:
            raise ConfigurationError(
                f"dense weights {self.weights.shape} inconsistent with bias {self.bias.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class ConvKernelBank:
    kernels: np.ndarray  # (K, F, D)
    biases: np.ndarray  # (K,)
    stride: int = 1

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=DTYPE)
        self.biases = np.asarray(self.biases, dtype=DTYPE).reshape(-1)
        if self.kernels.ndim != 3 or min(self.kernels.shape) < 1:
            raise ConfigurationError(f"kernel bank must be (K, F, D), got {self.kernels.shape}")
        if self.biases.size != self.kernels.shape[0]:
            raise ConfigurationError("one bias per kernel required")
        if self.stride != 1:
            raise ConfigurationError("only stride 1 is supported")

    @property
    def n_kernels(self) -> int:
        return self.kernels.shape[0]

    @property
    def size(self) -> int:
        return self.kernels.shape[1]

    @property
    def depth(self) -> int:
        return self.kernels.shape[2]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"kernels": self.kernels, "biases": self.biases}

    def adjoint_bank(self) -> "ConvKernelBank":
        """Swap kernel and depth axes (zero biases): the bank whose deconvolution
        is the adjoint of this bank's convolution."""
        k = np.ascontiguousarray(self.kernels.transpose(2, 1, 0))
        return ConvKernelBank(k, np.zeros(k.shape[0]), self.stride)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1) or self.epsilon <= 0:
            raise ConfigurationError(
                f"invalid Adam hyperparameters lr={self.lr} beta1={self.beta1} "
                f"beta2={self.beta2} epsilon={self.epsilon}"
            )
        if self.t < 0:
            raise ConfigurationError("Adam step counter must be non-negative")

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr=2e-4, beta1=0.5, beta2=0.999, epsilon=1e-8):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


# ---------------------------------------------------------------------------
# Functional forward ops
# ---------------------------------------------------------------------------


def conv_output_width(width: int, size: int, stride: int = 1) -> int:
    return (width - size) // stride + 1


def deconv_output_width(width: int, size: int, stride: int = 1, crop: int = 0) -> int:
    return stride * (width - 1) + size - 2 * crop


def dense_forward(x, p: DenseParams) -> np.ndarray:
    """``W x + b`` for a vector or a ``(batch, in)`` matrix."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != p.in_dim:
        raise ConfigurationError(f"dense input length {x.shape[-1]} != in-dim {p.in_dim}")
    return x @ p.weights.T + p.bias


def _as_batch(a) -> tuple[np.ndarray, bool]:
    """Public ``(slices, width)`` / ``(N, slices, width)`` input -> internal ``(N, width, slices)``."""
    if isinstance(a, FeatureMap):
        return a.as_array().T[None], True
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim == 2:
        return a.T[None], True
    if a.ndim != 3:
        raise ConfigurationError(f"expected (batch, slices, width) array, got shape {a.shape}")
    return a.transpose(0, 2, 1), False


def _from_internal(out: np.ndarray, single: bool, like_featuremap: bool):
    out = np.ascontiguousarray(out.transpose(0, 2, 1))
    if not single:
        return out
    if like_featuremap:
        return FeatureMap.from_array(out[0])
    return out[0]


def _taps(kernels: np.ndarray) -> list[np.ndarray]:
    """``(K, F, D)`` bank -> ``F`` matrices of shape ``(D, K)``, one per tap."""
    return [kernels[:, j, :].T for j in range(kernels.shape[1])]


# Both kernels below work on the batch flattened to ``(N*W, D)`` rows so every
# tap is a single GEMM on a contiguous row range.  Rows that straddle two
# samples only ever touch discarded outputs or zero padding.


def _conv_internal(x: np.ndarray, kernels: np.ndarray, biases: np.ndarray) -> np.ndarray:
    n, w, d = x.shape
    k, f, _ = kernels.shape
    wout = conv_output_width(w, f)
    rows = n * w - (f - 1)
    flat = x.reshape(n * w, d)
    full = np.zeros((n * w, k), dtype=DTYPE)
    acc = full[:rows]
    for j, tap in enumerate(_taps(kernels)):
        acc += flat[j : j + rows] @ tap
    return full.reshape(n, w, k)[:, :wout] + biases


def _deconv_internal(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Uncropped, bias-free transposed convolution ``(N, W+F-1, K)``."""
    n, w, d = x.shape
    k, f, _ = kernels.shape
    wp = w + f - 1
    flat = np.zeros((n, wp, d), dtype=DTYPE)
    flat[:, :w] = x
    flat = flat.reshape(n * wp, d)
    out = np.zeros((n * wp, k), dtype=DTYPE)
    for j, tap in enumerate(_taps(kernels)):
        out[j:] += flat[: n * wp - j] @ tap
    return out.reshape(n, wp, k)


def _check_depth(d: int, k: "ConvKernelBank"):
    if d != k.depth:
        raise ConfigurationError(f"input has {d} slices, kernels expect depth {k.depth}")


def conv1d_forward(a, k: ConvKernelBank):
    """Valid cross-correlation.  ``out[k, i] = sum_{d,j} kernels[k, j, d] a[d, i + j] + b[k]``.

    Accepts a FeatureMap, a ``(slices, width)`` array or a batch ``(N, slices, width)``
    and answers in the same form.
    """
    x, single = _as_batch(a)
    _check_depth(x.shape[2], k)
    if x.shape[1] < k.size:
        raise ConfigurationError(f"input width {x.shape[1]} smaller than kernel size {k.size}")
    out = _conv_internal(np.ascontiguousarray(x), k.kernels, k.biases)
    return _from_internal(out, single, isinstance(a, FeatureMap))


def deconv1d_forward(v, k: ConvKernelBank, crop: int = 0):
    """Transposed convolution: ``out[k, i + j] += kernels[k, j, d] v[d, i]``, then
    ``crop`` positions are dropped from each end and the bias is added."""
    x, single = _as_batch(v)
    _check_depth(x.shape[2], k)
    if crop < 0:
        raise ConfigurationError("crop must be non-negative")
    full = deconv_output_width(x.shape[1], k.size)
    if full - 2 * crop < 1:
        raise ConfigurationError(f"crop {crop} leaves no output (full width {full})")
    out = _deconv_internal(np.ascontiguousarray(x), k.kernels)[:, crop : full - crop] + k.biases
    return _from_internal(out, single, isinstance(v, FeatureMap))


# ---------------------------------------------------------------------------
# Toeplitz oracles
# ---------------------------------------------------------------------------


def conv_toeplitz(kernel_taps: np.ndarray, in_width: int) -> np.ndarray:
    """Banded ``(Wout, Win)`` matrix ``W_{k,d}``: row ``i`` holds the taps at
    columns ``i .. i+F-1``."""
    f = len(kernel_taps)
    wout = conv_output_width(in_width, f)
    mat = np.zeros((wout, in_width), dtype=DTYPE)
    for i in range(wout):
        mat[i, i : i + f] = kernel_taps
    return mat


def deconv_toeplitz(kernel_taps: np.ndarray, in_width: int) -> np.ndarray:
    """``T_{k,d}`` with shape ``(Win, Wout)``; the deconvolution applies its transpose."""
    f = len(kernel_taps)
    mat = np.zeros((in_width, in_width + f - 1), dtype=DTYPE)
    for i in range(in_width):
        mat[i, i : i + f] = kernel_taps
    return mat


def conv_matrix_full(k: ConvKernelBank, in_width: int) -> np.ndarray:
    """Block matrix ``[[W_{k,d}]]`` acting on the stacked-column input."""
    return np.block(
        [[conv_toeplitz(k.kernels[kk, :, d], in_width) for d in range(k.depth)] for kk in range(k.n_kernels)]
    )


def deconv_matrix_full(k: ConvKernelBank, in_width: int, crop: int = 0) -> np.ndarray:
    """Block matrix ``[[T_{k,d}^T]]`` with rows cropped; acts on stacked columns."""
    full = deconv_output_width(in_width, k.size)
    keep = slice(crop, full - crop)
    return np.block(
        [
            [deconv_toeplitz(k.kernels[kk, :, d], in_width).T[keep] for d in range(k.depth)]
            for kk in range(k.n_kernels)
        ]
    )


# ---------------------------------------------------------------------------
# Activations and heads
# ---------------------------------------------------------------------------


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, alpha: float = LEAKY_ALPHA):
    x = np.asarray(x, dtype=DTYPE)
    if 0 <= alpha <= 1:
        return np.maximum(x, alpha * x)
    return np.where(x > 0, x, alpha * x)


def tanh_act(x):
    return np.tanh(x)


def logsumexp(c, axis=-1) -> np.ndarray:
    c = np.asarray(c, dtype=DTYPE)
    cmax = np.max(c, axis=axis, keepdims=True)
    return np.squeeze(cmax, axis=axis) + np.log(np.sum(np.exp(c - cmax), axis=axis))


def softmax(c, axis=-1) -> np.ndarray:
    c = np.asarray(c, dtype=DTYPE)
    e = np.exp(c - np.max(c, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def lambda_real_prob(c, axis=-1):
    """``Z / (Z + 1)`` with ``Z = sum exp(c_m)``, i.e. the logistic of logsumexp."""
    lse = logsumexp(c, axis=axis)
    return _sigmoid(lse)


def _sigmoid(s):
    s = np.asarray(s, dtype=DTYPE)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else out[()]


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _clamp(p):
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def categorical_ce(y_pred, label) -> float:
    """``-log y_pred[label]`` on clamped probabilities (label is a 0-based index)."""
    y_pred = np.asarray(y_pred, dtype=DTYPE)
    return float(-np.log(_clamp(y_pred[label])))


def binary_ce(q, target) -> float:
    q = _clamp(float(q))
    return float(-(target * np.log(q) + (1 - target) * np.log(1 - q)))


# In the two combined losses below the clamp bounds the reported loss on both
# sides, but only the confident-correct side (probability of the target above
# 1 - PROB_CLAMP) has its gradient cut.  On the confident-wrong side the exact
# log-domain gradient passes through; a zero there can never be recovered from.


def softmax_ce_with_grad(c: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean clamped categorical CE of ``softmax(c)`` and its gradient w.r.t. ``c``.

    ``labels`` are 0-based.
    """
    c = np.atleast_2d(np.asarray(c, dtype=DTYPE))
    labels = np.asarray(labels).reshape(-1)
    n = c.shape[0]
    y = softmax(c)
    p = y[np.arange(n), labels]
    loss = float(np.mean(-np.log(_clamp(p))))
    onehot = np.zeros_like(y)
    onehot[np.arange(n), labels] = 1.0
    live = (p < 1.0 - PROB_CLAMP).astype(DTYPE)
    grad = (y - onehot) * live[:, None] / n
    return loss, grad


def lambda_bce_with_grad(c: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean clamped binary CE of ``q = lambda(c)`` against real(1)/fake(0) targets.

    ``dL/dc = (q - t) * softmax(c)``.
    """
    c = np.atleast_2d(np.asarray(c, dtype=DTYPE))
    n = c.shape[0]
    t = np.broadcast_to(np.asarray(targets, dtype=DTYPE), (n,))
    lse = logsumexp(c)
    q = _sigmoid(lse)
    # probability given to the correct outcome, from log-domain to avoid 1 - q cancellation
    p_target = np.where(t > 0.5, q, _sigmoid(-lse))
    loss = float(np.mean(-np.log(_clamp(p_target))))
    live = (p_target < 1.0 - PROB_CLAMP).astype(DTYPE)
    grad = ((q - t) * live / n)[:, None] * softmax(c)
    return loss, grad


# ---------------------------------------------------------------------------
# Layers with cached forward state
# ---------------------------------------------------------------------------


class Layer:
    """Base layer.  ``params`` and ``grads`` are parallel dicts of arrays."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray, need_input: bool = True, need_params: bool = True):
        """Accumulate parameter gradients and return the input gradient.

        ``need_input=False`` may return None; ``need_params=False`` leaves
        ``grads`` untouched.
        """
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise UsageError(f"{type(self).__name__}.backward called without a cached forward pass")
        cache, self._cache = self._cache, None
        return cache

    def zero_grad(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)


class Dense(Layer):
    def __init__(self, p: DenseParams):
        super().__init__()
        self.p = p
        self.params = p.arrays()
        self.zero_grad()

    def forward(self, x):
        x = np.atleast_2d(x)
        out = dense_forward(x, self.p)
        self._cache = x
        return out

    def backward(self, grad, need_input=True, need_params=True):
        x = self._cached()
        if need_params:
            self.grads["weights"] += grad.T @ x
            self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.p.weights if need_input else None


class Conv1D(Layer):
    """Convolution layer on channels-last batches ``(N, width, slices)``."""

    def __init__(self, bank: ConvKernelBank):
        super().__init__()
        self.bank = bank
        self.params = bank.arrays()
        self.zero_grad()

    def forward(self, x):
        _check_depth(x.shape[2], self.bank)
        x = np.ascontiguousarray(x)
        self._cache = x
        return _conv_internal(x, self.bank.kernels, self.bank.biases)

    def backward(self, grad, need_input=True, need_params=True):
        x = self._cached()
        n, w, d = x.shape
        k, f, _ = self.bank.kernels.shape
        wout = grad.shape[1]
        rows = n * w - (f - 1)
        g = np.zeros((n, w, k), dtype=DTYPE)
        g[:, :wout] = grad
        g = g.reshape(n * w, k)[:rows]
        if need_params:
            self.grads["biases"] += grad.sum(axis=(0, 1))
            flat = x.reshape(n * w, d)
            dk = self.grads["kernels"]
            for j in range(f):
                dk[:, j, :] += g.T @ flat[j : j + rows]
        if not need_input:
            return None
        dx = np.zeros((n * w, d), dtype=DTYPE)
        for j, tap in enumerate(_taps(self.bank.kernels)):
            dx[j : j + rows] += g @ tap.T
        return dx.reshape(n, w, d)


class Deconv1D(Layer):
    """Transposed convolution with optional symmetric crop, channels-last."""

    def __init__(self, bank: ConvKernelBank, crop: int = 0):
        super().__init__()
        self.bank = bank
        self.crop = crop
        self.params = bank.arrays()
        self.zero_grad()

    def forward(self, x):
        _check_depth(x.shape[2], self.bank)
        x = np.ascontiguousarray(x)
        full = deconv_output_width(x.shape[1], self.bank.size)
        if full - 2 * self.crop < 1:
            raise ConfigurationError(f"crop {self.crop} leaves no output (full width {full})")
        self._cache = x
        return _deconv_internal(x, self.bank.kernels)[:, self.crop : full - self.crop] + self.bank.biases

    def backward(self, grad, need_input=True, need_params=True):
        x = self._cached()
        n, w, d = x.shape
        k, f, _ = self.bank.kernels.shape
        wp = w + f - 1
        m = n * wp
        if need_params:
            self.grads["biases"] += grad.sum(axis=(0, 1))
        if self.crop:
            grad = np.pad(grad, ((0, 0), (self.crop, self.crop), (0, 0)))
        g = np.ascontiguousarray(grad).reshape(m, k)
        if need_params:
            xp = np.zeros((n, wp, d), dtype=DTYPE)
            xp[:, :w] = x
            xp = xp.reshape(m, d)
            dk = self.grads["kernels"]
            for j in range(f):
                dk[:, j, :] += g[j:].T @ xp[: m - j]
        if not need_input:
            return None
        dx = np.zeros((m, d), dtype=DTYPE)
        for j, tap in enumerate(_taps(self.bank.kernels)):
            dx[: m - j] += g[j:] @ tap.T
        return np.ascontiguousarray(dx.reshape(n, wp, d)[:, :w])


class Activation(Layer):
    def __init__(self, kind: str, alpha: float = LEAKY_ALPHA):
        super().__init__()
        if kind not in ("relu", "leaky_relu", "tanh"):
            raise ConfigurationError(f"unknown activation {kind!r}")
        self.kind = kind
        self.alpha = alpha

    def forward(self, x):
        if self.kind == "relu":
            out = relu(x)
            self._cache = x > 0
        elif self.kind == "leaky_relu":
            out = leaky_relu(x, self.alpha)
            self._cache = x > 0
        else:
            out = np.tanh(x)
            self._cache = out
        return out

    def backward(self, grad, need_input=True, need_params=True):
        c = self._cached()
        if self.kind == "relu":
            return grad * c
        if self.kind == "leaky_relu":
            return np.where(c, grad, self.alpha * grad)
        return grad * (1.0 - c * c)


class Reshape(Layer):
    def __init__(self, shape: tuple[int, ...]):
        super().__init__()
        self.shape = shape

    def forward(self, x):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad, need_input=True, need_params=True):
        return grad.reshape(self._cached())


class Unstack(Layer):
    """Stacked-column vectors ``(N, slices*width)`` -> channels-last ``(N, width, slices)``."""

    def __init__(self, slices: int, width: int):
        super().__init__()
        self.slices, self.width = slices, width

    def forward(self, x):
        self._cache = True
        return np.ascontiguousarray(x.reshape(x.shape[0], self.slices, self.width).transpose(0, 2, 1))

    def backward(self, grad, need_input=True, need_params=True):
        self._cached()
        return grad.transpose(0, 2, 1).reshape(grad.shape[0], -1)


class Stack(Layer):
    """Channels-last ``(N, width, slices)`` -> stacked-column vectors ``(N, slices*width)``."""

    def forward(self, x):
        self._cache = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(x.shape[0], -1)

    def backward(self, grad, need_input=True, need_params=True):
        n, w, c = self._cached()
        return np.ascontiguousarray(grad.reshape(n, c, w).transpose(0, 2, 1))


class Sequential:
    """Ordered layer stack with a flat parameter list for the optimizer."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad, need_input: bool = True, need_params: bool = True):
        """Backpropagate; ``need_input=False`` skips the gradient w.r.t. the network input."""
        for i in range(len(self.layers) - 1, -1, -1):
            grad = self.layers[i].backward(grad, need_input=need_input or i > 0, need_params=need_params)
        return grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def param_list(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params.values()]

    def grad_list(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in layer.params]

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                out[f"{i}.{k}"] = p
        return out


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update applied in place.

    A non-finite gradient aborts the step before anything is modified.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigurationError("params, grads and Adam moments differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ConfigurationError(f"shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise FloatingPointError(
                f"non-finite gradient in parameter {i} (shape {g.shape}, {bad} bad entries); "
                f"Adam step {state.t + 1} aborted"
            )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[], float],
    arrays: list[np.ndarray],
    analytic: list[np.ndarray],
    h: float = 1e-5,
    max_coords: int | None = 200,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
) -> float:
    """Worst relative error between analytic gradients and central differences.

    ``f`` evaluates the scalar objective from the current contents of ``arrays``,
    which are perturbed in place and restored.  Arrays larger than ``max_coords``
    are checked on a random subset of coordinates.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for arr, ana in zip(arrays, analytic):
        flat = arr.reshape(-1)
        ana = np.asarray(ana).reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        else:
            idx = np.arange(flat.size)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            err = abs(num - ana[i]) / max(abs(num), abs(ana[i]), floor)
            worst = max(worst, err)
    return worst
