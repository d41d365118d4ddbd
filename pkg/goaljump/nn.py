"""
A small numpy network library with hand-written reverse-mode gradients.

Parameters are stored as float32; forward and backward passes compute in float64. Every layer
caches what its backward pass needs during forward, and backward accumulates into ``grads``.
Sequences are laid out as (batch, time, channels).
"""
import math
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import exceptions

PARAM_DTYPE = np.float32


def orthogonal(rng: np.random.Generator, shape: Tuple[int, int], gain: float) -> np.ndarray:
    """An orthogonal (in, out) matrix scaled by ``gain``."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(PARAM_DTYPE)


class Module:
    """
    Base class. ``params`` and ``grads`` hold this module's own tensors; containers list their
    children in ``children``.
    """

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.children: List[Tuple[str, "Module"]] = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def named_tensors(self, prefix: str = "") -> Iterator[Tuple[str, "Module", str]]:
        """(dotted name, owning module, key) for every parameter, depth first."""
        for key in self.params:
            yield f"{prefix}{key}", self, key
        for name, child in self.children:
            yield from child.named_tensors(f"{prefix}{name}/")

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {name: module.params[key].copy() for name, module, key in self.named_tensors(prefix)}

    def load_state_dict(self, tensors: Dict[str, np.ndarray], prefix: str = ""):
        for name, module, key in self.named_tensors(prefix):
            if name not in tensors:
                raise exceptions.ArchitectureError(f"missing tensor {name}")
            value = np.asarray(tensors[name])
            if value.shape != module.params[key].shape:
                raise exceptions.ArchitectureError(f"tensor {name} has shape {value.shape}, "
                                                   f"expected {module.params[key].shape}")
            module.params[key] = value.astype(PARAM_DTYPE)

    def zero_grad(self):
        for _, module, key in self.named_tensors():
            module.grads[key] = np.zeros(module.params[key].shape)

    def clear_cache(self):
        self._cache = None
        for _, child in self.children:
            child.clear_cache()

    def n_parameters(self) -> int:
        return sum(module.params[key].size for _, module, key in self.named_tensors())

    def _accumulate(self, key: str, grad: np.ndarray):
        if key in self.grads:
            self.grads[key] = self.grads[key] + grad
        else:
            self.grads[key] = grad

    def _take_cache(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise exceptions.BackwardError(type(self).__name__)
        self._cache = None
        return cache


class Dense(Module):
    """
    Affine layer ``x @ W + b``.

    :param n_in: Input features.
    :param n_out: Output features.
    :param rng: Generator for the orthogonal initialization.
    :param gain: Scale of the initial weights.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.params["weight"] = orthogonal(rng, (n_in, n_out), gain)
        self.params["bias"] = np.zeros(n_out, dtype=PARAM_DTYPE)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise exceptions.DimensionError(f"Dense expects (batch, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.params["weight"].astype(np.float64) + self.params["bias"]

    def backward(self, grad):
        x = self._take_cache()
        self._accumulate("weight", x.T @ grad)
        self._accumulate("bias", grad.sum(axis=0))
        return grad @ self.params["weight"].astype(np.float64).T


class Conv1d(Module):
    """
    1D cross-correlation over the time axis of (batch, time, channels) input.

    Output length is ``(time + 2 * padding - kernel) // stride + 1``.

    :param channels: Input channels.
    :param filters: Output channels.
    :param kernel: Kernel length.
    :param stride: Step between windows.
    :param padding: Zeros added at both ends of the time axis.
    """

    def __init__(self, channels: int, filters: int, kernel: int, stride: int, rng: np.random.Generator,
                 gain: float = math.sqrt(2.0), padding: int = 0):
        super().__init__()
        self.channels = channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        flat = orthogonal(rng, (kernel * channels, filters), gain)
        self.params["weight"] = np.ascontiguousarray(flat.T.reshape(filters, kernel, channels))
        self.params["bias"] = np.zeros(filters, dtype=PARAM_DTYPE)

    def output_length(self, length: int) -> int:
        padded = length + 2 * self.padding
        if padded < self.kernel:
            raise exceptions.DimensionError(f"a sequence of {length} steps is shorter than the kernel {self.kernel}")
        return (padded - self.kernel) // self.stride + 1

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise exceptions.DimensionError(f"Conv1d expects (batch, time, {self.channels}), got {x.shape}")
        length = self.output_length(x.shape[1])
        if self.padding:
            x = np.pad(x, ((0, 0), (self.padding, self.padding), (0, 0)))
        # (batch, out_time, channels, kernel)
        windows = sliding_window_view(x, self.kernel, axis=1)[:, ::self.stride][:, :length]
        self._cache = (x.shape, windows)
        return np.einsum("blck,fkc->blf", windows, self.params["weight"].astype(np.float64)) + self.params["bias"]

    def backward(self, grad):
        shape, windows = self._take_cache()
        weight = self.params["weight"].astype(np.float64)
        self._accumulate("weight", np.einsum("blf,blck->fkc", grad, windows))
        self._accumulate("bias", grad.sum(axis=(0, 1)))
        dx = np.zeros(shape)
        length = grad.shape[1]
        end = self.stride * (length - 1) + 1
        for k in range(self.kernel):
            dx[:, k:k + end:self.stride] += grad @ weight[:, k, :]
        if self.padding:
            dx = dx[:, self.padding:-self.padding]
        return dx


class Tanh(Module):

    def forward(self, x):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._take_cache()
        return grad * (1.0 - y * y)


class ReLU(Module):

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad):
        return grad * self._take_cache()


class Identity(Module):

    def forward(self, x):
        self._cache = True
        return np.asarray(x, dtype=np.float64)

    def backward(self, grad):
        self._take_cache()
        return grad


class Flatten(Module):
    """(batch, ...) to (batch, features)."""

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


class Sequential(Module):

    def __init__(self, layers: Sequence[Module]):
        super().__init__()
        self.layers = list(layers)
        self.children = [(str(i), layer) for i, layer in enumerate(self.layers)]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def mlp(n_in: int, hidden: Sequence[int], n_out: int, rng: np.random.Generator, hidden_gain: float = math.sqrt(2.0),
        output_gain: float = 1.0, activation: Callable[[], Module] = Tanh) -> Sequential:
    """Dense layers with ``activation`` between them and a linear output."""
    layers: List[Module] = []
    width = n_in
    for h in hidden:
        layers += [Dense(width, h, rng, hidden_gain), activation()]
        width = h
    layers.append(Dense(width, n_out, rng, output_gain))
    return Sequential(layers)


class GaussianHead:
    """
    A diagonal Gaussian with a fixed, untrained standard deviation around the network mean.

    :param size: Action dimension.
    :param std: Standard deviation per dimension.
    """

    def __init__(self, size: int, std: float):
        self.size = size
        self.log_std = np.full(size, math.log(std))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample(self, mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return mean + self.std * rng.standard_normal(np.shape(mean))

    def log_prob(self, mean: np.ndarray, action: np.ndarray) -> np.ndarray:
        z = (np.asarray(action) - mean) / self.std
        return np.sum(-0.5 * z * z - self.log_std - 0.5 * math.log(2.0 * math.pi), axis=-1)

    def log_prob_grad(self, mean: np.ndarray, action: np.ndarray) -> np.ndarray:
        """d log_prob / d mean."""
        return (np.asarray(action) - mean) / self.std ** 2

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * math.log(2.0 * math.pi * math.e)))


class Adam:
    """
    Adam over a fixed list of (module, key) parameters. Moments are kept in float64.

    :param tensors: Parameters to update, as yielded by :meth:`Module.named_tensors`.
    :param lr: Learning rate.
    """

    def __init__(self, tensors: Sequence[Tuple[str, Module, str]], lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros(module.params[key].shape) for name, module, key in self.tensors}
        self.v = {name: np.zeros(module.params[key].shape) for name, module, key in self.tensors}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, module, key in self.tensors:
            g = module.grads.get(key)
            if g is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            step = self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            module.params[key] = (module.params[key].astype(np.float64) - step).astype(PARAM_DTYPE)


def global_norm(tensors: Sequence[Tuple[str, Module, str]]) -> float:
    total = 0.0
    for _, module, key in tensors:
        g = module.grads.get(key)
        if g is not None:
            total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_grad_norm(tensors: Sequence[Tuple[str, Module, str]], max_norm: float) -> float:
    """Scale the gradients so their global norm is at most ``max_norm``. Returns the norm before clipping."""
    norm = global_norm(tensors)
    if norm > max_norm:
        scale = max_norm / norm
        for _, module, key in tensors:
            if key in module.grads:
                module.grads[key] = module.grads[key] * scale
    return norm


def gradient_check(module: Module, x: np.ndarray, loss_weights: Optional[np.ndarray] = None, h: float = 1e-3,
                   entries: int = 8, seed: int = 0, forward: Optional[Callable] = None,
                   backward: Optional[Callable] = None) -> float:
    """
    Compare backprop against central differences for a linear probe loss ``sum(w * f(x))``.

    The actual float32 step sizes are used as the denominators, so the result is independent of
    parameter storage rounding.

    :param module: The network to check.
    :param x: Input batch.
    :param loss_weights: Probe ``w``, random if omitted.
    :param h: Finite-difference step.
    :param entries: Entries checked per parameter tensor.
    :param forward: Forward function override, ``module.forward`` by default.
    :param backward: Backward function override, ``module.backward`` by default.
    :return: The largest relative error over the checked entries.
    """
    forward = forward or module.forward
    backward = backward or module.backward
    rng = np.random.default_rng(seed)
    out = forward(x)
    w = rng.standard_normal(np.shape(out)) if loss_weights is None else np.asarray(loss_weights, dtype=np.float64)
    module.zero_grad()
    backward(w)

    def loss() -> float:
        return float(np.sum(w * forward(x)))

    worst = 0.0
    for _, owner, key in list(module.named_tensors()):
        p = owner.params[key]
        analytic = owner.grads[key]
        flat = p.reshape(-1)
        for index in rng.choice(flat.size, size=min(entries, flat.size), replace=False):
            original = flat[index]
            flat[index] = original + PARAM_DTYPE(h)
            plus_value = float(flat[index])
            plus = loss()
            flat[index] = original - PARAM_DTYPE(h)
            minus_value = float(flat[index])
            minus = loss()
            flat[index] = original
            numeric = (plus - minus) / (plus_value - minus_value)
            a = float(analytic.reshape(-1)[index])
            scale = max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, abs(a - numeric) / scale)
    module.clear_cache()
    return worst
