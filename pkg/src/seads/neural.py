"""Small numpy MLPs with hand-written backprop, Adam, and a tanh-squashed Gaussian.

Everything is float64. Weights are stored as ``(fan_in, fan_out)`` so a batch
``x`` of shape ``(B, fan_in)`` maps through ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HEADS = ("linear", "sigmoid", "gaussian")
_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))


class NonFiniteError(FloatingPointError):
    pass


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return expit(x)


def softplus(x):
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    preacts: list  # affine output of each layer
    output: np.ndarray


class Mlp:
    """ReLU hidden layers followed by a linear, sigmoid or Gaussian head.

    The Gaussian head splits the final affine output into ``(mean, log_std)``
    halves and clamps ``log_std`` to ``[LOG_STD_MIN, LOG_STD_MAX]``.
    """

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None, head: str = "linear"):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if head == "gaussian" and sizes[-1] % 2:
            raise ValueError("gaussian head needs an even output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.params: list[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.params[0::2], self.params[1::2]))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.head = self.head
        other.params = [p.copy() for p in self.params]
        return other

    def load(self, params: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(self.params, params):
            if dst.shape != np.shape(src):
                raise ValueError(f"shape mismatch {dst.shape} vs {np.shape(src)}")
            dst[...] = src

    def _apply_head(self, z: np.ndarray) -> np.ndarray:
        if self.head == "sigmoid":
            return sigmoid(z)
        if self.head == "gaussian":
            m = z.shape[-1] // 2
            return np.concatenate([z[..., :m], np.clip(z[..., m:], LOG_STD_MIN, LOG_STD_MAX)], axis=-1)
        return z

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.sizes[0]}")
        inputs, preacts = [], []
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            inputs.append(h)
            z = h @ W + b
            preacts.append(z)
            h = relu(z) if i < n_layers - 1 else z
        out = self._apply_head(h)
        cache = ForwardCache(inputs, preacts, out)
        return (out[0] if squeeze else out), cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self,
        cache: Optional[ForwardCache],
        grad_out: np.ndarray,
        through_head: bool = True,
        need_params: bool = True,
    ) -> tuple[Optional[list[np.ndarray]], np.ndarray]:
        """Gradients of ``sum(output * grad_out)`` w.r.t. parameters and input.

        With ``through_head=False`` the upstream gradient is taken to be with
        respect to the final affine output (logits), skipping the head.
        """
        if cache is None:
            raise ValueError("backward needs the cache from a forward pass")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        z_last = cache.preacts[-1]
        if g.shape != z_last.shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {z_last.shape}")
        if through_head:
            if self.head == "sigmoid":
                s = cache.output if cache.output.ndim == 2 else cache.output[None, :]
                g = g * s * (1.0 - s)
            elif self.head == "gaussian":
                m = z_last.shape[-1] // 2
                g = g.copy()
                ls = z_last[:, m:]
                g[:, m:] *= (ls >= LOG_STD_MIN) & (ls <= LOG_STD_MAX)
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [None] * len(self.params) if need_params else None
        for i in reversed(range(n_layers)):
            if i < n_layers - 1:
                g = g * (cache.preacts[i] > 0)
            W = self.params[2 * i]
            if need_params:
                grads[2 * i] = cache.inputs[i].T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ W.T
        return grads, g


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in parameter {i}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --- squashed Gaussian -------------------------------------------------------


@dataclass
class SquashedSample:
    action: np.ndarray
    log_prob: np.ndarray
    pre_tanh: np.ndarray
    noise: np.ndarray
    std: np.ndarray


def squashed_gaussian(mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray) -> SquashedSample:
    """``tanh(mean + std * noise)`` with its log-density (change of variables included).

    ``log(1 - tanh(u)^2)`` is evaluated as ``2 (log 2 - u - softplus(-2u))``.
    """
    std = np.exp(log_std)
    u = mean + std * noise
    a = np.tanh(u)
    log_det = 2.0 * (_LOG_2 - u - softplus(-2.0 * u))
    logp = (-0.5 * noise**2 - log_std - 0.5 * _LOG_2PI - log_det).sum(axis=-1)
    return SquashedSample(a, logp, u, noise, std)


def squashed_gaussian_backward(
    s: SquashedSample, grad_action: np.ndarray, grad_logp: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterised gradients w.r.t. (mean, log_std), noise held fixed."""
    grad_logp = np.asarray(grad_logp)[..., None]
    du = grad_action * (1.0 - s.action**2) + grad_logp * 2.0 * s.action
    d_mean = du
    d_log_std = du * s.std * s.noise - grad_logp
    return d_mean, d_log_std


def gaussian_sample(
    mean: np.ndarray,
    log_std: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    deterministic: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a squashed-Gaussian action in (-1, 1) and its log-probability."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    noise = np.zeros_like(mean) if deterministic else rng.standard_normal(mean.shape)
    s = squashed_gaussian(mean, log_std, noise)
    return s.action, s.log_prob


def check_finite(value, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite {what}: {value}")
