"""Symbolic forward model q(z_T | z_0, k) and the VIC-style skill discriminator.

The forward model predicts per-bit flip probabilities ``p_flip`` from
``[z_0, onehot(k)]``; the terminal-bit probability is
``alpha = (1 - z_0) * p_flip + z_0 * (1 - p_flip)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import boardgames as bg
from .neural import AdamState, Mlp, NonFiniteError, adam_step, log_sigmoid, sigmoid
from .sac import one_hot

PROB_EPS = 1e-7


def _as_batch(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z[None, :] if z.ndim == 1 else z


def flip_mixture(z0: np.ndarray, p_flip: np.ndarray) -> np.ndarray:
    return (1.0 - z0) * p_flip + z0 * (1.0 - p_flip)


class ForwardModel:
    def __init__(self, D: int, K: int, hidden=(256, 256), lr: float = 1e-3, rng=None, eps: float = PROB_EPS):
        self.D = D
        self.K = K
        self.eps = eps
        self.net = Mlp([D + K, *hidden, D], rng, head="sigmoid")
        self.opt = AdamState.for_params(self.net.params, lr)

    def _inputs(self, z0, k) -> np.ndarray:
        z0 = _as_batch(z0)
        k = np.broadcast_to(np.asarray(k), z0.shape[:1])
        return np.concatenate([z0, one_hot(k, self.K)], axis=1)

    def p_flip(self, z0, k) -> np.ndarray:
        return self.net(self._inputs(z0, k))

    def predict(self, z0, k) -> np.ndarray:
        """Bernoulli parameters of z_T, shape (B, D)."""
        z0b = _as_batch(z0)
        alpha = flip_mixture(z0b, self.p_flip(z0b, k))
        return alpha[0] if np.ndim(z0) == 1 else alpha

    def _clamped_log_prob(self, alpha: np.ndarray, zT: np.ndarray) -> np.ndarray:
        a = np.clip(alpha, self.eps, 1.0 - self.eps)
        return np.sum(zT * np.log(a) + (1.0 - zT) * np.log1p(-a), axis=-1)

    def log_prob(self, z0, k, zT) -> np.ndarray:
        """log q(z_T | z_0, k) with alpha clamped to [eps, 1 - eps]."""
        scalar = np.ndim(z0) == 1
        z0b, zTb = _as_batch(z0), _as_batch(zT)
        lp = self._clamped_log_prob(flip_mixture(z0b, self.p_flip(z0b, k)), zTb)
        return float(lp[0]) if scalar else lp

    def log_likelihoods(self, z0, zT) -> np.ndarray:
        """log q(z_T | z_0, k) for every skill, shape (B, K)."""
        z0b, zTb = _as_batch(z0), _as_batch(zT)
        B, K = len(z0b), self.K
        z0r = np.repeat(z0b, K, axis=0)
        zTr = np.repeat(zTb, K, axis=0)
        ks = np.tile(np.arange(K), B)
        lp = self._clamped_log_prob(flip_mixture(z0r, self.p_flip(z0r, ks)), zTr)
        return lp.reshape(B, K)

    def posterior(self, z0, zT) -> np.ndarray:
        """log q(k | z_0, z_T) under a uniform skill prior, shape (B, K)."""
        ll = self.log_likelihoods(z0, zT)
        return ll - logsumexp(ll, axis=1, keepdims=True)

    def successor(self, z0, k) -> np.ndarray:
        """Mode of q(. | z_0, k); a bit at exactly 0.5 keeps its current value."""
        z0b = _as_batch(z0)
        alpha = flip_mixture(z0b, self.p_flip(z0b, k))
        out = np.where(alpha > 0.5, 1, np.where(alpha < 0.5, 0, z0b)).astype(np.uint8)
        return out[0] if np.ndim(z0) == 1 else out

    def loss_and_grads(self, z0, k, zT):
        """Mean NLL over the batch and its parameter gradients.

        The likelihood of z_T equals that of the flip pattern ``z_0 xor z_T``
        under ``p_flip``, so the loss is taken straight from the logits; this
        keeps gradients alive where the clamped probabilities would saturate.
        """
        x = self._inputs(z0, k)
        flips = np.abs(_as_batch(zT) - _as_batch(z0))
        _, cache = self.net.forward(x)
        logits = cache.preacts[-1]
        n = len(x)
        nll = -np.sum(flips * log_sigmoid(logits) + (1.0 - flips) * log_sigmoid(-logits), axis=1)
        loss = float(np.mean(nll))
        grad_logits = (sigmoid(logits) - flips) / n
        grads, _ = self.net.backward(cache, grad_logits, through_head=False)
        return loss, grads

    def update(self, z0, k, zT) -> float:
        if len(_as_batch(z0)) == 0:
            raise ValueError("empty batch")
        loss, grads = self.loss_and_grads(z0, k, zT)
        if not np.isfinite(loss):
            raise NonFiniteError(f"forward model loss is {loss}")
        adam_step(self.net.params, grads, self.opt)
        return loss

    @property
    def networks(self) -> dict[str, Mlp]:
        return {"fm": self.net}

    @property
    def optimizers(self) -> dict[str, AdamState]:
        return {"fm": self.opt}


class SkillDiscriminator:
    """q(k | z_0, z_T) from ``[z_0, z_T, z_0 xor z_T]`` through a softmax."""

    def __init__(self, D: int, K: int, hidden=(256, 256), lr: float = 1e-3, rng=None):
        self.D = D
        self.K = K
        self.net = Mlp([3 * D, *hidden, K], rng)
        self.opt = AdamState.for_params(self.net.params, lr)

    @staticmethod
    def features(z0, zT) -> np.ndarray:
        z0b, zTb = _as_batch(z0), _as_batch(zT)
        return np.concatenate([z0b, zTb, np.abs(z0b - zTb)], axis=1)

    def posterior(self, z0, zT) -> np.ndarray:
        logits = self.net(self.features(z0, zT))
        return logits - logsumexp(logits, axis=1, keepdims=True)

    def loss_and_grads(self, z0, k, zT):
        logits, cache = self.net.forward(self.features(z0, zT))
        logp = logits - logsumexp(logits, axis=1, keepdims=True)
        k = np.asarray(k)
        n = len(logits)
        loss = float(-np.mean(logp[np.arange(n), k]))
        grad = (np.exp(logp) - one_hot(k, self.K)) / n
        grads, _ = self.net.backward(cache, grad)
        return loss, grads

    def update(self, z0, k, zT) -> float:
        loss, grads = self.loss_and_grads(z0, k, zT)
        if not np.isfinite(loss):
            raise NonFiniteError(f"discriminator loss is {loss}")
        adam_step(self.net.params, grads, self.opt)
        return loss

    @property
    def networks(self) -> dict[str, Mlp]:
        return {"disc": self.net}

    @property
    def optimizers(self) -> dict[str, AdamState]:
        return {"disc": self.opt}


class OracleForwardModel:
    """Deterministic model of true game moves: skill ``k`` is move ``k``.

    Every move acts on the symbolic vector as a fixed bit permutation followed
    by an XOR mask (LightsOut: identity and the push pattern; TileSwap: the
    field swap within each chip's row and no mask). Skills past the move count
    are no-ops.
    """

    def __init__(self, game: str, n: int = 5, K: Optional[int] = None):
        self.game = game
        self.n = n
        self.moves = bg.enumerate_moves(game, n)
        self.K = K if K is not None else len(self.moves)
        self.D = bg.symbolic_dim(game, n)
        perm = np.tile(np.arange(self.D), (self.K, 1))
        mask = np.zeros((self.K, self.D), dtype=np.uint8)
        zero = bg.to_symbolic(bg.goal_board(game, n))
        for k, move in enumerate(self.moves[: self.K]):
            if game == bg.LIGHTSOUT:
                mask[k] = bg.to_symbolic(bg.apply_move(bg.goal_board(game, n), move)) ^ zero
            else:
                a, b = move
                for chip in range(bg.NUM_TILES):
                    perm[k, chip * bg.NUM_TILES + a] = chip * bg.NUM_TILES + b
                    perm[k, chip * bg.NUM_TILES + b] = chip * bg.NUM_TILES + a
        self._perm = perm
        self._mask = mask

    def successor(self, z0, k) -> np.ndarray:
        z0b = _as_batch(z0).astype(np.uint8)
        ks = np.broadcast_to(np.asarray(k), z0b.shape[:1])
        out = np.take_along_axis(z0b, self._perm[ks], axis=1) ^ self._mask[ks]
        return out[0] if np.ndim(z0) == 1 else out
