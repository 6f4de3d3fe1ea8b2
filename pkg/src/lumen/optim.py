"""Optimizers: adaptive-moment baseline and the factored-second-moment one.

Both operate on a name -> Tensor parameter map and a matching name ->
ndarray gradient map, and are deterministic functions of (state, params,
grads).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def grad_global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Rescale all gradients so their joint L2 norm is at most max_norm."""
    norm = grad_global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}


def _check_finite(grads: dict[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for parameter '{name}'")


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        _check_finite(grads)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = p.data - self.lr * update


class Adafactor:
    """Factored second-moment optimizer.

    Matrices keep one row accumulator R (mean over columns of g^2) and one
    column accumulator C (mean over rows); the full second moment is
    approximated as outer(R, C) / mean(R), which reconstructs any rank-1
    squared gradient exactly. Vectors keep a full accumulator. The decay
    rate grows with the step count as 1 - t^-decay_exponent, and updates
    are clipped so their root-mean-square stays below clip_threshold.

    With lr=None the step size follows the relative schedule
    max(eps2, rms(param)) * min(max_relative_step, 1/sqrt(t)); an explicit
    lr is used as a constant step size instead. The schedule cap defaults
    higher than the published 1e-2 because desk-scale problems take far
    fewer steps.
    """

    def __init__(self, lr: float | None = None, decay_exponent: float = 0.8,
                 eps1: float = 1e-30, eps2: float = 1e-3,
                 clip_threshold: float = 1.0, max_relative_step: float = 5e-2):
        self.lr = lr
        self.decay_exponent = decay_exponent
        self.eps1 = eps1
        self.eps2 = eps2
        self.clip_threshold = clip_threshold
        self.max_relative_step = max_relative_step
        self.step_count = 0
        self._row: dict[str, np.ndarray] = {}
        self._col: dict[str, np.ndarray] = {}
        self._full: dict[str, np.ndarray] = {}

    def _step_size(self, param: np.ndarray) -> float:
        if self.lr is not None:
            return self.lr
        rho = min(self.max_relative_step, 1.0 / np.sqrt(self.step_count))
        scale = max(self.eps2, float(np.sqrt((param * param).mean())) if param.size else 0.0)
        return scale * rho

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        _check_finite(grads)
        self.step_count += 1
        beta2t = 1.0 - self.step_count ** (-self.decay_exponent)
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            sq = g * g + self.eps1
            if p.ndim == 2:
                r = self._row.setdefault(name, np.zeros(p.shape[0]))
                c = self._col.setdefault(name, np.zeros(p.shape[1]))
                r *= beta2t
                r += (1.0 - beta2t) * sq.mean(axis=1)
                c *= beta2t
                c += (1.0 - beta2t) * sq.mean(axis=0)
                update = g / np.sqrt(np.outer(r, c) / r.mean())
            elif p.ndim <= 1:
                v = self._full.setdefault(name, np.zeros_like(p.data))
                v *= beta2t
                v += (1.0 - beta2t) * sq
                update = g / np.sqrt(v)
            else:
                raise ValueError(f"unsupported parameter rank {p.ndim} for '{name}'")
            rms = float(np.sqrt((update * update).mean())) if update.size else 0.0
            if rms > self.clip_threshold:
                update = update * (self.clip_threshold / rms)
            p.data = p.data - self._step_size(p.data) * update

    def second_moment(self, name: str) -> np.ndarray:
        """Reconstructed second-moment estimate for one parameter."""
        if name in self._row:
            r, c = self._row[name], self._col[name]
            return np.outer(r, c) / r.mean()
        return self._full[name].copy()


def make_optimizer(kind: str, lr: float | None = None):
    if kind == "adam":
        return Adam(lr=lr if lr is not None else 1e-3)
    if kind == "adafactor":
        return Adafactor(lr=lr)  # None keeps the relative step schedule
    raise ValueError(f"unknown optimizer '{kind}' (expected adam or adafactor)")
