"""Adam and the reduce-on-plateau learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .engine import NumericError, Tensor


@numba.njit(cache=True, error_model="numpy")
def _adam_kernel(w, g, m, v, b1, b2, step, c2, eps):
    for i in range(w.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        w[i] -= step * mi / (math.sqrt(vi / c2) + eps)


@numba.njit(cache=True, error_model="numpy", fastmath={"reassoc", "nsz"})
def _all_finite(g):
    acc = 0.0
    for i in range(g.size):
        acc += g[i] * 0.0  # NaN for any inf/NaN entry
    return acc == 0.0


class _FlatGroup:
    """One contiguous weight/gradient/moment buffer; each tensor's data and grad become views into it."""

    def __init__(self, params: Sequence[Tensor], lr_scale: float):
        self.params = list(params)
        self.lr_scale = float(lr_scale)
        sizes = [p.data.size for p in self.params]
        total = int(sum(sizes))
        self.w = np.empty(total)
        self.g = np.zeros(total)
        self.m = np.zeros(total)
        self.v = np.zeros(total)
        offset = 0
        for p, n in zip(self.params, sizes):
            shape = p.data.shape
            self.w[offset:offset + n] = p.data.reshape(-1)
            p.data = self.w[offset:offset + n].reshape(shape)
            p.grad = self.g[offset:offset + n].reshape(shape)
            offset += n


class Adam:
    """Bias-corrected Adam.

    ``params`` is either a flat list of tensors or a list of
    ``(tensors, lr_scale)`` groups; a group steps with ``lr * lr_scale``.
    Parameter storage is consolidated into one buffer per group, so gradients
    must be cleared with :meth:`zero_grad` (in place) rather than set to None.
    """

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        params = list(params)
        if params and isinstance(params[0], Tensor):
            params = [(params, 1.0)]
        self.groups = [_FlatGroup(ps, s) for ps, s in params]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self) -> None:
        for grp in self.groups:
            grp.g.fill(0.0)
            for p in grp.params:
                if p.grad is None:
                    raise RuntimeError("parameter gradient buffer was detached from the optimizer")

    def moments(self, p: Tensor) -> tuple[np.ndarray, np.ndarray]:
        for grp in self.groups:
            offset = 0
            for q in grp.params:
                n = q.data.size
                if q is p:
                    return (grp.m[offset:offset + n].reshape(q.shape),
                            grp.v[offset:offset + n].reshape(q.shape))
                offset += n
        raise KeyError("tensor is not managed by this optimizer")

    def step(self) -> None:
        for grp in self.groups:
            if not _all_finite(grp.g):
                raise NumericError("non-finite gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for grp in self.groups:
            step = self.lr * grp.lr_scale / c1
            _adam_kernel(grp.w, grp.g, grp.m, grp.v, self.beta1, self.beta2, step, c2, self.eps)


def adam_step(state: Adam, params: Sequence[Tensor] | None = None, grads=None) -> None:
    """Apply one update; ``grads`` (if given) are copied into ``params``' gradient buffers first."""
    if grads is not None:
        for p, g in zip(params, grads):
            p.grad[...] = g
    state.step()


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without strict improvement."""

    lr: float
    factor: float = 0.1
    patience: int = 5
    min_lr: float = 1e-12
    best: float = math.inf
    stall: int = 0
    history: list = field(default_factory=list)

    def update(self, val_loss: float) -> float:
        if math.isnan(val_loss):
            raise NumericError("validation loss is NaN")
        if val_loss < self.best:
            self.best = val_loss
            self.stall = 0
        else:
            self.stall += 1
            if self.stall == self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.stall = 0
        self.history.append(self.lr)
        return self.lr


def plateau_update(sched: PlateauScheduler, val_loss: float) -> float:
    return sched.update(val_loss)
