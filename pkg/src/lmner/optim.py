"""Adam optimizer and global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .tensor import Tensor


class Adam:
    """Bias-corrected Adam over a fixed list of parameters.

    Holds per-parameter first/second moment buffers and a step counter.
    step() reads .grad and updates .data in place; gradients are left
    intact for the caller to clear.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        if not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
            raise ContractError("betas must lie in (0, 1)")
        if lr <= 0 or eps <= 0:
            raise ContractError("lr and eps must be positive")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                raise ContractError("adam step with a missing gradient")
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Accepts Tensors (their .grad is clipped) or raw numpy arrays.
    Returns the pre-clip norm; no-op when already within bounds.
    """
    if max_norm <= 0:
        raise ContractError("max_norm must be positive")
    grads = []
    for p in params:
        g = p.grad if isinstance(p, Tensor) else p
        if g is None:
            raise ContractError("clip_global_norm found a missing gradient")
        grads.append(g)
    total = 0.0
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
