"""Adam with a warmup+cosine learning-rate schedule.

Parameters update in sorted-name order, single-threaded, so a run is a pure
function of (initial state, data order, schedule) — determinism is load-bearing
for the reproducibility guarantees elsewhere.
"""

import numpy as np

from .tensor import Tensor


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        self.names = sorted(params)
        self.params = params
        self.lr = lr
        self.b1, self.b2 = b1, b2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n].data) for n in self.names}
        self.v = {n: np.zeros_like(params[n].data) for n in self.names}

    def step(self):
        """Apply one update from accumulated .grad; parameters without a
        gradient this step are left untouched (their moments do not advance)."""
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for n in self.names:
            p = self.params[n]
            if p.grad is None:
                continue
            g = p.grad
            self.m[n] = self.b1 * self.m[n] + (1.0 - self.b1) * g
            self.v[n] = self.b2 * self.v[n] + (1.0 - self.b2) * (g * g)
            m_hat = self.m[n] / bc1
            v_hat = self.v[n] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for n in self.names:
            self.params[n].grad = None


def cosine_lr(
    step: int, total_steps: int, base_lr: float, warmup_steps: int = 0, min_lr: float = 0.0
) -> float:
    """Linear warmup to base_lr, then cosine decay to min_lr at total_steps."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not (0 <= warmup_steps < total_steps):
        raise ValueError(f"warmup_steps must lie in [0, total_steps), got {warmup_steps}")
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    frac = (step - warmup_steps) / max(1, total_steps - 1 - warmup_steps)
    frac = min(max(frac, 0.0), 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + np.cos(np.pi * frac))
