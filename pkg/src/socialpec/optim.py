"""Adam with bias correction."""

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, p, **hyper):
        return cls(np.zeros_like(p.data), np.zeros_like(p.data), **hyper)


def adam_step(p, state):
    """Apply one Adam update to ``p`` in place and zero its gradient."""
    g = p.grad
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    p.grad = np.zeros_like(p.data)
    return p, state


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.states = [AdamState.for_param(p, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
                       for p in self.params]

    def step(self):
        for p, s in zip(self.params, self.states):
            adam_step(p, s)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
