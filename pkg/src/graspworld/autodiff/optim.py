"""Adam optimizer with bias correction.

Constants default to beta1=0.9, beta2=0.999, eps=1e-8; the artifact only
pins the learning rates per use site.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import DTYPE, Tensor


@dataclass
class AdamState:
    """Per-parameter moments and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float, **kw) -> "AdamState":
        return cls(
            m=np.zeros_like(param, dtype=DTYPE), v=np.zeros_like(param, dtype=DTYPE), lr=lr, **kw
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new values."""
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Applies :func:`adam_step` to a fixed list of parameter tensors.

    Parameters with ``grad is None`` at step time are left untouched.
    """

    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr
        self.states = [AdamState.for_param(p.data, lr) for p in self.params]

    def step(self) -> None:
        for p, st in zip(self.params, self.states):
            if p.grad is None:
                continue
            p.data = adam_step(p.data, p.grad, st)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state flattened for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for i, st in enumerate(self.states):
            out[f"adam/{i}/m"] = st.m
            out[f"adam/{i}/v"] = st.v
            out[f"adam/{i}/t"] = np.array([float(st.t)])
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, st in enumerate(self.states):
            st.m = np.array(arrays[f"adam/{i}/m"], dtype=DTYPE)
            st.v = np.array(arrays[f"adam/{i}/v"], dtype=DTYPE)
            st.t = int(arrays[f"adam/{i}/t"][0])
