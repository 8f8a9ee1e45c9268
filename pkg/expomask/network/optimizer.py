"""
Adam optimizer with bias correction.

adam_step is pure: it returns new parameters and a new state and leaves
its inputs untouched.
"""

from typing import Dict, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from expomask.errors import ShapeMismatch
from expomask.network.unet import UNetParams

Params = Union[UNetParams, Dict[str, np.ndarray]]


class AdamState(BaseModel):
    """Moment estimates, step counter and hyper-parameters."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(0.001, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    t: int = Field(0, ge=0)
    m: Dict[str, np.ndarray] = Field(default_factory=dict)
    v: Dict[str, np.ndarray] = Field(default_factory=dict)


def _tensors(params: Params) -> Dict[str, np.ndarray]:
    return params.tensors if isinstance(params, UNetParams) else params


def init_adam(params: Params, lr: float = 0.001) -> AdamState:
    """Fresh state with zero moments shaped like params."""
    tensors = _tensors(params)
    return AdamState(
        lr=lr,
        m={name: np.zeros_like(t, dtype=np.float64) for name, t in tensors.items()},
        v={name: np.zeros_like(t, dtype=np.float64) for name, t in tensors.items()},
    )


def adam_step(params: Params, grads: Params, state: AdamState) -> Tuple[Params, AdamState]:
    """
    One Adam update.

    m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
    p' = p - lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t).

    Args:
        params: Current parameters (UNetParams or a name -> array dict).
        grads: Gradients with the same names and shapes.
        state: Optimizer state; moments missing from it start at zero.

    Returns:
        (new params of the same kind, new state with t + 1).
    """
    tensors = _tensors(params)
    grad_tensors = _tensors(grads)
    if set(grad_tensors) != set(tensors):
        raise ShapeMismatch("gradient names do not match parameter names")

    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, p in tensors.items():
        g = np.asarray(grad_tensors[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} does not match parameter {p.shape}")
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        if m_prev is None:
            m_prev = np.zeros_like(p, dtype=np.float64)
            v_prev = np.zeros_like(p, dtype=np.float64)
        elif m_prev.shape != p.shape or v_prev.shape != p.shape:
            raise ShapeMismatch(f"{name}: optimizer moments do not match parameter {p.shape}")

        m = state.beta1 * m_prev + (1.0 - state.beta1) * g
        v = state.beta2 * v_prev + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v

    new_state = state.model_copy(update={"t": t, "m": new_m, "v": new_v})
    if isinstance(params, UNetParams):
        return params.with_tensors(new_params), new_state
    return new_params, new_state
