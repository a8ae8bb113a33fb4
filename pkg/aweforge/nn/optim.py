"""
Adam optimizer and global-norm gradient clipping.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from ..errors import NonFiniteGradient, UsageError
from .stack import LayerStack


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **kwargs) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), **kwargs)


def check_finite(grads: np.ndarray, label_of: Optional[Callable[[int], str]] = None):
    if not np.all(finite := np.isfinite(grads)):
        index = int(np.flatnonzero(~finite)[0])
        raise NonFiniteGradient(label_of(index) if label_of else f"parameter {index}")


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    label_of: Optional[Callable[[int], str]] = None,
) -> Tuple[np.ndarray, AdamState]:
    """
    Applies one bias-corrected Adam update and returns the new parameters and state.

    :param label_of: Maps a flat parameter index to the name of its layer, used in the error raised for non-finite gradients.
    """
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise UsageError(
            f"Shape mismatch: params {params.shape}, grads {grads.shape}, moments {state.m.shape}."
        )
    check_finite(grads, label_of)

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, dataclasses.replace(state, m=m, v=v, step=step)


def clip_by_global_norm(
    grads: Mapping[str, np.ndarray], max_norm: Optional[float]
) -> Tuple[Dict[str, np.ndarray], bool]:
    """
    Rescales all gradients jointly so that their global L2 norm does not exceed ``max_norm``. Returns the gradients and whether clipping happened.
    """
    if max_norm is None:
        return dict(grads), False
    norm = np.sqrt(sum(float(np.sum(_g * _g)) for _g in grads.values()))
    if norm <= max_norm:
        return dict(grads), False
    scale = max_norm / norm
    return {_key: _g * scale for _key, _g in grads.items()}, True


@dataclass
class Adam:
    """
    Adam over several named stacks trained jointly, e.g., the encoder, autoregressor and predictors of a CPC model.
    """

    stacks: Mapping[str, LayerStack]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = 5.0
    clip_events: int = 0
    states: Dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        for name, stack in self.stacks.items():
            self.states.setdefault(
                name,
                AdamState.zeros(
                    stack.n_params,
                    lr=self.lr,
                    beta1=self.beta1,
                    beta2=self.beta2,
                    eps=self.eps,
                ),
            )

    def step(self, grads: Mapping[str, np.ndarray]) -> bool:
        """
        Updates every stack in place and returns whether the gradients were clipped.
        """
        for name, stack in self.stacks.items():
            check_finite(grads[name], lambda _k: f"{name}/{stack.label_of(_k)}")
        grads, clipped = clip_by_global_norm(
            {_name: grads[_name] for _name in self.stacks}, self.clip_norm
        )
        self.clip_events += clipped

        for name, stack in self.stacks.items():
            params, self.states[name] = adam_step(
                stack.params, grads[name], self.states[name]
            )
            stack.assign(params)
        return clipped
