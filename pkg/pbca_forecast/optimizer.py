"""Adam updates and gradient clipping."""
from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .const import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from .exceptions import ContractError, NumericError, ShapeError

_LOGGER = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moments per parameter and the step counter."""

    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        """Return a fresh state mirroring ``params``."""
        return cls(
            first={name: np.zeros_like(value) for name, value in params.items()},
            second={name: np.zeros_like(value) for name, value in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    Apply one bias-corrected Adam update.

    Args:
        params: Current parameter values by name
        grads: Gradient for every parameter
        state: Moments from the previous step; missing entries start at zero
        lr: Step size

    Returns:
        The new parameters and the new state; the inputs are not modified

    Raises:
        ContractError: If lr is not positive or a gradient is missing
        ShapeError: If a gradient's shape differs from its parameter
        NumericError: If a gradient is not finite

    """
    if lr <= 0:
        raise ContractError(f"Learning rate must be positive, got {lr}")
    for name, value in params.items():
        if name not in grads:
            raise ContractError(f"No gradient for parameter {name!r}")
        grad = np.asarray(grads[name])
        if grad.shape != value.shape:
            raise ShapeError(f"Gradient of {name!r} has shape {grad.shape}, parameter {value.shape}")
        if not np.isfinite(grad).all():
            raise NumericError(f"Non-finite gradient for parameter {name!r}")

    t = state.t + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params: dict[str, np.ndarray] = {}
    first: dict[str, np.ndarray] = {}
    second: dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.first.get(name, np.zeros_like(value))
        v = state.second.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        first[name] = m
        second[name] = v

    new_state = AdamState(
        first=first,
        second=second,
        t=t,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    """Return the L2 norm of all gradients taken together."""
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """
    Scale gradients down so that their global norm is at most ``max_norm``.

    A non-positive ``max_norm`` disables clipping.
    """
    clipped = {name: np.asarray(g, dtype=np.float64) for name, g in grads.items()}
    if max_norm <= 0:
        return clipped
    norm = global_norm(clipped)
    if norm <= max_norm:
        return clipped
    _LOGGER.debug("Clipping gradient norm %.4g to %.4g", norm, max_norm)
    scale = max_norm / norm
    return {name: g * scale for name, g in clipped.items()}
