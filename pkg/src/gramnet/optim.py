"""Adamax updates and the plateau learning-rate rule.

Adamax per step t (bias-corrected first moment, infinity-norm second moment):

    m <- beta1 * m + (1 - beta1) * g
    u <- max(beta2 * u, |g|)
    theta <- theta - (lr / (1 - beta1^t)) * m / (u + eps)

The plateau rule halves the rate once the best validation loss has failed to
improve strictly for `patience` consecutive epochs; the counter resets both
on improvement and on every reduction, so reductions can repeat.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class AdamaxState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    u: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def init_adamax(params: Dict[str, Tensor]) -> AdamaxState:
    return AdamaxState(
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        u={k: np.zeros_like(p.data) for k, p in params.items()},
        t=0,
    )


def adamax_step(params: Dict[str, Tensor], state: AdamaxState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One in-place update; gradients are read from each tensor's grad slot."""
    if set(params) != set(state.m):
        raise ContractError("optimizer state does not cover these parameters")
    state.t += 1
    correction = lr / (1.0 - beta1 ** state.t)
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        if g.shape != p.data.shape or state.m[name].shape != p.data.shape:
            raise ContractError(f"gradient/state shape mismatch for {name!r}")
        m = state.m[name]
        u = state.u[name]
        m *= beta1
        m += (1.0 - beta1) * g
        np.maximum(beta2 * u, np.abs(g), out=u)
        p.data -= correction * m / (u + eps)


def zero_grads(params: Dict[str, Tensor]):
    for p in params.values():
        p.zero_grad()


def plateau_schedule(history: Sequence[float], patience: int = 4,
                     factor: float = 0.5, lr: float = 0.0005) -> float:
    """Next learning rate given the validation losses of all completed epochs.

    Returns lr * factor exactly when the final epoch completes a run of
    `patience` epochs without strict improvement of the best loss (counted
    since the last best or the last reduction); otherwise lr is unchanged.
    """
    if patience < 1:
        raise ContractError(f"patience must be >= 1, got {patience}")
    best = float("inf")
    since = 0
    fired_on_last = False
    for i, loss in enumerate(history):
        if loss < best:
            best = loss
            since = 0
            fired_on_last = False
        else:
            since += 1
            if since >= patience:
                since = 0
                fired_on_last = i == len(history) - 1
            else:
                fired_on_last = False
    return lr * factor if fired_on_last else lr
