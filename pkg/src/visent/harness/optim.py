"""Adam with selectable weight-decay mode (decoupled decay or L2-in-gradient)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..autograd import kernels
from ..autograd.tensor import Tensor
from ..errors import ConfigError, ContractError

DECAY_MODES = ("decoupled", "l2")


@dataclass
class AdamHyper:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    decay_mode: str = "decoupled"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.decay_mode not in DECAY_MODES:
            raise ConfigError(
                f"decay_mode must be one of {DECAY_MODES}, got "
                f"{self.decay_mode!r}")


class AdamState:
    """First/second moment buffers and the shared step counter."""

    def __init__(self, params: Dict[str, Tensor]):
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.step = 0

    def check(self, params: Dict[str, Tensor]) -> None:
        if set(self.m) != set(params):
            raise ContractError(
                "optimizer state does not cover the same parameters")
        for k, t in params.items():
            if self.m[k].shape != t.shape:
                raise ContractError(
                    f"optimizer state for {k} has shape {self.m[k].shape}, "
                    f"parameter has {t.shape}")


def adam_step(params: Dict[str, Tensor], state: AdamState, hyper: AdamHyper,
              grads: Optional[Dict[str, np.ndarray]] = None) -> None:
    """One in-place update over all parameters.

    grads defaults to each tensor's accumulated .grad. Decoupled mode
    scales params by (1 - lr*wd) before the Adam update; l2 mode folds
    wd*param into the gradient instead.
    """
    state.check(params)
    state.step += 1
    backend = kernels.active
    for name, t in params.items():
        g = grads[name] if grads is not None else t.grad
        if g is None:
            raise ContractError(f"parameter {name} has no gradient")
        g = np.asarray(g, dtype=t.data.dtype)
        if g.shape != t.shape:
            raise ContractError(
                f"gradient for {name} has shape {g.shape}, parameter has "
                f"{t.shape}")
        if hyper.decay_mode == "l2" and hyper.weight_decay:
            g = g + hyper.weight_decay * t.data
            wd = 0.0
        else:
            wd = hyper.weight_decay
        backend.adam_update(
            t.data, g, state.m[name], state.v[name], state.step,
            hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps, wd)
