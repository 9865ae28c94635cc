"""Finite-difference verification of recorded gradients."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, DomainError
from .tensor import ComputationRecord, Tensor, backward

REL_ERR_FLOOR = 1e-8


def _relative_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric), REL_ERR_FLOOR)
    return abs(analytic - numeric) / denom


def _eval_scalar(fn):
    y = fn()
    if y.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued function, got shape {y.shape}")
    value = y.item()
    if not math.isfinite(value):
        raise DomainError("function is not finite at a perturbed point")
    return value


def grad_check(f, x: Tensor, eps: float) -> float:
    """Max relative error between recorded gradients and central differences.

    Central difference per coordinate: (f(x + eps*e_i) - f(x - eps*e_i)) / 2eps.
    Relative error: |a - n| / max(|a|, |n|, 1e-8), maximised over coordinates.
    x is probed by in-place perturbation and restored before returning.
    """
    if not isinstance(eps, (int, float)) or not eps > 0:
        raise ContractError(f"grad_check needs a positive eps, got {eps!r}")
    if not x.requires_grad:
        raise ContractError("grad_check input must have requires_grad set")

    x.zero_grad()
    record = ComputationRecord()
    with record:
        y = f(x)
    if y.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued function, got shape {y.shape}")
    backward(y, record)
    analytic = x.grad.reshape(-1).copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        f_plus = _eval_scalar(lambda: f(x))
        flat[i] = saved - eps
        f_minus = _eval_scalar(lambda: f(x))
        flat[i] = saved
        numeric = (f_plus - f_minus) / (2.0 * eps)
        worst = max(worst, _relative_error(float(analytic[i]), numeric))
    return worst


def grad_check_params(loss_fn, params, eps: float):
    """Per-parameter max relative FD error for a multi-parameter scalar function.

    `loss_fn` takes no arguments and rebuilds the loss from the live `params`
    (a name -> Tensor mapping); gradients come from a single recorded pass,
    central differences from in-place probing of each coordinate.
    """
    if not isinstance(eps, (int, float)) or not eps > 0:
        raise ContractError(f"grad_check_params needs a positive eps, got {eps!r}")

    for p in params.values():
        p.zero_grad()
    record = ComputationRecord()
    with record:
        loss = loss_fn()
    if loss.size != 1:
        raise ContractError(f"loss_fn must be scalar-valued, got shape {loss.shape}")
    backward(loss, record)
    analytic = {name: p.grad.reshape(-1).copy() for name, p in params.items()}
    for p in params.values():
        p.zero_grad()

    errors = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = _eval_scalar(loss_fn)
            flat[i] = saved - eps
            f_minus = _eval_scalar(loss_fn)
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            worst = max(worst, _relative_error(float(analytic[name][i]), numeric))
        errors[name] = worst
    return errors
