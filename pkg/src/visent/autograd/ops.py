"""Differentiable tensor operations.

Each op validates shapes, computes eagerly (elementwise inner loops go
through the active kernel backend), checks the result for overflow, and logs
a vjp closure on the active ComputationRecord. Broadcasting is restricted to
the trailing-dimension rule: shapes are right-aligned, each aligned pair must
be equal or the smaller operand holds a 1 (or nothing), and the result shape
must equal one operand's shape.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    ContractError,
    DegenerateSliceError,
    DimensionError,
    DomainError,
    NumericError,
)
from . import kernels
from .tensor import Tensor, register_op


def as_tensor(value, like=None):
    """Wrap a python scalar as a rank-0 tensor matching `like`'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(value, dtype=dtype))


def _result(values, inputs):
    if values.size and not np.isfinite(values).all():
        raise NumericError("operation overflowed: result contains NaN/Inf")
    return Tensor(values, requires_grad=any(t.requires_grad for t in inputs), dtype=values.dtype)


def _check_same_dtype(*tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"mixed tensor dtypes {sorted(d.name for d in dtypes)}")


# ---------------------------------------------------------------------------
# matmul / transpose / reshape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs rank-2 operands, got {list(a.shape)} and {list(b.shape)}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {list(a.shape)} x {list(b.shape)}"
        )
    out = _result(a.data @ b.data, (a, b))

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    register_op("matmul", (a, b), out, vjp)
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose needs a rank-2 tensor, got {list(x.shape)}")
    out = _result(np.ascontiguousarray(x.data.T), (x,))
    register_op("transpose", (x,), out, lambda g: (np.ascontiguousarray(g.T),))
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise DimensionError(f"cannot reshape {list(x.shape)} to {list(shape)}")
    out = _result(x.data.reshape(shape), (x,))
    register_op("reshape", (x,), out, lambda g: (g.reshape(x.shape),))
    return out


# ---------------------------------------------------------------------------
# elementwise binary ops with trailing-dimension broadcast


def _broadcast_plan(a: Tensor, b: Tensor):
    """Validate trailing-dimension broadcast; returns the output shape."""
    sa, sb = a.shape, b.shape
    ra, rb = len(sa), len(sb)
    rank = max(ra, rb)
    out = []
    for i in range(rank):
        da = sa[ra - rank + i] if ra - rank + i >= 0 else 1
        db = sb[rb - rank + i] if rb - rank + i >= 0 else 1
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"shapes {list(sa)} and {list(sb)} do not broadcast")
        out.append(max(da, db))
    out = tuple(out)
    if out != sa and out != sb:
        raise DimensionError(
            f"broadcast of {list(sa)} and {list(sb)} matches neither operand"
        )
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (the reverse of a trailing-dim broadcast)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(name, a, b, forward, da, db):
    _check_same_dtype(a, b)
    _broadcast_plan(a, b)
    out = _result(forward(a.data, b.data), (a, b))

    def vjp(g):
        ga = _unbroadcast(da(g, a.data, b.data), a.shape) if a.requires_grad else None
        gb = _unbroadcast(db(g, a.data, b.data), b.shape) if b.requires_grad else None
        return ga, gb

    register_op(name, (a, b), out, vjp)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary("mul", a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


_BINARY = {"add": add, "sub": sub, "mul": mul}


def binary_op(a: Tensor, b: Tensor, f: str) -> Tensor:
    try:
        return _BINARY[f](a, b)
    except KeyError:
        raise ContractError(f"unknown binary op {f!r}; expected one of {sorted(_BINARY)}") from None


# ---------------------------------------------------------------------------
# elementwise unary ops


def tanh(x: Tensor) -> Tensor:
    k = kernels.active
    out = _result(k.tanh(x.data), (x,))
    register_op("tanh", (x,), out, lambda g: (k.tanh_grad(out.data, g),))
    return out


def sigmoid(x: Tensor) -> Tensor:
    k = kernels.active
    out = _result(k.sigmoid(x.data), (x,))
    register_op("sigmoid", (x,), out, lambda g: (k.sigmoid_grad(out.data, g),))
    return out


def relu(x: Tensor) -> Tensor:
    k = kernels.active
    out = _result(k.relu(x.data), (x,))
    register_op("relu", (x,), out, lambda g: (k.relu_grad(x.data, g),))
    return out


def exp(x: Tensor) -> Tensor:
    k = kernels.active
    out = _result(k.exp(x.data), (x,))
    register_op("exp", (x,), out, lambda g: (k.exp_grad(out.data, g),))
    return out


def log(x: Tensor) -> Tensor:
    if x.size and x.data.min() <= 0.0:
        raise DomainError("log needs strictly positive inputs")
    k = kernels.active
    out = _result(k.log(x.data), (x,))
    register_op("log", (x,), out, lambda g: (k.log_grad(x.data, g),))
    return out


def neg(x: Tensor) -> Tensor:
    out = _result(np.negative(x.data), (x,))
    register_op("neg", (x,), out, lambda g: (-g,))
    return out


def square(x: Tensor) -> Tensor:
    k = kernels.active
    out = _result(k.square(x.data), (x,))
    register_op("square", (x,), out, lambda g: (k.square_grad(x.data, g),))
    return out


_UNARY = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "log": log,
    "neg": neg,
    "square": square,
}


def unary_op(x: Tensor, f: str) -> Tensor:
    try:
        return _UNARY[f](x)
    except KeyError:
        raise ContractError(f"unknown unary op {f!r}; expected one of {sorted(_UNARY)}") from None


# ---------------------------------------------------------------------------
# reductions


def _check_axis(x, axis):
    if axis is not None and not (0 <= axis < x.data.ndim):
        raise DimensionError(f"axis {axis} out of range for shape {list(x.shape)}")


def reduce_sum(x: Tensor, axis=None) -> Tensor:
    _check_axis(x, axis)
    out = _result(x.data.sum(axis=axis), (x,))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype, copy=True),)

    register_op("sum", (x,), out, vjp)
    return out


def reduce_mean(x: Tensor, axis=None) -> Tensor:
    _check_axis(x, axis)
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise DimensionError(f"mean over an empty extent (shape {list(x.shape)})")
    out = _result(x.data.mean(axis=axis), (x,))
    inv = x.dtype.type(1.0 / count)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g * inv, x.shape).astype(x.dtype, copy=True),)
        return (
            np.broadcast_to(np.expand_dims(g * inv, axis), x.shape).astype(x.dtype, copy=True),
        )

    register_op("mean", (x,), out, vjp)
    return out


def reduce_max(x: Tensor, axis=None) -> Tensor:
    """Max reduction; gradient routes to the argmax, ties to the lowest index."""
    _check_axis(x, axis)
    if x.size == 0:
        raise DimensionError("max over an empty tensor")
    if axis is None:
        arg = int(np.argmax(x.data))  # np.argmax takes the first (lowest) index on ties
        out = _result(x.data.reshape(-1)[arg].reshape(()), (x,))

        def vjp(g):
            full = np.zeros_like(x.data).reshape(-1)
            full[arg] = g.reshape(())
            return (full.reshape(x.shape),)

    else:
        arg = np.argmax(x.data, axis=axis)
        out = _result(np.max(x.data, axis=axis), (x,))

        def vjp(g):
            full = np.zeros_like(x.data)
            np.put_along_axis(
                full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis
            )
            return (full,)

    register_op("max", (x,), out, vjp)
    return out


_REDUCE = {"sum": reduce_sum, "mean": reduce_mean, "max": reduce_max}


def reduce(x: Tensor, r: str, axis=None) -> Tensor:
    try:
        return _REDUCE[r](x, axis)
    except KeyError:
        raise ContractError(f"unknown reduction {r!r}; expected one of {sorted(_REDUCE)}") from None


# ---------------------------------------------------------------------------
# concat / gather


def concat(xs, axis=0) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ContractError("concat needs at least one tensor")
    _check_same_dtype(*xs)
    first = xs[0]
    _check_axis(first, axis)
    for x in xs[1:]:
        if x.data.ndim != first.data.ndim or any(
            i != axis and x.shape[i] != first.shape[i] for i in range(first.data.ndim)
        ):
            raise DimensionError(
                f"concat shapes disagree off axis {axis}: "
                f"{[list(t.shape) for t in xs]}"
            )
    out = _result(np.concatenate([x.data for x in xs], axis=axis), tuple(xs))
    sizes = [x.shape[axis] for x in xs]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis) if x.requires_grad else None
            for i, x in enumerate(xs)
        )

    register_op("concat", tuple(xs), out, vjp)
    return out


def gather_rows(table: Tensor, indices, frozen_rows=()) -> Tensor:
    """Select rows of a rank-2 tensor; backward scatter-adds into the table.

    Rows listed in `frozen_rows` receive no gradient (used to pin the padding
    embedding at zero).
    """
    if table.data.ndim != 2:
        raise DimensionError(f"gather_rows needs a rank-2 table, got {list(table.shape)}")
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise DimensionError(
            f"row index out of range for table with {table.shape[0]} rows"
        )
    out = _result(table.data[idx], (table,))
    frozen = frozenset(frozen_rows)

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        for row in frozen:
            full[row] = 0.0
        return (full,)

    register_op("gather_rows", (table,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# softmax


def softmax(x: Tensor, axis: int, mask=None) -> Tensor:
    """Softmax along `axis`; `mask` is a bool tensor, True at excluded slots.

    Every slice must keep at least one slot. Masked slots come out exactly 0
    and stay 0 in the gradient.
    """
    _check_axis(x, axis)
    if axis is None:
        raise ContractError("softmax needs an explicit axis")
    keep = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(
                f"mask shape {list(mask.shape)} does not match input {list(x.shape)}"
            )
        if not (~mask).any(axis=axis).all():
            raise DegenerateSliceError("softmax slice with all entries masked")
        keep = (~mask).astype(x.dtype)
    if x.shape[axis] == 0:
        raise DegenerateSliceError("softmax along an empty axis")

    moved = np.moveaxis(x.data, axis, -1)
    lead_shape = moved.shape
    rows = np.ascontiguousarray(moved).reshape(-1, lead_shape[-1])
    keep_rows = None
    if keep is not None:
        keep_rows = np.ascontiguousarray(np.moveaxis(keep, axis, -1)).reshape(rows.shape)
    k = kernels.active
    probs = k.softmax_rows(rows, keep_rows)
    out = _result(np.moveaxis(probs.reshape(lead_shape), -1, axis), (x,))

    def vjp(g):
        g_rows = np.ascontiguousarray(np.moveaxis(g, axis, -1)).reshape(rows.shape)
        gx = k.softmax_rows_grad(probs, g_rows)
        return (np.moveaxis(gx.reshape(lead_shape), -1, axis),)

    register_op("softmax", (x,), out, vjp)
    return out
