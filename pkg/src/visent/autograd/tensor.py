"""Dense tensors and the replayable op tape behind reverse-mode differentiation."""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ContractError, DimensionError, NumericError

SUPPORTED_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense float array with an optional gradient buffer.

    Values are row-major float32 by default; float64 is supported so the
    finite-difference checker can run the same code paths at full precision.
    Tensors are immutable after creation except for the grad slot. The
    optimizer and the finite-difference checker mutate values through
    `assign_values`, which is only legal between recorded passes.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, values, requires_grad=False, dtype=None):
        if dtype is None:
            # An explicit array dtype is preserved (float64 supports the
            # full-model finite-difference check); plain Python data
            # defaults to the engine's float32.
            if isinstance(values, np.ndarray) and values.dtype in SUPPORTED_DTYPES:
                dtype = values.dtype
            else:
                dtype = np.float32
        elif np.dtype(dtype) not in SUPPORTED_DTYPES:
            raise ContractError(f"unsupported dtype {dtype!r}; use float32 or float64")
        data = np.ascontiguousarray(values, dtype=dtype)
        if data.size and not np.isfinite(data).all():
            raise NumericError("tensor values must be finite")
        self.data = data
        self.requires_grad = bool(requires_grad)
        # Preallocating zeros fixes the "unused parameter" convention: a
        # parameter never touched by backward reports an all-zero gradient.
        self.grad = np.zeros_like(data) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def values(self):
        """The flat row-major value array (a view, do not write through it)."""
        return self.data.reshape(-1)

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def tolist(self):
        return self.data.tolist()

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def assign_values(self, values):
        """Overwrite values in place; for optimizer steps and FD probes only."""
        arr = np.asarray(values, dtype=self.data.dtype)
        if arr.size != self.data.size:
            raise DimensionError(
                f"cannot assign {arr.shape} values into tensor of shape {self.shape}")
        arr = arr.reshape(self.data.shape)
        if arr.size and not np.isfinite(arr).all():
            raise NumericError("assigned values must be finite")
        self.data[...] = arr

    def detached(self):
        """A requires_grad=False copy sharing nothing with this tensor."""
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.data.dtype.name}{flag})"

    # Arithmetic sugar; the real work lives in visent.autograd.ops.
    def __add__(self, other):
        from . import ops

        return ops.add(self, ops.as_tensor(other, like=self))

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, ops.as_tensor(other, like=self))

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, ops.as_tensor(other, like=self))

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


class OpEntry:
    """One executed op: its operands, its output, and the local vjp."""

    __slots__ = ("name", "inputs", "output", "vjp")

    def __init__(self, name, inputs, output, vjp):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


_state = threading.local()


def _record_stack():
    stack = getattr(_state, "records", None)
    if stack is None:
        stack = []
        _state.records = stack
    return stack


def active_record():
    stack = _record_stack()
    return stack[-1] if stack else None


class ComputationRecord:
    """Ordered log of executed ops, replayed in reverse by `backward`.

    Entries are appended at execution time, so an op's inputs always precede
    it. A record and the tensors it references belong to one logical thread
    for the duration of forward + backward; independent records can run in
    parallel because the active-record stack is thread-local.
    """

    def __init__(self):
        self.entries = []

    def __enter__(self):
        _record_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _record_stack().pop()
        assert popped is self
        return False

    def add(self, entry):
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    def is_topologically_ordered(self):
        """True when every entry's inputs were produced by earlier entries."""
        all_outputs = {id(e.output) for e in self.entries}
        produced = set()
        for entry in self.entries:
            for t in entry.inputs:
                if id(t) in all_outputs and id(t) not in produced:
                    return False
            produced.add(id(entry.output))
        return True


def register_op(name, inputs, output, vjp):
    """Log an op on the active record when its output participates in grads."""
    record = active_record()
    if record is not None and output.requires_grad:
        record.add(OpEntry(name, tuple(inputs), output, vjp))


def backward(loss, record):
    """Replay `record` in reverse, accumulating d(loss)/d(tensor).

    Every requires_grad tensor the loss depends on gets its grad buffer
    incremented (additively, so repeated uses of one tensor sum up). Returns
    the tensor -> gradient array map for the tensors that received one.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not isinstance(record, ComputationRecord):
        raise ContractError("backward needs the ComputationRecord of the forward pass")

    flowing = {id(loss): np.ones_like(loss.data)}
    holders = {id(loss): loss}
    for entry in reversed(record.entries):
        g = flowing.get(id(entry.output))
        if g is None:
            continue
        input_grads = entry.vjp(g)
        for t, gi in zip(entry.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in flowing:
                flowing[key] = flowing[key] + gi
            else:
                flowing[key] = gi
                holders[key] = t

    result = {}
    for key, grad in flowing.items():
        t = holders[key]
        if t.requires_grad:
            t.grad += grad.reshape(t.shape)
            result[t] = grad.reshape(t.shape)
    return result
