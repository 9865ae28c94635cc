"""Hot elementwise kernels with a compiled core and a numpy fallback.

The autograd ops route their inner loops through the active backend. Both
backends implement the same flat-array contract, so swapping them never
changes the recorded graph, only who crunches the floats. Selection happens
once at import: the compiled extension (visent._native, built from
_native.pyx) wins when present, unless VISENT_KERNELS forces a choice.

    VISENT_KERNELS=native   require the compiled extension (ImportError if absent)
    VISENT_KERNELS=py       force the numpy fallback
    VISENT_KERNELS=auto     compiled if available, numpy otherwise (default)
"""

import os

import numpy as np


class NumpyKernels:
    """Pure-numpy reference implementations; the behavioural baseline."""

    name = "numpy"

    @staticmethod
    def tanh(x):
        return np.tanh(x)

    @staticmethod
    def tanh_grad(y, g):
        # y is the op output, g the incoming cotangent
        return g * (1.0 - y * y)

    @staticmethod
    def sigmoid(x):
        out = np.empty_like(x)
        np.negative(x, out=out)
        np.exp(out, out=out)
        out += 1.0
        np.reciprocal(out, out=out)
        return out

    @staticmethod
    def sigmoid_grad(y, g):
        return g * y * (1.0 - y)

    @staticmethod
    def relu(x):
        return np.maximum(x, 0.0)

    @staticmethod
    def relu_grad(x, g):
        # subgradient 0 at exactly 0
        return np.where(x > 0.0, g, 0.0)

    @staticmethod
    def exp(x):
        return np.exp(x)

    @staticmethod
    def exp_grad(y, g):
        return g * y

    @staticmethod
    def log(x):
        return np.log(x)

    @staticmethod
    def log_grad(x, g):
        return g / x

    @staticmethod
    def square(x):
        return x * x

    @staticmethod
    def square_grad(x, g):
        return 2.0 * x * g

    @staticmethod
    def softmax_rows(x, keep=None):
        """Row softmax of a 2-D array; `keep` is a bool array of slots to use.

        Masked slots are exactly 0 in the output: excluded logits are pushed
        to a -1e9 surrogate for the max shift, then multiplied by the keep
        mask, which zeroes them regardless of the surviving magnitudes.
        """
        if keep is not None:
            x = np.where(keep, x, x.dtype.type(-1e9))
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        if keep is not None:
            e *= keep
        return e / e.sum(axis=1, keepdims=True)

    @staticmethod
    def softmax_rows_grad(p, g):
        # dL/dx = p * (g - sum(p * g)); masked slots have p == 0 -> grad 0
        inner = (p * g).sum(axis=1, keepdims=True)
        return p * (g - inner)

    @staticmethod
    def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
        """One in-place Adam step with decoupled weight decay.

        `step` is the 1-based count including this update; m and v are
        mutated in place alongside param.
        """
        dt = param.dtype.type
        if weight_decay:
            param *= dt(1.0 - lr * weight_decay)
        m *= dt(beta1)
        m += dt(1.0 - beta1) * grad
        v *= dt(beta2)
        v += dt(1.0 - beta2) * grad * grad
        m_hat = m / dt(1.0 - beta1**step)
        v_hat = v / dt(1.0 - beta2**step)
        param -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(eps))


def _load_native():
    from visent import _native  # noqa: PLC0415 deferred so the fallback works uninstalled

    return _native.NativeKernels()


def select_backend(mode=None):
    """Resolve a backend instance for `mode` (defaults to $VISENT_KERNELS)."""
    mode = mode or os.environ.get("VISENT_KERNELS", "auto")
    if mode == "py":
        return NumpyKernels()
    if mode == "native":
        return _load_native()
    if mode == "auto":
        try:
            return _load_native()
        except ImportError:
            return NumpyKernels()
    raise ValueError(f"unknown kernel backend {mode!r} (expected auto/py/native)")


active = select_backend()


def backend_name():
    return active.name
