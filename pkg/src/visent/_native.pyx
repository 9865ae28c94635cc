# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels: single-pass loops over flat float buffers.

Mirrors visent.autograd.kernels.NumpyKernels operation for operation; the
numpy fallback is the behavioural reference.
"""

from libc.math cimport exp as c_exp, expf as c_expf
from libc.math cimport log as c_log, logf as c_logf
from libc.math cimport sqrt as c_sqrt, sqrtf as c_sqrtf
from libc.math cimport tanh as c_tanh, tanhf as c_tanhf

import numpy as np


ctypedef fused floating:
    float
    double


def _tanh(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if floating is float:
        for i in range(n):
            out[i] = c_tanhf(x[i])
    else:
        for i in range(n):
            out[i] = c_tanh(x[i])


def _tanh_grad(floating[::1] y, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = y.shape[0]
    for i in range(n):
        out[i] = g[i] * (1.0 - y[i] * y[i])


def _sigmoid(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if floating is float:
        for i in range(n):
            out[i] = <float>1.0 / (<float>1.0 + c_expf(-x[i]))
    else:
        for i in range(n):
            out[i] = 1.0 / (1.0 + c_exp(-x[i]))


def _sigmoid_grad(floating[::1] y, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = y.shape[0]
    for i in range(n):
        out[i] = g[i] * y[i] * (1.0 - y[i])


def _relu(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = x[i] if x[i] > 0.0 else 0.0


def _relu_grad(floating[::1] x, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = g[i] if x[i] > 0.0 else 0.0


def _exp(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if floating is float:
        for i in range(n):
            out[i] = c_expf(x[i])
    else:
        for i in range(n):
            out[i] = c_exp(x[i])


def _exp_grad(floating[::1] y, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = y.shape[0]
    for i in range(n):
        out[i] = g[i] * y[i]


def _log(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    if floating is float:
        for i in range(n):
            out[i] = c_logf(x[i])
    else:
        for i in range(n):
            out[i] = c_log(x[i])


def _log_grad(floating[::1] x, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = g[i] / x[i]


def _square(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = x[i] * x[i]


def _square_grad(floating[::1] x, floating[::1] g, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = 2.0 * x[i] * g[i]


def _softmax_rows(floating[:, ::1] x, floating[:, ::1] out):
    cdef Py_ssize_t r, j, rows = x.shape[0], cols = x.shape[1]
    cdef floating m, s, v
    for r in range(rows):
        m = x[r, 0]
        for j in range(1, cols):
            if x[r, j] > m:
                m = x[r, j]
        s = 0.0
        for j in range(cols):
            if floating is float:
                v = c_expf(x[r, j] - m)
            else:
                v = c_exp(x[r, j] - m)
            out[r, j] = v
            s += v
        for j in range(cols):
            out[r, j] /= s


def _softmax_rows_masked(floating[:, ::1] x, floating[:, ::1] keep, floating[:, ::1] out):
    cdef Py_ssize_t r, j, rows = x.shape[0], cols = x.shape[1]
    cdef floating m, s, v, logit
    cdef floating surrogate = <floating>-1e9
    for r in range(rows):
        m = surrogate
        for j in range(cols):
            logit = x[r, j] if keep[r, j] != 0.0 else surrogate
            if logit > m:
                m = logit
        s = 0.0
        for j in range(cols):
            logit = x[r, j] if keep[r, j] != 0.0 else surrogate
            if floating is float:
                v = c_expf(logit - m) * keep[r, j]
            else:
                v = c_exp(logit - m) * keep[r, j]
            out[r, j] = v
            s += v
        for j in range(cols):
            out[r, j] /= s


def _softmax_rows_grad(floating[:, ::1] p, floating[:, ::1] g, floating[:, ::1] out):
    cdef Py_ssize_t r, j, rows = p.shape[0], cols = p.shape[1]
    cdef floating inner
    for r in range(rows):
        inner = 0.0
        for j in range(cols):
            inner += p[r, j] * g[r, j]
        for j in range(cols):
            out[r, j] = p[r, j] * (g[r, j] - inner)


def _adam_update(floating[::1] param, floating[::1] grad, floating[::1] m,
                 floating[::1] v, double step, double lr, double beta1,
                 double beta2, double eps, double weight_decay):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef floating decay = <floating>(1.0 - lr * weight_decay)
    cdef floating b1 = <floating>beta1, b2 = <floating>beta2
    cdef floating one_m_b1 = <floating>(1.0 - beta1), one_m_b2 = <floating>(1.0 - beta2)
    cdef floating bc1 = <floating>(1.0 - beta1**step), bc2 = <floating>(1.0 - beta2**step)
    cdef floating lr_f = <floating>lr, eps_f = <floating>eps
    cdef floating m_hat, v_hat
    cdef bint do_decay = weight_decay != 0.0
    for i in range(n):
        if do_decay:
            param[i] *= decay
        m[i] = b1 * m[i] + one_m_b1 * grad[i]
        v[i] = b2 * v[i] + one_m_b2 * grad[i] * grad[i]
        m_hat = m[i] / bc1
        v_hat = v[i] / bc2
        if floating is float:
            param[i] -= lr_f * m_hat / (c_sqrtf(v_hat) + eps_f)
        else:
            param[i] -= lr_f * m_hat / (c_sqrt(v_hat) + eps_f)


cdef _flat(arr):
    return np.ascontiguousarray(arr).reshape(-1)


class NativeKernels:
    """Compiled counterpart of NumpyKernels; same flat-array contract."""

    name = "native"

    @staticmethod
    def tanh(x):
        out = np.empty_like(x)
        _tanh(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def tanh_grad(y, g):
        out = np.empty_like(y)
        _tanh_grad(_flat(y), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def sigmoid(x):
        out = np.empty_like(x)
        _sigmoid(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def sigmoid_grad(y, g):
        out = np.empty_like(y)
        _sigmoid_grad(_flat(y), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def relu(x):
        out = np.empty_like(x)
        _relu(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def relu_grad(x, g):
        out = np.empty_like(x)
        _relu_grad(_flat(x), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def exp(x):
        out = np.empty_like(x)
        _exp(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def exp_grad(y, g):
        out = np.empty_like(y)
        _exp_grad(_flat(y), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def log(x):
        out = np.empty_like(x)
        _log(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def log_grad(x, g):
        out = np.empty_like(x)
        _log_grad(_flat(x), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def square(x):
        out = np.empty_like(x)
        _square(_flat(x), out.reshape(-1))
        return out

    @staticmethod
    def square_grad(x, g):
        out = np.empty_like(x)
        _square_grad(_flat(x), _flat(g), out.reshape(-1))
        return out

    @staticmethod
    def softmax_rows(x, keep=None):
        x = np.ascontiguousarray(x)
        out = np.empty_like(x)
        if keep is None:
            _softmax_rows(x, out)
        else:
            _softmax_rows_masked(x, np.ascontiguousarray(keep), out)
        return out

    @staticmethod
    def softmax_rows_grad(p, g):
        p = np.ascontiguousarray(p)
        out = np.empty_like(p)
        _softmax_rows_grad(p, np.ascontiguousarray(g), out)
        return out

    @staticmethod
    def adam_update(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
        _adam_update(
            param.reshape(-1),
            _flat(grad),
            m.reshape(-1),
            v.reshape(-1),
            float(step),
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        )
