"""The full finite-difference suite: every layer op, every model variant.

Op checks run in float32 at eps 1e-3 on entries in [-1, 1], dims at most
6, with relu/max inputs kept away from their kinks. Each op's output is
scalarized as a weighted sum with fixed nonzero coefficients so no check
degenerates into an identically-zero gradient. Model checks run the whole
graph per variant in float64 at eps 1e-4 with every parameter redrawn
from U(-0.5, 0.5); near-zero initializer-scale gradients would otherwise
drown in finite-difference rounding noise.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from typing import Dict, Tuple

import numpy as np

from ..autograd import ops
from ..autograd.gradcheck import grad_check, grad_check_params
from ..autograd.tensor import Tensor
from ..layers import EmbeddingTable
from ..models import ModelConfig, VEModel, cross_entropy

OP_EPS = 1e-3
MODEL_EPS = 1e-4
THRESHOLD = 1e-3

MODEL_VARIANTS = ("eve-image", "eve-roi", "relational", "top-down",
                  "bottom-up", "hypothesis-only")


def _coeffs(shape, seed) -> Tensor:
    """Zero-mean weights with |c| in [0.5, 1.5].

    The signed spread keeps the scalarized value near zero (float32
    rounding of f is the finite-difference noise floor) while the
    magnitude floor keeps every gradient coordinate well above it.
    """
    rng = np.random.default_rng(seed)
    mag = rng.uniform(0.5, 1.5, size=shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return Tensor((mag * sign).astype(np.float32))


def _weighted(y: Tensor, c: Tensor) -> Tensor:
    return ops.reduce_sum(ops.mul(y, c))


def _uniform(shape, seed, low=-1.0, high=1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=shape).astype(np.float32)


def _away_from_zero(shape, seed, lo=0.2, hi=1.0) -> np.ndarray:
    """Entries in +/-[lo, hi]: keeps relu probes off the kink and
    multiplicative gradient factors away from zero."""
    rng = np.random.default_rng(seed)
    mag = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return (mag * sign).astype(np.float32)


def _distinct(shape, seed) -> np.ndarray:
    """Well-separated entries so max/argmax can't flip under probing."""
    n = int(np.prod(shape))
    vals = np.linspace(-1.0, 1.0, n)
    rng = np.random.default_rng(seed)
    return rng.permutation(vals).reshape(shape).astype(np.float32)


def op_checks() -> "OrderedDict[str, float]":
    cases = OrderedDict()

    def case(name, builder, data):
        x = Tensor(data, requires_grad=True)
        cases[name] = grad_check(builder, x, OP_EPS)

    b_const = Tensor(_uniform((4, 2), 101))
    c32 = _coeffs((3, 2), 102)
    case("matmul_left", lambda x: _weighted(ops.matmul(x, b_const), c32),
         _uniform((3, 4), 1))
    # Positive left factor and weights: the right-input gradient a^T @ c
    # is then a sum of same-sign terms, never a small cancelled residue.
    a_const = Tensor(_uniform((3, 4), 103, low=0.3, high=1.0))
    c32_pos = Tensor(_uniform((3, 2), 102, low=0.5, high=1.5))
    case("matmul_right", lambda x: _weighted(ops.matmul(a_const, x), c32_pos),
         _uniform((4, 2), 2))

    c43 = _coeffs((4, 3), 104)
    case("transpose", lambda x: _weighted(ops.transpose(x), c43),
         _uniform((3, 4), 3))
    case("reshape", lambda x: _weighted(ops.reshape(x, (3, 4)),
                                        _coeffs((3, 4), 105)),
         _uniform((2, 6), 4))

    c23 = _coeffs((2, 3), 106)
    other = Tensor(_away_from_zero((2, 3), 107, lo=0.5))
    row = Tensor(_away_from_zero((3,), 108, lo=0.5))
    case("add", lambda x: _weighted(ops.add(x, other), c23),
         _uniform((2, 3), 5))
    case("add_broadcast_lhs", lambda x: _weighted(ops.add(x, row), c23),
         _uniform((2, 3), 6))
    case("add_broadcast_rhs", lambda x: _weighted(ops.add(other, x), c23),
         _uniform((3,), 7))
    case("sub", lambda x: _weighted(ops.sub(x, other), c23),
         _uniform((2, 3), 8))
    case("sub_broadcast_rhs", lambda x: _weighted(ops.sub(other, x), c23),
         _uniform((3,), 9))
    case("mul", lambda x: _weighted(ops.mul(x, other), c23),
         _uniform((2, 3), 10))
    case("mul_broadcast_rhs", lambda x: _weighted(ops.mul(other, x), c23),
         _away_from_zero((3,), 11, lo=0.5))
    case("neg", lambda x: _weighted(ops.neg(x), c23), _uniform((2, 3), 12))

    case("tanh", lambda x: _weighted(ops.tanh(x), c23), _uniform((2, 3), 13))
    case("sigmoid", lambda x: _weighted(ops.sigmoid(x), c23),
         _uniform((2, 3), 14))
    case("relu", lambda x: _weighted(ops.relu(x), c23),
         _away_from_zero((2, 3), 15))
    case("exp", lambda x: _weighted(ops.exp(x), c23), _uniform((2, 3), 16))
    case("log", lambda x: _weighted(ops.log(x), c23),
         _uniform((2, 3), 17, low=0.5, high=1.5))
    case("square", lambda x: _weighted(ops.square(x), c23),
         _away_from_zero((2, 3), 18, lo=0.3))

    case("reduce_sum_all", lambda x: ops.reduce_sum(x), _uniform((3, 4), 19))
    c4 = _coeffs((4,), 109)
    case("reduce_sum_axis0", lambda x: _weighted(ops.reduce_sum(x, axis=0),
                                                 c4),
         _uniform((3, 4), 20))
    case("reduce_mean_all", lambda x: ops.reduce_mean(x), _uniform((3, 4), 21))
    c3 = _coeffs((3,), 110)
    case("reduce_mean_axis1", lambda x: _weighted(ops.reduce_mean(x, axis=1),
                                                  c3),
         _uniform((3, 4), 22))
    case("reduce_max_all", lambda x: ops.reduce_max(x), _distinct((3, 4), 23))
    case("reduce_max_axis1", lambda x: _weighted(ops.reduce_max(x, axis=1),
                                                 c3),
         _distinct((3, 4), 24))

    tail = Tensor(_uniform((2, 4), 111))
    c54 = _coeffs((5, 4), 112)
    case("concat_first", lambda x: _weighted(ops.concat([x, tail], axis=0),
                                             c54),
         _uniform((3, 4), 25))
    head = Tensor(_uniform((3, 4), 113))
    case("concat_second", lambda x: _weighted(ops.concat([head, x], axis=0),
                                              c54),
         _uniform((2, 4), 26))

    # Positive weights: a row gathered twice accumulates two same-sign
    # coefficient contributions instead of a possibly-cancelling pair.
    c_rows = Tensor(_uniform((4, 3), 114, low=0.5, high=1.5))
    case("gather_rows_repeated",
         lambda x: _weighted(ops.gather_rows(x, [2, 0, 1, 2]), c_rows),
         _uniform((4, 3), 27))
    c_rows3 = Tensor(_uniform((3, 3), 115, low=0.5, high=1.5))
    case("gather_rows_frozen",
         lambda x: _weighted(ops.gather_rows(x, [2, 1, 2], frozen_rows=(0,)),
                             c_rows3),
         _uniform((4, 3), 28))

    # Small input spread keeps all probabilities O(1), so no gradient
    # coordinate sinks below the float32 finite-difference noise floor.
    sm_c = _coeffs((2, 3), 117)
    case("softmax_axis1", lambda x: _weighted(ops.softmax(x, axis=1), sm_c),
         _uniform((2, 3), 29, low=-0.4, high=0.4))
    # Opposite-sign weights within each two-slot column: the gradient
    # p0*p1*(c0 - c1) stays large however the magnitudes land.
    sm_c0 = Tensor(np.stack([_uniform((3,), 119, low=0.5, high=1.5),
                             -_uniform((3,), 120, low=0.5, high=1.5)]))
    case("softmax_axis0", lambda x: _weighted(ops.softmax(x, axis=0), sm_c0),
         _uniform((2, 3), 30, low=-0.4, high=0.4))
    mask = np.zeros((2, 4), dtype=bool)
    mask[:, 2] = True
    sm_cm = _coeffs((2, 4), 118)
    case("softmax_masked",
         lambda x: _weighted(ops.softmax(x, axis=1, mask=mask), sm_cm),
         _uniform((2, 4), 31, low=-0.4, high=0.4))

    case("cross_entropy", lambda x: cross_entropy(x, 1), _uniform((3,), 32))

    w1 = Tensor(_uniform((4, 3), 116))
    case("composite_affine_tanh_ce",
         lambda x: cross_entropy(
             ops.reshape(ops.tanh(ops.matmul(ops.reshape(x, (1, 4)), w1)),
                         (3,)), 2),
         _uniform((4,), 33))

    return cases


def _randomize(model: VEModel, seed: int) -> None:
    rng = np.random.default_rng(seed)
    state = {}
    for name, t in model.parameters().items():
        arr = rng.uniform(-0.5, 0.5, size=t.shape)
        if name == "embedding.vectors":
            arr[0] = 0.0
        state[name] = arr
    model.load_state(state)


def model_checks() -> "OrderedDict[str, float]":
    """Max relative FD error of the full loss graph, one entry per variant."""
    results = OrderedDict()
    tokens = [2, 3, 4, 5]
    regions = np.random.default_rng(7).uniform(-1.0, 1.0, size=(3, 5))
    for variant in MODEL_VARIANTS:
        table = EmbeddingTable.random_init(
            ["a", "b", "c", "d", "e"], dim=8, seed=1, dtype=np.float64)
        cfg = ModelConfig.for_variant(
            variant, embed_dim=8, hidden_size=8, attn_dim=8, fusion_width=8,
            classifier_hidden=8, rn_g_hidden=8, rn_g_out=8, seed=3,
            region_dim=None if variant == "hypothesis-only" else 5)
        model = VEModel(cfg, table)
        _randomize(model, seed=12)
        feed = None if variant == "hypothesis-only" else regions

        def loss_fn(m=model, r=feed):
            return cross_entropy(m.forward(tokens, r), 2)

        errors = grad_check_params(loss_fn, model.parameters(), eps=MODEL_EPS)
        results[f"model[{variant}]"] = max(errors.values())
    return results


def run_suite() -> Tuple["OrderedDict[str, float]", bool, float]:
    """(per-check max rel err, all under 1e-3, elapsed seconds)."""
    start = time.perf_counter()
    results = op_checks()
    results.update(model_checks())
    elapsed = time.perf_counter() - start
    ok = all(v < THRESHOLD for v in results.values())
    return results, ok, elapsed
