"""Layer semantics: embeddings, GRU, both attentions, fusion, classifier."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visent.autograd import ComputationRecord, Tensor, backward, grad_check, ops
from visent.errors import (
    ContractError,
    DegenerateSliceError,
    DimensionError,
    EmptyPremiseError,
    VocabularyError,
)
from visent.layers import (
    AttentionParams,
    EmbeddingTable,
    GRUParams,
    MLPParams,
    cross_attention,
    embed,
    fuse,
    gru_forward,
    init_uniform,
    mlp_classify,
    mlp_forward,
    self_attention,
)


def identity_attention(dim: int, scale: float = 1.0) -> AttentionParams:
    eye = np.eye(dim, dtype=np.float32)
    return AttentionParams(w_query=Tensor(eye), w_key=Tensor(eye),
                           w_value=Tensor(eye), scale=scale)


def random_self_attention(dim: int, seed: int) -> AttentionParams:
    rng = np.random.default_rng(seed)
    return AttentionParams.for_self(dim, attn_dim=dim, value_dim=dim, rng=rng)


class TestInitUniform:
    def test_values_within_bound(self):
        rng = np.random.default_rng(0)
        t = init_uniform(rng, (50, 20), fan_in=16)
        bound = 1.0 / 4.0
        assert np.all(np.abs(t.data) <= bound)
        assert t.requires_grad

    def test_seeded_determinism(self):
        a = init_uniform(np.random.default_rng(3), (4, 4), fan_in=4)
        b = init_uniform(np.random.default_rng(3), (4, 4), fan_in=4)
        assert np.array_equal(a.data, b.data)

    def test_bad_fan_in_rejected(self):
        with pytest.raises(ContractError):
            init_uniform(np.random.default_rng(0), (2, 2), fan_in=0)


class TestEmbeddingTable:
    def test_rows_offset_by_reserved_slots(self):
        vectors = np.zeros((4, 3), dtype=np.float32)
        vectors[1:] = 1.0
        vectors[1] = 0.5
        table = EmbeddingTable(["cat", "dog"], vectors)
        assert table.vocabulary == {"cat": 2, "dog": 3}
        assert table.pad_index == 0
        assert table.unk_index == 1
        assert table.size == 4
        assert table.dim == 3

    def test_pad_row_must_be_zero(self):
        vectors = np.ones((3, 2), dtype=np.float32)
        with pytest.raises(ContractError):
            EmbeddingTable(["x"], vectors)

    def test_duplicate_tokens_rejected(self):
        vectors = np.zeros((4, 2), dtype=np.float32)
        with pytest.raises(ContractError):
            EmbeddingTable(["x", "x"], vectors)

    def test_reserved_tokens_rejected(self):
        vectors = np.zeros((3, 2), dtype=np.float32)
        with pytest.raises(ContractError):
            EmbeddingTable(["<pad>"], vectors)
        with pytest.raises(ContractError):
            EmbeddingTable(["<unk>"], vectors)

    def test_wrong_vector_count_rejected(self):
        with pytest.raises(DimensionError):
            EmbeddingTable(["a", "b"], np.zeros((3, 2), dtype=np.float32))

    def test_unknown_token_falls_back_to_unk(self):
        table = EmbeddingTable.random_init(["a"], dim=4, seed=0)
        assert table.index_of("a") == 2
        assert table.index_of("zebra") == table.unk_index

    def test_lookup_maps_each_token(self):
        table = EmbeddingTable.random_init(["a", "b"], dim=4, seed=0)
        assert table.lookup(["b", "nope", "a"]) == [3, 1, 2]

    def test_random_init_respects_bound_and_pad(self):
        table = EmbeddingTable.random_init(["a", "b", "c"], dim=16, seed=5)
        assert np.all(table.vectors.data[0] == 0.0)
        assert np.all(np.abs(table.vectors.data) <= 0.25)

    def test_random_init_deterministic(self):
        a = EmbeddingTable.random_init(["a", "b"], dim=8, seed=9)
        b = EmbeddingTable.random_init(["a", "b"], dim=8, seed=9)
        assert np.array_equal(a.vectors.data, b.vectors.data)


class TestEmbed:
    def test_empty_sequence(self):
        table = EmbeddingTable.random_init(["a"], dim=5, seed=0)
        out = embed([], table)
        assert out.shape == (0, 5)

    def test_all_pad_is_zero_matrix(self):
        table = EmbeddingTable.random_init(["a"], dim=5, seed=0)
        out = embed([0, 0, 0], table)
        assert out.shape == (3, 5)
        assert not out.data.any()

    def test_lookup_stacks_table_rows(self):
        table = EmbeddingTable.random_init(["a", "b"], dim=6, seed=1)
        out = embed([3, 2], table)
        assert np.array_equal(out.data[0], table.vectors.data[3])
        assert np.array_equal(out.data[1], table.vectors.data[2])

    def test_out_of_range_index(self):
        table = EmbeddingTable.random_init(["a"], dim=4, seed=0)
        with pytest.raises(VocabularyError):
            embed([7], table)
        with pytest.raises(VocabularyError):
            embed([-1], table)

    def test_pad_row_gets_no_gradient(self):
        table = EmbeddingTable.random_init(["a"], dim=3, seed=0)
        record = ComputationRecord()
        with record:
            rows = embed([0, 2], table)
            loss = ops.reduce_sum(ops.square(rows))
        backward(loss, record)
        assert not table.vectors.grad[0].any()
        assert table.vectors.grad[2].any()


class TestGRU:
    def scalar_params(self):
        one = lambda: Tensor(np.ones((1, 1), dtype=np.float32), requires_grad=True)
        zero = lambda: Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)
        return GRUParams(w_z=one(), u_z=one(), b_z=zero(),
                         w_r=one(), u_r=one(), b_r=zero(),
                         w_h=one(), u_h=one(), b_h=zero())

    def test_scalar_step_oracle(self):
        # Hand-evaluated recurrence with unit weights, x=1, h0=0:
        #   z = r = sigmoid(1), cand = tanh(1 + 1*(r*0)) = tanh(1)
        #   h' = (1-z)*0 + z*tanh(1) = 0.7310586 * 0.7615942 = 0.5567699
        states, final = gru_forward(Tensor([[1.0]]), self.scalar_params())
        z = 1.0 / (1.0 + np.exp(-1.0))
        expected = z * np.tanh(1.0)
        assert final.shape == (1,)
        assert abs(final.item() - expected) < 1e-6
        assert abs(final.item() - 0.5567699) < 1e-6
        assert np.allclose(states.data, [[expected]], atol=1e-6)

    def test_zero_weights_give_zero_states(self):
        zero_m = lambda: Tensor(np.zeros((1, 1), dtype=np.float32))
        zero_v = lambda: Tensor(np.zeros(1, dtype=np.float32))
        params = GRUParams(w_z=zero_m(), u_z=zero_m(), b_z=zero_v(),
                           w_r=zero_m(), u_r=zero_m(), b_r=zero_v(),
                           w_h=zero_m(), u_h=zero_m(), b_h=zero_v())
        states, final = gru_forward(Tensor([[1.0], [2.0], [3.0]]), params)
        assert not states.data.any()
        assert not final.data.any()

    def test_empty_sequence_returns_h0(self):
        params = GRUParams.create(4, 3, np.random.default_rng(0))
        h0 = Tensor(np.arange(3, dtype=np.float32))
        states, final = gru_forward(Tensor(np.zeros((0, 4), dtype=np.float32)),
                                    params, h0=h0)
        assert states.shape == (0, 3)
        assert np.array_equal(final.data, h0.data)

    def test_final_ignores_trailing_pads(self):
        params = GRUParams.create(4, 3, np.random.default_rng(1))
        rng = np.random.default_rng(2)
        seq = rng.uniform(-1, 1, size=(3, 4)).astype(np.float32)
        padded = np.concatenate(
            [seq, np.zeros((2, 4), dtype=np.float32)], axis=0)
        _, final_plain = gru_forward(Tensor(seq), params)
        states, final_padded = gru_forward(Tensor(padded), params, length=3)
        assert states.shape == (5, 3)
        assert np.array_equal(final_plain.data, final_padded.data)

    def test_length_zero_returns_h0(self):
        params = GRUParams.create(2, 2, np.random.default_rng(0))
        seq = Tensor(np.ones((2, 2), dtype=np.float32))
        _, final = gru_forward(seq, params, length=0)
        assert not final.data.any()

    def test_shape_contracts(self):
        params = GRUParams.create(4, 3, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            gru_forward(Tensor(np.zeros(4, dtype=np.float32)), params)
        with pytest.raises(DimensionError):
            gru_forward(Tensor(np.zeros((2, 5), dtype=np.float32)), params)
        with pytest.raises(ContractError):
            gru_forward(Tensor(np.zeros((2, 4), dtype=np.float32)), params,
                        length=3)

    def test_param_shape_validation(self):
        good = GRUParams.create(3, 2, np.random.default_rng(0))
        bad = good.tensors()
        bad["u_z"] = Tensor(np.zeros((3, 2), dtype=np.float32))
        with pytest.raises(DimensionError):
            GRUParams(**bad)

    def test_gradients_pass_finite_difference_check(self):
        rng = np.random.default_rng(4)
        params = GRUParams.create(3, 2, rng, dtype=np.float64)
        seq = Tensor(rng.uniform(-1, 1, size=(3, 3)))
        coeffs = Tensor(rng.uniform(0.5, 1.5, size=(2,)))
        worst = 0.0
        for tensor in params.tensors().values():
            def f(_):
                _, final = gru_forward(seq, params)
                return ops.reduce_sum(ops.mul(final, coeffs))
            worst = max(worst, grad_check(f, tensor, eps=1e-4))
        assert worst < 1e-3


class TestSelfAttention:
    def test_single_row(self):
        params = random_self_attention(3, seed=0)
        x = Tensor(np.array([[0.3, -0.2, 0.5]], dtype=np.float32))
        y, weights = self_attention(x, params)
        assert np.allclose(weights.data, [[1.0]], atol=1e-6)
        expected = x.data @ params.w_value.data
        assert np.allclose(y.data, expected, atol=1e-6)

    def test_identical_rows_give_uniform_weights(self):
        params = random_self_attention(4, seed=1)
        row = np.random.default_rng(2).uniform(-1, 1, 4).astype(np.float32)
        x = Tensor(np.stack([row, row, row]))
        _, weights = self_attention(x, params)
        assert np.allclose(weights.data, 1.0 / 3.0, atol=1e-6)

    def test_identity_projection_oracle(self):
        # Q = K = X = I(2), so scores = I and each row is softmax over
        # one 1 and one 0: e/(e+1) = 0.7310586 against 0.2689414.
        params = identity_attention(2, scale=1.0)
        x = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32))
        y, weights = self_attention(x, params)
        hi = np.e / (np.e + 1.0)
        lo = 1.0 / (np.e + 1.0)
        assert np.allclose(weights.data, [[hi, lo], [lo, hi]], atol=1e-6)
        assert np.allclose(weights.data, [[0.731, 0.269], [0.269, 0.731]],
                           atol=5e-4)
        assert np.allclose(y.data, weights.data @ x.data, atol=1e-6)

    def test_masked_keys_get_zero_weight(self):
        params = random_self_attention(3, seed=3)
        x = Tensor(np.random.default_rng(4).uniform(-1, 1, (4, 3)).astype(np.float32))
        mask = np.array([False, False, True, True])
        _, weights = self_attention(x, params, mask=mask)
        assert np.all(weights.data[:, 2:] == 0.0)
        assert np.allclose(weights.data.sum(axis=1), 1.0, atol=1e-6)

    def test_all_masked_rejected(self):
        params = random_self_attention(2, seed=0)
        x = Tensor(np.ones((2, 2), dtype=np.float32))
        with pytest.raises(DegenerateSliceError):
            self_attention(x, params, mask=np.array([True, True]))

    def test_empty_sequence_rejected(self):
        params = random_self_attention(2, seed=0)
        with pytest.raises(DegenerateSliceError):
            self_attention(Tensor(np.zeros((0, 2), dtype=np.float32)), params)

    def test_mask_shape_contract(self):
        params = random_self_attention(2, seed=0)
        x = Tensor(np.ones((2, 2), dtype=np.float32))
        with pytest.raises(DimensionError):
            self_attention(x, params, mask=np.array([True]))

    def test_query_key_width_contract(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionError):
            AttentionParams(
                w_query=init_uniform(rng, (3, 4), 3),
                w_key=init_uniform(rng, (3, 5), 3),
                w_value=init_uniform(rng, (3, 4), 3),
                scale=0.5)

    def test_permutation_equivariance(self):
        params = random_self_attention(5, seed=6)
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, (6, 5)).astype(np.float32)
        perm = rng.permutation(6)
        y, _ = self_attention(Tensor(x), params)
        y_perm, _ = self_attention(Tensor(x[perm]), params)
        assert np.allclose(y_perm.data, y.data[perm], atol=1e-5)

    def test_gradients_pass_finite_difference_check(self):
        rng = np.random.default_rng(8)
        params = AttentionParams.for_self(3, attn_dim=3, value_dim=3,
                                          rng=rng, dtype=np.float64)
        x = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
        coeffs = Tensor(rng.uniform(0.5, 1.5, size=(3, 3)))
        worst = 0.0
        targets = list(params.tensors().values()) + [x]
        for tensor in targets:
            def f(_):
                y, _ = self_attention(x, params)
                return ops.reduce_sum(ops.mul(y, coeffs))
            worst = max(worst, grad_check(f, tensor, eps=1e-4))
        assert worst < 1e-3


class TestCrossAttention:
    def cross_params(self, text_dim, region_dim, seed):
        rng = np.random.default_rng(seed)
        return AttentionParams.for_cross(text_dim, region_dim, attn_dim=4,
                                         value_dim=3, rng=rng)

    def test_single_region(self):
        params = self.cross_params(3, 2, seed=0)
        text = Tensor(np.array([0.1, -0.4, 0.2], dtype=np.float32))
        regions = Tensor(np.array([[0.5, -0.3]], dtype=np.float32))
        attended, weights = cross_attention(text, regions, params)
        assert np.allclose(weights.data, [1.0], atol=1e-6)
        expected = regions.data @ params.w_value.data
        assert np.allclose(attended.data, expected[0], atol=1e-6)

    def test_identical_regions_give_uniform_weights(self):
        params = self.cross_params(3, 2, seed=1)
        text = Tensor(np.array([0.3, 0.0, -0.2], dtype=np.float32))
        row = np.array([0.4, 0.7], dtype=np.float32)
        regions = Tensor(np.stack([row] * 4))
        _, weights = cross_attention(text, regions, params)
        assert np.allclose(weights.data, 0.25, atol=1e-6)

    def test_known_scores_softmax_oracle(self):
        # Zero query, identity key and a [4] score vector turn the scalar
        # regions arctanh([0, .25, .5]) into raw scores [0, 1, 2].
        params = AttentionParams(
            w_query=Tensor(np.zeros((1, 1), dtype=np.float32)),
            w_key=Tensor(np.eye(1, dtype=np.float32)),
            w_value=Tensor(np.eye(1, dtype=np.float32)),
            scale=1.0,
            score=Tensor(np.array([[4.0]], dtype=np.float32)))
        regions = Tensor(np.arctanh(
            np.array([[0.0], [0.25], [0.5]], dtype=np.float32)))
        text = Tensor(np.zeros(1, dtype=np.float32))
        attended, weights = cross_attention(text, regions, params)
        expected = np.exp([0.0, 1.0, 2.0])
        expected /= expected.sum()
        assert np.allclose(weights.data, expected, atol=1e-6)
        assert np.allclose(weights.data, [0.0900, 0.2447, 0.6652], atol=5e-5)
        assert np.allclose(attended.data,
                           weights.data @ regions.data, atol=1e-6)

    def test_empty_regions_rejected(self):
        params = self.cross_params(3, 2, seed=2)
        text = Tensor(np.zeros(3, dtype=np.float32))
        with pytest.raises(EmptyPremiseError):
            cross_attention(text, Tensor(np.zeros((0, 2), dtype=np.float32)),
                            params)

    def test_requires_score_projection(self):
        params = random_self_attention(3, seed=0)
        with pytest.raises(ContractError):
            cross_attention(Tensor(np.zeros(3, dtype=np.float32)),
                            Tensor(np.zeros((2, 3), dtype=np.float32)), params)

    def test_duplicated_regions_halve_weights(self):
        params = self.cross_params(3, 4, seed=5)
        rng = np.random.default_rng(6)
        text = Tensor(rng.uniform(-1, 1, 3).astype(np.float32))
        regions = rng.uniform(-1, 1, (3, 4)).astype(np.float32)
        attended, weights = cross_attention(text, Tensor(regions), params)
        doubled = np.concatenate([regions, regions], axis=0)
        attended2, weights2 = cross_attention(text, Tensor(doubled), params)
        assert np.allclose(weights2.data[:3], weights.data / 2.0, atol=1e-5)
        assert np.allclose(weights2.data[3:], weights.data / 2.0, atol=1e-5)
        assert np.allclose(attended2.data, attended.data, atol=1e-5)

    def test_gradients_pass_finite_difference_check(self):
        rng = np.random.default_rng(9)
        params = AttentionParams.for_cross(3, 4, attn_dim=3, value_dim=2,
                                           rng=rng, dtype=np.float64)
        text = Tensor(rng.uniform(-1, 1, 3), requires_grad=True)
        regions = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
        coeffs = Tensor(rng.uniform(0.5, 1.5, size=(2,)))
        worst = 0.0
        targets = list(params.tensors().values()) + [text, regions]
        for tensor in targets:
            def f(_):
                attended, _ = cross_attention(text, regions, params)
                return ops.reduce_sum(ops.mul(attended, coeffs))
            worst = max(worst, grad_check(f, tensor, eps=1e-4))
        assert worst < 1e-3


class TestFuse:
    def test_identity_projection_oracle(self):
        eye = Tensor(np.eye(2, dtype=np.float32))
        out = fuse(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]), eye, eye)
        assert np.allclose(out.data, [3.0, 8.0], atol=1e-6)

    def test_zero_projection_annihilates(self):
        eye = Tensor(np.eye(2, dtype=np.float32))
        zero = Tensor(np.zeros((2, 2), dtype=np.float32))
        out = fuse(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]), zero, eye)
        assert not out.data.any()

    def test_equal_inputs_identity_projections_square(self):
        eye = Tensor(np.eye(3, dtype=np.float32))
        out = fuse(Tensor([1.0, -2.0, 3.0]), Tensor([1.0, -2.0, 3.0]), eye, eye)
        assert np.allclose(out.data, [1.0, 4.0, 9.0], atol=1e-6)

    def test_width_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionError):
            fuse(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]),
                 init_uniform(rng, (2, 3), 2), init_uniform(rng, (2, 4), 2))


class TestMLP:
    def test_zero_params_give_zero_logits(self):
        params = MLPParams(layers=[(Tensor(np.zeros((4, 3), dtype=np.float32)),
                                    Tensor(np.zeros(3, dtype=np.float32)))])
        logits = mlp_classify(Tensor(np.ones(4, dtype=np.float32)), params)
        assert np.array_equal(logits.data, np.zeros(3, dtype=np.float32))

    def test_identity_layer_passes_through(self):
        params = MLPParams(layers=[(Tensor(np.eye(3, dtype=np.float32)),
                                    Tensor(np.zeros(3, dtype=np.float32)))])
        logits = mlp_classify(Tensor([1.0, 2.0, 3.0]), params)
        assert np.allclose(logits.data, [1.0, 2.0, 3.0], atol=1e-6)

    def test_logit_shift_keeps_argmax(self):
        params = MLPParams(layers=[(Tensor(np.eye(3, dtype=np.float32)),
                                    Tensor(np.zeros(3, dtype=np.float32)))])
        logits = mlp_classify(Tensor([0.2, -1.0, 0.9]), params)
        shifted = logits.data + 5.0
        assert np.argmax(logits.data) == np.argmax(shifted)

    def test_relu_between_but_not_after_layers(self):
        neg = Tensor(np.array([[-1.0]], dtype=np.float32))
        b = Tensor(np.zeros(1, dtype=np.float32))
        one_layer = MLPParams(layers=[(neg, b)])
        out = mlp_forward(Tensor([1.0]), one_layer)
        assert out.data[0] == pytest.approx(-1.0)

        # Two layers: the hidden -1 is relu'd to 0, so the output is 0.
        two_layer = MLPParams(layers=[(neg, b),
                                      (Tensor(np.array([[1.0]], dtype=np.float32)),
                                       Tensor(np.zeros(1, dtype=np.float32)))])
        out = mlp_forward(Tensor([1.0]), two_layer)
        assert out.data[0] == pytest.approx(0.0)

    def test_widths_must_chain(self):
        rng = np.random.default_rng(0)
        w1 = init_uniform(rng, (4, 5), 4)
        b1 = Tensor(np.zeros(5, dtype=np.float32))
        w2 = init_uniform(rng, (6, 3), 6)
        b2 = Tensor(np.zeros(3, dtype=np.float32))
        with pytest.raises(DimensionError):
            MLPParams(layers=[(w1, b1), (w2, b2)])

    def test_bias_width_must_match(self):
        w = Tensor(np.zeros((2, 3), dtype=np.float32))
        b = Tensor(np.zeros(2, dtype=np.float32))
        with pytest.raises(DimensionError):
            MLPParams(layers=[(w, b)])

    def test_empty_mlp_rejected(self):
        with pytest.raises(ContractError):
            MLPParams(layers=[])

    def test_classifier_requires_three_logits(self):
        params = MLPParams(layers=[(Tensor(np.zeros((3, 4), dtype=np.float32)),
                                    Tensor(np.zeros(4, dtype=np.float32)))])
        with pytest.raises(ContractError):
            mlp_classify(Tensor(np.zeros(3, dtype=np.float32)), params)

    def test_create_chains_widths(self):
        params = MLPParams.create([8, 5, 3], np.random.default_rng(0))
        assert params.in_width == 8
        assert params.out_width == 3
        assert len(params.layers) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=5),
       st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_self_attention_rows_are_distributions(n, dim, seed):
    rng = np.random.default_rng(seed)
    params = AttentionParams.for_self(dim, attn_dim=dim, value_dim=dim, rng=rng)
    x = Tensor(rng.uniform(-2, 2, (n, dim)).astype(np.float32))
    _, weights = self_attention(x, params)
    assert np.all(weights.data >= 0.0)
    assert np.allclose(weights.data.sum(axis=1), 1.0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=6),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_cross_attention_weights_are_a_distribution(n, seed):
    rng = np.random.default_rng(seed)
    params = AttentionParams.for_cross(3, 4, attn_dim=3, value_dim=2, rng=rng)
    text = Tensor(rng.uniform(-1, 1, 3).astype(np.float32))
    regions = Tensor(rng.uniform(-2, 2, (n, 4)).astype(np.float32))
    _, weights = cross_attention(text, regions, params)
    assert weights.shape == (n,)
    assert np.all(weights.data >= 0.0)
    assert weights.data.sum() == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=5),
       st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_gru_final_matches_last_state_row(n, seed):
    rng = np.random.default_rng(seed)
    params = GRUParams.create(3, 2, rng)
    seq = Tensor(rng.uniform(-1, 1, (n, 3)).astype(np.float32))
    states, final = gru_forward(seq, params)
    assert states.shape == (n, 2)
    assert np.array_equal(final.data, states.data[-1])
