"""Tests for the numpy network core: propagation, passes, losses, Adam and persistence."""

import json

import numpy as np
import pytest

from hypergraph import Hypergraph
from neural import (
    MODEL_FORMAT_VERSION,
    ModelParams,
    adam_step,
    autoencoder_loss_and_grads,
    build_propagator,
    decode,
    encode,
    encoder_widths,
    grad_check,
    hgnn_layer,
    init_adam_state,
    init_autoencoder,
    init_ranker,
    listmle_grad,
    listmle_loss,
    load_model,
    normalized_degree_target,
    random_projection,
    rank_forward,
    ranker_loss_and_grads,
    reconstruction_loss,
    save_model,
    true_ranking,
)

# N=12, M=8, every node covered
TWELVE = Hypergraph.from_members(12, [
    [0, 1, 2], [2, 3, 4], [4, 5, 6, 7], [7, 8],
    [8, 9, 10], [10, 11, 0], [1, 5, 9], [3, 6, 11],
])


@pytest.fixture
def propagator():
    return build_propagator(TWELVE, np.random.default_rng(1))


def numeric_listmle_grad(scores, ranking, eps=1e-6):
    grad = np.zeros_like(scores)
    for j in range(scores.size):
        up, down = scores.copy(), scores.copy()
        up[j] += eps
        down[j] -= eps
        grad[j] = (listmle_loss(up, ranking) - listmle_loss(down, ranking)) / (2 * eps)
    return grad


class TestPropagator:
    """The normalized hypergraph operator."""

    def test_single_hyperedge_with_unit_weight(self, triangle):
        P = build_propagator(triangle, w_diag=np.ones(1)).matrix
        np.testing.assert_allclose(P, np.full((3, 3), 1 / 3))

    def test_symmetric_with_bounded_spectrum(self):
        P = build_propagator(TWELVE, w_diag=np.ones(8)).matrix
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        eigenvalues = np.linalg.eigvalsh(P)
        assert eigenvalues.min() >= -1e-12
        assert eigenvalues.max() == pytest.approx(1.0)

    def test_weights_in_unit_interval(self, propagator):
        assert propagator.w_diag.shape == (8,)
        assert np.all((propagator.w_diag >= 0) & (propagator.w_diag <= 1))

    def test_uncovered_node_has_zero_row(self):
        h = Hypergraph.from_members(4, [[0, 1], [1, 2]])
        propagator = build_propagator(h, w_diag=np.ones(2))
        assert propagator.zero_rows.tolist() == [3]
        assert not propagator.matrix[3].any()
        assert not propagator.matrix[:, 3].any()

    def test_weight_length_checked(self, triangle):
        with pytest.raises(ValueError, match="w_diag"):
            build_propagator(triangle, w_diag=np.ones(2))


class TestLayersAndAutoencoder:
    """Forward passes and the reconstruction target."""

    def test_layer_is_non_negative(self, propagator, rng):
        out = hgnn_layer(propagator.matrix, rng.normal(size=(12, 5)), rng.normal(size=(5, 3)))
        assert out.shape == (12, 3)
        assert np.all(out >= 0)

    def test_layer_shape_mismatch(self, propagator, rng):
        with pytest.raises(ValueError, match="shape mismatch"):
            hgnn_layer(propagator.matrix, rng.normal(size=(12, 5)), rng.normal(size=(4, 3)))

    def test_encoder_widths(self):
        assert encoder_widths(12, 8, 2) == [12, 8, 2]
        assert encoder_widths(12, 16, 3) == [12, 16, 16, 4]
        with pytest.raises(ValueError):
            encoder_widths(12, 10, 2)

    def test_embedding_and_output_shapes(self, propagator, rng):
        params = init_autoencoder(12, 8, rng)
        embeddings = encode(propagator.matrix, params)
        assert embeddings.shape == (12, 2)
        assert decode(embeddings, params).shape == (12, 1)

    def test_degree_target(self):
        np.testing.assert_allclose(normalized_degree_target(np.array([1, 2, 3])), [0.0, 0.5, 1.0])
        np.testing.assert_allclose(normalized_degree_target(np.array([4, 4])), [0.5, 0.5])

    def test_reconstruction_loss(self):
        assert reconstruction_loss(np.array([[3.0], [0.0]]), np.array([0.0, 4.0])) == pytest.approx(5.0)
        with pytest.raises(ValueError, match="length mismatch"):
            reconstruction_loss(np.zeros(3), np.zeros(2))


class TestListMLE:
    """Plackett-Luce loss and its gradient."""

    def test_two_items(self):
        loss = listmle_loss(np.array([2.0, 0.5]), np.array([0, 1]))
        assert loss == pytest.approx(np.log1p(np.exp(0.5 - 2.0)))

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(20):
            scores = rng.normal(size=9)
            ranking = rng.permutation(9)
            np.testing.assert_allclose(listmle_grad(scores, ranking),
                                       numeric_listmle_grad(scores, ranking), atol=1e-6)

    def test_gradient_sums_to_zero(self, rng):
        scores = rng.normal(size=15)
        assert listmle_grad(scores, rng.permutation(15)).sum() == pytest.approx(0.0, abs=1e-10)

    def test_stable_for_large_scores(self):
        scores = np.array([1000.0, 999.0, -1000.0])
        ranking = np.array([2, 0, 1])
        assert np.isfinite(listmle_loss(scores, ranking))
        assert np.all(np.isfinite(listmle_grad(scores, ranking)))

    def test_correct_order_with_wide_margins_costs_little(self):
        scores = np.array([30.0, 20.0, 10.0, 0.0])
        assert listmle_loss(scores, np.array([0, 1, 2, 3])) < 1e-4
        assert listmle_loss(scores, np.array([3, 2, 1, 0])) > 50

    def test_target_permutation_breaks_ties_by_index(self):
        assert true_ranking(np.array([2.0, 5.0, 2.0])).tolist() == [1, 0, 2]


class TestGradients:
    """Analytic gradients against central differences."""

    def test_autoencoder(self, propagator, rng):
        params = init_autoencoder(12, 8, rng)
        target = normalized_degree_target(np.array([len(e) for e in TWELVE.incident]))

        def closure(p):
            loss, grads, _ = autoencoder_loss_and_grads(propagator.matrix, p, target)
            return loss, grads

        assert grad_check(closure, params, eps=1e-6, n_coords=200) < 1e-4

    def test_autoencoder_with_hidden_relu(self, propagator, rng):
        params = init_autoencoder(12, 8, rng)
        target = rng.uniform(size=12)

        def closure(p):
            loss, grads, _ = autoencoder_loss_and_grads(propagator.matrix, p, target, relu_hidden=True)
            return loss, grads

        assert grad_check(closure, params, eps=1e-6, n_coords=200) < 1e-4

    def test_ranker(self, propagator, rng):
        features = rng.uniform(size=(12, 2))
        params = init_ranker(2, rng, layers=2, hidden=8)
        labels = rng.uniform(1, 5, size=12)

        def closure(p):
            return ranker_loss_and_grads(propagator.matrix, features, p, labels)

        assert grad_check(closure, params, eps=1e-6, n_coords=200) < 1e-4

    def test_ranker_on_subset(self, propagator, rng):
        features = rng.uniform(size=(12, 2))
        params = init_ranker(2, rng, layers=2, hidden=8)
        subset = np.array([3, 7, 0, 10])
        labels = np.array([2.0, 4.0, 1.0, 3.0])

        def closure(p):
            return ranker_loss_and_grads(propagator.matrix, features, p, labels, subset=subset)

        assert grad_check(closure, params, eps=1e-6, n_coords=200) < 1e-4

    def test_detects_wrong_gradient(self, propagator, rng):
        features = rng.uniform(size=(12, 2))
        params = init_ranker(2, rng, layers=1, hidden=4)
        labels = rng.uniform(1, 5, size=12)

        def broken(p):
            loss, grads = ranker_loss_and_grads(propagator.matrix, features, p, labels)
            return loss, {key: 3.0 * value for key, value in grads.items()}

        assert grad_check(broken, params, eps=1e-6) > 1e-2

    def test_step_size_range(self, propagator, rng):
        params = init_ranker(2, rng)
        with pytest.raises(ValueError, match="eps"):
            grad_check(lambda p: (0.0, p), params, eps=1e-2)


class TestRanker:
    """Score head and feature plumbing."""

    def test_one_score_per_node(self, propagator, rng):
        params = init_ranker(2, rng, layers=2, hidden=8)
        scores = rank_forward(propagator.matrix, rng.uniform(size=(12, 2)), params)
        assert scores.method == 'ahga'
        assert scores.scores.shape == (12,)

    def test_feature_width_checked(self, propagator, rng):
        params = init_ranker(2, rng)
        with pytest.raises(ValueError, match="feature width"):
            rank_forward(propagator.matrix, np.ones((12, 3)), params)

    def test_random_projection_is_seeded(self):
        first = random_projection(12, 4, seed=3)
        assert first.shape == (12, 4)
        np.testing.assert_array_equal(first, random_projection(12, 4, seed=3))


class TestAdam:
    """Bias-corrected Adam."""

    def test_first_step_moves_by_learning_rate(self):
        params = {'w': np.array([1.0, -2.0])}
        grads = {'w': np.array([0.5, -3.0])}
        updated, state = adam_step(params, grads, init_adam_state(params), learning_rate=0.01)
        np.testing.assert_allclose(updated['w'], [0.99, -1.99], atol=1e-8)
        assert state.t == 1

    def test_inputs_left_untouched(self):
        params = {'w': np.array([1.0])}
        state = init_adam_state(params)
        adam_step(params, {'w': np.array([1.0])}, state)
        assert params['w'][0] == 1.0
        assert state.t == 0

    def test_shape_mismatch(self):
        params = {'w': np.zeros(2)}
        with pytest.raises(ValueError, match="gradient shape"):
            adam_step(params, {'w': np.zeros(3)}, init_adam_state(params))

    def test_descends_a_quadratic(self):
        params = {'w': np.array([3.0, -4.0])}
        state = init_adam_state(params)
        start = float(np.sum(params['w'] ** 2))
        for _ in range(200):
            params, state = adam_step(params, {'w': 2.0 * params['w']}, state, learning_rate=0.05)
        assert float(np.sum(params['w'] ** 2)) < start / 10


class TestPersistence:
    """Model archives."""

    def test_round_trip(self, tmp_path, rng):
        model = ModelParams(
            ranker=init_ranker(2, rng, layers=2, hidden=8),
            autoencoder=init_autoencoder(12, 8, rng),
            w_diag=rng.uniform(size=8),
            dims={'d': 8, 'L': 2},
            meta={'seed': 7},
        )
        path = save_model(str(tmp_path / "model.npz"), model)
        loaded = load_model(path)
        assert loaded.dims == {'d': 8, 'L': 2}
        assert loaded.meta == {'seed': 7}
        np.testing.assert_array_equal(loaded.w_diag, model.w_diag)
        assert set(loaded.ranker) == set(model.ranker)
        for key, value in model.autoencoder.items():
            np.testing.assert_array_equal(loaded.autoencoder[key], value)

    def test_unknown_format_rejected(self, tmp_path):
        header = {'format_version': MODEL_FORMAT_VERSION + 1, 'dims': {}, 'meta': {}}
        path = tmp_path / "future.npz"
        np.savez(path, w_diag=np.zeros(0),
                 metadata=np.frombuffer(json.dumps(header).encode('utf-8'), dtype=np.uint8))
        with pytest.raises(ValueError, match="unsupported model format"):
            load_model(str(path))
