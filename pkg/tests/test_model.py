"""Encoders: forward oracles, reparameterization, view fusion, init,
checkpoint round-trips."""

import math

import numpy as np
import pytest

from reference import mlp_forward_bruteforce
from sketchshape.gradcheck import check_shape_chain, check_sketch_chain
from sketchshape.losses import Classifier
from sketchshape.model import (
    GaussianEmbedding,
    Mlp,
    encode_shape,
    encode_shape_batch,
    encode_sketch,
    encode_sketch_batch,
    init_classifier,
    init_mlp,
    init_params,
    init_shape_model,
    init_sketch_model,
    load_shape_checkpoint,
    load_sketch_checkpoint,
    mlp_forward,
    reparameterize,
    save_shape_checkpoint,
    save_sketch_checkpoint,
)
from sketchshape.rng import Rng
from sketchshape.train import TrainConfig


def _tiny_cfg(**overrides):
    base = dict(feature_dim=5, hidden=(7, 6), embed_dim=4, classes=3, views=3, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


class TestMlpForward:
    def test_matches_straight_line_oracle(self):
        rng = Rng(21)
        mlp = init_mlp(rng, [5, 7, 4])
        x = rng.uniform_matrix(3, 5, -2.0, 2.0)
        out, _ = mlp_forward(mlp, x)
        layers = [(w.tolist(), b.tolist()) for w, b in mlp.layers]
        for i in range(3):
            want = mlp_forward_bruteforce(layers, x[i].tolist())
            np.testing.assert_allclose(out[i], want, rtol=1e-12)

    def test_input_dim_checked(self):
        mlp = init_mlp(Rng(0), [5, 4])
        with pytest.raises(ValueError, match="input dim"):
            mlp_forward(mlp, np.zeros((2, 6)))


class TestEncodeSketch:
    def test_zero_parameters_give_zero_embedding(self):
        mlp = Mlp([(np.zeros((6, 5)), np.zeros(6))])
        head = Mlp([(np.zeros((4, 6)), np.zeros(4))])
        model_zero = init_sketch_model(_tiny_cfg(), Rng(0))
        model_zero.backbone = mlp
        model_zero.mu_head = head
        model_zero.logvar_head = Mlp([(np.zeros((4, 6)), np.zeros(4))])
        emb = encode_sketch(model_zero, np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        np.testing.assert_array_equal(emb.mu, np.zeros(4))
        np.testing.assert_array_equal(emb.logvar, np.zeros(4))
        np.testing.assert_array_equal(emb.sigma(), np.ones(4))

    def test_deterministic(self):
        model = init_sketch_model(_tiny_cfg(), Rng(3))
        x = Rng(4).uniform_matrix(1, 5, -1.0, 1.0)[0]
        a = encode_sketch(model, x)
        b = encode_sketch(model, x)
        np.testing.assert_array_equal(a.mu, b.mu)
        np.testing.assert_array_equal(a.logvar, b.logvar)

    def test_matches_forward_oracle(self):
        rng = Rng(22)
        model = init_sketch_model(_tiny_cfg(), rng)
        x = rng.uniform_matrix(1, 5, -2.0, 2.0)[0]
        emb = encode_sketch(model, x)
        # the encoder L2-normalises its input row before the backbone
        xn = (x / math.sqrt(math.fsum(v * v for v in x))).tolist()
        layers = [(w.tolist(), b.tolist()) for w, b in model.backbone.layers]
        h = mlp_forward_bruteforce(layers, xn)
        mu_layers = [(w.tolist(), b.tolist()) for w, b in model.mu_head.layers]
        lv_layers = [(w.tolist(), b.tolist()) for w, b in model.logvar_head.layers]
        np.testing.assert_allclose(emb.mu, mlp_forward_bruteforce(mu_layers, h), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(emb.logvar, mlp_forward_bruteforce(lv_layers, h), rtol=1e-10, atol=1e-12)

    def test_finite_outputs(self):
        model = init_sketch_model(_tiny_cfg(), Rng(5))
        x = Rng(6).uniform_matrix(20, 5, -2.0, 2.0)
        mu, lv, _ = encode_sketch_batch(model, x)
        assert np.isfinite(mu).all() and np.isfinite(lv).all()


class TestReparameterize:
    def test_zero_eps_returns_mu_bitwise(self):
        rng = Rng(23)
        mu = rng.uniform_matrix(3, 4, -2.0, 2.0)
        lv = rng.uniform_matrix(3, 4, -1.0, 1.0)
        z = reparameterize(mu, lv, np.zeros((3, 4)))
        np.testing.assert_array_equal(z, mu)

    def test_standard_normal_case(self):
        eps = Rng(24).normal_matrix(2, 3)
        z = reparameterize(np.zeros((2, 3)), np.zeros((2, 3)), eps)
        np.testing.assert_array_equal(z, eps)

    def test_hand_case(self):
        z = reparameterize(
            np.array([1.0, 1.0]), np.array([math.log(4.0), math.log(4.0)]), np.array([1.0, -1.0])
        )
        np.testing.assert_allclose(z, [3.0, -1.0], rtol=1e-15)

    def test_gaussian_embedding_sample(self):
        emb = GaussianEmbedding(np.array([1.0, 2.0]), np.zeros(2))
        np.testing.assert_array_equal(emb.sample(np.zeros(2)), emb.mu)
        np.testing.assert_allclose(emb.sigma2(), np.ones(2))

    def test_empirical_variance_matches_sigma2(self):
        # variance of z over many draws tracks sigma^2 within 5% per dim
        rng = Rng(25)
        mu = np.array([[0.5, -1.0, 2.0, 0.0]])
        lv = np.array([[math.log(0.25), 0.0, math.log(4.0), math.log(2.0)]])
        draws = 100_000
        eps = rng.normal_matrix(draws, 4)
        z = reparameterize(np.repeat(mu, draws, axis=0), np.repeat(lv, draws, axis=0), eps)
        var = z.var(axis=0)
        np.testing.assert_allclose(var, np.exp(lv[0]), rtol=0.05)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            reparameterize(np.zeros(3), np.zeros(3), np.zeros(4))


class TestEncodeShape:
    def test_identical_views_equal_single_view(self):
        model = init_shape_model(_tiny_cfg(), Rng(26))
        view = Rng(27).uniform_matrix(1, 5, -1.0, 1.0)
        stacked = np.repeat(view, 6, axis=0)
        np.testing.assert_allclose(encode_shape(model, stacked), encode_shape(model, view), rtol=1e-12)

    def test_permutation_invariance_bitwise(self):
        model = init_shape_model(_tiny_cfg(), Rng(28))
        views = Rng(29).uniform_matrix(12, 5, -1.0, 1.0)
        base = encode_shape(model, views)
        perm_rng = Rng(30)
        for _ in range(5):
            perm = perm_rng.permutation(12)
            np.testing.assert_array_equal(encode_shape(model, views[perm]), base)

    def test_matches_forward_oracle(self):
        rng = Rng(31)
        model = init_shape_model(_tiny_cfg(), rng)
        views = rng.uniform_matrix(12, 5, -2.0, 2.0)
        got = encode_shape(model, views)
        layers = [(w.tolist(), b.tolist()) for w, b in model.backbone.layers]
        normed = [
            (np.asarray(v) / math.sqrt(math.fsum(x * x for x in v))).tolist() for v in views.tolist()
        ]
        per_view = [mlp_forward_bruteforce(layers, v) for v in normed]
        pooled = [math.fsum(col) / 12.0 for col in zip(*per_view)]
        proj_layers = [(w.tolist(), b.tolist()) for w, b in model.proj.layers]
        want = mlp_forward_bruteforce(proj_layers, pooled)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    def test_empty_views_rejected(self):
        model = init_shape_model(_tiny_cfg(), Rng(0))
        with pytest.raises(ValueError, match="non-empty"):
            encode_shape(model, np.zeros((0, 5)))

    def test_batch_matches_single(self):
        model = init_shape_model(_tiny_cfg(), Rng(32))
        views = Rng(33).uniform_matrix(9, 5, -1.0, 1.0).reshape(3, 3, 5)
        batch, _ = encode_shape_batch(model, views)
        for i in range(3):
            np.testing.assert_allclose(batch[i], encode_shape(model, views[i]), atol=1e-14)


class TestInit:
    def test_same_seed_identical_parameters(self):
        cfg = _tiny_cfg()
        a = init_params(cfg, Rng(77))
        b = init_params(cfg, Rng(77))
        for pa, pb in zip(
            a[0].parameters() + [a[1].weights] + a[2].parameters(),
            b[0].parameters() + [b[1].weights] + b[2].parameters(),
        ):
            np.testing.assert_array_equal(pa, pb)

    def test_biases_zero_and_weight_bounds(self):
        cfg = _tiny_cfg()
        model = init_sketch_model(cfg, Rng(78))
        for w, b in model.backbone.layers + model.mu_head.layers:
            assert np.all(b == 0.0)
            bound = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.abs(w).max() <= bound

    def test_logvar_head_scaled_down(self):
        cfg = _tiny_cfg()
        model = init_sketch_model(cfg, Rng(79))
        w, b = model.logvar_head.layers[-1]
        bound = 0.1 * math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.abs(w).max() <= bound
        assert np.all(b == 0.0)

    def test_classifier_shape(self):
        cfg = _tiny_cfg()
        c = init_classifier(cfg, Rng(80))
        assert c.weights.shape == (3, 4)
        assert not c.frozen


class TestCheckpoints:
    def test_sketch_round_trip_bitwise(self, tmp_path):
        cfg = _tiny_cfg()
        rng = Rng(81)
        model = init_sketch_model(cfg, rng)
        classifier = Classifier(rng.uniform_matrix(3, 4, -1.0, 1.0), frozen=True)
        path = tmp_path / "sketch.ckpt"
        save_sketch_checkpoint(path, model, classifier)
        loaded, loaded_classifier = load_sketch_checkpoint(path)
        for pa, pb in zip(model.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(classifier.weights, loaded_classifier.weights)
        assert loaded_classifier.frozen

    def test_shape_round_trip_bitwise(self, tmp_path):
        model = init_shape_model(_tiny_cfg(), Rng(82))
        path = tmp_path / "shape.ckpt"
        save_shape_checkpoint(path, model)
        loaded = load_shape_checkpoint(path)
        for pa, pb in zip(model.parameters(), loaded.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_wrong_kind_rejected(self, tmp_path):
        model = init_shape_model(_tiny_cfg(), Rng(83))
        path = tmp_path / "shape.ckpt"
        save_shape_checkpoint(path, model)
        with pytest.raises(ValueError, match="expected a sketch checkpoint"):
            load_sketch_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError, match="magic"):
            load_shape_checkpoint(path)


class TestFullChainGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_sketch_chain(self, seed):
        assert check_sketch_chain(seed) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_shape_chain(self, seed):
        assert check_shape_chain(seed) < 1e-4
