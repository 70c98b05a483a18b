"""Head forward/backward, soft tokens, frozen decoder, baselines."""

import numpy as np
import pytest

from posetokens.checkpoint import CheckpointError
from posetokens.estimator import (
    EstimatorConfig,
    EvalProtocol,
    Observation,
    bin_labels,
    bins_expectation,
    bins_predict,
    estimator_loss,
    gt_labels,
    head_forward,
    load_estimator,
    make_bins,
    make_estimator,
    make_observations,
    make_regression,
    predict,
    regression_predict,
    save_estimator,
    soft_tokens,
    train_baseline,
    train_estimator,
)
from posetokens.estimator.training import soft_tokens_bwd
from posetokens.numerics import grad_check, rel_error
from posetokens.posedata import generate_dataset, humanoid16, stack_poses
from posetokens.tokenizer import (
    TokenizerConfig,
    detokenize,
    make_tokenizer,
    save_tokenizer,
    tokenize,
)


def tiny_tokenizer(seed=100, **kw):
    base = dict(joints=4, dims=2, num_tokens=2, codebook_size=8, code_dim=6,
                hidden_dim=8, encoder_blocks=1, init_std=0.3)
    base.update(kw)
    return make_tokenizer(TokenizerConfig(**base), np.random.default_rng(seed))


def tiny_estimator(tokenizer, seed=200, **kw):
    base = dict(obs_hidden=8, featurizer_blocks=1, head_blocks=2,
                init_std=0.3, epochs=2, batch_size=16, warmup_steps=2)
    base.update(kw)
    return make_estimator(EstimatorConfig(**base), tokenizer,
                          np.random.default_rng(seed))


def random_obs(model, batch=3, seed=300, hide=None):
    t = model.tokenizer.config
    rng = np.random.default_rng(seed)
    coords = rng.random((batch, t.joints, t.dims))
    vis = np.ones((batch, t.joints), dtype=bool)
    if hide is not None:
        vis[:, hide] = False
    return Observation(coords * vis[..., None], vis), coords


class TestHeadForward:
    def test_deterministic_logits(self):
        model = tiny_estimator(tiny_tokenizer())
        obs, _ = random_obs(model)
        a, _ = head_forward(model, obs)
        b, _ = head_forward(model, obs)
        assert a.tobytes() == b.tobytes()

    def test_logit_shape(self):
        tok = tiny_tokenizer(num_tokens=8, joints=16, codebook_size=128,
                             code_dim=32, hidden_dim=16)
        model = tiny_estimator(tok)
        obs, _ = random_obs(model, batch=2)
        logits, _ = head_forward(model, obs)
        assert logits.shape == (2, 8, 128)

    def test_visibility_pattern_changes_logits(self):
        model = tiny_estimator(tiny_tokenizer())
        obs, _ = random_obs(model, batch=1)
        base, _ = head_forward(model, obs)
        flipped = Observation(obs.values.copy(), obs.vis.copy())
        flipped.vis[0, 2] = False
        flipped.values[0, 2] = 0.0
        changed, _ = head_forward(model, flipped)
        assert not np.allclose(base, changed)


class TestGtLabels:
    def test_matches_tokenize(self):
        tok = tiny_tokenizer()
        rng = np.random.default_rng(7)
        coords = rng.random((1000, 4, 2))
        np.testing.assert_array_equal(gt_labels(tok, coords, chunk=128),
                                      tokenize(tok, coords))

    def test_stable_across_calls(self):
        tok = tiny_tokenizer()
        coords = np.random.default_rng(8).random((10, 4, 2))
        np.testing.assert_array_equal(gt_labels(tok, coords),
                                      gt_labels(tok, coords))


class TestSoftTokens:
    def test_saturated_logits_hit_entry(self):
        tok = tiny_tokenizer()
        logits = np.zeros((1, 2, 8))
        logits[0, 0, 3] = 60.0
        logits[0, 1, 5] = 60.0
        feats, _ = soft_tokens(logits, tok.codebook)
        np.testing.assert_allclose(feats[0, 0], tok.codebook.matrix[3],
                                   atol=1e-9)
        np.testing.assert_allclose(feats[0, 1], tok.codebook.matrix[5],
                                   atol=1e-9)

    def test_two_equal_logits_give_midpoint(self):
        tok = tiny_tokenizer(codebook_size=2)
        logits = np.zeros((1, 2, 2))
        feats, _ = soft_tokens(logits, tok.codebook)
        mid = tok.codebook.matrix.mean(axis=0)
        np.testing.assert_allclose(feats[0, 0], mid, atol=1e-12)

    def test_weights_are_convex(self):
        tok = tiny_tokenizer()
        logits = np.random.default_rng(9).normal(size=(4, 2, 8)) * 3
        _, weights = soft_tokens(logits, tok.codebook)
        assert np.all(weights >= 0)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        tok = tiny_tokenizer()
        rng = np.random.default_rng(10)
        logits = rng.normal(size=(2, 2, 8))
        gfeats = rng.normal(size=(2, 2, 6))

        def value():
            feats, _ = soft_tokens(logits, tok.codebook)
            return float((feats * gfeats).sum())

        _, weights = soft_tokens(logits, tok.codebook)
        analytic = soft_tokens_bwd(gfeats, tok.codebook, weights)
        numeric = np.zeros_like(logits)
        flat, nflat = logits.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + 1e-5
            fp = value()
            flat[i] = orig - 1e-5
            fm = value()
            flat[i] = orig
            nflat[i] = (fp - fm) / 2e-5
        assert rel_error(analytic, numeric) <= 1e-6

    def test_raw_mode_skips_normalization(self):
        tok = tiny_tokenizer()
        logits = np.random.default_rng(11).normal(size=(1, 2, 8))
        feats, weights = soft_tokens(logits, tok.codebook, mode="raw")
        np.testing.assert_array_equal(weights, logits)
        np.testing.assert_allclose(feats[0], logits[0] @ tok.codebook.matrix)


class TestEstimatorLoss:
    def test_saturated_gt_logits_recover_hard_reconstruction(self):
        from posetokens.numerics import smooth_l1
        from posetokens.tokenizer import quantize
        from posetokens.tokenizer.model import decode, encode

        tok = tiny_tokenizer()
        model = tiny_estimator(tok)
        rng = np.random.default_rng(12)
        coords = rng.random((3, 4, 2))
        labels = gt_labels(tok, coords)
        logits = np.full((3, 2, 8), 0.0)
        np.put_along_axis(logits, labels[..., None], 120.0, axis=-1)

        feats, _ = soft_tokens(logits, tok.codebook)
        soft_recon, _ = decode(tok, feats)
        soft_term, _ = smooth_l1(soft_recon, coords)

        enc, _ = encode(tok, coords)
        _, hard_q = quantize(tok.codebook, enc)
        hard_recon, _ = decode(tok, hard_q)
        hard_term, _ = smooth_l1(hard_recon, coords)
        assert soft_term == pytest.approx(hard_term, abs=1e-6)

    def test_decoder_and_codebook_receive_no_gradient(self):
        tok = tiny_tokenizer()
        model = tiny_estimator(tok)
        obs, coords = random_obs(model)
        labels = gt_labels(tok, coords)
        entries_before = tok.codebook.entries.copy()
        estimator_loss(model, obs, coords, labels)
        for p in tok.params():
            assert np.all(p.grad == 0.0), p.name
        np.testing.assert_array_equal(tok.codebook.entries, entries_before)

    def test_head_gradients_match_finite_differences(self):
        tok = tiny_tokenizer()
        model = tiny_estimator(tok)
        obs, coords = random_obs(model, batch=2, hide=1)
        labels = gt_labels(tok, coords)
        params = model.params()

        def loss_fn():
            for p in params:
                p.zero_grad()
            res = estimator_loss(model, obs, coords, labels)
            return res.loss, {p.name: p.grad.copy() for p in params}

        report = grad_check(loss_fn, params, tolerance=1e-4)
        assert report.passed, report.worst()

    def test_ce_only_mode(self):
        tok = tiny_tokenizer()
        model = tiny_estimator(tok, rec_loss=False)
        obs, coords = random_obs(model)
        labels = gt_labels(tok, coords)
        res = estimator_loss(model, obs, coords, labels)
        assert res.rec_loss == 0.0
        assert res.loss == pytest.approx(res.ce_loss)


class TestPredict:
    def test_deterministic(self):
        model = tiny_estimator(tiny_tokenizer())
        obs, _ = random_obs(model)
        assert predict(model, obs).tobytes() == predict(model, obs).tobytes()

    def test_equals_detokenized_argmax_exactly(self):
        model = tiny_estimator(tiny_tokenizer())
        obs, _ = random_obs(model, batch=5)
        logits, _ = head_forward(model, obs)
        indices = np.argmax(logits, axis=-1)
        expected = detokenize(model.tokenizer, indices)
        assert predict(model, obs).tobytes() == expected.tobytes()

    def test_hard_soft_consistency_at_saturation(self):
        from posetokens.tokenizer.model import decode

        tok = tiny_tokenizer()
        model = tiny_estimator(tok)
        obs, _ = random_obs(model, batch=2)
        logits, _ = head_forward(model, obs)
        indices = np.argmax(logits, axis=-1)
        saturated = np.zeros_like(logits)
        np.put_along_axis(saturated, indices[..., None], 50.0, axis=-1)
        feats, _ = soft_tokens(saturated, tok.codebook)
        soft_path, _ = decode(tok, feats)
        hard_path = detokenize(tok, indices)
        np.testing.assert_allclose(soft_path, hard_path, atol=1e-6)


class TestObservations:
    def test_masked_joints_zeroed(self):
        rng = np.random.default_rng(13)
        coords = rng.random((20, 16, 2))
        obs = make_observations(coords, rng, 0.02, (0.5, 0.5))
        hidden = ~obs.vis
        assert hidden.any()
        assert np.all(obs.values[hidden] == 0.0)

    def test_noise_magnitude(self):
        rng = np.random.default_rng(14)
        coords = rng.random((200, 16, 2))
        obs = make_observations(coords, rng, 0.02, (0.0, 0.0))
        err = obs.values - coords
        assert abs(float(err.std()) - 0.02) < 0.002

    def test_eval_protocol_deterministic(self):
        coords = np.random.default_rng(15).random((10, 16, 2))
        proto = EvalProtocol(mask_rate=0.3, seed=42)
        a = proto.observations(coords)
        b = proto.observations(coords)
        assert a.values.tobytes() == b.values.tobytes()
        np.testing.assert_array_equal(a.vis, b.vis)


class TestTraining:
    def build(self):
        sk = humanoid16()
        ds = generate_dataset(sk, 81, train=96, val=24, test=0)
        tok = tiny_tokenizer(joints=16, num_tokens=4, codebook_size=16,
                             hidden_dim=8, init_std=0.1)
        return ds, tok

    def test_deterministic_logs(self):
        ds, tok = self.build()
        logs = []
        for _ in range(2):
            model = tiny_estimator(tok, obs_hidden=8, epochs=2)
            logs.append(train_estimator(model, ds.train, ds.val, rng_seed=3))
        assert logs[0] == logs[1]

    def test_accuracy_above_chance(self):
        ds, tok = self.build()
        model = tiny_estimator(tok, obs_hidden=16, epochs=6, init_std=0.1,
                               learning_rate=3e-3, warmup_steps=5)
        log = train_estimator(model, ds.train, ds.val, rng_seed=4)
        assert log[-1]["token_accuracy"] > 1.0 / 16

    def test_tokenizer_checkpoint_unchanged_by_stage2(self, tmp_path):
        ds, tok = self.build()
        tok_path = tmp_path / "tok.pctc"
        save_tokenizer(tok, tok_path)
        before = tok_path.read_bytes()
        model = tiny_estimator(tok, epochs=1)
        train_estimator(model, ds.train, ds.val, rng_seed=5)
        save_tokenizer(tok, tok_path)
        assert tok_path.read_bytes() == before


class TestBaselines:
    def test_bins_one_hot_decodes_to_center(self):
        centers = (np.arange(64) + 0.5) / 64
        logits = np.full((1, 1, 1, 64), -30.0)
        logits[0, 0, 0, 17] = 30.0
        val = bins_expectation(logits, centers)
        assert val[0, 0, 0] == pytest.approx((17 + 0.5) / 64, abs=1e-9)

    def test_bin_labels_clip(self):
        labels = bin_labels(np.array([[0.0, 0.999], [1.0, -0.2]]), 64)
        np.testing.assert_array_equal(labels, [[0, 63], [63, 0]])

    def test_regression_deterministic(self):
        model = make_regression(EstimatorConfig(obs_hidden=8,
                                                featurizer_blocks=1),
                                joints=4, dims=2,
                                rng=np.random.default_rng(1))
        rng = np.random.default_rng(2)
        obs = Observation(rng.random((3, 4, 2)), np.ones((3, 4), dtype=bool))
        a = regression_predict(model, obs)
        b = regression_predict(model, obs)
        assert a.shape == (3, 4, 2)
        assert a.tobytes() == b.tobytes()

    def test_baselines_train(self):
        sk = humanoid16()
        ds = generate_dataset(sk, 82, train=96, val=24, test=0)
        cfg = EstimatorConfig(obs_hidden=16, featurizer_blocks=1, epochs=3,
                              batch_size=32, learning_rate=3e-3,
                              warmup_steps=5, init_std=0.1)
        reg = make_regression(cfg, 16, 2, np.random.default_rng(3))
        log_r = train_baseline(reg, ds.train, ds.val, rng_seed=6)
        assert log_r[-1]["loss"] < log_r[0]["loss"]
        bins = make_bins(cfg, 16, 2, np.random.default_rng(4), num_bins=16)
        log_b = train_baseline(bins, ds.train, ds.val, rng_seed=7)
        assert log_b[-1]["loss"] < log_b[0]["loss"]
        preds = bins_predict(bins, EvalProtocol(mask_rate=0.3).observations(
            stack_poses(ds.val)[0]))
        assert np.all((preds >= 0) & (preds <= 1))


class TestEstimatorCheckpoint:
    def test_round_trip_and_hash_guard(self, tmp_path):
        tok = tiny_tokenizer()
        model = tiny_estimator(tok)
        tok_path = tmp_path / "tok.pctc"
        est_path = tmp_path / "est.pctc"
        save_tokenizer(tok, tok_path)
        save_estimator(model, est_path, tok_path)
        loaded = load_estimator(est_path, tok_path)
        for a, b in zip(model.head.params(), loaded.head.params()):
            assert a.value.tobytes() == b.value.tobytes()

        other = tiny_tokenizer(seed=999)
        other_path = tmp_path / "other.pctc"
        save_tokenizer(other, other_path)
        with pytest.raises(CheckpointError, match="hash mismatch"):
            load_estimator(est_path, other_path)
