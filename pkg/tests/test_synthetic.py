import json
import math

import numpy as np
import pytest

from viewtta import (
    DEFAULT_VIEW,
    FeatureSet,
    MetricConfig,
    PROTOTYPE_SCALE,
    SynthConfig,
    ToyModel,
    TrainConfig,
    aug_view_name,
    cross_entropy,
    default_view_arrays,
    generate,
    gradnorm_score,
    load_features,
    load_model,
    loss_grad,
    predict,
    resolve_planted_views,
    save_features,
    save_model,
    train,
    uncertainty_of_view,
    validate_manifest,
)

SMALL = SynthConfig(num_classes=3, num_aug_views=3, feature_dim=6, samples_per_class=10,
                    planted_views=(0, 1, 2), seed=0)


def tiny_model(weights, bias, dropout_rate=0.0):
    return ToyModel(
        weights=np.asarray(weights, dtype=float),
        bias=np.asarray(bias, dtype=float),
        dropout_rate=dropout_rate,
        learning_rate=0.1,
        epochs=1,
        batch_size=1,
        seed=0,
    )


class TestSynthConfig:
    def test_defaults_are_valid(self):
        cfg = SynthConfig()
        assert cfg.num_classes == 5
        assert cfg.num_aug_views == 4
        assert cfg.feature_dim == 16
        assert cfg.samples_per_class == 200
        assert cfg.train_count_per_class() == 160

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_classes": 1},
            {"num_aug_views": 0},
            {"feature_dim": 0},
            {"samples_per_class": 1},
            {"noise_default": -0.1},
            {"noise_optimal": float("nan")},
            {"train_fraction": 0.0},
            {"train_fraction": 1.0},
            {"planted_views": (0, 1)},           # wrong length for 5 classes
            {"planted_views": (0, 1, 2, 3, 9)},  # view index out of range
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValueError):
            SynthConfig(**kwargs)

    def test_planted_view_may_not_be_noisier(self):
        with pytest.raises(ValueError, match="noise_optimal"):
            SynthConfig(noise_optimal=1.5, noise_other=1.0)
        # equality stays legal so a fully noise-free setup is expressible
        SynthConfig(noise_default=0.0, noise_optimal=0.0, noise_other=0.0)

    def test_split_must_leave_both_sides_non_empty(self):
        with pytest.raises(ValueError, match="empty split"):
            SynthConfig(samples_per_class=2, train_fraction=0.95)

    def test_view_set_naming(self):
        vs = SynthConfig(num_aug_views=3).view_set()
        assert vs.default_view == DEFAULT_VIEW
        assert vs.augmentation_views == ["aug0", "aug1", "aug2"]
        assert aug_view_name(7) == "aug7"


class TestPlantedViews:
    def test_explicit_views_pass_through(self):
        cfg = SynthConfig(planted_views=(3, 2, 1, 0, 3))
        assert resolve_planted_views(cfg) == (3, 2, 1, 0, 3)

    def test_drawn_views_are_seeded_and_in_range(self):
        cfg = SynthConfig(seed=11)
        first = resolve_planted_views(cfg)
        assert first == resolve_planted_views(cfg)
        assert len(first) == cfg.num_classes
        assert all(0 <= v < cfg.num_aug_views for v in first)

    def test_different_seeds_eventually_differ(self):
        drawn = {resolve_planted_views(SynthConfig(seed=s)) for s in range(10)}
        assert len(drawn) > 1


class TestGenerate:
    def test_split_counts(self):
        train_fs, test_fs = generate(SMALL)
        assert len(train_fs.samples) == 24  # 3 classes x 8
        assert len(test_fs.samples) == 6    # 3 classes x 2
        for c in range(3):
            assert sum(1 for s in train_fs.samples if s.true_class == c) == 8
            assert sum(1 for s in test_fs.samples if s.true_class == c) == 2

    def test_sample_ids_unique_and_structured(self):
        train_fs, test_fs = generate(SMALL)
        ids = [s.sample_id for s in train_fs.samples + test_fs.samples]
        assert len(set(ids)) == len(ids)
        assert train_fs.samples[0].sample_id == "c0s0"
        assert test_fs.samples[0].sample_id == "c0s8"

    def test_every_sample_has_every_view(self):
        train_fs, _ = generate(SMALL)
        expected = set(train_fs.view_set.all_views())
        for s in train_fs.samples:
            assert set(s.features) == expected
            assert all(len(v) == SMALL.feature_dim for v in s.features.values())

    def test_deterministic_per_seed(self):
        assert generate(SMALL) == generate(SMALL)
        other = SynthConfig(**{**SMALL.__dict__, "seed": 1})
        assert generate(other) != generate(SMALL)

    def test_zero_noise_collapses_to_prototypes(self):
        cfg = SynthConfig(num_classes=3, num_aug_views=2, feature_dim=4, samples_per_class=5,
                          noise_default=0.0, noise_optimal=0.0, noise_other=0.0,
                          planted_views=(0, 0, 1), seed=3)
        train_fs, test_fs = generate(cfg)
        for fs in (train_fs, test_fs):
            for s in fs.samples:
                vecs = list(s.features.values())
                for v in vecs[1:]:
                    assert v == vecs[0]
        # all samples of one class share the same prototype
        by_class = {}
        for s in train_fs.samples + test_fs.samples:
            by_class.setdefault(s.true_class, []).append(s.features[DEFAULT_VIEW])
        for vecs in by_class.values():
            assert all(v == vecs[0] for v in vecs)

    def test_noise_free_planted_view_is_exactly_the_prototype(self):
        cfg = SynthConfig(num_classes=2, num_aug_views=3, feature_dim=4, samples_per_class=6,
                          noise_optimal=0.0, planted_views=(2, 0), seed=5)
        train_fs, test_fs = generate(cfg)
        planted = {0: "aug2", 1: "aug0"}
        by_class = {}
        for s in train_fs.samples + test_fs.samples:
            by_class.setdefault(s.true_class, []).append(s)
        for c, samples in by_class.items():
            anchor = samples[0].features[planted[c]]
            for s in samples:
                assert s.features[planted[c]] == anchor       # noise-free view repeats
                assert s.features[DEFAULT_VIEW] != anchor     # noisy views do not

    def test_per_sample_rng_streams_are_stable(self):
        # The noise for sample s of class c comes from a stream derived from
        # (seed, 1, c * samples_per_class + s), drawn default view first and
        # augmentation views in index order. This freezes the data format:
        # the same config must yield the same features in any future version.
        cfg = SMALL
        train_fs, _ = generate(cfg)
        proto = np.random.default_rng([cfg.seed, 0]).normal(
            0.0, PROTOTYPE_SCALE, size=(cfg.num_classes, cfg.feature_dim)
        )
        c, s = 1, 2
        sample = next(x for x in train_fs.samples if x.sample_id == f"c{c}s{s}")
        rng = np.random.default_rng([cfg.seed, 1, c * cfg.samples_per_class + s])
        expected = {DEFAULT_VIEW: proto[c] + rng.normal(0.0, cfg.noise_default, cfg.feature_dim)}
        for n in range(cfg.num_aug_views):
            sigma = cfg.noise_optimal if n == cfg.planted_views[c] else cfg.noise_other
            expected[aug_view_name(n)] = proto[c] + rng.normal(0.0, sigma, cfg.feature_dim)
        for view, vec in expected.items():
            assert sample.features[view] == [float(v) for v in vec]


class TestFeatureIO:
    def test_round_trip_exact(self, tmp_path):
        train_fs, _ = generate(SMALL)
        path = tmp_path / "features.jsonl"
        save_features(train_fs, path)
        assert load_features(path) == train_fs

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="empty feature file"):
            load_features(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"num_classes": 2}\n')
        with pytest.raises(ValueError, match=rf"{path.name}:1"):
            load_features(path)

    def test_view_mismatch_names_line_and_sample(self, tmp_path):
        train_fs, _ = generate(SMALL)
        path = tmp_path / "features.jsonl"
        save_features(train_fs, path)
        lines = path.read_text().splitlines()
        record = json.loads(lines[1])
        del record["features"]["aug0"]
        lines[1] = json.dumps(record)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="views do not match header"):
            load_features(path)

    def test_wrong_dimension_rejected(self, tmp_path):
        train_fs, _ = generate(SMALL)
        path = tmp_path / "features.jsonl"
        save_features(train_fs, path)
        lines = path.read_text().splitlines()
        record = json.loads(lines[1])
        record["features"]["aug0"] = record["features"]["aug0"][:-1]
        lines[1] = json.dumps(record)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="expected 6"):
            load_features(path)


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learning_rate": -0.1},
            {"learning_rate": float("inf")},
            {"epochs": 0},
            {"batch_size": 0},
            {"dropout_rate": 1.0},
            {"dropout_rate": -0.2},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTrain:
    def test_separable_data_is_learned(self):
        # Zero-noise classes sit exactly on distinct prototypes, so the
        # classifier should fit the training split essentially perfectly.
        cfg = SynthConfig(num_classes=4, num_aug_views=2, feature_dim=8, samples_per_class=20,
                          noise_default=0.0, noise_optimal=0.0, noise_other=0.0,
                          planted_views=(0, 1, 0, 1), seed=7)
        train_fs, _ = generate(cfg)
        model = train(train_fs, TrainConfig())
        X, y = default_view_arrays(train_fs)
        pred = np.argmax(X @ model.weights.T + model.bias, axis=1)
        assert (pred == y).mean() >= 0.99

    def test_zero_learning_rate_leaves_parameters_at_zero(self):
        train_fs, _ = generate(SMALL)
        model = train(train_fs, TrainConfig(learning_rate=0.0, epochs=3))
        assert np.array_equal(model.weights, np.zeros_like(model.weights))
        assert np.array_equal(model.bias, np.zeros_like(model.bias))
        # Uniform predictions: mean cross-entropy is exactly ln K.
        assert model.final_loss == pytest.approx(math.log(SMALL.num_classes), abs=1e-12)

    def test_training_reduces_loss_below_uniform(self):
        train_fs, _ = generate(SMALL)
        model = train(train_fs, TrainConfig())
        assert model.final_loss < math.log(SMALL.num_classes)

    def test_deterministic_per_seed(self):
        train_fs, _ = generate(SMALL)
        a = train(train_fs, TrainConfig(seed=4))
        b = train(train_fs, TrainConfig(seed=4))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.final_loss == b.final_loss
        c = train(train_fs, TrainConfig(seed=5))
        assert not np.array_equal(a.weights, c.weights)

    def test_divergence_raises_with_guidance(self):
        train_fs, _ = generate(SMALL)
        with pytest.raises(ValueError, match="smaller learning rate"):
            train(train_fs, TrainConfig(learning_rate=1e308, epochs=2))

    def test_rejects_empty_and_bad_labels(self):
        train_fs, _ = generate(SMALL)
        empty = FeatureSet(3, 6, train_fs.view_set, [])
        with pytest.raises(ValueError, match="empty training set"):
            train(empty, TrainConfig())
        bad = FeatureSet(2, 6, train_fs.view_set, train_fs.samples)  # labels go up to 2
        with pytest.raises(ValueError, match="out of class range"):
            train(bad, TrainConfig())

    def test_model_records_provenance(self):
        train_fs, _ = generate(SMALL)
        tc = TrainConfig(learning_rate=0.05, epochs=2, batch_size=8, dropout_rate=0.3, seed=9)
        model = train(train_fs, tc)
        assert model.learning_rate == 0.05
        assert model.epochs == 2
        assert model.batch_size == 8
        assert model.dropout_rate == 0.3
        assert model.seed == 9
        assert model.num_classes == 3
        assert model.feature_dim == 6


class TestModelIO:
    def test_round_trip_exact(self, tmp_path):
        train_fs, _ = generate(SMALL)
        model = train(train_fs, TrainConfig(epochs=2))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.weights, model.weights)
        assert np.array_equal(loaded.bias, model.bias)
        assert loaded.final_loss == model.final_loss
        assert loaded.dropout_rate == model.dropout_rate

    def test_rejects_mismatched_shapes(self, tmp_path):
        path = tmp_path / "model.json"
        payload = {
            "weights": [[1.0, 2.0], [3.0, 4.0]],
            "bias": [0.0],
            "dropout_rate": 0.0, "learning_rate": 0.1,
            "epochs": 1, "batch_size": 1, "seed": 0, "final_loss": None,
        }
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="shapes do not line up"):
            load_model(path)

    def test_rejects_non_finite(self, tmp_path):
        path = tmp_path / "model.json"
        payload = {
            "weights": [[1.0, float("inf")], [3.0, 4.0]],
            "bias": [0.0, 0.0],
            "dropout_rate": 0.0, "learning_rate": 0.1,
            "epochs": 1, "batch_size": 1, "seed": 0, "final_loss": None,
        }
        path.write_text(json.dumps(payload).replace("Infinity", "1e999"))
        with pytest.raises(ValueError, match="finite"):
            load_model(path)


class TestGradients:
    def test_hand_worked_example(self):
        # K=2, d=1, zero parameters, x=1, y=0: p = (1/2, 1/2), so the
        # gradient is ((p - onehot) x^T, p - onehot) = ([[-1/2], [1/2]], [-1/2, 1/2]).
        model = tiny_model([[0.0], [0.0]], [0.0, 0.0])
        grad_w, grad_b = loss_grad(model, [1.0], 0)
        assert grad_w.tolist() == [[-0.5], [0.5]]
        assert grad_b.tolist() == [-0.5, 0.5]

    def test_confident_correct_prediction_has_tiny_gradient(self):
        model = tiny_model([[50.0], [-50.0]], [0.0, 0.0])
        grad_w, grad_b = loss_grad(model, [1.0], 0)
        assert np.abs(grad_w).max() < 1e-12
        assert np.abs(grad_b).max() < 1e-12

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-5
        for _ in range(20):
            k = int(rng.integers(2, 6))
            d = int(rng.integers(1, 7))
            model = tiny_model(rng.normal(size=(k, d)), rng.normal(size=k))
            x = rng.normal(size=d)
            y = int(rng.integers(0, k))
            grad_w, grad_b = loss_grad(model, x, y)
            for i in range(k):
                for j in range(d):
                    w_hi = model.weights.copy(); w_hi[i, j] += h
                    w_lo = model.weights.copy(); w_lo[i, j] -= h
                    fd = (
                        cross_entropy(tiny_model(w_hi, model.bias), x, y)
                        - cross_entropy(tiny_model(w_lo, model.bias), x, y)
                    ) / (2 * h)
                    assert fd == pytest.approx(grad_w[i, j], rel=1e-6, abs=1e-9)
                b_hi = model.bias.copy(); b_hi[i] += h
                b_lo = model.bias.copy(); b_lo[i] -= h
                fd = (
                    cross_entropy(tiny_model(model.weights, b_hi), x, y)
                    - cross_entropy(tiny_model(model.weights, b_lo), x, y)
                ) / (2 * h)
                assert fd == pytest.approx(grad_b[i], rel=1e-6, abs=1e-9)

    def test_cross_entropy_is_negative_log_probability(self):
        rng = np.random.default_rng(23)
        model = tiny_model(rng.normal(size=(3, 4)), rng.normal(size=3))
        x = rng.normal(size=4)
        z = model.weights @ x + model.bias
        p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
        for y in range(3):
            assert cross_entropy(model, x, y) == pytest.approx(-math.log(p[y]), rel=1e-12)


class TestGradnormScore:
    def test_uniform_prediction_scores_zero(self):
        model = tiny_model(np.zeros((4, 3)), np.zeros(4))
        assert gradnorm_score(model, [1.0, -2.0, 3.0]) == 0.0

    def test_zero_input_scores_zero(self):
        rng = np.random.default_rng(1)
        model = tiny_model(rng.normal(size=(3, 4)), rng.normal(size=3))
        assert gradnorm_score(model, np.zeros(4)) == 0.0

    def test_factorized_form_matches_explicit_outer_product(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            k = int(rng.integers(2, 6))
            d = int(rng.integers(1, 7))
            model = tiny_model(rng.normal(size=(k, d)), rng.normal(size=k))
            x = rng.normal(size=d)
            z = model.weights @ x + model.bias
            p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
            explicit = np.abs(np.outer(p - 1.0 / k, x)).sum()
            assert gradnorm_score(model, x) == pytest.approx(explicit, rel=1e-12, abs=1e-12)

    def test_matches_finite_differences_of_uniform_target_loss(self):
        # gradnorm differentiates the cross-entropy against a uniform target
        # distribution; check its L1 norm against a numeric gradient.
        rng = np.random.default_rng(37)
        h = 1e-5

        def uniform_loss(weights, bias, x):
            z = weights @ x + bias
            shifted = z - z.max()
            log_p = shifted - math.log(np.exp(shifted).sum())
            return float(-(log_p.mean()))

        for _ in range(10):
            k = int(rng.integers(2, 5))
            d = int(rng.integers(1, 5))
            model = tiny_model(rng.normal(size=(k, d)), rng.normal(size=k))
            x = rng.normal(size=d)
            fd_norm = 0.0
            for i in range(k):
                for j in range(d):
                    w_hi = model.weights.copy(); w_hi[i, j] += h
                    w_lo = model.weights.copy(); w_lo[i, j] -= h
                    fd_norm += abs(
                        (uniform_loss(w_hi, model.bias, x) - uniform_loss(w_lo, model.bias, x))
                        / (2 * h)
                    )
            assert fd_norm == pytest.approx(gradnorm_score(model, x), rel=1e-6, abs=1e-9)

    def test_confidence_raises_the_score(self):
        model = tiny_model([[4.0], [-4.0]], [0.0, 0.0])
        assert gradnorm_score(model, [3.0]) > gradnorm_score(model, [0.1])


class TestPredict:
    def _model_and_features(self, dropout_rate=0.2):
        train_fs, test_fs = generate(SMALL)
        model = train(train_fs, TrainConfig(epochs=5, dropout_rate=dropout_rate))
        return model, test_fs

    def test_manifest_structure(self):
        model, test_fs = self._model_and_features()
        manifest = predict(model, test_fs, mc_samples=4, mc_seed=1, name="toy-test")
        assert manifest.name == "toy-test"
        assert manifest.num_classes == 3
        assert len(manifest.records) == len(test_fs.samples)
        assert validate_manifest(manifest) == []
        rec = manifest.records[0]
        assert set(rec.views) == set(test_fs.view_set.all_views())
        assert all(len(v.mc_logits) == 4 for v in rec.views.values())

    def test_logits_are_the_linear_map(self):
        model, test_fs = self._model_and_features()
        manifest = predict(model, test_fs, mc_samples=0)
        for sample, rec in zip(test_fs.samples, manifest.records):
            for view, vp in rec.views.items():
                expected = model.weights @ np.asarray(sample.features[view]) + model.bias
                assert vp.logits == [float(v) for v in expected]

    def test_grad_l1_matches_gradnorm_score(self):
        model, test_fs = self._model_and_features()
        manifest = predict(model, test_fs, mc_samples=0)
        sample = test_fs.samples[0]
        rec = manifest.records[0]
        for view in rec.views:
            assert rec.views[view].grad_l1 == gradnorm_score(model, sample.features[view])

    def test_zero_dropout_makes_mc_rows_equal_logits(self):
        model, test_fs = self._model_and_features(dropout_rate=0.0)
        manifest = predict(model, test_fs, mc_samples=3)
        for rec in manifest.records:
            for vp in rec.views.values():
                assert vp.mc_logits == [vp.logits] * 3

    def test_dropout_perturbs_mc_passes(self):
        model, test_fs = self._model_and_features(dropout_rate=0.5)
        manifest = predict(model, test_fs, mc_samples=6)
        vp = manifest.records[0].views[DEFAULT_VIEW]
        assert len({tuple(row) for row in vp.mc_logits}) > 1

    def test_mc_sampling_is_seeded(self):
        model, test_fs = self._model_and_features()
        a = predict(model, test_fs, mc_samples=4, mc_seed=3)
        b = predict(model, test_fs, mc_samples=4, mc_seed=3)
        c = predict(model, test_fs, mc_samples=4, mc_seed=4)
        assert a == b
        assert a != c

    def test_mc_disabled_and_invalid_counts(self):
        model, test_fs = self._model_and_features()
        manifest = predict(model, test_fs, mc_samples=0)
        assert all(vp.mc_logits is None for r in manifest.records for vp in r.views.values())
        with pytest.raises(ValueError, match="mc_samples"):
            predict(model, test_fs, mc_samples=1)

    def test_shape_mismatches_rejected(self):
        model, test_fs = self._model_and_features()
        narrow = FeatureSet(3, 5, test_fs.view_set, [])
        with pytest.raises(ValueError, match="features"):
            predict(model, narrow, mc_samples=0)
        fewer = FeatureSet(2, 6, test_fs.view_set, [])
        with pytest.raises(ValueError, match="classes"):
            predict(model, fewer, mc_samples=0)


class TestPlantedSignal:
    def test_planted_views_have_lower_mean_entropy(self):
        # The low-noise planted view should read as less uncertain than the
        # other augmentation views on average over the training split.
        cfg = SynthConfig(num_classes=4, num_aug_views=3, feature_dim=16,
                          samples_per_class=60, planted_views=(0, 1, 2, 0), seed=2)
        train_fs, _ = generate(cfg)
        model = train(train_fs, TrainConfig())
        manifest = predict(model, train_fs, mc_samples=0)
        entropy_cfg = MetricConfig(kind="entropy")
        planted_sum, planted_n = 0.0, 0
        other_sum, other_n = 0.0, 0
        for rec in manifest.records:
            planted_view = aug_view_name(cfg.planted_views[rec.true_class])
            for n in range(cfg.num_aug_views):
                view = aug_view_name(n)
                u = uncertainty_of_view(rec, view, entropy_cfg).value
                if view == planted_view:
                    planted_sum += u
                    planted_n += 1
                else:
                    other_sum += u
                    other_n += 1
        assert planted_sum / planted_n < other_sum / other_n
