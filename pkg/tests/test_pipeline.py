"""Pipeline tests: checkpoint round trips, report construction, end-to-end
runs on a small synthetic set, sweep structure, gradient-check harness."""

import numpy as np
import numpy.testing as npt
import pytest

from zbcae.cae import BIAS_ALWAYS_ZERO, CaeTrainConfig, init_model
from zbcae.dataset import SyntheticSpec, gen_synthetic
from zbcae.errors import ShapeError, TensorFileError
from zbcae.gradcheck import _max_rel, gradcheck_report
from zbcae.pipeline import (
    evaluate_features,
    filter_size_sweep,
    l2_normalize_rows,
    load_cae_checkpoint,
    load_features_file,
    load_svm_checkpoint,
    run_pipeline,
    save_cae_checkpoint,
    save_features_file,
    save_svm_checkpoint,
)
from zbcae.svm import SvmModel, SvmTrainConfig


@pytest.fixture(scope="module")
def small_synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SyntheticSpec(
        n_classes=2, samples_per_class=10, channels=4, height=4, width=4, mu=2.0, sigma=1.0, seed=3
    )
    return gen_synthetic(spec, out)


def small_cae_config(**overrides):
    base = dict(epochs=30, batch_size=4, learning_rate=2e-4, seed=0)
    base.update(overrides)
    return CaeTrainConfig(**base)


class TestCheckpoints:
    def test_cae_checkpoint_round_trip(self, tmp_path):
        model = init_model(3, 2, 3, seed=5)
        model.b_e[:] = [0.1, -0.2, 0.3]
        meta = {"filters": 3, "note": "round trip"}
        path = tmp_path / "model.zten"
        save_cae_checkpoint(path, model, BIAS_ALWAYS_ZERO, meta)
        loaded, bias_mode, loaded_meta = load_cae_checkpoint(path)
        npt.assert_array_equal(loaded.w_e, model.w_e)
        npt.assert_array_equal(loaded.b_e, model.b_e)
        assert loaded.spec == model.spec
        assert loaded.decoder_relu == model.decoder_relu
        assert bias_mode == BIAS_ALWAYS_ZERO
        assert loaded_meta == meta

    def test_cae_checkpoint_missing_record(self, tmp_path):
        from zbcae.tensorfile import save_tensors

        save_tensors(tmp_path / "bad.zten", {"encoder_weights": np.zeros((1, 1, 3, 3))})
        with pytest.raises(TensorFileError, match="missing record"):
            load_cae_checkpoint(tmp_path / "bad.zten")

    def test_svm_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        model = SvmModel(weights=rng.normal(size=(3, 5)), biases=rng.normal(size=3), class_names=["a", "b", "c"])
        path = tmp_path / "svm.zten"
        save_svm_checkpoint(path, model, lam=1.0, meta={"stage": "svm"})
        loaded, lam, meta = load_svm_checkpoint(path)
        npt.assert_array_equal(loaded.weights, model.weights)
        npt.assert_array_equal(loaded.biases, model.biases)
        assert loaded.class_names == ["a", "b", "c"]
        assert lam == 1.0
        assert meta == {"stage": "svm"}

    def test_features_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        feats = rng.normal(size=(6, 9))
        labels = np.array([0, 1, 2, 0, 1, 2])
        path = tmp_path / "features.zten"
        save_features_file(path, feats, labels, ["x", "y", "z"], {"l2": False})
        f2, l2, classes, meta = load_features_file(path)
        npt.assert_array_equal(f2, feats)
        npt.assert_array_equal(l2, labels)
        assert classes == ["x", "y", "z"]
        assert meta == {"l2": False}

    def test_unicode_class_names_survive(self, tmp_path):
        model = SvmModel(weights=np.eye(2), biases=np.zeros(2), class_names=["naïve", "클래스"])
        save_svm_checkpoint(tmp_path / "svm.zten", model, 1.0, {})
        loaded, _, _ = load_svm_checkpoint(tmp_path / "svm.zten")
        assert loaded.class_names == ["naïve", "클래스"]


class TestNormalization:
    def test_rows_become_unit_norm(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(5, 7))
        normed = l2_normalize_rows(x)
        npt.assert_allclose(np.linalg.norm(normed, axis=1), np.ones(5), rtol=1e-12)

    def test_zero_rows_stay_zero(self):
        x = np.zeros((2, 4))
        x[1, 0] = 3.0
        normed = l2_normalize_rows(x)
        npt.assert_array_equal(normed[0], np.zeros(4))
        npt.assert_allclose(np.linalg.norm(normed[1]), 1.0)


class TestEvaluateFeatures:
    def test_confusion_row_sums_equal_class_counts(self):
        rng = np.random.default_rng(9)
        model = SvmModel(weights=rng.normal(size=(3, 4)), biases=rng.normal(size=3), class_names=list("abc"))
        feats = rng.normal(size=(30, 4))
        labels = rng.integers(0, 3, size=30)
        report = evaluate_features(model, feats, labels, list("abc"))
        confusion = np.array(report.confusion)
        npt.assert_array_equal(confusion.sum(axis=1), np.bincount(labels, minlength=3))
        assert confusion.sum() == report.n_test == 30

    def test_perfect_predictor_fills_diagonal(self):
        # features one-hot on the true class; identity weights predict exactly
        labels = np.array([0, 1, 2, 1, 0])
        feats = np.eye(3)[labels]
        model = SvmModel(weights=np.eye(3), biases=np.zeros(3), class_names=list("abc"))
        report = evaluate_features(model, feats, labels, list("abc"))
        assert report.top1 == 1.0
        assert report.per_class_accuracy == [1.0, 1.0, 1.0]
        npt.assert_array_equal(np.array(report.confusion), np.diag([2, 2, 1]))


class TestRunPipeline:
    def test_learns_synthetic_signal(self, small_synthetic):
        train_m, test_m = small_synthetic
        report = run_pipeline(train_m, test_m, small_cae_config(), SvmTrainConfig(), 4)
        assert report.top1 >= 0.75
        assert report.feature_dim == 4 * 2 * 2
        assert report.cae_summary["final_mean_loss"] < report.cae_summary["initial_mean_loss"]
        assert report.config_echo["filters"] == 4
        assert report.config_echo["l2_normalize"] is False

    def test_two_runs_are_byte_identical(self, small_synthetic):
        train_m, test_m = small_synthetic
        a = run_pipeline(train_m, test_m, small_cae_config(), SvmTrainConfig(), 4)
        b = run_pipeline(train_m, test_m, small_cae_config(), SvmTrainConfig(), 4)
        assert a.to_json() == b.to_json()

    def test_l2_normalization_is_echoed(self, small_synthetic):
        train_m, test_m = small_synthetic
        report = run_pipeline(train_m, test_m, small_cae_config(), SvmTrainConfig(), 4, l2_normalize=True)
        assert report.config_echo["l2_normalize"] is True

    def test_swapped_manifests_still_run(self, small_synthetic):
        train_m, test_m = small_synthetic
        report = run_pipeline(test_m, train_m, small_cae_config(epochs=5), SvmTrainConfig(), 4)
        assert report.n_test == len(train_m)

    def test_mismatched_class_tables_rejected(self, small_synthetic, tmp_path):
        train_m, _ = small_synthetic
        other_spec = SyntheticSpec(n_classes=3, samples_per_class=5, channels=6, height=4, width=4, seed=1)
        other_train, _ = gen_synthetic(other_spec, tmp_path)
        with pytest.raises(ShapeError, match="class tables"):
            run_pipeline(train_m, other_train, small_cae_config(epochs=1), SvmTrainConfig(), 4)


class TestFilterSizeSweep:
    def test_three_row_table(self, small_synthetic):
        train_m, test_m = small_synthetic
        rows = filter_size_sweep(train_m, test_m, small_cae_config(epochs=10), SvmTrainConfig(), [2, 4, 8])
        assert [r.filters for r in rows] == [2, 4, 8]
        assert all(0.0 <= r.top1 <= 1.0 for r in rows)
        assert [r.report.feature_dim for r in rows] == [8, 16, 32]

    def test_singleton_sweep_matches_single_run(self, small_synthetic):
        train_m, test_m = small_synthetic
        rows = filter_size_sweep(train_m, test_m, small_cae_config(), SvmTrainConfig(), [4])
        single = run_pipeline(train_m, test_m, small_cae_config(), SvmTrainConfig(), 4)
        assert len(rows) == 1
        assert rows[0].report.to_json() == single.to_json()

    def test_empty_k_list_rejected(self, small_synthetic):
        train_m, test_m = small_synthetic
        with pytest.raises(ValueError, match="non-empty"):
            filter_size_sweep(train_m, test_m, small_cae_config(), SvmTrainConfig(), [])


class TestGradcheckReport:
    def test_groups_within_tolerances(self):
        report = gradcheck_report(seed=1)
        assert set(report) == {"cae_weights", "cae_biases", "svm_weights", "svm_biases"}
        assert report["cae_weights"] < 1e-4
        assert report["cae_biases"] < 1e-4
        assert report["svm_weights"] < 1e-6
        assert report["svm_biases"] < 1e-6

    def test_guarded_denominator_reports_zero_at_zero_gradient(self):
        assert _max_rel(np.zeros(4), np.zeros(4)) == 0.0
