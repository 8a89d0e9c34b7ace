"""Tests for the train / detect pipeline."""
import numpy as np
import pytest

from src.errors import DataError
from src.detection.detector import compute_threshold
from src.learning.autoencoder import reconstruction_errors, train
from src.models.schemas import CounterSpec, DefectType, Verdict
from src.orchestrator.bundle_store import dump_bundle
from src.orchestrator.pipeline import detect_pipeline, diagnose, prepare_profiles, train_pipeline
from src.synth.generator import generate
from src.synth.presets import seven_function_workload
from tests.conftest import fast_settings


class TestTraining:
    """Tests for train_pipeline."""

    def test_one_model_per_cluster(self, tiny_bundle):
        """Two functions give k = min(4, 2) = 2 clusters, each with its own model."""
        assert tiny_bundle.cluster_model.k == 2
        assert len(tiny_bundle.models) == 2
        assert set(tiny_bundle.cluster_model.function_assignment) == {"alpha", "beta"}
        assert set(tiny_bundle.cluster_model.function_assignment.values()) == {0, 1}
        assert tiny_bundle.functions == ("alpha", "beta")

    def test_thresholds_come_from_training_errors(self, tiny_bundle, tiny_old):
        """Each gamma is mu + t * sigma of its cluster's own training errors."""
        profiles = prepare_profiles(tiny_old)
        index = profiles.function_index()
        for cluster, threshold in enumerate(tiny_bundle.thresholds):
            rows = sorted(i for f in tiny_bundle.cluster_model.members(cluster) for i in index[f])
            errors = reconstruction_errors(tiny_bundle.model_for(cluster), profiles.matrix(rows))
            assert np.array_equal(errors, tiny_bundle.training_errors[cluster])
            assert threshold.t == 2.0
            assert threshold.mu == pytest.approx(errors.mean(), rel=1e-12)
            assert threshold.gamma == threshold.mu + threshold.t * threshold.sigma

    def test_baseline_cycles_recorded(self, tiny_bundle):
        """The cycle counter baseline is kept per function."""
        assert set(tiny_bundle.baseline_cycles) == {"alpha", "beta"}
        assert tiny_bundle.baseline_cycles["alpha"] == pytest.approx(1.2, rel=0.1)

    def test_seven_functions_seven_clusters(self):
        """With k equal to the number of distinct functions each gets its own cluster."""
        old = generate(seven_function_workload())
        bundle = train_pipeline(old, k=7, settings=fast_settings(kmeans_n_init=10))
        assignment = bundle.cluster_model.function_assignment
        assert len(assignment) == 7
        assert sorted(assignment.values()) == list(range(7))
        assert len(bundle.models) == 7

    def test_single_cluster_is_plain_training(self, tiny_old, tiny_injected):
        """k = 1 trains exactly the model and threshold of one autoencoder over every sample."""
        settings = fast_settings()
        bundle = train_pipeline(tiny_old, k=1, settings=settings)
        x = prepare_profiles(tiny_old).matrix()
        plain = train(x, settings.topology(x.shape[1]), settings.train_config())
        for a, b in zip(bundle.models[0].weights + bundle.models[0].biases, plain.weights + plain.biases):
            assert np.array_equal(a, b)
        assert bundle.thresholds[0] == compute_threshold(reconstruction_errors(plain, x), settings.t)

        profiles, _ = tiny_injected
        new = prepare_profiles(profiles)
        report = detect_pipeline(bundle, profiles, settings=settings)
        index = new.function_index()
        for function in report.functions:
            assert function.cluster == 0
            own = set(index[function.function])
            for verdict in function.runs:
                rows = [i for i in new.run_index[verdict.run_id] if i in own]
                np.testing.assert_allclose(verdict.errors, reconstruction_errors(plain, new.matrix(rows)), rtol=1e-9)

    def test_under_sampled_function_named(self, tiny_old):
        """A function below the sample minimum is a data error naming it."""
        with pytest.raises(DataError, match="function alpha has 80 training samples"):
            train_pipeline(tiny_old, settings=fast_settings(min_samples_per_function=100))

    def test_training_is_deterministic(self, tiny_bundle, tiny_old):
        """Retraining with the same settings gives a byte-identical bundle."""
        assert dump_bundle(train_pipeline(tiny_old, settings=fast_settings())) == dump_bundle(tiny_bundle)

    def test_parallel_training_matches_serial(self, tiny_bundle, tiny_old):
        """Per-cluster seeds make worker count irrelevant."""
        parallel = train_pipeline(tiny_old, settings=fast_settings(max_workers=2))
        assert parallel.thresholds == tiny_bundle.thresholds
        for one, two in zip(parallel.models, tiny_bundle.models):
            for a, b in zip(one.weights + one.biases, two.weights + two.biases):
                assert np.array_equal(a, b)


class TestDetection:
    """Tests for detect_pipeline on injected and clean data."""

    def test_injected_runs_flagged(self, tiny_report, tiny_injected):
        """Every perturbed run is anomalous."""
        _, manifest = tiny_injected
        flagged = {r.run_id for r in tiny_report.runs if r.verdict == Verdict.ANOMALOUS}
        assert set(manifest.run_ids) <= flagged
        assert tiny_report.overall_verdict == Verdict.ANOMALOUS
        assert tiny_report.metrics.false_negative_rate == 0.0
        assert tiny_report.function_metrics.false_negative_rate == 0.0

    def test_root_cause_is_hitm(self, tiny_report):
        """Both regressed functions blame HITM, which maps to cache contention."""
        assert sorted(tiny_report.regressed_functions) == ["alpha", "beta"]
        for function in tiny_report.functions:
            assert function.ranking.winner == "HITM"
            assert function.defect == DefectType.CACHE_CONTENTION
            for verdict in function.runs:
                if verdict.verdict == Verdict.ANOMALOUS:
                    assert verdict.root_cause is not None

    def test_report_carries_thresholds_and_roc(self, tiny_report, tiny_bundle):
        """Thresholds, checksum and a sample-level ROC are reported."""
        assert set(tiny_report.thresholds) == {"0", "1"}
        assert tiny_report.thresholds["0"] == tiny_bundle.thresholds[0]
        assert tiny_report.sample_roc
        assert tiny_report.bundle_checksum
        assert tiny_report.config["rho"] == 0.5

    def test_t_override(self, tiny_bundle, tiny_new_normal):
        """An explicit t replaces the trained multiplier, keeping mu and sigma."""
        report = detect_pipeline(tiny_bundle, tiny_new_normal, settings=fast_settings(), t=3.0)
        assert all(th.t == 3.0 for th in report.thresholds.values())
        assert report.thresholds["1"].mu == tiny_bundle.thresholds[1].mu
        assert report.config["t"] == 3.0

    def test_counter_spec_mismatch(self, tiny_bundle, tiny_new_normal):
        """Profiles must use the bundle's counters."""
        other = tiny_new_normal.model_copy(update={"counter_spec": CounterSpec.from_names(list("ABCDEF"))})
        with pytest.raises(DataError, match="counter-spec mismatch"):
            detect_pipeline(tiny_bundle, other, settings=fast_settings())

    def test_unseen_function_routed_when_requested(self, tiny_bundle, tiny_new_normal):
        """An explicitly requested unseen function goes to its nearest centroid."""
        renamed = tiny_new_normal.with_samples([
            s.model_copy(update={"function": "beta_v2"}) if s.function == "beta" else s
            for s in tiny_new_normal.samples
        ])
        report = detect_pipeline(tiny_bundle, renamed, settings=fast_settings(), functions=["alpha", "beta_v2"])
        routed = {f.function: f for f in report.functions}
        assert routed["beta_v2"].routed_by == "nearest_centroid"
        assert routed["beta_v2"].cluster == tiny_bundle.cluster_model.function_assignment["beta"]
        assert routed["alpha"].routed_by == "assignment"
        assert any("beta_v2" in w for w in report.warnings)

    def test_unseen_function_skipped_by_default(self, tiny_bundle, tiny_new_normal):
        """Without a function list only functions seen in training are analyzed."""
        renamed = tiny_new_normal.with_samples([
            s.model_copy(update={"function": "beta_v2"}) if s.function == "beta" else s
            for s in tiny_new_normal.samples
        ])
        report = detect_pipeline(tiny_bundle, renamed, settings=fast_settings())
        assert [f.function for f in report.functions] == ["alpha"]

    def test_requested_function_missing(self, tiny_bundle, tiny_new_normal):
        """Requesting a function without samples is a data error."""
        with pytest.raises(DataError, match="gamma"):
            detect_pipeline(tiny_bundle, tiny_new_normal, settings=fast_settings(), functions=["gamma"])

    def test_repeated_function_analyzed_once(self, tiny_bundle, tiny_injected):
        """A repeated name in the function list yields one report, in first-seen order."""
        profiles, manifest = tiny_injected
        report = detect_pipeline(
            tiny_bundle,
            profiles,
            settings=fast_settings(),
            functions=["beta", "alpha", "beta"],
            ground_truth=manifest.to_ground_truth(),
        )
        assert [f.function for f in report.functions] == ["beta", "alpha"]
        assert report.metrics.false_negative_rate == 0.0

    def test_no_degradation_warning(self, tiny_bundle, tiny_new_normal):
        """Unchanged cycle counts are reported as a warning, not an error."""
        report = detect_pipeline(tiny_bundle, tiny_new_normal, settings=fast_settings())
        assert any("no performance degradation" in w for w in report.warnings)


class TestDiagnose:
    """Tests for the one-shot diagnose call."""

    def test_equals_train_then_detect(self, tiny_old, tiny_injected):
        """diagnose gives the same bundle and report as the two phases run separately."""
        profiles, _ = tiny_injected
        settings = fast_settings()
        bundle, report = diagnose(tiny_old, profiles, settings=settings)
        separate = detect_pipeline(train_pipeline(tiny_old, settings=settings), profiles, settings=settings)
        assert dump_bundle(bundle) == dump_bundle(train_pipeline(tiny_old, settings=settings))
        assert report.model_dump() == separate.model_dump()

    def test_mismatched_counters(self, tiny_old, tiny_new_normal):
        """Old and new profiles must share a counter spec."""
        other = tiny_new_normal.model_copy(update={"counter_spec": CounterSpec.from_names(list("ABCDEF"))})
        with pytest.raises(DataError, match="counter-spec mismatch"):
            diagnose(tiny_old, other, settings=fast_settings())

    def test_empty_profiles(self, tiny_old):
        """An empty profile set is rejected."""
        with pytest.raises(DataError, match="no samples"):
            prepare_profiles(tiny_old.with_samples([]))
