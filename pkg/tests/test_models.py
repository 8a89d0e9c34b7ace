"""Tests for profile, threshold and report schemas."""
import numpy as np
import pytest
from pydantic import ValidationError

from src.models.schemas import (
    REFERENCE_COUNTERS,
    CounterSpec,
    FunctionRun,
    HpcSample,
    InjectionManifest,
    ProfileSet,
    RunVerdict,
    Threshold,
    Topology,
    Verdict,
    VersionTag,
)
from src.models.validation import validate_profile_set
from src.storage import load_profile_set, save_profile_set, write_text_atomic
from tests.conftest import HITM_DEFECT


def _sample(function="f", run_id="r0", values=(10, 20), instructions=100, threads=1, normalized=False):
    return HpcSample(
        function=function,
        run_id=run_id,
        thread_count=threads,
        instruction_count=instructions,
        values=values,
        normalized=normalized,
    )


class TestCounterSpec:
    """Tests for CounterSpec."""

    def test_reference_has_33_counters(self):
        """The shipped configuration defines D = 33 in a fixed order."""
        spec = CounterSpec.reference()
        assert spec.dimension == 33
        assert len(REFERENCE_COUNTERS) == 33
        assert spec.names[spec.index_of("HITM")] == "HITM"

    def test_duplicate_names_rejected(self):
        """Counter names must be unique."""
        with pytest.raises(ValidationError, match="duplicate"):
            CounterSpec.from_names(["HITM", "L1_DCM", "HITM"])

    def test_unknown_counter_lookup(self):
        """index_of raises KeyError for names outside the counter spec."""
        with pytest.raises(KeyError):
            CounterSpec.from_names(["A", "B"]).index_of("C")


class TestProfileSet:
    """Tests for ProfileSet construction and views."""

    def test_run_index_partitions_samples(self):
        """from_samples indexes every sample under its run."""
        spec = CounterSpec.from_names(["A", "B"])
        samples = [_sample(run_id="r0"), _sample(function="g", run_id="r1"), _sample(run_id="r0")]
        ps = ProfileSet.from_samples("p", VersionTag.OLD, spec, samples)
        assert ps.run_index == {"r0": [0, 2], "r1": [1]}
        assert ps.functions() == ["f", "g"]
        assert ps.function_index() == {"f": [0, 2], "g": [1]}
        assert validate_profile_set(ps) == []

    def test_matrix_shape(self):
        """matrix() returns float64 (n, D), empty selections keep D columns."""
        spec = CounterSpec.from_names(["A", "B"])
        ps = ProfileSet.from_samples("p", VersionTag.OLD, spec, [_sample(), _sample(values=(1, 2))])
        assert ps.matrix().dtype == np.float64
        assert ps.matrix([1]).tolist() == [[1.0, 2.0]]
        assert ps.matrix([]).shape == (0, 2)

    def test_validation_reports_every_violation(self):
        """Dimension, instruction and partition problems are listed, not raised."""
        spec = CounterSpec.from_names(["A", "B"])
        samples = [_sample(values=(1, 2, 3)), _sample(instructions=0)]
        ps = ProfileSet(program="p", version=VersionTag.OLD, counter_spec=spec, samples=samples, run_index={"r0": [0]})
        kinds = {issue.kind for issue in validate_profile_set(ps)}
        assert {"dimension", "instructions", "partition"} <= kinds

    def test_negative_and_mixed_values_flagged(self):
        """Negative values and mixed raw/normalized samples are violations."""
        spec = CounterSpec.from_names(["A", "B"])
        samples = [_sample(values=(-1.0, 2.0), normalized=True), _sample()]
        kinds = {i.kind for i in validate_profile_set(ProfileSet.from_samples("p", VersionTag.NEW, spec, samples))}
        assert "negative" in kinds
        assert "mixed" in kinds


class TestThreshold:
    """Tests for Threshold."""

    def test_gamma_consistency_enforced(self):
        """gamma must equal mu + t * sigma."""
        with pytest.raises(ValidationError):
            Threshold(mu=1.0, sigma=0.5, t=2.0, gamma=3.0)

    def test_with_t_recomputes_gamma(self):
        """with_t keeps mu and sigma and recomputes gamma."""
        threshold = Threshold.from_stats(1.0, 0.5, 2.0).with_t(3.0)
        assert threshold.gamma == 1.0 + 3.0 * 0.5
        assert threshold.t == 3.0


class TestTopology:
    """Tests for Topology."""

    def test_default_shape_for_reference_counters(self):
        """Default is [D, ceil(D/2), ceil(D/4), ceil(D/2), D]."""
        assert Topology.default(33).layer_sizes == [33, 17, 9, 17, 33]

    def test_from_hidden_mirrors_encoder(self):
        """Encoder widths are mirrored into the decoder."""
        assert Topology.from_hidden(10, [6, 3]).layer_sizes == [10, 6, 3, 6, 10]

    @pytest.mark.parametrize("sizes", [[4, 4], [4, 2, 3], [4, 5, 4], [4, 0, 4]])
    def test_invalid_shapes_rejected(self, sizes):
        """Too shallow, asymmetric, non-bottleneck and zero-width shapes are invalid."""
        with pytest.raises(ValidationError):
            Topology(layer_sizes=sizes)


class TestVerdictsAndManifests:
    """Tests for RunVerdict and InjectionManifest."""

    def test_run_verdict_consistency(self):
        """The verdict must follow from the flags and rho."""
        with pytest.raises(ValidationError):
            RunVerdict(run_id="r", flags=[True, False], anomalous_fraction=0.5, rho=0.5, verdict=Verdict.NORMAL)

    def test_function_scoped_key(self):
        """Function-scoped verdicts are keyed function::run."""
        verdict = RunVerdict(run_id="r", function="f", flags=[False], anomalous_fraction=0.0, rho=0.5, verdict=Verdict.NORMAL)
        assert verdict.key == "f::r"
        assert FunctionRun(function="f", run_id="r").key == verdict.key

    def test_manifest_to_ground_truth(self):
        """A manifest converts into the labels it implies."""
        manifest = InjectionManifest(
            defect=HITM_DEFECT,
            seed=1,
            program="p",
            sample_indices=[3, 4],
            run_ids=["r1"],
            function_runs=[FunctionRun(function="f", run_id="r1")],
        )
        truth = manifest.to_ground_truth()
        assert truth.anomalous_runs == ["r1"]
        assert truth.anomalous_samples == [3, 4]
        assert truth.anomalous_function_runs[0].key == "f::r1"


class TestStorage:
    """Tests for file helpers."""

    def test_profile_set_json_is_lossless(self, tmp_path, tiny_old):
        """A saved profile set loads back equal."""
        path = save_profile_set(tiny_old, tmp_path / "old.json")
        assert load_profile_set(path) == tiny_old

    def test_atomic_write_leaves_no_temporaries(self, tmp_path):
        """Only the target file remains after an atomic write."""
        write_text_atomic(tmp_path / "out" / "a.txt", "one")
        write_text_atomic(tmp_path / "out" / "a.txt", "two")
        assert [p.name for p in (tmp_path / "out").iterdir()] == ["a.txt"]
        assert (tmp_path / "out" / "a.txt").read_text() == "two"
