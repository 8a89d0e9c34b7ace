"""Tests for the synthetic profile generator and defect injection."""
import numpy as np
import pytest

from src.errors import ConfigError, DataError
from src.ingest.normalization import normalize
from src.models.schemas import DefectSpec, DefectType, FunctionWorkload, VersionTag, WorkloadSpec
from src.synth.generator import generate, inject
from src.synth.presets import (
    BASE_RATES,
    COUNTER_GROUPS,
    DEFECT_PRESETS,
    PAIRED_QUIET_FUNCTIONS,
    function_signature,
    get_defect,
    get_workload,
    paired_workload,
    reference_workload,
)
from tests.conftest import HITM_DEFECT, SMALL_COUNTERS, tiny_workload

HITM = SMALL_COUNTERS.index("HITM")


class TestGenerate:
    """Tests for generate."""

    def test_layout(self, tiny_old):
        """runs x functions x samples, grouped run by run with cycling thread counts."""
        assert len(tiny_old.samples) == 8 * 2 * 10
        assert list(tiny_old.run_index) == [f"run-{r:03d}" for r in range(8)]
        assert tiny_old.run_index["run-001"] == list(range(20, 40))
        threads = [tiny_old.samples[tiny_old.run_index[r][0]].thread_count for r in tiny_old.run_index]
        assert threads == [1, 2, 4, 8, 1, 2, 4, 8]
        assert tiny_old.functions() == ["alpha", "beta"]
        assert tiny_old.version == VersionTag.OLD
        assert not tiny_old.is_normalized

    def test_deterministic(self, tiny_old):
        """The same workload seed reproduces the same samples."""
        assert generate(tiny_workload()) == tiny_old

    def test_sample_seed_draws_new_samples(self, tiny_old, tiny_new_normal):
        """A sample seed keeps the structure but redraws the values."""
        assert tiny_new_normal.run_index == tiny_old.run_index
        assert tiny_new_normal.version == VersionTag.NEW
        assert tiny_new_normal.samples != tiny_old.samples

    def test_rates_follow_means(self, tiny_old):
        """Normalized rates are centred on the configured means."""
        rates = normalize(tiny_old)
        alpha = rates.matrix(rates.function_index()["alpha"])
        beta = rates.matrix(rates.function_index()["beta"])
        l1 = SMALL_COUNTERS.index("L1_DCM")
        assert 2.0 < np.median(beta[:, l1]) / np.median(alpha[:, l1]) < 4.5
        assert np.all(alpha > 0)

    def test_reference_workload_uses_reference_counters(self):
        """Presets without a counter list use the 33 reference counters."""
        ps = generate(reference_workload(runs=2, samples_per_run=2))
        assert ps.counter_spec.dimension == 33
        assert len(ps.samples) == 2 * 3 * 2

    def test_unknown_presets(self):
        """Unknown preset names are configuration errors."""
        with pytest.raises(ConfigError):
            get_workload("nope")
        with pytest.raises(ConfigError):
            get_defect("nope")
        assert get_defect("numa") is DEFECT_PRESETS["numa"]


    def test_latent_factors_dominate_variance(self):
        """With two latent factors over eight counters, two principal components carry the variance."""
        workload = WorkloadSpec(
            program="lowrank",
            counter_names=[f"C{j}" for j in range(8)],
            functions=[FunctionWorkload(name="kernel")],
            latent_dim=2,
            idiosyncratic_noise=0.1,
            runs=100,
            samples_per_run=10,
            thread_counts=[1],
            seed=4,
        )
        x = normalize(generate(workload)).matrix()
        assert x.shape == (1000, 8)
        eigenvalues = np.linalg.eigvalsh(np.corrcoef(x, rowvar=False))[::-1]
        assert eigenvalues[:2].sum() / eigenvalues.sum() >= 0.95


class TestPresets:
    """Tests for the shipped workloads and defects."""

    def test_paired_workload_layout(self):
        """Three quiet functions, their hotter twins and one unrelated function."""
        workload = paired_workload()
        names = [f.name for f in workload.functions]
        assert len(names) == 7
        assert workload.runs == 30
        for quiet in PAIRED_QUIET_FUNCTIONS:
            assert f"{quiet}_shared" in names
            twin = next(f for f in workload.functions if f.name == f"{quiet}_shared")
            own = next(f for f in workload.functions if f.name == quiet)
            for counter, distribution in own.counters.items():
                factor = 3.0 if counter in COUNTER_GROUPS["coherence"] else 1.0
                assert twin.counters[counter].mean == pytest.approx(distribution.mean * factor)

    def test_paired_workload_varies_every_counter(self):
        """No counter has the same mean rate in all seven functions."""
        workload = paired_workload()
        for counter in BASE_RATES:
            means = {round(f.counters[counter].mean, 12) for f in workload.functions}
            assert len(means) > 1, counter

    def test_single_counter_scaling(self):
        """Per-counter factors stack on top of group factors."""
        fn = function_signature("f", {"cache": 2.0}, scaled_counters={"L1_DCM": 3.0, "HITM": 5.0})
        assert fn.counters["L1_DCM"].mean == pytest.approx(BASE_RATES["L1_DCM"] * 6.0)
        assert fn.counters["HITM"].mean == pytest.approx(BASE_RATES["HITM"] * 5.0)
        with pytest.raises(ConfigError, match="NOPE"):
            function_signature("f", {}, scaled_counters={"NOPE": 2.0})

    def test_snoop_shift_targets_coherence_counters(self):
        """The snoop shift moves the coherence group; the paired preset is registered."""
        assert get_defect("snoop_shift").target_counters == COUNTER_GROUPS["coherence"]
        assert get_workload("paired").program == "paired"


class TestInject:
    """Tests for inject."""

    def test_multiplicative_shift_is_exact(self, tiny_old):
        """A factor of 8 on raw counts multiplies HITM exactly by 8."""
        injected, manifest = inject(tiny_old, HITM_DEFECT, seed=3)
        assert manifest.sample_indices
        for i in manifest.sample_indices:
            before, after = tiny_old.samples[i], injected.samples[i]
            assert after.values[HITM] == 8 * before.values[HITM]
            assert after.values[:HITM] == before.values[:HITM]
            assert after.values[HITM + 1:] == before.values[HITM + 1:]

    def test_untouched_samples_are_unchanged(self, tiny_old):
        """Samples outside the manifest are left alone."""
        injected, manifest = inject(tiny_old, HITM_DEFECT, seed=3)
        touched = set(manifest.sample_indices)
        for i, (before, after) in enumerate(zip(tiny_old.samples, injected.samples)):
            if i not in touched:
                assert before == after
        assert injected.version == VersionTag.NEW

    def test_run_fraction(self, tiny_old):
        """Half of eight runs are affected, every sample of every function within them."""
        _, manifest = inject(tiny_old, HITM_DEFECT, seed=3)
        assert len(manifest.run_ids) == 4
        assert len(manifest.sample_indices) == 4 * 2 * 10
        assert len(manifest.function_runs) == 8
        assert {tiny_old.samples[i].run_id for i in manifest.sample_indices} == set(manifest.run_ids)

    def test_selection_is_seeded(self, tiny_old):
        """The seed alone determines the selection."""
        one = inject(tiny_old, HITM_DEFECT, seed=5)[1]
        two = inject(tiny_old, HITM_DEFECT, seed=5)[1]
        assert one == two

    def test_restricted_functions(self, tiny_old):
        """Only the named functions are perturbed."""
        defect = HITM_DEFECT.model_copy(update={"affected_functions": ["beta"]})
        injected, manifest = inject(tiny_old, defect, seed=1)
        assert {tiny_old.samples[i].function for i in manifest.sample_indices} == {"beta"}
        assert all(p.function == "beta" for p in manifest.function_runs)

    def test_offset_in_std_units(self, tiny_old):
        """offset_std adds that many per-function standard deviations."""
        rates = normalize(tiny_old)
        defect = DefectSpec(
            defect=DefectType.CACHE_CONTENTION,
            target_counters=["HITM"],
            offset_std=5.0,
            affected_functions=["alpha"],
        )
        injected, manifest = inject(rates, defect, seed=2)
        alpha_rows = rates.function_index()["alpha"]
        std = np.array([rates.samples[i].values[HITM] for i in alpha_rows]).std()
        i = manifest.sample_indices[0]
        assert injected.samples[i].values[HITM] == pytest.approx(rates.samples[i].values[HITM] + 5.0 * std, rel=1e-12)

    def test_unknown_counter(self, tiny_old):
        """Defects may only name counters of the set."""
        defect = DefectSpec(defect=DefectType.NUMA_LATENCY, target_counters=["NOT_A_COUNTER"], factor=2.0)
        with pytest.raises(DataError, match="NOT_A_COUNTER"):
            inject(tiny_old, defect, seed=0)

    def test_unknown_function(self, tiny_old):
        """Defects may only name functions of the set."""
        defect = HITM_DEFECT.model_copy(update={"affected_functions": ["gamma"]})
        with pytest.raises(DataError, match="gamma"):
            inject(tiny_old, defect, seed=0)
