"""Shared fixtures: a six-counter workload and a quickly trained bundle."""
import pytest

from src.config import Settings
from src.models.schemas import (
    CounterDistribution,
    CounterSpec,
    DefectSpec,
    DefectType,
    FunctionWorkload,
    VersionTag,
    WorkloadSpec,
)
from src.orchestrator.pipeline import detect_pipeline, train_pipeline
from src.synth.generator import generate, inject

SMALL_COUNTERS = ["TOT_CYC", "L1_DCM", "BR_MSP", "LD_INS", "HITM", "OFFCORE_RESPONSE:REMOTE_DRAM"]

ALPHA_RATES = {
    "TOT_CYC": 1.2,
    "L1_DCM": 0.02,
    "BR_MSP": 0.004,
    "LD_INS": 0.3,
    "HITM": 0.0002,
    "OFFCORE_RESPONSE:REMOTE_DRAM": 0.0001,
}
BETA_SCALE = {"L1_DCM": 3.0, "BR_MSP": 0.3, "LD_INS": 2.0}


def tiny_workload(seed: int = 0, runs: int = 8, samples_per_run: int = 10) -> WorkloadSpec:
    """Two functions with clearly different cache and branch behaviour."""
    alpha = {name: CounterDistribution(mean=rate, spread=0.1) for name, rate in ALPHA_RATES.items()}
    beta = {
        name: CounterDistribution(mean=rate * BETA_SCALE.get(name, 1.0), spread=0.1)
        for name, rate in ALPHA_RATES.items()
    }
    return WorkloadSpec(
        program="tiny",
        counter_names=SMALL_COUNTERS,
        functions=[
            FunctionWorkload(name="alpha", counters=alpha),
            FunctionWorkload(name="beta", counters=beta),
        ],
        latent_dim=2,
        idiosyncratic_noise=0.2,
        runs=runs,
        samples_per_run=samples_per_run,
        seed=seed,
    )


HITM_DEFECT = DefectSpec(
    defect=DefectType.CACHE_CONTENTION,
    target_counters=["HITM"],
    factor=8.0,
    affected_run_fraction=0.5,
)


def fast_settings(**overrides) -> Settings:
    """Settings that train in well under a second on the tiny workload."""
    values = dict(
        epochs=60,
        batch_size=16,
        early_stop_patience=10,
        min_samples_per_function=20,
        kmeans_n_init=4,
    )
    values.update(overrides)
    return Settings(_env_file=None, **values)


@pytest.fixture
def small_spec():
    return CounterSpec.from_names(SMALL_COUNTERS)


@pytest.fixture
def settings():
    return fast_settings()


@pytest.fixture(scope="session")
def tiny_old():
    return generate(tiny_workload())


@pytest.fixture(scope="session")
def tiny_new_normal():
    return generate(tiny_workload(), version=VersionTag.NEW, sample_seed=11)


@pytest.fixture(scope="session")
def tiny_injected(tiny_old):
    fresh = generate(tiny_workload(), version=VersionTag.NEW, sample_seed=12)
    return inject(fresh, HITM_DEFECT, seed=3, reference=tiny_old)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_old):
    return train_pipeline(tiny_old, settings=fast_settings())


@pytest.fixture(scope="session")
def tiny_report(tiny_bundle, tiny_injected):
    profiles, manifest = tiny_injected
    return detect_pipeline(tiny_bundle, profiles, settings=fast_settings(), ground_truth=manifest.to_ground_truth())
