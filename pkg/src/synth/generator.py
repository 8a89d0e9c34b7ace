"""Seeded synthetic HPC profiles and defect injection.

Counter rates are events per instruction per thread. A function's rate vector
is drawn around its base means through a latent factor model
``u = L @ eta + noise * eps`` (independent standard normals when no factor
structure is configured), then turned into raw counts as
``round(rate * instructions * threads)`` so normalization recovers the rate.
"""
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import DataError
from src.models.schemas import (
    DefectSpec,
    Distribution,
    FunctionRun,
    FunctionWorkload,
    HpcSample,
    InjectionManifest,
    ProfileSet,
    VersionTag,
    WorkloadSpec,
)

logger = logging.getLogger(__name__)


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _function_parameters(
    function: FunctionWorkload, names: List[str]
) -> Tuple[np.ndarray, np.ndarray]:
    means = np.array([
        function.counters[n].mean if n in function.counters else function.default_rate for n in names
    ])
    spreads = np.array([
        function.counters[n].spread if n in function.counters else function.default_spread for n in names
    ])
    return means, spreads


def _loadings(function: FunctionWorkload, spec: WorkloadSpec, d: int, rng: np.random.Generator) -> Optional[np.ndarray]:
    if function.loadings is not None:
        return np.asarray(function.loadings, dtype=np.float64)
    if spec.latent_dim is None:
        return None
    raw = rng.normal(size=(d, spec.latent_dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def generate(
    spec: WorkloadSpec,
    version: VersionTag = VersionTag.OLD,
    sample_seed: Optional[int] = None,
) -> ProfileSet:
    """
    Draw a raw ProfileSet from a workload description.

    Samples are ordered run by run, then function by function. Run ``r`` uses
    ``thread_counts[r % len(thread_counts)]`` threads. Factor loadings always
    come from ``spec.seed``; ``sample_seed`` draws a fresh set of samples with
    the same structure (another version of the same program).

    Args:
        spec: Workload description
        version: Version tag of the produced set
        sample_seed: Seed for the samples (defaults to continuing the ``spec.seed`` stream)

    Returns:
        Raw ProfileSet
    """
    counter_spec = spec.counter_spec()
    names = counter_spec.names
    d = counter_spec.dimension
    rng = np.random.default_rng(spec.seed)

    params = []
    for function in spec.functions:
        means, spreads = _function_parameters(function, names)
        params.append((function, means, spreads, _loadings(function, spec, d, rng)))
    if sample_seed is not None:
        rng = np.random.default_rng(sample_seed)

    samples: List[HpcSample] = []
    for r in range(spec.runs):
        run_id = f"run-{r:03d}"
        threads = spec.thread_counts[r % len(spec.thread_counts)]
        for function, means, spreads, loadings in params:
            for _ in range(spec.samples_per_run):
                if function.instruction_jitter > 0:
                    jitter = rng.uniform(-function.instruction_jitter, function.instruction_jitter)
                    instructions = max(1, _round_half_up(function.instructions * (1.0 + jitter)))
                else:
                    instructions = function.instructions
                if loadings is None:
                    u = rng.normal(size=d)
                else:
                    eta = rng.normal(size=loadings.shape[1])
                    u = loadings @ eta + spec.idiosyncratic_noise * rng.normal(size=d)
                if spec.distribution == Distribution.LOGNORMAL:
                    rates = means * np.exp(spreads * u)
                else:
                    rates = np.maximum(means * (1.0 + spreads * u), 0.0)
                counts = np.rint(rates * float(instructions * threads))
                samples.append(HpcSample(
                    function=function.name,
                    run_id=run_id,
                    thread_count=threads,
                    instruction_count=instructions,
                    values=tuple(int(c) for c in counts),
                    normalized=False,
                ))
    logger.info(
        f"Generated {len(samples)} samples for {spec.program}: {len(spec.functions)} functions x "
        f"{spec.runs} runs x {spec.samples_per_run} samples"
    )
    return ProfileSet.from_samples(spec.program, version, counter_spec, samples, version_label=spec.version_label)


def _normalized_value(sample: HpcSample, j: int) -> float:
    if sample.normalized:
        return float(sample.values[j])
    return sample.values[j] / (sample.instruction_count * sample.thread_count)


def inject(
    profile_set: ProfileSet,
    defect: DefectSpec,
    seed: int,
    version: Optional[VersionTag] = VersionTag.NEW,
    reference: Optional[ProfileSet] = None,
) -> Tuple[ProfileSet, InjectionManifest]:
    """
    Perturb a fraction of runs and samples to emulate a regression.

    Runs are chosen first (``affected_run_fraction`` of all runs), then
    ``affected_fraction_of_samples`` of the affected functions' samples inside
    those runs. Target counters become ``value * factor + offset_std * std``
    with ``std`` the population std of that function's normalized counter in
    ``reference`` (the source set by default); collateral counters are
    multiplied by their factor. Raw sets are perturbed in rate space and
    re-rounded. Untouched samples are the source objects themselves.

    Args:
        profile_set: Source set (raw or normalized)
        defect: Perturbation description
        seed: Seed of the run and sample selection
        version: Version tag of the output (None keeps the source's)
        reference: Set whose per-function std scales ``offset_std`` (defaults to the source)

    Returns:
        (perturbed ProfileSet, manifest of exactly what was changed)
    """
    names = profile_set.counter_spec.names
    unknown = [c for c in list(defect.target_counters) + list(defect.collateral_factors) if c not in names]
    if unknown:
        raise DataError(f"unknown counter {unknown[0]} in defect spec")
    function_index = profile_set.function_index()
    affected_functions = defect.affected_functions or list(function_index)
    missing = [f for f in affected_functions if f not in function_index]
    if missing:
        raise DataError(f"unknown function {missing[0]} in defect spec")
    if not profile_set.samples:
        raise DataError("no samples")

    rng = np.random.default_rng(seed)
    run_ids = list(profile_set.run_index)
    n_runs = max(1, _round_half_up(defect.affected_run_fraction * len(run_ids)))
    picked_runs = set(int(i) for i in rng.choice(len(run_ids), size=min(n_runs, len(run_ids)), replace=False))
    chosen_runs = {run_ids[i] for i in picked_runs}
    candidates = [
        i for i, s in enumerate(profile_set.samples)
        if s.run_id in chosen_runs and s.function in affected_functions
    ]
    n_samples = _round_half_up(defect.affected_fraction_of_samples * len(candidates))
    if candidates and n_samples == 0:
        n_samples = 1
    picked = rng.choice(len(candidates), size=n_samples, replace=False) if candidates else []
    chosen = sorted(int(candidates[i]) for i in picked)

    targets = [names.index(c) for c in defect.target_counters]
    collateral = {names.index(c): f for c, f in defect.collateral_factors.items()}
    stds: Dict[Tuple[str, int], float] = {}
    if defect.offset_std != 0.0:
        basis = reference or profile_set
        basis_index = basis.function_index()
        for function in affected_functions:
            rows = basis_index.get(function)
            if not rows:
                raise DataError(f"function {function} has no samples in the offset reference set")
            for j in targets:
                values = np.array([_normalized_value(basis.samples[i], j) for i in rows])
                stds[(function, j)] = float(values.std())
                if stds[(function, j)] == 0.0:
                    logger.warning(f"Counter {names[j]} is constant for {function}; offset has no effect")

    samples = list(profile_set.samples)
    for i in chosen:
        sample = samples[i]
        denominator = 1 if sample.normalized else sample.instruction_count * sample.thread_count
        values = list(sample.values)
        for j in range(len(values)):
            factor = collateral.get(j, 1.0)
            offset = 0.0
            if j in targets:
                factor *= defect.factor
                offset = defect.offset_std * stds.get((sample.function, j), 0.0)
            if factor == 1.0 and offset == 0.0:
                continue
            rate = _normalized_value(sample, j) * factor + offset
            if not math.isfinite(rate):
                raise DataError(f"perturbation of counter {names[j]} in sample {i} is not finite")
            rate = max(rate, 0.0)
            values[j] = rate if sample.normalized else int(round(rate * denominator))
        samples[i] = sample.model_copy(update={"values": tuple(values)})

    chosen_set = set(chosen)
    perturbed_runs = [r for r in run_ids if any(i in chosen_set for i in profile_set.run_index[r])]
    pairs: List[FunctionRun] = []
    seen = set()
    for i in chosen:
        pair = FunctionRun(function=profile_set.samples[i].function, run_id=profile_set.samples[i].run_id)
        if pair.key not in seen:
            seen.add(pair.key)
            pairs.append(pair)
    manifest = InjectionManifest(
        defect=defect,
        seed=seed,
        program=profile_set.program,
        sample_indices=chosen,
        run_ids=perturbed_runs,
        function_runs=pairs,
    )
    out = ProfileSet(
        program=profile_set.program,
        version=version or profile_set.version,
        version_label=profile_set.version_label,
        counter_spec=profile_set.counter_spec,
        samples=samples,
        run_index={k: list(v) for k, v in profile_set.run_index.items()},
    )
    logger.info(
        f"Injected {defect.defect.value} into {len(chosen)} samples across {len(perturbed_runs)} runs"
    )
    return out, manifest
