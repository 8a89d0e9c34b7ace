"""Shipped synthetic workloads and defect scenarios.

The rates are illustrative orders of magnitude for a general-purpose core, not
calibrated to any particular machine.
"""
from typing import Dict, List, Optional, Tuple

from src.errors import ConfigError
from src.models.schemas import (
    CounterDistribution,
    DefectSpec,
    DefectType,
    Distribution,
    FunctionWorkload,
    WorkloadSpec,
)

# events per instruction per thread
BASE_RATES: Dict[str, float] = {
    "TOT_CYC": 1.2,
    "REF_CYC": 1.0,
    "L1_DCM": 0.02,
    "L1_ICM": 0.002,
    "L2_DCM": 0.005,
    "L2_ICM": 0.0005,
    "L3_TCM": 0.001,
    "L1_LDM": 0.015,
    "L1_STM": 0.005,
    "L2_STM": 0.001,
    "TLB_DM": 0.0008,
    "TLB_IM": 0.0001,
    "BR_CN": 0.12,
    "BR_TKN": 0.07,
    "BR_NTK": 0.05,
    "BR_MSP": 0.004,
    "BR_PRC": 0.116,
    "RES_STL": 0.4,
    "STL_ICY": 0.3,
    "FUL_CCY": 0.2,
    "LD_INS": 0.3,
    "SR_INS": 0.12,
    "BR_INS": 0.15,
    "FP_ARITH:SCALAR_DOUBLE": 0.05,
    "FP_ARITH:128B_PACKED_DOUBLE": 0.02,
    "HITM": 0.0002,
    "XSNP_HIT": 0.0004,
    "XSNP_MISS": 0.0006,
    "OFFCORE_RESPONSE:LOCAL_DRAM": 0.0008,
    "OFFCORE_RESPONSE:REMOTE_DRAM": 0.0001,
    "OFFCORE_RESPONSE:REMOTE_HITM": 0.00005,
    "MACHINE_CLEARS:MEMORY_ORDERING": 0.00005,
    "CYCLE_ACTIVITY:STALLS_L3_MISS": 0.05,
}

COUNTER_GROUPS: Dict[str, List[str]] = {
    "cache": ["L1_DCM", "L2_DCM", "L3_TCM", "L1_LDM", "CYCLE_ACTIVITY:STALLS_L3_MISS"],
    "branch": ["BR_CN", "BR_TKN", "BR_NTK", "BR_MSP", "BR_PRC", "BR_INS"],
    "fp": ["FP_ARITH:SCALAR_DOUBLE", "FP_ARITH:128B_PACKED_DOUBLE", "FUL_CCY"],
    "stall": ["RES_STL", "STL_ICY", "TOT_CYC"],
    "coherence": ["XSNP_HIT", "XSNP_MISS", "OFFCORE_RESPONSE:REMOTE_HITM"],
    "memory": ["OFFCORE_RESPONSE:LOCAL_DRAM", "TLB_DM", "L2_STM", "SR_INS"],
    "frontend": ["L1_ICM", "L2_ICM", "TLB_IM", "MACHINE_CLEARS:MEMORY_ORDERING"],
}


def function_signature(
    name: str,
    scaled_groups: Dict[str, float],
    spread: float = 0.1,
    scaled_counters: Optional[Dict[str, float]] = None,
) -> FunctionWorkload:
    """Function whose counter groups (and single counters) are the base rates times the given factors."""
    scaled_counters = scaled_counters or {}
    unknown = sorted(set(scaled_counters) - set(BASE_RATES))
    if unknown:
        raise ConfigError(f"unknown counter {unknown[0]} in function signature {name}")
    counters = {}
    for counter, rate in BASE_RATES.items():
        factor = scaled_counters.get(counter, 1.0)
        for group, group_factor in scaled_groups.items():
            if counter in COUNTER_GROUPS[group]:
                factor *= group_factor
        counters[counter] = CounterDistribution(mean=rate * factor, spread=spread)
    return FunctionWorkload(name=name, counters=counters, default_spread=spread)


def reference_workload(seed: int = 0, runs: int = 20, samples_per_run: int = 10) -> WorkloadSpec:
    """Three functions with distinct cache, branch and floating-point profiles."""
    return WorkloadSpec(
        program="synthetic",
        functions=[
            function_signature("parse_input", {"branch": 3.0, "frontend": 2.0}),
            function_signature("update_shared", {"cache": 2.5, "coherence": 2.0}),
            function_signature("reduce_results", {"fp": 4.0, "stall": 0.6}),
        ],
        distribution=Distribution.LOGNORMAL,
        latent_dim=4,
        idiosyncratic_noise=0.2,
        runs=runs,
        samples_per_run=samples_per_run,
        thread_counts=[1, 2, 4, 8],
        seed=seed,
    )


def seven_function_workload(seed: int = 0, runs: int = 20, samples_per_run: int = 10) -> WorkloadSpec:
    """One function per counter group, each group scaled x4 over the base rates."""
    return WorkloadSpec(
        program="synthetic7",
        functions=[function_signature(f"fn_{group}", {group: 4.0}) for group in COUNTER_GROUPS],
        distribution=Distribution.LOGNORMAL,
        latent_dim=4,
        idiosyncratic_noise=0.2,
        runs=runs,
        samples_per_run=samples_per_run,
        seed=seed,
    )


# family -> (counter groups, single counters) scaled x4 for both functions of the family
PAIRED_FAMILIES: Dict[str, Tuple[List[str], List[str]]] = {
    "scan_block": (["cache"], ["L1_STM"]),
    "route_keys": (["branch"], ["LD_INS"]),
    "integrate": (["fp"], ["REF_CYC"]),
}
PAIRED_QUIET_FUNCTIONS = list(PAIRED_FAMILIES)


def paired_workload(seed: int = 0, runs: int = 30, samples_per_run: int = 10) -> WorkloadSpec:
    """
    Three look-alike function pairs plus one unrelated function.

    Each family has a quiet function and a ``*_shared`` twin whose coherence
    counters run x3 hotter; all other mean rates of the twins are equal.
    ``flush_pages`` scales the memory, stall and frontend groups plus HITM and
    remote DRAM, so every counter varies between functions.
    """
    functions = []
    for name, (groups, singles) in PAIRED_FAMILIES.items():
        scaled_groups = {group: 4.0 for group in groups}
        scaled_counters = {counter: 4.0 for counter in singles}
        functions.append(function_signature(name, scaled_groups, scaled_counters=scaled_counters))
        functions.append(function_signature(
            f"{name}_shared", {**scaled_groups, "coherence": 3.0}, scaled_counters=scaled_counters
        ))
    functions.append(function_signature(
        "flush_pages",
        {"memory": 4.0, "stall": 4.0, "frontend": 4.0},
        scaled_counters={"HITM": 4.0, "OFFCORE_RESPONSE:REMOTE_DRAM": 4.0},
    ))
    return WorkloadSpec(
        program="paired",
        functions=functions,
        distribution=Distribution.LOGNORMAL,
        latent_dim=4,
        idiosyncratic_noise=0.2,
        runs=runs,
        samples_per_run=samples_per_run,
        seed=seed,
    )


WORKLOAD_PRESETS = {
    "reference": reference_workload,
    "seven_functions": seven_function_workload,
    "paired": paired_workload,
}

DEFECT_PRESETS: Dict[str, DefectSpec] = {
    "true_sharing": DefectSpec(
        defect=DefectType.TRUE_SHARING,
        target_counters=["HITM"],
        factor=8.0,
        collateral_factors={"TOT_CYC": 1.5},
    ),
    "false_sharing": DefectSpec(
        defect=DefectType.FALSE_SHARING,
        target_counters=["HITM"],
        factor=4.0,
        collateral_factors={"TOT_CYC": 1.2},
    ),
    "numa": DefectSpec(
        defect=DefectType.NUMA_LATENCY,
        target_counters=["OFFCORE_RESPONSE:REMOTE_DRAM"],
        factor=6.0,
        collateral_factors={"TOT_CYC": 1.3},
    ),
    "hitm_offset": DefectSpec(
        defect=DefectType.CACHE_CONTENTION,
        target_counters=["HITM"],
        offset_std=5.0,
    ),
    "snoop_shift": DefectSpec(
        defect=DefectType.CACHE_CONTENTION,
        target_counters=["XSNP_HIT", "XSNP_MISS", "OFFCORE_RESPONSE:REMOTE_HITM"],
        offset_std=2.0,
    ),
}

SCENARIOS = ["true_sharing", "false_sharing", "numa"]


def get_workload(name: str, seed: Optional[int] = None) -> WorkloadSpec:
    if name not in WORKLOAD_PRESETS:
        raise ConfigError(f"unknown workload preset {name}; choose from {', '.join(WORKLOAD_PRESETS)}")
    return WORKLOAD_PRESETS[name](seed=seed or 0)


def get_defect(name: str) -> DefectSpec:
    if name not in DEFECT_PRESETS:
        raise ConfigError(f"unknown defect preset {name}; choose from {', '.join(DEFECT_PRESETS)}")
    return DEFECT_PRESETS[name]
