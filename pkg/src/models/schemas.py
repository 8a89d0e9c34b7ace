"""Pydantic schemas for profiles, models, verdicts and reports."""
from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class VersionTag(str, Enum):
    """Which side of the code change a profile set was collected on."""
    OLD = "old"
    NEW = "new"


class DefectType(str, Enum):
    """Performance defect taxonomy reported by root-cause analysis."""
    TRUE_SHARING = "TrueSharing"
    FALSE_SHARING = "FalseSharing"
    NUMA_LATENCY = "NumaLatency"
    CACHE_CONTENTION = "CacheContention"
    UNKNOWN = "Unknown"


class Verdict(str, Enum):
    """Sample or run classification."""
    NORMAL = "Normal"
    ANOMALOUS = "Anomalous"


class Activation(str, Enum):
    """Hidden-layer activation of the autoencoder."""
    TANH = "tanh"
    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class ProfileFormat(str, Enum):
    """On-disk profile formats understood by the ingest layer."""
    CSV = "csv"
    JSONL = "jsonl"


class Distribution(str, Enum):
    """Marginal distribution of synthetic counter rates."""
    LOGNORMAL = "lognormal"
    NORMAL = "normal"


# Reference 33-counter configuration. Index order is the feature order.
REFERENCE_COUNTERS: List[Tuple[str, str]] = [
    ("TOT_CYC", "Total cycles"),
    ("REF_CYC", "Reference clock cycles"),
    ("L1_DCM", "Level 1 data cache misses"),
    ("L1_ICM", "Level 1 instruction cache misses"),
    ("L2_DCM", "Level 2 data cache misses"),
    ("L2_ICM", "Level 2 instruction cache misses"),
    ("L3_TCM", "Level 3 total cache misses"),
    ("L1_LDM", "Level 1 load misses"),
    ("L1_STM", "Level 1 store misses"),
    ("L2_STM", "Level 2 store misses"),
    ("TLB_DM", "Data translation lookaside buffer misses"),
    ("TLB_IM", "Instruction translation lookaside buffer misses"),
    ("BR_CN", "Conditional branch instructions"),
    ("BR_TKN", "Conditional branch instructions taken"),
    ("BR_NTK", "Conditional branch instructions not taken"),
    ("BR_MSP", "Conditional branch instructions mispredicted"),
    ("BR_PRC", "Conditional branch instructions correctly predicted"),
    ("RES_STL", "Cycles stalled on any resource"),
    ("STL_ICY", "Cycles with no instruction issue"),
    ("FUL_CCY", "Cycles with maximum instructions completed"),
    ("LD_INS", "Load instructions"),
    ("SR_INS", "Store instructions"),
    ("BR_INS", "Branch instructions"),
    ("FP_ARITH:SCALAR_DOUBLE", "Scalar double-precision floating point operations"),
    ("FP_ARITH:128B_PACKED_DOUBLE", "Packed double-precision floating point operations"),
    ("HITM", "Loads hitting a line modified in another core's cache"),
    ("XSNP_HIT", "Loads hitting a clean line shared with another core"),
    ("XSNP_MISS", "Loads missing in sibling core caches"),
    ("OFFCORE_RESPONSE:LOCAL_DRAM", "Off-core requests served by local DRAM"),
    ("OFFCORE_RESPONSE:REMOTE_DRAM", "Off-core requests served by remote DRAM"),
    ("OFFCORE_RESPONSE:REMOTE_HITM", "Off-core requests hitting a modified line on the remote socket"),
    ("MACHINE_CLEARS:MEMORY_ORDERING", "Machine clears caused by memory ordering conflicts"),
    ("CYCLE_ACTIVITY:STALLS_L3_MISS", "Execution stalls while an L3 miss is outstanding"),
]


class CounterDef(BaseModel):
    """One hardware performance counter and its feature position."""
    model_config = ConfigDict(frozen=True)
    name: str = Field(..., min_length=1, description="Counter identifier, e.g. HITM")
    index: int = Field(..., ge=0, description="Zero-based feature position")
    description: str = Field("", description="Free text")


class CounterSpec(BaseModel):
    """Ordered set of counters that defines the feature dimensionality D."""
    model_config = ConfigDict(frozen=True)
    counters: List[CounterDef] = Field(..., min_length=1, description="Counters in feature order")

    @model_validator(mode="after")
    def _check_names_and_indices(self) -> "CounterSpec":
        names = [c.name for c in self.counters]
        if len(set(names)) != len(names):
            duplicates = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate counter names: {', '.join(duplicates)}")
        if [c.index for c in self.counters] != list(range(len(self.counters))):
            raise ValueError("counter indices must form the contiguous range 0..D-1 in order")
        return self

    @classmethod
    def from_names(cls, names: List[str], descriptions: Optional[Dict[str, str]] = None) -> "CounterSpec":
        descriptions = descriptions or {}
        return cls(counters=[
            CounterDef(name=name, index=i, description=descriptions.get(name, ""))
            for i, name in enumerate(names)
        ])

    @classmethod
    def reference(cls) -> "CounterSpec":
        """The shipped 33-counter configuration."""
        return cls.from_names(
            [name for name, _ in REFERENCE_COUNTERS],
            dict(REFERENCE_COUNTERS),
        )

    @property
    def dimension(self) -> int:
        return len(self.counters)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.counters]

    def index_of(self, name: str) -> int:
        for counter in self.counters:
            if counter.name == name:
                return counter.index
        raise KeyError(name)


class HpcSample(BaseModel):
    """Counter values for one execution of one function."""
    model_config = ConfigDict(frozen=True)
    function: str = Field(..., min_length=1, description="Opaque function identifier")
    run_id: str = Field(..., min_length=1, description="Run (program execution) identifier")
    thread_count: int = Field(..., ge=0, description="Threads active during the execution")
    instruction_count: int = Field(..., ge=0, description="Instructions retired by the function")
    values: Tuple[Union[int, float], ...] = Field(..., description="Raw counts or normalized rates")
    normalized: bool = Field(False, description="True once divided by instructions x threads")


class ProfileSet(BaseModel):
    """Samples of one program version grouped by function and run."""
    model_config = ConfigDict(frozen=True)
    program: str = Field(..., description="Program name")
    version: VersionTag = Field(..., description="Old or new side of the change")
    version_label: str = Field("", description="Free-form version label, e.g. a commit id")
    counter_spec: CounterSpec
    samples: List[HpcSample] = Field(default_factory=list)
    run_index: Dict[str, List[int]] = Field(default_factory=dict, description="run_id -> sample indices")

    @staticmethod
    def build_run_index(samples: List[HpcSample]) -> Dict[str, List[int]]:
        index: Dict[str, List[int]] = {}
        for i, sample in enumerate(samples):
            index.setdefault(sample.run_id, []).append(i)
        return index

    @classmethod
    def from_samples(
        cls,
        program: str,
        version: VersionTag,
        counter_spec: CounterSpec,
        samples: List[HpcSample],
        version_label: str = "",
    ) -> "ProfileSet":
        return cls(
            program=program,
            version=version,
            version_label=version_label,
            counter_spec=counter_spec,
            samples=list(samples),
            run_index=cls.build_run_index(samples),
        )

    def with_samples(self, samples: List[HpcSample]) -> "ProfileSet":
        """Copy of this set holding ``samples`` (run index rebuilt)."""
        return ProfileSet.from_samples(
            self.program, self.version, self.counter_spec, samples, self.version_label
        )

    @property
    def is_normalized(self) -> bool:
        return bool(self.samples) and all(s.normalized for s in self.samples)

    def functions(self) -> List[str]:
        """Function names in order of first appearance."""
        return list(self.function_index().keys())

    def function_index(self) -> Dict[str, List[int]]:
        index: Dict[str, List[int]] = {}
        for i, sample in enumerate(self.samples):
            index.setdefault(sample.function, []).append(i)
        return index

    def matrix(self, indices: Optional[List[int]] = None) -> np.ndarray:
        """Sample values as a float64 (n, D) array."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        if not chosen:
            return np.zeros((0, self.counter_spec.dimension), dtype=np.float64)
        return np.array([s.values for s in chosen], dtype=np.float64)


class ValidationIssue(BaseModel):
    """One violated profile invariant."""
    kind: str = Field(..., description="dimension | finite | negative | instructions | threads | partition | mixed")
    reason: str
    sample_index: Optional[int] = None


class Topology(BaseModel):
    """Symmetric dense autoencoder shape."""
    model_config = ConfigDict(frozen=True)
    layer_sizes: List[int] = Field(..., description="Layer widths, first == last == D")
    activation: Activation = Activation.TANH

    @field_validator("layer_sizes")
    @classmethod
    def _check_shape(cls, sizes: List[int]) -> List[int]:
        if len(sizes) < 3:
            raise ValueError("topology needs at least 3 layers")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if list(reversed(sizes)) != list(sizes):
            raise ValueError(f"topology {sizes} is not symmetric")
        if min(sizes[1:-1]) >= sizes[0]:
            raise ValueError(f"bottleneck must be smaller than the input size {sizes[0]}")
        return sizes

    @classmethod
    def default(cls, d: int, activation: Activation = Activation.TANH) -> "Topology":
        """[D, ceil(D/2), ceil(D/4), ceil(D/2), D]."""
        half = math.ceil(d / 2)
        quarter = math.ceil(d / 4)
        return cls(layer_sizes=[d, half, quarter, half, d], activation=activation)

    @classmethod
    def from_hidden(cls, d: int, hidden: List[int], activation: Activation = Activation.TANH) -> "Topology":
        """Build from the encoder half, e.g. hidden=[16, 8] -> [D, 16, 8, 16, D]."""
        encoder = [d] + list(hidden)
        return cls(layer_sizes=encoder + list(reversed(encoder[:-1])), activation=activation)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]


class TrainConfig(BaseModel):
    """Autoencoder optimisation hyperparameters."""
    model_config = ConfigDict(frozen=True)
    epochs: int = Field(500, ge=0)
    batch_size: int = Field(32, gt=0)
    learning_rate: float = Field(1e-3, gt=0)
    optimizer: Optimizer = Optimizer.ADAM
    seed: int = 0
    early_stop_patience: int = Field(20, ge=0, description="0 disables early stopping")
    validation_fraction: float = Field(0.1, ge=0.0, lt=0.5)


class ClusterModel(BaseModel):
    """k-means centroids and the function -> cluster map."""
    k: int = Field(..., gt=0)
    centroids: List[List[float]] = Field(..., description="k centroids in standardized space")
    function_assignment: Dict[str, int]
    inertia: float = Field(..., ge=0.0)
    seed: int = 0
    scaler_mean: List[float] = Field(..., description="Mean used to standardize clustering inputs")
    scaler_std: List[float] = Field(..., description="Std used to standardize clustering inputs")

    @model_validator(mode="after")
    def _check_consistency(self) -> "ClusterModel":
        if len(self.centroids) != self.k:
            raise ValueError(f"expected {self.k} centroids, got {len(self.centroids)}")
        for function, cluster in self.function_assignment.items():
            if not 0 <= cluster < self.k:
                raise ValueError(f"function {function} assigned to cluster {cluster} outside 0..{self.k - 1}")
        return self

    def members(self, cluster: int) -> List[str]:
        return [f for f, c in self.function_assignment.items() if c == cluster]


class Threshold(BaseModel):
    """gamma = mu + t * sigma over training reconstruction errors."""
    model_config = ConfigDict(frozen=True)
    mu: float
    sigma: float = Field(..., ge=0.0)
    t: float = Field(..., ge=0.0)
    gamma: float

    @model_validator(mode="after")
    def _check_gamma(self) -> "Threshold":
        if self.gamma != self.mu + self.t * self.sigma:
            raise ValueError("gamma must equal mu + t * sigma")
        return self

    @classmethod
    def from_stats(cls, mu: float, sigma: float, t: float) -> "Threshold":
        return cls(mu=mu, sigma=sigma, t=t, gamma=mu + t * sigma)

    def with_t(self, t: float) -> "Threshold":
        return Threshold.from_stats(self.mu, self.sigma, t)


class DefectRule(BaseModel):
    """Counter-name pattern (regular expression, case-insensitive) and its defect."""
    pattern: str
    defect: DefectType


class DefectMapping(BaseModel):
    """Ordered rules; first match wins, Unknown otherwise."""
    rules: List[DefectRule] = Field(default_factory=list)

    @classmethod
    def default(cls) -> "DefectMapping":
        return cls(rules=[
            DefectRule(pattern="REMOTE_DRAM", defect=DefectType.NUMA_LATENCY),
            DefectRule(pattern="HITM", defect=DefectType.CACHE_CONTENTION),
        ])


class CounterRanking(BaseModel):
    """Per-counter reconstruction-error ranking over anomalous samples."""
    per_sample_rankings: List[List[str]] = Field(..., description="Counters by descending error, per sample")
    vote_counts: Dict[str, int] = Field(..., description="Rank-1 votes, ordered by votes then counter index")
    mean_errors: Dict[str, float] = Field(default_factory=dict, description="Mean per-counter error")
    winner: str
    winner_index: int
    defect: DefectType = DefectType.UNKNOWN

    @model_validator(mode="after")
    def _check_votes(self) -> "CounterRanking":
        if sum(self.vote_counts.values()) != len(self.per_sample_rankings):
            raise ValueError("vote counts must sum to the number of anomalous samples")
        return self


class RunVerdict(BaseModel):
    """Aggregated verdict of one run (optionally scoped to one function)."""
    run_id: str
    function: Optional[str] = None
    errors: List[float] = Field(default_factory=list, description="Per-sample reconstruction errors")
    flags: List[bool] = Field(..., min_length=1, description="Per-sample anomalous flags")
    anomalous_fraction: float = Field(..., ge=0.0, le=1.0)
    rho: float = Field(..., gt=0.0, le=1.0)
    verdict: Verdict
    root_cause: Optional[CounterRanking] = None

    @model_validator(mode="after")
    def _check_fraction(self) -> "RunVerdict":
        if self.anomalous_fraction != sum(self.flags) / len(self.flags):
            raise ValueError("anomalous_fraction must equal count(flags) / count(samples)")
        expected = Verdict.ANOMALOUS if self.anomalous_fraction >= self.rho else Verdict.NORMAL
        if self.verdict != expected:
            raise ValueError("verdict inconsistent with anomalous_fraction and rho")
        return self

    @property
    def key(self) -> str:
        return self.run_id if self.function is None else f"{self.function}::{self.run_id}"


class RocPoint(BaseModel):
    """One operating point of a threshold sweep."""
    parameter: float = Field(..., description="t for gamma_t sweeps, x (percent) for alpha_x sweeps")
    fpr: Optional[float] = None
    tpr: Optional[float] = None


class EvalMetrics(BaseModel):
    """Classification quality; undefined rates are None, never 0."""
    false_positive_rate: Optional[float] = None
    false_negative_rate: Optional[float] = None
    true_positive_rate: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    n_normal: int = 0
    n_anomalous: int = 0
    true_positives: int = 0
    false_positives: int = 0
    true_negatives: int = 0
    false_negatives: int = 0
    roc_points: List[RocPoint] = Field(default_factory=list)


class FunctionRun(BaseModel):
    """A (function, run) pair."""
    model_config = ConfigDict(frozen=True)
    function: str
    run_id: str

    @property
    def key(self) -> str:
        return f"{self.function}::{self.run_id}"


class CounterDistribution(BaseModel):
    """Per-counter base rate (events per instruction per thread) and spread."""
    mean: float = Field(..., gt=0.0)
    spread: float = Field(0.1, gt=0.0, description="log-sigma (lognormal) or coefficient of variation (normal)")


class FunctionWorkload(BaseModel):
    """Synthetic performance signature of one function."""
    name: str = Field(..., min_length=1)
    counters: Dict[str, CounterDistribution] = Field(default_factory=dict, description="Overrides per counter")
    default_rate: float = Field(1e-3, gt=0.0, description="Rate for counters without an override")
    default_spread: float = Field(0.1, gt=0.0)
    instructions: int = Field(10_000_000, gt=0, description="Mean instructions per execution")
    instruction_jitter: float = Field(0.0, ge=0.0, lt=1.0, description="Relative uniform jitter of instructions")
    loadings: Optional[List[List[float]]] = Field(None, description="D x m factor loadings")


class WorkloadSpec(BaseModel):
    """Seeded description of a synthetic program's normal behaviour."""
    program: str = "synthetic"
    version_label: str = ""
    counter_names: Optional[List[str]] = Field(None, description="Counter set; reference set when omitted")
    functions: List[FunctionWorkload] = Field(..., min_length=1)
    distribution: Distribution = Distribution.LOGNORMAL
    latent_dim: Optional[int] = Field(None, gt=0, description="m < D; random loadings when a function gives none")
    idiosyncratic_noise: float = Field(0.2, ge=0.0, description="Independent noise mixed into each counter")
    runs: int = Field(20, ge=1)
    samples_per_run: int = Field(10, ge=1)
    thread_counts: List[int] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=1)
    seed: int = 0

    @field_validator("thread_counts")
    @classmethod
    def _positive_threads(cls, counts: List[int]) -> List[int]:
        if any(c < 1 for c in counts):
            raise ValueError("thread counts must be >= 1")
        return counts

    def counter_spec(self) -> CounterSpec:
        if self.counter_names is None:
            return CounterSpec.reference()
        return CounterSpec.from_names(self.counter_names)

    @model_validator(mode="after")
    def _check_against_counters(self) -> "WorkloadSpec":
        spec = self.counter_spec()
        d = spec.dimension
        names = set(spec.names)
        if self.latent_dim is not None and self.latent_dim >= d:
            raise ValueError(f"latent_dim must be < D={d}")
        seen = set()
        for function in self.functions:
            if function.name in seen:
                raise ValueError(f"duplicate function {function.name}")
            seen.add(function.name)
            unknown = sorted(set(function.counters) - names)
            if unknown:
                raise ValueError(f"function {function.name}: unknown counters {', '.join(unknown)}")
            if function.loadings is not None:
                rows = len(function.loadings)
                widths = {len(r) for r in function.loadings}
                if rows != d or len(widths) != 1 or widths.pop() >= d:
                    raise ValueError(f"function {function.name}: loadings must be D x m with m < D")
        return self


class DefectSpec(BaseModel):
    """Perturbation injected into a profile set to emulate a regression."""
    defect: DefectType
    target_counters: List[str] = Field(..., min_length=1)
    factor: float = Field(1.0, gt=0.0, description="Multiplicative shift on target counters")
    offset_std: float = Field(0.0, description="Additive shift in per-function std units")
    collateral_factors: Dict[str, float] = Field(default_factory=dict, description="Extra multiplicative effects")
    affected_functions: Optional[List[str]] = Field(None, description="All functions when omitted")
    affected_fraction_of_samples: float = Field(1.0, gt=0.0, le=1.0)
    affected_run_fraction: float = Field(1.0, gt=0.0, le=1.0)

    @field_validator("collateral_factors")
    @classmethod
    def _positive_factors(cls, factors: Dict[str, float]) -> Dict[str, float]:
        for name, value in factors.items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"collateral factor for {name} must be a positive finite number")
        return factors

    @field_validator("factor", "offset_std")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("shift must be finite")
        return value


class GroundTruth(BaseModel):
    """Which runs, (function, run) pairs and samples are truly anomalous."""
    anomalous_runs: List[str] = Field(default_factory=list)
    anomalous_function_runs: List[FunctionRun] = Field(default_factory=list)
    anomalous_samples: List[int] = Field(default_factory=list)


class InjectionManifest(BaseModel):
    """Record of exactly which samples an injection perturbed."""
    defect: DefectSpec
    seed: int
    program: str
    sample_indices: List[int]
    run_ids: List[str]
    function_runs: List[FunctionRun]

    def to_ground_truth(self) -> GroundTruth:
        return GroundTruth(
            anomalous_runs=list(self.run_ids),
            anomalous_function_runs=list(self.function_runs),
            anomalous_samples=list(self.sample_indices),
        )


class FunctionReport(BaseModel):
    """Detection outcome for one function of the new version."""
    function: str
    cluster: int
    routed_by: str = Field("assignment", description="assignment | nearest_centroid")
    sample_count: int
    runs: List[RunVerdict]
    regressed: bool
    ranking: Optional[CounterRanking] = None
    defect: Optional[DefectType] = None

    @model_validator(mode="after")
    def _ranking_when_regressed(self) -> "FunctionReport":
        if self.regressed and (self.ranking is None or not self.ranking.per_sample_rankings):
            raise ValueError(f"regressed function {self.function} needs a non-empty ranking")
        return self


class RunSummary(BaseModel):
    """Program-run verdict: anomalous when any function's run is."""
    run_id: str
    verdict: Verdict
    anomalous_functions: List[str] = Field(default_factory=list)


class DiagnosisReport(BaseModel):
    """Everything the detection phase concluded, plus the config that produced it."""
    model_config = ConfigDict(protected_namespaces=())
    program: str
    version_label: str = ""
    overall_verdict: Verdict
    functions: List[FunctionReport]
    runs: List[RunSummary]
    thresholds: Dict[str, Threshold] = Field(..., description="Cluster index -> threshold")
    metrics: Optional[EvalMetrics] = Field(None, description="Run-level metrics")
    function_metrics: Optional[EvalMetrics] = Field(None, description="(function, run)-level metrics")
    sample_roc: List[RocPoint] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    bundle_checksum: Optional[str] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)

    @property
    def regressed_functions(self) -> List[str]:
        return [f.function for f in self.functions if f.regressed]
