"""Invariant checks for profile sets. Reports violations, never raises."""
import math
from typing import List

from src.models.schemas import ProfileSet, ValidationIssue


def validate_profile_set(profile_set: ProfileSet) -> List[ValidationIssue]:
    """
    Check every profile invariant and collect the violations.

    Args:
        profile_set: Set to inspect

    Returns:
        Empty list when the set is well formed, otherwise one issue per violation
    """
    issues: List[ValidationIssue] = []
    d = profile_set.counter_spec.dimension

    for i, sample in enumerate(profile_set.samples):
        if len(sample.values) != d:
            issues.append(ValidationIssue(
                kind="dimension",
                sample_index=i,
                reason=f"sample has {len(sample.values)} values, counter spec has {d}",
            ))
        if sample.instruction_count <= 0:
            issues.append(ValidationIssue(
                kind="instructions",
                sample_index=i,
                reason=f"instruction_count must be > 0, got {sample.instruction_count}",
            ))
        if sample.thread_count < 1:
            issues.append(ValidationIssue(
                kind="threads",
                sample_index=i,
                reason=f"thread_count must be >= 1, got {sample.thread_count}",
            ))
        non_finite = [j for j, v in enumerate(sample.values) if not math.isfinite(v)]
        if non_finite:
            issues.append(ValidationIssue(
                kind="finite",
                sample_index=i,
                reason=f"non-finite values at positions {non_finite}",
            ))
        negative = [j for j, v in enumerate(sample.values) if math.isfinite(v) and v < 0]
        if negative:
            issues.append(ValidationIssue(
                kind="negative",
                sample_index=i,
                reason=f"negative values at positions {negative}",
            ))

    flags = {s.normalized for s in profile_set.samples}
    if len(flags) > 1:
        issues.append(ValidationIssue(kind="mixed", reason="set mixes raw and normalized samples"))

    issues.extend(_partition_issues(profile_set))
    return issues


def _partition_issues(profile_set: ProfileSet) -> List[ValidationIssue]:
    issues: List[ValidationIssue] = []
    n = len(profile_set.samples)
    owners: dict = {}
    for run_id, indices in profile_set.run_index.items():
        for i in indices:
            if not 0 <= i < n:
                issues.append(ValidationIssue(
                    kind="partition",
                    sample_index=i,
                    reason=f"run {run_id} references sample {i} outside 0..{n - 1}",
                ))
                continue
            if i in owners:
                issues.append(ValidationIssue(
                    kind="partition",
                    sample_index=i,
                    reason=f"sample listed under runs {owners[i]} and {run_id}",
                ))
                continue
            owners[i] = run_id
            if profile_set.samples[i].run_id != run_id:
                issues.append(ValidationIssue(
                    kind="partition",
                    sample_index=i,
                    reason=f"sample has run_id {profile_set.samples[i].run_id} but is indexed under {run_id}",
                ))
    for i in range(n):
        if i not in owners:
            issues.append(ValidationIssue(
                kind="partition",
                sample_index=i,
                reason="sample missing from run_index",
            ))
    return issues
