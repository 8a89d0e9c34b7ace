"""Per-sample normalization by instruction and thread count."""
import logging

from src.errors import DataError
from src.models.schemas import HpcSample, ProfileSet

logger = logging.getLogger(__name__)


def normalize(profile_set: ProfileSet) -> ProfileSet:
    """
    Divide every raw counter value by (instruction_count x thread_count).

    Integer counts are divided as exact rationals (Python's true division of
    ints rounds once), so scaling a sample's counts and instruction count by
    the same factor gives the identical normalized vector.

    Args:
        profile_set: Raw profile set

    Returns:
        New ProfileSet flagged normalized, all other fields preserved
    """
    if any(s.normalized for s in profile_set.samples):
        raise DataError("double normalization: profile set is already normalized")

    samples = []
    for i, sample in enumerate(profile_set.samples):
        if sample.instruction_count <= 0:
            raise DataError(
                f"sample {i} ({sample.function}, run {sample.run_id}) has instruction_count "
                f"{sample.instruction_count}; cannot normalize"
            )
        if sample.thread_count < 1:
            raise DataError(
                f"sample {i} ({sample.function}, run {sample.run_id}) has thread_count "
                f"{sample.thread_count}; cannot normalize"
            )
        denominator = sample.instruction_count * sample.thread_count
        samples.append(HpcSample(
            function=sample.function,
            run_id=sample.run_id,
            thread_count=sample.thread_count,
            instruction_count=sample.instruction_count,
            values=tuple(v / denominator for v in sample.values),
            normalized=True,
        ))
    logger.debug(f"Normalized {len(samples)} samples of {profile_set.program}")
    return ProfileSet(
        program=profile_set.program,
        version=profile_set.version,
        version_label=profile_set.version_label,
        counter_spec=profile_set.counter_spec,
        samples=samples,
        run_index={k: list(v) for k, v in profile_set.run_index.items()},
    )
