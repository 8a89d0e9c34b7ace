"""Tests for counter ranking and defect mapping."""
import numpy as np
import pytest

from src.detection.rootcause import map_defect, per_counter_errors, rank_counters, rank_error_vectors
from src.errors import DataError
from src.ingest.normalization import normalize
from src.learning.autoencoder import reconstruction_errors
from src.models.schemas import DefectMapping, DefectRule, DefectType
from tests.conftest import SMALL_COUNTERS

NAMES = ["A", "B", "C", "D"]


class TestRanking:
    """Tests for rank_error_vectors."""

    def test_plurality_winner(self):
        """The counter ranked first most often wins."""
        errors = np.array([
            [0.1, 3.0, 0.2, 0.0],
            [0.1, 2.0, 2.5, 0.0],
            [0.1, 4.0, 0.2, 0.0],
        ])
        ranking = rank_error_vectors(errors, NAMES)
        assert ranking.winner == "B"
        assert ranking.winner_index == 1
        assert ranking.vote_counts == {"B": 2, "C": 1}
        assert ranking.per_sample_rankings[1][:2] == ["C", "B"]
        assert ranking.mean_errors["A"] == pytest.approx(0.1)

    def test_vote_tie_goes_to_lower_index(self):
        """Equal vote counts resolve to the counter with the lower index."""
        errors = np.array([[0.0, 0.0, 5.0, 0.0], [0.0, 5.0, 0.0, 0.0]])
        ranking = rank_error_vectors(errors, NAMES)
        assert ranking.winner == "B"
        assert list(ranking.vote_counts) == ["B", "C"]

    def test_equal_errors_within_a_sample(self):
        """Within a sample, equal errors rank by counter index."""
        ranking = rank_error_vectors(np.array([[1.0, 2.0, 2.0, 1.0]]), NAMES)
        assert ranking.per_sample_rankings[0] == ["B", "C", "A", "D"]

    def test_single_vector(self):
        """A single error vector is one vote."""
        ranking = rank_error_vectors(np.array([0.0, 0.0, 0.0, 9.0]), NAMES)
        assert ranking.winner == "D"
        assert sum(ranking.vote_counts.values()) == 1

    def test_empty_input(self):
        """Ranking needs at least one anomalous sample."""
        with pytest.raises(DataError):
            rank_error_vectors(np.zeros((0, 4)), NAMES)

    def test_name_count_mismatch(self):
        """One name per error component."""
        with pytest.raises(DataError):
            rank_error_vectors(np.ones((2, 3)), NAMES)


class TestDefectMapping:
    """Tests for map_defect."""

    @pytest.mark.parametrize("counter,defect", [
        ("OFFCORE_RESPONSE:REMOTE_DRAM", DefectType.NUMA_LATENCY),
        ("HITM", DefectType.CACHE_CONTENTION),
        ("OFFCORE_RESPONSE:REMOTE_HITM", DefectType.CACHE_CONTENTION),
        ("hitm", DefectType.CACHE_CONTENTION),
        ("L1_DCM", DefectType.UNKNOWN),
    ])
    def test_default_rules(self, counter, defect):
        """Default rules map remote DRAM to NUMA and HITM to contention."""
        assert map_defect(counter) == defect

    def test_first_rule_wins(self):
        """Rules are tried in order."""
        mapping = DefectMapping(rules=[
            DefectRule(pattern="HITM", defect=DefectType.TRUE_SHARING),
            DefectRule(pattern="REMOTE", defect=DefectType.NUMA_LATENCY),
        ])
        assert map_defect("OFFCORE_RESPONSE:REMOTE_HITM", mapping) == DefectType.TRUE_SHARING


class TestModelErrors:
    """Tests against a trained autoencoder."""

    def test_components_compose_the_error(self, tiny_bundle, tiny_new_normal):
        """Per-counter errors squared sum to the squared reconstruction error."""
        model = tiny_bundle.model_for(0)
        x = normalize(tiny_new_normal).matrix(list(range(20)))
        components = per_counter_errors(model, x)
        totals = reconstruction_errors(model, x)
        assert components.shape == (20, len(SMALL_COUNTERS))
        assert np.all(components >= 0.0)
        np.testing.assert_allclose(np.sum(components ** 2, axis=1), totals ** 2, rtol=1e-12, atol=1e-12)

    def test_rank_counters_names_winner(self, tiny_bundle, tiny_new_normal):
        """rank_counters uses the supplied names and mapping."""
        model = tiny_bundle.model_for(0)
        x = normalize(tiny_new_normal).matrix(list(range(5)))
        ranking = rank_counters(x, model, SMALL_COUNTERS)
        assert ranking.winner in SMALL_COUNTERS
        assert sum(ranking.vote_counts.values()) == 5

    def test_rank_counters_empty(self, tiny_bundle):
        """No samples, no ranking."""
        with pytest.raises(DataError):
            rank_counters([], tiny_bundle.model_for(0), SMALL_COUNTERS)
