import numpy as np
import pytest

from mtdup.gf2 import left_kernel_basis
from mtdup.engine import MT19937, MT19937_64, GeneratorState, untempered_sequence
from mtdup.lagged import event_holds, joint_constraint
from mtdup.sampler import (
    LongRunRequired,
    conditional_frequency,
    merge_reports,
    plant_point,
    planted_states,
    sample_given,
)


def test_plant_point_defaults():
    assert plant_point({0}) == 2
    assert plant_point(set(), (0,)) == 2
    assert plant_point({0}, (10,)) == joint_constraint({0, 10}).window


@pytest.mark.parametrize("given", [{0}, {1, 2}, {0, 1, 2, 3}, {4}, {0, 3}])
def test_planted_states_satisfy_given(given):
    states, i = planted_states(given, 0, 300, seed=11)
    for row in states[:300]:
        x = untempered_sequence(GeneratorState(MT19937, row, cursor=624), i + 16 * 623 + 1)
        assert all(event_holds(x, i, k) for k in given)


def test_planted_states_mt64():
    states, i = planted_states({0, 1}, 0, 200, seed=3, params=MT19937_64)
    for row in states:
        x = untempered_sequence(GeneratorState(MT19937_64, row, cursor=312), i + 2 * 311 + 1)
        assert event_holds(x, i, 0, MT19937_64)
        assert event_holds(x, i, 1, MT19937_64)


def test_sample_given_yields_fresh_states():
    states = list(sample_given({1}, 5, entropy_seed=9))
    assert len(states) == 5
    assert all(s.cursor == 624 and s.origin == 0 for s in states)


def test_zero_violations_report():
    rep = conditional_frequency({1, 2}, 3, 20_000, entropy_seed=4)
    assert rep["given_violations"] == 0
    assert rep["exact_expectation"] == "2^-4"


def test_given_bit_balance_matches_kernel():
    # A uniform kernel element has each bit either pinned to 0 (no basis
    # vector touches it) or exactly fair.
    system = joint_constraint({0})
    basis = left_kernel_basis(system.matrix)
    free = 0
    for b in basis:
        free |= b
    states, i = planted_states({0}, 0, 40_000, seed=21)
    for col in range(system.window):
        words = states[:, i - col]
        for bit in range(32):
            pos = 32 * (system.window - 1 - col) + bit
            mean = float(((words >> np.uint64(bit)) & np.uint64(1)).mean())
            if (free >> pos) & 1:
                assert abs(mean - 0.5) < 4 * 0.5 / 200
            else:
                assert mean == 0.0


def test_empty_given_is_uniform():
    states, _ = planted_states(set(), 0, 20_000, seed=8)
    bits = (states[:, :8] >> np.uint64(31)) & np.uint64(1)
    assert abs(float(bits.mean()) - 0.5) < 4 * 0.5 / np.sqrt(bits.size)


def test_empty_given_hits_event_at_base_rate():
    rep = conditional_frequency(set(), 0, 1000, entropy_seed=2, long_run=True)
    assert rep["exact_expectation"] == "2^-32"
    assert rep["hits"] == 0


def test_reproducible():
    a = conditional_frequency({0}, 1, 5000, entropy_seed=77)
    b = conditional_frequency({0}, 1, 5000, entropy_seed=77)
    c = conditional_frequency({0}, 1, 5000, entropy_seed=78)
    assert a == b
    assert a["hits"] != c["hits"]


def test_partition_invariance():
    whole = conditional_frequency({1}, 2, 9000, entropy_seed=5)
    parts = [
        conditional_frequency({1}, 2, 4000, entropy_seed=5, trial_offset=0),
        conditional_frequency({1}, 2, 5000, entropy_seed=5, trial_offset=4000),
    ]
    merged = merge_reports(parts)
    assert merged["hits"] == whole["hits"]
    assert merged["trials"] == whole["trials"]
    assert merged["z_score"] == whole["z_score"]


def test_batch_size_is_irrelevant():
    a = conditional_frequency({0}, 1, 3000, entropy_seed=6, batch=500)
    b = conditional_frequency({0}, 1, 3000, entropy_seed=6, batch=4096)
    assert a["hits"] == b["hits"]


def test_rare_check_requires_long_run():
    with pytest.raises(LongRunRequired):
        conditional_frequency(set(), 3, 10, entropy_seed=1)


@pytest.mark.parametrize("given,check,p", [({0}, 1, 0.5), ({2}, 3, 1 / 16)])
def test_conditional_frequency_small(given, check, p):
    rep = conditional_frequency(given, check, 40_000, entropy_seed=31)
    assert rep["expectation"] == p
    assert abs(rep["z_score"]) < 4
