import random

import numpy as np
import pytest

from mtdup.engine import (
    MT19937,
    MT19937_64,
    GeneratorParams,
    GeneratorState,
    next_untempered,
    plant_window,
    seed_init,
    temper,
    untemper,
    untempered_sequence,
)
from mtdup.gf2 import vec_mul
from mtdup.lagged import build_matrices, event_constraint, event_holds
from reference_mt import RefMT19937, RefMT19937_64


def test_first_output_matches_reference():
    ref = RefMT19937(5489)
    assert seed_init(5489).next() == ref.genrand_int32()


@pytest.mark.parametrize("seed", [1, 2, 5489, 2**32 - 1])
def test_stream_matches_reference(seed):
    ref = RefMT19937(seed)
    ours = seed_init(seed).take(3000, tempered=True).tolist()
    assert ours == [ref.genrand_int32() for _ in range(3000)]


def test_untempered_stream_matches_reference():
    ref = RefMT19937(77)
    for _ in range(2000):
        ref.genrand_int32()
    assert seed_init(77).take(2000).tolist() == ref.raw


def test_mt64_matches_reference():
    ref = RefMT19937_64(5489)
    ours = seed_init(5489, MT19937_64).take(1000, tempered=True).tolist()
    assert ours == [ref.genrand64_int64() for _ in range(1000)]


def test_seeds_one_and_two_differ():
    r1, r2 = RefMT19937(1).genrand_int32(), RefMT19937(2).genrand_int32()
    assert r1 != r2
    assert seed_init(1).next() == r1
    assert seed_init(2).next() == r2


def test_determinism():
    a = seed_init(123).take(10_000, tempered=True)
    b = seed_init(123).take(10_000, tempered=True)
    assert np.array_equal(a, b)


def test_take_matches_single_steps():
    s1, s2 = seed_init(9), seed_init(9)
    bulk = s1.take(1500).tolist()
    singles = [next_untempered(s2) for _ in range(1500)]
    assert bulk == singles
    assert s1 == s2
    assert s1.position == 624 + 1500


def test_recursion_integer_form():
    p = MT19937
    x = untempered_sequence(seed_init(31), 10_000 + p.n + 1).tolist()
    for k in range(10_000):
        y = (x[k] & p.upper_mask) | (x[k + 1] & p.lower_mask)
        assert x[k + p.n] == x[k + p.m] ^ (y >> 1) ^ (p.a if y & 1 else 0)


@pytest.mark.parametrize("params", [MT19937, MT19937_64], ids=lambda p: p.name)
def test_recursion_vector_form(params):
    _, B, C, _ = build_matrices(params)
    n, m = params.n, params.m
    x = untempered_sequence(seed_init(4242, params), 10_000 + n + 1).tolist()
    for k in range(10_000):
        assert x[k + n] == x[k + m] ^ vec_mul(x[k + 1], B) ^ vec_mul(x[k], C)


@pytest.mark.parametrize("params", [MT19937, MT19937_64], ids=lambda p: p.name)
def test_bit_convention_arbiter(params):
    # The integer twist must equal x_{k+1} B + x_k C under MSB-first vectors.
    _, B, C, _ = build_matrices(params)
    rng = random.Random(8)
    for _ in range(5000):
        xk, xk1 = rng.getrandbits(params.w), rng.getrandbits(params.w)
        y = (xk & params.upper_mask) | (xk1 & params.lower_mask)
        twist = (y >> 1) ^ (params.a if y & 1 else 0)
        assert twist == vec_mul(xk1, B) ^ vec_mul(xk, C)


def test_tempered_is_pointwise_temper():
    raw = seed_init(6).take(5000)
    tempered = seed_init(6).take(5000, tempered=True)
    assert np.array_equal(temper(raw), tempered)
    assert [temper(int(v)) for v in raw[:100]] == tempered[:100].tolist()


def test_temper_zero():
    assert temper(0) == 0
    assert temper(0, MT19937_64) == 0


@pytest.mark.parametrize("params", [MT19937, MT19937_64], ids=lambda p: p.name)
def test_untemper_round_trip(params):
    rng = np.random.default_rng(0)
    words = rng.integers(0, 2**63, size=1_000_000, dtype=np.uint64)
    if params.w == 32:
        words &= np.uint64(0xFFFFFFFF)
    else:
        words |= rng.integers(0, 2, size=words.size, dtype=np.uint64) << np.uint64(63)
    tempered = temper(words, params)
    sample = range(0, words.size, 97)
    for j in sample:
        assert untemper(int(tempered[j]), params) == int(words[j])
    # Bijective: no collisions introduced.
    assert np.unique(tempered).size == np.unique(words).size


def test_temper_linear():
    rng = random.Random(4)
    for _ in range(1000):
        a, b = rng.getrandbits(32), rng.getrandbits(32)
        assert temper(a ^ b) == temper(a) ^ temper(b)
        assert untemper(a ^ b) == untemper(a) ^ untemper(b)


def test_plant_then_read_back():
    state = seed_init(1)
    planted = plant_window(state, 5, [1, 2, 3])
    assert planted.words[5:8].tolist() == [1, 2, 3]
    assert np.array_equal(planted.words[:5], state.words[:5])
    assert np.array_equal(planted.words[8:], state.words[8:])
    assert state.words[5] != 1  # original untouched


@pytest.mark.parametrize("position,count", [(0, 2), (623, 2), (-1, 1), (600, 30)])
def test_plant_out_of_range(position, count):
    with pytest.raises(ValueError):
        plant_window(seed_init(1), position, [0] * count)


def test_planted_event_zero_holds_downstream():
    rng = random.Random(17)
    system = event_constraint(0)
    from mtdup.gf2 import sample_kernel

    for _ in range(50):
        v = sample_kernel(system.matrix, rng)
        xi, xim1 = v >> 32, v & 0xFFFFFFFF
        p = 100
        state = plant_window(seed_init(rng.getrandbits(32)), p - 1, [xim1, xi])
        x = untempered_sequence(state, p + MT19937.n)
        assert event_holds(x, p, 0)
        assert x[p + MT19937.m - 1] == x[p + MT19937.n - 1]


def test_zero_state_stays_zero():
    state = GeneratorState(MT19937, [0] * 624, cursor=624)
    assert not state.take(5000).any()


def test_state_round_trip_dict():
    s = seed_init(3)
    s.take(700)
    assert GeneratorState.from_dict(s.to_dict()) == s


def test_params_validation():
    with pytest.raises(ValueError):
        GeneratorParams("bad", 8, 10, 4, 7, 0x3F, 1, 0xFF, 1, 0, 1, 0, 1, 3)
