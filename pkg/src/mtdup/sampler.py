"""Monte Carlo confirmation of conditional event probabilities.

Each trial builds an initial MT state whose window around the plant point
is a uniform solution of the given events' constraint system, fills every
other word from the control generator, runs the real recursion forward,
and looks at the lagged words directly.  The constraint algebra is used
only to *choose* the planted words; the events are checked on the
generated sequence.

Trial ``t`` draws from control-stream positions ``t * STRIDE ...``, so hit
counts do not depend on how the trial range is partitioned.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator

import numpy as np
from numba import njit

from .control import MASK64, control_rows
from .engine import MT19937, GeneratorParams, GeneratorState, extend_sequence, kernel_args
from .gf2 import left_kernel_basis
from .lagged import (
    DyadicProb,
    conditional_probability,
    event_constraint,
    event_lags,
    joint_constraint,
)

STRIDE = 1 << 20
DEFAULT_POSITION = 1
# Expectations below 2^-20 need an explicit long-run acknowledgement.
MIN_EXPONENT_WITHOUT_LONG = 20
BATCH = 4096


class LongRunRequired(ValueError):
    pass


def _window_of(events: Iterable[int], params: GeneratorParams) -> int:
    events = set(events)
    return joint_constraint(events, params).window if events else 1


def plant_point(given, check=(), params: GeneratorParams = MT19937,
                position: int = DEFAULT_POSITION) -> int:
    """Absolute index ``i`` of the newest planted word.

    The union window of ``given`` and ``check`` ends at ``i`` and starts at
    state word ``position``.
    """
    window = _window_of(set(given) | set(check), params)
    i = position + window - 1
    if i > params.n - 1:
        raise ValueError(f"window of {window} words does not fit after word {position}")
    return i


def _basis_words(given, params: GeneratorParams) -> tuple[np.ndarray, int]:
    """Kernel basis of the given constraint as (dim, window) word arrays."""
    if not given:
        return np.zeros((0, 0), dtype=np.uint64), 0
    system = joint_constraint(given, params)
    w, window = params.w, system.window
    mask = params.word_mask
    basis = left_kernel_basis(system.matrix)
    out = np.zeros((len(basis), window), dtype=np.uint64)
    for j, vec in enumerate(basis):
        for col in range(window):
            out[j, col] = (vec >> (w * (window - 1 - col))) & mask
    return out, window


def planted_states(given, trial_start: int, count: int, seed: int,
                   params: GeneratorParams = MT19937, check=(),
                   position: int = DEFAULT_POSITION) -> tuple[np.ndarray, int]:
    """Initial states (``count x n``) for trials ``trial_start ...``.

    Returns the states and the plant point ``i``; every state satisfies all
    events of ``given`` at ``i``.
    """
    given = set(given)
    n, w = params.n, params.w
    i = plant_point(given, check, params, position)
    basis, window = _basis_words(given, params)
    dim = basis.shape[0]
    coeff_words = -(-dim // w)
    raw = control_rows(seed & MASK64, trial_start, count, STRIDE, n + coeff_words, w)
    states = np.ascontiguousarray(raw[:, :n])
    if dim:
        coeffs = raw[:, n:]
        v = np.zeros((count, window), dtype=np.uint64)
        for j in range(dim):
            bit = (coeffs[:, j // w] >> np.uint64(j % w)) & np.uint64(1)
            v ^= bit[:, None] * basis[j][None, :]
        # Window order is x[i], x[i-1], ...; state order is ascending.
        states[:, i - window + 1 : i + 1] = v[:, ::-1]
    return states, i


def sample_given(given, trials: int, entropy_seed: int,
                 params: GeneratorParams = MT19937,
                 position: int = DEFAULT_POSITION) -> Iterator[GeneratorState]:
    """Yield freshly planted generator states (origin 0, nothing consumed)."""
    for start in range(0, trials, BATCH):
        states, _ = planted_states(given, start, min(BATCH, trials - start),
                                   entropy_seed, params, position=position)
        for row in states:
            yield GeneratorState(params, row, cursor=params.n, origin=0)


@njit(cache=True)
def _lagged_equalities(states, pairs, length, n, m, upper, lower, a):
    count = states.shape[0]
    npairs = pairs.shape[0]
    out = np.zeros((count, npairs), dtype=np.bool_)
    x = np.empty(length, dtype=np.uint64)
    for t in range(count):
        x[:n] = states[t]
        extend_sequence(x, n, length, n, m, upper, lower, a)
        for q in range(npairs):
            out[t, q] = x[pairs[q, 0]] == x[pairs[q, 1]]
    return out


def lagged_equalities(states: np.ndarray, pairs, params: GeneratorParams = MT19937) -> np.ndarray:
    """Run every state forward and compare ``x[p] == x[q]`` for each pair."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    length = max(int(pairs.max()) + 1, params.n)
    return _lagged_equalities(states, pairs, length, *kernel_args(params))


def binomial_z(hits: int, trials: int, p: float) -> float:
    if trials == 0 or p <= 0.0 or p >= 1.0:
        return 0.0 if trials == 0 or hits == p * trials else math.inf
    return (hits - trials * p) / math.sqrt(trials * p * (1.0 - p))


def conditional_frequency(given, check: int, trials: int, entropy_seed: int,
                          params: GeneratorParams = MT19937, *, trial_offset: int = 0,
                          long_run: bool = False, position: int = DEFAULT_POSITION,
                          batch: int = BATCH) -> dict:
    """Empirical frequency of event ``check`` among states planted to satisfy ``given``."""
    given = sorted(set(given))
    exact = conditional_probability(given, check, params)
    if exact.exponent > MIN_EXPONENT_WITHOUT_LONG and not long_run:
        raise LongRunRequired(
            f"expected frequency {exact} is below 2^-{MIN_EXPONENT_WITHOUT_LONG}; "
            "use the exact calculator or pass long_run"
        )
    i = plant_point(given, (check,), params, position)
    pairs = [(i + lo, i + hi) for lo, hi in (event_lags(k, params) for k in given)]
    lo, hi = event_lags(check, params)
    pairs.append((i + lo, i + hi))

    hits = 0
    violations = 0
    for start in range(0, trials, batch):
        count = min(batch, trials - start)
        states, _ = planted_states(given, trial_offset + start, count, entropy_seed,
                                   params, check=(check,), position=position)
        eq = lagged_equalities(states, pairs, params)
        violations += int(np.count_nonzero(~eq[:, :-1].all(axis=1))) if given else 0
        hits += int(np.count_nonzero(eq[:, -1]))

    p = float(exact.fraction)
    return {
        "generator": params.name,
        "given": given,
        "check": check,
        "plant_index": i,
        "trials": trials,
        "trial_offset": trial_offset,
        "seed": entropy_seed,
        "hits": hits,
        "frequency": hits / trials if trials else 0.0,
        "exact_expectation": str(exact),
        "expectation": p,
        "sigma": math.sqrt(p * (1 - p) / trials) if trials else 0.0,
        "z_score": binomial_z(hits, trials, p),
        "given_violations": violations,
    }


def merge_reports(parts: list[dict]) -> dict:
    """Combine reports over disjoint trial ranges of one experiment."""
    first = parts[0]
    trials = sum(r["trials"] for r in parts)
    hits = sum(r["hits"] for r in parts)
    p = first["expectation"]
    merged = dict(first)
    merged.update(
        trials=trials,
        trial_offset=min(r["trial_offset"] for r in parts),
        hits=hits,
        frequency=hits / trials if trials else 0.0,
        sigma=math.sqrt(p * (1 - p) / trials) if trials else 0.0,
        z_score=binomial_z(hits, trials, p),
        given_violations=sum(r["given_violations"] for r in parts),
    )
    return merged


__all__ = [
    "DyadicProb",
    "LongRunRequired",
    "conditional_frequency",
    "event_constraint",
    "lagged_equalities",
    "merge_reports",
    "plant_point",
    "planted_states",
    "sample_given",
]
