"""Modified repetition test: run-length histogram of within-run duplicates.

A run memorizes outputs from index 0 and ends at the first index ``r``
whose value already occurred in the run; ``r`` is the run-length.  The
generator is never reseeded between runs.  By default the duplicate that
closes a run is re-used as index 0 of the next run (``reuse`` convention);
``fresh`` starts the next run at the following output instead.

For ideal ``b``-bit words, ``P(R = r) = (r / 2^b) prod_{j<r} (1 - j / 2^b)``.
MT19937 adds a spike at ``r = n - 1 = 623`` (and 1246, 2492, ...): a run
closed by the lag-227 duplicate ``x[i+396] == x[i+623]`` is followed with
probability 1/2 by ``x[i+792] == x[i+1246]``, exactly 623 steps later.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numba import njit

from .control import ControlStream
from .engine import (
    GENERATORS,
    MT19937,
    GeneratorParams,
    GeneratorState,
    extend_sequence,
    kernel_args,
    seed_init,
)
from .sampler import planted_states

DEFAULT_RMAX = 2_100_000
INITIAL_LOGCAP = 18
BLOCK = 1 << 20
SPIKE_CENTERS = (623, 1246, 2492)
CHAIN_DEPTH = 4

_GOLD = np.uint64(0x9E3779B97F4A7C15)


# -- baseline ---------------------------------------------------------------


def _log_survival(r_max: int, bits: int) -> np.ndarray:
    """``out[r] = log P(no duplicate among indices 0..r)``, r = 0..r_max."""
    j = np.arange(1, r_max + 1, dtype=np.float64)
    out = np.empty(r_max + 1)
    out[0] = 0.0
    np.cumsum(np.log1p(-j / 2.0**bits), out=out[1:])
    return out


def run_length_pmf(r_max: int, bits: int = 32) -> np.ndarray:
    """``pmf[r] = P(R = r)`` for r = 0..r_max (``pmf[0] == 0``)."""
    logs = _log_survival(r_max, bits)
    pmf = np.zeros(r_max + 1)
    r = np.arange(1, r_max + 1, dtype=np.float64)
    pmf[1:] = r / 2.0**bits * np.exp(logs[:-1])
    return pmf


def log10_tail(r_max: int, bits: int = 32) -> float:
    """``log10 P(R > r_max)``, summed term by term in log space."""
    j = np.arange(1, r_max + 1, dtype=np.float64)
    return math.fsum(np.log1p(-j / 2.0**bits).tolist()) / math.log(10)


def leading_zeros(log10_p: float) -> int:
    """Zeros after the decimal point of a probability given its log10."""
    return math.ceil(-log10_p) - 1


@dataclass
class Baseline:
    """Expected run-length counts for ``total_runs`` ideal runs."""

    total_runs: int
    r_max: int
    bits: int
    expected: np.ndarray
    overflow: float

    def __getitem__(self, r: int) -> float:
        if 1 <= r <= self.r_max:
            return float(self.expected[r])
        return 0.0

    def items(self):
        for r in range(1, self.r_max + 1):
            yield r, float(self.expected[r])

    @property
    def total(self) -> float:
        return float(self.expected.sum())


def expected_distribution(total_runs: int, r_max: int = DEFAULT_RMAX, word_bits: int = 32) -> Baseline:
    pmf = run_length_pmf(r_max, word_bits)
    tail = 10.0 ** log10_tail(r_max, word_bits)
    return Baseline(total_runs, r_max, word_bits, total_runs * pmf, total_runs * tail)


def expected_mean(r_max: int = DEFAULT_RMAX, bits: int = 32) -> float:
    pmf = run_length_pmf(r_max, bits)
    return float(np.dot(np.arange(r_max + 1), pmf))


# -- histogram --------------------------------------------------------------


@dataclass
class RunLengthHistogram:
    counts: dict[int, int] = field(default_factory=dict)
    overflow: int = 0
    generator_id: str = "mt32"
    seed: int = 0
    convention: str = "reuse"
    tempered: bool = True
    word_bits: int = 32
    r_max: int = DEFAULT_RMAX
    lag_unit: int = 227
    spike_unit: int = 623
    # lag_flags[k]: runs closed by a duplicate at lag lag_unit * 2^k.
    lag_flags: dict[int, int] = field(default_factory=dict)
    # chains[k]: runs of length spike_unit * 2^k right after a run closed
    # at lag lag_unit * 2^k.
    chains: dict[int, int] = field(default_factory=dict)
    length_sum: int = 0

    @property
    def total_runs(self) -> int:
        return sum(self.counts.values()) + self.overflow

    @property
    def mean_run_length(self) -> float:
        done = self.total_runs - self.overflow
        return self.length_sum / done if done else 0.0

    def merge(self, other: "RunLengthHistogram") -> "RunLengthHistogram":
        for attr in ("convention", "word_bits", "r_max", "lag_unit", "spike_unit"):
            if getattr(self, attr) != getattr(other, attr):
                raise ValueError(f"cannot merge histograms with different {attr}")
        out = RunLengthHistogram(
            counts=_add(self.counts, other.counts),
            overflow=self.overflow + other.overflow,
            generator_id=self.generator_id if self.generator_id == other.generator_id else "mixed",
            seed=self.seed if self.seed == other.seed else -1,
            convention=self.convention,
            tempered=self.tempered,
            word_bits=self.word_bits,
            r_max=self.r_max,
            lag_unit=self.lag_unit,
            spike_unit=self.spike_unit,
            lag_flags=_add(self.lag_flags, other.lag_flags),
            chains=_add(self.chains, other.chains),
            length_sum=self.length_sum + other.length_sum,
        )
        return out

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): v for k, v in sorted(self.counts.items())},
            "overflow": self.overflow,
            "total_runs": self.total_runs,
            "generator_id": self.generator_id,
            "seed": self.seed,
            "convention": self.convention,
            "tempered": self.tempered,
            "word_bits": self.word_bits,
            "r_max": self.r_max,
            "lag_unit": self.lag_unit,
            "spike_unit": self.spike_unit,
            "lag_flags": {str(k): v for k, v in sorted(self.lag_flags.items())},
            "chains": {str(k): v for k, v in sorted(self.chains.items())},
            "length_sum": self.length_sum,
            "mean_run_length": self.mean_run_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunLengthHistogram":
        return cls(
            counts={int(k): v for k, v in d["counts"].items()},
            overflow=d["overflow"],
            generator_id=d["generator_id"],
            seed=d["seed"],
            convention=d["convention"],
            tempered=d["tempered"],
            word_bits=d["word_bits"],
            r_max=d["r_max"],
            lag_unit=d["lag_unit"],
            spike_unit=d["spike_unit"],
            lag_flags={int(k): v for k, v in d["lag_flags"].items()},
            chains={int(k): v for k, v in d["chains"].items()},
            length_sum=d["length_sum"],
        )


def _add(a: Mapping[int, int], b: Mapping[int, int]) -> dict[int, int]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return dict(sorted(out.items()))


CSV_HEADER = ("run_length", "count", "expected", "ratio", "z")


def _ratio_z(observed: float, expected: float) -> tuple[float, float]:
    if expected > 0:
        return observed / expected, (observed - expected) / math.sqrt(expected)
    return (math.inf, math.inf) if observed else (math.nan, 0.0)


def histogram_csv(hist: RunLengthHistogram, baseline: Baseline | None = None) -> str:
    if baseline is None:
        baseline = expected_distribution(hist.total_runs, hist.r_max, hist.word_bits)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r, count in sorted(hist.counts.items()):
        exp = baseline[r]
        ratio, z = _ratio_z(count, exp)
        writer.writerow((r, count, repr(exp), repr(ratio), repr(z)))
    ratio, z = _ratio_z(hist.overflow, baseline.overflow)
    writer.writerow(("OVERFLOW", hist.overflow, repr(baseline.overflow), repr(ratio), repr(z)))
    return buf.getvalue()


@dataclass
class HistogramTable:
    """A histogram read back from CSV, with its own expected column."""

    counts: dict[int, int]
    expected: dict[int, float]
    overflow: int
    overflow_expected: float

    @property
    def total_runs(self) -> int:
        return sum(self.counts.values()) + self.overflow


def read_histogram_csv(text: str) -> HistogramTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise ValueError(f"bad histogram header: {header!r}")
    counts: dict[int, int] = {}
    expected: dict[int, float] = {}
    overflow, overflow_expected = 0, 0.0
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} fields")
        try:
            count = int(row[1])
            exp = float(row[2])
            if row[0] == "OVERFLOW":
                overflow, overflow_expected = count, exp
                continue
            r = int(row[0])
        except ValueError as err:
            raise ValueError(f"line {lineno}: {err}") from None
        if r < 1 or count < 0:
            raise ValueError(f"line {lineno}: run length and count must be positive")
        if r in counts:
            raise ValueError(f"line {lineno}: duplicate run length {r}")
        counts[r] = count
        expected[r] = exp
    return HistogramTable(counts, expected, overflow, overflow_expected)


# -- spike detection --------------------------------------------------------


def spike_report(hist, baseline, centers=SPIKE_CENTERS) -> dict:
    """Observed vs expected around the spike centers plus a global max-ratio scan.

    ``hist`` is a :class:`RunLengthHistogram` or :class:`HistogramTable`;
    ``baseline`` maps run-length to expected count.
    """
    counts = hist.counts
    rows = []
    for c in centers:
        for r in (c - 1, c, c + 1):
            obs = counts.get(r, 0)
            exp = baseline[r]
            ratio, z = _ratio_z(obs, exp)
            bound = exp + 5.0 * math.sqrt(exp)
            rows.append({
                "run_length": r,
                "observed": obs,
                "expected": exp,
                "ratio": ratio,
                "z": z,
                "bound_5sigma": bound,
                "exceeds_5sigma": obs > bound,
            })
    best = None
    for r, obs in counts.items():
        exp = baseline[r]
        if exp <= 0:
            continue
        ratio = obs / exp
        if best is None or ratio > best[1]:
            best = (r, ratio)
    return {
        "total_runs": hist.total_runs,
        "focus": rows,
        "max_ratio": None if best is None else {"run_length": best[0], "ratio": best[1]},
    }


class TableBaseline:
    """Expected counts from a CSV, falling back to the ideal law."""

    def __init__(self, table: HistogramTable, fallback: Baseline) -> None:
        self.table = table
        self.fallback = fallback

    def __getitem__(self, r: int) -> float:
        if r in self.table.expected:
            return self.table.expected[r]
        return self.fallback[r]


# -- scanning ---------------------------------------------------------------


# Each slot is (key, meta) with meta = stamp << 32 | index.  A slot is live
# for the current run iff its stamp matches; bumping the stamp empties the
# table in O(1).
_STAMP_LIMIT = (1 << 32) - 1


@njit(cache=True)
def _probe(table, stamp, mask, shift, key, pos):
    """Index of ``key`` in the current run, inserting it at ``pos`` if absent."""
    h = np.int64((key * _GOLD) >> shift)
    s = np.uint64(stamp)
    while (table[h, 1] >> np.uint64(32)) == s:
        if table[h, 0] == key:
            return np.int64(table[h, 1] & np.uint64(0xFFFFFFFF))
        h = (h + 1) & mask
    table[h, 0] = key
    table[h, 1] = (s << np.uint64(32)) | np.uint64(pos)
    return -1


@njit(cache=True)
def _next_stamp(table, stamp):
    stamp += 1
    if stamp == _STAMP_LIMIT:
        table[:, :] = 0
        stamp = 1
    return stamp


@njit(cache=True)
def _scan_kernel(vals, table, st, out_r, out_lag, rmax, reuse, max_runs):
    stamp = st[0]
    pos = st[1]
    cap = table.shape[0]
    mask = cap - 1
    shift = np.uint64(64 - st[2])
    nr = 0
    status = 0
    j = 0
    nv = vals.shape[0]
    while j < nv:
        if nr == max_runs:
            status = 1
            break
        if 2 * (pos + 1) > cap:
            status = 2
            break
        key = vals[j]
        found = _probe(table, stamp, mask, shift, key, pos)
        if found >= 0:
            out_r[nr] = pos
            out_lag[nr] = pos - found
            nr += 1
            stamp = _next_stamp(table, stamp)
            if reuse:
                _probe(table, stamp, mask, shift, key, 0)
                pos = 1
            else:
                pos = 0
        else:
            pos += 1
            if pos > rmax:
                out_r[nr] = -1
                out_lag[nr] = 0
                nr += 1
                stamp = _next_stamp(table, stamp)
                pos = 0
        j += 1
    if j == nv and nr == max_runs:
        status = 1
    st[0] = stamp
    st[1] = pos
    return j, nr, status


@njit(cache=True)
def _rehash(table, stamp, new_table, new_logcap):
    mask = new_table.shape[0] - 1
    shift = np.uint64(64 - new_logcap)
    s = np.uint64(stamp)
    for h in range(table.shape[0]):
        if (table[h, 1] >> np.uint64(32)) == s:
            _probe(new_table, stamp, mask, shift, table[h, 0],
                   np.int64(table[h, 1] & np.uint64(0xFFFFFFFF)))


@dataclass
class ScanConfig:
    num_runs: int
    r_max: int = DEFAULT_RMAX
    generator: str = "mt32"
    seed: int = 5489
    tempered: bool = True
    annotate_lags: bool = True
    convention: str = "reuse"

    def __post_init__(self) -> None:
        if self.r_max < 1:
            raise ValueError("r_max must be at least 1")
        if self.num_runs < 0:
            raise ValueError("num_runs must be non-negative")
        if self.generator not in ("mt32", "mt64", "control"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.convention not in ("reuse", "fresh"):
            raise ValueError(f"unknown run convention {self.convention!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class MTStream:
    def __init__(self, state: GeneratorState, tempered: bool) -> None:
        self.state = state
        self.tempered = tempered

    def take(self, count: int) -> np.ndarray:
        return self.state.take(count, tempered=self.tempered)

    def clone(self) -> "MTStream":
        return MTStream(self.state.clone(), self.tempered)

    def to_dict(self) -> dict:
        return {"kind": "mt", "tempered": self.tempered, "state": self.state.to_dict()}


def _stream_from_dict(d: dict):
    if d["kind"] == "control":
        return ControlStream.from_dict(d)
    return MTStream(GeneratorState.from_dict(d["state"]), d["tempered"])


def open_stream(config: ScanConfig):
    if config.generator == "control":
        return ControlStream(config.seed)
    return MTStream(seed_init(config.seed, GENERATORS[config.generator]), config.tempered)


class Scanner:
    """Sequential scan over one stream; checkpointable between calls."""

    def __init__(self, config: ScanConfig, stream=None) -> None:
        self.config = config
        self.stream = open_stream(config) if stream is None else stream
        ref = GENERATORS.get(config.generator, MT19937)
        self.hist = RunLengthHistogram(
            generator_id=config.generator,
            seed=config.seed,
            convention=config.convention,
            tempered=config.tempered or config.generator == "control",
            word_bits=64 if config.generator == "mt64" else 32,
            r_max=config.r_max,
            lag_unit=ref.n - ref.m,
            spike_unit=ref.n - 1,
        )
        self.prev_lag = 0
        self._alloc(INITIAL_LOGCAP)
        self.st = np.array([1, 0, INITIAL_LOGCAP], dtype=np.int64)

    def _alloc(self, logcap: int) -> None:
        self.table = np.zeros((1 << logcap, 2), dtype=np.uint64)

    def _grow(self) -> None:
        old = self.table
        logcap = int(self.st[2]) + 1
        self._alloc(logcap)
        _rehash(old, self.st[0], self.table, logcap)
        self.st[2] = logcap

    def run(self, num_runs: int | None = None) -> RunLengthHistogram:
        remaining = self.config.num_runs if num_runs is None else num_runs
        reuse = self.config.convention == "reuse"
        while remaining > 0:
            snapshot = self.stream.clone()
            vals = self.stream.take(BLOCK)
            offset = 0
            while offset < len(vals):
                cap_runs = min(remaining, len(vals) - offset + 1)
                out_r = np.empty(cap_runs, dtype=np.int64)
                out_lag = np.empty(cap_runs, dtype=np.int64)
                used, nr, status = _scan_kernel(
                    vals[offset:], self.table, self.st,
                    out_r, out_lag, self.config.r_max, reuse, cap_runs,
                )
                offset += used
                self._record(out_r[:nr], out_lag[:nr])
                remaining -= nr
                if status == 2:
                    self._grow()
                elif remaining == 0:
                    break
            if offset < len(vals):
                # Stop exactly at the run boundary: replay only what was consumed.
                snapshot.take(offset)
                self.stream = snapshot
        return self.hist

    def _record(self, rs: np.ndarray, lags: np.ndarray) -> None:
        if not len(rs):
            return
        h = self.hist
        done = rs >= 0
        h.overflow += int(np.count_nonzero(~done))
        vals, cnts = np.unique(rs[done], return_counts=True)
        for v, c in zip(vals.tolist(), cnts.tolist()):
            h.counts[v] = h.counts.get(v, 0) + c
        h.length_sum += int(rs[done].sum())
        if self.config.annotate_lags:
            prev = np.concatenate(([self.prev_lag], lags[:-1]))
            for k in range(CHAIN_DEPTH):
                lag = h.lag_unit << k
                flagged = int(np.count_nonzero(lags == lag))
                chained = int(np.count_nonzero((prev == lag) & (rs == h.spike_unit << k)))
                if flagged:
                    h.lag_flags[k] = h.lag_flags.get(k, 0) + flagged
                if chained:
                    h.chains[k] = h.chains.get(k, 0) + chained
        self.prev_lag = int(lags[-1])

    def checkpoint(self) -> dict:
        live = (self.table[:, 1] >> np.uint64(32)) == np.uint64(self.st[0])
        keys = self.table[live, 0]
        idxs = self.table[live, 1] & np.uint64(0xFFFFFFFF)
        return {
            "config": self.config.to_dict(),
            "stream": self.stream.to_dict(),
            "stamp": int(self.st[0]),
            "pos": int(self.st[1]),
            "run": sorted([int(i), int(k)] for k, i in zip(keys, idxs)),
            "prev_lag": self.prev_lag,
            "histogram": self.hist.to_dict(),
        }

    @classmethod
    def from_checkpoint(cls, d: dict) -> "Scanner":
        scanner = cls(ScanConfig(**d["config"]), _stream_from_dict(d["stream"]))
        scanner.hist = RunLengthHistogram.from_dict(d["histogram"])
        scanner.prev_lag = d["prev_lag"]
        logcap = INITIAL_LOGCAP
        while (1 << logcap) < 2 * (d["pos"] + 1):
            logcap += 1
        scanner._alloc(logcap)
        stamp = d["stamp"]
        scanner.st = np.array([stamp, d["pos"], logcap], dtype=np.int64)
        mask = (1 << logcap) - 1
        for idx, key in d["run"]:
            _probe(scanner.table, stamp, mask, np.uint64(64 - logcap), np.uint64(key), idx)
        return scanner


def scan(config: ScanConfig) -> RunLengthHistogram:
    return Scanner(config).run()


def scan_words(words, r_max: int = DEFAULT_RMAX, convention: str = "reuse") -> list[int]:
    """Run-lengths of a finite word sequence (trailing partial run dropped)."""
    words = np.asarray(words, dtype=np.uint64)
    st = np.array([1, 0, INITIAL_LOGCAP], dtype=np.int64)
    cap = 1 << INITIAL_LOGCAP
    table = np.zeros((cap, 2), dtype=np.uint64)
    out_r = np.empty(len(words) + 1, dtype=np.int64)
    out_lag = np.empty(len(words) + 1, dtype=np.int64)
    if len(words) >= cap // 2:
        raise ValueError("scan_words is for short synthetic streams")
    _, nr, _ = _scan_kernel(words, table, st, out_r, out_lag, r_max,
                            convention == "reuse", len(words) + 1)
    return out_r[:nr].tolist()


# -- planted spike ----------------------------------------------------------


@njit(cache=True)
def _next_run_lengths(states, start, horizon, n, m, upper, lower, a):
    count = states.shape[0]
    length = start + horizon + 1
    x = np.empty(length, dtype=np.uint64)
    logcap = 1
    while (1 << logcap) < 4 * (horizon + 1):
        logcap += 1
    cap = 1 << logcap
    table = np.zeros((cap, 2), dtype=np.uint64)
    shift = np.uint64(64 - logcap)
    out = np.full(count, -1, dtype=np.int64)
    for t in range(count):
        x[:n] = states[t]
        extend_sequence(x, n, length, n, m, upper, lower, a)
        if t % 1000000 == 0:
            table[:, :] = 0
        stamp = t % 1000000 + 1
        for r in range(horizon + 1):
            if _probe(table, stamp, cap - 1, shift, x[start + r], r) >= 0:
                out[t] = r
                break
    return out


def no_early_duplicate(count: int, bits: int = 32) -> float:
    """``prod_{j=1}^{count-1} (1 - j / 2^bits)``."""
    j = np.arange(1, count, dtype=np.float64)
    return math.exp(math.fsum(np.log1p(-j / 2.0**bits).tolist()))


def planted_spike_trial(trials: int, entropy_seed: int, params: GeneratorParams = MT19937,
                        *, trial_offset: int = 0, batch: int = 8192) -> dict:
    """Plant event (1), start a run at its closing duplicate, measure the next run.

    The closing duplicate is ``x[i + n - 1]``; under the reuse convention it
    is index 0 of the next run, so event (2) lands at index ``n - 1``.
    Untempered words are scanned (tempering is a bijection).
    """
    n = params.n
    spike = n - 1
    horizon = 2 * spike + 2
    expected = 0.5 * no_early_duplicate(spike, params.w)
    lengths: dict[int, int] = {}
    censored = 0
    i = None
    for start in range(0, trials, batch):
        count = min(batch, trials - start)
        states, i = planted_states({0}, trial_offset + start, count, entropy_seed, params)
        rs = _next_run_lengths(states, i + spike, horizon, *kernel_args(params))
        censored += int(np.count_nonzero(rs < 0))
        vals, cnts = np.unique(rs[rs >= 0], return_counts=True)
        for v, c in zip(vals.tolist(), cnts.tolist()):
            lengths[v] = lengths.get(v, 0) + c
    hits = lengths.get(spike, 0)
    freq = hits / trials if trials else 0.0
    sigma = math.sqrt(expected * (1 - expected) / trials) if trials else 0.0
    return {
        "generator": params.name,
        "trials": trials,
        "trial_offset": trial_offset,
        "seed": entropy_seed,
        "plant_index": i,
        "run_start": None if i is None else i + spike,
        "horizon": horizon,
        "spike_run_length": spike,
        "hits": hits,
        "frequency_of_623": freq,
        "expected": expected,
        "sigma": sigma,
        "z_score": (freq - expected) / sigma if sigma else 0.0,
        "frequency_622": lengths.get(spike - 1, 0) / trials if trials else 0.0,
        "frequency_624": lengths.get(spike + 1, 0) / trials if trials else 0.0,
        "run_lengths": {str(k): v for k, v in sorted(lengths.items())},
        "censored": censored,
    }
