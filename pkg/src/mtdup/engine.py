"""Parameterized Mersenne Twister (MT19937 and MT19937-64).

The state array holds ``x[origin] .. x[origin + n - 1]`` of the untempered
sequence.  ``cursor`` is the offset of the next word to hand out; a cursor
equal to ``n`` means the next call regenerates the array first.  Right after
seeding, ``origin == 0`` and ``cursor == n``, so the first output is
``x[n]``, the same word the reference implementation returns first.

All words are carried as uint64 regardless of ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class GeneratorParams:
    name: str
    w: int
    n: int
    m: int
    r: int
    a: int
    u: int
    d: int
    s: int
    b: int
    t: int
    c: int
    l: int
    f: int

    def __post_init__(self) -> None:
        if not 0 < self.m < self.n:
            raise ValueError("need 0 < m < n")
        if not 0 <= self.r < self.w:
            raise ValueError("need 0 <= r < w")
        if not (self.a >> (self.w - 1)) & 1:
            raise ValueError("top bit of the feedback word must be set")

    @property
    def word_mask(self) -> int:
        return (1 << self.w) - 1

    @property
    def lower_mask(self) -> int:
        return (1 << self.r) - 1

    @property
    def upper_mask(self) -> int:
        return self.word_mask ^ self.lower_mask

    @property
    def sparse_c(self) -> bool:
        """True when the upper part is a single bit (``w - r == 1``)."""
        return self.w - self.r == 1


MT19937 = GeneratorParams(
    name="mt32", w=32, n=624, m=397, r=31, a=0x9908B0DF,
    u=11, d=0xFFFFFFFF, s=7, b=0x9D2C5680, t=15, c=0xEFC60000, l=18,
    f=1812433253,
)

MT19937_64 = GeneratorParams(
    name="mt64", w=64, n=312, m=156, r=31, a=0xB5026F5AA96619E9,
    u=29, d=0x5555555555555555, s=17, b=0x71D67FFFEDA60000, t=37,
    c=0xFFF7EEE000000000, l=43, f=6364136223846793005,
)

GENERATORS = {"mt32": MT19937, "mt64": MT19937_64}


def temper(x, p: GeneratorParams = MT19937):
    """Output transform.  Works elementwise on ints and uint64 arrays."""
    if isinstance(x, np.ndarray):
        x = x.astype(np.uint64, copy=False)
        u, s, t, l = (np.uint64(v) for v in (p.u, p.s, p.t, p.l))
        mask = np.uint64(p.word_mask)
        y = x ^ ((x >> u) & np.uint64(p.d))
        y ^= (y << s) & np.uint64(p.b)
        y ^= (y << t) & np.uint64(p.c)
        y ^= y >> l
        return y & mask
    y = x ^ ((x >> p.u) & p.d)
    y ^= (y << p.s) & p.b
    y ^= (y << p.t) & p.c
    y ^= y >> p.l
    return y & p.word_mask


def _undo_right(y: int, shift: int, mask: int, w: int) -> int:
    x = y
    for _ in range(w // shift + 1):
        x = y ^ ((x >> shift) & mask)
    return x


def _undo_left(y: int, shift: int, mask: int, w: int) -> int:
    x = y
    full = (1 << w) - 1
    for _ in range(w // shift + 1):
        x = y ^ ((x << shift) & mask & full)
    return x


def untemper(y: int, p: GeneratorParams = MT19937) -> int:
    x = _undo_right(y, p.l, p.word_mask, p.w)
    x = _undo_left(x, p.t, p.c, p.w)
    x = _undo_left(x, p.s, p.b, p.w)
    return _undo_right(x, p.u, p.d, p.w)


@njit(cache=True)
def _twist(words, n, m, upper, lower, a):
    one = np.uint64(1)
    for k in range(n):
        y = (words[k] & upper) | (words[(k + 1) % n] & lower)
        v = words[(k + m) % n] ^ (y >> one)
        if y & one:
            v ^= a
        words[k] = v


@njit(cache=True)
def extend_sequence(x, start, stop, n, m, upper, lower, a):
    """Fill ``x[start:stop]`` from the recursion; needs ``start >= n``."""
    one = np.uint64(1)
    for j in range(start, stop):
        y = (x[j - n] & upper) | (x[j - n + 1] & lower)
        v = x[j - n + m] ^ (y >> one)
        if y & one:
            v ^= a
        x[j] = v


@njit(cache=True)
def _fill(words, cursor, out, n, m, upper, lower, a):
    filled = 0
    twists = 0
    total = out.shape[0]
    while filled < total:
        if cursor == n:
            _twist(words, n, m, upper, lower, a)
            cursor = 0
            twists += 1
        k = min(n - cursor, total - filled)
        out[filled : filled + k] = words[cursor : cursor + k]
        cursor += k
        filled += k
    return cursor, twists


@njit(cache=True)
def _temper_inplace(out, u, d, s, b, t, c, l, mask):
    for j in range(out.shape[0]):
        y = out[j]
        y ^= (y >> u) & d
        y ^= (y << s) & b
        y ^= (y << t) & c
        y ^= y >> l
        out[j] = y & mask


def kernel_args(p: GeneratorParams) -> tuple:
    """Scalar arguments of the compiled recursion kernels."""
    return (p.n, p.m, np.uint64(p.upper_mask), np.uint64(p.lower_mask), np.uint64(p.a))


class GeneratorState:
    """A runnable generator: ``n`` words, a cursor, and the absolute origin."""

    def __init__(self, params: GeneratorParams, words, cursor: int, origin: int = 0) -> None:
        words = np.array(words, dtype=np.uint64)
        if words.shape != (params.n,):
            raise ValueError(f"state needs {params.n} words, got {words.shape}")
        if params.w < 64 and np.any(words >> np.uint64(params.w)):
            raise ValueError(f"state word exceeds {params.w} bits")
        if not 0 <= cursor <= params.n:
            raise ValueError("cursor out of range")
        self.params = params
        self.words = words
        self.cursor = cursor
        self.origin = origin

    @property
    def position(self) -> int:
        """Absolute index in the x-sequence of the next word."""
        return self.origin + self.cursor

    def clone(self) -> "GeneratorState":
        return GeneratorState(self.params, self.words.copy(), self.cursor, self.origin)

    def _regenerate(self) -> None:
        _twist(self.words, *kernel_args(self.params))
        self.origin += self.params.n
        self.cursor = 0

    def next_untempered(self) -> int:
        if self.cursor == self.params.n:
            self._regenerate()
        x = int(self.words[self.cursor])
        self.cursor += 1
        return x

    def next(self) -> int:
        return temper(self.next_untempered(), self.params)

    def take(self, count: int, tempered: bool = False) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        self.cursor, twists = _fill(self.words, self.cursor, out, *kernel_args(self.params))
        self.origin += twists * self.params.n
        if tempered:
            p = self.params
            _temper_inplace(out, *(np.uint64(v) for v in (p.u, p.d, p.s, p.b, p.t, p.c, p.l, p.word_mask)))
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratorState):
            return NotImplemented
        return (
            self.params == other.params
            and self.cursor == other.cursor
            and self.origin == other.origin
            and np.array_equal(self.words, other.words)
        )

    def to_dict(self) -> dict:
        return {
            "params": self.params.name,
            "words": [int(v) for v in self.words],
            "cursor": self.cursor,
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorState":
        return cls(GENERATORS[d["params"]], d["words"], d["cursor"], d["origin"])


def seed_init(seed: int, params: GeneratorParams = MT19937) -> GeneratorState:
    """Standard multiplier-recurrence initializer (``init_genrand``)."""
    mask = params.word_mask
    words = [seed & mask]
    shift = params.w - 2
    for i in range(1, params.n):
        prev = words[-1]
        words.append((params.f * (prev ^ (prev >> shift)) + i) & mask)
    return GeneratorState(params, words, cursor=params.n, origin=0)


def next_untempered(state: GeneratorState) -> int:
    return state.next_untempered()


def plant_window(state: GeneratorState, position: int, values) -> GeneratorState:
    """Copy of ``state`` with ``words[position + j] = values[j]``.

    The window must sit inside words ``1 .. n-1``: the low bits of word 0
    never enter the recursion.
    """
    values = [int(v) for v in values]
    n = state.params.n
    if position < 1 or position + len(values) > n:
        raise ValueError(
            f"window [{position}, {position + len(values)}) outside state words 1..{n - 1}"
        )
    if any(v < 0 or v > state.params.word_mask for v in values):
        raise ValueError("planted value does not fit in a word")
    planted = state.clone()
    planted.words[position : position + len(values)] = values
    return planted


def untempered_sequence(state: GeneratorState, length: int) -> np.ndarray:
    """``x[origin] .. x[origin + length - 1]`` without touching ``state``."""
    p = state.params
    x = np.empty(max(length, p.n), dtype=np.uint64)
    x[: p.n] = state.words
    extend_sequence(x, p.n, len(x), *kernel_args(p))
    return x[:length]
