"""Counter-based control generator (SplitMix64 finalizer).

Not F2-linear, so it cannot share MT19937's lagged-equality structure.  It
serves as the contrast generator for repetition histograms and as the
entropy source for constrained state planting.

Word ``j`` of the stream with seed ``s`` is the high half of
``mix(s + (j + 1) * GAMMA)``, where ``mix`` is two xor-shift-multiply rounds
followed by a final xor-shift.  Random access by index makes substreams
(one per trial) trivially disjoint and partition-invariant.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def control_block(seed: int, start: int, count: int, bits: int = 32) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream, as uint64."""
    return control_at(seed, np.arange(start, start + count, dtype=np.uint64), bits)


def control_at(seed: int, index: np.ndarray, bits: int = 32) -> np.ndarray:
    """Words at arbitrary stream positions (any array shape)."""
    if bits not in (32, 64):
        raise ValueError("bits must be 32 or 64")
    idx = np.asarray(index, dtype=np.uint64) + np.uint64(1)
    z = np.uint64(seed & MASK64) + idx * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    z ^= z >> np.uint64(31)
    if bits == 32:
        z >>= np.uint64(32)
    return z


@njit(cache=True)
def control_word(seed, index, bits):
    z = seed + (index + np.uint64(1)) * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    z ^= z >> np.uint64(31)
    if bits == 32:
        z >>= np.uint64(32)
    return z


@njit(cache=True)
def control_fill(seed, start, out, bits):
    seed = np.uint64(seed)
    for j in range(out.shape[0]):
        out[j] = control_word(seed, np.uint64(start + j), bits)


@njit(cache=True)
def control_rows(seed, first_row, count, stride, width, bits):
    """``out[r, j]`` = word ``(first_row + r) * stride + j``."""
    out = np.empty((count, width), dtype=np.uint64)
    seed = np.uint64(seed)
    for r in range(count):
        base = np.uint64((first_row + r) * stride)
        for j in range(width):
            out[r, j] = control_word(seed, base + np.uint64(j), bits)
    return out


class ControlStream:
    """Sequential view of the control generator."""

    bits = 32

    def __init__(self, seed: int, position: int = 0, bits: int = 32) -> None:
        self.seed = seed & MASK64
        self.position = position
        self.bits = bits

    def next(self) -> int:
        z = mix64(self.seed + (self.position + 1) * GAMMA)
        self.position += 1
        return z >> 32 if self.bits == 32 else z

    def take(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        control_fill(self.seed, self.position, out, self.bits)
        self.position += count
        return out

    def getrandbits(self, k: int) -> int:
        if k <= 0:
            return 0
        nwords = -(-k // self.bits)
        acc = 0
        for w in self.take(nwords).tolist():
            acc = (acc << self.bits) | w
        return acc >> (nwords * self.bits - k)

    def clone(self) -> "ControlStream":
        return ControlStream(self.seed, self.position, self.bits)

    def to_dict(self) -> dict:
        return {"kind": "control", "seed": self.seed, "position": self.position, "bits": self.bits}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlStream":
        return cls(d["seed"], d["position"], d.get("bits", 32))


def control_stream(seed: int):
    """Infinite iterator over 32-bit control words."""
    s = ControlStream(seed)
    while True:
        yield from s.take(4096).tolist()
