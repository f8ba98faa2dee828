"""Dense linear algebra over GF(2) with int-bitset rows.

A matrix is a tuple of Python ints, one per row.  Column 0 (the first
component of a row vector) is the most significant bit of the row int, so a
``w``-bit machine word *is* its own row vector: component 1 is bit ``w - 1``.

Vectors act on matrices from the left (``v @ M``), matching the convention
that the generator recursion is written with row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BitMatrix:
    nrows: int
    ncols: int
    rows: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.rows) != self.nrows:
            raise ValueError(f"expected {self.nrows} rows, got {len(self.rows)}")
        limit = 1 << self.ncols
        for row in self.rows:
            if row < 0 or row >= limit:
                raise ValueError(f"row {row:#x} does not fit in {self.ncols} columns")

    @classmethod
    def from_rows(cls, rows: Iterable[int], ncols: int) -> "BitMatrix":
        rows = tuple(rows)
        return cls(len(rows), ncols, rows)

    @classmethod
    def from_lists(cls, entries: Sequence[Sequence[int]]) -> "BitMatrix":
        """Build from a nested list of 0/1 entries (row-major)."""
        ncols = len(entries[0]) if entries else 0
        rows = []
        for line in entries:
            if len(line) != ncols:
                raise ValueError("ragged rows")
            rows.append(bits_to_word(line))
        return cls(len(rows), ncols, tuple(rows))

    def get(self, i: int, j: int) -> int:
        """Entry at 0-based row ``i``, column ``j`` (column 0 is the MSB)."""
        return (self.rows[i] >> (self.ncols - 1 - j)) & 1

    def column(self, j: int) -> tuple[int, ...]:
        return tuple(self.get(i, j) for i in range(self.nrows))

    def to_lists(self) -> list[list[int]]:
        return [list(word_to_bits(row, self.ncols)) for row in self.rows]

    def is_zero(self) -> bool:
        return not any(self.rows)

    def nonzero_entries(self) -> list[tuple[int, int]]:
        return [
            (i, j)
            for i, row in enumerate(self.rows)
            if row
            for j in range(self.ncols)
            if (row >> (self.ncols - 1 - j)) & 1
        ]

    def __add__(self, other: "BitMatrix") -> "BitMatrix":
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            raise ValueError(
                f"shape mismatch: {self.nrows}x{self.ncols} + {other.nrows}x{other.ncols}"
            )
        return BitMatrix(
            self.nrows, self.ncols, tuple(a ^ b for a, b in zip(self.rows, other.rows))
        )

    __sub__ = __add__

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        return mat_mul(self, other)

    def __repr__(self) -> str:
        return f"BitMatrix({self.nrows}x{self.ncols}, rank={mat_rank(self)})"

    def pretty(self) -> str:
        return "\n".join(format(row, f"0{self.ncols}b") for row in self.rows)


def word_to_bits(word: int, width: int) -> tuple[int, ...]:
    """MSB-first component tuple of ``word``."""
    if word < 0 or word >> width:
        raise ValueError(f"{word} does not fit in {width} bits")
    return tuple((word >> (width - 1 - j)) & 1 for j in range(width))


def bits_to_word(bits: Sequence[int]) -> int:
    word = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"not a bit: {b!r}")
        word = (word << 1) | b
    return word


def identity(n: int) -> BitMatrix:
    return BitMatrix(n, n, tuple(1 << (n - 1 - i) for i in range(n)))


def zeros(nrows: int, ncols: int) -> BitMatrix:
    return BitMatrix(nrows, ncols, (0,) * nrows)


def vec_mul(v: int, m: BitMatrix) -> int:
    """Row vector ``v`` (an ``m.nrows``-bit int) times ``m``."""
    if v >> m.nrows:
        raise ValueError(f"vector wider than {m.nrows} bits")
    out = 0
    top = m.nrows - 1
    rows = m.rows
    while v:
        low = v & -v
        out ^= rows[top - (low.bit_length() - 1)]
        v ^= low
    return out


def mat_mul(lhs: BitMatrix, rhs: BitMatrix) -> BitMatrix:
    if lhs.ncols != rhs.nrows:
        raise ValueError(
            f"dimension mismatch: {lhs.nrows}x{lhs.ncols} @ {rhs.nrows}x{rhs.ncols}"
        )
    return BitMatrix(lhs.nrows, rhs.ncols, tuple(vec_mul(row, rhs) for row in lhs.rows))


def mat_pow(m: BitMatrix, e: int) -> BitMatrix:
    if m.nrows != m.ncols:
        raise ValueError(f"power of non-square {m.nrows}x{m.ncols} matrix")
    if e < 0:
        raise ValueError("negative exponent")
    result = identity(m.nrows)
    base = m
    while e:
        if e & 1:
            result = mat_mul(result, base)
        e >>= 1
        if e:
            base = mat_mul(base, base)
    return result


def vstack(blocks: Sequence[BitMatrix]) -> BitMatrix:
    ncols = blocks[0].ncols
    if any(b.ncols != ncols for b in blocks):
        raise ValueError("vstack needs equal column counts")
    return BitMatrix.from_rows((r for b in blocks for r in b.rows), ncols)


def hstack(blocks: Sequence[BitMatrix]) -> BitMatrix:
    nrows = blocks[0].nrows
    if any(b.nrows != nrows for b in blocks):
        raise ValueError("hstack needs equal row counts")
    rows = []
    for i in range(nrows):
        acc = 0
        for b in blocks:
            acc = (acc << b.ncols) | b.rows[i]
        rows.append(acc)
    return BitMatrix(nrows, sum(b.ncols for b in blocks), tuple(rows))


def submatrix(m: BitMatrix, row0: int, nrows: int, col0: int, ncols: int) -> BitMatrix:
    shift = m.ncols - col0 - ncols
    mask = (1 << ncols) - 1
    return BitMatrix(
        nrows, ncols, tuple((r >> shift) & mask for r in m.rows[row0 : row0 + nrows])
    )


def _eliminate(m: BitMatrix, track: bool) -> tuple[int, list[int]]:
    # Leftmost-pivot elimination: each stored pivot row is keyed by its
    # leading (most significant) bit.  With ``track`` each row carries the
    # combination of original rows that produced it.
    pivots: dict[int, tuple[int, int]] = {}
    kernel: list[int] = []
    top = m.nrows - 1
    for idx, row in enumerate(m.rows):
        combo = 1 << (top - idx) if track else 0
        while row:
            lead = row.bit_length() - 1
            hit = pivots.get(lead)
            if hit is None:
                pivots[lead] = (row, combo)
                break
            row ^= hit[0]
            combo ^= hit[1]
        else:
            if track:
                kernel.append(combo)
    return len(pivots), kernel


def mat_rank(m: BitMatrix) -> int:
    return _eliminate(m, track=False)[0]


def left_kernel_basis(m: BitMatrix) -> list[int]:
    """Basis of ``{v : v @ m == 0}`` as ``m.nrows``-bit ints."""
    return _eliminate(m, track=True)[1]


def sample_kernel(m: BitMatrix, entropy) -> int:
    """Uniform element of the left kernel of ``m``.

    ``entropy`` is anything with a ``getrandbits(k)`` method
    (``random.Random`` or :class:`mtdup.control.ControlStream`).
    """
    basis = left_kernel_basis(m)
    if not basis:
        return 0
    coeffs = entropy.getrandbits(len(basis))
    v = 0
    for b in basis:
        if coeffs & 1:
            v ^= b
        coeffs >>= 1
    return v
