"""Operator algebra for lagged-equality events of the MT recursion.

The untempered sequence ``x`` of a Mersenne Twister is the kernel of

    D^(n-1) + D^(m-1) + B + D^-1 C

where ``D`` is the delay (``ev_i(X D^e) = x[i+e]``) and ``B``, ``C`` are the
two row-splits of the twist companion matrix ``A``.  Raising this operator
to the power ``2^k`` kills every cross term (characteristic 2 and ``D``
commutes with matrices), so the event

    E_k:  x[i + 2^k (m-1)] == x[i + 2^k (n-1)]

holds iff ``ev_i(X (B + D^-1 C)^(2^k)) == 0``: a linear condition on a short
window ``(x[i], x[i-1], ...)``.  Conjunctions of events stack these
conditions side by side; under a uniform window the conjunction has
probability ``2^-rank``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

from .engine import MT19937, GeneratorParams, GeneratorState, seed_init, untempered_sequence
from .gf2 import (
    BitMatrix,
    hstack,
    identity,
    mat_mul,
    mat_pow,
    mat_rank,
    submatrix,
    vec_mul,
    vstack,
    zeros,
)


class WindowTooLarge(ValueError):
    """Constraint window exceeds the equidistribution dimension ``n - 1``."""


@dataclass(frozen=True)
class DyadicProb:
    """Exact probability ``2^-exponent``."""

    exponent: int

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError("probability exponent must be non-negative")

    def __str__(self) -> str:
        return f"2^-{self.exponent}"

    @property
    def fraction(self) -> Fraction:
        return Fraction(1, 1 << self.exponent)

    def decimal(self, digits: int = 12) -> str:
        return f"{float(self.fraction):.{digits}g}"

    def __mul__(self, other: "DyadicProb") -> "DyadicProb":
        return DyadicProb(self.exponent + other.exponent)

    def __truediv__(self, other: "DyadicProb") -> "DyadicProb":
        return DyadicProb(self.exponent - other.exponent)

    @classmethod
    def parse(cls, text: str) -> "DyadicProb":
        if not text.startswith("2^-"):
            raise ValueError(f"not a dyadic probability: {text!r}")
        return cls(int(text[3:]))


# -- matrices ---------------------------------------------------------------


@lru_cache(maxsize=None)
def build_matrices(params: GeneratorParams = MT19937):
    """Return ``(A, B, C, F)``.

    ``A`` is the twist companion matrix (superdiagonal ones, last row the
    feedback word), ``B`` keeps its bottom ``r`` rows, ``C`` its top
    ``w - r`` rows, and ``F`` is the lower-right ``r x r`` block of ``B``
    (the companion matrix ``F`` when ``w - r == 1``).
    """
    w, r = params.w, params.r
    rows = [1 << (w - 2 - i) for i in range(w - 1)] + [params.a]
    A = BitMatrix(w, w, tuple(rows))
    split = w - r
    B = BitMatrix(w, w, (0,) * split + A.rows[split:])
    C = BitMatrix(w, w, A.rows[:split] + (0,) * r)
    F = submatrix(B, split, r, split, r)
    return A, B, C, F


@lru_cache(maxsize=None)
def b_power(e: int, params: GeneratorParams = MT19937) -> BitMatrix:
    return mat_pow(build_matrices(params)[1], e)


@lru_cache(maxsize=None)
def _q_table(limit: int, params: GeneratorParams) -> tuple[BitMatrix, ...]:
    # Q_{k+1} = Q_k B + B^k C, so Q_0 = 0 and Q_1 = C.
    _, B, C, _ = build_matrices(params)
    qs = [zeros(params.w, params.w)]
    bk = identity(params.w)
    for _ in range(limit):
        qs.append(mat_mul(qs[-1], B) + mat_mul(bk, C))
        bk = mat_mul(bk, B)
    return tuple(qs)


def q_form_valid(k: int, params: GeneratorParams = MT19937) -> bool:
    """Whether ``(B + D^-1 C)^k == B^k + D^-1 Q_k`` is guaranteed."""
    return params.sparse_c and 1 <= k <= params.w - 2


def q_matrix(k: int, params: GeneratorParams = MT19937) -> BitMatrix:
    """``Q_k = sum_{i<k} B^i C B^(k-i-1)``.

    Defined for every ``k >= 1``; only ``q_form_valid(k)`` guarantees it is
    the whole ``D^-1`` part of ``(B + D^-1 C)^k``.
    """
    if k < 1:
        raise ValueError("q_matrix needs k >= 1")
    if k < 256:
        return _q_table(max(k, 64), params)[k]
    _, B, C, _ = build_matrices(params)
    total = zeros(params.w, params.w)
    for i in range(k):
        total = total + mat_mul(mat_mul(b_power(i, params), C), b_power(k - i - 1, params))
    return total


# -- operator polynomials ---------------------------------------------------


@dataclass(frozen=True)
class OperatorPoly:
    """Finite sum ``sum_e D^e M_e`` with ``w x w`` coefficients.

    ``terms`` is sorted by exponent and never holds a zero coefficient.
    """

    w: int
    terms: tuple[tuple[int, BitMatrix], ...] = field(default=())

    @classmethod
    def from_terms(cls, w: int, terms: Mapping[int, BitMatrix]) -> "OperatorPoly":
        for e, mat in terms.items():
            if (mat.nrows, mat.ncols) != (w, w):
                raise ValueError(f"coefficient of D^{e} is not {w}x{w}")
        return cls(w, tuple(sorted((e, m) for e, m in terms.items() if not m.is_zero())))

    @classmethod
    def monomial(cls, w: int, e: int, mat: BitMatrix | None = None) -> "OperatorPoly":
        return cls.from_terms(w, {e: identity(w) if mat is None else mat})

    def as_dict(self) -> dict[int, BitMatrix]:
        return dict(self.terms)

    def coeff(self, e: int) -> BitMatrix:
        return self.as_dict().get(e, zeros(self.w, self.w))

    @property
    def exponents(self) -> list[int]:
        return [e for e, _ in self.terms]

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        acc = self.as_dict()
        for e, mat in other.terms:
            acc[e] = acc[e] + mat if e in acc else mat
        return OperatorPoly.from_terms(self.w, acc)

    __sub__ = __add__

    def __mul__(self, other: "OperatorPoly") -> "OperatorPoly":
        # D commutes with every matrix: (D^a M)(D^b N) = D^(a+b) MN.
        acc: dict[int, BitMatrix] = {}
        for ea, ma in self.terms:
            for eb, mb in other.terms:
                prod = mat_mul(ma, mb)
                e = ea + eb
                acc[e] = acc[e] + prod if e in acc else prod
        return OperatorPoly.from_terms(self.w, acc)

    def is_zero(self) -> bool:
        return not self.terms

    def evaluate(self, x, i: int) -> int:
        """``ev_i`` of the operator applied to the sequence ``x``."""
        out = 0
        for e, mat in self.terms:
            out ^= vec_mul(int(x[i + e]), mat)
        return out


def op_power(base: OperatorPoly, e: int) -> OperatorPoly:
    if e < 1:
        raise ValueError("op_power needs a positive exponent")
    result = None
    sq = base
    while e:
        if e & 1:
            result = sq if result is None else result * sq
        e >>= 1
        if e:
            sq = sq * sq
    return result


def twist_operator(params: GeneratorParams = MT19937) -> OperatorPoly:
    """``B + D^-1 C``."""
    _, B, C, _ = build_matrices(params)
    return OperatorPoly.from_terms(params.w, {0: B, -1: C})


def recursion_operator(params: GeneratorParams = MT19937) -> OperatorPoly:
    """``D^(n-1) + D^(m-1) + B + D^-1 C``, whose kernel is the MT sequence."""
    w = params.w
    return (
        OperatorPoly.monomial(w, params.n - 1)
        + OperatorPoly.monomial(w, params.m - 1)
        + twist_operator(params)
    )


@lru_cache(maxsize=None)
def twist_power_2k(k: int, params: GeneratorParams = MT19937) -> OperatorPoly:
    """``(B + D^-1 C)^(2^k)`` by repeated squaring."""
    if k == 0:
        return twist_operator(params)
    prev = twist_power_2k(k - 1, params)
    return prev * prev


# -- constraint systems -----------------------------------------------------


@dataclass(frozen=True)
class ConstraintSystem:
    """Linear condition ``(x[i], x[i-1], ..., x[i-window+1]) @ matrix == 0``."""

    params: GeneratorParams
    window: int
    matrix: BitMatrix
    events: tuple[int, ...]

    @property
    def rank(self) -> int:
        return mat_rank(self.matrix)

    @property
    def probability(self) -> DyadicProb:
        return DyadicProb(self.rank)

    def window_vector(self, x, i: int) -> int:
        """Concatenate ``x[i], x[i-1], ...`` into one row vector."""
        w = self.params.w
        v = 0
        for j in range(self.window):
            v = (v << w) | int(x[i - j])
        return v

    def satisfied(self, x, i: int) -> bool:
        return vec_mul(self.window_vector(x, i), self.matrix) == 0

    def padded(self, window: int) -> BitMatrix:
        extra = window - self.window
        if extra < 0:
            raise ValueError("cannot shrink a constraint window")
        if not extra:
            return self.matrix
        return vstack([self.matrix, zeros(extra * self.params.w, self.matrix.ncols)])


def event_lags(k: int, params: GeneratorParams = MT19937) -> tuple[int, int]:
    """Offsets ``(2^k (m-1), 2^k (n-1))`` compared by event ``E_k``."""
    return (1 << k) * (params.m - 1), (1 << k) * (params.n - 1)


def event_holds(x, i: int, k: int, params: GeneratorParams = MT19937) -> bool:
    lo, hi = event_lags(k, params)
    return int(x[i + lo]) == int(x[i + hi])


def _check_window(window: int, params: GeneratorParams) -> None:
    if window > params.n - 1:
        raise WindowTooLarge(
            f"window of {window} words exceeds the {params.n - 1}-word equidistribution bound"
        )


def generic_event_constraint(k: int, params: GeneratorParams = MT19937) -> ConstraintSystem:
    """Event constraint read off the full expansion of ``(B + D^-1 C)^(2^k)``.

    Exponents lie in ``[-2^k, 0]`` but most coefficients cancel, so the
    window is only known after expanding.
    """
    poly = twist_power_2k(k, params)
    window = 1 - min(poly.exponents) if poly.terms else 1
    _check_window(window, params)
    blocks = [poly.coeff(-j) for j in range(window)]
    return ConstraintSystem(params, window, vstack(blocks), (k,))


@lru_cache(maxsize=None)
def event_constraint(k: int, params: GeneratorParams = MT19937) -> ConstraintSystem:
    if k < 0:
        raise ValueError("event index must be non-negative")
    e = 1 << k
    if q_form_valid(e, params):
        mat = vstack([b_power(e, params), q_matrix(e, params)])
        return ConstraintSystem(params, 2, mat, (k,))
    return generic_event_constraint(k, params)


def joint_constraint(events: Iterable[int], params: GeneratorParams = MT19937) -> ConstraintSystem:
    ks = tuple(sorted(set(events)))
    if not ks:
        raise ValueError("need at least one event")
    parts = [event_constraint(k, params) for k in ks]
    window = max(p.window for p in parts)
    _check_window(window, params)
    mat = hstack([p.padded(window) for p in parts])
    return ConstraintSystem(params, window, mat, ks)


def event_probability(events: Iterable[int], params: GeneratorParams = MT19937) -> DyadicProb:
    """Exact probability of the conjunction under a uniform window."""
    return joint_constraint(events, params).probability


def conditional_probability(
    given: Iterable[int], check: Iterable[int] | int, params: GeneratorParams = MT19937
) -> DyadicProb:
    given = set(given)
    check = {check} if isinstance(check, int) else set(check)
    if not given:
        return event_probability(check, params)
    joint = joint_constraint(given | check, params).rank
    base = joint_constraint(given, params).rank
    return DyadicProb(joint - base)


# -- verification -----------------------------------------------------------


def theorem_rank(s: int, t: int, params: GeneratorParams = MT19937) -> int | None:
    """Closed-form rank ``w + 2^t - 2^s``, or None outside its hypothesis."""
    if params.sparse_c and 0 <= s <= t and (1 << t) <= params.w - 2:
        return params.w + (1 << t) - (1 << s)
    return None


def verify_theorem(s: int, t: int, params: GeneratorParams = MT19937) -> dict:
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    system = joint_constraint(range(s, t + 1), params)
    rank = system.rank
    expected = theorem_rank(s, t, params)
    formula = params.w + (1 << t) - (1 << s)
    report = {
        "generator": params.name,
        "s": s,
        "t": t,
        "window": system.window,
        "rank": rank,
        "within_hypothesis": expected is not None,
        "expected": expected,
        "formula_rank": formula,
        "matches_formula": rank == formula,
        "probability": str(DyadicProb(rank)),
    }
    if expected is not None:
        report["status"] = "PASS" if rank == expected else "FAIL"
    else:
        report["status"] = "REPORTED"
    return report


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    # Identities that only hold when C is a single entry (w - r == 1).
    needs_sparse_c: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "needs_sparse_c": self.needs_sparse_c,
        }


def _first_failure(items) -> tuple[bool, str]:
    for label, ok in items:
        if not ok:
            return False, f"fails at {label}"
    return True, ""


def verify_lemmas(params: GeneratorParams = MT19937, stream_length: int = 10_000) -> dict:
    """Check every structural identity exactly; failures are listed, not raised."""
    w, n, m = params.w, params.n, params.m
    A, B, C, F = build_matrices(params)
    Bp = [b_power(e, params) for e in range(w + 1)]
    checks: list[Check] = []

    def add(name, result, needs_sparse_c=True):
        ok, detail = result if isinstance(result, tuple) else (result, "")
        checks.append(Check(name, ok, detail, needs_sparse_c))

    add("C_single_entry", C.nonzero_entries() == [(0, 1)])
    add("C_squared_zero", mat_mul(C, C).is_zero())
    add(
        "CB^sC_zero",
        _first_failure((f"s={s}", mat_mul(mat_mul(C, Bp[s]), C).is_zero()) for s in range(w - 1)),
    )

    def b_power_shape(s):
        M = Bp[s]
        col = M.column(0)
        top_ok = all(b == 0 for b in col[: w - s]) and col[w - s] == 1
        row_ok = M.rows[0] == 0
        block_ok = submatrix(M, 1, w - 1, 1, w - 1) == mat_pow(F, s) if params.sparse_c else True
        return top_ok and row_ok and block_ok

    add("B^s_first_column", _first_failure((f"s={s}", b_power_shape(s)) for s in range(1, w)))

    def cbt_shape(t):
        return mat_mul(C, Bp[t]).nonzero_entries() == [(0, t + 1)]

    add("CB^t_shape", _first_failure((f"t={t}", cbt_shape(t)) for t in range(w - 1)))

    def bscbt_shape(s, t):
        M = mat_mul(mat_mul(Bp[s], C), Bp[t])
        cols = {j for _, j in M.nonzero_entries()}
        if cols != {t + 1}:
            return False
        col = M.column(t + 1)
        return all(b == 0 for b in col[: w - s]) and col[w - s] == 1

    add(
        "B^sCB^t_shape",
        _first_failure(
            (f"s={s},t={t}", bscbt_shape(s, t)) for s in range(1, w - 1) for t in range(w - 1)
        ),
    )

    def q_rec(s):
        half = 1 << (s - 1)
        Qh, Bh = q_matrix(half, params), b_power(half, params)
        return q_matrix(2 * half, params) == mat_mul(Qh, Bh) + mat_mul(Bh, Qh)

    add(
        "Q_doubling",
        _first_failure((f"2^s={1 << s}", q_rec(s)) for s in range(1, 64) if (1 << s) <= w - 2),
    )
    add(
        "rank[B^s;Q_s]=w",
        _first_failure(
            (f"s={s}", mat_rank(vstack([b_power(s, params), q_matrix(s, params)])) == w)
            for s in range(1, 65)
        ),
    )
    add("B+C=A", B + C == A, needs_sparse_c=False)
    add("A_invertible", mat_rank(A) == w, needs_sparse_c=False)

    base = twist_operator(params)

    def closed_form(k):
        expect = OperatorPoly.from_terms(w, {0: b_power(k, params), -1: q_matrix(k, params)})
        return op_power(base, k) == expect

    add("twist_power_closed_form", _first_failure((f"k={k}", closed_form(k)) for k in range(1, w - 1)))

    full = recursion_operator(params)

    def squaring(s):
        e = 1 << s
        lhs = op_power(full, e)
        rhs = (
            OperatorPoly.monomial(w, e * (n - 1))
            + OperatorPoly.monomial(w, e * (m - 1))
            + twist_power_2k(s, params)
        )
        return lhs == rhs

    add("squaring_lemma", _first_failure((f"s={s}", squaring(s)) for s in range(5)), False)

    state = seed_init(5489, params)
    x = untempered_sequence(state, stream_length + n + 1)
    add(
        "kernel_recursion",
        _first_failure(
            (f"k={k}", int(x[k + n]) == int(x[k + m]) ^ vec_mul(int(x[k + 1]), B) ^ vec_mul(int(x[k]), C))
            for k in range(stream_length)
        ),
        needs_sparse_c=False,
    )

    failed = [c.name for c in checks if not c.passed]
    unexpected = [c.name for c in checks if not c.passed and (params.sparse_c or not c.needs_sparse_c)]
    return {
        "generator": params.name,
        "sparse_c": params.sparse_c,
        "checks": [c.to_dict() for c in checks],
        "failed": failed,
        "unexpected_failures": unexpected,
        "ok": not unexpected,
    }
