"""Command-line front end.

Exit status: 0 success, 1 assertion failure or statistical discrepancy,
2 usage error (bad flags, unreadable paths, malformed input).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from pathlib import Path

from . import __version__
from .engine import GENERATORS, MT19937, MT19937_64, seed_init, temper, untemper
from .gf2 import vec_mul
from .lagged import (
    DyadicProb,
    WindowTooLarge,
    build_matrices,
    conditional_probability,
    event_probability,
    joint_constraint,
    verify_lemmas,
    verify_theorem,
)
from .report import Report, emit_report, now_stamp
from .repscan import (
    DEFAULT_RMAX,
    Scanner,
    ScanConfig,
    TableBaseline,
    expected_distribution,
    expected_mean,
    histogram_csv,
    leading_zeros,
    log10_tail,
    planted_spike_trial,
    read_histogram_csv,
    spike_report,
)
from .sampler import LongRunRequired, conditional_frequency

LONG_TRIALS = 10**7
LONG_RUNS = 10**6
Z_LIMIT = 4.0
OUTPUT_DIR_ENV = "MTDUP_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _event_list(text: str) -> list[int]:
    try:
        items = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if any(k < 0 for k in items):
        raise argparse.ArgumentTypeError("event indices must be non-negative")
    return items


def _count(text: str) -> int:
    try:
        value = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("count must be non-negative")
    return value


def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _write(report: Report, args, fmt: str = "json") -> None:
    if getattr(args, "out", None):
        path = _out_path(args.out)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(emit_report(report, fmt))
        except OSError as err:
            raise UsageError(f"cannot write {path}: {err}")
        print(f"wrote {path}")


def _params(args):
    return GENERATORS[getattr(args, "gen", "mt32")]


def _prob_text(p: DyadicProb) -> str:
    return f"{p} ({p.decimal()})"


# -- commands ---------------------------------------------------------------


def cmd_lemmas(args) -> int:
    params = _params(args)
    rep = verify_lemmas(params)
    for c in rep["checks"]:
        tag = "PASS" if c["passed"] else ("FAIL (expected: C not sparse)" if c["needs_sparse_c"] and not params.sparse_c else "FAIL")
        print(f"{c['name']:<26} {tag} {c['detail']}".rstrip())
    _write(Report("lemmas", {"gen": params.name}, rep, timestamps=now_stamp()), args)
    return 0 if rep["ok"] else 1


def cmd_theorem(args) -> int:
    params = _params(args)
    if not 0 <= args.s <= args.t:
        raise UsageError("need 0 <= s <= t")
    rep = verify_theorem(args.s, args.t, params)
    expected = rep["expected"] if rep["expected"] is not None else "n/a"
    line = f"rank={rep['rank']} expected={expected} {rep['status']}"
    if not rep["within_hypothesis"]:
        verdict = "matches" if rep["matches_formula"] else "differs from"
        line += f" (outside hypothesis; {verdict} formula rank {rep['formula_rank']})"
    print(line)
    _write(Report("theorem", {"s": args.s, "t": args.t, "gen": params.name}, rep,
                  exact_probabilities={"joint": rep["probability"]}, timestamps=now_stamp()), args)
    return 1 if rep["status"] == "FAIL" else 0


def cmd_prob(args) -> int:
    params = _params(args)
    events = set(args.events)
    if not events:
        raise UsageError("--events needs at least one index")
    probs = {}
    if args.given:
        p = conditional_probability(args.given, events, params)
        print(f"P(events {sorted(events)} | {sorted(set(args.given))}) = {_prob_text(p)}")
        probs["conditional"] = str(p)
    else:
        p = event_probability(events, params)
        print(f"P(events {sorted(events)}) = {_prob_text(p)}")
    probs["joint"] = str(event_probability(events | set(args.given or ()), params))
    singles = sum(event_probability({k}, params).exponent for k in events)
    probs["independent_product"] = str(DyadicProb(singles))
    system = joint_constraint(events | set(args.given or ()), params)
    results = {
        "rank": system.rank,
        "window": system.window,
        "equals_independent_product": DyadicProb.parse(probs["joint"]).exponent == singles,
        "decimal": {k: DyadicProb.parse(v).decimal() for k, v in probs.items()},
    }
    _write(Report("prob", {"events": sorted(events), "given": sorted(set(args.given or ())),
                           "gen": params.name}, results, exact_probabilities=probs,
                  timestamps=now_stamp()), args)
    return 0


def cmd_conditional(args) -> int:
    params = _params(args)
    if args.trials > LONG_TRIALS and not args.long:
        raise UsageError(f"--trials above {LONG_TRIALS} needs --long")
    try:
        rep = conditional_frequency(args.given, args.check, args.trials, args.seed, params,
                                    long_run=args.long)
    except LongRunRequired as err:
        raise UsageError(str(err))
    print(f"hits={rep['hits']}/{rep['trials']} frequency={rep['frequency']:.6g} "
          f"expected={rep['exact_expectation']} z={rep['z_score']:+.3f} "
          f"violations={rep['given_violations']}")
    _write(Report("conditional", {"given": rep["given"], "check": args.check,
                                  "trials": args.trials, "gen": params.name}, rep,
                  exact_probabilities={"expectation": rep["exact_expectation"]},
                  seeds={"entropy": args.seed}, timestamps=now_stamp()), args)
    bad = rep["given_violations"] or (args.trials and abs(rep["z_score"]) > Z_LIMIT)
    return 1 if bad else 0


def cmd_repscan(args) -> int:
    if args.runs > LONG_RUNS and not args.long:
        raise UsageError(f"--runs above {LONG_RUNS} needs --long")
    if args.rmax < 1:
        raise UsageError("--rmax must be at least 1")
    if args.resume:
        try:
            scanner = Scanner.from_checkpoint(json.loads(Path(args.resume).read_text()))
        except (OSError, ValueError, KeyError) as err:
            raise UsageError(f"cannot resume from {args.resume}: {err}")
    else:
        config = ScanConfig(num_runs=args.runs, r_max=args.rmax, generator=args.gen,
                            seed=args.seed, tempered=not args.untempered,
                            convention=args.convention)
        scanner = Scanner(config)
    hist = scanner.run(args.runs)
    if args.checkpoint:
        path = _out_path(args.checkpoint)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(scanner.checkpoint()))
    baseline = expected_distribution(hist.total_runs, hist.r_max, hist.word_bits)
    spikes = spike_report(hist, baseline)
    print(f"runs={hist.total_runs} mean={hist.mean_run_length:.1f} overflow={hist.overflow}")
    for row in spikes["focus"]:
        print(f"  r={row['run_length']:<5} observed={row['observed']:<6} "
              f"expected={row['expected']:.4g} ratio={row['ratio']:.3g}")
    if hist.chains:
        print(f"  chains (lag {hist.lag_unit}*2^k -> length {hist.spike_unit}*2^k): {hist.to_dict()['chains']}")
    results = {"histogram": hist.to_dict(), "spikes": spikes}
    report = Report("repscan", scanner.config.to_dict(), results,
                    seeds={"generator": scanner.config.seed}, timestamps=now_stamp(),
                    table=histogram_csv(hist, baseline))
    _write(report, args, args.format)
    return 0


def cmd_expected(args) -> int:
    lt = log10_tail(args.rmax, args.bits)
    base = expected_distribution(args.runs, args.rmax, args.bits)
    mean = expected_mean(args.rmax, args.bits)
    print(f"P(R > {args.rmax}) = 10^{lt:.6f} ({leading_zeros(lt)} zeros after the decimal point)")
    print(f"mean run-length = {mean:.2f}")
    for r in (1, 622, 623, 624):
        if r <= args.rmax:
            print(f"expected count r={r}: {base[r]:.6g}")
    results = {
        "log10_tail": lt,
        "tail_zeros": leading_zeros(lt),
        "mean_run_length": mean,
        "expected_sum": base.total,
        "expected_overflow": base.overflow,
    }
    _write(Report("expected", {"runs": args.runs, "rmax": args.rmax, "bits": args.bits},
                  results, timestamps=now_stamp()), args)
    return 0


def cmd_spike(args) -> int:
    try:
        table = read_histogram_csv(Path(args.input).read_text())
    except OSError as err:
        raise UsageError(f"cannot read {args.input}: {err}")
    except ValueError as err:
        raise UsageError(f"malformed histogram {args.input}: {err}")
    fallback = expected_distribution(table.total_runs, args.rmax, args.bits)
    rep = spike_report(table, TableBaseline(table, fallback))
    for row in rep["focus"]:
        flag = " EXCEEDS 5 sigma" if row["exceeds_5sigma"] else ""
        print(f"r={row['run_length']:<5} observed={row['observed']:<8} "
              f"expected={row['expected']:.6g} ratio={row['ratio']:.6g} z={row['z']:+.3f}{flag}")
    if rep["max_ratio"]:
        print(f"max ratio {rep['max_ratio']['ratio']:.6g} at r={rep['max_ratio']['run_length']}")
    _write(Report("spike", {"input": args.input, "bits": args.bits}, rep, timestamps=now_stamp()), args)
    return 0


def cmd_planted(args) -> int:
    if args.trials > LONG_TRIALS and not args.long:
        raise UsageError(f"--trials above {LONG_TRIALS} needs --long")
    rep = planted_spike_trial(args.trials, args.seed)
    print(f"frequency(623)={rep['frequency_of_623']:.6f} expected={rep['expected']:.6f} "
          f"z={rep['z_score']:+.3f} f(622)={rep['frequency_622']:.2g} f(624)={rep['frequency_624']:.2g}")
    _write(Report("planted", {"trials": args.trials}, rep, seeds={"entropy": args.seed},
                  timestamps=now_stamp()), args)
    return 1 if args.trials and abs(rep["z_score"]) > Z_LIMIT else 0


def selftest_checks() -> list[tuple[str, bool]]:
    checks = []
    s = seed_init(5489)
    checks.append(("mt32 first output", s.next() == 3499211612))
    s = seed_init(5489)
    s.take(9999)
    checks.append(("mt32 10000th output", s.next() == 4123659995))
    s = seed_init(5489, MT19937_64)
    s.take(9999)
    checks.append(("mt64 10000th output", s.next() == 9981545732273789042))
    rng = random.Random(0)
    for params in (MT19937, MT19937_64):
        _, B, C, _ = build_matrices(params)
        ok = True
        for _ in range(2000):
            xk, xk1 = rng.getrandbits(params.w), rng.getrandbits(params.w)
            y = (xk & params.upper_mask) | (xk1 & params.lower_mask)
            twist = (y >> 1) ^ (params.a if y & 1 else 0)
            ok &= twist == vec_mul(xk1, B) ^ vec_mul(xk, C)
            ok &= untemper(temper(xk, params), params) == xk
        checks.append((f"{params.name} bit convention and tempering", ok))
    lemmas = verify_lemmas(MT19937)
    checks.append(("mt32 lemma suite", lemmas["ok"]))
    for s_ in range(5):
        for t in range(s_, 5):
            checks.append((f"theorem rank s={s_} t={t}", verify_theorem(s_, t)["status"] == "PASS"))
    return checks


def cmd_selftest(args) -> int:
    checks = selftest_checks()
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    _write(Report("selftest", {}, {name: ok for name, ok in checks}, timestamps=now_stamp()), args)
    return 0 if all(ok for _, ok in checks) else 1


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtdup", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, gen=True, out=True):
        p = sub.add_parser(name, help=help_text)
        if gen:
            p.add_argument("--gen", choices=sorted(GENERATORS), default="mt32")
        if out:
            p.add_argument("--out", help="write a JSON report here")
        p.set_defaults(func=func)
        return p

    command("lemmas", cmd_lemmas, "verify the structural matrix identities")

    p = command("theorem", cmd_theorem, "rank of the joint constraint for events s..t")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--t", type=int, required=True)

    p = command("prob", cmd_prob, "exact probability of an event conjunction")
    p.add_argument("--events", type=_event_list, required=True)
    p.add_argument("--given", type=_event_list, default=[])

    p = command("conditional", cmd_conditional, "Monte Carlo conditional frequency")
    p.add_argument("--given", type=_event_list, required=True)
    p.add_argument("--check", type=int, required=True)
    p.add_argument("--trials", type=_count, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--long", action="store_true")

    p = command("repscan", cmd_repscan, "run-length histogram of a generator", gen=False, out=False)
    p.add_argument("--runs", type=_count, required=True)
    p.add_argument("--gen", choices=["mt32", "mt64", "control"], default="mt32")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--untempered", action="store_true")
    p.add_argument("--rmax", type=_count, default=DEFAULT_RMAX)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--convention", choices=["reuse", "fresh"], default="reuse")
    p.add_argument("--checkpoint", help="save scanner state here when done")
    p.add_argument("--resume", help="continue from a saved checkpoint")
    p.add_argument("--long", action="store_true")

    p = command("expected", cmd_expected, "ideal run-length law", gen=False)
    p.add_argument("--runs", type=_count, required=True)
    p.add_argument("--rmax", type=_count, default=DEFAULT_RMAX)
    p.add_argument("--bits", type=int, default=32)

    p = command("spike", cmd_spike, "spike report for a histogram CSV", gen=False)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bits", type=int, default=32)
    p.add_argument("--rmax", type=_count, default=DEFAULT_RMAX)

    p = command("planted", cmd_planted, "planted event-(1) run boundaries", gen=False)
    p.add_argument("--trials", type=_count, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--long", action="store_true")

    command("selftest", cmd_selftest, "reference vectors, convention arbiter, lemmas", gen=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, WindowTooLarge) as err:
        print(f"mtdup {args.command}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
