"""Command line front end.

Subcommands:

  check      membership of a tuple in a formula's denotation
  typecheck  report the type and order of a formula
  quotient   bisimulation quotient of a system
  product    d-fold product system
  equiv      compare a formula-based equivalence check against a direct one
  translate  compile a relational fixpoint query onto the tuple engine
  selftest   run a batch of randomized cross-checks

Exit status is 0 for success (or a query that came out true), 1 for a
query that came out false, and 2 for any error.

Settings shared by the subcommands live in a RunConfig.  Defaults can be
overridden by a config file (simple ``key = value`` lines, ``#`` comments)
named either by --config or by the PHFL_CONFIG environment variable, and
individual flags override the file.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, replace

from .holfp import (
    HolfpError,
    capture_pipeline,
    eval_holfp,
    parse_holfp,
    typecheck_holfp,
)
from .lts import (
    Lts,
    LtsError,
    bisim_partition,
    make_lts,
    parse_lts,
    quotient,
    serialize_lts,
)
from .macros import MacroError, phi_bisim, phi_fte
from .randgen import GenConfig, random_fix_formula, random_formula
from .reduction import ReductionError, check_via_product, d_product
from .semantics import EvalConfig, EvalError, Semantics, check_tuple
from .syntax import GROUND, Neg, ParseError, format_formula, parse_formula
from .typecheck import TypeCheckError, infer_type, order_of_formula

CONFIG_ENV = "PHFL_CONFIG"

DEFAULT_SELFTEST_SEED = 1789


class CliError(Exception):
    """Bad command line input (anything argparse cannot catch itself)."""


_ERRORS = (
    CliError,
    ParseError,
    TypeCheckError,
    EvalError,
    MacroError,
    ReductionError,
    HolfpError,
    LtsError,
    OSError,
    ValueError,
)


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every subcommand."""

    strategy: str = "demand"
    full_threshold: int = 9
    iteration_cap: int = 500_000
    output: str = "text"

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            full_threshold=self.full_threshold,
            iteration_cap=self.iteration_cap,
        )


def _check_run_config(rc: RunConfig) -> RunConfig:
    if rc.strategy not in ("full", "demand"):
        raise CliError(f"unknown strategy: {rc.strategy}")
    if rc.output not in ("text", "json"):
        raise CliError(f"unknown output format: {rc.output}")
    if rc.full_threshold < 1:
        raise CliError("full_threshold must be positive")
    if rc.iteration_cap < 1:
        raise CliError("iteration_cap must be positive")
    return rc


def parse_config_file(text: str) -> dict:
    """key = value lines; blank lines and #-comments are skipped."""
    ints = ("full_threshold", "iteration_cap")
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in ("strategy", "output") + ints:
            raise CliError(f"config line {lineno}: unknown key {key}")
        if key in ints:
            try:
                out[key] = int(value)
            except ValueError:
                raise CliError(f"config line {lineno}: {key} needs an integer")
        else:
            out[key] = value
    return out


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    rc = RunConfig()
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            rc = replace(rc, **parse_config_file(fh.read()))
    flags = {}
    for field in ("strategy", "full_threshold", "iteration_cap", "output"):
        value = getattr(args, field, None)
        if value is not None:
            flags[field] = value
    if flags:
        rc = replace(rc, **flags)
    return _check_run_config(rc)


def _read_source(arg: str) -> str:
    """Treat the argument as a file name when one exists, else as text."""
    if os.path.exists(arg):
        with open(arg, encoding="utf-8") as fh:
            return fh.read()
    return arg


def _load_lts(arg: str) -> Lts:
    return parse_lts(_read_source(arg))


def _parse_states(text: str, lts: Lts) -> tuple[int, ...]:
    try:
        states = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise CliError(f"expected comma-separated state numbers, got: {text}")
    for s in states:
        if not 0 <= s < lts.n:
            raise CliError(f"state {s} out of range (system has {lts.n} states)")
    return states


def _emit(rc: RunConfig, payload: dict, lines: list[str]) -> None:
    if rc.output == "json":
        print(json.dumps(payload))
    else:
        for line in lines:
            print(line)


def _bool_word(value: bool) -> str:
    return "true" if value else "false"


def cmd_check(args: argparse.Namespace, rc: RunConfig) -> int:
    lts = _load_lts(args.lts)
    f = parse_formula(_read_source(args.formula))
    tup = _parse_states(args.tuple, lts)
    d = args.d if args.d is not None else len(tup)
    if d < len(tup):
        raise CliError(f"tuple has {len(tup)} entries but --d is {d}")
    # A short tuple fixes only the first few positions; the rest repeat
    # its last entry, so a width-r query can be asked without spelling
    # out the padding by hand.
    tup = tup + (tup[-1],) * (d - len(tup))
    ty = infer_type(f, d)
    if ty != GROUND:
        raise CliError(f"the query must denote a tuple set, got type {ty}")
    value = check_tuple(
        lts, tup, f, strategy=rc.strategy, config=rc.eval_config()
    )
    payload = {"member": value, "tuple": list(tup), "d": d}
    lines = [f"member: {_bool_word(value)}"]
    if args.print_set:
        sem = Semantics(lts, d, config=rc.eval_config())
        denotation = sorted(sem.eval(f, strategy=rc.strategy))
        payload["set"] = [list(t) for t in denotation]
        lines.append("set: {" + ", ".join(str(t) for t in denotation) + "}")
    _emit(rc, payload, lines)
    return 0 if value else 1


def cmd_typecheck(args: argparse.Namespace, rc: RunConfig) -> int:
    f = parse_formula(_read_source(args.formula))
    ty = infer_type(f, args.d)
    order = order_of_formula(f, args.d)
    _emit(
        rc,
        {"type": str(ty), "order": order, "d": args.d},
        [f"type: {ty}", f"order: {order}"],
    )
    return 0


def cmd_quotient(args: argparse.Namespace, rc: RunConfig) -> int:
    lts = _load_lts(args.lts)
    q, part = quotient(lts)
    if rc.output == "json":
        payload = json.loads(serialize_lts(q, fmt="json"))
        payload["class_of"] = list(part.class_of)
        print(json.dumps(payload))
    else:
        print(serialize_lts(q, fmt="text"), end="")
    return 0


def cmd_product(args: argparse.Namespace, rc: RunConfig) -> int:
    lts = _load_lts(args.lts)
    prod = d_product(lts, args.d, max_states=args.max_states)
    if rc.output == "json":
        print(serialize_lts(prod, fmt="json"))
    else:
        print(serialize_lts(prod, fmt="text"), end="")
    return 0


def _trace_equivalent(lts: Lts, s: int, t: int) -> bool:
    """Equality of finite action-trace languages, by subset construction."""
    start = (frozenset([s]), frozenset([t]))
    seen = {start}
    stack = [start]
    while stack:
        left, right = stack.pop()
        for a in lts.actions:
            left_next = frozenset(v for u in left for v in lts.succ[a][u])
            right_next = frozenset(v for u in right for v in lts.succ[a][u])
            if bool(left_next) != bool(right_next):
                return False
            if left_next and (left_next, right_next) not in seen:
                seen.add((left_next, right_next))
                stack.append((left_next, right_next))
    return True


def cmd_equiv(args: argparse.Namespace, rc: RunConfig) -> int:
    lts = _load_lts(args.lts)
    pair = _parse_states(args.pair, lts)
    if len(pair) != 2:
        raise CliError(f"--pair needs exactly two states, got {len(pair)}")
    s, t = pair
    if args.kind == "bisim":
        f = phi_bisim(lts)
        part = bisim_partition(lts)
        direct = part.class_of[s] == part.class_of[t]
    else:
        f = phi_fte(lts)
        direct = _trace_equivalent(lts, s, t)
    from_formula = check_tuple(
        lts, (s, t), f, strategy=rc.strategy, config=rc.eval_config()
    )
    agree = from_formula == direct
    verdict = "agree" if agree else "disagree"
    _emit(
        rc,
        {
            "kind": args.kind,
            "pair": [s, t],
            "formula": from_formula,
            "direct": direct,
            "agree": agree,
        },
        [
            f"formula: {_bool_word(from_formula)}, "
            f"direct: {_bool_word(direct)}, {verdict}"
        ],
    )
    if not agree:
        print("error: the two checks disagree", file=sys.stderr)
        return 2
    return 0 if from_formula else 1


def cmd_translate(args: argparse.Namespace, rc: RunConfig) -> int:
    lts = _load_lts(args.lts)
    f = parse_holfp(_read_source(args.query))
    info = typecheck_holfp(f)
    psi, cfg = capture_pipeline(lts, f)
    out_order = order_of_formula(psi, cfg.d)
    text = format_formula(psi)
    _emit(
        rc,
        {
            "input_order": info.order,
            "output_order": out_order,
            "w": cfg.w,
            "r": cfg.r,
            "d": cfg.d,
            "formula": text,
        },
        [
            f"input order: {info.order}",
            f"output order: {out_order}",
            f"w: {cfg.w}  r: {cfg.r}  d: {cfg.d}",
            f"formula: {text}",
        ],
    )
    return 0


def _random_lts(rng: random.Random, max_n: int = 3) -> Lts:
    n = rng.randint(1, max_n)
    actions = ["a", "b"][: rng.randint(1, 2)]
    props = ["p", "q"][: rng.randint(1, 2)]
    edges = [
        (s, a, t)
        for s in range(n)
        for a in actions
        for t in range(n)
        if rng.random() < 0.45
    ]
    labels = {
        s: [p for p in props if rng.random() < 0.5] for s in range(n)
    }
    return make_lts(n, actions, props, edges, labels)


def _gen_config(lts: Lts) -> GenConfig:
    return GenConfig(
        d=2, depth=4, props=tuple(lts.props), actions=tuple(lts.actions)
    )


def _selftest_strategies(rng: random.Random) -> int:
    cases = 0
    for _ in range(25):
        # Two states keep |S|^2 = 4, where the full strategy can still
        # enumerate every ground value a lambda argument might take.
        lts = _random_lts(rng, max_n=2)
        cfg = _gen_config(lts)
        sem = Semantics(lts, 2)
        for _ in range(2):
            f = random_formula(rng, cfg)
            if sem.eval(f, strategy="full") != sem.eval(f, strategy="demand"):
                raise CliError(
                    f"strategies differ on {format_formula(f)} over "
                    f"{serialize_lts(lts, fmt='json')}"
                )
            cases += 1
    return cases


def _selftest_negation(rng: random.Random) -> int:
    cases = 0
    for _ in range(25):
        lts = _random_lts(rng)
        sem = Semantics(lts, 2)
        f = random_formula(rng, _gen_config(lts))
        if sem.eval(Neg(Neg(f))) != sem.eval(f):
            raise CliError(f"double negation shifts {format_formula(f)}")
        cases += 1
    return cases


def _selftest_bisim(rng: random.Random) -> int:
    cases = 0
    for _ in range(12):
        lts = _random_lts(rng)
        f = phi_bisim(lts)
        part = bisim_partition(lts)
        for s in range(lts.n):
            for t in range(lts.n):
                got = check_tuple(lts, (s, t), f)
                want = part.class_of[s] == part.class_of[t]
                if got != want:
                    raise CliError(
                        f"bisimilarity check differs at ({s}, {t}) over "
                        f"{serialize_lts(lts, fmt='json')}"
                    )
                cases += 1
    return cases


def _selftest_product(rng: random.Random) -> int:
    cases = 0
    for _ in range(12):
        lts = _random_lts(rng)
        f = random_fix_formula(rng, _gen_config(lts))
        for _ in range(3):
            tup = (rng.randrange(lts.n), rng.randrange(lts.n))
            direct = check_tuple(lts, tup, f)
            via = check_via_product(lts, tup, f)
            if direct != via:
                raise CliError(
                    f"product reduction differs at {tup} on "
                    f"{format_formula(f)}"
                )
            cases += 1
    return cases


def _selftest_quotient(rng: random.Random) -> int:
    cases = 0
    for _ in range(12):
        lts = _random_lts(rng)
        q, part = quotient(lts)
        f = random_fix_formula(rng, _gen_config(lts))
        for _ in range(3):
            s, t = rng.randrange(lts.n), rng.randrange(lts.n)
            big = check_tuple(lts, (s, t), f)
            small = check_tuple(q, (part.class_of[s], part.class_of[t]), f)
            if big != small:
                raise CliError(
                    f"quotient changes the answer at ({s}, {t}) on "
                    f"{format_formula(f)}"
                )
            cases += 1
    return cases


def _selftest_translate(rng: random.Random) -> int:
    lts = make_lts(
        2, ["a"], ["p"], [(0, "a", 1), (1, "a", 0)], {1: ["p"]}
    )
    queries = [
        r"p(X)",
        r"exists (Z:ind). a(X,Z) /\ p(Z)",
        r"(lfp (R,Y). p(Y) \/ exists (Z:ind). a(Y,Z) /\ R(Z))(X)",
    ]
    cases = 0
    for text in queries:
        f = parse_holfp(text)
        psi, cfg = capture_pipeline(lts, f)
        sem = Semantics(lts, cfg.d)
        value = sem.eval(psi, strategy="demand")
        for s in range(lts.n):
            want = eval_holfp(lts, {"X": s}, f)
            members = {t in value for t in sem.tuples if t[0] == s}
            if members != {want}:
                raise CliError(f"translation differs on {text} at state {s}")
            cases += 1
    return cases


def cmd_selftest(args: argparse.Namespace, rc: RunConfig) -> int:
    suites = [
        ("strategies", _selftest_strategies),
        ("negation", _selftest_negation),
        ("bisim", _selftest_bisim),
        ("product", _selftest_product),
        ("quotient", _selftest_quotient),
        ("translate", _selftest_translate),
    ]
    report = []
    lines = []
    for name, fn in suites:
        rng = random.Random(f"{args.seed}:{name}")
        cases = fn(rng)
        report.append({"name": name, "cases": cases, "ok": True})
        lines.append(f"ok: {name} ({cases} cases)")
    _emit(rc, {"seed": args.seed, "suites": report}, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key = value config file")
    common.add_argument("--strategy", choices=["full", "demand"])
    common.add_argument("--full-threshold", dest="full_threshold", type=int)
    common.add_argument("--iteration-cap", dest="iteration_cap", type=int)
    common.add_argument("--output", choices=["text", "json"])

    parser = argparse.ArgumentParser(
        prog="phfl",
        description="Model checking for higher-order fixpoint formulas "
        "over labelled transition systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "check", parents=[common], help="evaluate a formula at a tuple"
    )
    p.add_argument("lts", help="transition system (file or literal text)")
    p.add_argument("formula", help="formula (file or literal text)")
    p.add_argument(
        "--tuple", required=True, help="comma-separated states, e.g. 0,1"
    )
    p.add_argument("--d", type=int, help="arity (defaults to the tuple length)")
    p.add_argument(
        "--print-set",
        action="store_true",
        help="also print the formula's full denotation",
    )
    p.set_defaults(func=cmd_check)

    p = sub.add_parser(
        "typecheck", parents=[common], help="report a formula's type and order"
    )
    p.add_argument("formula", help="formula (file or literal text)")
    p.add_argument("--d", type=int, required=True, help="arity")
    p.set_defaults(func=cmd_typecheck)

    p = sub.add_parser(
        "quotient", parents=[common], help="bisimulation quotient of a system"
    )
    p.add_argument("lts", help="transition system (file or literal text)")
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser(
        "product", parents=[common], help="d-fold product system"
    )
    p.add_argument("lts", help="transition system (file or literal text)")
    p.add_argument("--d", type=int, required=True, help="arity")
    p.add_argument(
        "--max-states",
        type=int,
        default=100_000,
        help="refuse products larger than this",
    )
    p.set_defaults(func=cmd_product)

    p = sub.add_parser(
        "equiv",
        parents=[common],
        help="formula-based equivalence check against a direct algorithm",
    )
    p.add_argument("lts", help="transition system (file or literal text)")
    p.add_argument("--kind", choices=["bisim", "trace"], required=True)
    p.add_argument("--pair", required=True, help="two states, e.g. 0,4")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser(
        "translate",
        parents=[common],
        help="compile a relational fixpoint query onto the tuple engine",
    )
    p.add_argument("query", help="query (file or literal text)")
    p.add_argument(
        "--lts",
        required=True,
        help="transition system the translation is specialized to",
    )
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser(
        "selftest", parents=[common], help="randomized cross-checks"
    )
    p.add_argument("--seed", type=int, default=DEFAULT_SELFTEST_SEED)
    p.set_defaults(func=cmd_selftest)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        rc = load_run_config(args)
        return args.func(args, rc)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
