"""Collapsing arity: the d-fold product system and the matching translation
of arity-d formulas into arity-1 formulas over it.

Product states are d-tuples of base states (indexed in sorted tuple order).
Each base action a splits into a1..ad (move in one coordinate, fix the
rest), each index map sigma becomes an action relabelling coordinates, and
each proposition p splits into p1..pd.  The translation replaces p@i,
<a@i> and {sigma} by their product-level counterparts at position 1 and
leaves everything else (including types and fixpoints) untouched, so the
type order of a formula never changes.
"""

from __future__ import annotations

from itertools import product as iproduct

from .lts import Lts, make_lts
from .semantics import EvalConfig, Semantics
from .syntax import (
    App,
    Diamond,
    Fix,
    FixVar,
    Formula,
    IndexMap,
    Lam,
    LtAtom,
    Neg,
    Or,
    Prop,
    Subst,
    Var,
)


class ReductionError(Exception):
    pass


def sigma_action_name(imap: IndexMap, d: int) -> str:
    if d > 9:
        raise ReductionError("index-map action names need single digits (d <= 9)")
    try:
        sigma = imap.as_tuple(d)
    except ValueError as e:
        raise ReductionError(str(e))
    return "sigma" + "".join(str(j) for j in sigma)


def all_index_maps(d: int) -> list[IndexMap]:
    maps = []
    for image in iproduct(range(1, d + 1), repeat=d):
        maps.append(IndexMap(tuple(zip(range(1, d + 1), image))))
    return maps


def collect_index_maps(f: Formula) -> list[IndexMap]:
    """Every index map appearing in a substitution node, in first-seen order."""
    seen = []
    stack = [f]
    while stack:
        g = stack.pop()
        match g:
            case Subst(imap, sub):
                if imap not in seen:
                    seen.append(imap)
                stack.append(sub)
            case Or(l, r) | App(l, r):
                stack.append(r)
                stack.append(l)
            case Neg(s) | Diamond(_, _, s) | Lam(_, _, _, s) | Fix(_, _, _, s):
                stack.append(s)
            case _:
                pass
    return seen


def product_state_index(n: int, tup) -> int:
    idx = 0
    for s in tup:
        idx = idx * n + s
    return idx


def d_product(
    lts: Lts,
    d: int,
    sigmas: list[IndexMap] | None = None,
    max_states: int = 100_000,
    reachable_from: tuple | None = None,
) -> Lts:
    """The d-fold product system.  With sigmas=None every one of the d^d
    index maps becomes an action; passing an explicit list keeps only those
    (the translation only ever needs the maps that occur in the formula).
    reachable_from optionally prunes to the part reachable from one tuple."""
    if d < 1:
        raise ReductionError("arity must be at least 1")
    if lts.n**d > max_states:
        raise ReductionError(
            f"product too large: {lts.n}^{d} states exceeds the bound {max_states}"
        )
    if sigmas is None:
        sigmas = all_index_maps(d)
    tuples = sorted(iproduct(range(lts.n), repeat=d))
    index = {t: i for i, t in enumerate(tuples)}

    actions = []
    for a in lts.actions:
        for i in range(1, d + 1):
            actions.append(f"{a}{i}")
    sigma_names = {}
    for imap in sigmas:
        name = sigma_action_name(imap, d)
        if name not in sigma_names:
            sigma_names[name] = imap.as_tuple(d)
    actions.extend(sigma_names)
    if len(set(actions)) != len(actions):
        raise ReductionError("action name clash in product construction")

    props = [f"{p}{i}" for p in lts.props for i in range(1, d + 1)]
    if len(set(props)) != len(props):
        raise ReductionError("proposition name clash in product construction")

    edges = []
    for t in tuples:
        for a in lts.actions:
            for i in range(1, d + 1):
                for u in lts.succ[a][t[i - 1]]:
                    edges.append(
                        (index[t], f"{a}{i}", index[t[: i - 1] + (u,) + t[i:]])
                    )
        for name, sigma in sigma_names.items():
            target = tuple(t[j - 1] for j in sigma)
            edges.append((index[t], name, index[target]))

    labels = {
        index[t]: [
            f"{p}{i}"
            for p in lts.props
            for i in range(1, d + 1)
            if p in lts.labels[t[i - 1]]
        ]
        for t in tuples
    }
    names = [",".join(str(s) for s in t) for t in tuples]
    prod = make_lts(len(tuples), actions, props, edges, labels, names)
    if reachable_from is not None:
        prod = _restrict(prod, index[tuple(reachable_from)])
    return prod


def _restrict(lts: Lts, seed: int) -> Lts:
    from .lts import reachable

    keep = sorted(reachable(lts, {seed}))
    remap = {s: i for i, s in enumerate(keep)}
    edges = [
        (remap[s], a, remap[t])
        for (s, a, t) in lts.edges
        if s in remap and t in remap
    ]
    labels = {remap[s]: sorted(lts.labels[s]) for s in keep}
    names = [lts.names[s] for s in keep] if lts.names else None
    return make_lts(len(keep), list(lts.actions), list(lts.props), edges, labels, names)


def hat_translate(f: Formula, d: int) -> Formula:
    """Rewrite an arity-d formula to arity 1 over the d-product alphabet."""
    match f:
        case Prop(name, i):
            return Prop(f"{name}{i}", 1)
        case LtAtom():
            raise ReductionError(
                "the order atom has no arity-1 counterpart in this translation"
            )
        case Or(l, r):
            return Or(hat_translate(l, d), hat_translate(r, d))
        case Neg(s):
            return Neg(hat_translate(s, d))
        case Diamond(a, i, s):
            return Diamond(f"{a}{i}", 1, hat_translate(s, d))
        case Subst(imap, s):
            return Diamond(sigma_action_name(imap, d), 1, hat_translate(s, d))
        case Var(_) | FixVar(_):
            return f
        case Lam(var, variance, ty, body):
            return Lam(var, variance, ty, hat_translate(body, d))
        case App(fn, arg):
            return App(hat_translate(fn, d), hat_translate(arg, d))
        case Fix(kind, var, ty, body):
            return Fix(kind, var, ty, hat_translate(body, d))
    raise ReductionError(f"not a formula: {f!r}")


def check_via_product(
    lts: Lts,
    tup,
    f: Formula,
    env=None,
    strategy: str = "demand",
    config: EvalConfig | None = None,
) -> bool:
    """Evaluate the translated formula on the product system and test the
    product state corresponding to the tuple."""
    tup = tuple(tup)
    d = len(tup)
    prod = d_product(lts, d, sigmas=collect_index_maps(f))
    sem = Semantics(prod, 1, config)
    hat_env = None
    if env:
        hat_env = {}
        for name, value in env.items():
            if not isinstance(value, (frozenset, set, list)):
                raise ReductionError(
                    "only ground environment values can cross the translation"
                )
            hat_env[name] = frozenset(
                (product_state_index(lts.n, tuple(t)),) for t in value
            )
    return sem.check(hat_translate(f, d), (product_state_index(lts.n, tup),), hat_env, strategy)
