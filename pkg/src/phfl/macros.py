"""Schema builders: equivalence formulas and quantifier emulation.

Everything here produces plain formula ASTs; no evaluation happens.  The
quantifier schemas follow a fixed tuple layout described by a
QuantifierConfig:

    positions 1..w          working block (the tuple a set "contains")
    positions w+1..2w       comparison block (a saved copy to compare against)
    positions d-r-1..d-2    anchor block: r states from which the whole
                            system must be reachable
    positions d-1, d        scratch slots read by the order atom

First-order quantification replaces a position by anchor values and walks
transitions from there.  Quantification over sets and over uniform
functions enumerates candidates in a fixed order by stepping a
binary-increment transformer from the empty value, so those schemas are
only meaningful on bisimulation quotients (where the order atom is total)
and under an environment binding the reserved variable `e` to a
product-shaped "good" set; see goodness_check.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .lts import Lts, reachable
from .semantics import emulation_type
from .syntax import (
    GROUND,
    NONE_V,
    App,
    Arrow,
    Diamond,
    Fix,
    FixVar,
    Formula,
    IndexMap,
    Lam,
    LtAtom,
    Prop,
    Neg,
    Or,
    Subst,
    Var,
    and_,
    and_all,
    apply_all,
    box,
    ff,
    free_vars,
    fresh_name,
    iff,
    implies,
    index_map,
    or_all,
    tt,
)

E_NAME = "e"


class MacroError(Exception):
    pass


@dataclass(frozen=True)
class QuantifierConfig:
    """Tuple-layout parameters for the quantifier schemas."""

    w: int
    r: int
    d: int

    def __post_init__(self):
        if self.w < 1:
            raise MacroError("width w must be at least 1")
        if self.r < 1:
            raise MacroError("need at least one anchor position (r >= 1)")
        if self.d < 2 * self.w + self.r + 2:
            raise MacroError(
                f"arity {self.d} too small: need d >= 2w+r+2 = {2 * self.w + self.r + 2}"
            )

    @property
    def anchor_positions(self) -> range:
        return range(self.d - self.r - 1, self.d - 1)

    @property
    def free_limit(self) -> int:
        """Largest index usable by first-order quantification."""
        return self.d - self.r - 2


# ---------------------------------------------------------------------------
# Equivalence formulas (arity 2)
# ---------------------------------------------------------------------------


def phi_bisim(lts: Lts, i: int = 1, j: int = 2) -> Formula:
    """Greatest fixpoint relating positions i and j iff they are bisimilar."""
    if i == j:
        raise MacroError("bisimilarity needs two distinct positions")
    x = "X"
    labels = and_all(iff(Prop(p, i), Prop(p, j)) for p in lts.props)
    steps = and_all(box(a, i, Diamond(a, j, FixVar(x))) for a in lts.actions)
    swap = Subst(index_map({i: j, j: i}), FixVar(x))
    return Fix("nu", x, GROUND, and_all([labels, steps, swap]))


def phi_fte(lts: Lts) -> Formula:
    """Arity-2 finite-trace equivalence, via an order-1 fixpoint.

    The function variable is refined over pairs of predicates: starting
    from (tt, tt), each action prepends a step on both sides.
    """
    fn_ty = Arrow(GROUND, NONE_V, Arrow(GROUND, NONE_V, GROUND))
    body = Lam(
        "x",
        NONE_V,
        GROUND,
        Lam(
            "y",
            NONE_V,
            GROUND,
            and_(
                iff(Var("x"), Var("y")),
                and_all(
                    apply_all(FixVar("F"), Diamond(a, 1, Var("x")), Diamond(a, 2, Var("y")))
                    for a in lts.actions
                ),
            ),
        ),
    )
    return apply_all(Fix("nu", "F", fn_ty, body), tt(), tt())


# ---------------------------------------------------------------------------
# Index maps and the order atom
# ---------------------------------------------------------------------------


def lt_atom() -> Formula:
    return LtAtom()


def _check_pos(i: int, d: int) -> None:
    if not 1 <= i <= d:
        raise MacroError(f"index {i} out of range for arity {d}")


def sigma_assign(i: int, j: int, d: int) -> IndexMap:
    """Overwrite position i with the value at position j."""
    _check_pos(i, d)
    _check_pos(j, d)
    return index_map({i: j})


def sigma_swap(i: int, j: int, d: int) -> IndexMap:
    _check_pos(i, d)
    _check_pos(j, d)
    return index_map({i: j, j: i})


def sigma_cmp(i: int, cfg: QuantifierConfig) -> IndexMap:
    """Route positions i and i+w into the order atom's scratch slots."""
    _check_pos(i + cfg.w, cfg.d)
    return index_map({cfg.d - 1: i, cfg.d: i + cfg.w})


def _sigma_cmp_flipped(i: int, cfg: QuantifierConfig) -> IndexMap:
    return index_map({cfg.d - 1: i + cfg.w, cfg.d: i})


def sigma_shift(w: int, d: int) -> IndexMap:
    """Copy the working block into the comparison block.

    Position w+i reads the value at position i, so after the substitution
    both blocks hold the old working block and the working block is free
    to be requantified while its old value stays comparable.
    """
    if 2 * w > d:
        raise MacroError(f"two blocks of width {w} do not fit in arity {d}")
    return index_map({w + i: i for i in range(1, w + 1)})


# ---------------------------------------------------------------------------
# First-order quantification
# ---------------------------------------------------------------------------


def exists_index(i: int, cfg: QuantifierConfig, phi: Formula, actions) -> Formula:
    """Existential over position i, by reachability from the anchors."""
    if not 1 <= i <= cfg.free_limit:
        raise MacroError(
            f"position {i} is reserved; first-order quantification needs i <= {cfg.free_limit}"
        )
    x = fresh_name("Reach", free_vars(phi))
    walk = Fix(
        "mu",
        x,
        GROUND,
        Or(phi, or_all(Diamond(a, i, FixVar(x)) for a in actions)),
    )
    return or_all(
        Subst(sigma_assign(i, j, cfg.d), walk) for j in cfg.anchor_positions
    )


def forall_index(i: int, cfg: QuantifierConfig, phi: Formula, actions) -> Formula:
    return Neg(exists_index(i, cfg, Neg(phi), actions))


def _exists_block(cfg: QuantifierConfig, phi: Formula, actions) -> Formula:
    out = phi
    for i in range(cfg.w, 0, -1):
        out = exists_index(i, cfg, out, actions)
    return out


def _forall_block(cfg: QuantifierConfig, phi: Formula, actions) -> Formula:
    out = phi
    for i in range(cfg.w, 0, -1):
        out = forall_index(i, cfg, out, actions)
    return out


# ---------------------------------------------------------------------------
# Set quantification
# ---------------------------------------------------------------------------


def phi_lt_w(cfg: QuantifierConfig) -> Formula:
    """Strict lexicographic order between the two width-w blocks."""
    disjuncts = []
    for i in range(1, cfg.w + 1):
        clause = [
            and_(
                Neg(Subst(sigma_cmp(j, cfg), LtAtom())),
                Neg(Subst(_sigma_cmp_flipped(j, cfg), LtAtom())),
            )
            for j in range(1, i)
        ]
        clause.append(Subst(sigma_cmp(i, cfg), LtAtom()))
        disjuncts.append(and_all(clause))
    return or_all(disjuncts)


def phi_lt_setpair(cfg: QuantifierConfig, x: Formula, y: Formula, actions) -> Formula:
    """Strict total order on block-shaped sets: the least block on which
    the sets differ belongs to y."""
    chase = implies(phi_lt_w(cfg), implies(x, y))
    body = and_(
        and_(y, Neg(x)),
        Subst(sigma_shift(cfg.w, cfg.d), _forall_block(cfg, chase, actions)),
    )
    return _exists_block(cfg, body, actions)


def next_set(cfg: QuantifierConfig, actions) -> Formula:
    """Binary-increment transformer on good-set-filtered block sets.

    A block is in the output iff it was absent and all lesser blocks were
    present (the carry ripples in), or it was present and some lesser
    block was absent (the carry stopped below it).  The reserved variable
    `e` trims the result to good tuples.
    """
    v = fresh_name("cur", {E_NAME})
    shift = sigma_shift(cfg.w, cfg.d)
    carry_in = Subst(shift, _forall_block(cfg, implies(phi_lt_w(cfg), Var(v)), actions))
    carry_stop = Subst(shift, _exists_block(cfg, and_(phi_lt_w(cfg), Neg(Var(v))), actions))
    body = Or(
        and_(and_(Var(E_NAME), Neg(Var(v))), carry_in),
        and_(and_(Var(E_NAME), Var(v)), carry_stop),
    )
    return Lam(v, NONE_V, GROUND, body)


def exists_set(cfg: QuantifierConfig, x: str, phi: Formula, actions) -> Formula:
    """Existential over block-shaped sets, binding `x` (ground) in phi.

    Enumerates all candidates by iterating next_set from the empty set;
    the fixpoint succeeds as soon as one candidate satisfies phi.
    """
    f = fresh_name("EnumSet", free_vars(phi) | {x})
    body = Lam(x, NONE_V, GROUND, Or(phi, App(FixVar(f), App(next_set(cfg, actions), Var(x)))))
    return App(Fix("mu", f, Arrow(GROUND, NONE_V, GROUND), body), ff())


def forall_set(cfg: QuantifierConfig, x: str, phi: Formula, actions) -> Formula:
    return Neg(exists_set(cfg, x, Neg(phi), actions))


# ---------------------------------------------------------------------------
# Quantification over uniform functions
# ---------------------------------------------------------------------------


def ff_ho(cfg: QuantifierConfig, k: int) -> Formula:
    """The empty level-k value: w arguments of level k-1, result ff."""
    if k < 1:
        raise MacroError("ff_ho needs level k >= 1")
    out: Formula = ff()
    arg_ty = emulation_type(cfg.w, k - 1)
    for i in range(cfg.w, 0, -1):
        out = Lam(f"pad{k}_{i}", NONE_V, arg_ty, out)
    return out


def _exists_level(cfg, level, names, phi, actions):
    out = phi
    for n in reversed(names):
        if level == 0:
            out = exists_set(cfg, n, out, actions)
        else:
            out = exists_ho(cfg, level, n, out, actions)
    return out


def _forall_level(cfg, level, names, phi, actions):
    out = phi
    for n in reversed(names):
        if level == 0:
            out = forall_set(cfg, n, out, actions)
        else:
            out = forall_ho(cfg, level, n, out, actions)
    return out


def phi_lt_tuple(cfg: QuantifierConfig, k: int, xs, ys, actions) -> Formula:
    """Lexicographic order on w-tuples of level-k values (k = 0: sets)."""
    xs = list(xs)
    ys = list(ys)
    if len(xs) != cfg.w or len(ys) != cfg.w:
        raise MacroError(f"tuple comparison needs two tuples of width {cfg.w}")

    def lt(a, b):
        if k == 0:
            return phi_lt_setpair(cfg, a, b, actions)
        return phi_lt_fn(cfg, k, a, b, actions)

    disjuncts = []
    for i in range(cfg.w):
        clause = [and_(Neg(lt(xs[j], ys[j])), Neg(lt(ys[j], xs[j]))) for j in range(i)]
        clause.append(lt(xs[i], ys[i]))
        disjuncts.append(and_all(clause))
    return or_all(disjuncts)


def phi_lt_fn(cfg: QuantifierConfig, k: int, x: Formula, y: Formula, actions) -> Formula:
    """Strict order on level-k values (k >= 1), lifted from level k-1:
    some argument tuple is accepted by y but not x, while on all lesser
    tuples acceptance by x implies acceptance by y."""
    if k < 1:
        raise MacroError("function comparison needs level k >= 1")
    avoid = set(free_vars(x)) | set(free_vars(y)) | {E_NAME}
    lo: list[str] = []
    hi: list[str] = []
    for i in range(1, cfg.w + 1):
        n = fresh_name(f"wit{k}_{i}", avoid)
        avoid.add(n)
        hi.append(n)
        m = fresh_name(f"run{k}_{i}", avoid)
        avoid.add(m)
        lo.append(m)
    hi_vars = [Var(n) for n in hi]
    lo_vars = [Var(n) for n in lo]
    chase = implies(
        phi_lt_tuple(cfg, k - 1, lo_vars, hi_vars, actions),
        implies(apply_all(x, *lo_vars), apply_all(y, *lo_vars)),
    )
    body = and_(
        and_(apply_all(y, *hi_vars), Neg(apply_all(x, *hi_vars))),
        _forall_level(cfg, k - 1, lo, chase, actions),
    )
    return _exists_level(cfg, k - 1, hi, body, actions)


def next_ho(cfg: QuantifierConfig, k: int, actions) -> Formula:
    """Binary-increment transformer at level k (k >= 1).

    Bits are the w-tuples of level-(k-1) values the enumeration below can
    produce, ordered by phi_lt_tuple.  No goodness filter is needed here:
    the level-0 counter already confines everything to good sets.
    """
    if k < 1:
        raise MacroError("next_ho needs level k >= 1")
    cur = f"cur{k}"
    args = [f"at{k}_{i}" for i in range(1, cfg.w + 1)]
    arg_vars = [Var(n) for n in args]
    avoid = {cur, E_NAME, *args}
    probe = []
    for i in range(1, cfg.w + 1):
        n = fresh_name(f"blw{k}_{i}", avoid)
        avoid.add(n)
        probe.append(n)
    probe_vars = [Var(n) for n in probe]
    lesser = phi_lt_tuple(cfg, k - 1, probe_vars, arg_vars, actions)
    carry_in = _forall_level(
        cfg, k - 1, probe, implies(lesser, apply_all(Var(cur), *probe_vars)), actions
    )
    carry_stop = _exists_level(
        cfg, k - 1, probe, and_(lesser, Neg(apply_all(Var(cur), *probe_vars))), actions
    )
    flip = Or(
        and_(Neg(apply_all(Var(cur), *arg_vars)), carry_in),
        and_(apply_all(Var(cur), *arg_vars), carry_stop),
    )
    out = flip
    arg_ty = emulation_type(cfg.w, k - 1)
    for n in reversed(args):
        out = Lam(n, NONE_V, arg_ty, out)
    return Lam(cur, NONE_V, emulation_type(cfg.w, k), out)


def exists_ho(cfg: QuantifierConfig, k: int, x: str, phi: Formula, actions) -> Formula:
    """Existential over level-k uniform values, binding `x` in phi.

    Level 0 is set quantification.  Above that, candidates are enumerated
    by iterating next_ho from the everywhere-false function.
    """
    if k < 0:
        raise MacroError("quantifier level must be nonnegative")
    if k == 0:
        return exists_set(cfg, x, phi, actions)
    f = fresh_name(f"EnumFn{k}", free_vars(phi) | {x})
    ty = emulation_type(cfg.w, k)
    body = Lam(x, NONE_V, ty, Or(phi, App(FixVar(f), App(next_ho(cfg, k, actions), Var(x)))))
    return App(Fix("mu", f, Arrow(ty, NONE_V, GROUND), body), ff_ho(cfg, k))


def forall_ho(cfg: QuantifierConfig, k: int, x: str, phi: Formula, actions) -> Formula:
    return Neg(exists_ho(cfg, k, x, Neg(phi), actions))


# ---------------------------------------------------------------------------
# Goodness
# ---------------------------------------------------------------------------


def goodness_check(lts: Lts, d: int, r: int, value) -> bool:
    """Is `value` a good set: nonempty prefixes x fixed anchors x S^2,
    with every state reachable from some anchor?"""
    if r < 1 or d < r + 3:
        raise MacroError(f"goodness needs d >= r+3, got d={d}, r={r}")
    tuples = frozenset(value)
    if not tuples:
        return False
    plen = d - 2 - r
    prefixes = {t[:plen] for t in tuples}
    anchors = {t[plen : plen + r] for t in tuples}
    if len(anchors) != 1:
        return False
    anchor = next(iter(anchors))
    states = range(lts.n)
    expect = {
        p + anchor + (u, v) for p in prefixes for u in states for v in states
    }
    if tuples != frozenset(expect):
        return False
    return reachable(lts, anchor) == frozenset(states)


def good_set(lts: Lts, cfg: QuantifierConfig, anchors, prefixes=None) -> frozenset:
    """Build a good set with the given anchor states.

    `prefixes` restricts the leading d-2-r positions (default: all
    combinations).  The result is not validated; run goodness_check if
    the anchors' reachability is in doubt.
    """
    anchors = tuple(anchors)
    if len(anchors) != cfg.r:
        raise MacroError(f"need exactly {cfg.r} anchor states, got {len(anchors)}")
    states = range(lts.n)
    plen = cfg.d - 2 - cfg.r
    if prefixes is None:
        prefixes = product(states, repeat=plen)
    return frozenset(
        tuple(p) + anchors + (u, v)
        for p in prefixes
        for u in states
        for v in states
    )
