"""Quantifier-emulation schemas, checked against native oracles.

The oracles come first and use nothing from the schema code: trace
equivalence by determinization, first-order quantification by direct
projection, the set order and the increment sequence by explicit binary
encoding over ranked prefixes, and set quantification by brute force
over all prefix sets.
"""

from itertools import product

import pytest

from phfl.lts import bisim_partition, canonical_order, make_lts, quotient, reachable
from phfl.macros import (
    MacroError,
    QuantifierConfig,
    exists_index,
    exists_ho,
    exists_set,
    ff_ho,
    forall_index,
    good_set,
    goodness_check,
    lt_atom,
    next_ho,
    next_set,
    phi_bisim,
    phi_fte,
    phi_lt_setpair,
    phi_lt_w,
    sigma_assign,
    sigma_cmp,
    sigma_shift,
    sigma_swap,
)
from phfl.semantics import Semantics, check_tuple, emulation_type, eval_formula
from phfl.syntax import (
    GROUND,
    NONE_V,
    App,
    Arrow,
    Diamond,
    Lam,
    Neg,
    Prop,
    Subst,
    Var,
    and_,
    ff,
    tt,
    validate_indices,
)
from phfl.typecheck import infer_type, order_of_formula
from test_semantics import t1, t2, t2r

# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def trace_equivalent(lts, s, t) -> bool:
    """Language equality of action traces, via the subset construction."""
    start = (frozenset([s]), frozenset([t]))
    seen = {start}
    stack = [start]
    while stack:
        a_set, b_set = stack.pop()
        for a in lts.actions:
            a_next = frozenset(v for u in a_set for v in lts.succ[a][u])
            b_next = frozenset(v for u in b_set for v in lts.succ[a][u])
            if bool(a_next) != bool(b_next):
                return False
            if a_next and (a_next, b_next) not in seen:
                seen.add((a_next, b_next))
                stack.append((a_next, b_next))
    return True


def project_exists(truth, d, i, n):
    """Tuples that satisfy `truth` after replacing position i by some state."""
    out = set()
    for tup in truth:
        for v in range(n):
            other = tup[: i - 1] + (v,) + tup[i:]
            out.add(other)
    return frozenset(out)


def ranked_prefixes(lts, w):
    """All w-tuples of states, ascending in the canonical lexicographic order."""
    order = canonical_order(lts)
    pref = list(product(range(lts.n), repeat=w))
    pref.sort(key=lambda p: tuple(order.state_rank(s) for s in p))
    return pref


def prefix_value(E, M, w):
    """The set (M x S^(d-w)) intersected with E."""
    return frozenset(t for t in E if t[:w] in M)


def set_order_oracle(prefixes, Mx, My) -> bool:
    """Strict order on prefix sets: least differing prefix belongs to My."""
    for p in prefixes:
        if (p in Mx) != (p in My):
            return p in My
    return False


def counter_sequence(E, prefixes, w):
    """Increment sequence of prefix values: index n has bit i set iff the
    i-th smallest prefix is present."""
    out = []
    for n in range(2 ** len(prefixes)):
        M = {prefixes[i] for i in range(len(prefixes)) if n >> i & 1}
        out.append(prefix_value(E, M, w))
    return out


def lemma1_bruteforce(lts, cfg, phi, xname, E, extra_env=None):
    """Union over all prefix sets M of the truth set of phi with x bound
    to (M x S^(d-w)) n E."""
    pref = list(product(range(lts.n), repeat=cfg.w))
    out = set()
    for bits in range(2 ** len(pref)):
        M = {pref[i] for i in range(len(pref)) if bits >> i & 1}
        env = {xname: prefix_value(E, M, cfg.w), "e": E}
        env.update(extra_env or {})
        out |= eval_formula(lts, cfg.d, phi, env=env, strategy="demand")
    return frozenset(out)


# ---------------------------------------------------------------------------
# Reference systems
# ---------------------------------------------------------------------------


def one_class():
    return make_lts(1, ["a"], ["p"], [(0, "a", 0)], {0: ["p"]})


def two_class():
    """Its own quotient: state 1 carries p, both reachable from 0."""
    return make_lts(2, ["a"], ["p"], [(0, "a", 1), (1, "a", 1)], {1: ["p"]})


def t3():
    """Two roots with equal trace sets {e, a, ab, ac} but different branching."""
    edges = [
        (0, "a", 1), (1, "b", 2), (1, "c", 3),
        (4, "a", 5), (4, "a", 6), (5, "b", 7), (6, "c", 8),
    ]
    return make_lts(9, ["a", "b", "c"], [], edges)


CFG = QuantifierConfig(w=1, r=1, d=5)
TYPE_ENV = {"e": (GROUND, NONE_V)}


def good_tuples(E, cfg, value):
    """Restrict a truth set to tuples drawn from E's anchor discipline."""
    anchors = {t[cfg.d - 2 - cfg.r : cfg.d - 2] for t in E}
    (anchor,) = anchors
    return frozenset(t for t in value if t[cfg.d - 2 - cfg.r : cfg.d - 2] == anchor)


# ---------------------------------------------------------------------------
# Configuration and index maps
# ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(MacroError, match="w must be"):
        QuantifierConfig(w=0, r=1, d=5)
    with pytest.raises(MacroError, match="anchor"):
        QuantifierConfig(w=1, r=0, d=5)
    with pytest.raises(MacroError, match="d >= 2w\\+r\\+2"):
        QuantifierConfig(w=2, r=1, d=6)
    assert CFG.free_limit == 2
    assert list(CFG.anchor_positions) == [3]
    big = QuantifierConfig(w=3, r=2, d=10)
    assert list(big.anchor_positions) == [7, 8]


def test_sigma_assign():
    assert sigma_assign(1, 3, 3).as_tuple(3) == (3, 2, 3)
    with pytest.raises(MacroError, match="out of range"):
        sigma_assign(4, 1, 3)


def test_sigma_cmp():
    big = QuantifierConfig(w=3, r=2, d=10)
    assert sigma_cmp(2, big).as_tuple(10) == (1, 2, 3, 4, 5, 6, 7, 8, 2, 5)
    with pytest.raises(MacroError, match="out of range"):
        sigma_cmp(8, big)


def test_sigma_swap():
    assert sigma_swap(1, 3, 4).as_tuple(4) == (3, 2, 1, 4)


def test_sigma_shift_copies_working_block():
    assert sigma_shift(2, 6).as_tuple(6) == (1, 2, 1, 2, 5, 6)
    # Semantically: after the shift, position w+1 reads the old position 1,
    # and position 1 itself is untouched.
    lts = t2r()
    shifted = eval_formula(lts, 5, Subst(sigma_shift(1, 5), Prop("r", 2)))
    direct = eval_formula(lts, 5, Prop("r", 1))
    assert shifted == direct
    with pytest.raises(MacroError, match="do not fit"):
        sigma_shift(3, 5)


def test_lt_atom_on_quotients():
    single, _ = quotient(t1())
    assert eval_formula(single, 2, lt_atom()) == frozenset()
    lts = two_class()
    order = canonical_order(lts)
    truth = eval_formula(lts, 2, lt_atom())
    expect = frozenset(
        (s, t) for s in range(2) for t in range(2) if order.less(s, t)
    )
    assert truth == expect and len(truth) == 1


# ---------------------------------------------------------------------------
# Equivalence formulas
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("factory", [t1, t2, t2r, t3, two_class])
def test_phi_bisim_matches_partition(factory):
    lts = factory()
    part = bisim_partition(lts)
    truth = eval_formula(lts, 2, phi_bisim(lts), strategy="demand")
    expect = frozenset(
        (s, t)
        for s in range(lts.n)
        for t in range(lts.n)
        if part.class_of[s] == part.class_of[t]
    )
    assert truth == expect


def test_phi_bisim_spec_cases():
    lts = t2()
    truth = eval_formula(lts, 2, phi_bisim(lts))
    assert (0, 2) not in truth
    assert all((s, s) in truth for s in range(3))


@pytest.mark.parametrize("factory", [t1, t2, t3])
def test_phi_fte_matches_trace_oracle(factory):
    lts = factory()
    truth = eval_formula(lts, 2, phi_fte(lts), strategy="demand")
    for s in range(lts.n):
        for t in range(lts.n):
            assert ((s, t) in truth) == trace_equivalent(lts, s, t), (s, t)


def test_t3_separates_trace_from_bisim():
    lts = t3()
    assert trace_equivalent(lts, 0, 4)
    part = bisim_partition(lts)
    assert part.class_of[0] != part.class_of[4]
    assert check_tuple(lts, (0, 4), phi_fte(lts))
    assert not check_tuple(lts, (0, 4), phi_bisim(lts))


def test_equivalence_formulas_typecheck():
    lts = t3()
    b = phi_bisim(lts)
    f = phi_fte(lts)
    validate_indices(b, 2)
    validate_indices(f, 2)
    assert infer_type(b, 2) == GROUND and order_of_formula(b, 2) == 0
    assert infer_type(f, 2) == GROUND and order_of_formula(f, 2) == 1


# ---------------------------------------------------------------------------
# First-order quantification
# ---------------------------------------------------------------------------


def test_exists_index_reserved_positions():
    with pytest.raises(MacroError, match="reserved"):
        exists_index(3, CFG, Prop("r", 1), ["a"])
    with pytest.raises(MacroError, match="reserved"):
        exists_index(5, CFG, Prop("r", 1), ["a"])


@pytest.mark.parametrize("i", [1, 2])
def test_exists_index_matches_projection(i):
    lts, _ = quotient(t2r())
    bodies = [
        Prop("r", 1),
        Prop("r", i),
        Diamond("a", i, tt()),
        and_(Prop("r", 2), Neg(Prop("r", 1))),
    ]
    for phi in bodies:
        base = eval_formula(lts, CFG.d, phi)
        expect = project_exists(base, CFG.d, i, lts.n)
        got = eval_formula(lts, CFG.d, exists_index(i, CFG, phi, lts.actions))
        anchored = lambda s: frozenset(t for t in s if t[2] == 0)
        assert anchored(got) == anchored(expect), phi


def test_forall_index_is_dual():
    lts, _ = quotient(t2r())
    phi = Prop("r", 1)
    ex = eval_formula(lts, CFG.d, exists_index(1, CFG, phi, lts.actions))
    fa = eval_formula(lts, CFG.d, forall_index(1, CFG, phi, lts.actions))
    anchored = lambda s: frozenset(t for t in s if t[2] == 0)
    # r holds at exactly one of three classes: some but not all choices work.
    assert anchored(ex) and not anchored(fa)


# ---------------------------------------------------------------------------
# Block comparison and the set order
# ---------------------------------------------------------------------------


def test_phi_lt_w_width_one():
    lts = two_class()
    order = canonical_order(lts)
    truth = eval_formula(lts, CFG.d, phi_lt_w(CFG))
    for tup in product(range(2), repeat=CFG.d):
        assert (tup in truth) == order.less(tup[0], tup[1]), tup


def test_phi_lt_w_is_lexicographic():
    lts = two_class()
    cfg = QuantifierConfig(w=2, r=1, d=7)
    order = canonical_order(lts)
    rank = order.state_rank
    truth = eval_formula(lts, cfg.d, phi_lt_w(cfg))
    for tup in product(range(2), repeat=cfg.d):
        left = (rank(tup[0]), rank(tup[1]))
        right = (rank(tup[2]), rank(tup[3]))
        assert (tup in truth) == (left < right), tup


def test_phi_lt_setpair_is_the_expected_order():
    lts = two_class()
    E = good_set(lts, CFG, anchors=(0,))
    pref = ranked_prefixes(lts, 1)
    subsets = [set(), {pref[0]}, {pref[1]}, {pref[0], pref[1]}]
    formula = phi_lt_setpair(CFG, Var("u"), Var("v"), lts.actions)
    assert infer_type(formula, CFG.d, {**TYPE_ENV, "u": (GROUND, NONE_V), "v": (GROUND, NONE_V)}) == GROUND
    anchored_universe = good_tuples(E, CFG, frozenset(product(range(2), repeat=5)))
    for Mx in subsets:
        for My in subsets:
            env = {
                "u": prefix_value(E, Mx, 1),
                "v": prefix_value(E, My, 1),
                "e": E,
            }
            truth = eval_formula(lts, CFG.d, formula, env=env, strategy="demand")
            expect = set_order_oracle(pref, Mx, My)
            anchored = good_tuples(E, CFG, truth)
            assert anchored == (anchored_universe if expect else frozenset()), (Mx, My)


# ---------------------------------------------------------------------------
# The increment transformer and set quantification
# ---------------------------------------------------------------------------


def orbit_of(lts, cfg, E, step_formula):
    sem = Semantics(lts, cfg.d)
    step = sem.eval(step_formula, env={"e": E}, strategy="demand")
    seq = [frozenset()]
    while True:
        nxt = sem.apply_value(step, seq[-1])
        if nxt in seq:
            assert nxt == seq[0], "orbit did not close into a cycle"
            return seq
        seq.append(nxt)


def test_next_set_orbit_full_prefixes():
    lts = two_class()
    E = good_set(lts, CFG, anchors=(0,))
    seq = orbit_of(lts, CFG, E, next_set(CFG, lts.actions))
    pref = ranked_prefixes(lts, 1)
    assert seq == counter_sequence(E, pref, 1)
    assert len(seq) == 2 ** len(pref) == 4


def test_next_set_orbit_restricted_prefixes():
    lts = two_class()
    order = canonical_order(lts)
    low = min(range(2), key=order.state_rank)
    prefixes = [(low, s) for s in range(2)]
    E = good_set(lts, CFG, anchors=(0,), prefixes=prefixes)
    seq = orbit_of(lts, CFG, E, next_set(CFG, lts.actions))
    assert seq == counter_sequence(E, [(low,)], 1)
    assert len(seq) == 2


def test_exists_set_trivial_bodies():
    lts = two_class()
    E = good_set(lts, CFG, anchors=(0,))
    full = frozenset(product(range(2), repeat=CFG.d))
    top = eval_formula(lts, CFG.d, exists_set(CFG, "x", tt(), lts.actions), env={"e": E})
    bot = eval_formula(lts, CFG.d, exists_set(CFG, "x", ff(), lts.actions), env={"e": E})
    assert top == full
    assert bot == frozenset()


def test_exists_set_matches_bruteforce():
    lts = two_class()
    E = good_set(lts, CFG, anchors=(0,))
    bodies = [
        Var("x"),
        Neg(Var("x")),
        and_(Var("x"), Prop("p", 1)),
        exists_index(2, CFG, and_(Var("x"), Prop("p", 2)), lts.actions),
    ]
    for phi in bodies:
        formula = exists_set(CFG, "x", phi, lts.actions)
        assert infer_type(formula, CFG.d, TYPE_ENV) == GROUND
        got = eval_formula(lts, CFG.d, formula, env={"e": E}, strategy="demand")
        expect = lemma1_bruteforce(lts, CFG, phi, "x", E)
        assert good_tuples(E, CFG, got) == good_tuples(E, CFG, expect), phi


# ---------------------------------------------------------------------------
# Function-level quantification
# ---------------------------------------------------------------------------


def test_schema_types_and_orders():
    for cfg in (CFG, QuantifierConfig(w=2, r=1, d=7)):
        acts = ["a"]
        nxt = next_set(cfg, acts)
        assert infer_type(nxt, cfg.d, TYPE_ENV) == Arrow(GROUND, NONE_V, GROUND)
        ex = exists_set(cfg, "x", Var("x"), acts)
        assert order_of_formula(ex, cfg.d, TYPE_ENV) == 1
    lvl1 = next_ho(CFG, 1, ["a"])
    t11 = emulation_type(1, 1)
    assert infer_type(lvl1, CFG.d, TYPE_ENV) == Arrow(t11, NONE_V, t11)
    lvl2 = next_ho(CFG, 2, ["a"])
    t12 = emulation_type(1, 2)
    assert infer_type(lvl2, CFG.d, TYPE_ENV) == Arrow(t12, NONE_V, t12)
    exho = exists_ho(CFG, 2, "x", App(Var("x"), ff_ho(CFG, 1)), ["a"])
    assert infer_type(exho, CFG.d, TYPE_ENV) == GROUND


def test_ff_ho_level_guard():
    with pytest.raises(MacroError, match="k >= 1"):
        ff_ho(CFG, 0)
    assert infer_type(ff_ho(CFG, 2), CFG.d) == emulation_type(1, 2)


def test_exists_ho_level_zero_is_set_quantification():
    lts = two_class()
    E = good_set(lts, CFG, anchors=(0,))
    a = eval_formula(lts, CFG.d, exists_ho(CFG, 0, "x", Var("x"), lts.actions), env={"e": E})
    b = eval_formula(lts, CFG.d, exists_set(CFG, "x", Var("x"), lts.actions), env={"e": E})
    assert a == b


def test_exists_ho_level_one_single_class():
    lts = one_class()
    sem = Semantics(lts, CFG.d)
    E = good_set(lts, CFG, anchors=(0,))
    full = frozenset([(0,) * CFG.d])
    candidates = sem.enumerate_values(emulation_type(1, 1))
    assert len(candidates) == 4

    def observe(fn, arg):
        return sem.apply_value(fn, arg) == full

    bodies = {
        "accepts_full": (App(Var("x"), tt()), lambda f: observe(f, full)),
        "rejects_full": (Neg(App(Var("x"), tt())), lambda f: not observe(f, full)),
        "identity_like": (
            and_(App(Var("x"), tt()), Neg(App(Var("x"), ff()))),
            lambda f: observe(f, full) and not observe(f, frozenset()),
        ),
        "accepts_empty": (App(Var("x"), ff()), lambda f: observe(f, frozenset())),
    }
    for name, (phi, want) in bodies.items():
        formula = exists_ho(CFG, 1, "x", phi, lts.actions)
        got = check_tuple(lts, (0,) * CFG.d, formula, env={"e": E})
        expect = any(want(f) for f in candidates)
        assert got == expect, name


def test_exists_ho_level_two_single_class():
    lts = one_class()
    sem = Semantics(lts, CFG.d)
    E = good_set(lts, CFG, anchors=(0,))
    full = frozenset([(0,) * CFG.d])
    t11 = emulation_type(1, 1)
    level1 = sem.enumerate_uniform(1, 1)
    level2 = sem.enumerate_uniform(1, 2)
    assert len(level2) == 2 ** len(level1) == 16

    # Formula-side constants for the engine; table-side constants for the
    # oracle (the enumerated candidates only accept table values).
    const_tt = Lam("z", NONE_V, GROUND, tt())
    const_ff = Lam("z", NONE_V, GROUND, ff())
    ctt = sem.top(t11)
    cff = sem.bottom(t11)

    def observe(f, arg):
        return sem.apply_value(f, arg) == full

    bodies = {
        "hits_const_tt": (App(Var("x"), const_tt), lambda f: observe(f, ctt)),
        "misses_const_tt": (Neg(App(Var("x"), const_tt)), lambda f: not observe(f, ctt)),
        "separates": (
            and_(App(Var("x"), const_tt), Neg(App(Var("x"), const_ff))),
            lambda f: observe(f, ctt) and not observe(f, cff),
        ),
        "contradiction": (
            and_(App(Var("x"), const_tt), Neg(App(Var("x"), const_tt))),
            lambda f: False,
        ),
    }
    for name, (phi, want) in bodies.items():
        formula = exists_ho(CFG, 2, "x", phi, lts.actions)
        got = check_tuple(lts, (0,) * CFG.d, formula, env={"e": E})
        expect = any(want(f) for f in level2)
        assert got == expect, name


# ---------------------------------------------------------------------------
# Goodness
# ---------------------------------------------------------------------------


def test_goodness_check_accepts_products():
    lts, _ = quotient(t2r())
    E = good_set(lts, CFG, anchors=(0,))
    assert goodness_check(lts, CFG.d, CFG.r, E)
    restricted = good_set(lts, CFG, anchors=(0,), prefixes=[(0, 1), (2, 2)])
    assert goodness_check(lts, CFG.d, CFG.r, restricted)


def test_goodness_check_rejections():
    lts, _ = quotient(t2r())
    assert not goodness_check(lts, CFG.d, CFG.r, frozenset())
    # anchored at a state that reaches nothing else
    dead = good_set(lts, CFG, anchors=(2,))
    assert not goodness_check(lts, CFG.d, CFG.r, dead)
    # not a product: one tuple removed
    E = good_set(lts, CFG, anchors=(0,))
    punctured = frozenset(list(E)[1:])
    assert not goodness_check(lts, CFG.d, CFG.r, punctured)
    # two different anchor values mixed
    mixed = good_set(lts, CFG, anchors=(0,)) | good_set(lts, CFG, anchors=(1,))
    assert not goodness_check(lts, CFG.d, CFG.r, mixed)
    with pytest.raises(MacroError, match="d >= r\\+3"):
        goodness_check(lts, 3, 1, frozenset())


def test_good_set_arity():
    lts = two_class()
    with pytest.raises(MacroError, match="anchor states"):
        good_set(lts, CFG, anchors=(0, 1))


def test_reachability_matches_helper():
    lts = two_class()
    assert reachable(lts, (0,)) == frozenset({0, 1})
    assert reachable(lts, (1,)) == frozenset({1})
    assert goodness_check(lts, CFG.d, CFG.r, good_set(lts, CFG, anchors=(0,)))
    assert not goodness_check(lts, CFG.d, CFG.r, good_set(lts, CFG, anchors=(1,)))
