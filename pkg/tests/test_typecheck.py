"""Typing: variance-tracked contexts, inference, and order computation."""

import random

import pytest

from phfl.syntax import (
    Arrow,
    GROUND,
    Diamond,
    Fix,
    FixVar,
    MINUS,
    Neg,
    NONE_V,
    Or,
    PLUS,
    Prop,
    Subst,
    arrow,
    index_map,
    parse_formula,
    parse_type,
)
from phfl.typecheck import (
    TypeCheckError,
    dual_context,
    infer_type,
    order_of_formula,
)

BISIM = r"nu (X:Prop). (p@1 <=> p@2) /\ [a@1]<a@2> X /\ {1->2,2->1} X"

FTE = (
    r"(nu (F:(0 Prop) -> (0 Prop) -> Prop)."
    r" \(x:0 Prop). \(y:0 Prop). (x <=> y) /\ F (<a@1> x) (<a@2> y)) tt tt"
)


def test_bisim_formula_is_ground():
    f = parse_formula(BISIM, d=2)
    assert infer_type(f, d=2) == GROUND
    assert order_of_formula(f, d=2) == 0


def test_fte_formula_is_ground_order_one():
    f = parse_formula(FTE, d=2)
    assert infer_type(f, d=2) == GROUND
    assert order_of_formula(f, d=2) == 1


def test_fte_functional_type():
    want = arrow(GROUND, GROUND, GROUND, variance=NONE_V)
    assert parse_type("(0 Prop) -> (0 Prop) -> Prop") == want
    inner = parse_formula(FTE, d=2).fn.fn
    assert isinstance(inner, Fix)
    assert infer_type(inner, d=2) == want


def test_negated_fixpoint_variable_rejected():
    f = parse_formula("mu (X:Prop). ~X")
    with pytest.raises(TypeCheckError, match="odd number of negations"):
        infer_type(f, d=1)


def test_doubly_negated_fixpoint_variable_ok():
    f = parse_formula("mu (X:Prop). ~~X")
    assert infer_type(f, d=1) == GROUND


def test_ground_application_rejected():
    f = parse_formula("p@1 q@2")
    with pytest.raises(TypeCheckError, match="ill-typed application"):
        infer_type(f, d=2)


def test_contravariant_variable_use_rejected():
    f = parse_formula(r"\(x:- Prop). x")
    with pytest.raises(TypeCheckError, match="contravariant"):
        infer_type(f, d=1)


def test_contravariant_variable_under_negation_ok():
    f = parse_formula(r"\(x:- Prop). ~x")
    assert infer_type(f, d=1) == Arrow(GROUND, MINUS, GROUND)


def test_minus_argument_checked_under_dual():
    fn_ty = Arrow(GROUND, MINUS, GROUND)
    env = {"f": (fn_ty, PLUS), "y": (GROUND, PLUS)}
    ok = parse_formula("f p@1")
    assert infer_type(ok, d=1, env=env) == GROUND
    bad = parse_formula("f y")
    with pytest.raises(TypeCheckError, match="contravariant"):
        infer_type(bad, d=1, env=env)


def test_zero_variance_argument_checked_both_ways():
    fn_ty = Arrow(GROUND, NONE_V, GROUND)
    env = {"g": (fn_ty, PLUS), "y": (GROUND, PLUS)}
    assert infer_type(parse_formula("g p@1"), d=1, env=env) == GROUND
    with pytest.raises(TypeCheckError, match="contravariant"):
        infer_type(parse_formula("g y"), d=1, env=env)


def test_argument_type_mismatch():
    env = {"f": (arrow(arrow(GROUND, GROUND), GROUND), PLUS)}
    with pytest.raises(TypeCheckError, match="argument type mismatch"):
        infer_type(parse_formula("f p@1"), d=1, env=env)


def test_fixpoint_body_type_mismatch():
    f = parse_formula(r"mu (X:Prop). \(y:Prop). X")
    with pytest.raises(TypeCheckError, match="fixpoint body"):
        infer_type(f, d=1)


def test_unbound_variable():
    with pytest.raises(TypeCheckError, match="unbound variable"):
        infer_type(parse_formula("x"), d=1)


def test_bare_type_env_entries_accepted():
    assert infer_type(parse_formula("x"), d=1, env={"x": GROUND}) == GROUND


def test_index_bounds():
    with pytest.raises(TypeCheckError, match="index out of range"):
        infer_type(parse_formula("p@3"), d=2)
    with pytest.raises(TypeCheckError, match="index out of range"):
        infer_type(parse_formula("<a@2> p@1"), d=1)
    with pytest.raises(TypeCheckError, match="index out of range"):
        infer_type(parse_formula("{1->2} p@1"), d=1)
    assert infer_type(parse_formula("{1->2} p@1"), d=2) == GROUND


def test_dual_context_involution():
    ctx = {
        "a": (GROUND, PLUS),
        "b": (GROUND, MINUS),
        "c": (arrow(GROUND, GROUND), NONE_V),
    }
    dd = dual_context(dual_context(ctx))
    assert dd == ctx
    assert dual_context(ctx)["a"][1] == MINUS
    assert dual_context(ctx)["c"][1] == NONE_V


def test_negation_preserves_ground_type():
    f = parse_formula("~(p@1 \\/ q@1)")
    assert infer_type(f, d=1) == GROUND
    assert infer_type(Neg(Neg(f)), d=1) == GROUND


def test_identity_function_at_arrow_type():
    f = parse_formula(r"nu (F:Prop -> Prop). \(x:Prop). F x")
    assert infer_type(f, d=1) == arrow(GROUND, GROUND)
    assert order_of_formula(f, d=1) == 1


def test_higher_order_annotation():
    f = parse_formula(r"\(g:(Prop -> Prop) -> Prop). g")
    ty = infer_type(f, d=1)
    from phfl.syntax import type_order

    # the bound variable has an order-2 type; the lambda itself adds one more
    assert type_order(ty.arg) == 2
    assert type_order(ty) == 3
    assert order_of_formula(f, d=1) == 3


def rand_ground(rng, depth, d, fixvars, props="pq", actions="a"):
    """A random formula that is well typed at Prop by construction: no bare
    negation is ever wrapped around a fixpoint variable an odd number of
    times (negation only appears doubled)."""
    if depth == 0 or rng.random() < 0.2:
        if fixvars and rng.random() < 0.4:
            return FixVar(rng.choice(fixvars))
        return Prop(rng.choice(props), rng.randrange(1, d + 1))
    k = rng.randrange(5)
    if k == 0:
        return Or(
            rand_ground(rng, depth - 1, d, fixvars, props, actions),
            rand_ground(rng, depth - 1, d, fixvars, props, actions),
        )
    if k == 1:
        return Neg(Neg(rand_ground(rng, depth - 1, d, fixvars, props, actions)))
    if k == 2:
        return Diamond(
            rng.choice(actions),
            rng.randrange(1, d + 1),
            rand_ground(rng, depth - 1, d, fixvars, props, actions),
        )
    if k == 3:
        mapping = {1: rng.randrange(1, d + 1)}
        return Subst(
            index_map(mapping),
            rand_ground(rng, depth - 1, d, fixvars, props, actions),
        )
    name = f"Z{len(fixvars)}"
    kind = rng.choice(["mu", "nu"])
    return Fix(
        kind,
        name,
        GROUND,
        rand_ground(rng, depth - 1, d, fixvars + [name], props, actions),
    )


def test_random_ground_formulas_type_at_ground():
    rng = random.Random(23)
    for _ in range(150):
        d = rng.randrange(1, 4)
        f = rand_ground(rng, rng.randrange(1, 5), d, [])
        assert infer_type(f, d=d) == GROUND
        assert order_of_formula(f, d=d) == 0
