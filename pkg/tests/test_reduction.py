"""Product construction and the arity-collapsing translation."""

import random

import pytest

from phfl.lts import make_lts
from phfl.reduction import (
    ReductionError,
    all_index_maps,
    check_via_product,
    collect_index_maps,
    d_product,
    hat_translate,
    product_state_index,
    sigma_action_name,
)
from phfl.semantics import Semantics, check_tuple
from phfl.syntax import (
    Diamond,
    IndexMap,
    LtAtom,
    Prop,
    alpha_equal,
    index_map,
    parse_formula,
)
from phfl.typecheck import infer_type, order_of_formula
from test_lts import random_lts
from test_semantics import bisim_text, fte_text, t1, t2, t2r
from test_typecheck import rand_ground

SWAP = index_map({1: 2, 2: 1})


def test_sigma_action_names():
    assert sigma_action_name(SWAP, 2) == "sigma21"
    assert sigma_action_name(IndexMap(()), 2) == "sigma12"
    assert sigma_action_name(index_map({1: 3}), 3) == "sigma323"
    with pytest.raises(ReductionError, match="d <= 9"):
        sigma_action_name(IndexMap(()), 10)
    with pytest.raises(ReductionError):
        sigma_action_name(index_map({1: 5}), 3)


def test_single_state_product():
    lts = make_lts(1, ["a"], [], [(0, "a", 0)])
    prod = d_product(lts, 2)
    assert prod.n == 1
    assert set(prod.actions) == {"a1", "a2", "sigma11", "sigma12", "sigma21", "sigma22"}
    for a in prod.actions:
        assert prod.succ[a][0] == (0,)


def test_t1_product_edges():
    prod = d_product(t1(), 2)
    assert prod.n == 4
    i01 = product_state_index(2, (0, 1))
    i10 = product_state_index(2, (1, 0))
    assert prod.succ["a1"][i01] == (i01,)
    assert prod.succ["a2"][i01] == (i01,)
    assert prod.succ["sigma21"][i01] == (i10,)
    assert prod.succ["sigma11"][i01] == (product_state_index(2, (0, 0)),)
    # action count: |A| * d + d^d
    assert len(prod.actions) == 1 * 2 + 4
    assert set(prod.props) == {"p1", "p2"}
    assert prod.labels[i01] == frozenset({"p1", "p2"})


def test_t2_product_labels_and_size():
    prod = d_product(t2r(), 2)
    assert prod.n == 9
    i12 = product_state_index(3, (1, 2))
    assert prod.labels[i12] == frozenset({"r2"})
    assert prod.succ["b1"][i12] == (product_state_index(3, (2, 2)),)
    assert prod.succ["a1"][i12] == ()


def test_product_size_bound():
    with pytest.raises(ReductionError, match="too large"):
        d_product(t2(), 2, max_states=8)


def test_reachability_restriction():
    prod = d_product(t2(), 1, reachable_from=(2,))
    assert prod.n == 1
    prod = d_product(t2(), 1, reachable_from=(0,))
    assert prod.n == 3


def test_collect_index_maps():
    f = parse_formula(r"{1->2,2->1} p@1 \/ mu (X:Prop). {2->1} X", d=2)
    maps = collect_index_maps(f)
    assert SWAP in maps
    assert index_map({2: 1}) in maps
    assert len(maps) == 2
    assert len(all_index_maps(2)) == 4


def test_hat_substitution_clause():
    f = parse_formula("{1->2,2->1} p@1", d=2)
    assert alpha_equal(hat_translate(f, 2), Diamond("sigma21", 1, Prop("p1", 1)))


def test_hat_modality_clause():
    f = parse_formula("<a@1> p@2", d=2)
    assert alpha_equal(hat_translate(f, 2), Diamond("a1", 1, Prop("p2", 1)))


def test_hat_homomorphic_fixpoint():
    f = parse_formula(r"mu (X:Prop). p@1 \/ {1->2,2->1} X", d=2)
    want = parse_formula(r"mu (X:Prop). p1@1 \/ <sigma21@1> X")
    assert alpha_equal(hat_translate(f, 2), want)


def test_hat_rejects_order_atom():
    with pytest.raises(ReductionError, match="order atom"):
        hat_translate(LtAtom(), 2)


def test_hat_preserves_types_and_order():
    for text in (bisim_text(t1()), bisim_text(t2()), fte_text(t1()), fte_text(t2())):
        f = parse_formula(text, d=2)
        g = hat_translate(f, 2)
        assert infer_type(g, d=1) == infer_type(f, d=2)
        assert order_of_formula(g, d=1) == order_of_formula(f, d=2)


def test_check_via_product_golden():
    f1 = parse_formula(bisim_text(t1()), d=2)
    assert check_via_product(t1(), (0, 1), f1) is True
    assert check_tuple(t1(), (0, 1), f1) is True
    f2 = parse_formula(bisim_text(t2()), d=2)
    assert check_via_product(t2(), (0, 1), f2) is False
    assert check_tuple(t2(), (0, 1), f2) is False
    assert check_via_product(t2(), (1, 2), parse_formula("tt")) is True


def test_check_via_product_order_one():
    f = parse_formula(fte_text(t1()), d=2)
    for tup in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert check_via_product(t1(), tup, f) == check_tuple(t1(), tup, f)


def test_env_values_cross_translation():
    sub = {(0, 1), (1, 1)}
    f = parse_formula("x", d=2)
    for tup in [(0, 1), (1, 0), (1, 1)]:
        direct = check_tuple(t1(), tup, f, env={"x": sub})
        via = check_via_product(t1(), tup, f, env={"x": sub})
        assert direct == via


def test_differential_ground_random():
    rng = random.Random(41)
    for _ in range(60):
        lts = random_lts(rng, 3)
        while not lts.props:
            lts = random_lts(rng, 3)
        d = rng.randrange(1, 3)
        f = rand_ground(
            rng, 4, d, [], props="".join(lts.props), actions="".join(lts.actions)
        )
        sem = Semantics(lts, d)
        direct = sem.eval(f)
        for tup in sem.tuples:
            assert (tup in direct) == check_via_product(lts, tup, f)
