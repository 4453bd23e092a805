import random

import pytest

from phfl.lts import (
    Lts,
    LtsError,
    bisim_partition,
    canonical_order,
    make_lts,
    parse_lts,
    quotient,
    reachable,
    serialize_lts,
)


def t1():
    return make_lts(2, ["a"], ["p"], [(0, "a", 0), (1, "a", 1)], {0: ["p"], 1: ["p"]})


def t2():
    return make_lts(3, ["a", "b"], [], [(0, "a", 1), (1, "b", 2)])


# ---------------------------------------------------------------------------
# Oracle: greatest bisimulation, computed without partition refinement.
#
# For tiny systems we enumerate every relation on S x S and keep those that
# are bisimulations; their union is bisimilarity.  For slightly larger ones
# we shrink the label-compatible relation pairwise until the zig-zag
# condition holds everywhere.
# ---------------------------------------------------------------------------


def is_bisimulation(lts, rel):
    for s, t in rel:
        if lts.labels[s] != lts.labels[t]:
            return False
        for a in lts.actions:
            for s2 in lts.succ[a][s]:
                if not any((s2, t2) in rel for t2 in lts.succ[a][t]):
                    return False
            for t2 in lts.succ[a][t]:
                if not any((s2, t2) in rel for s2 in lts.succ[a][s]):
                    return False
    return True


def bisim_oracle_enumerate(lts):
    """Union of all bisimulations, by enumerating every relation."""
    pairs = [(s, t) for s in lts.states() for t in lts.states()]
    best = set()
    for mask in range(1 << len(pairs)):
        rel = {pairs[i] for i in range(len(pairs)) if mask >> i & 1}
        if is_bisimulation(lts, rel):
            best |= rel
    return best


def bisim_oracle_shrink(lts):
    rel = {
        (s, t)
        for s in lts.states()
        for t in lts.states()
        if lts.labels[s] == lts.labels[t]
    }
    changed = True
    while changed:
        changed = False
        for s, t in sorted(rel):
            ok = True
            for a in lts.actions:
                for s2 in lts.succ[a][s]:
                    if not any((s2, t2) in rel for t2 in lts.succ[a][t]):
                        ok = False
                for t2 in lts.succ[a][t]:
                    if not any((s2, t2) in rel for s2 in lts.succ[a][s]):
                        ok = False
            if not ok:
                rel.discard((s, t))
                changed = True
    return rel


def partition_relation(part):
    return {
        (s, t)
        for s in range(len(part.class_of))
        for t in range(len(part.class_of))
        if part.class_of[s] == part.class_of[t]
    }


def random_lts(rng, max_states=5):
    n = rng.randint(1, max_states)
    actions = ["a", "b"][: rng.randint(1, 2)]
    props = ["p", "q"][: rng.randint(0, 2)]
    edges = set()
    for _ in range(rng.randint(0, 2 * n)):
        edges.add((rng.randrange(n), rng.choice(actions), rng.randrange(n)))
    labels = {s: [p for p in props if rng.random() < 0.5] for s in range(n)}
    return make_lts(n, actions, props, edges, labels)


# ---------------------------------------------------------------------------
# Bisimilarity
# ---------------------------------------------------------------------------


def test_bisim_t1_single_block():
    assert bisim_oracle_enumerate(t1()) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    part = bisim_partition(t1())
    assert part.blocks == (frozenset({0, 1}),)


def test_bisim_t2_discrete():
    oracle = bisim_oracle_shrink(t2())
    assert oracle == {(0, 0), (1, 1), (2, 2)}
    part = bisim_partition(t2())
    assert part.blocks == (frozenset({0}), frozenset({1}), frozenset({2}))


def test_shrink_oracle_matches_enumeration_on_tiny_systems():
    rng = random.Random(7)
    for _ in range(25):
        lts = random_lts(rng, max_states=3)
        assert bisim_oracle_shrink(lts) == bisim_oracle_enumerate(lts)


def test_bisim_partition_matches_oracle():
    rng = random.Random(1)
    for _ in range(60):
        lts = random_lts(rng)
        part = bisim_partition(lts)
        assert partition_relation(part) == bisim_oracle_shrink(lts)


def test_states_bisimilar_to_their_quotient_class():
    # Glue the LTS and its quotient into one system; s must be bisimilar
    # to the class containing it.
    rng = random.Random(2)
    for _ in range(30):
        lts = random_lts(rng)
        q, part = quotient(lts)
        edges = set(lts.edges) | {(lts.n + c, a, lts.n + d) for c, a, d in q.edges}
        union = make_lts(
            lts.n + q.n,
            lts.actions,
            lts.props,
            edges,
            list(lts.labels) + list(q.labels),
        )
        rel = bisim_oracle_shrink(union)
        for s in lts.states():
            assert (s, lts.n + part.class_of[s]) in rel


# ---------------------------------------------------------------------------
# Quotients
# ---------------------------------------------------------------------------


def test_quotient_t1():
    q, part = quotient(t1())
    assert q.n == 1
    assert q.edges == frozenset({(0, "a", 0)})
    assert q.labels == (frozenset({"p"}),)
    assert part.class_of == (0, 0)


def test_quotient_t2_isomorphic():
    q, part = quotient(t2())
    assert q.n == 3
    c = part.class_of
    assert q.edges == frozenset({(c[0], "a", c[1]), (c[1], "b", c[2])})


def test_quotient_idempotent():
    rng = random.Random(3)
    for _ in range(30):
        q, _ = quotient(random_lts(rng))
        q2, part2 = quotient(q)
        assert len(part2) == q.n


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------


def test_reachable_chain():
    assert reachable(t2(), {0}) == frozenset({0, 1, 2})
    assert reachable(t2(), {2}) == frozenset({2})
    assert reachable(t1(), {0}) == frozenset({0})


def test_reachable_matches_bfs_oracle():
    rng = random.Random(4)
    for _ in range(30):
        lts = random_lts(rng)
        seed = rng.randrange(lts.n)
        # fixpoint oracle: grow the set until stable
        seen = {seed}
        while True:
            nxt = set(seen)
            for s, a, t in lts.edges:
                if s in seen:
                    nxt.add(t)
            if nxt == seen:
                break
            seen = nxt
        assert reachable(lts, {seed}) == frozenset(seen)


# ---------------------------------------------------------------------------
# Formats
# ---------------------------------------------------------------------------


TEXT_T2 = """\
states: 3
actions: a b
0 a 1
1 b 2
"""


def test_parse_text():
    lts = parse_lts(TEXT_T2)
    assert lts == t2()


def test_parse_text_with_labels_and_comments():
    text = """
    # a tiny system
    states: 2
    actions: a
    props: p q
    0 a 1
    0: p q
    1: q
    """
    lts = parse_lts(text)
    assert lts.labels == (frozenset({"p", "q"}), frozenset({"q"}))


def test_roundtrip_text_and_json():
    rng = random.Random(5)
    for _ in range(30):
        lts = random_lts(rng)
        again = parse_lts(serialize_lts(lts, "text"))
        assert again == lts
        again = parse_lts(serialize_lts(lts, "json"))
        assert again == lts


@pytest.mark.parametrize(
    "text",
    [
        "actions: a\n0 a 1\n",  # no states header
        "states: 2\nactions: a\n0 a 5\n",  # endpoint out of range
        "states: 2\n0 a 1\n",  # undeclared action
        "states: 1\nprops: p\n0: q\n",  # undeclared prop
        "states: 2\nactions: a\n0 a\n",  # malformed transition
        "states: x\n",
    ],
)
def test_parse_errors(text):
    with pytest.raises(LtsError):
        parse_lts(text)


def test_duplicate_names_rejected():
    with pytest.raises(LtsError):
        make_lts(1, ["a", "a"], [], [])
    with pytest.raises(LtsError):
        make_lts(1, [], ["p", "p"], [])


# ---------------------------------------------------------------------------
# Canonical order on bisimulation classes
# ---------------------------------------------------------------------------


def test_canonical_order_t1_trivial():
    order = canonical_order(t1())
    assert len(order.partition) == 1
    assert not order.less(0, 1)
    assert not order.less(1, 0)


def test_canonical_order_t2():
    # Hand-computed: all labels empty, so stage 0 ties everything.  Stage 1
    # signatures are, per class: 2 has no successors, 1 has only a
    # b-successor, 0 has only an a-successor; sorting these tuples puts
    # 2 first, then 1, then 0.
    order = canonical_order(t2())
    assert order.state_rank(2) == 0
    assert order.state_rank(1) == 1
    assert order.state_rank(0) == 2
    assert order.less(2, 1) and order.less(1, 0) and order.less(2, 0)
    assert not order.less(0, 1)


def test_canonical_order_total_and_deterministic():
    rng = random.Random(6)
    for _ in range(40):
        lts = random_lts(rng)
        order = canonical_order(lts)
        k = len(order.partition)
        assert sorted(order.rank_of_class) == list(range(k))
        assert canonical_order(lts).rank_of_class == order.rank_of_class
        # strictness: no state is below a bisimilar one
        for s in lts.states():
            for t in lts.states():
                same = order.partition.class_of[s] == order.partition.class_of[t]
                assert same == (not order.less(s, t) and not order.less(t, s))
