"""Finite labelled transition systems.

States are integers 0..n-1.  Actions and atomic propositions are named;
their declaration order is significant (it fixes signature and ordering
computations downstream).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property


class LtsError(Exception):
    """Raised for malformed LTS descriptions."""


@dataclass(frozen=True)
class Lts:
    n: int
    actions: tuple[str, ...]
    props: tuple[str, ...]
    edges: frozenset[tuple[int, str, int]]
    labels: tuple[frozenset[str], ...]
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise LtsError("state count must be nonnegative")
        if len(set(self.actions)) != len(self.actions):
            raise LtsError("duplicate action name")
        if len(set(self.props)) != len(self.props):
            raise LtsError("duplicate proposition name")
        if len(self.labels) != self.n:
            raise LtsError("labels must cover every state exactly once")
        for src, act, dst in self.edges:
            if not (0 <= src < self.n and 0 <= dst < self.n):
                raise LtsError(f"transition endpoint out of range: {src} {act} {dst}")
            if act not in self.actions:
                raise LtsError(f"transition uses undeclared action {act!r}")
        for s, lab in enumerate(self.labels):
            for p in lab:
                if p not in self.props:
                    raise LtsError(f"state {s} labelled with undeclared proposition {p!r}")
        if self.names is not None and len(self.names) != self.n:
            raise LtsError("names must cover every state exactly once")

    @cached_property
    def succ(self) -> dict[str, tuple[tuple[int, ...], ...]]:
        """succ[a][s] = sorted a-successors of s."""
        out = {a: [[] for _ in range(self.n)] for a in self.actions}
        for src, act, dst in self.edges:
            out[act][src].append(dst)
        return {a: tuple(tuple(sorted(ss)) for ss in rows) for a, rows in out.items()}

    @cached_property
    def pred(self) -> dict[str, tuple[tuple[int, ...], ...]]:
        """pred[a][s] = sorted a-predecessors of s."""
        out = {a: [[] for _ in range(self.n)] for a in self.actions}
        for src, act, dst in self.edges:
            out[act][dst].append(src)
        return {a: tuple(tuple(sorted(ss)) for ss in rows) for a, rows in out.items()}

    def states(self) -> range:
        return range(self.n)


def make_lts(n, actions=(), props=(), edges=(), labels=None, names=None) -> Lts:
    """Convenience constructor taking plain lists/dicts."""
    if labels is None:
        labels = [frozenset()] * n
    elif isinstance(labels, dict):
        labels = [frozenset(labels.get(s, ())) for s in range(n)]
    else:
        labels = [frozenset(l) for l in labels]
    return Lts(
        n=n,
        actions=tuple(actions),
        props=tuple(props),
        edges=frozenset((int(s), a, int(t)) for s, a, t in edges),
        labels=tuple(labels),
        names=tuple(names) if names is not None else None,
    )


# ---------------------------------------------------------------------------
# Text and JSON formats
#
# Text:
#     states: 3
#     actions: a b
#     props: p q
#     0 a 1
#     1 b 2
#     0: p q
#
# JSON mirrors the same data under keys states/actions/props/transitions/labels.
# ---------------------------------------------------------------------------


def parse_lts(text: str) -> Lts:
    """Parse either the text format or its JSON equivalent (auto-detected)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _from_json(text)
    return _from_text(text)


def _from_text(text: str) -> Lts:
    n = None
    actions: list[str] = []
    props: list[str] = []
    edges = []
    labels: dict[int, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("states:"):
            try:
                n = int(line.split(":", 1)[1])
            except ValueError:
                raise LtsError(f"line {lineno}: bad state count")
        elif line.startswith("actions:"):
            actions = line.split(":", 1)[1].split()
        elif line.startswith("props:"):
            props = line.split(":", 1)[1].split()
        elif ":" in line:
            head, rest = line.split(":", 1)
            try:
                s = int(head)
            except ValueError:
                raise LtsError(f"line {lineno}: bad label line {line!r}")
            labels.setdefault(s, []).extend(rest.split())
        else:
            parts = line.split()
            if len(parts) != 3:
                raise LtsError(f"line {lineno}: bad transition line {line!r}")
            try:
                src, dst = int(parts[0]), int(parts[2])
            except ValueError:
                raise LtsError(f"line {lineno}: bad transition endpoints in {line!r}")
            edges.append((src, parts[1], dst))
    if n is None:
        raise LtsError("missing 'states:' header")
    for s in labels:
        if not 0 <= s < n:
            raise LtsError(f"label line for undeclared state {s}")
    return make_lts(n, actions, props, edges, labels)


def _from_json(text: str) -> Lts:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise LtsError(f"bad JSON: {e}")
    try:
        n = int(data["states"])
        actions = list(data.get("actions", []))
        props = list(data.get("props", []))
        edges = [(int(s), str(a), int(t)) for s, a, t in data.get("transitions", [])]
        labels = {int(s): list(ps) for s, ps in dict(data.get("labels", {})).items()}
    except (KeyError, TypeError, ValueError) as e:
        raise LtsError(f"bad LTS JSON structure: {e}")
    return make_lts(n, actions, props, edges, labels)


def serialize_lts(lts: Lts, fmt: str = "text") -> str:
    if fmt == "text":
        lines = [f"states: {lts.n}"]
        if lts.actions:
            lines.append("actions: " + " ".join(lts.actions))
        if lts.props:
            lines.append("props: " + " ".join(lts.props))
        for src, act, dst in sorted(lts.edges):
            lines.append(f"{src} {act} {dst}")
        for s in lts.states():
            if lts.labels[s]:
                lines.append(f"{s}: " + " ".join(p for p in lts.props if p in lts.labels[s]))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        data = {
            "states": lts.n,
            "actions": list(lts.actions),
            "props": list(lts.props),
            "transitions": [[s, a, t] for s, a, t in sorted(lts.edges)],
            "labels": {
                str(s): [p for p in lts.props if p in lts.labels[s]]
                for s in lts.states()
                if lts.labels[s]
            },
        }
        return json.dumps(data, indent=2) + "\n"
    raise LtsError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# Reachability, bisimilarity, quotients
# ---------------------------------------------------------------------------


def reachable(lts: Lts, seeds) -> frozenset[int]:
    """States reachable from `seeds` via any sequence of actions."""
    seen = set()
    todo = [s for s in seeds]
    for s in todo:
        if not 0 <= s < lts.n:
            raise LtsError(f"seed state {s} out of range")
    while todo:
        s = todo.pop()
        if s in seen:
            continue
        seen.add(s)
        for a in lts.actions:
            for t in lts.succ[a][s]:
                if t not in seen:
                    todo.append(t)
    return frozenset(seen)


@dataclass(frozen=True)
class Partition:
    """A partition of the state set into bisimulation classes.

    Blocks are sorted by their least member, so class indices are stable.
    """

    blocks: tuple[frozenset[int], ...]
    class_of: tuple[int, ...]

    def __len__(self):
        return len(self.blocks)


def bisim_partition(lts: Lts) -> Partition:
    """Partition refinement: split on labels, then on successor-block signatures."""
    class_of = {}
    seen_sigs: dict[frozenset, int] = {}
    for s in lts.states():
        sig = lts.labels[s]
        if sig not in seen_sigs:
            seen_sigs[sig] = len(seen_sigs)
        class_of[s] = seen_sigs[sig]
    while True:
        sigs = {}
        new_class = {}
        for s in lts.states():
            sig = (
                class_of[s],
                tuple(frozenset(class_of[t] for t in lts.succ[a][s]) for a in lts.actions),
            )
            if sig not in sigs:
                sigs[sig] = len(sigs)
            new_class[s] = sigs[sig]
        if len(sigs) == len(set(class_of.values())):
            break
        class_of = new_class
    ids = sorted(set(class_of.values()), key=lambda c: min(s for s in lts.states() if class_of[s] == c))
    remap = {c: i for i, c in enumerate(ids)}
    class_tuple = tuple(remap[class_of[s]] for s in lts.states())
    blocks = tuple(
        frozenset(s for s in lts.states() if class_tuple[s] == i) for i in range(len(ids))
    )
    return Partition(blocks=blocks, class_of=class_tuple)


def quotient(lts: Lts) -> tuple[Lts, Partition]:
    """The bisimulation quotient together with the partition that produced it."""
    part = bisim_partition(lts)
    k = len(part)
    edges = set()
    for src, act, dst in lts.edges:
        edges.add((part.class_of[src], act, part.class_of[dst]))
    labels = []
    for b in part.blocks:
        labels.append(lts.labels[min(b)])
    q = Lts(
        n=k,
        actions=lts.actions,
        props=lts.props,
        edges=frozenset(edges),
        labels=tuple(labels),
        names=tuple(",".join(str(s) for s in sorted(b)) for b in part.blocks),
    )
    return q, part


@dataclass(frozen=True)
class CanonicalOrder:
    """A strict total order on bisimulation classes.

    Ranks are produced by iterated signature refinement: stage 0 orders
    classes by their label bit-vector (under the declared proposition
    order), stage k+1 by (stage-k rank, per-action sorted stage-k
    successor ranks), compared lexicographically.  On a bisimulation
    quotient this separates every pair of classes in at most `|classes|`
    stages.
    """

    partition: Partition
    rank_of_class: tuple[int, ...]

    def state_rank(self, s: int) -> int:
        return self.rank_of_class[self.partition.class_of[s]]

    def less(self, s: int, t: int) -> bool:
        return self.state_rank(s) < self.state_rank(t)


def canonical_order(lts: Lts) -> CanonicalOrder:
    part = bisim_partition(lts)
    k = len(part)
    succ = {
        a: [
            sorted({part.class_of[t] for s in part.blocks[c] for t in lts.succ[a][s]})
            for c in range(k)
        ]
        for a in lts.actions
    }
    sig = [
        tuple(1 if p in lts.labels[min(part.blocks[c])] else 0 for p in lts.props)
        for c in range(k)
    ]
    rank = _rank_by_signature(sig)
    for _ in range(k + 1):
        sig = [
            (rank[c], tuple(tuple(sorted({rank[d] for d in succ[a][c]})) for a in lts.actions))
            for c in range(k)
        ]
        new_rank = _rank_by_signature(sig)
        if new_rank == rank:
            break
        rank = new_rank
    if len(set(rank)) != k:
        raise LtsError("canonical order failed to separate bisimulation classes")
    return CanonicalOrder(partition=part, rank_of_class=tuple(rank))


def _rank_by_signature(sigs) -> list[int]:
    order = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
    return [order[sig] for sig in sigs]
