"""Relational fixpoint logic over labelled transition systems.

The surface language quantifies individual variables over states and
relation variables over finitary relations between them; `lfp` closes a
relation under a rule that must use the recursion variable positively.
This module provides the AST and parser, well-formedness checking with
type inference for fixpoint parameters, a naive enumerating evaluator,
a width/order normal form (homogenize), the embedding of relation
values into d-ary predicate values (tptr), and a compiler into the
modal language in which relation quantifiers become the block-set
emulation schemas (trans, capture_pipeline).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations, product as iproduct

from .lts import Lts
from .macros import (
    E_NAME,
    QuantifierConfig,
    exists_index,
    exists_set,
    exists_ho,
    phi_bisim,
)
from .semantics import BoxedFun, emulation_type, strip_type
from .syntax import (
    Diamond,
    Fix,
    FixVar,
    Formula,
    GROUND,
    Lam,
    Neg,
    NONE_V,
    Or,
    Prop,
    Subst,
    Var,
    App,
    and_all,
    apply_all,
    index_map,
    tt,
)

ENUM_CAP = 1 << 16


class HolfpError(Exception):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Individual:
    def __str__(self):
        return "ind"


@dataclass(frozen=True)
class Relation:
    components: tuple

    def __post_init__(self):
        if not self.components:
            raise HolfpError("relation types need at least one component")

    def __str__(self):
        return "(" + ",".join(str(c) for c in self.components) + ")"


IND = Individual()
HolfpType = Individual | Relation


def order_of_type(ty: HolfpType) -> int:
    """Individuals have order 1; a relation is one above its deepest part."""
    if isinstance(ty, Individual):
        return 1
    return 1 + max(order_of_type(c) for c in ty.components)


def max_width(ty: HolfpType) -> int:
    """Largest relation arity occurring anywhere inside the type (0 for ind)."""
    if isinstance(ty, Individual):
        return 0
    return max(len(ty.components), max(max_width(c) for c in ty.components))


def hom_type(w: int, k: int) -> HolfpType:
    """The width-w homogeneous type of order k: nested w-ary relations."""
    if k < 1:
        raise HolfpError("type order starts at 1")
    ty: HolfpType = IND
    for _ in range(k - 1):
        ty = Relation((ty,) * w)
    return ty


def hom_level(ty: HolfpType, w: int):
    """The order k with ty == hom_type(w, k), or None if inhomogeneous."""
    k = 1
    while isinstance(ty, Relation):
        if len(ty.components) != w or any(c != ty.components[0] for c in ty.components):
            return None
        ty = ty.components[0]
        k += 1
    return k if isinstance(ty, Individual) else None


# ---------------------------------------------------------------------------
# Formulas.  Duals (conjunction, universal quantifier, gfp) are expanded
# at parse time, so consumers see seven constructors.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropAtom:
    prop: str
    var: str


@dataclass(frozen=True)
class EdgeAtom:
    action: str
    source: str
    target: str


@dataclass(frozen=True)
class RelApp:
    rel: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class HNeg:
    sub: "HolfpFormula"


@dataclass(frozen=True)
class HOr:
    left: "HolfpFormula"
    right: "HolfpFormula"


@dataclass(frozen=True)
class HExists:
    var: str
    ty: HolfpType
    body: "HolfpFormula"


@dataclass(frozen=True)
class LfpApp:
    rel: str
    params: tuple[str, ...]
    body: "HolfpFormula"
    args: tuple[str, ...]
    rel_ty: HolfpType | None = field(default=None, compare=False)
    param_tys: tuple | None = field(default=None, compare=False)


HolfpFormula = PropAtom | EdgeAtom | RelApp | HNeg | HOr | HExists | LfpApp


def h_and(a, b):
    return HNeg(HOr(HNeg(a), HNeg(b)))


def h_and_all(parts):
    parts = list(parts)
    if not parts:
        raise HolfpError("empty conjunction")
    out = parts[0]
    for p in parts[1:]:
        out = h_and(out, p)
    return out


def h_implies(a, b):
    return HOr(HNeg(a), b)


def h_iff(a, b):
    return h_and(h_implies(a, b), h_implies(b, a))


def h_forall(var, ty, body):
    return HNeg(HExists(var, ty, HNeg(body)))


def _dualize(f, rel):
    """Negate every application of rel (used to expand gfp into lfp)."""
    if isinstance(f, RelApp):
        return HNeg(f) if f.rel == rel else f
    if isinstance(f, (PropAtom, EdgeAtom)):
        return f
    if isinstance(f, HNeg):
        return HNeg(_dualize(f.sub, rel))
    if isinstance(f, HOr):
        return HOr(_dualize(f.left, rel), _dualize(f.right, rel))
    if isinstance(f, HExists):
        return HExists(f.var, f.ty, _dualize(f.body, rel))
    if isinstance(f, LfpApp):
        return LfpApp(
            f.rel,
            f.params,
            _dualize(f.body, rel),
            f.args,
            f.rel_ty,
            f.param_tys,
        )
    raise HolfpError(f"not a formula: {f!r}")


def gfp_app(rel, params, body, args, rel_ty=None, param_tys=None):
    """Build the expanded form of (gfp (rel, params). body)(args)."""
    dual = HNeg(_dualize(body, rel))
    return HNeg(LfpApp(rel, tuple(params), dual, tuple(args), rel_ty, param_tys))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_H_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<orop>\\/)"
    r"|(?P<andop>/\\)"
    r"|(?P<sym>[(),:.~])"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_']*)"
)

_KEYWORDS = {"exists", "forall", "lfp", "gfp", "ind"}


def _h_tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _H_TOKEN_RE.match(text, pos)
        if m is None:
            raise HolfpError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        out.append((kind, m.group()))
    out.append(("eof", ""))
    return out


class _HParser:
    def __init__(self, text):
        self.toks = _h_tokenize(text)
        self.pos = 0

    def peek(self, ahead=0):
        i = min(self.pos + ahead, len(self.toks) - 1)
        return self.toks[i]

    def next(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        k, v = self.next()
        if k != kind or (value is not None and v != value):
            raise HolfpError(f"expected {value or kind!r}, got {v!r}")
        return v

    def variable(self):
        k, v = self.next()
        if k != "name" or v in _KEYWORDS or not v[0].isupper():
            raise HolfpError(f"expected a variable (uppercase-initial), got {v!r}")
        return v

    def type_(self):
        k, v = self.peek()
        if k == "name" and v == "ind":
            self.next()
            return IND
        if k == "sym" and v == "(":
            self.next()
            comps = [self.type_()]
            while self.peek() == ("sym", ","):
                self.next()
                comps.append(self.type_())
            self.expect("sym", ")")
            return Relation(tuple(comps))
        raise HolfpError(f"expected a type, got {v!r}")

    def formula(self):
        k, v = self.peek()
        if k == "name" and v in ("exists", "forall"):
            return self.binder()
        return self.disjunction()

    def disjunction(self):
        out = self.conjunction()
        while self.peek() == ("orop", "\\/"):
            self.next()
            out = HOr(out, self.conjunction())
        return out

    def conjunction(self):
        out = self.unary()
        while self.peek() == ("andop", "/\\"):
            self.next()
            out = h_and(out, self.unary())
        return out

    def unary(self):
        k, v = self.peek()
        if k == "sym" and v == "~":
            self.next()
            return HNeg(self.unary())
        if k == "name" and v in ("exists", "forall"):
            return self.binder()
        return self.primary()

    def binder(self):
        kw = self.next()[1]
        self.expect("sym", "(")
        var = self.variable()
        self.expect("sym", ":")
        ty = self.type_()
        self.expect("sym", ")")
        self.expect("sym", ".")
        body = self.formula()
        if kw == "forall":
            return h_forall(var, ty, body)
        return HExists(var, ty, body)

    def primary(self):
        k, v = self.peek()
        if k == "sym" and v == "(":
            if self.peek(1)[1] in ("lfp", "gfp"):
                return self.fixpoint()
            self.next()
            out = self.formula()
            self.expect("sym", ")")
            return out
        if k == "name" and v not in _KEYWORDS:
            return self.atom()
        raise HolfpError(f"unexpected token {v!r}")

    def annotated(self):
        var = self.variable()
        ty = None
        if self.peek() == ("sym", ":"):
            self.next()
            ty = self.type_()
        return var, ty

    def fixpoint(self):
        self.expect("sym", "(")
        kw = self.next()[1]
        self.expect("sym", "(")
        rel, rel_ty = self.annotated()
        params, param_tys = [], []
        while self.peek() == ("sym", ","):
            self.next()
            pv, pt = self.annotated()
            params.append(pv)
            param_tys.append(pt)
        self.expect("sym", ")")
        self.expect("sym", ".")
        body = self.formula()
        self.expect("sym", ")")
        self.expect("sym", "(")
        args = [self.variable()]
        while self.peek() == ("sym", ","):
            self.next()
            args.append(self.variable())
        self.expect("sym", ")")
        if not params:
            raise HolfpError("fixpoint needs at least one parameter")
        if len(args) != len(params):
            raise HolfpError(
                f"fixpoint of {len(params)} parameters applied to {len(args)} arguments"
            )
        tys = tuple(param_tys)
        if kw == "gfp":
            return gfp_app(rel, params, body, args, rel_ty, tys)
        return LfpApp(rel, tuple(params), body, tuple(args), rel_ty, tys)

    def atom(self):
        name = self.next()[1]
        self.expect("sym", "(")
        args = [self.variable()]
        while self.peek() == ("sym", ","):
            self.next()
            args.append(self.variable())
        self.expect("sym", ")")
        if name[0].isupper():
            return RelApp(name, tuple(args))
        if len(args) == 1:
            return PropAtom(name, args[0])
        if len(args) == 2:
            return EdgeAtom(name, args[0], args[1])
        raise HolfpError(f"atom {name!r} takes one or two variables, got {len(args)}")


def parse_holfp(text: str) -> HolfpFormula:
    p = _HParser(text)
    out = p.formula()
    if p.peek()[0] != "eof":
        raise HolfpError(f"trailing input at {p.peek()[1]!r}")
    return out


def format_holfp(f: HolfpFormula) -> str:
    if isinstance(f, PropAtom):
        return f"{f.prop}({f.var})"
    if isinstance(f, EdgeAtom):
        return f"{f.action}({f.source},{f.target})"
    if isinstance(f, RelApp):
        return f"{f.rel}({','.join(f.args)})"
    if isinstance(f, HNeg):
        sub = format_holfp(f.sub)
        if isinstance(f.sub, (HOr, HExists)):
            return f"~({sub})"
        return f"~{sub}"
    if isinstance(f, HOr):
        l = format_holfp(f.left)
        r = format_holfp(f.right)
        if isinstance(f.left, HOr):
            l = f"({l})"
        if isinstance(f.right, (HOr, HExists)):
            r = f"({r})"
        return f"{l} \\/ {r}"
    if isinstance(f, HExists):
        return f"exists ({f.var}:{f.ty}). {format_holfp(f.body)}"
    if isinstance(f, LfpApp):
        tys = f.param_tys or (None,) * len(f.params)
        binders = [f.rel if f.rel_ty is None else f"{f.rel}:{f.rel_ty}"]
        for pv, pt in zip(f.params, tys):
            binders.append(pv if pt is None else f"{pv}:{pt}")
        head = f"(lfp ({','.join(binders)}). {format_holfp(f.body)})"
        return f"{head}({','.join(f.args)})"
    raise HolfpError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Well-formedness: single binding, consistent types (inferring fixpoint
# parameter types from usage), positivity of fixpoint variables.
# ---------------------------------------------------------------------------


@dataclass
class HolfpInfo:
    types: dict
    order: int
    free_individuals: tuple[str, ...]
    free_relations: tuple[str, ...]


def _scan(f, scope, bound, free_order, constraints, errors):
    """One pass collecting binders, reference scopes and type constraints."""

    def ref(name):
        if name not in scope and name not in free_order:
            if name in bound:
                errors.append(f"variable {name} used outside its binding")
            else:
                free_order.append(name)

    if isinstance(f, PropAtom):
        ref(f.var)
        constraints.append(("ind", f.var))
    elif isinstance(f, EdgeAtom):
        ref(f.source)
        ref(f.target)
        constraints.append(("ind", f.source))
        constraints.append(("ind", f.target))
    elif isinstance(f, RelApp):
        ref(f.rel)
        for a in f.args:
            ref(a)
        constraints.append(("rel", f.rel, f.args))
    elif isinstance(f, HNeg):
        _scan(f.sub, scope, bound, free_order, constraints, errors)
    elif isinstance(f, HOr):
        _scan(f.left, scope, bound, free_order, constraints, errors)
        _scan(f.right, scope, bound, free_order, constraints, errors)
    elif isinstance(f, HExists):
        if f.var in bound or f.var in free_order:
            errors.append(f"variable {f.var} bound twice")
        bound.add(f.var)
        constraints.append(("ann", f.var, f.ty))
        _scan(f.body, scope | {f.var}, bound, free_order, constraints, errors)
    elif isinstance(f, LfpApp):
        for name in (f.rel, *f.params):
            if name in bound or name in free_order:
                errors.append(f"variable {name} bound twice")
            bound.add(name)
        if f.rel_ty is not None:
            constraints.append(("ann", f.rel, f.rel_ty))
        for pv, pt in zip(f.params, f.param_tys or ()):
            if pt is not None:
                constraints.append(("ann", pv, pt))
        constraints.append(("rel", f.rel, f.params))
        for pv, av in zip(f.params, f.args):
            ref(av)
            constraints.append(("link", pv, av))
        _scan(f.body, scope | {f.rel, *f.params}, bound, free_order, constraints, errors)
    else:
        raise HolfpError(f"not a formula: {f!r}")


def _solve_types(constraints, seed):
    types = dict(seed)

    def put(name, ty, why):
        old = types.get(name)
        if old is None:
            types[name] = ty
            return True
        if old != ty:
            raise HolfpError(f"type mismatch for {name}: {old} vs {ty} ({why})")
        return False

    changed = True
    while changed:
        changed = False
        for c in constraints:
            if c[0] == "ind":
                changed |= put(c[1], IND, "atom position")
            elif c[0] == "ann":
                changed |= put(c[1], c[2], "annotation")
            elif c[0] == "link":
                a, b = c[1], c[2]
                if a in types and b not in types:
                    changed |= put(b, types[a], "fixpoint argument")
                elif b in types and a not in types:
                    changed |= put(a, types[b], "fixpoint argument")
                elif a in types and b in types and types[a] != types[b]:
                    raise HolfpError(
                        f"type mismatch: {a} : {types[a]} vs {b} : {types[b]}"
                    )
            elif c[0] == "rel":
                head, args = c[1], c[2]
                hty = types.get(head)
                if hty is not None:
                    if not isinstance(hty, Relation):
                        raise HolfpError(f"{head} : {hty} is applied like a relation")
                    if len(hty.components) != len(args):
                        raise HolfpError(
                            f"{head} : {hty} applied to {len(args)} arguments"
                        )
                    for comp, a in zip(hty.components, args):
                        changed |= put(a, comp, f"component of {head}")
                elif all(a in types for a in args):
                    changed |= put(
                        head,
                        Relation(tuple(types[a] for a in args)),
                        "application",
                    )
    return types


def _check_positivity(f, rel, parity, errors):
    if isinstance(f, (PropAtom, EdgeAtom)):
        return
    if isinstance(f, RelApp):
        if (f.rel == rel or rel in f.args) and parity:
            errors.append(f"fixpoint variable {rel} used under a negation")
        return
    if isinstance(f, HNeg):
        _check_positivity(f.sub, rel, not parity, errors)
    elif isinstance(f, HOr):
        _check_positivity(f.left, rel, parity, errors)
        _check_positivity(f.right, rel, parity, errors)
    elif isinstance(f, HExists):
        _check_positivity(f.body, rel, parity, errors)
    elif isinstance(f, LfpApp):
        if rel in f.args and parity:
            errors.append(f"fixpoint variable {rel} used under a negation")
        _check_positivity(f.body, rel, parity, errors)


def _walk_lfps(f, fn):
    if isinstance(f, (PropAtom, EdgeAtom, RelApp)):
        return
    if isinstance(f, HNeg):
        _walk_lfps(f.sub, fn)
    elif isinstance(f, HOr):
        _walk_lfps(f.left, fn)
        _walk_lfps(f.right, fn)
    elif isinstance(f, HExists):
        _walk_lfps(f.body, fn)
    elif isinstance(f, LfpApp):
        fn(f)
        _walk_lfps(f.body, fn)


def typecheck_holfp(f: HolfpFormula, free_types=None) -> HolfpInfo:
    """Check well-formedness and return the variable typing and order.

    Fixpoint parameter types may be omitted in the surface syntax; they
    are inferred from atom and application usage.  Each variable must be
    bound at most once, and every occurrence must type-match.
    """
    constraints, errors, free_order = [], [], []
    _scan(f, frozenset(), set(), free_order, constraints, errors)
    if errors:
        raise HolfpError("; ".join(errors))
    pos_errors = []
    _walk_lfps(f, lambda lf: _check_positivity(lf.body, lf.rel, False, pos_errors))
    if pos_errors:
        raise HolfpError("; ".join(pos_errors))
    types = _solve_types(constraints, free_types or {})
    mentioned = set()
    for c in constraints:
        if c[0] == "rel":
            mentioned.add(c[1])
            mentioned.update(c[2])
        elif c[0] == "link":
            mentioned.update((c[1], c[2]))
        else:
            mentioned.add(c[1])
    unknown = sorted(mentioned - set(types))
    if unknown:
        raise HolfpError(f"cannot infer a type for: {', '.join(unknown)}")
    order = max(order_of_type(t) for t in types.values()) if types else 1
    free_ind = tuple(v for v in free_order if isinstance(types[v], Individual))
    free_rel = tuple(v for v in free_order if isinstance(types[v], Relation))
    return HolfpInfo(types, order, free_ind, free_rel)


# ---------------------------------------------------------------------------
# Naive semantics by enumeration
# ---------------------------------------------------------------------------


def _value_key(v):
    if isinstance(v, int):
        return (0, v)
    if isinstance(v, tuple):
        return (1, tuple(_value_key(x) for x in v))
    return (2, tuple(sorted(_value_key(t) for t in v)))


def domain_size(lts: Lts, ty: HolfpType, cap: int = ENUM_CAP):
    """|⟦ty⟧| over lts, or None when it exceeds cap."""
    if isinstance(ty, Individual):
        return lts.n if lts.n <= cap else None
    exponent = 1
    for c in ty.components:
        sz = domain_size(lts, c, cap)
        if sz is None:
            return None
        exponent *= sz
        if exponent > cap.bit_length():
            return None
    size = 2 ** exponent
    return size if size <= cap else None


def enumerate_domain(lts: Lts, ty: HolfpType, cap: int = ENUM_CAP) -> list:
    """All values of a type over lts, in a canonical order."""
    if domain_size(lts, ty, cap) is None:
        raise HolfpError(f"domain too large: |{ty}| exceeds {cap} over {lts.n} states")
    if isinstance(ty, Individual):
        return list(range(lts.n))
    base = sorted(
        iproduct(*(enumerate_domain(lts, c, cap) for c in ty.components)),
        key=lambda t: tuple(_value_key(x) for x in t),
    )
    return [
        frozenset(sub)
        for k in range(len(base) + 1)
        for sub in combinations(base, k)
    ]


def eval_holfp(lts: Lts, alpha, f: HolfpFormula, stats=None, free_types=None) -> bool:
    """Evaluate by direct enumeration; alpha covers the free variables."""
    seed = dict(free_types or {})
    for v, val in (alpha or {}).items():
        ty = _type_of_value(val)
        if ty is not None and v not in seed:
            seed[v] = ty
    info = typecheck_holfp(f, seed)
    missing = [
        v for v in info.free_individuals + info.free_relations if v not in (alpha or {})
    ]
    if missing:
        raise HolfpError(f"assignment misses free variables: {', '.join(missing)}")
    env = dict(alpha or {})
    return _heval(lts, env, f, info.types, stats if stats is not None else {})


def _type_of_value(v):
    """Best-effort shape of a concrete value (for consistency checking)."""
    if isinstance(v, int):
        return IND
    if isinstance(v, frozenset) and v:
        sample = min(v, key=_value_key)
        comps = tuple(_type_of_value(x) for x in sample)
        if any(c is None for c in comps):
            return None
        return Relation(comps)
    return None


def _heval(lts, env, f, types, stats) -> bool:
    if isinstance(f, PropAtom):
        return f.prop in lts.labels[env[f.var]]
    if isinstance(f, EdgeAtom):
        return env[f.target] in lts.succ[f.action][env[f.source]]
    if isinstance(f, RelApp):
        return tuple(env[a] for a in f.args) in env[f.rel]
    if isinstance(f, HNeg):
        return not _heval(lts, env, f.sub, types, stats)
    if isinstance(f, HOr):
        return _heval(lts, env, f.left, types, stats) or _heval(
            lts, env, f.right, types, stats
        )
    if isinstance(f, HExists):
        for v in enumerate_domain(lts, types[f.var]):
            env[f.var] = v
            if _heval(lts, env, f.body, types, stats):
                del env[f.var]
                return True
        env.pop(f.var, None)
        return False
    if isinstance(f, LfpApp):
        dom = list(
            iproduct(*(enumerate_domain(lts, types[p]) for p in f.params))
        )
        cur = frozenset()
        iterations = 0
        for _ in range(len(dom) + 1):
            iterations += 1
            env[f.rel] = cur
            nxt = []
            for t in dom:
                for p, v in zip(f.params, t):
                    env[p] = v
                if _heval(lts, env, f.body, types, stats):
                    nxt.append(t)
            nxt = frozenset(nxt)
            if nxt == cur:
                break
            cur = nxt
        else:
            raise HolfpError("fixpoint failed to converge within |domain|+1 steps")
        for p in f.params:
            env.pop(p, None)
        env.pop(f.rel, None)
        stats["lfp_iterations"] = max(stats.get("lfp_iterations", 0), iterations)
        return tuple(env[a] for a in f.args) in cur
    raise HolfpError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Homogenization: a single width w, orders aligned within every relation
# type.  Narrow relations are padded by repeating their last component;
# low-order components are lifted by wrapping values into singleton
# diagonal relations {(v,...,v)}, chained when orders differ by more.
# Quantifier bodies are guarded so that only canonically-shaped values
# matter; applications coerce their arguments through fresh witnesses.
# ---------------------------------------------------------------------------


def _collect_names(f, out):
    if isinstance(f, PropAtom):
        out.add(f.var)
    elif isinstance(f, EdgeAtom):
        out.update((f.source, f.target))
    elif isinstance(f, RelApp):
        out.add(f.rel)
        out.update(f.args)
    elif isinstance(f, HNeg):
        _collect_names(f.sub, out)
    elif isinstance(f, HOr):
        _collect_names(f.left, out)
        _collect_names(f.right, out)
    elif isinstance(f, HExists):
        out.add(f.var)
        _collect_names(f.body, out)
    elif isinstance(f, LfpApp):
        out.add(f.rel)
        out.update(f.params)
        out.update(f.args)
        _collect_names(f.body, out)


class _Homogenizer:
    def __init__(self, types, w, avoid):
        self.types = types
        self.w = w
        self.avoid = set(avoid)
        self.counter = 0
        self.level = {}

    def fresh(self, base):
        while True:
            self.counter += 1
            name = f"{base}{self.counter}"
            if name not in self.avoid:
                self.avoid.add(name)
                return name

    def target(self, ty):
        """Order of the homogenized image of ty."""
        if isinstance(ty, Individual):
            return 1
        return 1 + max(self.target(c) for c in ty.components)

    # equality and lift-shape guards, all at homogeneous types

    def eq(self, p, q, level):
        w = self.w
        if level == 1:
            z = self.fresh("Z")
            return h_forall(
                z,
                hom_type(w, 2),
                h_implies(RelApp(z, (p,) * w), RelApp(z, (q,) * w)),
            )
        vs = [self.fresh("V") for _ in range(w)]
        body = h_iff(RelApp(p, tuple(vs)), RelApp(q, tuple(vs)))
        for v in reversed(vs):
            body = h_forall(v, hom_type(w, level - 1), body)
        return body

    def exact_lift(self, b, a, a_level):
        """b == {(a,...,a)} at the level above a."""
        w = self.w
        ws = [self.fresh("W") for _ in range(w)]
        same = h_and_all(self.eq(wv, a, a_level) for wv in ws)
        rule = h_implies(RelApp(b, tuple(ws)), same)
        for wv in reversed(ws):
            rule = h_forall(wv, hom_type(w, a_level), rule)
        return h_and(RelApp(b, (a,) * w), rule)

    def lift_image(self, name, steps, level):
        """name is an exact lift iterated `steps` times from level-steps."""
        v = self.fresh("V")
        cond = self.exact_lift(name, v, level - 1)
        if steps > 1:
            cond = h_and(cond, self.lift_image(v, steps - 1, level - 1))
        return HExists(v, hom_type(self.w, level - 1), cond)

    def coerce(self, name, want, mk):
        """Bring a variable to another homogeneous order and continue.

        Raising the order binds a fresh witness constrained to be the
        exact singleton lift; lowering extracts the diagonal member.
        Both directions pin a unique witness at the points that the
        surrounding translation can observe.
        """
        have = self.level[name]
        if have == want:
            return mk(name)
        w = self.w
        if want > have:
            b = self.fresh("L")
            self.level[b] = have + 1
            return HExists(
                b,
                hom_type(w, have + 1),
                h_and(self.exact_lift(b, name, have), self.coerce(b, want, mk)),
            )
        v = self.fresh("U")
        self.level[v] = have - 1
        return HExists(
            v,
            hom_type(w, have - 1),
            h_and(RelApp(name, (v,) * w), self.coerce(v, want, mk)),
        )

    def coerce_many(self, names, want, mk):
        if not names:
            return mk(())
        return self.coerce(
            names[0],
            want,
            lambda v: self.coerce_many(names[1:], want, lambda vs: mk((v,) + vs)),
        )

    def canon_guard(self, name, orig_ty):
        """Entries of name have padded tails and exactly lifted components."""
        if isinstance(orig_ty, Individual):
            return None
        w = self.w
        comps = orig_ty.components
        m = len(comps)
        comp_level = self.target(orig_ty) - 1
        ws = [self.fresh("W") for _ in range(w)]
        conds = []
        for j, c in enumerate(comps):
            steps = comp_level - self.target(c)
            if steps > 0:
                conds.append(self.lift_image(ws[j], steps, comp_level))
        for j in range(m, w):
            conds.append(self.eq(ws[j], ws[m - 1], comp_level))
        if not conds:
            return None
        rule = h_implies(RelApp(name, tuple(ws)), h_and_all(conds))
        for wv in reversed(ws):
            rule = h_forall(wv, hom_type(w, comp_level), rule)
        return rule

    # the rewrite itself

    def go(self, f):
        if isinstance(f, PropAtom):
            return self.coerce(f.var, 1, lambda v: PropAtom(f.prop, v))
        if isinstance(f, EdgeAtom):
            return self.coerce(
                f.source,
                1,
                lambda s: self.coerce(f.target, 1, lambda t: EdgeAtom(f.action, s, t)),
            )
        if isinstance(f, HNeg):
            return HNeg(self.go(f.sub))
        if isinstance(f, HOr):
            return HOr(self.go(f.left), self.go(f.right))
        if isinstance(f, RelApp):
            head_tgt = self.target(self.types[f.rel])
            return self.coerce(
                f.rel,
                head_tgt,
                lambda h: self.coerce_many(
                    tuple(f.args),
                    head_tgt - 1,
                    lambda vs: RelApp(h, vs + (vs[-1],) * (self.w - len(vs))),
                ),
            )
        if isinstance(f, HExists):
            tgt = self.target(f.ty)
            self.level[f.var] = tgt
            guard = self.canon_guard(f.var, f.ty)
            body = self.go(f.body)
            if guard is not None:
                body = h_and(guard, body)
            return HExists(f.var, hom_type(self.w, tgt), body)
        if isinstance(f, LfpApp):
            w = self.w
            rel_ty = self.types[f.rel]
            tgt = self.target(rel_ty)
            comp_level = tgt - 1
            self.level[f.rel] = tgt
            for p in f.params:
                self.level[p] = comp_level
            pads = tuple(self.fresh("P") for _ in range(w - len(f.params)))
            for p in pads:
                self.level[p] = comp_level
            body = self.go(f.body)
            comp_ty = hom_type(w, comp_level)
            return self.coerce_many(
                tuple(f.args),
                comp_level,
                lambda vs: LfpApp(
                    f.rel,
                    f.params + pads,
                    body,
                    vs + (vs[-1],) * (w - len(vs)),
                    hom_type(w, tgt),
                    (comp_ty,) * w,
                ),
            )
        raise HolfpError(f"not a formula: {f!r}")


def homogenize(f: HolfpFormula, min_width: int = 2, free_types=None):
    """Rewrite to a single width and aligned orders; returns (formula, w)."""
    info = typecheck_holfp(f, free_types)
    widths = [max_width(t) for t in info.types.values()]
    w = max([min_width] + widths)
    if all(hom_level(t, w) is not None for t in info.types.values()):
        return f, w
    names = set()
    _collect_names(f, names)
    h = _Homogenizer(info.types, w, names)
    for v in info.free_individuals + info.free_relations:
        h.level[v] = h.target(info.types[v])
    return h.go(f), w


def homogenize_value(value, ty: HolfpType, w: int):
    """The canonical reshaping of a value matching homogenize's types."""
    if isinstance(ty, Individual):
        return value
    tgt = 1 + max(_h_target(c) for c in ty.components)
    out = []
    for tup in value:
        parts = []
        for v, c in zip(tup, ty.components):
            hv = homogenize_value(v, c, w)
            for lvl in range(_h_target(c), tgt - 1):
                hv = frozenset({(hv,) * w})
            parts.append(hv)
        parts += [parts[-1]] * (w - len(tup))
        out.append(tuple(parts))
    return frozenset(out)


def _h_target(ty):
    if isinstance(ty, Individual):
        return 1
    return 1 + max(_h_target(c) for c in ty.components)


# ---------------------------------------------------------------------------
# tptr: relation values as d-ary predicate values
# ---------------------------------------------------------------------------


def tptr(m, k: int, lts: Lts, d: int, w: int | None = None):
    """Embed an order-k homogeneous relation value into the d-ary world.

    Order 2 becomes the ground set m x S^(d-w); higher orders become
    functions sending exactly the embedded members' images to the full
    set and everything else to the empty set.
    """
    if k < 2:
        raise HolfpError("tptr is defined from order 2 upwards")
    if w is None:
        w = _tuple_width(m, k)
        if w is None:
            raise HolfpError("cannot infer the width of an empty value; pass w")
    if d < w:
        raise HolfpError(f"arity {d} below width {w}")
    if k == 2:
        states = range(lts.n)
        return frozenset(
            tuple(t) + rest for t in m for rest in iproduct(states, repeat=d - w)
        )
    images = [tuple(tptr(x, k - 1, lts, d, w) for x in t) for t in m]
    full = frozenset(iproduct(range(lts.n), repeat=d))
    dom = strip_type(emulation_type(w, k - 3))
    tag_m = frozenset(tuple(_value_key(x) for x in t) for t in m)

    def make(prefix):
        if len(prefix) == w:
            for img in images:
                if all(_tptr_same(a, b) for a, b in zip(prefix, img)):
                    return full
            return frozenset()
        return BoxedFun(
            lambda a: make(prefix + (a,)),
            dom,
            ("tptr", k, tag_m, len(prefix), tuple(_tptr_tag(a) for a in prefix)),
        )

    return make(())


def _tuple_width(m, k):
    for t in m:
        return len(t)
    return None


def _tptr_same(a, b):
    if isinstance(a, frozenset) and isinstance(b, frozenset):
        return a == b
    if isinstance(a, BoxedFun) and isinstance(b, BoxedFun):
        return a.tag == b.tag
    return False


def _tptr_tag(a):
    if isinstance(a, frozenset):
        return ("g", a)
    if isinstance(a, BoxedFun):
        return ("b", a.tag)
    return ("x", id(a))


# ---------------------------------------------------------------------------
# trans: compiling homogeneous formulas to the d-ary modal language
# ---------------------------------------------------------------------------


class _SlotsExhausted(HolfpError):
    pass


class _Translator:
    def __init__(self, lts, cfg: QuantifierConfig, types, fo_index):
        self.lts = lts
        self.cfg = cfg
        self.types = types
        self.fo_index = dict(fo_index)
        used = set(fo_index.values())
        self.pool = [i for i in range(1, cfg.free_limit + 1) if i not in used]
        self.sim = phi_bisim(lts, cfg.d - 1, cfg.d)
        self.fix_params = {}
        self.fix_names = set()

    def alloc(self):
        if not self.pool:
            raise _SlotsExhausted(
                "no tuple position left for a bound individual variable"
                f" (free limit {self.cfg.free_limit})"
            )
        return self.pool.pop(0)

    def release(self, i):
        self.pool.insert(0, i)

    def order(self, name):
        return order_of_type(self.types[name])

    def ref_value(self, name):
        """A relation variable in argument position, as a modal formula."""
        if name in self.fix_params:
            # entries of an order-2 fixpoint live on its parameter slots;
            # rewire them onto the leading block
            ps = self.fix_params[name]
            return Subst(index_map({p: j for j, p in enumerate(ps, start=1)}), FixVar(name))
        if name in self.fix_names:
            return FixVar(name)
        return Var(name)

    def go(self, f) -> Formula:
        cfg = self.cfg
        if isinstance(f, PropAtom):
            return Prop(f.prop, self.fo_index[f.var])
        if isinstance(f, EdgeAtom):
            i = self.fo_index[f.source]
            j = self.fo_index[f.target]
            return Diamond(
                f.action, i, Subst(index_map({cfg.d - 1: i, cfg.d: j}), self.sim)
            )
        if isinstance(f, HNeg):
            return Neg(self.go(f.sub))
        if isinstance(f, HOr):
            return Or(self.go(f.left), self.go(f.right))
        if isinstance(f, RelApp):
            if self.order(f.rel) == 2:
                idx = [self.fo_index[a] for a in f.args]
                if f.rel in self.fix_params:
                    ps = self.fix_params[f.rel]
                    return Subst(
                        index_map({p: i for p, i in zip(ps, idx)}), FixVar(f.rel)
                    )
                return Subst(
                    index_map({j: i for j, i in enumerate(idx, start=1)}), Var(f.rel)
                )
            head = FixVar(f.rel) if f.rel in self.fix_names else Var(f.rel)
            return apply_all(head, *(self.ref_value(a) for a in f.args))
        if isinstance(f, HExists):
            k = order_of_type(f.ty)
            if k == 1:
                i = self.alloc()
                self.fo_index[f.var] = i
                body = self.go(f.body)
                del self.fo_index[f.var]
                self.release(i)
                return exists_index(i, cfg, body, self.lts.actions)
            if k == 2:
                return exists_set(cfg, f.var, self.go(f.body), self.lts.actions)
            return exists_ho(cfg, k - 2, f.var, self.go(f.body), self.lts.actions)
        if isinstance(f, LfpApp):
            k = self.order(f.rel)
            if k == 2:
                # A parameter can sit on its argument's own slot when the
                # body never mentions that argument; fresh slots otherwise.
                body_names = set()
                _collect_names(f.body, body_names)
                slots, fresh = [], []
                for p, a in zip(f.params, f.args):
                    i = self.fo_index[a]
                    if a not in body_names and i not in slots:
                        slots.append(i)
                    else:
                        i = self.alloc()
                        slots.append(i)
                        fresh.append(i)
                for p, i in zip(f.params, slots):
                    self.fo_index[p] = i
                self.fix_params[f.rel] = tuple(slots)
                body = self.go(f.body)
                del self.fix_params[f.rel]
                for p in f.params:
                    del self.fo_index[p]
                for i in fresh:
                    self.release(i)
                fix = Fix("mu", f.rel, GROUND, body)
                idx = [self.fo_index[a] for a in f.args]
                return Subst(index_map({p: i for p, i in zip(slots, idx)}), fix)
            self.fix_names.add(f.rel)
            body = self.go(f.body)
            self.fix_names.discard(f.rel)
            param_ty = emulation_type(cfg.w, k - 3)
            lam = body
            for p in reversed(f.params):
                lam = Lam(p, NONE_V, param_ty, lam)
            fix = Fix("mu", f.rel, emulation_type(cfg.w, k - 2), lam)
            return apply_all(fix, *(self.ref_value(a) for a in f.args))
        raise HolfpError(f"not a formula: {f!r}")


def trans(lts: Lts, f: HolfpFormula, w: int | None = None, free_order=None,
          free_types=None):
    """Compile a homogeneous formula; returns (modal formula, config).

    Free individual variables take tuple positions 1..r in first-use
    order (or the order given), and d = 2w + r + 2.  Relation types must
    all be homogeneous of width w.
    """
    info = typecheck_holfp(f, free_types)
    if w is None:
        widths = [max_width(t) for t in info.types.values() if isinstance(t, Relation)]
        w = max(widths) if widths else 1
    bad = [
        f"{v} : {t}" for v, t in info.types.items() if hom_level(t, w) is None
    ]
    if bad:
        raise HolfpError(
            f"not homogeneous at width {w}: " + "; ".join(sorted(bad))
        )
    free = tuple(free_order) if free_order is not None else info.free_individuals
    if set(free) != set(info.free_individuals):
        raise HolfpError("free_order must list exactly the free individual variables")
    r = max(1, len(free))
    if r > 2 * w:
        raise HolfpError(f"too many free variables: need 2w >= r, got w={w}, r={r}")
    binders = _count_individual_binders(f, info.types)
    d_min = 2 * w + r + 2
    for d in range(d_min, d_min + binders + 1):
        cfg = QuantifierConfig(w, r, d)
        tr = _Translator(
            lts, cfg, info.types, {v: i for i, v in enumerate(free, start=1)}
        )
        try:
            return tr.go(f), cfg
        except _SlotsExhausted:
            # more simultaneously-live individual variables than the
            # minimal layout can host; widen the tuple and retry
            continue
    raise HolfpError("individual-variable allocation failed")  # pragma: no cover


def _count_individual_binders(f, types) -> int:
    if isinstance(f, (PropAtom, EdgeAtom, RelApp)):
        return 0
    if isinstance(f, HNeg):
        return _count_individual_binders(f.sub, types)
    if isinstance(f, HOr):
        return _count_individual_binders(f.left, types) + _count_individual_binders(
            f.right, types
        )
    if isinstance(f, HExists):
        mine = 1 if isinstance(types[f.var], Individual) else 0
        return mine + _count_individual_binders(f.body, types)
    if isinstance(f, LfpApp):
        mine = sum(1 for p in f.params if isinstance(types[p], Individual))
        return mine + _count_individual_binders(f.body, types)
    raise HolfpError(f"not a formula: {f!r}")


def capture_pipeline(lts: Lts, f: HolfpFormula):
    """Homogenize, compile, and close over the working set.

    The result is a closed modal formula whose ground value contains a
    tuple iff the query holds of its first r components; the remaining
    positions are immaterial.  Returns (formula, config).
    """
    info = typecheck_holfp(f)
    if info.free_relations:
        raise HolfpError(
            "the pipeline takes queries whose relation variables are all bound"
        )
    r = max(1, len(info.free_individuals))
    widths = [max_width(t) for t in info.types.values() if isinstance(t, Relation)]
    w = max([1, (r + 1) // 2] + widths)
    hf, w = homogenize(f, min_width=w)
    core, cfg = trans(lts, hf, w, free_order=info.free_individuals)
    d = cfg.d
    anchors = {i: d - cfg.r - 2 + i for i in range(1, cfg.r + 1)}
    copy_map = index_map({slot: i for i, slot in anchors.items()})
    # The working set is the whole tuple space: each anchor stratum of it
    # is then a full-prefix product, which is what the set and function
    # quantifier schemas need to range over every prefix set.  The copy
    # substitution on the core makes every tuple carry its own first r
    # states in the anchor block, so membership depends only on those.
    psi = App(Lam(E_NAME, NONE_V, GROUND, Subst(copy_map, core)), Subst(copy_map, tt()))
    return psi, cfg
