"""Formula syntax: AST, types, parser, printer, substitution.

Formulas denote sets of state tuples (arity fixed at evaluation time);
component indices in `p@i`, `<a@i>`, `[a@i]` are 1-based.  The core
connectives are disjunction, negation, diamond, index substitution,
lambda, application and fixpoints; `tt`, `ff`, `/\\`, `[a@i]`, `=>` and
`<=>` are expanded by the parser and by the smart constructors below.

Formula nodes compare by identity (evaluation caches key on node ids);
use `alpha_equal` for semantic comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class ParseError(Exception):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

PLUS = "+"
MINUS = "-"
NONE_V = "0"
VARIANCES = (PLUS, MINUS, NONE_V)


@dataclass(frozen=True)
class Ground:
    def __str__(self):
        return "Prop"


@dataclass(frozen=True)
class Arrow:
    arg: "PhflType"
    variance: str
    res: "PhflType"

    def __str__(self):
        if self.arg == Ground() and self.variance == PLUS:
            left = "Prop"
        else:
            sign = {PLUS: "+", MINUS: "-", NONE_V: "0 "}[self.variance]
            left = f"({sign}{self.arg})"
        return f"{left} -> {self.res}"


PhflType = Ground | Arrow
GROUND = Ground()


def type_order(ty: PhflType) -> int:
    if isinstance(ty, Ground):
        return 0
    return max(type_order(ty.arg) + 1, type_order(ty.res))


def arrow(*parts: PhflType, variance: str = PLUS) -> PhflType:
    """Right-nested arrow type with one variance for all arguments."""
    ty = parts[-1]
    for arg in reversed(parts[:-1]):
        ty = Arrow(arg, variance, ty)
    return ty


# ---------------------------------------------------------------------------
# Index maps ({σ} operators)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexMap:
    """A reading map for tuple components: component j is read from
    position `apply(j)`.  Unlisted components read from themselves."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        keys = [k for k, _ in self.entries]
        if len(set(keys)) != len(keys):
            raise ParseError("duplicate index in substitution")
        if any(k < 1 or v < 1 for k, v in self.entries):
            raise ParseError("substitution indices are 1-based")
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    def apply(self, j: int) -> int:
        for k, v in self.entries:
            if k == j:
                return v
        return j

    def as_tuple(self, d: int) -> tuple[int, ...]:
        out = self.as_dict()
        if any(k > d or v > d for k, v in self.entries):
            raise ValueError(f"substitution index exceeds arity {d}")
        return tuple(out.get(j, j) for j in range(1, d + 1))

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)

    def __str__(self):
        return "{" + ",".join(f"{k}->{v}" for k, v in self.entries) + "}"


def index_map(mapping: dict[int, int]) -> IndexMap:
    return IndexMap(tuple((k, v) for k, v in mapping.items() if k != v))


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prop:
    name: str
    i: int


@dataclass(frozen=True, eq=False)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True, eq=False)
class Neg:
    sub: "Formula"


@dataclass(frozen=True, eq=False)
class Diamond:
    action: str
    i: int
    sub: "Formula"


@dataclass(frozen=True, eq=False)
class Subst:
    imap: IndexMap
    sub: "Formula"


@dataclass(frozen=True, eq=False)
class Lam:
    var: str
    variance: str
    ty: PhflType
    body: "Formula"


@dataclass(frozen=True, eq=False)
class Var:
    name: str


@dataclass(frozen=True, eq=False)
class App:
    fn: "Formula"
    arg: "Formula"


@dataclass(frozen=True, eq=False)
class Fix:
    kind: str  # "mu" or "nu"
    var: str
    ty: PhflType
    body: "Formula"


@dataclass(frozen=True, eq=False)
class FixVar:
    name: str


@dataclass(frozen=True, eq=False)
class LtAtom:
    """Strict canonical order between the last two tuple components."""


Formula = (
    Prop | Or | Neg | Diamond | Subst | Lam | Var | App | Fix | FixVar | LtAtom
)


_gensym = 0


def fresh_name(base: str, avoid=()) -> str:
    """A name not in `avoid`: base itself, else base_2, base_3, ..."""
    if base not in avoid:
        return base
    k = 2
    while f"{base}_{k}" in avoid:
        k += 1
    return f"{base}_{k}"


def gensym(base: str) -> str:
    global _gensym
    _gensym += 1
    return f"{base}_{_gensym}"


# Derived forms.  `ff` is an immediately-cycling least fixpoint; the rest
# unfold through negation in the usual way.


def ff() -> Formula:
    x = gensym("ff")
    return Fix("mu", x, GROUND, FixVar(x))


def tt() -> Formula:
    return Neg(ff())


def and_(a: Formula, b: Formula) -> Formula:
    return Neg(Or(Neg(a), Neg(b)))


def or_all(parts, empty=ff) -> Formula:
    parts = list(parts)
    if not parts:
        return empty()
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def and_all(parts, empty=tt) -> Formula:
    parts = list(parts)
    if not parts:
        return empty()
    out = parts[0]
    for p in parts[1:]:
        out = and_(out, p)
    return out


def box(action: str, i: int, f: Formula) -> Formula:
    return Neg(Diamond(action, i, Neg(f)))


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Neg(a), b)


def iff(a: Formula, b: Formula) -> Formula:
    return and_(implies(a, b), implies(b, a))


def apply_all(fn: Formula, *args: Formula) -> Formula:
    for a in args:
        fn = App(fn, a)
    return fn


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------


def free_vars(f: Formula) -> frozenset[str]:
    match f:
        case Var(name) | FixVar(name):
            return frozenset({name})
        case Prop() | LtAtom():
            return frozenset()
        case Or(l, r) | App(l, r):
            return free_vars(l) | free_vars(r)
        case Neg(s) | Diamond(_, _, s) | Subst(_, s):
            return free_vars(s)
        case Lam(var, _, _, body) | Fix(_, var, _, body):
            return free_vars(body) - {var}
    raise TypeError(f"not a formula: {f!r}")


def substitute(f: Formula, mapping: dict[str, Formula]) -> Formula:
    """Simultaneous capture-avoiding substitution for free Var/FixVar names."""
    if not mapping:
        return f
    match f:
        case Var(name) | FixVar(name):
            return mapping.get(name, f)
        case Prop() | LtAtom():
            return f
        case Or(l, r):
            return Or(substitute(l, mapping), substitute(r, mapping))
        case App(l, r):
            return App(substitute(l, mapping), substitute(r, mapping))
        case Neg(s):
            return Neg(substitute(s, mapping))
        case Diamond(a, i, s):
            return Diamond(a, i, substitute(s, mapping))
        case Subst(im, s):
            return Subst(im, substitute(s, mapping))
        case Lam(var, variance, ty, body):
            var, body, inner = _under_binder(var, body, mapping)
            return Lam(var, variance, ty, substitute(body, inner))
        case Fix(kind, var, ty, body):
            var, body, inner = _under_binder(var, body, mapping)
            return Fix(kind, var, ty, substitute(body, inner))
    raise TypeError(f"not a formula: {f!r}")


def _under_binder(var, body, mapping):
    inner = {k: v for k, v in mapping.items() if k != var}
    if not inner:
        return var, body, inner
    clash = set()
    for v in inner.values():
        clash |= free_vars(v)
    if var in clash:
        new = fresh_name(var, clash | free_vars(body) | set(inner))
        body = substitute(body, {var: Var(new) if _binds_lam(body, var) else FixVar(new)})
        # the binder kind is re-attached by the caller; occurrences keep theirs
        var = new
    return var, body, inner


def _binds_lam(body, var):
    # Occurrences of a binder are Var or FixVar nodes with its name; when
    # renaming we must rebuild the same node kind.  Find one occurrence.
    stack = [body]
    while stack:
        f = stack.pop()
        match f:
            case Var(name):
                if name == var:
                    return True
            case FixVar(name):
                if name == var:
                    return False
            case Or(l, r) | App(l, r):
                stack += [l, r]
            case Neg(s) | Diamond(_, _, s) | Subst(_, s):
                stack.append(s)
            case Lam(v, _, _, b) | Fix(_, v, _, b):
                if v != var:
                    stack.append(b)
    return True  # no occurrence: kind is irrelevant


def freshen(f: Formula, avoid: set[str]) -> Formula:
    """Rename every binder so binder names are unique and outside `avoid`."""
    taken = set(avoid) | free_vars(f)

    def go(f, ren):
        match f:
            case Var(name):
                return Var(ren.get(name, name))
            case FixVar(name):
                return FixVar(ren.get(name, name))
            case Prop() | LtAtom():
                return f
            case Or(l, r):
                return Or(go(l, ren), go(r, ren))
            case App(l, r):
                return App(go(l, ren), go(r, ren))
            case Neg(s):
                return Neg(go(s, ren))
            case Diamond(a, i, s):
                return Diamond(a, i, go(s, ren))
            case Subst(im, s):
                return Subst(im, go(s, ren))
            case Lam(var, variance, ty, body):
                new = fresh_name(var, taken)
                taken.add(new)
                return Lam(new, variance, ty, go(body, {**ren, var: new}))
            case Fix(kind, var, ty, body):
                new = fresh_name(var, taken)
                taken.add(new)
                return Fix(kind, new, ty, go(body, {**ren, var: new}))
        raise TypeError(f"not a formula: {f!r}")

    return go(f, {})


def alpha_equal(f: Formula, g: Formula) -> bool:
    def go(f, g, fb, gb):
        match f, g:
            case (Var(a), Var(b)) | (FixVar(a), FixVar(b)):
                return fb.get(a, a) == gb.get(b, b)
            case Prop(pa, ia), Prop(pb, ib):
                return pa == pb and ia == ib
            case LtAtom(), LtAtom():
                return True
            case Or(l1, r1), Or(l2, r2):
                return go(l1, l2, fb, gb) and go(r1, r2, fb, gb)
            case App(l1, r1), App(l2, r2):
                return go(l1, l2, fb, gb) and go(r1, r2, fb, gb)
            case Neg(s1), Neg(s2):
                return go(s1, s2, fb, gb)
            case Diamond(a1, i1, s1), Diamond(a2, i2, s2):
                return a1 == a2 and i1 == i2 and go(s1, s2, fb, gb)
            case Subst(m1, s1), Subst(m2, s2):
                return m1 == m2 and go(s1, s2, fb, gb)
            case Lam(v1, var1, t1, b1), Lam(v2, var2, t2, b2):
                if var1 != var2 or t1 != t2:
                    return False
                mark = f"!{len(fb)}"
                return go(b1, b2, {**fb, v1: mark}, {**gb, v2: mark})
            case Fix(k1, v1, t1, b1), Fix(k2, v2, t2, b2):
                if k1 != k2 or t1 != t2:
                    return False
                mark = f"!{len(fb)}"
                return go(b1, b2, {**fb, v1: mark}, {**gb, v2: mark})
        return False

    return go(f, g, {}, {})


def unfold_fixpoint(f: Formula) -> Formula:
    """One unfolding step: the body with the fixpoint substituted for its
    variable."""
    if not isinstance(f, Fix):
        raise ValueError("not a fixpoint formula")
    return substitute(f.body, {f.var: f})


def validate_indices(f: Formula, d: int) -> None:
    """Check that every component index in `f` lies in 1..d."""

    def bad(i):
        return not 1 <= i <= d

    stack = [f]
    while stack:
        g = stack.pop()
        match g:
            case Prop(name, i):
                if bad(i):
                    raise ParseError(f"index out of range: {name}@{i} at arity {d}")
            case Diamond(a, i, s):
                if bad(i):
                    raise ParseError(f"index out of range: <{a}@{i}> at arity {d}")
                stack.append(s)
            case Subst(im, s):
                if any(bad(k) or bad(v) for k, v in im.entries):
                    raise ParseError(f"index out of range: {im} at arity {d}")
                stack.append(s)
            case Or(l, r) | App(l, r):
                stack += [l, r]
            case Neg(s):
                stack.append(s)
            case Lam(_, _, _, b) | Fix(_, _, _, b):
                stack.append(b)
            case _:
                pass


def beta_reduce(f: Formula) -> Formula:
    """Full beta normalization (terminates on simply typed terms)."""

    def go(f):
        match f:
            case App(fn, arg):
                fn = go(fn)
                arg = go(arg)
                if isinstance(fn, Lam):
                    return go(substitute(fn.body, {fn.var: arg}))
                return App(fn, arg)
            case Or(l, r):
                return Or(go(l), go(r))
            case Neg(s):
                return Neg(go(s))
            case Diamond(a, i, s):
                return Diamond(a, i, go(s))
            case Subst(im, s):
                return Subst(im, go(s))
            case Lam(v, variance, ty, b):
                return Lam(v, variance, ty, go(b))
            case Fix(k, v, ty, b):
                return Fix(k, v, ty, go(b))
            case _:
                return f

    return go(f)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+|\#[^\n]*)
    | (?P<iff><=>)
    | (?P<implies>=>)
    | (?P<arrow>->)
    | (?P<or>\\/)
    | (?P<and>/\\)
    | (?P<lam>\\)
    | (?P<int>\d+)
    | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
    | (?P<sym>[(){}<>\[\].:,@~+\-])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"mu", "nu", "tt", "ff", "lt", "Prop"}


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        out.append((kind, m.group()))
    out.append(("eof", ""))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.scopes: list[dict[str, tuple[str, str]]] = []
        self.used: set[str] = set()
        self.binder_names: set[str] = set()

    # token plumbing

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def at(self, kind, value=None):
        k, v = self.peek()
        return k == kind and (value is None or v == value)

    def eat(self, kind, value=None):
        if self.at(kind, value):
            return self.next()[1]
        return None

    def expect(self, kind, value=None):
        tok = self.eat(kind, value)
        if tok is None:
            k, v = self.peek()
            want = value if value is not None else kind
            raise ParseError(f"expected {want!r}, got {v!r}")
        return tok

    # scoping

    def bind(self, name, kind):
        fresh = fresh_name(name, self.used)
        self.used.add(fresh)
        self.binder_names.add(fresh)
        self.scopes.append({name: (fresh, kind)})
        return fresh

    def unbind(self):
        self.scopes.pop()

    def resolve(self, name):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        if name in self.binder_names:
            raise ParseError(
                f"name {name!r} occurs both bound and free; rename one of them"
            )
        self.used.add(name)
        return name, "lam"

    # types

    def parse_type(self):
        arg, variance, explicit = self.tyitem()
        if self.eat("arrow"):
            return Arrow(arg, variance, self.parse_type())
        if explicit:
            raise ParseError("variance annotation without a following ->")
        return arg

    def tyitem(self):
        if self.eat("name", "Prop"):
            return GROUND, PLUS, False
        if self.eat("sym", "("):
            variance, explicit = self.variance_mark()
            ty = self.parse_type()
            self.expect("sym", ")")
            return ty, variance, explicit
        k, v = self.peek()
        raise ParseError(f"expected a type, got {v!r}")

    def variance_mark(self):
        if self.eat("sym", "+"):
            return PLUS, True
        if self.eat("sym", "-"):
            return MINUS, True
        if self.at("int") and self.peek()[1] == "0":
            self.next()
            return NONE_V, True
        return PLUS, False

    # formulas

    def parse_formula(self):
        f = self.parse_implies()
        while self.eat("iff"):
            f = iff(f, self.parse_implies())
        return f

    def parse_implies(self):
        f = self.parse_or()
        if self.eat("implies"):
            return implies(f, self.parse_implies())
        return f

    def parse_or(self):
        f = self.parse_and()
        while self.eat("or"):
            f = Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_app()
        while self.eat("and"):
            f = and_(f, self.parse_app())
        return f

    def parse_app(self):
        f = self.parse_prefix()
        while self.starts_prefix():
            f = App(f, self.parse_prefix())
        return f

    def starts_prefix(self):
        k, v = self.peek()
        if k in ("lam", "int"):
            return k == "lam"
        if k == "name":
            return True
        if k == "sym":
            return v in ("~", "<", "[", "{", "(")
        return False

    def parse_prefix(self):
        if self.eat("sym", "~"):
            return Neg(self.parse_prefix())
        if self.eat("sym", "<"):
            act = self.expect("name")
            self.expect("sym", "@")
            i = int(self.expect("int"))
            self.expect("sym", ">")
            return Diamond(act, i, self.parse_prefix())
        if self.eat("sym", "["):
            act = self.expect("name")
            self.expect("sym", "@")
            i = int(self.expect("int"))
            self.expect("sym", "]")
            return box(act, i, self.parse_prefix())
        if self.at("sym", "{"):
            imap = self.parse_imap()
            return Subst(imap, self.parse_prefix())
        if self.eat("lam"):
            return self.parse_lam()
        if self.at("name", "mu") or self.at("name", "nu"):
            return self.parse_fix()
        return self.parse_atom()

    def parse_imap(self):
        self.expect("sym", "{")
        entries = {}
        if not self.at("sym", "}"):
            while True:
                k = int(self.expect("int"))
                self.expect("arrow")
                v = int(self.expect("int"))
                if k in entries:
                    raise ParseError(f"duplicate index {k} in substitution")
                entries[k] = v
                if not self.eat("sym", ","):
                    break
        self.expect("sym", "}")
        return index_map(entries)

    def parse_lam(self):
        self.expect("sym", "(")
        name = self.expect("name")
        self.expect("sym", ":")
        variance, _ = self.variance_mark()
        ty = self.parse_type()
        self.expect("sym", ")")
        self.expect("sym", ".")
        fresh = self.bind(name, "lam")
        body = self.parse_formula()
        self.unbind()
        return Lam(fresh, variance, ty, body)

    def parse_fix(self):
        kind = self.expect("name")
        self.expect("sym", "(")
        name = self.expect("name")
        self.expect("sym", ":")
        ty = self.parse_type()
        self.expect("sym", ")")
        self.expect("sym", ".")
        fresh = self.bind(name, "fix")
        body = self.parse_formula()
        self.unbind()
        return Fix(kind, fresh, ty, body)

    def parse_atom(self):
        if self.eat("name", "tt"):
            return tt()
        if self.eat("name", "ff"):
            return ff()
        if self.eat("name", "lt"):
            return LtAtom()
        if self.eat("sym", "("):
            f = self.parse_formula()
            self.expect("sym", ")")
            return f
        name = self.eat("name")
        if name is not None:
            if name in _KEYWORDS:
                raise ParseError(f"{name!r} cannot be used as a name here")
            if self.eat("sym", "@"):
                return Prop(name, int(self.expect("int")))
            resolved, kind = self.resolve(name)
            return FixVar(resolved) if kind == "fix" else Var(resolved)
        k, v = self.peek()
        raise ParseError(f"expected a formula, got {v!r}")


def parse_formula(text: str, d: int | None = None) -> Formula:
    p = _Parser(text)
    f = p.parse_formula()
    if not p.at("eof"):
        raise ParseError(f"trailing input at {p.peek()[1]!r}")
    if d is not None:
        validate_indices(f, d)
    return f


def parse_type(text: str) -> PhflType:
    p = _Parser(text)
    ty = p.parse_type()
    if not p.at("eof"):
        raise ParseError(f"trailing input at {p.peek()[1]!r}")
    return ty


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

# precedence levels: 0 iff, 1 implies, 2 or, 3 and, 4 application,
# 5 prefix operators, 6 atoms


def _is_ff(f) -> bool:
    return (
        isinstance(f, Fix)
        and f.kind == "mu"
        and f.ty == GROUND
        and isinstance(f.body, FixVar)
        and f.body.name == f.var
    )


def format_formula(f: Formula) -> str:
    return _fmt(f, 0)


def _paren(s: str, need: bool) -> str:
    return f"({s})" if need else s


def _fmt(f: Formula, level: int) -> str:
    match f:
        case Prop(name, i):
            return f"{name}@{i}"
        case Var(name) | FixVar(name):
            return name
        case LtAtom():
            return "lt"
        case Fix() if _is_ff(f):
            return "ff"
        case Neg(s) if _is_ff(s):
            return "tt"
        case Neg(Or(Neg(a), Neg(b))):
            return _paren(f"{_fmt(a, 4)} /\\ {_fmt(b, 4)}", level > 3)
        case Neg(Diamond(act, i, Neg(s))):
            return _paren(f"[{act}@{i}] {_fmt(s, 5)}", level > 5)
        case Neg(s):
            return _paren(f"~{_fmt(s, 5)}", level > 5)
        case Or(Neg(a), b):
            return _paren(f"{_fmt(a, 2)} => {_fmt(b, 1)}", level > 1)
        case Or(a, b):
            return _paren(f"{_fmt(a, 2)} \\/ {_fmt(b, 3)}", level > 2)
        case Diamond(act, i, s):
            return _paren(f"<{act}@{i}> {_fmt(s, 5)}", level > 5)
        case Subst(imap, s):
            return _paren(f"{imap} {_fmt(s, 5)}", level > 5)
        case App(fn, arg):
            return _paren(f"{_fmt(fn, 4)} {_fmt(arg, 5)}", level > 4)
        case Lam(var, variance, ty, body):
            sign = "" if variance == PLUS else ("-" if variance == MINUS else "0 ")
            return _paren(f"\\({var}:{sign}{ty}). {_fmt(body, 0)}", level > 0)
        case Fix(kind, var, ty, body):
            return _paren(f"{kind} ({var}:{ty}). {_fmt(body, 0)}", level > 0)
    raise TypeError(f"not a formula: {f!r}")
