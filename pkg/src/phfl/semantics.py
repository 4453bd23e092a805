"""Denotational semantics over a finite LTS at a fixed arity d.

Ground values are frozensets of d-tuples of states.  Function values come
in several representations:

* FullFn: an extensional table over a fully enumerated argument lattice
  (the "full" strategy; only feasible for tiny state spaces and type
  order <= 1).
* ClosureFn: a lambda body paired with its captured environment (the
  "demand" strategy).  Closures are interned so that re-evaluating the
  same lambda under an equivalent environment yields the same object.
* TableFun / PartialApp: a fixpoint at arrow type, backed by a worklist
  solver whose table is keyed by the arguments actually demanded.
* BoxedFun: an arbitrary host function wrapped as a value (used by
  oracles and by the relation-to-value translation).

The demand strategy keys fixpoint tables semantically: every application
site registers its argument as a "probe" for the argument's type shape,
and a function argument is keyed by the tuple of its results on the
registered probes.  If a new probe shows up for a shape whose probe list
already fed a key, the evaluation restarts with the enlarged probe list
(probe lists and interned closures survive restarts, so the process
converges: the probe lists grow toward a separating family, which is
finite because the semantic lattices are).
"""

from __future__ import annotations

import sys
from collections import deque
from dataclasses import dataclass
from itertools import combinations, product as iproduct

from .lts import Lts, canonical_order
from .syntax import (
    App,
    Arrow,
    Diamond,
    Fix,
    FixVar,
    Formula,
    GROUND,
    Ground,
    Lam,
    LtAtom,
    Neg,
    NONE_V,
    Or,
    PhflType,
    PLUS,
    Prop,
    Subst,
    Var,
    format_formula,
    free_vars,
    type_order,
)


class EvalError(Exception):
    pass


class _Restart(Exception):
    """Internal: probe list grew for an already-consumed shape."""


@dataclass
class EvalConfig:
    full_threshold: int = 9          # max |S|^d the full strategy enumerates
    enum_threshold: int = 1 << 16    # max size of any enumerated value space
    iteration_cap: int = 500_000     # total fixpoint recomputation budget
    restart_cap: int = 10_000        # max demand-strategy restarts


# ---------------------------------------------------------------------------
# Type shapes (types with variances erased), used to group probes
# ---------------------------------------------------------------------------


def strip_type(ty: PhflType):
    if isinstance(ty, Ground):
        return "o"
    return (strip_type(ty.arg), strip_type(ty.res))


def emulation_type(w: int, k: int) -> PhflType:
    """The set-emulation type family: level 0 is the ground type, level k+1
    takes w arguments of level k (all at variance 0) to ground.  The order
    of level k is exactly k."""
    if w < 1 or k < 0:
        raise ValueError("width must be >= 1 and level >= 0")
    ty: PhflType = GROUND
    for _ in range(k):
        arg = ty
        ty = GROUND
        for _ in range(w):
            ty = Arrow(arg, NONE_V, ty)
    return ty


def uncurry_type(ty: PhflType):
    """Argument types and the final result of an arrow chain."""
    args = []
    while isinstance(ty, Arrow):
        args.append(ty.arg)
        ty = ty.res
    return args, ty


# ---------------------------------------------------------------------------
# Function value representations
# ---------------------------------------------------------------------------


class FullFn:
    """Extensional function: a finite table keyed by argument values."""

    __slots__ = ("table", "dom_s", "_key")

    def __init__(self, items, dom_s=None):
        self.table = dict(items)
        if dom_s is None and self.table:
            k = next(iter(self.table))
            dom_s = "o" if isinstance(k, frozenset) else k.dom_s_as_arg()
        self.dom_s = dom_s
        self._key = tuple(
            sorted((value_key(k), value_key(v)) for k, v in self.table.items())
        )

    def dom_s_as_arg(self):
        # the shape of *this* value when it appears as someone's argument
        res = next(iter(self.table.values())) if self.table else None
        res_s = "o" if isinstance(res, frozenset) or res is None else res.dom_s_as_arg()
        return (self.dom_s, res_s)

    def __eq__(self, other):
        return isinstance(other, FullFn) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"FullFn({len(self.table)} entries)"


def value_key(v):
    """A canonical hashable key for full-strategy values."""
    if isinstance(v, frozenset):
        return ("g", tuple(sorted(v)))
    if isinstance(v, FullFn):
        return ("f", v._key)
    raise EvalError(f"value has no canonical key: {v!r}")


class ClosureFn:
    __slots__ = ("node", "env", "sem", "uid")

    def __init__(self, node, env, sem, uid):
        self.node = node
        self.env = env
        self.sem = sem
        self.uid = uid

    def __repr__(self):
        return f"ClosureFn#{self.uid}(\\{self.node.var})"


class TableFun:
    __slots__ = ("solver",)

    def __init__(self, solver):
        self.solver = solver

    def __repr__(self):
        return f"TableFun({format_formula(FixVar(self.solver.node.var))})"


class PartialApp:
    __slots__ = ("table", "args")

    def __init__(self, table, args):
        self.table = table
        self.args = args


class BoxedFun:
    """Host-level function wrapped as a value.  `tag` is its identity for
    fingerprinting; `dom` is the shape of its argument."""

    __slots__ = ("fn", "dom", "tag")

    def __init__(self, fn, dom, tag):
        self.fn = fn
        self.dom = strip_type(dom) if isinstance(dom, (Ground, Arrow)) else dom
        self.tag = tag

    def __repr__(self):
        return f"BoxedFun({self.tag!r})"


Value = object  # frozenset | FullFn | ClosureFn | TableFun | PartialApp | BoxedFun


# ---------------------------------------------------------------------------


class Semantics:
    """An evaluation session for one LTS at one arity."""

    def __init__(self, lts: Lts, d: int, config: EvalConfig | None = None):
        if d < 1:
            raise EvalError("arity must be at least 1")
        self.lts = lts
        self.d = d
        self.config = config or EvalConfig()
        self.tuples = sorted(iproduct(range(lts.n), repeat=d))
        self.full = frozenset(self.tuples)
        # demand-session state
        self._memo = {}
        self._reads: list[dict] = []
        self._gen = 0
        self._intern = {}
        self._uid = 0
        self._probes: dict[object, list] = {}
        self._probe_fps: dict[object, set] = {}
        self._consumed: set = set()
        self._agenda = deque()
        self._agenda_set = set()
        self._eval_stack = []
        self._driving = 0
        self._in_eval = 0
        self._iterations = 0
        self._pinned = []
        self._fv_cache = {}
        self._lt_cache = None
        self._prop_cache = {}
        if sys.getrecursionlimit() < 100_000:
            sys.setrecursionlimit(100_000)

    # -- ground primitives --------------------------------------------------

    def prop_set(self, name: str, i: int) -> frozenset:
        self._check_index(i)
        key = (name, i)
        if key not in self._prop_cache:
            if name not in self.lts.props:
                raise EvalError(f"undeclared proposition {name!r}")
            self._prop_cache[key] = frozenset(
                t for t in self.tuples if name in self.lts.labels[t[i - 1]]
            )
        return self._prop_cache[key]

    def diamond(self, action: str, i: int, x: frozenset) -> frozenset:
        self._check_index(i)
        if action not in self.lts.actions:
            raise EvalError(f"undeclared action {action!r}")
        pred = self.lts.pred[action]
        out = set()
        for t in x:
            for s in pred[t[i - 1]]:
                out.add(t[: i - 1] + (s,) + t[i:])
        return frozenset(out)

    def subst_apply(self, imap, x: frozenset) -> frozenset:
        try:
            sigma = imap.as_tuple(self.d)
        except ValueError as e:
            raise EvalError(str(e))
        return frozenset(
            t for t in self.tuples if tuple(t[j - 1] for j in sigma) in x
        )

    def lt_set(self) -> frozenset:
        if self.d < 2:
            raise EvalError("the order atom needs arity >= 2")
        if self._lt_cache is None:
            order = canonical_order(self.lts)
            rank = [order.state_rank(s) for s in range(self.lts.n)]
            self._lt_cache = frozenset(
                t for t in self.tuples if rank[t[-2]] < rank[t[-1]]
            )
        return self._lt_cache

    def complement(self, x: frozenset) -> frozenset:
        return self.full - x

    def _check_index(self, i):
        if not 1 <= i <= self.d:
            raise EvalError(f"index {i} out of range at arity {self.d}")

    # -- value spaces ---------------------------------------------------------

    def enumerate_values(self, ty: PhflType) -> list:
        """Every value of a type, in a canonical order."""
        if isinstance(ty, Ground):
            if len(self.tuples) > self.config.full_threshold:
                raise EvalError(
                    f"lattice too large: |S|^d = {len(self.tuples)} exceeds"
                    f" the full-strategy bound {self.config.full_threshold}"
                )
            return [
                frozenset(c)
                for k in range(len(self.tuples) + 1)
                for c in combinations(self.tuples, k)
            ]
        dom = self.enumerate_values(ty.arg)
        cod = self.enumerate_values(ty.res)
        count = len(cod) ** len(dom)
        if count > self.config.enum_threshold:
            raise EvalError(
                f"lattice too large: {len(cod)}^{len(dom)} functions at {ty}"
            )
        out = []
        for choice in iproduct(range(len(cod)), repeat=len(dom)):
            out.append(
                FullFn(
                    ((dom[i], cod[choice[i]]) for i in range(len(dom))),
                    dom_s=strip_type(ty.arg),
                )
            )
        return out

    def bottom(self, ty: PhflType) -> Value:
        if isinstance(ty, Ground):
            return frozenset()
        b = self.bottom(ty.res)
        return FullFn(
            ((v, b) for v in self.enumerate_values(ty.arg)),
            dom_s=strip_type(ty.arg),
        )

    def top(self, ty: PhflType) -> Value:
        if isinstance(ty, Ground):
            return self.full
        t = self.top(ty.res)
        return FullFn(
            ((v, t) for v in self.enumerate_values(ty.arg)),
            dom_s=strip_type(ty.arg),
        )

    def leq(self, x: Value, y: Value, ty: PhflType) -> bool:
        """The variance-twisted order: pointwise for +, reversed pointwise
        for -, equality for 0."""
        if isinstance(ty, Ground):
            if not isinstance(x, frozenset) or not isinstance(y, frozenset):
                raise EvalError("ground comparison on non-ground values")
            return x <= y
        if not isinstance(x, FullFn) or not isinstance(y, FullFn):
            raise EvalError("function comparison requires enumerated values")
        if set(x.table) != set(y.table):
            raise EvalError("function comparison on mismatched domains")
        if ty.variance == NONE_V:
            return x == y
        for k, xv in x.table.items():
            yv = y.table[k]
            a, b = (xv, yv) if ty.variance == PLUS else (yv, xv)
            if not self.leq(a, b, ty.res):
                return False
        return True

    # -- public evaluation ----------------------------------------------------

    def eval(self, f: Formula, env=None, strategy: str = "demand") -> Value:
        env = {k: self._normalize(v) for k, v in (env or {}).items()}
        self._pinned.append(f)
        if strategy == "full":
            return self._ev_full(f, env)
        if strategy != "demand":
            raise EvalError(f"unknown strategy {strategy!r}")
        self._in_eval += 1
        try:
            for _ in range(self.config.restart_cap):
                try:
                    # Re-derive until a pass changes no solver entry: a value
                    # read mid-convergence is re-read once its entry settles.
                    while True:
                        gen = self._gen
                        val = self._ev(f, env)
                        if self._gen == gen:
                            return val
                except _Restart:
                    self._clear_session()
            raise EvalError("restart cap exceeded; probe discovery diverged")
        finally:
            self._in_eval -= 1

    def check(self, f: Formula, tup, env=None, strategy: str = "demand") -> bool:
        tup = tuple(tup)
        if len(tup) != self.d:
            raise EvalError(f"tuple arity {len(tup)} != {self.d}")
        v = self.eval(f, env, strategy)
        if not isinstance(v, frozenset):
            raise EvalError("check needs a ground formula")
        return tup in v

    def _normalize(self, v):
        if isinstance(v, (set, list)):
            return frozenset(tuple(t) for t in v)
        return v

    def _clear_session(self):
        self._memo.clear()
        self._reads.clear()
        self._consumed.clear()
        self._agenda.clear()
        self._agenda_set.clear()
        self._eval_stack.clear()
        self._driving = 0
        self._iterations = 0

    # -- full strategy ----------------------------------------------------------

    def _ev_full(self, f: Formula, env) -> Value:
        match f:
            case Prop(name, i):
                return self.prop_set(name, i)
            case LtAtom():
                return self.lt_set()
            case Or(l, r):
                return self._as_ground(self._ev_full(l, env)) | self._as_ground(
                    self._ev_full(r, env)
                )
            case Neg(s):
                return self.complement(self._as_ground(self._ev_full(s, env)))
            case Diamond(a, i, s):
                return self.diamond(a, i, self._as_ground(self._ev_full(s, env)))
            case Subst(im, s):
                return self.subst_apply(im, self._as_ground(self._ev_full(s, env)))
            case Var(name) | FixVar(name):
                if name not in env:
                    raise EvalError(f"unbound variable {name}")
                return env[name]
            case Lam(var, _, ty, body):
                if type_order(ty) > 0:
                    # a function-typed parameter puts the formula at order >= 2
                    raise EvalError("full strategy supports type order <= 1")
                dom = self.enumerate_values(ty)
                return FullFn(
                    ((v, self._ev_full(body, {**env, var: v})) for v in dom),
                    dom_s=strip_type(ty),
                )
            case App(fn, arg):
                fv = self._ev_full(fn, env)
                av = self._ev_full(arg, env)
                return self.apply_value(fv, av)
            case Fix(kind, var, ty, body):
                if type_order(ty) > 1:
                    raise EvalError("full strategy supports type order <= 1")
                cur = self.bottom(ty) if kind == "mu" else self.top(ty)
                for _ in range(self.config.iteration_cap):
                    nxt = self._ev_full(body, {**env, var: cur})
                    if nxt == cur:
                        return cur
                    cur = nxt
                raise EvalError("fixpoint iteration cap exceeded (full strategy)")
        raise EvalError(f"not a formula: {f!r}")

    def _as_ground(self, v) -> frozenset:
        if not isinstance(v, frozenset):
            raise EvalError(f"expected a ground value, got {v!r}")
        return v

    # -- demand strategy ---------------------------------------------------------

    def _free(self, f: Formula) -> frozenset:
        fv = self._fv_cache.get(id(f))
        if fv is None:
            fv = free_vars(f)
            self._fv_cache[id(f)] = fv
        return fv

    def fingerprint(self, v) -> tuple:
        if isinstance(v, frozenset):
            return ("g", v)
        if isinstance(v, ClosureFn):
            return ("c", v.uid)
        if isinstance(v, TableFun):
            return ("t", id(v.solver), v.solver.version)
        if isinstance(v, PartialApp):
            return ("p", self.fingerprint(v.table)) + tuple(
                self.fingerprint(a) for a in v.args
            )
        if isinstance(v, FullFn):
            return ("f", v._key)
        if isinstance(v, BoxedFun):
            return ("b", v.tag)
        raise EvalError(f"cannot fingerprint {v!r}")

    def _env_fp(self, f: Formula, env) -> tuple:
        items = []
        for name in sorted(self._free(f)):
            if name in env:
                items.append((name, self.fingerprint(env[name])))
        return tuple(items)

    def _dom_shape(self, fn):
        if isinstance(fn, ClosureFn):
            return strip_type(fn.node.ty)
        if isinstance(fn, TableFun):
            return fn.solver.arg_shapes[0]
        if isinstance(fn, PartialApp):
            return fn.table.solver.arg_shapes[len(fn.args)]
        if isinstance(fn, BoxedFun):
            return fn.dom
        if isinstance(fn, FullFn):
            return fn.dom_s
        return None

    def _register_probe(self, shape, v):
        if shape is None:
            return
        fps = self._probe_fps.setdefault(shape, set())
        fp = self.fingerprint(v)
        if fp in fps:
            return
        fps.add(fp)
        self._probes.setdefault(shape, []).append(v)
        if shape in self._consumed:
            raise _Restart(shape)

    def skey(self, v) -> object:
        """Semantic key: ground values key as themselves; functions by
        their results on the registered probes for their argument shape."""
        if isinstance(v, frozenset):
            return v
        shape = self._dom_shape(v)
        if shape is None:
            raise EvalError(f"cannot key {v!r}")
        self._consumed.add(shape)
        probes = tuple(self._probes.get(shape, ()))
        return ("F",) + tuple(self.skey(self.apply_value(v, p)) for p in probes)

    def apply_value(self, fn: Value, arg: Value) -> Value:
        """Apply a function value.  Outside an eval call, probe growth is
        absorbed by retrying (fresh table entries stay sound)."""
        if self._in_eval:
            return self._apply(fn, arg)
        while True:
            try:
                return self._apply(fn, arg)
            except _Restart:
                self._consumed.clear()

    def _apply(self, fn, arg):
        self._register_probe(self._dom_shape(fn), arg)
        if isinstance(fn, ClosureFn):
            return self._ev(fn.node.body, {**fn.env, fn.node.var: arg})
        if isinstance(fn, TableFun):
            if fn.solver.arity == 1:
                return fn.solver.demand((arg,))
            return PartialApp(fn, (arg,))
        if isinstance(fn, PartialApp):
            args = fn.args + (arg,)
            if len(args) == fn.table.solver.arity:
                return fn.table.solver.demand(args)
            return PartialApp(fn.table, args)
        if isinstance(fn, BoxedFun):
            return fn.fn(arg)
        if isinstance(fn, FullFn):
            try:
                return fn.table[arg]
            except (KeyError, TypeError):
                raise EvalError("argument outside the enumerated domain")
        raise EvalError(f"cannot apply non-function value {fn!r}")

    def _ev(self, f: Formula, env) -> Value:
        if isinstance(f, (Var, FixVar)):
            if f.name not in env:
                raise EvalError(f"unbound variable {f.name}")
            return env[f.name]
        key = (id(f), self._env_fp(f, env))
        hit = self._memo.get(key)
        if hit is not None:
            val, reads = hit
            if all(e.version == v for e, v in reads.values()):
                if reads:
                    self._absorb_reads(reads)
                return val
        self._reads.append({})
        try:
            match f:
                case Prop(name, i):
                    val = self.prop_set(name, i)
                case LtAtom():
                    val = self.lt_set()
                case Or(l, r):
                    val = self._as_ground(self._ev(l, env)) | self._as_ground(
                        self._ev(r, env)
                    )
                case Neg(s):
                    val = self.complement(self._as_ground(self._ev(s, env)))
                case Diamond(a, i, s):
                    val = self.diamond(a, i, self._as_ground(self._ev(s, env)))
                case Subst(im, s):
                    val = self.subst_apply(im, self._as_ground(self._ev(s, env)))
                case Lam():
                    val = self._close(f, env)
                case App(fn, arg):
                    val = self.apply_value(self._ev(fn, env), self._ev(arg, env))
                case Fix(_, _, ty, _):
                    if isinstance(ty, Ground):
                        val = self._ground_fix(f, env)
                    else:
                        val = TableFun(_FixSolver(self, f, env))
                case _:
                    raise EvalError(f"not a formula: {f!r}")
        finally:
            reads = self._reads.pop()
        self._memo[key] = (val, reads)
        if reads:
            self._absorb_reads(reads)
        return val

    def _absorb_reads(self, reads):
        """Propagate solver-entry reads to the enclosing memo frame and keep
        the entry being computed subscribed to them."""
        if self._eval_stack:
            top = self._eval_stack[-1]
            for e, _ in reads.values():
                e.dependents.add(top)
        if self._reads:
            frame = self._reads[-1]
            for k, (e, v) in reads.items():
                prev = frame.get(k)
                if prev is None or v < prev[1]:
                    frame[k] = (e, v)

    def _record_read(self, entry):
        if self._reads:
            frame = self._reads[-1]
            k = id(entry)
            prev = frame.get(k)
            if prev is None or entry.version < prev[1]:
                frame[k] = (entry, entry.version)

    def _close(self, node: Lam, env) -> ClosureFn:
        captured = {n: env[n] for n in self._free(node) if n in env}
        key = (
            id(node),
            tuple(sorted((n, self.fingerprint(v)) for n, v in captured.items())),
        )
        c = self._intern.get(key)
        if c is None:
            self._uid += 1
            c = ClosureFn(node, captured, self, self._uid)
            self._intern[key] = c
        return c

    def _ground_fix(self, f: Fix, env) -> frozenset:
        cur = frozenset() if f.kind == "mu" else self.full
        for _ in range(len(self.tuples) + 2):
            nxt = self._as_ground(self._ev(f.body, {**env, f.var: cur}))
            if nxt == cur:
                return cur
            cur = nxt
        raise EvalError(
            "ground fixpoint did not converge (non-monotone body?):"
            f" {format_formula(f)}"
        )

    def _count_iteration(self):
        self._iterations += 1
        if self._iterations > self.config.iteration_cap:
            raise EvalError(
                f"fixpoint iteration cap {self.config.iteration_cap} exceeded;"
                " raise EvalConfig.iteration_cap if the instance is genuinely"
                " this large"
            )

    def _drive(self):
        """Run the agenda to quiescence.  Reentrant: entries whose own
        computation is in flight are deferred to the enclosing invocation."""
        self._driving += 1
        deferred = []
        try:
            while self._agenda:
                solver, key = self._agenda.popleft()
                self._agenda_set.discard((id(solver), key))
                if any(s is solver and k == key for s, k in self._eval_stack):
                    deferred.append((solver, key))
                    continue
                self._count_iteration()
                entry = solver.entries[key]
                self._eval_stack.append((solver, key))
                try:
                    val = solver.compute(entry)
                finally:
                    self._eval_stack.pop()
                if val != entry.value:
                    entry.value = val
                    entry.version += 1
                    solver.version += 1
                    self._gen += 1
                    for dep in entry.dependents:
                        self._schedule(*dep)
        finally:
            self._driving -= 1
            for item in deferred:
                self._schedule(*item)

    def _schedule(self, solver, key):
        k = (id(solver), key)
        if k not in self._agenda_set:
            self._agenda_set.add(k)
            self._agenda.append((solver, key))

    # -- generic fixpoint solving and uniform-value enumeration -----------------

    def lfp_solve(self, functional, ty: PhflType, direction: str = "least") -> Value:
        """Kleene iteration of a host-level functional over ⟦ty⟧, starting
        from bottom (least) or top (greatest), converging by value equality.
        Requires enumerable values (ground or full tables)."""
        if direction not in ("least", "greatest"):
            raise EvalError(f"unknown direction {direction!r}")
        cur = self.bottom(ty) if direction == "least" else self.top(ty)
        for _ in range(self.config.iteration_cap):
            nxt = functional(cur)
            if nxt == cur:
                return cur
            cur = nxt
        raise EvalError("fixpoint iteration cap exceeded (lfp_solve)")

    def enumerate_uniform(self, w: int, level: int) -> list:
        """The uniform value family: level 0 is all ground values, level 1
        all w-argument first-order functions, level k >= 2 the functions
        determined by a set of uniform level-(k-1) argument tuples."""
        if level <= 1:
            return self.enumerate_values(emulation_type(w, level))
        args = self.enumerate_uniform(w, level - 1)
        tuples = list(iproduct(args, repeat=w))
        if 2 ** len(tuples) > self.config.enum_threshold:
            raise EvalError(
                f"lattice too large: 2^{len(tuples)} uniform values at level {level}"
            )
        out = []
        for mask in range(2 ** len(tuples)):
            chosen = frozenset(i for i in range(len(tuples)) if mask >> i & 1)
            out.append(self._uniform_fn(w, level, tuples, chosen))
        return out

    def _uniform_fn(self, w, level, arg_tuples, chosen_indexes) -> Value:
        shape = strip_type(emulation_type(w, level - 1))
        sem = self

        def make(prefix):
            if len(prefix) == w:
                idx = None
                for i, t in enumerate(arg_tuples):
                    if all(sem._same_value(a, b) for a, b in zip(t, prefix)):
                        idx = i
                        break
                if idx is None:
                    raise EvalError("argument outside the uniform universe")
                return sem.full if idx in chosen_indexes else frozenset()
            return BoxedFun(
                lambda a, p=prefix: make(p + (a,)),
                shape,
                ("uniform", w, level, tuple(chosen_indexes), prefix_tag(prefix)),
            )

        def prefix_tag(prefix):
            return tuple(sem.fingerprint(a) for a in prefix)

        return make(())

    def _same_value(self, a, b) -> bool:
        """Semantic equality for uniform-universe members (ground equality,
        extensional equality for enumerated functions, fingerprint equality
        otherwise)."""
        if isinstance(a, frozenset) and isinstance(b, frozenset):
            return a == b
        if isinstance(a, FullFn) and isinstance(b, FullFn):
            return a == b
        return self.fingerprint(a) == self.fingerprint(b)

    def is_uniform(self, f: Value, w: int, k: int) -> bool:
        """True iff f maps every tuple of uniform level-(k-1) arguments to
        the empty or the full ground set."""
        if k < 2:
            raise EvalError("uniformity is defined for levels >= 2")
        args = self.enumerate_uniform(w, k - 1)
        for tup in iproduct(args, repeat=w):
            v = f
            for a in tup:
                v = self.apply_value(v, a)
            if not isinstance(v, frozenset) or (v and v != self.full):
                return False
        return True

    # -- serialization -----------------------------------------------------------

    def serialize_value(self, v) -> object:
        if isinstance(v, frozenset):
            return {"set": [list(t) for t in sorted(v)]}
        if isinstance(v, FullFn):
            return {
                "function": [
                    [self.serialize_value(k), self.serialize_value(r)]
                    for k, r in sorted(
                        v.table.items(), key=lambda kv: value_key(kv[0])
                    )
                ]
            }
        if isinstance(v, TableFun):
            return {
                "table": [
                    self.serialize_value(e.value)
                    for e in v.solver.entries.values()
                ]
            }
        if isinstance(v, ClosureFn):
            return {"closure": format_formula(v.node)}
        if isinstance(v, PartialApp):
            return {"partial": len(v.args)}
        if isinstance(v, BoxedFun):
            return {"opaque": repr(v.tag)}
        raise EvalError(f"cannot serialize {v!r}")


@dataclass
class _Entry:
    value: frozenset
    rep: tuple
    dependents: set
    version: int = 0


class _FixSolver:
    """Worklist solver for an arrow-typed fixpoint, keyed by the semantic
    keys of demanded argument tuples."""

    def __init__(self, sem: Semantics, node: Fix, env):
        arg_tys, res = uncurry_type(node.ty)
        if not isinstance(res, Ground):
            raise EvalError("fixpoint type must end in the ground type")
        self.sem = sem
        self.node = node
        self.env = {n: env[n] for n in sem._free(node) if n in env}
        self.arg_shapes = [strip_type(t) for t in arg_tys]
        self.arity = len(arg_tys)
        self.version = 0
        self.entries: dict = {}

    def demand(self, args: tuple) -> frozenset:
        key = tuple(self.sem.skey(a) for a in args)
        entry = self.entries.get(key)
        if entry is None:
            bottom = frozenset() if self.node.kind == "mu" else self.sem.full
            entry = _Entry(value=bottom, rep=args, dependents=set())
            self.entries[key] = entry
            self.sem._schedule(self, key)
        if self.sem._eval_stack:
            entry.dependents.add(self.sem._eval_stack[-1])
        if not self.sem._driving:
            self.sem._drive()
        elif self.sem._eval_stack and self.sem._eval_stack[-1][0] is not self:
            # A foreign fixpoint is reading this one.  Positivity confines
            # negation-guarded reads to self-contained fixpoints, so driving
            # them to convergence first keeps the outer iteration least.
            self.sem._drive()
        self.sem._record_read(entry)
        return entry.value

    def compute(self, entry: _Entry) -> frozenset:
        # Recomputation is driven by the dependents sets, so the read frames
        # of the caller must not absorb what this entry's derivation touches.
        table = TableFun(self)
        sem = self.sem
        saved = sem._reads
        sem._reads = []
        try:
            v = sem._ev(self.node.body, {**self.env, self.node.var: table})
            for a in entry.rep:
                v = sem.apply_value(v, a)
            return sem._as_ground(v)
        finally:
            sem._reads = saved


# ---------------------------------------------------------------------------
# Module-level conveniences
# ---------------------------------------------------------------------------


def eval_formula(lts, d, f, env=None, strategy="demand", config=None) -> Value:
    return Semantics(lts, d, config).eval(f, env, strategy)


def check_tuple(lts, tup, f, env=None, strategy="demand", config=None) -> bool:
    sem = Semantics(lts, len(tuple(tup)), config)
    return sem.check(f, tup, env, strategy)
