"""Random well-typed formula generation for differential testing.

Generated formulas are closed, of ground type, and well typed by
construction: lambda parameters use variance 0 (legal on either side of a
negation), fixpoint variables use + and are only emitted where the number
of negations crossed since their binder is even.  max_order 0 keeps
everything ground; max_order 1 additionally produces first-order lambdas,
applications and arrow-typed fixpoints.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .syntax import (
    App,
    Arrow,
    Fix,
    FixVar,
    Formula,
    GROUND,
    Ground,
    Lam,
    NONE_V,
    Neg,
    Or,
    PhflType,
    Prop,
    Subst,
    Var,
    Diamond,
    index_map,
)


@dataclass
class GenConfig:
    d: int = 2
    depth: int = 5
    props: tuple = ("p", "q")
    actions: tuple = ("a", "b")
    max_order: int = 1
    subst: bool = True


@dataclass
class _Scope:
    ground_vars: list = field(default_factory=list)
    fn_vars: list = field(default_factory=list)   # (name, ty)
    fix_even: dict = field(default_factory=dict)  # fixvar name -> (parity, ty)
    counter: int = 0

    def fresh(self, base):
        self.counter += 1
        return f"{base}{self.counter}"

    def usable_fix(self, want_ground: bool):
        out = []
        for name, (even, ty) in self.fix_even.items():
            if even and (isinstance(ty, Ground) == want_ground):
                out.append((name, ty))
        return out


def random_formula(rng: random.Random, cfg: GenConfig) -> Formula:
    """A closed ground-type formula."""
    return _ground(rng, cfg, _Scope(), cfg.depth)


def random_fix_formula(rng: random.Random, cfg: GenConfig) -> Fix:
    """A closed ground-type formula whose root is a ground fixpoint."""
    sc = _Scope()
    name = sc.fresh("Z")
    sc.fix_even[name] = (True, GROUND)
    body = _ground(rng, cfg, sc, cfg.depth)
    return Fix(rng.choice(["mu", "nu"]), name, GROUND, body)


def _flip(sc: _Scope) -> _Scope:
    return _Scope(
        ground_vars=sc.ground_vars,
        fn_vars=sc.fn_vars,
        fix_even={k: (not even, ty) for k, (even, ty) in sc.fix_even.items()},
        counter=sc.counter,
    )


def _neutral(sc: _Scope) -> _Scope:
    """Scope for 0-variance argument positions: those are checked under the
    context and its dual, so no outer fixpoint variable may occur there."""
    return _Scope(
        ground_vars=sc.ground_vars,
        fn_vars=sc.fn_vars,
        fix_even={},
        counter=sc.counter,
    )


def _ground(rng, cfg, sc: _Scope, depth) -> Formula:
    ground_fix = sc.usable_fix(want_ground=True)
    if depth <= 0 or rng.random() < 0.25:
        pool = []
        pool += [lambda: Prop(rng.choice(cfg.props), rng.randrange(1, cfg.d + 1))] * 3
        if ground_fix:
            pool.append(lambda: FixVar(rng.choice(ground_fix)[0]))
        if sc.ground_vars:
            pool.append(lambda: Var(rng.choice(sc.ground_vars)))
        return rng.choice(pool)()
    arrow_fix = sc.usable_fix(want_ground=False)
    if arrow_fix and rng.random() < 0.15:
        name, fty = rng.choice(arrow_fix)
        call: Formula = FixVar(name)
        t = fty
        while isinstance(t, Arrow):
            call = App(call, _ground(rng, cfg, _neutral(sc), depth - 1))
            t = t.res
        return call
    k = rng.randrange(12)
    if k in (0, 1):
        return Or(_ground(rng, cfg, sc, depth - 1), _ground(rng, cfg, sc, depth - 1))
    if k in (2, 3):
        return Neg(_ground(rng, cfg, _flip(sc), depth - 1))
    if k in (4, 5):
        return Diamond(
            rng.choice(cfg.actions),
            rng.randrange(1, cfg.d + 1),
            _ground(rng, cfg, sc, depth - 1),
        )
    if k == 6 and cfg.subst:
        n = rng.randrange(1, cfg.d + 1)
        mapping = {
            i: rng.randrange(1, cfg.d + 1)
            for i in rng.sample(range(1, cfg.d + 1), n)
        }
        return Subst(index_map(mapping), _ground(rng, cfg, sc, depth - 1))
    if k in (7, 8):
        name = sc.fresh("Z")
        inner = _Scope(sc.ground_vars, sc.fn_vars, dict(sc.fix_even), sc.counter)
        inner.fix_even[name] = (True, GROUND)
        body = _ground(rng, cfg, inner, depth - 1)
        sc.counter = inner.counter
        return Fix(rng.choice(["mu", "nu"]), name, GROUND, body)
    if cfg.max_order >= 1 and k in (9, 10):
        return _application(rng, cfg, sc, depth - 1)
    return Or(_ground(rng, cfg, sc, depth - 1), _ground(rng, cfg, sc, depth - 1))


def _application(rng, cfg, sc: _Scope, depth) -> Formula:
    arity = rng.choice([1, 1, 2])
    ty: PhflType = GROUND
    for _ in range(arity):
        ty = Arrow(GROUND, NONE_V, ty)
    fn = _function(rng, cfg, sc, depth, ty)
    out = fn
    for _ in range(arity):
        out = App(out, _ground(rng, cfg, _neutral(sc), depth - 1))
    return out


def _function(rng, cfg, sc: _Scope, depth, ty: PhflType) -> Formula:
    matching = [name for name, t in sc.fn_vars if t == ty]
    if matching and rng.random() < 0.3:
        return Var(rng.choice(matching))
    if rng.random() < 0.3:
        # arrow-typed fixpoint whose body re-applies the function variable
        name = sc.fresh("F")
        inner = _Scope(list(sc.ground_vars), list(sc.fn_vars), dict(sc.fix_even), sc.counter)
        inner.fix_even[name] = (True, ty)
        lam = _lambda_chain(rng, cfg, inner, depth, ty, rec=(name, ty))
        sc.counter = inner.counter
        return Fix(rng.choice(["mu", "nu"]), name, ty, lam)
    return _lambda_chain(rng, cfg, sc, depth, ty, rec=None)


def _lambda_chain(rng, cfg, sc: _Scope, depth, ty: PhflType, rec) -> Formula:
    if isinstance(ty, Ground):
        body = _ground(rng, cfg, sc, depth)
        if rec is not None and rng.random() < 0.7:
            name, fty = rec
            call: Formula = FixVar(name)
            t = fty
            while isinstance(t, Arrow):
                call = App(call, _ground(rng, cfg, _neutral(sc), max(depth - 1, 0)))
                t = t.res
            body = Or(body, call)
        return body
    name = sc.fresh("x")
    inner = _Scope(sc.ground_vars + [name], sc.fn_vars, sc.fix_even, sc.counter)
    body = _lambda_chain(rng, cfg, inner, depth, ty.res, rec)
    sc.counter = inner.counter
    return Lam(name, NONE_V, ty.arg, body)
