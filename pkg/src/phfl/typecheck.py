"""Variance-aware typing.

A context maps variable names to (type, variance) pairs.  Negation checks
its operand under the dual context (+ and - swapped); the three
application rules are keyed by the variance of the function's argument:
covariant arguments check under the current context, contravariant ones
under the dual, and 0-variance arguments must check under both.  Lambda
variables may be used at variance + or 0, fixpoint variables only at +.
"""

from __future__ import annotations

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
    MINUS,
    Neg,
    NONE_V,
    Or,
    PLUS,
    PhflType,
    Prop,
    Subst,
    Var,
    format_formula,
    type_order,
)

Context = dict[str, tuple[PhflType, str]]


class TypeCheckError(Exception):
    def __init__(self, message: str, formula: Formula | None = None):
        if formula is not None:
            message = f"{message}\n  in: {format_formula(formula)}"
        super().__init__(message)


_FLIP = {PLUS: MINUS, MINUS: PLUS, NONE_V: NONE_V}


def dual_context(ctx: Context) -> Context:
    return {name: (ty, _FLIP[v]) for name, (ty, v) in ctx.items()}


def _normalize_env(env) -> Context:
    out: Context = {}
    for name, entry in (env or {}).items():
        if isinstance(entry, (Ground, Arrow)):
            out[name] = (entry, PLUS)
        else:
            ty, v = entry
            out[name] = (ty, v)
    return out


class _Checker:
    def __init__(self, d: int | None):
        self.d = d
        self.orders: list[int] = []

    def infer(self, f: Formula, ctx: Context) -> PhflType:
        ty = self._infer(f, ctx)
        self.orders.append(type_order(ty))
        return ty

    def _index(self, i: int, f: Formula):
        if i < 1 or (self.d is not None and i > self.d):
            raise TypeCheckError(f"index out of range: {i}", f)

    def _ground(self, sub: Formula, ctx: Context, what: str, parent: Formula):
        ty = self.infer(sub, ctx)
        if ty != GROUND:
            raise TypeCheckError(f"{what} needs a ground operand, got {ty}", parent)

    def _infer(self, f: Formula, ctx: Context) -> PhflType:
        match f:
            case Prop(_, i):
                self._index(i, f)
                return GROUND
            case LtAtom():
                return GROUND
            case Or(l, r):
                self._ground(l, ctx, "disjunction", f)
                self._ground(r, ctx, "disjunction", f)
                return GROUND
            case Neg(s):
                self._ground(s, dual_context(ctx), "negation", f)
                return GROUND
            case Diamond(_, i, s):
                self._index(i, f)
                self._ground(s, ctx, "modality", f)
                return GROUND
            case Subst(imap, s):
                for k, v in imap.entries:
                    self._index(k, f)
                    self._index(v, f)
                self._ground(s, ctx, "substitution", f)
                return GROUND
            case Var(name):
                if name not in ctx:
                    raise TypeCheckError(f"unbound variable {name}", f)
                ty, v = ctx[name]
                if v == MINUS:
                    raise TypeCheckError(
                        f"variable {name} used at contravariant polarity", f
                    )
                return ty
            case FixVar(name):
                if name not in ctx:
                    raise TypeCheckError(f"unbound fixpoint variable {name}", f)
                ty, v = ctx[name]
                if v != PLUS:
                    raise TypeCheckError(
                        f"fixpoint variable {name} occurs under an odd number"
                        " of negations",
                        f,
                    )
                return ty
            case Lam(var, variance, ty, body):
                body_ty = self.infer(body, {**ctx, var: (ty, variance)})
                return Arrow(ty, variance, body_ty)
            case App(fn, arg):
                fn_ty = self.infer(fn, ctx)
                if not isinstance(fn_ty, Arrow):
                    raise TypeCheckError(
                        f"ill-typed application: operator has type {fn_ty}", f
                    )
                if fn_ty.variance == PLUS:
                    arg_ty = self.infer(arg, ctx)
                elif fn_ty.variance == MINUS:
                    arg_ty = self.infer(arg, dual_context(ctx))
                else:
                    arg_ty = self.infer(arg, ctx)
                    dual_ty = self.infer(arg, dual_context(ctx))
                    if dual_ty != arg_ty:
                        raise TypeCheckError("0-variance argument typing diverged", f)
                if arg_ty != fn_ty.arg:
                    raise TypeCheckError(
                        f"argument type mismatch: expected {fn_ty.arg},"
                        f" got {arg_ty}",
                        f,
                    )
                return fn_ty.res
            case Fix(_, var, ty, body):
                body_ty = self.infer(body, {**ctx, var: (ty, PLUS)})
                if body_ty != ty:
                    raise TypeCheckError(
                        f"fixpoint body has type {body_ty}, declared {ty}", f
                    )
                return ty
        raise TypeCheckError(f"not a formula: {f!r}")


def infer_type(f: Formula, d: int | None = None, env=None) -> PhflType:
    """The type of `f`, or raise TypeCheckError.  `env` supplies types
    (optionally with variances) for free variables."""
    return _Checker(d).infer(f, _normalize_env(env))


def order_of_formula(f: Formula, d: int | None = None, env=None) -> int:
    """Maximal type order over all subformulas of a well-typed formula."""
    checker = _Checker(d)
    checker.infer(f, _normalize_env(env))
    return max(checker.orders)
