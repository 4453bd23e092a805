"""Model checking for polyadic higher-order fixpoint formulas.

The package evaluates formulas that speak about d-tuples of states of a
finite labelled transition system, reduces them to the 1-ary case over
product systems, builds reusable formula schemas (bisimilarity, trace
equivalence, quantifier emulation), and compiles relational fixpoint
queries down onto the tuple engine.
"""

from .holfp import (
    HolfpError,
    capture_pipeline,
    eval_holfp,
    format_holfp,
    homogenize,
    parse_holfp,
    trans,
    typecheck_holfp,
)
from .lts import (
    Lts,
    LtsError,
    bisim_partition,
    make_lts,
    parse_lts,
    quotient,
    reachable,
    serialize_lts,
)
from .macros import (
    MacroError,
    QuantifierConfig,
    exists_ho,
    exists_index,
    exists_set,
    good_set,
    phi_bisim,
    phi_fte,
)
from .randgen import GenConfig, random_fix_formula, random_formula
from .reduction import (
    ReductionError,
    check_via_product,
    d_product,
    hat_translate,
)
from .semantics import (
    EvalConfig,
    EvalError,
    Semantics,
    check_tuple,
)
from .syntax import (
    ParseError,
    alpha_equal,
    format_formula,
    parse_formula,
)
from .typecheck import TypeCheckError, infer_type, order_of_formula

__version__ = "0.1.0"

__all__ = [
    "EvalConfig",
    "EvalError",
    "GenConfig",
    "HolfpError",
    "Lts",
    "LtsError",
    "MacroError",
    "ParseError",
    "QuantifierConfig",
    "ReductionError",
    "Semantics",
    "TypeCheckError",
    "alpha_equal",
    "bisim_partition",
    "capture_pipeline",
    "check_tuple",
    "check_via_product",
    "d_product",
    "eval_holfp",
    "exists_ho",
    "exists_index",
    "exists_set",
    "format_formula",
    "format_holfp",
    "good_set",
    "hat_translate",
    "homogenize",
    "infer_type",
    "make_lts",
    "order_of_formula",
    "parse_formula",
    "parse_holfp",
    "parse_lts",
    "phi_bisim",
    "phi_fte",
    "quotient",
    "random_fix_formula",
    "random_formula",
    "reachable",
    "serialize_lts",
    "trans",
    "typecheck_holfp",
    "__version__",
]
