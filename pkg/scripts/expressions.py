"""Expression grammar for config-supplied functions.

Expressions are strings such as ``"0.4833*(1 + 0.2*sin(2*pi*x))"`` or
``"eta^-3 - 2*eta^-2"``. They are parsed with SymPy against a fixed
namespace and compiled to NumPy callables with ``lambdify``. Anything
outside the namespace (unknown names, attribute access, undefined
functions) is rejected with :class:`~scripts.errors.ExpressionError`.

A field (initial profile, body force) may also be a piecewise-constant
table::

    table:
      edges:  [0.0, 0.5, 1.0]
      values: [0.5131, 100.166]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)
from tokenize import TokenError

from scripts.errors import ExpressionError

# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------

FUNCTIONS: Dict[str, Any] = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "tanh": sp.tanh,
}

_TRANSFORMATIONS = standard_transformations + (convert_xor,)
_ALLOWED_HEADS = {sp.sin, sp.cos, sp.exp, sp.log, sp.Abs, sp.tanh}


def _namespace() -> Dict[str, Any]:
    # parse_expr's auto_number/auto_symbol rewrite into these constructors.
    return {
        "Integer": sp.Integer,
        "Float": sp.Float,
        "Rational": sp.Rational,
        "Symbol": sp.Symbol,
        "Function": sp.Function,
    }


@dataclass(frozen=True)
class Expression:
    """A compiled scalar expression in one or more variables."""

    text: str
    variables: Tuple[str, ...]
    expr: sp.Expr = field(repr=False)
    func: Callable[..., Any] = field(repr=False, compare=False)

    def __call__(self, *args: Any) -> Any:
        if len(args) != len(self.variables):
            raise TypeError(
                f"expression {self.text!r} takes {len(self.variables)} argument(s), got {len(args)}"
            )
        arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
        shape = arrays[0].shape
        with np.errstate(all="ignore"):
            out = self.func(*arrays)
        out = np.asarray(out, dtype=float)
        if shape == ():
            return float(out)
        return np.array(np.broadcast_to(out, shape), dtype=float)

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols


def compile_expression(
    text: Union[str, float, int],
    variables: Sequence[str] = ("x",),
    constants: Optional[Mapping[str, float]] = None,
) -> Expression:
    """Parse *text* in the arithmetic grammar and compile it to NumPy.

    Parameters
    ----------
    text:
        Expression source, or a bare number.
    variables:
        Names the expression may depend on (``x`` for profiles, ``eta`` and
        ``theta`` for state laws).
    constants:
        Named numeric constants substituted at parse time (``M``).
    """
    if isinstance(text, bool):
        raise ExpressionError(f"expected an expression, got boolean {text!r}")
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"expected a non-empty expression string, got {text!r}")
    if "__" in text or _has_attribute_access(text):
        raise ExpressionError(f"attribute access is not allowed in {text!r}")

    symbols = {name: sp.Symbol(name, real=True) for name in variables}
    local: Dict[str, Any] = dict(FUNCTIONS)
    local["pi"] = sp.pi
    for name, value in (constants or {}).items():
        local[name] = sp.Float(value)
    local.update(symbols)

    try:
        expr = parse_expr(
            text,
            local_dict=local,
            global_dict=_namespace(),
            transformations=_TRANSFORMATIONS,
            evaluate=True,
        )
    except (SyntaxError, TokenError, TypeError, ValueError, AttributeError, NameError) as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from exc

    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"{text!r} is not an arithmetic expression")

    undefined = sorted(str(f.func) for f in expr.atoms(AppliedUndef))
    if undefined:
        raise ExpressionError(f"unknown function(s) {undefined} in {text!r}")
    for node in expr.atoms(sp.Function):
        if node.func not in _ALLOWED_HEADS:
            raise ExpressionError(f"function {node.func} not allowed in {text!r}")
    stray = sorted(str(s) for s in expr.free_symbols - set(symbols.values()))
    if stray:
        raise ExpressionError(
            f"unknown name(s) {stray} in {text!r}; allowed variables: {list(variables)}"
        )

    func = sp.lambdify([symbols[name] for name in variables], expr, modules="numpy")
    return Expression(text=text, variables=tuple(variables), expr=expr, func=func)


def _has_attribute_access(text: str) -> bool:
    # A dot is fine inside a number literal ("0.5", "1.e-3"); anything else is attribute access.
    for i, ch in enumerate(text):
        if ch != ".":
            continue
        before = text[i - 1] if i > 0 else " "
        after = text[i + 1] if i + 1 < len(text) else " "
        if not (before.isdigit() or after.isdigit()):
            return True
    return False


# ---------------------------------------------------------------------------
# Piecewise-constant tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstant:
    """Piecewise-constant function on ``[edges[0], edges[-1]]``.

    Evaluation at an interior edge takes the value of the cell to its right.
    Integrals are exact.
    """

    edges: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        if len(self.values) != len(self.edges) - 1 or len(self.values) < 1:
            raise ExpressionError(
                f"table needs len(values) == len(edges) - 1 >= 1, got {len(self.values)} values "
                f"for {len(self.edges)} edges"
            )
        if np.any(np.diff(edges) <= 0.0):
            raise ExpressionError("table edges must be strictly increasing")
        if not np.all(np.isfinite(edges)) or not np.all(np.isfinite(self.values)):
            raise ExpressionError("table entries must be finite")

    @property
    def text(self) -> str:
        return f"table(edges={list(self.edges)}, values={list(self.values)})"

    def _index(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.edges), x, side="right") - 1
        return np.clip(idx, 0, len(self.values) - 1)

    def __call__(self, x: Any) -> Any:
        xa = np.asarray(x, dtype=float)
        out = np.asarray(self.values, dtype=float)[self._index(xa)]
        return float(out) if xa.ndim == 0 else out

    def antiderivative(self, x: Any) -> Any:
        """Return ``∫_{edges[0]}^x f``."""
        xa = np.asarray(x, dtype=float)
        edges = np.asarray(self.edges, dtype=float)
        values = np.asarray(self.values, dtype=float)
        cumulative = np.concatenate(([0.0], np.cumsum(values * np.diff(edges))))
        k = self._index(xa)
        out = cumulative[k] + values[k] * (xa - edges[k])
        return float(out) if xa.ndim == 0 else out

    def integral(self, a: Any, b: Any) -> Any:
        return self.antiderivative(b) - self.antiderivative(a)

    def covers(self, lo: float, hi: float) -> bool:
        return self.edges[0] <= lo and self.edges[-1] >= hi


Field = Union[Expression, PiecewiseConstant]


def compile_field(
    value: Any,
    name: str,
    constants: Optional[Mapping[str, float]] = None,
    variables: Sequence[str] = ("x",),
) -> Field:
    """Compile a config field: number, expression string, or ``{table: ...}``."""
    if isinstance(value, Mapping):
        table = value.get("table")
        if not isinstance(table, Mapping) or set(value) != {"table"}:
            raise ExpressionError(f"{name}: a mapping field must be {{table: {{edges, values}}}}")
        try:
            edges = tuple(float(e) for e in table["edges"])
            values = tuple(float(v) for v in table["values"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ExpressionError(f"{name}: table needs numeric 'edges' and 'values' ({exc})") from exc
        try:
            return PiecewiseConstant(edges=edges, values=values)
        except ExpressionError as exc:
            raise ExpressionError(f"{name}: {exc}") from exc
    try:
        return compile_expression(value, variables=variables, constants=constants)
    except ExpressionError as exc:
        raise ExpressionError(f"{name}: {exc}") from exc
