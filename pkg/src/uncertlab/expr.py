"""Measurement-model expressions: grammar, parsing, evaluation.

A measurement model maps input quantities to the measurand through a
closed-form expression such as ``"X1*sin(X2) + 2.5"``. The grammar, from
loosest to tightest binding:

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME "(" expr ")" | NAME | "(" expr ")"

``^`` binds tighter than unary minus (``-X1^2`` is ``-(X1^2)``) and is
right-associative. Exponents must not reference variables, and a
non-integer exponent requires a positive base at evaluation time; both
rules keep every supported model single-valued and differentiable.

Variable names must either match ``X`` followed by digits or be listed
explicitly in ``declared``, so a typo cannot silently become a new free
variable. Known unary functions live in the :data:`FUNCTIONS` table,
which is the single registration point for extending the function set
(the derivative entries there are consumed by :mod:`uncertlab.autodiff`).

Two evaluators are provided. :func:`evaluate` is the scalar reference
path: it reports domain violations (log of a non-positive value,
division by zero, fractional power of a negative base) as
:class:`~uncertlab.errors.DomainError` instead of returning NaN.
:func:`evaluate_batch` is the vectorized path used by Monte Carlo
propagation: it evaluates whole sample columns at once and marks failed
evaluations as non-finite entries for the caller to count, because a
raised exception would abort an entire sampling run.

Parsed trees are immutable, so they can be shared and evaluated from
many threads concurrently.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Union

import numpy as np

from .errors import DomainError, EvaluationError, ParseError

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Node",
    "MeasurementModelExpr",
    "FUNCTIONS",
    "parse_model",
    "format_expression",
    "evaluate",
    "evaluate_batch",
]


# ---------------------------------------------------------------------------
# Syntax tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    fn: str  # "neg" or a FUNCTIONS key
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # one of "+", "-", "*", "/", "^"
    lhs: "Node"
    rhs: "Node"


Node = Union[Const, Var, Unary, Binary]


@dataclass(frozen=True)
class MeasurementModelExpr:
    """A parsed measurement model.

    ``variables`` lists every variable referenced by the tree exactly
    once, in first-appearance order.
    """

    root: Node
    variables: tuple[str, ...]


# ---------------------------------------------------------------------------
# Function registry
# ---------------------------------------------------------------------------

class FunctionSpec(NamedTuple):
    """One entry of the function registry.

    scalar/batch are the checked scalar and vectorized implementations;
    d1..d3 evaluate the first three derivatives at a point and are used
    by the forward-mode jet arithmetic; deriv_check, when present,
    rejects points where the value exists but the derivative does not.
    """

    scalar: Callable[[float], float]
    batch: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    d3: Callable[[float], float]
    deriv_check: Optional[Callable[[float], None]] = None


def _scalar_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _scalar_ln(x: float) -> float:
    if x <= 0.0:
        raise DomainError(f"ln of non-positive value {x}")
    return math.log(x)


def _scalar_sqrt(x: float) -> float:
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


def _sqrt_deriv_check(x: float) -> None:
    if x <= 0.0:
        raise DomainError(f"sqrt is not differentiable at {x}")


FUNCTIONS: dict[str, FunctionSpec] = {
    "sin": FunctionSpec(math.sin, np.sin, math.cos,
                        lambda a: -math.sin(a), lambda a: -math.cos(a)),
    "cos": FunctionSpec(math.cos, np.cos, lambda a: -math.sin(a),
                        lambda a: -math.cos(a), math.sin),
    "exp": FunctionSpec(_scalar_exp, np.exp, _scalar_exp, _scalar_exp, _scalar_exp),
    "ln": FunctionSpec(_scalar_ln, np.log, lambda a: 1.0 / a,
                       lambda a: -1.0 / (a * a), lambda a: 2.0 / (a * a * a)),
    "sqrt": FunctionSpec(_scalar_sqrt, np.sqrt, lambda a: 0.5 / math.sqrt(a),
                         lambda a: -0.25 * a ** -1.5, lambda a: 0.375 * a ** -2.5,
                         _sqrt_deriv_check),
}


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)

_VAR_PATTERN = re.compile(r"X\d+\Z")


class _Token(NamedTuple):
    kind: str  # "number", "name", "op", "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            bad = len(text) - len(stripped)
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        if m.lastgroup == "number":
            tokens.append(_Token("number", m.group("number"), m.start("number")))
        elif m.lastgroup == "name":
            tokens.append(_Token("name", m.group("name"), m.start("name")))
        else:
            tokens.append(_Token("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token], declared: frozenset[str]):
        self.tokens = tokens
        self.i = 0
        self.declared = declared
        self.seen_vars: dict[str, None] = {}

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept_op(self, *ops: str) -> Optional[_Token]:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ops:
            return self.advance()
        return None

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}", tok.pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            tok = self.accept_op("+", "-")
            if tok is None:
                return node
            node = Binary(tok.text, node, self.term())

    def term(self) -> Node:
        node = self.unary()
        while True:
            tok = self.accept_op("*", "/")
            if tok is None:
                return node
            node = Binary(tok.text, node, self.unary())

    def unary(self) -> Node:
        if self.accept_op("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.accept_op("^")
        if tok is None:
            return base
        exponent = self.unary()
        if _references_variables(exponent):
            raise ParseError("exponent must be a constant expression", tok.pos)
        return Binary("^", base, exponent)

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.accept_op("("):
                if tok.text not in FUNCTIONS:
                    known = ", ".join(sorted(FUNCTIONS))
                    raise ParseError(
                        f"unknown function {tok.text!r} (known: {known})", tok.pos)
                arg = self.expr()
                self.expect_op(")")
                return Unary(tok.text, arg)
            if _VAR_PATTERN.match(tok.text) or tok.text in self.declared:
                self.seen_vars.setdefault(tok.text)
                return Var(tok.text)
            raise ParseError(
                f"unknown variable {tok.text!r} (use X<digits> or declare it "
                f"in the input list)", tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        shown = tok.text if tok.kind != "end" else "end of input"
        raise ParseError(f"expected a number, name, or '(', got {shown!r}", tok.pos)


def _references_variables(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Unary):
        return _references_variables(node.arg)
    if isinstance(node, Binary):
        return _references_variables(node.lhs) or _references_variables(node.rhs)
    return False


def parse_model(text: str, declared: Iterable[str] = ()) -> MeasurementModelExpr:
    """Parse a measurement-model expression.

    ``declared`` adds variable names beyond the built-in ``X<digits>``
    pattern, typically the names from the run configuration's input
    list. Raises :class:`ParseError` with a character offset on any
    malformed input.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    parser = _Parser(_tokenize(text), frozenset(declared))
    root = parser.parse()
    return MeasurementModelExpr(root, tuple(parser.seen_vars))


# ---------------------------------------------------------------------------
# Formatting (inverse of parsing, up to whitespace)
# ---------------------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _PRECEDENCE[node.op]
    if isinstance(node, Unary) and node.fn == "neg":
        return _PRECEDENCE["neg"]
    return 9


def format_expression(node_or_expr: Union[Node, MeasurementModelExpr]) -> str:
    """Render a tree back to grammar text.

    For parser-produced trees, ``parse_model(format_expression(e))``
    yields a structurally identical tree. Hand-built trees holding
    negative or non-finite constants fall outside that guarantee since
    the grammar spells negation as a prefix operator.
    """
    node = node_or_expr.root if isinstance(node_or_expr, MeasurementModelExpr) else node_or_expr
    return _format(node)


def _format(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.fn == "neg":
            inner = _format(node.arg)
            if _prec(node.arg) < _PRECEDENCE["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{node.fn}({_format(node.arg)})"
    p = _PRECEDENCE[node.op]
    lhs, rhs = _format(node.lhs), _format(node.rhs)
    if node.op == "^":
        # right-associative: parenthesize an equal-precedence left child
        if _prec(node.lhs) <= p:
            lhs = f"({lhs})"
        if _prec(node.rhs) < p:
            rhs = f"({rhs})"
    else:
        # left-associative: parenthesize an equal-precedence right child
        if _prec(node.lhs) < p:
            lhs = f"({lhs})"
        if _prec(node.rhs) <= p:
            rhs = f"({rhs})"
    return f"{lhs} {node.op} {rhs}" if node.op in "+-" else f"{lhs}{node.op}{rhs}"


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------

def evaluate(expr: MeasurementModelExpr, assignment: Mapping[str, float]) -> float:
    """Evaluate the model at one point.

    Standard real arithmetic with IEEE overflow semantics (overflow
    yields inf). Domain violations raise :class:`DomainError`; a
    variable missing from ``assignment`` raises
    :class:`EvaluationError`.
    """
    missing = [v for v in expr.variables if v not in assignment]
    if missing:
        raise EvaluationError(f"no value for variable(s): {', '.join(missing)}")
    return _eval_scalar(expr.root, assignment)


def _eval_scalar(node: Node, env: Mapping[str, float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(env[node.name])
    if isinstance(node, Unary):
        if node.fn == "neg":
            return -_eval_scalar(node.arg, env)
        return FUNCTIONS[node.fn].scalar(_eval_scalar(node.arg, env))
    lhs = _eval_scalar(node.lhs, env)
    if node.op == "^":
        return checked_pow(lhs, constant_exponent(node.rhs))
    rhs = _eval_scalar(node.rhs, env)
    if node.op == "+":
        return lhs + rhs
    if node.op == "-":
        return lhs - rhs
    if node.op == "*":
        return lhs * rhs
    if rhs == 0.0:
        raise DomainError("division by zero")
    return lhs / rhs


def constant_exponent(node: Node) -> float:
    """Evaluate an exponent subtree (guaranteed variable-free by the parser)."""
    return _eval_scalar(node, {})


def checked_pow(base: float, exponent: float) -> float:
    """``base ** exponent`` with the grammar's domain rules applied."""
    if math.isfinite(exponent) and exponent == int(exponent):
        if base == 0.0 and exponent < 0:
            raise DomainError("zero base raised to a negative power")
    elif base <= 0.0:
        raise DomainError(
            f"non-integer power of non-positive base {base}")
    try:
        return math.pow(base, exponent)
    except OverflowError:
        return math.inf
    except ValueError as err:
        raise DomainError(f"power {base} ^ {exponent} undefined") from err


# ---------------------------------------------------------------------------
# Vectorized evaluation
# ---------------------------------------------------------------------------

def evaluate_batch(
    expr: MeasurementModelExpr,
    columns: Mapping[str, np.ndarray],
    n: Optional[int] = None,
) -> np.ndarray:
    """Evaluate the model over whole sample columns at once.

    Returns a float64 array of length ``n`` (inferred from the columns
    when omitted; required for variable-free models). Domain failures do
    not raise: the affected entries come back non-finite and the caller
    decides how to treat them, which is what the Monte Carlo driver
    needs to count rather than abort. A missing column still raises.
    """
    missing = [v for v in expr.variables if v not in columns]
    if missing:
        raise EvaluationError(f"no column for variable(s): {', '.join(missing)}")
    if n is None:
        if not expr.variables:
            raise ValueError("n is required for a variable-free model")
        n = len(columns[expr.variables[0]])
    with np.errstate(all="ignore"):
        out = _eval_batch(expr.root, columns)
    if np.ndim(out) == 0:
        return np.full(n, float(out))
    return np.asarray(out, dtype=np.float64)


def _eval_batch(node: Node, env: Mapping[str, np.ndarray]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return np.asarray(env[node.name], dtype=np.float64)
    if isinstance(node, Unary):
        if node.fn == "neg":
            return -_eval_batch(node.arg, env)
        return FUNCTIONS[node.fn].batch(_eval_batch(node.arg, env))
    lhs = _eval_batch(node.lhs, env)
    if node.op == "^":
        return np.power(lhs, constant_exponent(node.rhs))
    rhs = _eval_batch(node.rhs, env)
    if node.op == "+":
        return lhs + rhs
    if node.op == "-":
        return lhs - rhs
    if node.op == "*":
        return lhs * rhs
    return np.true_divide(lhs, rhs)
