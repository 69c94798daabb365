"""Exact derivatives of measurement models by forward-mode jet arithmetic.

Taylor-series propagation needs the gradient, the full Hessian, and the
mixed third derivatives d^3 f / dx_i dx_j^2 of the model at the input
means. Rather than differentiate symbolically (which blows up on nested
products) or numerically (which trades one tolerance problem for
another), each evaluation here runs on truncated bivariate Taylor
polynomials: a :class:`Jet2` carries all series coefficients in two
perturbations e1, e2 up to total degree 3, and the arithmetic below
pushes them through the expression tree exactly.

Seeding x_i = mu_i + e1 and x_j = mu_j + e2 makes the output
coefficient of e1^a e2^b equal to

    d^(a+b) f / (dx_i^a dx_j^b) / (a! b!),

so one tree evaluation per index pair (i, j), i < j, recovers every
derivative the propagation formulas consume. All results are exact up
to floating-point rounding; there is no step-size parameter anywhere.

Domain rules match the scalar evaluator, with one addition: points
where the model's value exists but a derivative does not (sqrt at zero)
raise :class:`~uncertlab.errors.DomainError`, since a truncated series
is meaningless there.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, EvaluationError
from .expr import (
    FUNCTIONS,
    Binary,
    Const,
    MeasurementModelExpr,
    Node,
    Unary,
    Var,
    constant_exponent,
    evaluate,
)

__all__ = ["Jet2", "DerivativeBundle", "derivatives"]

_ORDER = 4  # coefficients c[a, b] kept for total degree a + b <= 3


class Jet2:
    """Truncated Taylor polynomial in two perturbations, total degree <= 3.

    ``c[a, b]`` is the coefficient of e1^a e2^b; slots with a + b > 3
    stay zero. Supports +, -, *, / between jets, composition with the
    registry functions, and powers with constant exponent. Real
    measurement models reference at most a handful of inputs, so the
    fixed 4x4 layout costs nothing and keeps indexing transparent.
    """

    __slots__ = ("c",)

    def __init__(self, c: np.ndarray):
        self.c = c

    @classmethod
    def constant(cls, value: float) -> "Jet2":
        c = np.zeros((_ORDER, _ORDER))
        c[0, 0] = value
        return cls(c)

    @classmethod
    def variable(cls, value: float, slot: int) -> "Jet2":
        """A seeded input: ``value + e1`` (slot 0) or ``value + e2`` (slot 1)."""
        c = np.zeros((_ORDER, _ORDER))
        c[0, 0] = value
        if slot == 0:
            c[1, 0] = 1.0
        else:
            c[0, 1] = 1.0
        return cls(c)

    def __neg__(self) -> "Jet2":
        return Jet2(-self.c)

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.c + other.c)

    def __sub__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.c - other.c)

    def __mul__(self, other: "Jet2") -> "Jet2":
        x, y = self.c, other.c
        out = np.zeros((_ORDER, _ORDER))
        for a in range(_ORDER):
            for b in range(_ORDER - a):
                s = 0.0
                for p in range(a + 1):
                    for q in range(b + 1):
                        s += x[p, q] * y[a - p, b - q]
                out[a, b] = s
        return Jet2(out)

    def __truediv__(self, other: "Jet2") -> "Jet2":
        v = other.c[0, 0]
        if v == 0.0:
            raise DomainError("division by zero")
        recip = _compose(other, 1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4)
        return self * recip


def _compose(u: Jet2, g0: float, g1: float, g2: float, g3: float) -> Jet2:
    """g(u) for scalar g with derivatives g1..g3 at the value of u.

    Writing u = a + p with p the zero-constant perturbation part,
    g(u) truncates to g(a) + g1 p + (g2/2) p^2 + (g3/6) p^3.
    """
    p = Jet2(u.c.copy())
    p.c[0, 0] = 0.0
    p2 = p * p
    p3 = p2 * p
    out = g1 * p.c + (g2 / 2.0) * p2.c + (g3 / 6.0) * p3.c
    out[0, 0] += g0
    return Jet2(out)


def _int_pow(u: Jet2, n: int) -> Jet2:
    """u**n for n >= 0 by square-and-multiply on the polynomial itself.

    Staying in polynomial arithmetic keeps integer powers exact at any
    base, including zero, where the series-composition route would
    divide by the base value.
    """
    result = Jet2.constant(1.0)
    base = u
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _pow_const(u: Jet2, exponent: float) -> Jet2:
    a = u.c[0, 0]
    if math.isfinite(exponent) and exponent == int(exponent):
        n = int(exponent)
        if n >= 0:
            return _int_pow(u, n)
        if a == 0.0:
            raise DomainError("zero base raised to a negative power")
        return Jet2.constant(1.0) / _int_pow(u, -n)
    if a <= 0.0:
        raise DomainError(f"non-integer power of non-positive base {a}")
    g0 = a**exponent
    g1 = exponent * a ** (exponent - 1.0)
    g2 = exponent * (exponent - 1.0) * a ** (exponent - 2.0)
    g3 = exponent * (exponent - 1.0) * (exponent - 2.0) * a ** (exponent - 3.0)
    return _compose(u, g0, g1, g2, g3)


def _apply_function(fn: str, u: Jet2) -> Jet2:
    spec = FUNCTIONS[fn]
    a = u.c[0, 0]
    g0 = spec.scalar(a)
    if spec.deriv_check is not None:
        spec.deriv_check(a)
    return _compose(u, g0, spec.d1(a), spec.d2(a), spec.d3(a))


def _eval_jet(node: Node, env: Mapping[str, Jet2]) -> Jet2:
    if isinstance(node, Const):
        return Jet2.constant(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        if node.fn == "neg":
            return -_eval_jet(node.arg, env)
        return _apply_function(node.fn, _eval_jet(node.arg, env))
    if node.op == "^":
        return _pow_const(_eval_jet(node.lhs, env), constant_exponent(node.rhs))
    lhs = _eval_jet(node.lhs, env)
    rhs = _eval_jet(node.rhs, env)
    if node.op == "+":
        return lhs + rhs
    if node.op == "-":
        return lhs - rhs
    if node.op == "*":
        return lhs * rhs
    return lhs / rhs


@dataclass(frozen=True)
class DerivativeBundle:
    """Model derivatives at a point, indexed by a fixed variable order.

    ``third_mixed[i, j]`` holds d^3 f / (dx_i dx_j^2); its diagonal is
    the pure third derivative. That is the exact layout the
    second-order variance correction sums over. Fields beyond the
    requested derivative order are None.
    """

    value: float
    grad: np.ndarray                      # shape (N,)
    hess: Optional[np.ndarray]            # shape (N, N), symmetric
    third_mixed: Optional[np.ndarray]     # shape (N, N)


def derivatives(
    expr: MeasurementModelExpr,
    at: Mapping[str, float],
    order: int = 3,
    variables: Optional[Sequence[str]] = None,
) -> DerivativeBundle:
    """Compute value and derivatives of ``expr`` up to ``order`` (1, 2, or 3).

    ``variables`` fixes the variable order of the output arrays and
    defaults to the expression's own first-appearance order; callers
    that carry a declared input list (possibly a superset of the
    variables actually referenced) pass it here, and unreferenced
    inputs get exact zero derivatives. Raises :class:`DomainError`
    where the model or one of the needed derivatives is undefined.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2, or 3, got {order}")
    names = tuple(variables) if variables is not None else expr.variables
    missing = [v for v in expr.variables if v not in names]
    if missing:
        raise EvaluationError(
            f"variable(s) not covered by the requested order: {', '.join(missing)}")
    absent = [v for v in names if v not in at]
    if absent:
        raise EvaluationError(f"no value for variable(s): {', '.join(absent)}")

    value = evaluate(expr, at)
    n = len(names)
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    third = np.zeros((n, n))

    def seeded_env(i: int, j: Optional[int]) -> dict[str, Jet2]:
        env = {name: Jet2.constant(float(at[name])) for name in names}
        env[names[i]] = Jet2.variable(float(at[names[i]]), 0)
        if j is not None:
            env[names[j]] = Jet2.variable(float(at[names[j]]), 1)
        return env

    with np.errstate(all="ignore"):
        if order == 1 or n == 1:
            for i in range(n):
                c = _eval_jet(expr.root, seeded_env(i, None)).c
                grad[i] = c[1, 0]
                hess[i, i] = 2.0 * c[2, 0]
                third[i, i] = 6.0 * c[3, 0]
        else:
            for i in range(n):
                for j in range(i + 1, n):
                    c = _eval_jet(expr.root, seeded_env(i, j)).c
                    grad[i] = c[1, 0]
                    grad[j] = c[0, 1]
                    hess[i, i] = 2.0 * c[2, 0]
                    hess[j, j] = 2.0 * c[0, 2]
                    hess[i, j] = hess[j, i] = c[1, 1]
                    third[i, i] = 6.0 * c[3, 0]
                    third[j, j] = 6.0 * c[0, 3]
                    third[i, j] = 2.0 * c[1, 2]
                    third[j, i] = 2.0 * c[2, 1]

    return DerivativeBundle(
        value,
        grad,
        hess if order >= 2 else None,
        third if order >= 3 else None,
    )
