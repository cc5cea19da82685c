"""
Expressions Module
Parse, validate and compile scalar expressions over base and fiber variables.

Expressions are sympy trees. Polynomial subtrees keep exact rational
coefficients; the only non-polynomial atom needed by the catalogue is the
flat function exp(-1/x^2) (and its derivatives), modelled by FlatExp.
"""
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Sequence

import numpy as np
import sympy as sp
from mpmath.libmp import prec_to_dps
from numpy.polynomial import Polynomial
from sympy.core.function import ArgumentIndexError
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    rationalize,
    standard_transformations,
)


class ExpressionError(Exception):
    """Custom exception for malformed or out-of-scope expressions"""
    pass


LAMBDA = sp.Symbol("lam", positive=True)
LAMBDA_NAME = "lam"

# conventional fiber names for the usual base coordinates
FIBER_NAMES = {"x": "xi", "y": "eta", "t": "tau", "z": "zeta", "s": "sigma_s"}

FLAT_CUTOFF = 1e-3

TRANSFORMATIONS = standard_transformations + (convert_xor, rationalize)


def fiber_name(base_name: str) -> str:
    """Name of the fiber coordinate dual to a base coordinate."""
    return FIBER_NAMES.get(base_name, f"xi_{base_name}")


@lru_cache(maxsize=None)
def _flat_polynomial(order: int) -> Polynomial:
    # d/dx [P(1/x) e^{-1/x^2}] = [-u^2 P'(u) + 2 u^3 P(u)] e^{-u^2}, u = 1/x
    poly = Polynomial([1.0])
    u = Polynomial([0.0, 1.0])
    for _ in range(order):
        poly = -(u ** 2) * poly.deriv() + 2 * (u ** 3) * poly
    return poly


def flat_exp(x, order=0):
    """
    Numeric value of the order-th derivative of exp(-1/x^2), extended by 0.

    Args:
        x: Scalar or array of base coordinates
        order: Derivative order

    Returns:
        Array (or float) of values; exactly 0 for |x| below FLAT_CUTOFF
    """
    x = np.asarray(x, dtype=float)
    poly = _flat_polynomial(int(order))
    out = np.zeros_like(x)
    mask = np.abs(x) > FLAT_CUTOFF
    if np.any(mask):
        u = 1.0 / x[mask]
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            out[mask] = poly(u) * np.exp(-u * u)
    if out.ndim == 0:
        return float(out)
    return out


class FlatExp(sp.Function):
    """
    FlatExp(x, n): n-th derivative of exp(-1/x^2), equal to 0 at x = 0.

    Smooth but not analytic at 0; every derivative vanishes there.
    """
    nargs = 2

    @classmethod
    def eval(cls, x, n):
        if x.is_zero:
            return sp.S.Zero
        return None

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise ArgumentIndexError(self, argindex)
        x, n = self.args
        return FlatExp(x, n + 1)

    def _eval_is_real(self):
        return self.args[0].is_real

    def _eval_evalf(self, prec):
        x, n = self.args
        if x.is_number:
            return sp.Float(flat_exp(float(x), int(n)), prec_to_dps(prec))
        return None


NUMERIC_MODULES = [{"FlatExp": flat_exp}, "numpy"]


def make_symbols(names: Sequence[str]) -> List[sp.Symbol]:
    return [sp.Symbol(name, real=True) for name in names]


def parse_expression(
    text: str,
    symbols: Dict[str, sp.Symbol],
    allow_lambda: bool = True,
) -> sp.Expr:
    """
    Parse an infix expression string into a sympy expression.

    '^' denotes powers; float literals are converted to exact rationals.

    Args:
        text: Expression string, e.g. "x^(m-1)" or "lam^(1/3)*y"
        symbols: Declared names mapped to their symbols
        allow_lambda: Whether the scale parameter 'lam' may appear

    Returns:
        Parsed expression

    Raises:
        ExpressionError: If the string does not parse or uses undeclared names
    """
    if not isinstance(text, str):
        text = str(text)
    local_dict = dict(symbols)
    local_dict["FlatExp"] = FlatExp
    if allow_lambda:
        local_dict[LAMBDA_NAME] = LAMBDA
    try:
        expr = parse_expr(text, local_dict=local_dict, transformations=TRANSFORMATIONS)
    except Exception as e:
        raise ExpressionError(f"Cannot parse expression '{text}': {e}")
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"Expression '{text}' is not scalar")

    allowed = set(local_dict.values())
    unknown = [str(s) for s in expr.free_symbols if s not in allowed]
    if unknown:
        raise ExpressionError(
            f"Expression '{text}' uses undeclared names: {', '.join(sorted(unknown))}"
        )
    return expr


def parse_number(text) -> sp.Expr:
    """Parse a constant such as '1/2' or '-log(2)' (may contain 'lam')."""
    return parse_expression(str(text), {})


def canonical(expr: sp.Expr) -> sp.Expr:
    """Expanded form; structural equality of results decides polynomial equality."""
    return sp.expand(expr)


def sign_normalized(expr: sp.Expr) -> sp.Expr:
    """Representative of {expr, -expr}."""
    if expr.could_extract_minus_sign():
        return sp.expand(-expr)
    return expr


def compile_vector(exprs: Iterable[sp.Expr], args: Sequence[sp.Symbol]) -> Callable:
    """
    Compile expressions into one numpy function with broadcasting output.

    Args:
        exprs: Expressions to evaluate together
        args: Positional argument symbols

    Returns:
        Function f(*values) -> ndarray of shape (len(exprs), *broadcast_shape)
    """
    exprs = list(exprs)
    func = sp.lambdify(list(args), exprs, modules=NUMERIC_MODULES)

    def evaluate(*values):
        shape = np.broadcast_shapes(*[np.shape(v) for v in values]) if values else ()
        raw = func(*values)
        return np.array(
            [np.broadcast_to(np.asarray(item, dtype=float), shape) for item in raw]
        ).reshape((len(exprs),) + shape)

    return evaluate


def to_exact(value) -> sp.Expr:
    """Exact sympy number for a float, int, Fraction or expression string."""
    if isinstance(value, str):
        return parse_number(value)
    if isinstance(value, float):
        return sp.Rational(value)
    return sp.sympify(value)
