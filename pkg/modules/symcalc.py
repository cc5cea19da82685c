"""
Symbolic Calculus Module
Principal symbols, Hamiltonian fields, Poisson brackets and the effective symbol
of a sum-of-squares operator built from real vector fields.

Convention: H_f = sum_n (df/dxi_n d/dx_n - df/dx_n d/dxi_n) and {f, g} = H_f(g).
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy.linalg import null_space
from scipy.optimize import minimize
from sympy.polys.polyerrors import BasePolynomialError

from modules.expressions import (
    LAMBDA,
    canonical,
    compile_vector,
    fiber_name,
    make_symbols,
    sign_normalized,
    to_exact,
)


class SymcalcError(Exception):
    """Custom exception for symbolic calculus errors"""
    pass


class ZeroSectionError(SymcalcError):
    """Raised for phase points with vanishing fiber component"""
    pass


class NotOnCharacteristicError(SymcalcError):
    """Raised when a point is required to lie on the characteristic variety but does not"""
    pass


class ConstantRankUncertainError(SymcalcError):
    """Raised when the gradients of the symbols drop rank at the point"""
    pass


class EvaluationMode:
    """Effective symbol evaluation modes"""
    BRACKET = "bracket"
    PRINCIPAL_ONLY = "principal_only"

    ALL = (BRACKET, PRINCIPAL_ONLY)


DEFAULT_BRACKET_CAP = 12
ZERO_TOLERANCE = 1e-8
NU_REFINE_SEEDS = 3
NU_SPHERE_SAMPLES = 400


@dataclass(frozen=True)
class PhaseSpace:
    """Cotangent bundle coordinates (x_1..x_d; xi_1..xi_d) named after the base variables."""
    base_names: Tuple[str, ...]

    @property
    def dimension(self) -> int:
        return len(self.base_names)

    @cached_property
    def fiber_names(self) -> Tuple[str, ...]:
        return tuple(fiber_name(name) for name in self.base_names)

    @cached_property
    def base(self) -> Tuple[sp.Symbol, ...]:
        return tuple(make_symbols(self.base_names))

    @cached_property
    def fiber(self) -> Tuple[sp.Symbol, ...]:
        return tuple(make_symbols(self.fiber_names))

    @cached_property
    def coordinates(self) -> Tuple[sp.Symbol, ...]:
        return self.base + self.fiber

    @cached_property
    def coordinate_names(self) -> Tuple[str, ...]:
        return self.base_names + self.fiber_names

    @cached_property
    def symbol_table(self) -> Dict[str, sp.Symbol]:
        return dict(zip(self.coordinate_names, self.coordinates))

    def axis(self, name: str) -> int:
        """Index of a phase coordinate by name."""
        try:
            return self.coordinate_names.index(name)
        except ValueError:
            raise SymcalcError(
                f"Unknown coordinate '{name}' (known: {', '.join(self.coordinate_names)})"
            )


@dataclass(frozen=True)
class BaseVectorField:
    """X = sum_k a_k(x) d/dx_k"""
    space: PhaseSpace
    coefficients: Tuple[sp.Expr, ...]

    def __post_init__(self):
        if len(self.coefficients) != self.space.dimension:
            raise SymcalcError(
                f"Vector field needs {self.space.dimension} coefficients, "
                f"got {len(self.coefficients)}"
            )
        allowed = set(self.space.base)
        for coefficient in self.coefficients:
            extra = coefficient.free_symbols - allowed
            if extra:
                raise SymcalcError(
                    f"Coefficient {coefficient} depends on non-base symbols {extra}"
                )
            if coefficient.is_real is False:
                raise SymcalcError(f"Coefficient {coefficient} is not real")

    def apply(self, expr: sp.Expr) -> sp.Expr:
        return canonical(sum(
            (a * sp.diff(expr, x) for a, x in zip(self.coefficients, self.space.base)),
            sp.S.Zero,
        ))

    def commutator(self, other: "BaseVectorField") -> "BaseVectorField":
        return BaseVectorField(
            self.space,
            tuple(
                canonical(self.apply(b) - other.apply(a))
                for a, b in zip(self.coefficients, other.coefficients)
            ),
        )

    @cached_property
    def _numeric(self):
        return compile_vector(self.coefficients, self.space.base)

    def velocity(self, x) -> np.ndarray:
        """Coefficient vector at base point(s); x has shape (..., d)."""
        x = np.asarray(x, dtype=float)
        values = self._numeric(*[x[..., k] for k in range(self.space.dimension)])
        return np.moveaxis(values, 0, -1)

    @cached_property
    def dependencies(self) -> Tuple[int, ...]:
        """Indices of base variables the coefficients depend on."""
        used = set()
        for coefficient in self.coefficients:
            used |= coefficient.free_symbols
        return tuple(k for k, x in enumerate(self.space.base) if x in used)

    def __repr__(self):
        terms = []
        for a, name in zip(self.coefficients, self.space.base_names):
            if a != 0:
                terms.append(f"{'' if a == 1 else f'({a})'}d{name}")
        return f"BaseVectorField({' + '.join(terms) or '0'})"


@dataclass(frozen=True)
class PhaseSymbol:
    """Function on the cotangent bundle, polynomial in the fiber variables."""
    space: PhaseSpace
    expr: sp.Expr
    degree: int = 1

    @cached_property
    def _numeric(self):
        return compile_vector([self.expr], self.space.coordinates)

    def evaluate(self, z) -> np.ndarray:
        """Value at phase point(s) z of shape (..., 2d)."""
        z = np.asarray(z, dtype=float)
        return self._numeric(*[z[..., i] for i in range(2 * self.space.dimension)])[0]

    @cached_property
    def _gradient_numeric(self):
        return compile_vector(
            [sp.diff(self.expr, c) for c in self.space.coordinates], self.space.coordinates
        )

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        values = self._gradient_numeric(*[z[..., i] for i in range(2 * self.space.dimension)])
        return np.moveaxis(values, 0, -1)

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def __repr__(self):
        return f"PhaseSymbol({self.expr})"


@dataclass(frozen=True)
class PhaseVectorField:
    """Vector field on the cotangent bundle: d base components, then d fiber components."""
    space: PhaseSpace
    components: Tuple[sp.Expr, ...]

    def __post_init__(self):
        if len(self.components) != 2 * self.space.dimension:
            raise SymcalcError("Phase vector field needs 2d components")
        # base coefficients in S^0, fiber coefficients in S^1
        base_degrees, fiber_degrees = self.symbol_class_degrees()
        checks = (
            ("Base", self.base_components, base_degrees, 0),
            ("Fiber", self.fiber_components, fiber_degrees, 1),
        )
        for kind, components, degrees, bound in checks:
            for component, degree in zip(components, degrees):
                if degree is None or degree > bound:
                    raise SymcalcError(f"{kind} component {component} is not in S^{bound}")

    @property
    def base_components(self) -> Tuple[sp.Expr, ...]:
        return self.components[:self.space.dimension]

    @property
    def fiber_components(self) -> Tuple[sp.Expr, ...]:
        return self.components[self.space.dimension:]

    def apply(self, expr: sp.Expr) -> sp.Expr:
        return canonical(sum(
            (c * sp.diff(expr, z) for c, z in zip(self.components, self.space.coordinates)),
            sp.S.Zero,
        ))

    @cached_property
    def _numeric(self):
        return compile_vector(self.components, self.space.coordinates)

    def velocity(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        values = self._numeric(*[z[..., i] for i in range(2 * self.space.dimension)])
        return np.moveaxis(values, 0, -1)

    def symbol_class_degrees(self) -> Tuple[List[Optional[int]], List[Optional[int]]]:
        """xi-degrees of the base and fiber components (None when not polynomial in xi)."""
        return (
            [fiber_degree(self.space, c) for c in self.base_components],
            [fiber_degree(self.space, c) for c in self.fiber_components],
        )

    def __repr__(self):
        terms = []
        for c, name in zip(self.components, self.space.coordinate_names):
            if c != 0:
                terms.append(f"({c})d{name}")
        return f"PhaseVectorField({' + '.join(terms) or '0'})"


def fiber_degree(space: PhaseSpace, expr: sp.Expr) -> Optional[int]:
    """
    Total xi-degree of an expression polynomial in the fiber variables.

    Returns:
        The largest total xi-degree of its monomials (0 for xi-free
        expressions, including 0), or None if it is not polynomial in xi
    """
    expr = canonical(expr)
    if not expr.has(*space.fiber):
        return 0
    try:
        poly = sp.Poly(expr, *space.fiber)
    except BasePolynomialError:
        return None
    return int(poly.total_degree())


@dataclass(frozen=True)
class EffectiveSymbol:
    """
    Bracket family {(I, sigma_I)} with order bound and evaluation mode.

    BRACKET: sigma~^2 = sum over distinct terms |sigma_I|^(2/|I|).
    PRINCIPAL_ONLY: sigma~ = (1 + sum_j sigma_j^2)^(1/2).
    """
    space: PhaseSpace
    family: Tuple[Tuple[Tuple[int, ...], sp.Expr], ...]
    order: int
    mode: str
    principal: Tuple[sp.Expr, ...]

    @cached_property
    def terms(self) -> Tuple[Tuple[sp.Expr, int], ...]:
        """Distinct nonzero (sigma_I, |I|) pairs, identified up to sign."""
        if self.mode == EvaluationMode.PRINCIPAL_ONLY:
            return tuple((expr, 1) for expr in self.principal if expr != 0)
        seen = set()
        terms = []
        for index, expr in self.family:
            if expr == 0:
                continue
            key = (sign_normalized(expr), len(index))
            if key in seen:
                continue
            seen.add(key)
            terms.append((expr, len(index)))
        return tuple(terms)

    def multi_indices(self) -> List[Tuple[int, ...]]:
        return [index for index, _ in self.family]

    @cached_property
    def _term_numeric(self):
        return compile_vector([expr for expr, _ in self.terms], self.space.coordinates)

    @cached_property
    def _exponents(self) -> np.ndarray:
        return np.array([2.0 / weight for _, weight in self.terms])

    def evaluate_z(self, z) -> np.ndarray:
        """sigma~ at phase point(s) z of shape (..., 2d)."""
        z = np.asarray(z, dtype=float)
        shape = z.shape[:-1]
        if not self.terms:
            base = np.ones(shape) if self.mode == EvaluationMode.PRINCIPAL_ONLY else np.zeros(shape)
            return base
        values = self._term_numeric(*[z[..., i] for i in range(2 * self.space.dimension)])
        if self.mode == EvaluationMode.PRINCIPAL_ONLY:
            return np.sqrt(1.0 + np.sum(values ** 2, axis=0))
        exponents = self._exponents.reshape((-1,) + (1,) * len(shape))
        return np.sqrt(np.sum(np.abs(values) ** exponents, axis=0))

    def evaluate(self, point) -> float:
        return float(self.evaluate_z(point_array(point)))

    def evaluate_fibers(self, x, fibers) -> np.ndarray:
        """sigma~(x, xi) for one base point and an array of fibers (N, d)."""
        fibers = np.atleast_2d(np.asarray(fibers, dtype=float))
        base = np.broadcast_to(np.asarray(x, dtype=float), fibers.shape)
        return self.evaluate_z(np.concatenate([base, fibers], axis=1))

    @cached_property
    def _principal_jacobian(self):
        entries = [sp.diff(expr, xi) for expr in self.principal for xi in self.space.fiber]
        return compile_vector(entries, self.space.base)

    def principal_matrix(self, x) -> np.ndarray:
        """Rows d sigma_j / d xi at base point x (sigma_j linear in xi)."""
        x = np.asarray(x, dtype=float)
        d = self.space.dimension
        values = self._principal_jacobian(*[x[k] for k in range(d)])
        return values.reshape(len(self.principal), d)


@dataclass(frozen=True)
class PhasePoint:
    """p = (x, xi) off the zero section"""
    base: Tuple[float, ...]
    fiber: Tuple[float, ...]

    def __post_init__(self):
        if len(self.base) != len(self.fiber):
            raise SymcalcError("Base and fiber components must have equal length")
        if not any(float(value) != 0.0 for value in self.fiber):
            raise ZeroSectionError(f"Point {self} lies on the zero section")

    @staticmethod
    def from_array(z) -> "PhasePoint":
        z = np.asarray(z, dtype=float)
        d = z.shape[0] // 2
        return PhasePoint(tuple(float(v) for v in z[:d]), tuple(float(v) for v in z[d:]))

    def as_array(self) -> np.ndarray:
        return np.array(tuple(self.base) + tuple(self.fiber), dtype=float)

    def __repr__(self):
        base = ", ".join(f"{float(v):g}" for v in self.base)
        fiber = ", ".join(f"{float(v):g}" for v in self.fiber)
        return f"PhasePoint({base}; {fiber})"


def point_array(point) -> np.ndarray:
    if isinstance(point, PhasePoint):
        return point.as_array()
    return np.asarray(point, dtype=float)


def principal_symbol(field: BaseVectorField) -> PhaseSymbol:
    """Principal symbol of iX: sum_k a_k(x) xi_k."""
    space = field.space
    expr = sum((a * xi for a, xi in zip(field.coefficients, space.fiber)), sp.S.Zero)
    return PhaseSymbol(space, canonical(expr), 1)


def hamiltonian_field(f: PhaseSymbol) -> PhaseVectorField:
    """H_f = sum_n (df/dxi_n d/dx_n - df/dx_n d/dxi_n)"""
    space = f.space
    base = tuple(canonical(sp.diff(f.expr, xi)) for xi in space.fiber)
    fiber = tuple(canonical(-sp.diff(f.expr, x)) for x in space.base)
    return PhaseVectorField(space, base + fiber)


def _bracket_expr(space: PhaseSpace, f: sp.Expr, g: sp.Expr) -> sp.Expr:
    total = sp.S.Zero
    for x, xi in zip(space.base, space.fiber):
        total += sp.diff(f, xi) * sp.diff(g, x) - sp.diff(f, x) * sp.diff(g, xi)
    return canonical(total)


def poisson_bracket(f: PhaseSymbol, g: PhaseSymbol) -> PhaseSymbol:
    """{f, g} = H_f(g); bilinear and antisymmetric, degrees add minus one."""
    if f.space != g.space:
        raise SymcalcError("Symbols live on different phase spaces")
    return PhaseSymbol(f.space, _bracket_expr(f.space, f.expr, g.expr), f.degree + g.degree - 1)


def iterated_brackets(symbols: Sequence[PhaseSymbol], m: int) -> EffectiveSymbol:
    """
    All iterated brackets sigma_I for multi-indices 1 <= |I| <= m.

    sigma_I = {sigma_{i_k}, sigma_{I'}} for I = (I', i_k). Every multi-index
    is recorded; identical brackets are computed once.

    Args:
        symbols: Principal symbols sigma_1..sigma_n (0-based indices)
        m: Order bound

    Returns:
        EffectiveSymbol in BRACKET mode
    """
    if m < 1:
        raise SymcalcError(f"Bracket order must be >= 1 (got {m})")
    if not symbols:
        raise SymcalcError("No symbols given")
    space = symbols[0].space
    level = [((j,), s.expr) for j, s in enumerate(symbols)]
    family = list(level)
    cache: Dict[Tuple[int, sp.Expr], sp.Expr] = {}
    for _ in range(2, m + 1):
        next_level = []
        for index, expr in level:
            for j, s in enumerate(symbols):
                key = (j, expr)
                if key not in cache:
                    cache[key] = _bracket_expr(space, s.expr, expr)
                next_level.append((index + (j,), cache[key]))
        family.extend(next_level)
        level = next_level
    return EffectiveSymbol(
        space=space,
        family=tuple(family),
        order=m,
        mode=EvaluationMode.BRACKET,
        principal=tuple(s.expr for s in symbols),
    )


def principal_only_symbol(symbols: Sequence[PhaseSymbol]) -> EffectiveSymbol:
    """Effective symbol (1 + sum sigma_j^2)^(1/2) for infinitely degenerate operators."""
    space = symbols[0].space
    return EffectiveSymbol(
        space=space,
        family=tuple(((j,), s.expr) for j, s in enumerate(symbols)),
        order=1,
        mode=EvaluationMode.PRINCIPAL_ONLY,
        principal=tuple(s.expr for s in symbols),
    )


def effective_symbol_eval(es: EffectiveSymbol, p) -> float:
    """sigma~(p) for a point off the zero section."""
    z = point_array(p)
    if not np.any(z[es.space.dimension:] != 0.0):
        raise ZeroSectionError("sigma~ is evaluated off the zero section only")
    return es.evaluate(z)


def _exact_rank(vectors: List[List[sp.Expr]]) -> int:
    if not vectors:
        return 0
    if all(entry.is_Rational for row in vectors for entry in row):
        return sp.Matrix(vectors).rank()
    matrix = np.array([[float(sp.N(entry)) for entry in row] for row in vectors])
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return int(np.linalg.matrix_rank(matrix, tol=ZERO_TOLERANCE * scale))


def bracket_order_at(
    fields: Sequence[BaseVectorField],
    x: Sequence,
    cap: int = DEFAULT_BRACKET_CAP,
) -> Optional[int]:
    """
    Smallest m such that the brackets of length <= m span R^d at x.

    Works on symbols: the xi-coefficients of sigma_I are the components of
    the corresponding iterated commutator. Polynomial data at rational points
    is decided in exact arithmetic.

    Args:
        fields: The vector fields X_j
        x: Base point (floats are converted exactly, strings parsed)
        cap: Largest order tried

    Returns:
        The bracket order, or None if the cap is exhausted
    """
    if not fields:
        raise SymcalcError("No vector fields given")
    space = fields[0].space
    d = space.dimension
    substitutions = {sym: to_exact(value) for sym, value in zip(space.base, x)}
    symbols = [principal_symbol(field).expr for field in fields]

    def coefficient_row(expr):
        row = []
        for xi in space.fiber:
            value = sp.expand(sp.diff(expr, xi).xreplace(substitutions))
            row.append(value if value.is_Rational else sp.N(value))
        return row

    seen = set()
    level = []
    for expr in symbols:
        key = sign_normalized(expr)
        if expr != 0 and key not in seen:
            seen.add(key)
            level.append(expr)
    vectors: List[List[sp.Expr]] = []
    for order in range(1, cap + 1):
        if order > 1:
            new_level = []
            for expr in level:
                for s in symbols:
                    bracket = _bracket_expr(space, s, expr)
                    key = sign_normalized(bracket)
                    if bracket != 0 and key not in seen:
                        seen.add(key)
                        new_level.append(bracket)
            level = new_level
        vectors.extend(coefficient_row(expr) for expr in level)
        if _exact_rank(vectors) == d:
            return order
        if not level:
            return None
    return None


def _sphere_directions(d: int, count: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        angles = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if d == 3:
        i = np.arange(count) + 0.5
        polar = np.arccos(1 - 2 * i / count)
        azimuth = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([
            np.cos(azimuth) * np.sin(polar),
            np.sin(azimuth) * np.sin(polar),
            np.cos(polar),
        ], axis=1)
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(count, d))
    return samples / np.linalg.norm(samples, axis=1, keepdims=True)


def characteristic_direction(es: EffectiveSymbol, x) -> Optional[np.ndarray]:
    """Unit fiber direction of the characteristic line at x, when d-1 independent fields."""
    d = es.space.dimension
    if d < 2 or len(es.principal) != d - 1:
        return None
    matrix = es.principal_matrix(x)
    kernel = null_space(matrix, rcond=ZERO_TOLERANCE)
    if kernel.shape[1] != 1:
        return None
    return kernel[:, 0]


def nu(
    es: EffectiveSymbol,
    x: Sequence[float],
    R: float,
    use_line_bundle: bool = True,
    samples: int = NU_SPHERE_SAMPLES,
    seeds: int = NU_REFINE_SEEDS,
) -> float:
    """
    nu(x, R) = min over |xi| = R of sigma~(x, xi).

    Coarse sphere sample (plus coordinate axes and characteristic directions),
    then Nelder-Mead refinement from the best seeds. With d-1 independent
    fields the minimum is taken on the characteristic line instead.

    Args:
        es: Effective symbol
        x: Base point
        R: Fiber radius (>= 1)
        use_line_bundle: Allow the characteristic line shortcut
        samples: Coarse sphere sample size
        seeds: Number of coarse minima refined

    Returns:
        Approximate minimum
    """
    if R < 1:
        raise SymcalcError(f"nu needs R >= 1 (got {R})")
    x = np.asarray(x, dtype=float)
    d = es.space.dimension

    if use_line_bundle:
        direction = characteristic_direction(es, x)
        if direction is not None:
            values = es.evaluate_fibers(x, np.array([R * direction, -R * direction]))
            return float(np.min(values))

    directions = [_sphere_directions(d, samples), np.eye(d), -np.eye(d)]
    kernel = null_space(es.principal_matrix(x), rcond=ZERO_TOLERANCE)
    if kernel.size:
        directions.extend([kernel.T, -kernel.T])
    directions = np.concatenate(directions, axis=0)
    values = es.evaluate_fibers(x, R * directions)
    best = float(np.min(values))
    if d == 1:
        return best

    def objective(v):
        norm = np.linalg.norm(v)
        if norm == 0:
            return np.inf
        return float(es.evaluate_fibers(x, (R / norm) * v[None, :])[0])

    for index in np.argsort(values)[:seeds]:
        result = minimize(
            objective,
            directions[index],
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-10 * max(1.0, best), "maxiter": 400 * d},
        )
        if np.isfinite(result.fun):
            best = min(best, float(result.fun))
    return best


SYMPLECTIC_MATRIX_CACHE: Dict[int, np.ndarray] = {}


def symplectic_matrix(d: int) -> np.ndarray:
    """J with omega(u, v) = u^T J v = u_xi . v_x - u_x . v_xi"""
    if d not in SYMPLECTIC_MATRIX_CACHE:
        identity = np.eye(d)
        zero = np.zeros((d, d))
        SYMPLECTIC_MATRIX_CACHE[d] = np.block([[zero, -identity], [identity, zero]])
    return SYMPLECTIC_MATRIX_CACHE[d]


def _numeric_rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0:
        return 0
    return int(np.sum(singular > ZERO_TOLERANCE * max(1.0, singular[0])))


def _characteristic_frame(symbols: Sequence[PhaseSymbol], p) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = point_array(p).copy()
    space = symbols[0].space
    d = space.dimension
    fiber_norm = np.linalg.norm(z[d:])
    if fiber_norm == 0:
        raise ZeroSectionError("Point lies on the zero section")
    # degree-1 homogeneity: test at unit fiber scale
    z[d:] /= fiber_norm
    values = np.array([float(s.evaluate(z)) for s in symbols])
    if np.max(np.abs(values)) > ZERO_TOLERANCE:
        raise NotOnCharacteristicError(
            f"Point is not on the characteristic variety (max |sigma_j| = {np.max(np.abs(values)):.3g})"
        )
    gradients = np.array([s.gradient(z) for s in symbols])
    if _numeric_rank(gradients) < len(symbols):
        raise ConstantRankUncertainError(
            "Gradients of the symbols are linearly dependent at the point"
        )
    tangent = null_space(gradients, rcond=ZERO_TOLERANCE)
    return z, gradients, tangent


def is_symplectic_at(symbols: Sequence[PhaseSymbol], p) -> bool:
    """
    Whether the characteristic variety is symplectic at p.

    Raises:
        NotOnCharacteristicError: p is not on Sigma
        ConstantRankUncertainError: the gradients of the symbols drop rank at p
    """
    z, gradients, tangent = _characteristic_frame(symbols, p)
    restricted = tangent.T @ symplectic_matrix(len(z) // 2) @ tangent
    return _numeric_rank(restricted) == tangent.shape[1]


def hamiltonian_span_equals_orthocomplement(symbols: Sequence[PhaseSymbol], p) -> bool:
    """
    Whether span{H_sigma_j(p)} equals the omega-orthocomplement of T_p Sigma.

    Raises:
        NotOnCharacteristicError: p is not on Sigma
        ConstantRankUncertainError: the gradients of the symbols drop rank at p
    """
    z, gradients, tangent = _characteristic_frame(symbols, p)
    d = len(z) // 2
    # H_f = (grad_xi f, -grad_x f)
    spanning = np.concatenate([gradients[:, d:], -gradients[:, :d]], axis=1).T
    orthocomplement = null_space(tangent.T @ symplectic_matrix(d), rcond=ZERO_TOLERANCE)
    rank_span = _numeric_rank(spanning)
    rank_ortho = _numeric_rank(orthocomplement)
    rank_joint = _numeric_rank(np.concatenate([spanning, orthocomplement], axis=1))
    return rank_span == rank_ortho == rank_joint


@dataclass(frozen=True)
class Operator:
    """L = sum X_j^2 with its effective symbol data."""
    name: str
    space: PhaseSpace
    fields: Tuple[BaseVectorField, ...]
    order: int = 2
    mode: str = EvaluationMode.BRACKET
    characteristic_exprs: Tuple[sp.Expr, ...] = ()

    def __post_init__(self):
        if self.mode not in EvaluationMode.ALL:
            raise SymcalcError(f"Unknown evaluation mode '{self.mode}'")
        if not self.fields:
            raise SymcalcError(f"Operator '{self.name}' has no vector fields")

    @property
    def dimension(self) -> int:
        return self.space.dimension

    @cached_property
    def symbols(self) -> Tuple[PhaseSymbol, ...]:
        return tuple(principal_symbol(field) for field in self.fields)

    @cached_property
    def characteristic_symbols(self) -> Tuple[PhaseSymbol, ...]:
        if self.characteristic_exprs:
            return tuple(PhaseSymbol(self.space, canonical(e), 1) for e in self.characteristic_exprs)
        return self.symbols

    @cached_property
    def effective_symbol(self) -> EffectiveSymbol:
        if self.mode == EvaluationMode.PRINCIPAL_ONLY:
            return principal_only_symbol(self.symbols)
        return iterated_brackets(self.symbols, self.order)

    @cached_property
    def hamiltonian_fields(self) -> Tuple[PhaseVectorField, ...]:
        return tuple(hamiltonian_field(s) for s in self.symbols)

    @cached_property
    def _hamiltonian_numeric(self):
        components = [c for field in self.hamiltonian_fields for c in field.components]
        return compile_vector(components, self.space.coordinates)

    def hamiltonian_velocities(self, z) -> np.ndarray:
        """All H_sigma_j at z: shape (n_fields, ..., 2d)."""
        z = np.asarray(z, dtype=float)
        n = len(self.fields)
        size = 2 * self.dimension
        values = self._hamiltonian_numeric(*[z[..., i] for i in range(size)])
        values = values.reshape((n, size) + z.shape[:-1])
        return np.moveaxis(values, 1, -1)

    def sigma_tilde(self, z) -> np.ndarray:
        return self.effective_symbol.evaluate_z(z)

    @cached_property
    def depends_on(self) -> frozenset:
        """Phase coordinates appearing in any bracket term (translation-invariant otherwise)."""
        used = set()
        for expr, _ in self.effective_symbol.terms:
            used |= expr.free_symbols
        for symbol in self.symbols:
            used |= symbol.expr.free_symbols
        return frozenset(used - {LAMBDA})

    def __repr__(self):
        return f"Operator({self.name}: {', '.join(repr(f) for f in self.fields)}; m={self.order}, {self.mode})"
