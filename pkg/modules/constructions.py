"""
Constructions Module
Divergence-form solution of lam = (f lam)_x + (g lam)_y near the origin, the
phase-space witness assembled from it, and the exact Taylor-coefficient
obstruction for the same equation.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import sympy as sp
from scipy.integrate import cumulative_simpson
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from modules.expressions import compile_vector, make_symbols, parse_expression
from modules.metric import Witness, WitnessError
from modules.symcalc import Operator, PhaseSpace


class ConstructionError(Exception):
    """Custom exception for construction and verification errors"""
    pass


class PotentialInconsistencyError(ConstructionError):
    """Raised when the recovered potential depends on the integration path"""
    pass


class Verdict:
    """Outcome of the coefficient system"""
    CONSISTENT = "CONSISTENT"
    INCONSISTENT = "INCONSISTENT"


REFERENCE_RADIAL_NODES = 600
REFERENCE_ANGULAR_NODES = 480
RADIUS_MIN = 1e-6
RADIUS_MAX = 1.0
ANNULUS = (0.02, 0.5)
CUTOFF_START = 0.5
CUTOFF_END = 1.0
WITNESS_GRID_NODES = 201
WITNESS_HALF_WIDTH = 0.5
POTENTIAL_LOOP_TOLERANCE = 1e-4
DEFAULT_DEGREE_CAP = 6
POSITIVITY_SAMPLES = 720

X, Y = make_symbols(["x", "y"])

# b with Laplacian x^6 + y^6 + x^2 y^2
FLAGSHIP_B = "x^8/56 + y^8/56 + x^4*y^2/12 - x^6/180"


@dataclass(frozen=True)
class WeightPolynomial:
    """Bivariate polynomial weight lam(x, y) with rational coefficients."""
    expr: sp.Expr

    def __post_init__(self):
        try:
            poly = sp.Poly(self.expr, X, Y)
        except sp.PolynomialError:
            raise ConstructionError(f"Weight {self.expr} is not a polynomial in x, y")
        if not (poly.domain.is_ZZ or poly.domain.is_QQ):
            raise ConstructionError(f"Weight {self.expr} needs rational coefficients")
        if poly.is_zero:
            raise ConstructionError("Weight must be nonzero")

    @staticmethod
    def flagship(k: int = 6) -> "WeightPolynomial":
        """lam = x^k + y^k + x^2 y^2"""
        if k < 4 or k % 2:
            raise ConstructionError(f"Flagship weight needs even k >= 4 (got {k})")
        return WeightPolynomial(sp.expand(X ** k + Y ** k + X ** 2 * Y ** 2))

    @staticmethod
    def parse(text: str) -> "WeightPolynomial":
        return WeightPolynomial(sp.expand(parse_expression(text, {"x": X, "y": Y}, allow_lambda=False)))

    @cached_property
    def poly(self) -> sp.Poly:
        return sp.Poly(self.expr, X, Y)

    @property
    def degree(self) -> int:
        return self.poly.total_degree()

    @property
    def order(self) -> int:
        """Lowest total degree of a monomial."""
        return min(i + j for i, j in self.poly.monoms())

    def is_symmetric(self) -> bool:
        swapped = self.expr.xreplace({X: Y, Y: X})
        return sp.expand(swapped - self.expr) == 0

    def scaled(self, factor) -> "WeightPolynomial":
        return WeightPolynomial(sp.expand(sp.Rational(factor) * self.expr))

    @cached_property
    def _numeric(self):
        return compile_vector([self.expr, sp.diff(self.expr, X), sp.diff(self.expr, Y)], (X, Y))

    def evaluate(self, x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lam, lam_x, lam_y)"""
        values = self._numeric(x, y)
        return values[0], values[1], values[2]

    def is_positive(self, radii=(1e-3, 1e-2, 1e-1, 0.5, 1.0), samples: int = POSITIVITY_SAMPLES) -> bool:
        """lam > 0 away from the origin, on a dense angular sample of several circles."""
        theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        for r in radii:
            value = self.evaluate(r * np.cos(theta), r * np.sin(theta))[0]
            if np.any(value <= 0):
                return False
        return True


def smoothstep_cutoff(u: np.ndarray) -> np.ndarray:
    """1 for u <= 1/2, 0 for u >= 1, septic smoothstep in between."""
    v = np.clip((u - CUTOFF_START) / (CUTOFF_END - CUTOFF_START), 0.0, 1.0)
    return 1.0 - v ** 4 * (35.0 - 84.0 * v + 70.0 * v ** 2 - 20.0 * v ** 3)


def smoothstep_cutoff_derivative(u: np.ndarray) -> np.ndarray:
    v = np.clip((u - CUTOFF_START) / (CUTOFF_END - CUTOFF_START), 0.0, 1.0)
    return -140.0 * v ** 3 * (1.0 - v) ** 3 / (CUTOFF_END - CUTOFF_START)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denominator > 0, numerator / np.where(denominator > 0, denominator, 1.0), np.inf)


@lru_cache(maxsize=None)
def _primitives(expr: sp.Expr):
    s = sp.Symbol("s", real=True)
    along_x = sp.expand(sp.integrate(expr.xreplace({X: s}), (s, 0, X)))
    along_y = sp.expand(sp.integrate(expr.xreplace({Y: s}), (s, 0, Y)))
    return compile_vector([along_x, along_y], (X, Y))


def regional_solutions(weight: WeightPolynomial, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pre-cutoff solutions: f1 = lam^(-1) int_0^x lam(s, y) ds (with g = 0) and
    g2 = lam^(-1) int_0^y lam(x, s) ds (with f = 0).
    """
    primitive_x, primitive_y = _primitives(weight.expr)(x, y)
    lam = weight.evaluate(x, y)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(lam > 0, lam, 1.0)
        return (
            np.where(lam > 0, primitive_x / safe, 0.0),
            np.where(lam > 0, primitive_y / safe, 0.0),
        )


def cutoff_fields(weight: WeightPolynomial, x: np.ndarray, y: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Cut-off regional solutions and their residual.

    phi = S(|x|/|y|) keeps the x-solution near the y-axis, phi' = S(|y|/|x|)
    the y-solution near the x-axis. The residual
    lam~ = lam (1 - phi - phi') - P phi_x - Q phi'_y
    is supported in |y|/2 <= |x| <= 2|y|.
    """
    lam, lam_x, lam_y = weight.evaluate(x, y)
    primitive_x, primitive_y = _primitives(weight.expr)(x, y)
    ax, ay = np.abs(x), np.abs(y)
    u = _ratio(ax, ay)
    w = _ratio(ay, ax)
    phi = smoothstep_cutoff(u)
    phi_prime = smoothstep_cutoff(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_x = np.where(ay > 0, smoothstep_cutoff_derivative(u) * np.sign(x) / np.where(ay > 0, ay, 1.0), 0.0)
        phi_prime_y = np.where(ax > 0, smoothstep_cutoff_derivative(w) * np.sign(y) / np.where(ax > 0, ax, 1.0), 0.0)
        safe = np.where(lam > 0, lam, 1.0)
        f_tilde = np.where(lam > 0, primitive_x * phi / safe, 0.0)
        g_tilde = np.where(lam > 0, primitive_y * phi_prime / safe, 0.0)
    lam_tilde = lam * (1.0 - phi - phi_prime) - primitive_x * phi_x - primitive_y * phi_prime_y
    return {
        "lam": lam,
        "lam_x": lam_x,
        "lam_y": lam_y,
        "phi": phi,
        "phi_prime": phi_prime,
        "f_tilde": f_tilde,
        "g_tilde": g_tilde,
        "lam_tilde": lam_tilde,
    }


@dataclass
class Lemma53Solution:
    """Polar-grid solution; arrays have shape (radial, angular)."""
    weight: WeightPolynomial
    s: np.ndarray
    theta: np.ndarray
    r: np.ndarray
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    f_tilde: np.ndarray
    g_tilde: np.ndarray
    lam_tilde: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    h: np.ndarray
    f: np.ndarray
    g: np.ndarray
    params: Dict = field(default_factory=dict)

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def dtheta(self) -> float:
        return float(self.theta[1] - self.theta[0])

    @cached_property
    def _h_interpolator(self) -> RectBivariateSpline:
        # bicubic in (s, theta), three periodic ghost columns per side
        pad = 3
        theta = np.concatenate([self.theta[-pad:] - 2 * np.pi, self.theta, self.theta[:pad] + 2 * np.pi])
        h = np.concatenate([self.h[:, -pad:], self.h, self.h[:, :pad]], axis=1)
        return RectBivariateSpline(self.s, theta, h, kx=3, ky=3, s=0)

    def h_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Interpolated h at Cartesian points; radii below the grid use the innermost ring."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        s = np.log(np.clip(r, self.r[0, 0], self.r[-1, 0]))
        theta = np.mod(np.arctan2(y, x), 2 * np.pi)
        return self._h_interpolator.ev(s, theta)

    def f_g_at(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Total f = f~ + x h and g = g~ + y h at Cartesian points."""
        fields = cutoff_fields(self.weight, x, y)
        h = self.h_at(x, y)
        return fields["f_tilde"] + x * h, fields["g_tilde"] + y * h


def solve_divergence_weighted(
    weight: WeightPolynomial,
    radial_nodes: int = REFERENCE_RADIAL_NODES,
    angular_nodes: int = REFERENCE_ANGULAR_NODES,
    r_min: float = RADIUS_MIN,
    r_max: float = RADIUS_MAX,
) -> Lemma53Solution:
    """
    Solve lam = (f lam)_x + (g lam)_y near the origin.

    With F = x h, G = y h the remaining equation is the radial ODE
    h_s + beta h = lam~/lam in s = log r, beta = 2 + (x lam_x + y lam_y)/lam.
    It is integrated with the factor e^b, b = int beta ds (b = 0 at r = 1),
    starting from the quasi-static value lam~/(lam beta) at r_min.

    Args:
        weight: Positive weight polynomial
        radial_nodes: Log-spaced radial nodes
        angular_nodes: Cell-centred angular nodes over the full circle
        r_min, r_max: Radial range (r_max = 1 fixes the normalization of b)

    Returns:
        Lemma53Solution

    Raises:
        ConstructionError: If the weight is not positive or the quadrature fails
    """
    if not weight.is_positive():
        raise ConstructionError(f"Weight {weight.expr} is not positive away from the origin")
    if not 0 < r_min < 1 <= r_max:
        raise ConstructionError("Radial range must satisfy 0 < r_min < 1 <= r_max")
    s = np.linspace(np.log(r_min), np.log(r_max), radial_nodes)
    theta = (np.arange(angular_nodes) + 0.5) * 2 * np.pi / angular_nodes
    S, T = np.meshgrid(s, theta, indexing="ij")
    r = np.exp(S)
    x = r * np.cos(T)
    y = r * np.sin(T)

    fields = cutoff_fields(weight, x, y)
    lam = fields["lam"]
    beta = 2.0 + (x * fields["lam_x"] + y * fields["lam_y"]) / lam
    source = fields["lam_tilde"] / lam

    b = cumulative_simpson(beta, x=s, axis=0, initial=0.0)
    b -= b[int(np.argmin(np.abs(s)))]
    growth = np.exp(b)
    start = growth[0] * source[0] / beta[0]
    h = (start + cumulative_simpson(growth * source, x=s, axis=0, initial=0.0)) / growth
    if not np.all(np.isfinite(h)):
        bad = np.argwhere(~np.isfinite(h))[0]
        raise ConstructionError(
            f"Radial quadrature did not converge near r = {r[bad[0], bad[1]]:.3g}, "
            f"theta = {T[bad[0], bad[1]]:.3g} (min b = {np.min(b):.3g})"
        )

    return Lemma53Solution(
        weight=weight,
        s=s,
        theta=theta,
        r=r,
        x=x,
        y=y,
        lam=lam,
        f_tilde=fields["f_tilde"],
        g_tilde=fields["g_tilde"],
        lam_tilde=fields["lam_tilde"],
        beta=beta,
        b=b,
        h=h,
        f=fields["f_tilde"] + x * h,
        g=fields["g_tilde"] + y * h,
        params={
            "radial_nodes": radial_nodes,
            "angular_nodes": angular_nodes,
            "r_min": r_min,
            "r_max": r_max,
            "cutoff": f"septic smoothstep in |x|/|y| on [{CUTOFF_START}, {CUTOFF_END}]",
        },
    )


def _d_ds(values: np.ndarray, ds: float) -> np.ndarray:
    """Fourth-order central difference along the radial axis (NaN on two boundary rows)."""
    out = np.full_like(values, np.nan)
    out[2:-2] = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * ds)
    return out


def _d_dtheta(values: np.ndarray, dtheta: float) -> np.ndarray:
    """Fourth-order central difference along the periodic angular axis."""
    return (
        -np.roll(values, -2, axis=1) + 8 * np.roll(values, -1, axis=1)
        - 8 * np.roll(values, 1, axis=1) + np.roll(values, 2, axis=1)
    ) / (12 * dtheta)


def divergence_residual(sol: Lemma53Solution) -> np.ndarray:
    """|lam - (f lam)_x - (g lam)_y| / lam on the polar grid."""
    cos, sin = sol.x / sol.r, sol.y / sol.r
    v1, v2 = sol.f * sol.lam, sol.g * sol.lam
    radial = v1 * cos + v2 * sin
    angular = -v1 * sin + v2 * cos
    divergence = (radial + _d_ds(radial, sol.ds) + _d_dtheta(angular, sol.dtheta)) / sol.r
    return np.abs(sol.lam - divergence) / sol.lam


def _gradient_norm(sol: Lemma53Solution, values: np.ndarray) -> np.ndarray:
    return np.hypot(_d_ds(values, sol.ds), _d_dtheta(values, sol.dtheta)) / sol.r


def in_transition_sector(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|y|/2 <= |x| <= 2|y|"""
    ax, ay = np.abs(x), np.abs(y)
    return (ax >= ay / 2) & (ax <= 2 * ay)


@dataclass
class Lemma53Report:
    residual: float
    f_over_r: float
    g_over_r: float
    grad_f: float
    grad_g: float
    h_sup: float
    r_grad_h: float
    b_theta: float
    beta_min: float
    b_max_inside: float
    h_outside_sector: float
    beta_deviation: float
    grid: Dict

    def to_dict(self) -> Dict:
        return {
            "residual": self.residual,
            "f_over_r": self.f_over_r,
            "g_over_r": self.g_over_r,
            "grad_f": self.grad_f,
            "grad_g": self.grad_g,
            "h_sup": self.h_sup,
            "r_grad_h": self.r_grad_h,
            "b_theta": self.b_theta,
            "beta_min": self.beta_min,
            "b_max_inside": self.b_max_inside,
            "h_outside_sector": self.h_outside_sector,
            "beta_deviation": self.beta_deviation,
            "grid": self.grid,
        }


def annulus_mask(sol: Lemma53Solution, r_low: float = ANNULUS[0], r_high: float = ANNULUS[1]) -> np.ndarray:
    return (sol.r >= r_low) & (sol.r <= r_high)


def verify_lemma53(sol: Lemma53Solution, r_low: float = ANNULUS[0], r_high: float = ANNULUS[1]) -> Lemma53Report:
    """
    Residual and bound statistics on the annulus r_low <= r <= r_high.

    beta_deviation is sup |beta - 6| / r over the transition sector.
    """
    mask = annulus_mask(sol, r_low, r_high)
    if np.any(mask[:2]) or np.any(mask[-2:]):
        raise ConstructionError("Annulus touches the radial boundary of the grid")
    residual = divergence_residual(sol)
    sector = in_transition_sector(sol.x, sol.y)
    outside = ~sector
    inside_unit = sol.r < 1.0
    return Lemma53Report(
        residual=float(np.max(residual[mask])),
        f_over_r=float(np.max(np.abs(sol.f[mask]) / sol.r[mask])),
        g_over_r=float(np.max(np.abs(sol.g[mask]) / sol.r[mask])),
        grad_f=float(np.max(_gradient_norm(sol, sol.f)[mask])),
        grad_g=float(np.max(_gradient_norm(sol, sol.g)[mask])),
        h_sup=float(np.max(np.abs(sol.h[mask]))),
        r_grad_h=float(np.max((_gradient_norm(sol, sol.h) * sol.r)[mask])),
        b_theta=float(np.max(np.abs(_d_dtheta(sol.b, sol.dtheta))[mask])),
        beta_min=float(np.min(sol.beta)),
        b_max_inside=float(np.max(sol.b[inside_unit])),
        h_outside_sector=float(np.max(np.abs(sol.h[outside]))) if np.any(outside) else 0.0,
        beta_deviation=float(np.max((np.abs(sol.beta - 6.0) / sol.r)[mask & sector])),
        grid={**sol.params, "annulus": [r_low, r_high]},
    )


def dump_lemma53_grid(sol: Lemma53Solution, path: str, r_low: float = ANNULUS[0], r_high: float = ANNULUS[1]) -> pd.DataFrame:
    """Write (r, theta, f, g, h, residual) over the annulus as CSV."""
    mask = annulus_mask(sol, r_low, r_high)
    residual = divergence_residual(sol)
    theta = np.broadcast_to(sol.theta[None, :], sol.r.shape)
    frame = pd.DataFrame({
        "r": sol.r[mask],
        "theta": theta[mask],
        "f": sol.f[mask],
        "g": sol.g[mask],
        "h": sol.h[mask],
        "residual": residual[mask],
    })
    frame.to_csv(path, index=False, float_format="%.9g")
    return frame


def _integral_from_centre(values: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    centre = moved.shape[0] // 2
    out = np.zeros_like(moved)
    out[centre:] = cumulative_simpson(moved[centre:], dx=spacing, axis=0, initial=0.0)
    out[:centre + 1] = -cumulative_simpson(moved[centre::-1], dx=spacing, axis=0, initial=0.0)[::-1]
    return np.moveaxis(out, 0, axis)


@dataclass
class PotentialData:
    """Cartesian-grid data of the witness: f, g, their derivatives and the potential H."""
    grid: np.ndarray
    f: np.ndarray
    g: np.ndarray
    f_x: np.ndarray
    f_y: np.ndarray
    g_x: np.ndarray
    g_y: np.ndarray
    potential: np.ndarray
    loop_error: float


def integrate_potential(
    b: sp.Expr,
    sol: Lemma53Solution,
    nodes: int = WITNESS_GRID_NODES,
    half_width: float = WITNESS_HALF_WIDTH,
    tolerance: float = POTENTIAL_LOOP_TOLERANCE,
) -> PotentialData:
    """
    Potential H with H_x = b_y - g lam and H_y = -b_x + f lam, H(0) = 0.

    Integrated along axis-parallel paths in both orders; the two results are
    averaged and their relative difference is the loop error.

    Raises:
        PotentialInconsistencyError: If the loop error exceeds the tolerance
    """
    if nodes % 2 == 0:
        raise ConstructionError("Witness grid needs an odd node count (the origin is a node)")
    grid = np.linspace(-half_width, half_width, nodes)
    grid[nodes // 2] = 0.0
    spacing = float(grid[1] - grid[0])
    XX, YY = np.meshgrid(grid, grid, indexing="ij")
    f, g = sol.f_g_at(XX, YY)
    centre = nodes // 2
    f[centre, centre] = 0.0
    g[centre, centre] = 0.0

    derivatives = compile_vector([sp.diff(b, X), sp.diff(b, Y)], (X, Y))
    b_x, b_y = derivatives(XX, YY)
    lam = sol.weight.evaluate(XX, YY)[0]
    along_x = b_y - g * lam
    along_y = -b_x + f * lam

    x_first = _integral_from_centre(along_x[:, centre], spacing, 0)[:, None] + _integral_from_centre(along_y, spacing, 1)
    y_first = _integral_from_centre(along_y[centre, :], spacing, 0)[None, :] + _integral_from_centre(along_x, spacing, 0)
    potential = 0.5 * (x_first + y_first)
    scale = max(float(np.max(np.abs(potential))), 1e-300)
    loop_error = float(np.max(np.abs(x_first - y_first))) / scale
    if loop_error > tolerance:
        raise PotentialInconsistencyError(
            f"Potential depends on the integration path (relative loop error {loop_error:.3g} > {tolerance:.3g}); "
            "the divergence residual is too large"
        )
    f_x, f_y = np.gradient(f, spacing, spacing)
    g_x, g_y = np.gradient(g, spacing, spacing)
    return PotentialData(grid, f, g, f_x, f_y, g_x, g_y, potential, loop_error)


class Prop51Witness(Witness):
    """
    phi = (t + H) tau + f (xi - tau b_y) + g (eta + tau b_x) on T*R^3.

    H_X phi = f_x A + g_x B and H_Y phi = f_y A + g_y B with A, B the
    principal symbols of X, Y, so the error terms vanish on the
    characteristic variety.
    """

    def __init__(self, witness_id: str, space: PhaseSpace, b: sp.Expr, data: PotentialData,
                 region: Optional[Dict[int, Tuple[float, float, int]]] = None):
        super().__init__(witness_id, space, region)
        self.b = b
        self.data = data
        axes = (data.grid, data.grid)
        self._interpolators = {
            name: RegularGridInterpolator(axes, getattr(data, name), bounds_error=False, fill_value=np.nan)
            for name in ("f", "g", "f_x", "f_y", "g_x", "g_y", "potential")
        }
        x, y = space.base[0], space.base[1]
        b_local = b.xreplace({X: x, Y: y})
        self._b_derivatives = compile_vector(
            [sp.diff(b_local, x), sp.diff(b_local, y), sp.diff(b_local, x, 2),
             sp.diff(b_local, x, y), sp.diff(b_local, y, 2)],
            (x, y),
        )

    def with_region(self, region: Dict[int, Tuple[float, float, int]]) -> "Prop51Witness":
        copy = Prop51Witness.__new__(Prop51Witness)
        copy.__dict__.update(self.__dict__)
        copy.region = dict(region)
        return copy

    def _fields(self, z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        points = np.stack([x, y], axis=-1)
        values = {name: interpolator(points) for name, interpolator in self._interpolators.items()}
        b_x, b_y, b_xx, b_xy, b_yy = self._b_derivatives(x, y)
        values.update({"b_x": b_x, "b_y": b_y, "b_xx": b_xx, "b_xy": b_xy, "b_yy": b_yy, "lam": b_xx + b_yy})
        return z, values

    def value(self, z) -> np.ndarray:
        z, v = self._fields(z)
        t, xi, eta, tau = z[..., 2], z[..., 3], z[..., 4], z[..., 5]
        a = xi - tau * v["b_y"]
        c = eta + tau * v["b_x"]
        return (t + v["potential"]) * tau + v["f"] * a + v["g"] * c

    def gradient(self, z) -> np.ndarray:
        z, v = self._fields(z)
        t, xi, eta, tau = z[..., 2], z[..., 3], z[..., 4], z[..., 5]
        a = xi - tau * v["b_y"]
        c = eta + tau * v["b_x"]
        potential_x = v["b_y"] - v["g"] * v["lam"]
        potential_y = -v["b_x"] + v["f"] * v["lam"]
        d_x = (potential_x * tau + v["f_x"] * a + v["g_x"] * c
               - v["f"] * tau * v["b_xy"] + v["g"] * tau * v["b_xx"])
        d_y = (potential_y * tau + v["f_y"] * a + v["g_y"] * c
               - v["f"] * tau * v["b_yy"] + v["g"] * tau * v["b_xy"])
        d_tau = t + v["potential"] - v["f"] * v["b_y"] + v["g"] * v["b_x"]
        return np.stack([d_x, d_y, tau, v["f"], v["g"], d_tau], axis=-1)


def build_prop51_witness(
    b: sp.Expr,
    sol: Lemma53Solution,
    space: Optional[PhaseSpace] = None,
    witness_id: str = "prop51",
    region: Optional[Dict[int, Tuple[float, float, int]]] = None,
    nodes: int = WITNESS_GRID_NODES,
) -> Prop51Witness:
    """
    Assemble the witness phi from b and a solution for lam = Laplacian(b).

    Raises:
        ConstructionError: If the Laplacian of b is not the solution's weight
        PotentialInconsistencyError: If the potential is path dependent
    """
    laplacian = sp.expand(sp.diff(b, X, 2) + sp.diff(b, Y, 2))
    if sp.expand(laplacian - sol.weight.expr) != 0:
        raise ConstructionError(f"Laplacian of b is {laplacian}, not the weight {sol.weight.expr}")
    space = space or PhaseSpace(("x", "y", "t"))
    data = integrate_potential(b, sol, nodes=nodes)
    return Prop51Witness(witness_id, space, b, data, region)


@lru_cache(maxsize=1)
def flagship_prop51_witness() -> Prop51Witness:
    """Reference-resolution witness for b = FLAGSHIP_B (built once per process)."""
    b = parse_expression(FLAGSHIP_B, {"x": X, "y": Y}, allow_lambda=False)
    sol = solve_divergence_weighted(WeightPolynomial.flagship(6))
    return build_prop51_witness(b, sol)


def hamiltonian_ratio(op: Operator, witness: Witness, points: np.ndarray) -> float:
    """sup of (sum_j |H_j phi|) / sigma~ over the sample points."""
    gradient = witness.gradient(points)
    if not np.all(np.isfinite(gradient)):
        raise WitnessError(f"Witness '{witness.id}' is not finite on the sample")
    velocities = op.hamiltonian_velocities(points)
    total = np.sum(np.abs(np.sum(velocities * gradient[None, :, :], axis=-1)), axis=0)
    sigma = op.sigma_tilde(points)
    return float(np.max(total / sigma))


@dataclass
class ObstructionSystem:
    """Exact linear system on Taylor coefficients of f, g."""
    weight: WeightPolynomial
    degree_cap: int
    ansatz_degree: int
    unknowns: Tuple[sp.Symbol, ...]
    equations: List[sp.Expr]
    matrix: sp.Matrix
    rhs: sp.Matrix
    verdict: str
    solution: Optional[Dict[sp.Symbol, sp.Rational]] = None
    certificate: Optional[List[sp.Rational]] = None

    @property
    def c1(self) -> sp.Symbol:
        """Coefficient of x in f."""
        return self.symbol("f", 1, 0)

    @property
    def c2(self) -> sp.Symbol:
        """Coefficient of y in g."""
        return self.symbol("g", 0, 1)

    def symbol(self, name: str, i: int, j: int) -> sp.Symbol:
        return sp.Symbol(f"{name}_{i}_{j}")

    def contains_equation(self, coefficients: Dict[sp.Symbol, int], rhs) -> bool:
        """Whether sum(c * u) = rhs lies in the row space of the system."""
        augmented = self.matrix.row_join(self.rhs)
        row = sp.zeros(1, len(self.unknowns) + 1)
        for symbol, value in coefficients.items():
            row[0, self.unknowns.index(symbol)] = sp.Rational(value)
        row[0, len(self.unknowns)] = sp.Rational(rhs)
        return augmented.col_join(row).rank() == augmented.rank()

    def decisive_equations(self) -> Dict[str, bool]:
        c1, c2 = self.c1, self.c2
        return {
            "3*c1 + 3*c2 = 1": self.contains_equation({c1: 3, c2: 3}, 1),
            "7*c1 + c2 = 1": self.contains_equation({c1: 7, c2: 1}, 1),
            "c1 + 7*c2 = 1": self.contains_equation({c1: 1, c2: 7}, 1),
        }

    def verify_certificate(self) -> bool:
        """y^T A = 0 and y^T b = 1 in exact arithmetic."""
        if self.certificate is None:
            return False
        y = sp.Matrix([self.certificate])
        return (y * self.matrix).is_zero_matrix and (y * self.rhs)[0, 0] == 1

    def certificate_rows(self) -> List[Tuple[Fraction, str]]:
        """Nonzero certificate weights with the equations they multiply."""
        if self.certificate is None:
            return []
        rows = []
        for weight, equation in zip(self.certificate, self.equations):
            if weight != 0:
                rows.append((Fraction(int(weight.p), int(weight.q)), f"{equation} = 0"))
        return rows


def taylor_obstruction(weight: WeightPolynomial, degree_cap: int = DEFAULT_DEGREE_CAP) -> ObstructionSystem:
    """
    Match Taylor coefficients of (f lam)_x + (g lam)_y - lam up to total degree D.

    f, g are polynomials of degree <= D - ord(lam) + 1 with f(0) = g(0) = 0,
    ord(lam) being the lowest degree of lam. The system is solved over the
    rationals; an inconsistent system comes with y such that y^T A = 0 and
    y^T b = 1.
    """
    if degree_cap < weight.degree:
        raise ConstructionError(f"Degree cap {degree_cap} is below the degree {weight.degree} of the weight")
    # ansatz up to D - ord(lam) + 1 contains the D - deg(lam) + 1 system
    ansatz_degree = degree_cap - weight.order + 1
    if ansatz_degree < 1:
        raise ConstructionError("Degree cap leaves no room for a nonconstant ansatz")
    unknowns = []
    f_poly = sp.S.Zero
    g_poly = sp.S.Zero
    for total in range(0, ansatz_degree + 1):
        for i in range(total, -1, -1):
            j = total - i
            f_symbol = sp.Symbol(f"f_{i}_{j}")
            g_symbol = sp.Symbol(f"g_{i}_{j}")
            unknowns.extend([f_symbol, g_symbol])
            f_poly += f_symbol * X ** i * Y ** j
            g_poly += g_symbol * X ** i * Y ** j

    lam = weight.expr
    difference = sp.expand(sp.diff(f_poly * lam, X) + sp.diff(g_poly * lam, Y) - lam)
    poly = sp.Poly(difference, X, Y)
    equations = [
        coefficient for (i, j), coefficient in sorted(poly.terms(), key=lambda t: (sum(t[0]), -t[0][0]))
        if i + j <= degree_cap and coefficient != 0
    ]
    equations.extend([sp.Symbol("f_0_0"), sp.Symbol("g_0_0")])
    matrix, rhs = sp.linear_eq_to_matrix(equations, unknowns)

    system = ObstructionSystem(
        weight=weight,
        degree_cap=degree_cap,
        ansatz_degree=ansatz_degree,
        unknowns=tuple(unknowns),
        equations=equations,
        matrix=matrix,
        rhs=rhs,
        verdict=Verdict.CONSISTENT,
    )
    if matrix.row_join(rhs).rank() > matrix.rank():
        system.verdict = Verdict.INCONSISTENT
        for vector in matrix.T.nullspace():
            value = (vector.T * rhs)[0, 0]
            if value != 0:
                system.certificate = [sp.nsimplify(entry / value) for entry in vector]
                break
        return system

    solution, parameters = matrix.gauss_jordan_solve(rhs)
    free = {parameter: 0 for parameter in parameters}
    values = solution.xreplace(free)
    system.solution = {symbol: sp.Rational(value) for symbol, value in zip(unknowns, values)}
    return system
