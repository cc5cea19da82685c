"""
Metric Module
Two-sided estimates of the phase-space distance rho_L: ambient distance rho0,
path costs and certificates (upper side), witness functions (lower side).
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from modules.expressions import LAMBDA, compile_vector
from modules.symcalc import (
    EffectiveSymbol,
    Operator,
    PhaseSpace,
    PhaseVectorField,
    ZeroSectionError,
    point_array,
)
from utils.formatters import print_warning


class MetricError(Exception):
    """Custom exception for distance estimation errors"""
    pass


class CertificateError(MetricError):
    """Raised when a certificate path cannot be integrated reliably"""
    pass


class WitnessError(MetricError):
    """Raised when a witness is not finite or not defined at the queried points"""
    pass


class UnreachableError(MetricError):
    """Raised when the target cannot be reached inside the chart box"""
    pass


SEPARATION_CONSTANT = 0.5
CERTIFICATE_SLACK = 0.1
RK4_INITIAL_STEPS = 64
RK4_MAX_STEPS = 4096
MOVE_RK4_STEPS = 8
DRIFT_TOLERANCE = 0.01
DRIFT_FLOOR = 1e-9
ENDPOINT_TOLERANCE = 1e-6
UNLISTED_AXIS_SAMPLES = 17


class MoveKind:
    """Elementary move types"""
    HAMILTONIAN = "hamiltonian"
    AMBIENT = "ambient"


@dataclass(frozen=True)
class Move:
    """Pure Hamiltonian step (field j, flow time) or pure ambient displacement."""
    kind: str
    field_index: int = -1
    duration: float = 0.0
    displacement: Tuple[float, ...] = ()

    @staticmethod
    def hamiltonian(index: int, duration: float) -> "Move":
        return Move(MoveKind.HAMILTONIAN, field_index=index, duration=float(duration))

    @staticmethod
    def ambient(displacement: Sequence[float]) -> "Move":
        return Move(MoveKind.AMBIENT, displacement=tuple(float(v) for v in displacement))


@dataclass(frozen=True)
class PathCertificate:
    """Explicit phase-space path from a start point."""
    id: str
    start: Tuple[float, ...]
    segments: Tuple[Move, ...] = ()

    def describe(self) -> str:
        parts = []
        for segment in self.segments:
            if segment.kind == MoveKind.HAMILTONIAN:
                parts.append(f"H{segment.field_index + 1}[{segment.duration:.6g}]")
            else:
                parts.append("A[" + ",".join(f"{v:.6g}" for v in segment.displacement) + "]")
        return f"{self.id}: " + (" -> ".join(parts) if parts else "(empty)")


@dataclass(frozen=True)
class CertificateResult:
    cost: float
    end: np.ndarray
    steps: Tuple[int, ...]
    segment_costs: Tuple[float, ...]


@dataclass
class DistanceEstimate:
    """Lower and/or upper bound for rho_L(p, q) with provenance."""
    lower: Optional[float] = None
    upper: Optional[float] = None
    witness_id: str = ""
    path: str = ""
    grid: Dict = field(default_factory=dict)
    ratio: Optional[float] = None
    slack: float = 0.0
    rho0: Optional[float] = None

    def merge(self, other: "DistanceEstimate") -> "DistanceEstimate":
        """Combine a lower-side and an upper-side estimate."""
        return DistanceEstimate(
            lower=self.lower if self.lower is not None else other.lower,
            upper=self.upper if self.upper is not None else other.upper,
            witness_id=self.witness_id or other.witness_id,
            path=self.path or other.path,
            grid={**other.grid, **self.grid},
            ratio=self.ratio if self.ratio is not None else other.ratio,
            slack=max(self.slack, other.slack),
            rho0=self.rho0 if self.rho0 is not None else other.rho0,
        )

    def is_consistent(self) -> bool:
        if self.lower is None or self.upper is None:
            return True
        return self.lower <= self.upper * (1.0 + self.slack)


def _split(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = z.shape[-1] // 2
    return z[..., :d], z[..., d:]


def japanese_bracket(fiber) -> np.ndarray:
    """<xi> = (1 + |xi|^2)^(1/2)"""
    fiber = np.asarray(fiber, dtype=float)
    return np.sqrt(1.0 + np.sum(fiber * fiber, axis=-1))


def rho0(p, q) -> float:
    """
    Distance comparable to the path distance of d rho0^2 = <xi>^2 dx^2 + d xi^2.

    Minimum of the direct value (1 + min|xi|)|dx| + |d xi| and the dip family
    (|xi| - u) + (|xi'| - u) + (1 + u)|dx|, u in (0, min|xi|]. The dip family is
    linear in u, so its infimum sits at an end of the interval.
    """
    zp, zq = point_array(p), point_array(q)
    xp, fp = _split(zp)
    xq, fq = _split(zq)
    dx = float(np.linalg.norm(xp - xq))
    a = float(np.linalg.norm(fp))
    b = float(np.linalg.norm(fq))
    low = min(a, b)
    direct = (1.0 + low) * dx + float(np.linalg.norm(fp - fq))
    dip = min(a + b + dx, a + b - 2.0 * low + (1.0 + low) * dx)
    return min(direct, dip)


def is_separated(p, q, c: float = SEPARATION_CONSTANT) -> bool:
    """|x - x'| + (1 + |xi| + |xi'|)^(-1) |xi - xi'| > c"""
    zp, zq = point_array(p), point_array(q)
    xp, fp = _split(zp)
    xq, fq = _split(zq)
    scale = 1.0 + np.linalg.norm(fp) + np.linalg.norm(fq)
    return float(np.linalg.norm(xp - xq) + np.linalg.norm(fp - fq) / scale) > c


def ambient_cost(p, q) -> float:
    """
    Cost of an ambient-only path from p to q.

    Either move x at the smaller fiber and xi with x fixed, or pass near the
    zero section where <xi> is close to 1.
    """
    zp, zq = point_array(p), point_array(q)
    xp, fp = _split(zp)
    xq, fq = _split(zq)
    dx = float(np.linalg.norm(xp - xq))
    a = float(np.linalg.norm(fp))
    b = float(np.linalg.norm(fq))
    direct = (1.0 + min(a, b)) * dx + float(np.linalg.norm(fp - fq))
    return min(direct, a + b + dx)


def rk4_step(velocity: Callable[[np.ndarray], np.ndarray], z: np.ndarray, dt: float) -> np.ndarray:
    k1 = velocity(z)
    k2 = velocity(z + 0.5 * dt * k1)
    k3 = velocity(z + 0.5 * dt * k2)
    k4 = velocity(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_trajectory(
    velocity: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    duration: float,
    steps: int,
) -> np.ndarray:
    """Fixed-step RK4 nodes, shape (steps + 1, 2d)."""
    dt = duration / steps
    nodes = np.empty((steps + 1, len(z0)))
    nodes[0] = z0
    z = np.asarray(z0, dtype=float)
    for i in range(steps):
        z = rk4_step(velocity, z, dt)
        nodes[i + 1] = z
    return nodes


def _trajectory_cost(
    sigma: Callable[[np.ndarray], np.ndarray],
    velocity: Callable[[np.ndarray], np.ndarray],
    nodes: np.ndarray,
    duration: float,
) -> float:
    steps = len(nodes) - 1
    dt = duration / steps
    midpoints = rk4_step(velocity, nodes[:-1], 0.5 * dt)
    at_nodes = sigma(nodes)
    at_mid = sigma(midpoints)
    upper = np.maximum(np.maximum(at_nodes[:-1], at_nodes[1:]), at_mid)
    return float(abs(dt) * np.sum(upper))


def hamiltonian_move(
    es: EffectiveSymbol,
    field: PhaseVectorField,
    z: np.ndarray,
    duration: float,
    steps: int = MOVE_RK4_STEPS,
) -> Tuple[np.ndarray, float]:
    """End point and cost of a flow-time step along one Hamiltonian field."""
    if duration == 0:
        return np.asarray(z, dtype=float), 0.0
    nodes = rk4_trajectory(field.velocity, z, duration, steps)
    return nodes[-1], _trajectory_cost(es.evaluate_z, field.velocity, nodes, duration)


def finsler_cost(
    es: EffectiveSymbol,
    fields: Sequence[PhaseVectorField],
    p,
    move: Move,
    steps: int = MOVE_RK4_STEPS,
) -> float:
    """
    Cost of one pure move from p.

    Hamiltonian step of flow time t along H_j: |t| times the largest sigma~ at
    the step's endpoints and midpoints. Ambient step: its rho0 length.
    """
    z = point_array(p)
    if move.kind == MoveKind.AMBIENT:
        return ambient_cost(z, z + np.asarray(move.displacement, dtype=float))
    return hamiltonian_move(es, fields[move.field_index], z, move.duration, steps)[1]


def _integrate_hamiltonian(op: Operator, z: np.ndarray, move: Move) -> Tuple[float, np.ndarray, int]:
    field_index = move.field_index
    if not 0 <= field_index < len(op.fields):
        raise CertificateError(f"Certificate uses unknown field index {field_index + 1}")
    velocity = op.hamiltonian_fields[field_index].velocity
    symbol = op.symbols[field_index]
    start_value = float(symbol.evaluate(z))
    allowance = DRIFT_TOLERANCE * abs(start_value) + DRIFT_FLOOR * (
        1.0 + float(np.linalg.norm(_split(z)[1]))
    )
    steps = RK4_INITIAL_STEPS
    worst = np.inf
    while steps <= RK4_MAX_STEPS:
        with np.errstate(all="ignore"):
            nodes = rk4_trajectory(velocity, z, move.duration, steps)
        if np.all(np.isfinite(nodes)):
            drift = float(np.max(np.abs(symbol.evaluate(nodes) - start_value)))
            worst = min(worst, drift)
            if drift <= allowance:
                cost = _trajectory_cost(op.sigma_tilde, velocity, nodes, move.duration)
                if not np.isfinite(cost):
                    raise CertificateError("Certificate cost is not finite")
                return cost, nodes[-1], steps
        steps *= 2
    raise CertificateError(
        f"Flow of H{field_index + 1} over time {move.duration:.6g} left working precision "
        f"(symbol drift {worst:.3g} > {allowance:.3g})"
    )


def integrate_certificate(op: Operator, path: PathCertificate) -> CertificateResult:
    """Integrate all segments; return cost, end point and step counts."""
    z = np.asarray(path.start, dtype=float)
    if len(z) != 2 * op.dimension:
        raise CertificateError(f"Certificate '{path.id}' start has wrong dimension")
    total = 0.0
    steps: List[int] = []
    costs: List[float] = []
    for segment in path.segments:
        if segment.kind == MoveKind.AMBIENT:
            displacement = np.asarray(segment.displacement, dtype=float)
            if displacement.shape != z.shape:
                raise CertificateError(f"Certificate '{path.id}' ambient segment has wrong dimension")
            cost = ambient_cost(z, z + displacement)
            z = z + displacement
            steps.append(0)
        elif segment.duration == 0:
            cost = 0.0
            steps.append(0)
        else:
            cost, z, used = _integrate_hamiltonian(op, z, segment)
            steps.append(used)
        costs.append(cost)
        total += cost
    return CertificateResult(total, z, tuple(steps), tuple(costs))


def certificate_path_cost(op: Operator, path: PathCertificate) -> float:
    """Admissible cost of a certificate path; an upper bound for rho_L(start, end)."""
    return integrate_certificate(op, path).cost


def certificate_upper_bound(op: Operator, path: PathCertificate, q) -> DistanceEstimate:
    """
    Upper bound for rho_L(start, q): certificate cost plus the ambient closing
    cost from the path's end point to q.
    """
    result = integrate_certificate(op, path)
    zq = point_array(q)
    closing = ambient_cost(result.end, zq)
    gap = float(np.linalg.norm(result.end - zq))
    scale = 1.0 + float(np.linalg.norm(zq))
    if gap > ENDPOINT_TOLERANCE * scale:
        print_warning(f"certificate '{path.id}' ends {gap:.3g} away from q; closing ambient cost {closing:.6g}")
    return DistanceEstimate(
        upper=result.cost + closing,
        path=path.describe(),
        grid={"rk4_steps": list(result.steps), "closing_cost": closing},
        slack=CERTIFICATE_SLACK,
        rho0=rho0(path.start, zq),
    )


class Witness:
    """
    Candidate microlocally Lipschitz function at a fixed scale lambda.

    Subclasses provide value(z) and gradient(z) for arrays of phase points
    of shape (..., 2d). The region maps phase-axis indices to (lo, hi, n).
    """

    def __init__(self, witness_id: str, space: PhaseSpace, region: Optional[Dict[int, Tuple[float, float, int]]] = None):
        self.id = witness_id
        self.space = space
        self.region = dict(region or {})

    def value(self, z) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, z) -> np.ndarray:
        raise NotImplementedError


class ExpressionWitness(Witness):
    """Witness given by an expression in the phase coordinates and lam."""

    def __init__(self, witness_id: str, space: PhaseSpace, expr: sp.Expr, lam: float,
                 region: Optional[Dict[int, Tuple[float, float, int]]] = None):
        super().__init__(witness_id, space, region)
        self.expr = expr
        fixed = expr.xreplace({LAMBDA: sp.Float(lam, 30)}) if expr.has(LAMBDA) else expr
        extra = fixed.free_symbols - set(space.coordinates)
        if extra:
            raise WitnessError(f"Witness '{witness_id}' depends on unknown symbols {extra}")
        self._value = compile_vector([fixed], space.coordinates)
        self._gradient = compile_vector(
            [sp.diff(fixed, c) for c in space.coordinates], space.coordinates
        )

    def _args(self, z):
        z = np.asarray(z, dtype=float)
        return [z[..., i] for i in range(2 * self.space.dimension)]

    def value(self, z) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self._value(*self._args(z))[0]

    def gradient(self, z) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.moveaxis(self._gradient(*self._args(z)), 0, -1)


def sample_region(w: Witness, p, q) -> np.ndarray:
    """
    Grid of sample points: listed axes span their region, unlisted axes span
    the segment from p to q.
    """
    zp, zq = point_array(p), point_array(q)
    axes = []
    for i in range(len(zp)):
        if i in w.region:
            lo, hi, n = w.region[i]
            for value in (zp[i], zq[i]):
                if not lo - 1e-12 * (1 + abs(lo)) <= value <= hi + 1e-12 * (1 + abs(hi)):
                    raise WitnessError(
                        f"Point coordinate {w.space.coordinate_names[i]} = {value:.6g} "
                        f"is outside the region of witness '{w.id}'"
                    )
            axes.append(np.linspace(lo, hi, max(int(n), 1)))
        elif zp[i] == zq[i]:
            axes.append(np.array([zp[i]]))
        else:
            axes.append(np.linspace(zp[i], zq[i], UNLISTED_AXIS_SAMPLES))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def admissibility_ratio(op: Operator, w: Witness, points: np.ndarray) -> Dict[str, float]:
    """
    Largest sampled ratios of the admissibility conditions.

    hamiltonian: max_j |H_j w| / sigma~
    base: |grad_x w| / <xi>
    fiber: |grad_xi w|

    Raises:
        WitnessError: If a sampled derivative is not finite
    """
    d = op.dimension
    gradient = w.gradient(points)
    if not np.all(np.isfinite(gradient)):
        raise WitnessError(f"Witness '{w.id}' has non-finite derivatives on its region")
    fiber = points[:, d:]
    usable = np.any(fiber != 0.0, axis=1)
    if not np.any(usable):
        raise ZeroSectionError("Witness region lies on the zero section")
    points, gradient, fiber = points[usable], gradient[usable], fiber[usable]

    sigma = op.sigma_tilde(points)
    velocities = op.hamiltonian_velocities(points)
    derivative = np.abs(np.sum(velocities * gradient[None, :, :], axis=-1))
    positive = sigma > 0
    hamiltonian = 0.0
    if np.any(positive):
        hamiltonian = float(np.max(derivative[:, positive] / sigma[positive]))
    # sigma~ = 0 with a nonzero H_j w would admit no scaling
    if np.any(~positive) and np.any(derivative[:, ~positive] > 0):
        hamiltonian = np.inf
    base = float(np.max(np.linalg.norm(gradient[:, :d], axis=1) / japanese_bracket(fiber)))
    fiber_ratio = float(np.max(np.linalg.norm(gradient[:, d:], axis=1)))
    ratios = {"hamiltonian": hamiltonian, "base": base, "fiber": fiber_ratio}
    if not all(np.isfinite(v) for v in ratios.values()):
        raise WitnessError(f"Witness '{w.id}' admissibility ratio is not finite")
    return ratios


def witness_lower_bound(op: Operator, w: Witness, p, q) -> DistanceEstimate:
    """
    Lower bound |w(p) - w(q)| / max(1, r*) with r* the sampled admissibility ratio.
    """
    zp, zq = point_array(p), point_array(q)
    points = sample_region(w, zp, zq)
    ratios = admissibility_ratio(op, w, points)
    r_star = max(ratios.values())
    values = w.value(np.stack([zp, zq]))
    if not np.all(np.isfinite(values)):
        raise WitnessError(f"Witness '{w.id}' is not finite at the endpoints")
    increment = abs(float(values[1] - values[0]))
    return DistanceEstimate(
        lower=increment / max(1.0, r_star),
        witness_id=w.id,
        grid={"samples": int(len(points)), **{f"ratio_{k}": v for k, v in ratios.items()}},
        ratio=r_star,
        rho0=rho0(zp, zq),
    )


def floor_witnesses(space: PhaseSpace, m: int) -> List[Tuple[str, sp.Expr]]:
    """Lower-bound family lam^(1/m) x_j and lam^(-(m-1)/m) xi_j for bracket order m."""
    family = []
    for name, x in zip(space.base_names, space.base):
        family.append((f"floor_{name}", LAMBDA ** sp.Rational(1, m) * x))
    for name, xi in zip(space.fiber_names, space.fiber):
        family.append((f"floor_{name}", LAMBDA ** sp.Rational(-(m - 1), m) * xi))
    return family


def floor_lower_bound(op: Operator, m: int, lam: float, p, q) -> DistanceEstimate:
    """Best lower bound over the floor family; members with zero increment are skipped."""
    zp, zq = point_array(p), point_array(q)
    best = DistanceEstimate(lower=0.0, witness_id="", rho0=rho0(zp, zq))
    for witness_id, expr in floor_witnesses(op.space, m):
        witness = ExpressionWitness(witness_id, op.space, expr, lam)
        if abs(float(witness.value(zq) - witness.value(zp))) == 0.0:
            continue
        estimate = witness_lower_bound(op, witness, zp, zq)
        if estimate.lower > best.lower:
            best = estimate
    return best
