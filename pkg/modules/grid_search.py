"""
Grid Search Module
Lattice shortest-path upper bounds for rho_L on a chart, and the base-space
distances varrho_R built from nu(x, R).
"""
import heapq
import itertools
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy.optimize import minimize_scalar

from modules.expressions import to_exact
from modules.metric import (
    DistanceEstimate,
    MetricError,
    UnreachableError,
    ambient_cost,
    hamiltonian_move,
    rho0,
    rk4_trajectory,
)
from modules.symcalc import BaseVectorField, EffectiveSymbol, Operator, nu, point_array

MAX_GRID_NODES = 200000
HAMILTONIAN_SUBSTEPS = 2
GRID_SLACK = 0.05
BOX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Chart:
    """Active phase axes with box bounds and lattice steps; other axes frozen at p."""
    active: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    steps: Tuple[float, ...]

    def __post_init__(self):
        n = len(self.active)
        if not (len(self.lower) == len(self.upper) == len(self.steps) == n):
            raise MetricError("Chart bounds and steps must match the active axes")
        for lo, hi, h in zip(self.lower, self.upper, self.steps):
            if not (hi > lo and h > 0):
                raise MetricError(f"Invalid chart axis [{lo}, {hi}] with step {h}")

    def refined(self, factor: int = 2) -> "Chart":
        """Nested lattice with every step divided by factor."""
        return replace(self, steps=tuple(h / factor for h in self.steps))

    def contains(self, z: np.ndarray) -> bool:
        for axis, lo, hi in zip(self.active, self.lower, self.upper):
            pad = BOX_TOLERANCE * (1.0 + abs(lo) + abs(hi))
            if not lo - pad <= z[axis] <= hi + pad:
                return False
        return True

    def key(self, z: np.ndarray) -> Tuple[int, ...]:
        return tuple(
            int(round((z[axis] - lo) / h))
            for axis, lo, h in zip(self.active, self.lower, self.steps)
        )

    def cell_count(self) -> int:
        return int(np.prod([
            int(round((hi - lo) / h)) + 1
            for lo, hi, h in zip(self.lower, self.upper, self.steps)
        ]))

    def describe(self, names: Sequence[str]) -> Dict:
        return {
            "active": [names[i] for i in self.active],
            "lower": list(self.lower),
            "upper": list(self.upper),
            "steps": list(self.steps),
        }


def full_chart(op: Operator, p, q, cells: int = 8, padding: float = 0.5) -> Chart:
    """Generic fallback: all 2d axes, box around p and q (practical for d <= 2)."""
    zp, zq = point_array(p), point_array(q)
    lower, upper, steps = [], [], []
    for i in range(2 * op.dimension):
        lo, hi = min(zp[i], zq[i]), max(zp[i], zq[i])
        span = hi - lo
        if span == 0:
            span = max(1.0, abs(lo))
        lo -= padding * span
        hi += padding * span
        lower.append(lo)
        upper.append(hi)
        steps.append((hi - lo) / cells)
    return Chart(tuple(range(2 * op.dimension)), tuple(lower), tuple(upper), tuple(steps))


def usable_fields(op: Operator, chart: Chart, zp: np.ndarray, zq: np.ndarray) -> List[int]:
    """
    Hamiltonian fields that keep the frozen coordinates fixed on the frozen slice.

    A frozen axis may also be ignored when it is cyclic: its coordinate enters
    no symbol and p, q agree on it.
    """
    frozen = [i for i in range(2 * op.dimension) if i not in chart.active]
    coordinates = op.space.coordinates
    substitutions = {coordinates[i]: to_exact(float(zp[i])) for i in frozen}
    cyclic = {
        i for i in frozen
        if coordinates[i] not in op.depends_on and zp[i] == zq[i]
    }
    usable = []
    for j, field in enumerate(op.hamiltonian_fields):
        ok = True
        for i in frozen:
            if i in cyclic:
                continue
            if sp.expand(field.components[i].xreplace(substitutions)) != 0:
                ok = False
                break
        if ok:
            usable.append(j)
    return usable


def _check_endpoints(op: Operator, chart: Chart, zp: np.ndarray, zq: np.ndarray):
    if len(zp) != 2 * op.dimension or len(zq) != 2 * op.dimension:
        raise MetricError("Points do not match the operator dimension")
    for name, z in (("p", zp), ("q", zq)):
        if not chart.contains(z):
            raise UnreachableError(f"{name} lies outside the chart box")
    for i in range(2 * op.dimension):
        if i not in chart.active and zp[i] != zq[i]:
            raise UnreachableError(
                f"p and q differ on frozen coordinate {op.space.coordinate_names[i]}"
            )


def upper_bound_distance(
    op: Operator,
    chart: Chart,
    p,
    q,
    max_nodes: int = MAX_GRID_NODES,
    incumbent: Optional[float] = None,
) -> DistanceEstimate:
    """
    Shortest-path upper bound for rho_L(p, q) on the chart lattice.

    Edges are +- axis-aligned ambient steps of one cell and +- Hamiltonian
    micro-steps (flow time moving at most one cell on any active axis). States
    stay continuous and are merged per lattice cell, so every reported value
    is the cost of a real path: the search path plus an ambient closing step
    to q, or a fractional Hamiltonian step near q.

    Args:
        op: Operator
        chart: Chart with box and steps
        p, q: Phase points inside the box
        max_nodes: Expansion budget
        incumbent: Known upper bound (e.g. from a coarser lattice)

    Returns:
        DistanceEstimate with the upper side filled in

    Raises:
        UnreachableError: If p or q is outside the box
    """
    zp, zq = point_array(p).astype(float), point_array(q).astype(float)
    _check_endpoints(op, chart, zp, zq)
    es = op.effective_symbol
    fields = op.hamiltonian_fields
    usable = usable_fields(op, chart, zp, zq)
    active = np.array(chart.active)
    steps = np.array(chart.steps)
    frozen = [i for i in range(2 * op.dimension) if i not in chart.active]
    target_key = chart.key(zq)

    def settle(z):
        """Reset frozen coordinates to p; drift dropped there is not charged."""
        z = np.array(z, dtype=float)
        z[frozen] = zp[frozen]
        return z

    def micro_step(j, z):
        velocity = fields[j].velocity(z)[active]
        rate = float(np.max(np.abs(velocity) / steps))
        if not np.isfinite(rate) or rate <= 0:
            return None
        return 1.0 / rate

    def successors(z):
        for position, axis in enumerate(chart.active):
            for sign in (1.0, -1.0):
                end = z.copy()
                end[axis] += sign * steps[position]
                yield end, ambient_cost(z, end), ("A", axis, sign)
        for j in usable:
            dt = micro_step(j, z)
            if dt is None:
                continue
            for sign in (1.0, -1.0):
                end, cost = hamiltonian_move(es, fields[j], z, sign * dt, HAMILTONIAN_SUBSTEPS)
                if np.all(np.isfinite(end)) and np.isfinite(cost):
                    yield settle(end), cost, ("H", j, sign * dt)

    def fractional_connection(z):
        best = np.inf
        for j in usable:
            dt = micro_step(j, z)
            if dt is None:
                continue

            def total(s, j=j):
                end, cost = hamiltonian_move(es, fields[j], z, s, HAMILTONIAN_SUBSTEPS)
                if not np.all(np.isfinite(end)):
                    return np.inf
                return cost + ambient_cost(settle(end), zq)

            for bounds in ((0.0, 2.0 * dt), (-2.0 * dt, 0.0)):
                result = minimize_scalar(total, bounds=bounds, method="bounded",
                                         options={"xatol": 1e-6 * dt})
                if np.isfinite(result.fun):
                    best = min(best, float(result.fun))
        return best

    best = ambient_cost(zp, zq)
    best_key: Optional[Tuple[int, ...]] = None
    if incumbent is not None:
        best = min(best, float(incumbent))

    start_key = chart.key(zp)
    distance = {start_key: 0.0}
    states = {start_key: zp}
    parents: Dict[Tuple[int, ...], Tuple[Optional[Tuple[int, ...]], Tuple]] = {start_key: (None, ())}
    counter = itertools.count()
    queue = [(0.0, next(counter), start_key)]
    expanded = 0
    truncated = False

    while queue:
        g, _, key = heapq.heappop(queue)
        if g > distance.get(key, np.inf):
            continue
        if g >= best:
            break
        expanded += 1
        if expanded > max_nodes:
            truncated = True
            break
        z = states[key]
        closing = g + ambient_cost(z, zq)
        if closing < best:
            best, best_key = closing, key
        if max(abs(a - b) for a, b in zip(key, target_key)) <= 1:
            connection = g + fractional_connection(z)
            if connection < best:
                best, best_key = connection, key
        for end, cost, move in successors(z):
            if not chart.contains(end):
                continue
            candidate = g + cost
            end_key = chart.key(end)
            if candidate < distance.get(end_key, np.inf):
                distance[end_key] = candidate
                states[end_key] = end
                parents[end_key] = (key, move)
                heapq.heappush(queue, (candidate, next(counter), end_key))

    moves: Dict[str, int] = {}
    key = best_key
    while key is not None and parents[key][0] is not None:
        parent, move = parents[key]
        label = "ambient" if move[0] == "A" else f"H{move[1] + 1}"
        moves[label] = moves.get(label, 0) + 1
        key = parent
    if best_key is None:
        description = "grid: direct ambient" if incumbent is None else "grid: incumbent"
    else:
        description = "grid: " + ", ".join(f"{n} x {label}" for label, n in sorted(moves.items()))

    grid = chart.describe(op.space.coordinate_names)
    grid.update({
        "expanded": expanded,
        "truncated": truncated,
        "usable_fields": [j + 1 for j in usable],
    })
    return DistanceEstimate(
        upper=best,
        path=description,
        grid=grid,
        slack=GRID_SLACK,
        rho0=rho0(zp, zq),
    )


def refined_upper_bound(
    op: Operator,
    chart: Chart,
    p,
    q,
    levels: int = 1,
    max_nodes: int = MAX_GRID_NODES,
) -> List[DistanceEstimate]:
    """
    Upper bounds on successively halved lattices.

    Paths found on a coarse lattice stay admissible, so each level starts from
    the previous value and the sequence is non-increasing.
    """
    estimates = []
    incumbent = None
    current = chart
    for _ in range(levels + 1):
        estimate = upper_bound_distance(op, current, p, q, max_nodes=max_nodes, incumbent=incumbent)
        estimates.append(estimate)
        incumbent = estimate.upper
        current = current.refined()
    return estimates


@dataclass(frozen=True)
class BaseBox:
    """Base-space lattice for varrho_R."""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    steps: Tuple[float, ...]

    def contains(self, x: np.ndarray) -> bool:
        return all(
            lo - BOX_TOLERANCE <= v <= hi + BOX_TOLERANCE
            for v, lo, hi in zip(x, self.lower, self.upper)
        )

    def key(self, x: np.ndarray) -> Tuple[int, ...]:
        return tuple(int(round((v - lo) / h)) for v, lo, h in zip(x, self.lower, self.steps))

    def node(self, key: Tuple[int, ...]) -> np.ndarray:
        return np.array([lo + k * h for k, lo, h in zip(key, self.lower, self.steps)])


def varrho_R(
    fields: Sequence[BaseVectorField],
    es: EffectiveSymbol,
    x,
    y,
    R: float,
    box: BaseBox,
    max_nodes: int = MAX_GRID_NODES,
) -> float:
    """
    Lattice distance for the control metric of {nu(., R)^(-1) X_j} and {R^(-1) d/dx_k}.

    An axis step of length h costs R*h. A step along +-X_j runs the flow for
    the time that moves the leading coordinate by one cell, then snaps to the
    nearest node; it costs time * max(nu at both ends) + R * |snap residual|.

    Raises:
        UnreachableError: If y is outside the box or cannot be reached
    """
    if R < 1:
        raise MetricError(f"varrho_R needs R >= 1 (got {R})")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for name, point in (("x", x), ("y", y)):
        if not box.contains(point):
            raise UnreachableError(f"Base point {name} lies outside the box")
    if np.allclose(x, y):
        return 0.0
    start, target = box.key(x), box.key(y)
    # off-lattice endpoints are joined to their nearest node by axis moves
    snapping = R * float(
        np.linalg.norm(x - box.node(start)) + np.linalg.norm(y - box.node(target))
    )

    steps = np.array(box.steps)
    dependencies = sorted({k for field in fields for k in field.dependencies})
    cache: Dict[Tuple[float, ...], float] = {}

    def nu_at(point):
        key = tuple(round(float(point[k]), 12) for k in dependencies)
        if key not in cache:
            cache[key] = nu(es, point, R)
        return cache[key]

    def successors(key):
        point = box.node(key)
        for k in range(len(point)):
            for sign in (1, -1):
                neighbour = list(key)
                neighbour[k] += sign
                yield tuple(neighbour), R * steps[k]
        for field in fields:
            velocity = field.velocity(point)
            rates = np.abs(velocity) / steps
            lead = int(np.argmax(rates))
            if rates[lead] <= 0:
                continue
            dt = 1.0 / rates[lead]
            for sign in (1.0, -1.0):
                end = rk4_trajectory(
                    lambda z, field=field: field.velocity(z), point, sign * dt, HAMILTONIAN_SUBSTEPS
                )[-1]
                if not box.contains(end):
                    continue
                snapped_key = box.key(end)
                residual = float(np.linalg.norm(box.node(snapped_key) - end))
                cost = dt * max(nu_at(point), nu_at(end)) + R * residual
                yield snapped_key, cost

    def inside(key):
        return box.contains(box.node(key))

    distance = {start: 0.0}
    counter = itertools.count()
    queue = [(0.0, next(counter), start)]
    expanded = 0
    while queue:
        g, _, key = heapq.heappop(queue)
        if g > distance.get(key, np.inf):
            continue
        if key == target:
            return g + snapping
        expanded += 1
        if expanded > max_nodes:
            break
        for neighbour, cost in successors(key):
            if not inside(neighbour):
                continue
            candidate = g + cost
            if candidate < distance.get(neighbour, np.inf):
                distance[neighbour] = candidate
                heapq.heappush(queue, (candidate, next(counter), neighbour))
    raise UnreachableError("Target base point not reached inside the box")
