"""
Catalogue Module
Built-in operator scenarios, stored as JSON-compatible spec dicts and compiled
into immutable ScenarioEntry objects.
"""
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import sympy as sp

from modules.constructions import flagship_prop51_witness
from modules.expressions import (
    LAMBDA,
    ExpressionError,
    parse_expression,
    to_exact,
)
from modules.grid_search import BaseBox, Chart
from modules.metric import (
    SEPARATION_CONSTANT,
    ExpressionWitness,
    Move,
    PathCertificate,
    Witness,
    is_separated,
)
from modules.symcalc import (
    BaseVectorField,
    EvaluationMode,
    Operator,
    PhasePoint,
    PhaseSpace,
)
from utils.validators import parse_exponent_range


class CatalogueError(Exception):
    """Custom exception for unknown or malformed catalogue entries"""
    pass


class WitnessKind:
    EXPRESSION = "expression"
    PROP51 = "prop51"

    ALL = (EXPRESSION, PROP51)


class SegmentKind:
    HAMILTONIAN = "hamiltonian"
    AMBIENT = "ambient"


DEFAULT_SCAN_RANGES = {"certificate": "10:24", "grid": "8:14"}
CLOSED_FORM_SAMPLES = 10000
CLOSED_FORM_FIBER_RANGE = (2.0 ** 8, 2.0 ** 20)
CLOSED_FORM_SEED = 0


@dataclass(frozen=True)
class WitnessSpec:
    id: str
    kind: str
    expr: Optional[sp.Expr]
    region: Tuple[Tuple[int, sp.Expr, sp.Expr, int], ...] = ()


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    field_index: int = -1
    duration: Optional[sp.Expr] = None
    displacement: Tuple[sp.Expr, ...] = ()


@dataclass(frozen=True)
class CertificateSpec:
    id: str
    segments: Tuple[SegmentSpec, ...]


def _at(expr: sp.Expr, lam: float) -> float:
    """Value of an expression in lam at a given scale."""
    if not expr.has(LAMBDA):
        return float(sp.N(expr, 30))
    return float(sp.N(expr.xreplace({LAMBDA: to_exact(float(lam))}), 30))


@dataclass(frozen=True, eq=False)
class ScenarioEntry:
    """
    Compiled catalogue entry.

    Point, chart, witness and certificate data are expressions in lam; the
    accessor methods evaluate them at a given scale. The originating spec dict
    is kept for export.
    """
    name: str
    operator: Operator
    p_exprs: Tuple[sp.Expr, ...] = ()
    q_exprs: Tuple[sp.Expr, ...] = ()
    chart_axes: Tuple[Tuple[int, sp.Expr, sp.Expr, sp.Expr], ...] = ()
    witnesses: Tuple[WitnessSpec, ...] = ()
    certificates: Tuple[CertificateSpec, ...] = ()
    expected_exponent: Optional[Fraction] = None
    expected_gevrey: Optional[Fraction] = None
    separation: float = SEPARATION_CONSTANT
    sigma_closed_form: Optional[sp.Expr] = None
    base_box: Optional[Tuple[Tuple[float, ...], Tuple[float, ...], Tuple[float, ...]]] = None
    base_pair: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    scan_ranges: Dict[str, str] = field(default_factory=dict)
    notes: str = ""
    spec: Dict = field(default_factory=dict, repr=False)

    @property
    def space(self) -> PhaseSpace:
        return self.operator.space

    @property
    def has_scenario(self) -> bool:
        return bool(self.p_exprs)

    def _require_scenario(self):
        if not self.has_scenario:
            raise CatalogueError(f"Entry '{self.name}' has no scenario block")

    def p(self, lam: float) -> np.ndarray:
        self._require_scenario()
        return self._point(self.p_exprs, lam)

    def q(self, lam: float) -> np.ndarray:
        self._require_scenario()
        return self._point(self.q_exprs, lam)

    def _point(self, exprs, lam: float) -> np.ndarray:
        z = np.array([_at(e, lam) for e in exprs])
        return PhasePoint.from_array(z).as_array()

    def is_separated(self, lam: float) -> bool:
        return is_separated(self.p(lam), self.q(lam), self.separation)

    def chart(self, lam: float) -> Chart:
        self._require_scenario()
        if not self.chart_axes:
            raise CatalogueError(f"Entry '{self.name}' declares no chart")
        return Chart(
            active=tuple(axis for axis, _, _, _ in self.chart_axes),
            lower=tuple(_at(lo, lam) for _, lo, _, _ in self.chart_axes),
            upper=tuple(_at(hi, lam) for _, _, hi, _ in self.chart_axes),
            steps=tuple(_at(h, lam) for _, _, _, h in self.chart_axes),
        )

    @property
    def witness_ids(self) -> List[str]:
        return [w.id for w in self.witnesses]

    def witness(self, lam: float, witness_id: Optional[str] = None) -> Witness:
        spec = self._find(self.witnesses, witness_id, "witness")
        region = {axis: (_at(lo, lam), _at(hi, lam), n) for axis, lo, hi, n in spec.region}
        if spec.kind == WitnessKind.PROP51:
            return flagship_prop51_witness().with_region(region)
        return ExpressionWitness(spec.id, self.space, spec.expr, lam, region)

    def certificate(self, lam: float, certificate_id: Optional[str] = None) -> PathCertificate:
        spec = self._find(self.certificates, certificate_id, "certificate")
        segments = []
        for segment in spec.segments:
            if segment.kind == SegmentKind.HAMILTONIAN:
                segments.append(Move.hamiltonian(segment.field_index, _at(segment.duration, lam)))
            else:
                segments.append(Move.ambient([_at(v, lam) for v in segment.displacement]))
        return PathCertificate(spec.id, tuple(self.p(lam)), tuple(segments))

    def _find(self, items, item_id: Optional[str], kind: str):
        self._require_scenario()
        if not items:
            raise CatalogueError(f"Entry '{self.name}' has no {kind}")
        if item_id is None:
            return items[0]
        for item in items:
            if item.id == item_id:
                return item
        known = ", ".join(item.id for item in items)
        raise CatalogueError(f"Entry '{self.name}' has no {kind} '{item_id}' (known: {known})")

    def scan_lambdas(self, method: str = "certificate") -> List[float]:
        key = "grid" if method == "grid" else "certificate"
        return parse_exponent_range(self.scan_ranges.get(key, DEFAULT_SCAN_RANGES[key]))

    def box(self) -> BaseBox:
        if self.base_box is None:
            raise CatalogueError(f"Entry '{self.name}' declares no base box")
        return BaseBox(*self.base_box)


@dataclass(frozen=True)
class ScenarioPair:
    """Two operators sharing one point pair."""
    name: str
    first: ScenarioEntry
    second: ScenarioEntry

    @property
    def entries(self) -> Tuple[ScenarioEntry, ScenarioEntry]:
        return self.first, self.second


def _fraction(value) -> Optional[Fraction]:
    if value is None:
        return None
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise CatalogueError(f"Invalid rational value '{value}'")


def _lam_expr(text) -> sp.Expr:
    return parse_expression(str(text), {})


def _require(spec: Dict, key: str, where: str):
    if key not in spec:
        raise CatalogueError(f"Missing key '{key}' in {where}")
    return spec[key]


def compile_entry(spec: Dict) -> ScenarioEntry:
    """
    Compile a spec dict (catalogue or JSON spec file format) into an entry.

    Raises:
        CatalogueError: If the structure is malformed
        ExpressionError: If an expression string does not parse
    """
    name = str(_require(spec, "name", "spec"))
    variables = tuple(_require(spec, "variables", name))
    dimension = int(spec.get("dimension", len(variables)))
    if dimension != len(variables) or dimension < 1:
        raise CatalogueError(f"Entry '{name}': dimension {dimension} does not match variables {list(variables)}")
    if len(set(variables)) != len(variables):
        raise CatalogueError(f"Entry '{name}': duplicate variable names")

    space = PhaseSpace(variables)
    base_table = dict(zip(space.base_names, space.base))
    fields = []
    for index, coefficients in enumerate(_require(spec, "fields", name)):
        if len(coefficients) != dimension:
            raise CatalogueError(f"Entry '{name}': field {index + 1} needs {dimension} coefficients")
        fields.append(BaseVectorField(space, tuple(
            sp.expand(parse_expression(c, base_table, allow_lambda=False)) for c in coefficients
        )))
    mode = spec.get("mode", EvaluationMode.BRACKET)
    if mode not in EvaluationMode.ALL:
        raise CatalogueError(f"Entry '{name}': unknown mode '{mode}'")
    order = int(spec.get("order", 2))
    if order < 1:
        raise CatalogueError(f"Entry '{name}': order must be positive")
    characteristic = tuple(
        parse_expression(c, space.symbol_table, allow_lambda=False)
        for c in spec.get("characteristic_symbols", ())
    )
    operator = Operator(name, space, tuple(fields), order, mode, characteristic)

    closed = spec.get("sigma_closed_form")
    closed_form = parse_expression(closed, space.symbol_table, allow_lambda=False) if closed else None

    scenario = spec.get("scenario")
    if not scenario:
        return ScenarioEntry(name=name, operator=operator, sigma_closed_form=closed_form, notes=spec.get("notes", ""), spec=spec)
    return _compile_scenario(name, operator, scenario, closed_form, spec)


def _point_exprs(block: Dict, dimension: int, where: str) -> Tuple[sp.Expr, ...]:
    base = list(_require(block, "base", where))
    fiber = list(_require(block, "fiber", where))
    if len(base) != dimension or len(fiber) != dimension:
        raise CatalogueError(f"{where} needs {dimension} base and {dimension} fiber components")
    return tuple(_lam_expr(v) for v in base + fiber)


def _compile_scenario(name: str, operator: Operator, scenario: Dict, closed_form, spec: Dict) -> ScenarioEntry:
    space = operator.space
    d = space.dimension
    p_exprs = _point_exprs(_require(scenario, "p", name), d, f"{name}.p")
    q_exprs = _point_exprs(_require(scenario, "q", name), d, f"{name}.q")

    chart_axes = []
    for axis_name, bounds in scenario.get("chart", {}).items():
        if len(bounds) != 3:
            raise CatalogueError(f"{name}.chart.{axis_name} must be [lower, upper, step]")
        chart_axes.append((space.axis(axis_name),) + tuple(_lam_expr(v) for v in bounds))
    chart_axes.sort(key=lambda item: item[0])

    witnesses = []
    for item in scenario.get("witnesses", ()):
        kind = item.get("kind", WitnessKind.EXPRESSION)
        if kind not in WitnessKind.ALL:
            raise CatalogueError(f"{name}: unknown witness kind '{kind}'")
        if kind == WitnessKind.PROP51 and space.base_names != ("x", "y", "t"):
            raise CatalogueError(f"{name}: prop51 witnesses live on (x, y, t)")
        expr = None
        if kind == WitnessKind.EXPRESSION:
            expr = parse_expression(_require(item, "expr", f"{name}.witness"), space.symbol_table)
        region = tuple(
            (space.axis(axis_name), _lam_expr(lo), _lam_expr(hi), int(n))
            for axis_name, (lo, hi, n) in item.get("region", {}).items()
        )
        witnesses.append(WitnessSpec(str(_require(item, "id", f"{name}.witness")), kind, expr, region))

    certificates = []
    for item in scenario.get("certificates", ()):
        segments = []
        for segment in _require(item, "segments", f"{name}.certificate"):
            kind = segment.get("kind")
            if kind == SegmentKind.HAMILTONIAN:
                index = int(_require(segment, "field", f"{name}.segment")) - 1
                if not 0 <= index < len(operator.fields):
                    raise CatalogueError(f"{name}: certificate segment uses unknown field {index + 1}")
                segments.append(SegmentSpec(kind, index, _lam_expr(_require(segment, "duration", f"{name}.segment"))))
            elif kind == SegmentKind.AMBIENT:
                displacement = tuple(_lam_expr(v) for v in _require(segment, "displacement", f"{name}.segment"))
                if len(displacement) != 2 * d:
                    raise CatalogueError(f"{name}: ambient displacement needs {2 * d} components")
                segments.append(SegmentSpec(kind, displacement=displacement))
            else:
                raise CatalogueError(f"{name}: unknown segment kind '{kind}'")
        certificates.append(CertificateSpec(str(_require(item, "id", f"{name}.certificate")), tuple(segments)))

    exponent = _fraction(scenario.get("expected_exponent"))
    if exponent is not None and not 0 < exponent <= 1:
        raise CatalogueError(f"{name}: expected exponent {exponent} outside (0, 1]")

    base_box = None
    if scenario.get("base_box"):
        box = scenario["base_box"]
        base_box = tuple(
            tuple(float(to_exact(v)) for v in box[key]) for key in ("lower", "upper", "steps")
        )
    base_pair = None
    if scenario.get("base_pair"):
        start, end = scenario["base_pair"]
        base_pair = (tuple(float(to_exact(v)) for v in start), tuple(float(to_exact(v)) for v in end))

    return ScenarioEntry(
        name=name,
        operator=operator,
        p_exprs=p_exprs,
        q_exprs=q_exprs,
        chart_axes=tuple(chart_axes),
        witnesses=tuple(witnesses),
        certificates=tuple(certificates),
        expected_exponent=exponent,
        expected_gevrey=_fraction(scenario.get("expected_gevrey")),
        separation=float(to_exact(scenario.get("separation", SEPARATION_CONSTANT))),
        sigma_closed_form=closed_form,
        base_box=base_box,
        base_pair=base_pair,
        scan_ranges={**DEFAULT_SCAN_RANGES, **scenario.get("scan", {})},
        notes=spec.get("notes", ""),
        spec=spec,
    )


# ---- builders -------------------------------------------------------------

def _positive_int(value, name: str, minimum: int = 1) -> int:
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise CatalogueError(f"Parameter {name} must be an integer (got {value!r})")
    if number < minimum or number != float(value):
        raise CatalogueError(f"Parameter {name} must be an integer >= {minimum} (got {value!r})")
    return number


def _gevrey(exponent: str) -> str:
    return str(1 / Fraction(exponent))


def _elliptic2d() -> Dict:
    return {
        "name": "elliptic2d",
        "dimension": 2,
        "variables": ["x", "y"],
        "fields": [["1", "0"], ["0", "1"]],
        "order": 1,
        "sigma_closed_form": "1 + Abs(xi) + Abs(eta)",
        "notes": "Laplacian in the plane; rho_L is comparable to rho_0.",
        "scenario": {
            "p": {"base": ["0", "0"], "fiber": ["lam", "0"]},
            "q": {"base": ["0", "1"], "fiber": ["lam", "0"]},
            "chart": {
                "x": ["-1/2", "1/2", "1/2"],
                "y": ["-1/2", "3/2", "1/4"],
                "xi": ["lam/2", "5*lam/2", "lam/4"],
                "eta": ["-lam/2", "lam/2", "lam/2"],
            },
            "witnesses": [{"id": "lam_y", "expr": "lam*y"}],
            "certificates": [{"id": "flow_y", "segments": [{"kind": "hamiltonian", "field": 2, "duration": "1"}]}],
            "expected_exponent": "1",
            "expected_gevrey": "1",
        },
    }


def _baouendi_goulaouic(m: int = 2) -> Dict:
    m = _positive_int(m, "m")
    exponent = f"1/{m}"
    return {
        "name": f"baouendi_goulaouic({m})",
        "dimension": 3,
        "variables": ["x", "y", "t"],
        "fields": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", f"x^{m - 1}"]],
        "order": m,
        "sigma_closed_form": f"1 + Abs(xi) + Abs(eta) + Abs(x^{m - 1}*tau) + Abs(tau)^(1/{m})",
        "notes": "d/dy moves along the characteristic variety x = xi = eta = 0.",
        "scenario": {
            "p": {"base": ["0", "0", "0"], "fiber": ["0", "0", "lam"]},
            "q": {"base": ["0", "1", "0"], "fiber": ["0", "0", "lam"]},
            "chart": {
                "y": ["-1/4", "5/4", "1/8"],
                "eta": [f"-lam^(1/{m})", f"lam^(1/{m})", f"lam^(1/{m})/2"],
            },
            "witnesses": [{"id": "scaled_y", "expr": f"lam^(1/{m})*y"}],
            "certificates": [{"id": "flow_y", "segments": [{"kind": "hamiltonian", "field": 2, "duration": "1"}]}],
            "expected_exponent": exponent,
            "expected_gevrey": _gevrey(exponent),
            "base_box": {"lower": ["-1/2", "-1/2", "-1/2"], "upper": ["1/2", "3/2", "1/2"], "steps": ["1/4", "1/4", "1/4"]},
            "base_pair": [["0", "0", "0"], ["0", "1", "0"]],
        },
    }


_EXAMPLE6_CHART = {
    "x": ["-1/2", "1/2", "1/4"],
    "t": ["-1/2", "1/2", "1/4"],
    "xi": ["-lam/2", "lam/2", "lam/4"],
    "tau": ["lam/2", "5*lam/2", "lam/16"],
}


def _grusin(m: int = 2) -> Dict:
    m = _positive_int(m, "m", minimum=2)
    return {
        "name": f"grusin({m})",
        "dimension": 2,
        "variables": ["x", "t"],
        "fields": [["1", "0"], ["0", f"x^{m - 1}"]],
        "order": m,
        "sigma_closed_form": f"1 + Abs(xi) + Abs(x^{m - 1}*tau) + Abs(tau)^(1/{m})",
        "notes": "tau is annihilated by both Hamiltonian fields.",
        "scenario": {
            "p": {"base": ["0", "0"], "fiber": ["0", "lam"]},
            "q": {"base": ["0", "0"], "fiber": ["0", "2*lam"]},
            "chart": dict(_EXAMPLE6_CHART),
            "witnesses": [{"id": "tau", "expr": "tau"}],
            "certificates": [{"id": "ambient_tau", "segments": [{"kind": "ambient", "displacement": ["0", "0", "0", "lam"]}]}],
            "expected_exponent": "1",
            "expected_gevrey": "1",
            "separation": "1/4",
        },
    }


def _metivier() -> Dict:
    return {
        "name": "metivier",
        "dimension": 2,
        "variables": ["x", "t"],
        "fields": [["1", "0"], ["0", "x"], ["0", "t"]],
        "order": 2,
        "sigma_closed_form": "1 + Abs(xi) + Abs(x*tau) + Abs(tau)^(1/2) + Abs(t*tau)",
        "notes": "H of t*tau is tangent to the segment from p to q.",
        "scenario": {
            "p": {"base": ["0", "0"], "fiber": ["0", "lam"]},
            "q": {"base": ["0", "0"], "fiber": ["0", "2*lam"]},
            "chart": dict(_EXAMPLE6_CHART),
            "witnesses": [{"id": "sqrt_log_tau", "expr": "lam^(1/2)*log(tau)"}],
            "certificates": [{"id": "flow_t_tau", "segments": [{"kind": "hamiltonian", "field": 3, "duration": "-log(2)"}]}],
            "expected_exponent": "1/2",
            "expected_gevrey": "2",
            "separation": "1/4",
        },
    }


def _fedii(a: str = "FlatExp(x, 0)") -> Dict:
    return {
        "name": f"fedii({a})",
        "dimension": 2,
        "variables": ["x", "t"],
        "fields": [["1", "0"], ["0", str(a)]],
        "mode": EvaluationMode.PRINCIPAL_ONLY,
        "order": 1,
        "characteristic_symbols": ["xi", "x*tau"],
        "notes": "No bracket condition at x = 0; t*tau is annihilated on x = 0.",
        "scenario": {
            "p": {"base": ["0", "0"], "fiber": ["0", "lam"]},
            "q": {"base": ["0", "1"], "fiber": ["0", "lam"]},
            "chart": {
                "x": ["-1/2", "1/2", "1/4"],
                "t": ["-1/4", "5/4", "1/4"],
                "xi": ["-lam/2", "lam/2", "lam/4"],
                "tau": ["lam/2", "3*lam/2", "lam/4"],
            },
            "witnesses": [{"id": "t_tau", "expr": "t*tau", "region": {"x": ["-1/2", "1/2", 5]}}],
            "certificates": [{"id": "ambient_t", "segments": [{"kind": "ambient", "displacement": ["0", "1", "0", "0"]}]}],
            "expected_exponent": None,
            "expected_gevrey": None,
        },
    }


def _example7(k: int = 2, m: int = 3) -> Dict:
    k = _positive_int(k, "k")
    m = _positive_int(m, "m")
    if k > m:
        raise CatalogueError(f"example7 needs k <= m (got k={k}, m={m})")
    delta = f"lam^(-1/{m})"
    exponent = str(Fraction(k, m))
    return {
        "name": f"example7({k},{m})",
        "dimension": 3,
        "variables": ["x", "y", "t"],
        "fields": [["1", "0", "0"], ["0", f"x^{k - 1}", "0"], ["0", "0", f"x^{m - 1}"]],
        "order": m,
        "sigma_closed_form": (
            f"Abs(xi) + Abs(x^{k - 1}*eta) + Abs(x^{m - 1}*tau) + Abs(eta)^(1/{k}) + Abs(tau)^(1/{m})"
        ),
        "notes": "Flow of x^(k-1) d/dy at x = delta for time delta^(1-k).",
        "scenario": {
            "p": {"base": [delta, "0", "0"], "fiber": ["0", "0", "lam"]},
            "q": {"base": [delta, "1", "0"], "fiber": ["0", "0", "lam"]},
            "chart": {
                "x": ["0", f"2*{delta}", f"{delta}/4"],
                "y": ["-1/4", "5/4", "1/8"],
                "xi": [f"-lam^(1/{m})", f"lam^(1/{m})", f"lam^(1/{m})/2"],
                "eta": [f"-lam^({k}/{m})/2", f"lam^({k}/{m})/2", f"lam^({k}/{m})/4"],
            },
            "witnesses": [{"id": "scaled_y", "expr": f"lam^({k}/{m})*y"}],
            "certificates": [{
                "id": "flow_y",
                "segments": [{"kind": "hamiltonian", "field": 2, "duration": f"lam^(({k}-1)/{m})"}],
            }],
            "expected_exponent": exponent,
            "expected_gevrey": _gevrey(exponent),
        },
    }


def _example8(m: int = 2, r: int = 2) -> Dict:
    m = _positive_int(m, "m", minimum=2)
    r = _positive_int(r, "r", minimum=2)
    delta = f"lam^(-({m}-1)/({m}*{r}))"
    exponent = str(Fraction(m * r - m + 1, m * r))
    # the flow of t^r tau from (0, delta; 0, lam) for time -delta^(1-r)
    end_t = f"{r}^(-1/({r}-1))*{delta}"
    end_tau = f"{r}^({r}/({r}-1))*lam"
    return {
        "name": f"example8({m},{r})",
        "dimension": 2,
        "variables": ["x", "t"],
        "fields": [["1", "0"], ["0", f"x^{m - 1}"], ["0", f"t^{r}"]],
        "order": m,
        "sigma_closed_form": f"1 + Abs(xi) + Abs(x^{m - 1}*tau) + Abs(tau)^(1/{m}) + Abs(t^{r}*tau)",
        "notes": "Backward flow of t^r tau; tau grows by a fixed factor.",
        "scenario": {
            "p": {"base": ["0", delta], "fiber": ["0", "lam"]},
            "q": {"base": ["0", end_t], "fiber": ["0", end_tau]},
            "chart": {
                "x": ["-1/4", "1/4", "1/4"],
                "t": [f"-{delta}/4", f"5*{delta}/4", f"{delta}/8"],
                "xi": ["-lam/4", "lam/4", "lam/4"],
                "tau": ["lam/2", f"{end_tau} + lam/2", "lam/8"],
            },
            "witnesses": [{"id": "scaled_tau", "expr": f"lam^((1-{m})/({m}*{r}))*tau"}],
            "certificates": [{
                "id": "flow_t_tau",
                "segments": [{"kind": "hamiltonian", "field": 3, "duration": f"-({delta})^(1-{r})"}],
            }],
            "expected_exponent": exponent,
            "expected_gevrey": _gevrey(exponent),
        },
    }


EXAMPLE9_B = "x^8/56 + y^8/56 + x^4*y^2/12 - x^6/180"


def _example9() -> Dict:
    b_x = "x^7/7 + x^3*y^2/3 - x^5/30"
    b_y = "y^7/7 + x^4*y/6"
    return {
        "name": "example9",
        "dimension": 3,
        "variables": ["x", "y", "t"],
        "fields": [["1", "0", f"-({b_y})"], ["0", "1", b_x]],
        "order": 6,
        "notes": f"X = d/dx - b_y d/dt, Y = d/dy + b_x d/dt with b = {EXAMPLE9_B}.",
        "scenario": {
            "p": {"base": ["0", "0", "0"], "fiber": ["0", "0", "lam"]},
            "q": {"base": ["0", "0", "1"], "fiber": ["0", "0", "lam"]},
            "chart": {"t": ["-1/4", "5/4", "1/4"], "tau": ["lam/2", "3*lam/2", "lam/4"]},
            "witnesses": [{
                "id": "prop51",
                "kind": WitnessKind.PROP51,
                "region": {"x": ["-1/4", "1/4", 5], "y": ["-1/4", "1/4", 5]},
            }],
            "certificates": [{"id": "ambient_t", "segments": [{"kind": "ambient", "displacement": ["0", "0", "1", "0", "0", "0"]}]}],
            "expected_exponent": "1",
            "expected_gevrey": "1",
        },
    }


def _heisenberg() -> Dict:
    return {
        "name": "heisenberg",
        "dimension": 3,
        "variables": ["x", "y", "t"],
        "fields": [["1", "0", "0"], ["0", "1", "x"]],
        "order": 2,
        "sigma_closed_form": "1 + Abs(xi) + Abs(eta + x*tau) + Abs(tau)^(1/2)",
        "notes": "Symplectic characteristic variety; the witness is exactly transverse.",
        "scenario": {
            "p": {"base": ["0", "0", "0"], "fiber": ["0", "0", "lam"]},
            "q": {"base": ["0", "0", "1"], "fiber": ["0", "0", "lam"]},
            "chart": {"t": ["-1/4", "5/4", "1/4"], "tau": ["lam/2", "3*lam/2", "lam/4"]},
            "witnesses": [{
                "id": "transverse",
                "expr": "t*tau + (x*xi + y*eta)/2",
                "region": {"x": ["-1/2", "1/2", 3], "y": ["-1/2", "1/2", 3]},
            }],
            "certificates": [{"id": "ambient_t", "segments": [{"kind": "ambient", "displacement": ["0", "0", "1", "0", "0", "0"]}]}],
            "expected_exponent": "1",
            "expected_gevrey": "1",
            "base_box": {"lower": ["-1/2", "-1/2", "-1/2"], "upper": ["1/2", "3/2", "1/2"], "steps": ["1/4", "1/4", "1/4"]},
            "base_pair": [["0", "0", "0"], ["0", "1", "0"]],
        },
    }


# name -> (builder, parameter names, signature shown by 'catalogue list')
REGISTRY: Dict[str, Tuple[Callable[..., Dict], Tuple[str, ...]]] = {
    "elliptic2d": (_elliptic2d, ()),
    "grusin": (_grusin, ("m",)),
    "metivier": (_metivier, ()),
    "baouendi_goulaouic": (_baouendi_goulaouic, ("m",)),
    "fedii": (_fedii, ("a",)),
    "example7": (_example7, ("k", "m")),
    "example8": (_example8, ("m", "r")),
    "example9": (_example9, ()),
    "heisenberg": (_heisenberg, ()),
}

PAIRS = {"example6_pair": (("grusin", {"m": 2}), ("metivier", {}))}

_NAME_PATTERN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def list_entries() -> List[str]:
    """Registered names with their parameters, e.g. 'example7(k,m)'."""
    names = []
    for name, (_, params) in REGISTRY.items():
        names.append(f"{name}({','.join(params)})" if params else name)
    names.extend(PAIRS)
    return sorted(names)


def parse_entry_name(text: str) -> Tuple[str, Dict[str, str]]:
    """Split 'example7(2,3)' into ('example7', {'k': '2', 'm': '3'})."""
    match = _NAME_PATTERN.match(text)
    if not match:
        raise CatalogueError(f"Malformed entry name '{text}'")
    name, args = match.group(1), match.group(2)
    if not args:
        return name, {}
    if name not in REGISTRY:
        raise CatalogueError(_unknown(name))
    params = REGISTRY[name][1]
    values = [part.strip() for part in args.split(",")] if len(params) > 1 else [args.strip()]
    if len(values) > len(params):
        raise CatalogueError(f"Entry '{name}' takes parameters ({', '.join(params)})")
    return name, dict(zip(params, values))


def _unknown(name: str) -> str:
    return f"Unknown catalogue entry '{name}'. Registered: {', '.join(list_entries())}"


def entry_spec(name: str, **params) -> Dict:
    """JSON-compatible spec dict of a registered entry."""
    base, parsed = parse_entry_name(name)
    parsed.update({k: v for k, v in params.items() if v is not None})
    if base not in REGISTRY:
        raise CatalogueError(_unknown(base))
    builder, allowed = REGISTRY[base]
    extra = set(parsed) - set(allowed)
    if extra:
        raise CatalogueError(f"Entry '{base}' does not take parameters {sorted(extra)}")
    return builder(**parsed)


@lru_cache(maxsize=None)
def _cached_entry(name: str, frozen_params: Tuple[Tuple[str, str], ...]) -> ScenarioEntry:
    spec = entry_spec(name, **dict(frozen_params))
    try:
        return compile_entry(spec)
    except ExpressionError as e:
        raise CatalogueError(f"Entry '{name}' does not compile: {e}")


def get_entry(name: str, **params) -> Union[ScenarioEntry, ScenarioPair]:
    """
    Look up a registered entry.

    Args:
        name: Registered name, optionally with parameters as in 'grusin(3)'
        **params: Builder parameters (k, m, r, a); None values are ignored

    Returns:
        ScenarioEntry, or ScenarioPair for pair entries

    Raises:
        CatalogueError: If the name is unknown or the parameters are invalid
    """
    base, parsed = parse_entry_name(name)
    if base in PAIRS:
        (first, first_params), (second, second_params) = PAIRS[base]
        return ScenarioPair(base, get_entry(first, **first_params), get_entry(second, **second_params))
    if base not in REGISTRY:
        raise CatalogueError(_unknown(base))
    parsed.update({k: str(v) for k, v in params.items() if v is not None})
    allowed = REGISTRY[base][1]
    frozen = tuple(sorted((k, str(v)) for k, v in parsed.items() if k in allowed))
    extra = set(parsed) - set(allowed)
    if extra:
        raise CatalogueError(f"Entry '{base}' does not take parameters {sorted(extra)}")
    return _cached_entry(base, frozen)


def compare_closed_form(
    entry: ScenarioEntry,
    samples: int = CLOSED_FORM_SAMPLES,
    fiber_range: Tuple[float, float] = CLOSED_FORM_FIBER_RANGE,
    seed: int = CLOSED_FORM_SEED,
) -> Tuple[float, float]:
    """
    Min and max of sigma~ / closed form over random phase points.

    Base points are uniform in [-1, 1]^d; fiber directions are uniform on the
    sphere with log-uniform length in fiber_range.

    Raises:
        CatalogueError: If the entry has no closed form
    """
    if entry.sigma_closed_form is None:
        raise CatalogueError(f"Entry '{entry.name}' has no closed form for sigma~")
    space = entry.space
    d = space.dimension
    rng = np.random.default_rng(seed)
    base = rng.uniform(-1.0, 1.0, size=(samples, d))
    directions = rng.normal(size=(samples, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = np.exp(rng.uniform(np.log(fiber_range[0]), np.log(fiber_range[1]), size=(samples, 1)))
    z = np.concatenate([base, directions * lengths], axis=1)
    closed = sp.lambdify(list(space.coordinates), entry.sigma_closed_form, modules="numpy")
    reference = np.broadcast_to(np.asarray(closed(*[z[:, i] for i in range(2 * d)]), dtype=float), (samples,))
    ratios = entry.operator.sigma_tilde(z) / reference
    return float(np.min(ratios)), float(np.max(ratios))
