"""
Scan Module
Per-scale distance bounds over dyadic lambda values and log-log exponent fits.
"""
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO

import numpy as np
import pandas as pd

from modules.catalogue import ScenarioEntry, ScenarioPair, compile_entry
from modules.grid_search import upper_bound_distance
from modules.metric import (
    DistanceEstimate,
    MetricError,
    certificate_upper_bound,
    floor_lower_bound,
    witness_lower_bound,
)
from modules.symcalc import EvaluationMode
from utils.formatters import format_number, print_status
from utils.validators import validate_scan_lambdas


class ScanMethod:
    """Sources of the upper bound"""
    CERTIFICATE = "certificate"
    GRID = "grid"
    BOTH = "both"

    ALL = (CERTIFICATE, GRID, BOTH)


CSV_COLUMNS = ["lambda", "lower", "upper", "rho0", "witness_id", "method"]
DROPPED_SMALLEST = 2
MIN_FIT_POINTS = 3


@dataclass
class ScanRow:
    lam: float
    lower: float
    upper: float
    rho0: float
    witness_id: str
    method: str
    slack: float = 0.0
    ratio: Optional[float] = None
    floor: Optional[float] = None
    path: str = ""

    def is_consistent(self) -> bool:
        return self.lower <= self.upper * (1.0 + self.slack)


def fit_window(lambdas: Sequence[float]) -> slice:
    """Drop the two smallest lambda values when enough remain."""
    if len(lambdas) - DROPPED_SMALLEST >= MIN_FIT_POINTS:
        return slice(DROPPED_SMALLEST, None)
    return slice(0, None)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> (float, float):
    """Least-squares slope and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual ** 2)) / total
    return float(slope), r2


def fit_loglog(lambdas: Sequence[float], values: Sequence[float]) -> (float, float):
    """Slope of log(value) against log(lambda) on the fit window."""
    window = fit_window(lambdas)
    lams = np.asarray(lambdas, dtype=float)[window]
    vals = np.asarray(values, dtype=float)[window]
    if np.any(vals <= 0):
        raise MetricError("Cannot fit a log-log slope through non-positive values")
    return linear_fit(np.log(lams), np.log(vals))


@dataclass
class ScanResult:
    """Rows ordered by lambda with fitted exponents."""
    entry_name: str
    method: str
    rows: List[ScanRow]
    expected_exponent: Optional[float] = None
    expected_exact: Optional[str] = None
    fits: Dict[str, float] = field(default_factory=dict)

    @property
    def lambdas(self) -> List[float]:
        return [row.lam for row in self.rows]

    def column(self, name: str) -> List[float]:
        return [getattr(row, name) for row in self.rows]

    def fit(self):
        """Fill the fit summary from the rows."""
        lams = self.lambdas
        self.fits["slope_lower"], self.fits["r2_lower"] = fit_loglog(lams, self.column("lower"))
        self.fits["slope_upper"], self.fits["r2_upper"] = fit_loglog(lams, self.column("upper"))
        floors = self.column("floor")
        if all(f is not None and f > 0 for f in floors):
            self.fits["slope_floor"], _ = fit_loglog(lams, floors)
        window = fit_window(lams)
        rho = np.asarray(self.column("rho0"))[window]
        lower = np.asarray(self.column("lower"))[window]
        self.fits["log_slope_lower"], self.fits["log_r2_lower"] = linear_fit(np.log(rho), lower)
        self.fits["cap_ratio"] = float(max(row.upper / row.rho0 for row in self.rows))
        return self

    @property
    def slope_lower(self) -> float:
        return self.fits["slope_lower"]

    @property
    def slope_upper(self) -> float:
        return self.fits["slope_upper"]

    def is_consistent(self) -> bool:
        return all(row.is_consistent() for row in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[row.lam, row.lower, row.upper, row.rho0, row.witness_id, row.method] for row in self.rows],
            columns=CSV_COLUMNS,
        )

    def write_csv(self, stream: TextIO):
        self.to_frame().to_csv(stream, index=False, float_format="%.9g", lineterminator="\n")

    def summary(self) -> Dict:
        """Fit summary with the fixed keys first, 9 significant digits."""
        def rounded(value):
            return None if value is None else float(format_number(value))

        summary = {
            "slope_lower": rounded(self.fits.get("slope_lower")),
            "slope_upper": rounded(self.fits.get("slope_upper")),
            "r2_lower": rounded(self.fits.get("r2_lower")),
            "r2_upper": rounded(self.fits.get("r2_upper")),
            "expected_exponent": rounded(self.expected_exponent),
        }
        for key in ("slope_floor", "log_slope_lower", "log_r2_lower", "cap_ratio"):
            if key in self.fits:
                summary[key] = rounded(self.fits[key])
        summary["entry"] = self.entry_name
        summary["method"] = self.method
        summary["consistent"] = self.is_consistent()
        return summary

    def write_json(self, stream: TextIO):
        stream.write(json.dumps(self.summary(), indent=2) + "\n")

    def write_plotdata(self, prefix: str) -> List[str]:
        """Two-column log2(lambda) log2(value) files for lower and upper."""
        written = []
        for name in ("lower", "upper"):
            path = f"{prefix}_{name}.dat"
            with open(path, "w") as f:
                for row in self.rows:
                    f.write(f"{format_number(math.log2(row.lam))} {format_number(math.log2(getattr(row, name)))}\n")
            written.append(path)
        return written


def _upper_estimate(entry: ScenarioEntry, lam: float, method: str, p, q) -> (DistanceEstimate, str):
    op = entry.operator
    if method == ScanMethod.CERTIFICATE:
        return certificate_upper_bound(op, entry.certificate(lam), q), ScanMethod.CERTIFICATE
    if method == ScanMethod.GRID:
        return upper_bound_distance(op, entry.chart(lam), p, q), ScanMethod.GRID
    certificate = certificate_upper_bound(op, entry.certificate(lam), q)
    grid = upper_bound_distance(op, entry.chart(lam), p, q)
    best = certificate if certificate.upper <= grid.upper else grid
    return best, ScanMethod.BOTH


def evaluate_scale(entry: ScenarioEntry, lam: float, method: str = ScanMethod.CERTIFICATE) -> ScanRow:
    """
    Witness lower bound and certificate and/or grid upper bound at one scale.

    Raises:
        MetricError: If a bound cannot be computed
    """
    if method not in ScanMethod.ALL:
        raise MetricError(f"Unknown scan method '{method}'")
    op = entry.operator
    p, q = entry.p(lam), entry.q(lam)
    lower = witness_lower_bound(op, entry.witness(lam), p, q)
    upper, label = _upper_estimate(entry, lam, method, p, q)
    floor = None
    if op.mode == EvaluationMode.BRACKET:
        floor = floor_lower_bound(op, op.order, lam, p, q).lower
    return ScanRow(
        lam=float(lam),
        lower=float(lower.lower),
        upper=float(upper.upper),
        rho0=float(lower.rho0),
        witness_id=lower.witness_id,
        method=label,
        slack=upper.slack,
        ratio=lower.ratio,
        floor=floor,
        path=upper.path,
    )


def _scale_worker(spec: Dict, lam: float, method: str) -> ScanRow:
    return evaluate_scale(compile_entry(spec), lam, method)


def scan_exponent(
    entry: ScenarioEntry,
    lambdas: Optional[Sequence[float]] = None,
    method: str = ScanMethod.CERTIFICATE,
    jobs: int = 1,
) -> ScanResult:
    """
    Scan dyadic scales and fit exponents.

    Args:
        entry: Scenario entry
        lambdas: Scales (default: the entry's range for the method)
        method: certificate, grid or both
        jobs: Worker processes; rows are ordered by lambda regardless

    Returns:
        Fitted ScanResult

    Raises:
        ValidationError: If the scales are not >= 2^4 and dyadic
        MetricError: If a bound fails at some scale
    """
    if lambdas is None:
        lambdas = entry.scan_lambdas(method)
    lambdas = validate_scan_lambdas(lambdas)
    if len(lambdas) < 2:
        raise MetricError("A scan needs at least two lambda values")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_scale_worker, entry.spec, lam, method) for lam in lambdas]
            rows = [future.result() for future in futures]
    else:
        rows = []
        for lam in lambdas:
            row = evaluate_scale(entry, lam, method)
            print_status(
                f"{entry.name} lambda = 2^{math.log2(lam):g}: "
                f"lower {format_number(row.lower)}, upper {format_number(row.upper)}"
            )
            rows.append(row)
    rows.sort(key=lambda row: row.lam)

    exact = entry.expected_exponent
    return ScanResult(
        entry_name=entry.name,
        method=method,
        rows=rows,
        expected_exponent=float(exact) if exact is not None else None,
        expected_exact=str(exact) if exact is not None else None,
    ).fit()


def compare_pair_scan(
    pair: ScenarioPair,
    lambdas: Optional[Sequence[float]] = None,
    jobs: int = 1,
) -> Dict:
    """
    Ratio of the first operator's lower bound to the second's upper bound per scale.

    Returns:
        Dict with both ScanResults, the ratios and whether they increase strictly
    """
    first = scan_exponent(pair.first, lambdas, ScanMethod.CERTIFICATE, jobs)
    second = scan_exponent(pair.second, lambdas, ScanMethod.CERTIFICATE, jobs)
    ratios = [a.lower / b.upper for a, b in zip(first.rows, second.rows)]
    return {
        "first": first,
        "second": second,
        "lambdas": first.lambdas,
        "ratios": ratios,
        "increasing": all(later > earlier for earlier, later in zip(ratios, ratios[1:])),
    }
