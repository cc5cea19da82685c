#!/usr/bin/env python3
"""
Test lattice upper bounds on charts
"""
import sys

import numpy as np

from modules.catalogue import get_entry
from modules.grid_search import (
    GRID_SLACK,
    Chart,
    full_chart,
    refined_upper_bound,
    upper_bound_distance,
    usable_fields,
)
from modules.metric import UnreachableError, certificate_upper_bound, rho0, witness_lower_bound

LAM = 2.0 ** 10


def test_elliptic_grid_is_comparable_to_rho0():
    entry = get_entry("elliptic2d")
    p, q = entry.p(LAM), entry.q(LAM)
    estimate = upper_bound_distance(entry.operator, entry.chart(LAM), p, q)
    assert LAM / 2 <= estimate.upper <= 2 * LAM
    assert 0.5 <= estimate.upper / rho0(p, q) <= 2.0
    assert estimate.slack == GRID_SLACK
    assert estimate.grid["usable_fields"] == [1, 2]


def test_example6_second_operator_is_cheap():
    entry = get_entry("metivier")
    p, q = entry.p(LAM), entry.q(LAM)
    estimate = upper_bound_distance(entry.operator, entry.chart(LAM), p, q)
    lower = witness_lower_bound(entry.operator, entry.witness(LAM), p, q).lower
    assert estimate.upper <= 1.5 * LAM ** 0.5
    assert lower <= estimate.upper * (1 + GRID_SLACK)
    # the direct ambient route costs lam
    assert estimate.upper < 0.1 * LAM


def test_grid_matches_certificates_across_scales():
    for name, params in (("grusin", {"m": 2}), ("metivier", {}), ("example8", {"m": 2, "r": 2})):
        entry = get_entry(name, **params)
        for lam in (2.0 ** 8, 2.0 ** 10, 2.0 ** 12):
            p, q = entry.p(lam), entry.q(lam)
            grid = upper_bound_distance(entry.operator, entry.chart(lam), p, q).upper
            certificate = certificate_upper_bound(entry.operator, entry.certificate(lam), q).upper
            lower = witness_lower_bound(entry.operator, entry.witness(lam), p, q).lower
            assert certificate / 4 <= grid <= 4 * certificate, (name, lam, grid, certificate)
            assert lower <= grid * (1 + GRID_SLACK), (name, lam, lower, grid)


def test_refinement_never_increases_the_bound():
    entry = get_entry("elliptic2d")
    p, q = entry.p(LAM), entry.q(LAM)
    estimates = refined_upper_bound(entry.operator, entry.chart(LAM), p, q, levels=1)
    assert len(estimates) == 2
    assert estimates[1].upper <= estimates[0].upper


def test_incumbent_caps_the_result():
    entry = get_entry("elliptic2d")
    p, q = entry.p(LAM), entry.q(LAM)
    estimate = upper_bound_distance(entry.operator, entry.chart(LAM), p, q, incumbent=LAM / 4)
    assert estimate.upper == LAM / 4
    assert estimate.path == "grid: incumbent"


def test_triangle_inequality_on_a_shared_chart():
    entry = get_entry("elliptic2d")
    op = entry.operator
    chart = entry.chart(LAM)
    p = np.array([0.0, 0.0, LAM, 0.0])
    q = np.array([0.0, 0.5, LAM, 0.0])
    r = np.array([0.0, 1.0, LAM, 0.0])
    d_pq = upper_bound_distance(op, chart, p, q).upper
    d_qr = upper_bound_distance(op, chart, q, r).upper
    d_pr = upper_bound_distance(op, chart, p, r).upper
    assert d_pr <= (d_pq + d_qr) * (1 + 1e-9)


def test_points_outside_the_box_are_unreachable():
    entry = get_entry("elliptic2d")
    p = entry.p(LAM)
    q = np.array([0.0, 5.0, LAM, 0.0])
    try:
        upper_bound_distance(entry.operator, entry.chart(LAM), p, q)
    except UnreachableError:
        return
    raise AssertionError("q outside the chart accepted")


def test_frozen_coordinates_must_agree():
    entry = get_entry("heisenberg")
    p = entry.p(LAM)
    q = entry.q(LAM).copy()
    q[0] = 0.25
    try:
        upper_bound_distance(entry.operator, entry.chart(LAM), p, q)
    except UnreachableError:
        return
    raise AssertionError("p and q differing on a frozen axis accepted")


def test_usable_fields_respect_frozen_axes():
    heisenberg = get_entry("heisenberg")
    chart = heisenberg.chart(LAM)
    assert usable_fields(heisenberg.operator, chart, heisenberg.p(LAM), heisenberg.q(LAM)) == []

    grusin = get_entry("grusin", m=2)
    assert usable_fields(grusin.operator, grusin.chart(LAM), grusin.p(LAM), grusin.q(LAM)) == [0, 1]


def test_chart_lattice_helpers():
    chart = Chart(active=(1, 3), lower=(0.0, 1.0), upper=(1.0, 3.0), steps=(0.25, 0.5))
    assert chart.cell_count() == 25
    assert chart.key(np.array([9.0, 0.5, 9.0, 2.0])) == (2, 2)
    assert chart.contains(np.array([0.0, 1.0, 0.0, 3.0]))
    assert not chart.contains(np.array([0.0, 1.5, 0.0, 3.0]))
    assert chart.refined().steps == (0.125, 0.25)
    try:
        Chart(active=(0,), lower=(1.0,), upper=(0.0,), steps=(0.1,))
    except Exception:
        pass
    else:
        raise AssertionError("empty chart axis accepted")


def test_full_chart_contains_both_points():
    entry = get_entry("grusin", m=2)
    p, q = entry.p(16.0), entry.q(16.0)
    chart = full_chart(entry.operator, p, q)
    assert chart.active == (0, 1, 2, 3)
    assert chart.contains(p) and chart.contains(q)


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Grid Search")
    print("=" * 70)
    failed = 0
    tests = [(name, func) for name, func in list(globals().items()) if name.startswith("test_")]
    for name, func in tests:
        try:
            func()
            print(f"✓ PASS: {name}")
        except Exception as e:
            failed += 1
            print(f"✗ FAIL: {name}: {e!r}")
    print("=" * 70)
    sys.exit(1 if failed else 0)
