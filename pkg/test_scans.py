#!/usr/bin/env python3
"""
Test exponent scans, fits and scan output files
"""
import io
import json
import os
import sys
import tempfile

from modules.catalogue import get_entry
from modules.scan import (
    CSV_COLUMNS,
    ScanMethod,
    compare_pair_scan,
    evaluate_scale,
    fit_window,
    scan_exponent,
)
from utils.validators import ValidationError, parse_exponent_range

LAMBDAS = parse_exponent_range("10:16")


def test_fit_window_drops_two_smallest():
    assert fit_window(LAMBDAS) == slice(2, None)
    assert fit_window(LAMBDAS[:4]) == slice(0, None)


def test_elliptic_slopes_are_one():
    result = scan_exponent(get_entry("elliptic2d"), LAMBDAS, ScanMethod.CERTIFICATE)
    assert abs(result.slope_lower - 1.0) < 0.05
    assert abs(result.slope_upper - 1.0) < 0.05
    assert result.is_consistent()
    assert result.fits["cap_ratio"] <= 1.0


def test_example7_slopes():
    result = scan_exponent(get_entry("example7", k=2, m=3), LAMBDAS)
    assert abs(result.slope_lower - 2 / 3) < 0.02
    assert abs(result.slope_upper - 2 / 3) < 0.02
    assert result.expected_exact == "2/3"
    assert result.is_consistent()


def test_example8_slopes():
    result = scan_exponent(get_entry("example8", m=2, r=2), LAMBDAS)
    assert abs(result.slope_lower - 0.75) < 0.02
    assert abs(result.slope_upper - 0.75) < 0.02
    assert result.is_consistent()


def test_baouendi_goulaouic_slopes_follow_the_order():
    for m, exponent in ((2, 1 / 2), (3, 1 / 3)):
        result = scan_exponent(get_entry("baouendi_goulaouic", m=m), LAMBDAS)
        assert abs(result.slope_lower - exponent) < 0.02, (m, result.slope_lower)
        assert abs(result.slope_upper - exponent) < 0.02, (m, result.slope_upper)
        assert result.fits["r2_lower"] >= 0.98 and result.fits["r2_upper"] >= 0.98
        assert result.is_consistent()


def test_metivier_slopes_are_one_half():
    result = scan_exponent(get_entry("metivier"), LAMBDAS)
    assert abs(result.slope_lower - 0.5) < 0.02
    assert abs(result.slope_upper - 0.5) < 0.02
    assert result.expected_exact == "1/2"
    assert result.is_consistent()


def test_floor_slope_follows_bracket_order():
    result = scan_exponent(get_entry("grusin", m=2), LAMBDAS)
    assert abs(result.fits["slope_floor"] - 0.5) < 0.02
    assert abs(result.slope_lower - 1.0) < 0.02
    for name, params, exponent in (
        ("example7", {"k": 2, "m": 3}, 1 / 3),
        ("baouendi_goulaouic", {"m": 2}, 1 / 2),
        ("baouendi_goulaouic", {"m": 3}, 1 / 3),
        ("metivier", {}, 1 / 2),
    ):
        result = scan_exponent(get_entry(name, **params), LAMBDAS)
        assert abs(result.fits["slope_floor"] - exponent) < 0.02, (name, params, result.fits["slope_floor"])


def test_rows_sorted_and_parallel_matches_serial():
    entry = get_entry("elliptic2d")
    lambdas = LAMBDAS[:3]
    serial = scan_exponent(entry, lambdas, ScanMethod.CERTIFICATE, jobs=1)
    parallel = scan_exponent(entry, lambdas, ScanMethod.CERTIFICATE, jobs=2)
    assert serial.lambdas == lambdas == parallel.lambdas
    assert serial.column("lower") == parallel.column("lower")
    assert serial.column("upper") == parallel.column("upper")


def test_grid_and_both_methods():
    entry = get_entry("elliptic2d")
    lam = 2.0 ** 8
    grid = evaluate_scale(entry, lam, ScanMethod.GRID)
    both = evaluate_scale(entry, lam, ScanMethod.BOTH)
    certificate = evaluate_scale(entry, lam, ScanMethod.CERTIFICATE)
    assert grid.method == "grid"
    assert both.upper <= min(grid.upper, certificate.upper)
    assert grid.is_consistent()


def test_scan_rejects_bad_lambdas():
    entry = get_entry("elliptic2d")
    for lambdas in ([8.0, 16.0, 32.0], [16.0, 48.0, 96.0], [64.0, 32.0, 128.0]):
        try:
            scan_exponent(entry, lambdas)
        except ValidationError:
            continue
        raise AssertionError(f"accepted {lambdas}")


def test_example6_pair_ratio_grows():
    comparison = compare_pair_scan(get_entry("example6_pair"), parse_exponent_range("10:14"))
    assert comparison["increasing"]
    ratios = comparison["ratios"]
    # lam against lam^(1/2): each doubling multiplies the ratio by about sqrt(2)
    assert 1.3 < ratios[-1] / ratios[-2] < 1.5


def test_csv_and_json_output():
    result = scan_exponent(get_entry("example7", k=2, m=3), LAMBDAS[:4])
    stream = io.StringIO()
    result.write_csv(stream)
    lines = stream.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 5
    first = lines[1].split(",")
    assert float(first[0]) == 1024.0
    assert first[4] == "scaled_y" and first[5] == "certificate"

    stream = io.StringIO()
    result.write_json(stream)
    summary = json.loads(stream.getvalue())
    assert list(summary)[:5] == ["slope_lower", "slope_upper", "r2_lower", "r2_upper", "expected_exponent"]
    assert abs(summary["expected_exponent"] - 2 / 3) < 1e-8
    assert summary["consistent"] is True


def test_plotdata_files():
    result = scan_exponent(get_entry("elliptic2d"), LAMBDAS[:3])
    with tempfile.TemporaryDirectory() as tmp:
        written = result.write_plotdata(os.path.join(tmp, "elliptic"))
        assert [os.path.basename(path) for path in written] == ["elliptic_lower.dat", "elliptic_upper.dat"]
        with open(written[0]) as f:
            rows = [line.split() for line in f.read().splitlines()]
        assert [float(row[0]) for row in rows] == [10.0, 11.0, 12.0]
        assert abs(float(rows[0][1]) - 10.0) < 1e-6


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Exponent Scans")
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
