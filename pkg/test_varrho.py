#!/usr/bin/env python3
"""
Test the base-space distances varrho_R
"""
import sys

import numpy as np

from modules.catalogue import get_entry
from modules.grid_search import BaseBox, varrho_R
from modules.metric import MetricError, UnreachableError
from modules.scan import linear_fit

RADII = [16.0, 64.0, 256.0, 1024.0]


def _varrho(name, R, **params):
    entry = get_entry(name, **params)
    op = entry.operator
    x, y = entry.base_pair
    return varrho_R(op.fields, op.effective_symbol, x, y, R, entry.box())


def test_same_point_is_zero():
    entry = get_entry("heisenberg")
    op = entry.operator
    x = entry.base_pair[0]
    assert varrho_R(op.fields, op.effective_symbol, x, x, 64.0, entry.box()) == 0.0


def test_elliptic_scales_linearly():
    op = get_entry("elliptic2d").operator
    box = BaseBox((-1.0, -1.0), (1.0, 2.0), (0.25, 0.25))
    for R in (4.0, 32.0):
        value = varrho_R(op.fields, op.effective_symbol, [0.0, 0.0], [0.0, 1.0], R, box)
        assert abs(value - R) < 1e-6 * R


def test_heisenberg_scales_like_root():
    values = [_varrho("heisenberg", R) for R in RADII]
    for R, value in zip(RADII, values):
        assert 0.9 <= value / R ** 0.5 <= 1.1, (R, value)
    slope, r2 = linear_fit(np.log(RADII), np.log(values))
    assert abs(slope - 0.5) < 0.05
    assert r2 > 0.99


def test_bracket_order_floor_for_baouendi_goulaouic():
    for R in (64.0, 256.0):
        value = _varrho("baouendi_goulaouic", R, m=2)
        assert value >= 0.5 * R ** 0.5


def test_dyadic_stability():
    for name, params in (("heisenberg", {}), ("baouendi_goulaouic", {"m": 2})):
        ratio = _varrho(name, 128.0, **params) / _varrho(name, 64.0, **params)
        assert 1.0 <= ratio <= 2.0, (name, ratio)


def test_radius_below_one_rejected():
    entry = get_entry("heisenberg")
    op = entry.operator
    x, y = entry.base_pair
    try:
        varrho_R(op.fields, op.effective_symbol, x, y, 0.5, entry.box())
    except MetricError:
        return
    raise AssertionError("R < 1 accepted")


def test_point_outside_box_is_unreachable():
    entry = get_entry("heisenberg")
    op = entry.operator
    try:
        varrho_R(op.fields, op.effective_symbol, [0.0, 0.0, 0.0], [0.0, 3.0, 0.0], 16.0, entry.box())
    except UnreachableError:
        return
    raise AssertionError("point outside the box accepted")


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing varrho_R")
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
