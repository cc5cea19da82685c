#!/usr/bin/env python3
"""
Test the phase-space witness built from the divergence-form solution
"""
import sys

import numpy as np
import sympy as sp

from modules.catalogue import get_entry
from modules.constructions import (
    FLAGSHIP_B,
    POTENTIAL_LOOP_TOLERANCE,
    ConstructionError,
    PotentialInconsistencyError,
    WeightPolynomial,
    build_prop51_witness,
    flagship_prop51_witness,
    hamiltonian_ratio,
    integrate_potential,
    solve_divergence_weighted,
)
from modules.expressions import parse_expression
from modules.metric import WitnessError, certificate_upper_bound, witness_lower_bound

X, Y = sp.symbols("x y", real=True)
LAM = 2.0 ** 10


def _b():
    return parse_expression(FLAGSHIP_B, {"x": X, "y": Y}, allow_lambda=False)


def _coarse_solution():
    return solve_divergence_weighted(WeightPolynomial.flagship(6), 120, 96)


def _on_characteristic_variety(x, y, t, tau):
    b_x = x ** 7 / 7 + x ** 3 * y ** 2 / 3 - x ** 5 / 30
    b_y = y ** 7 / 7 + x ** 4 * y / 6
    return np.stack([x, y, t, tau * b_y, -tau * b_x, tau], axis=-1)


def test_flagship_b_has_the_flagship_laplacian():
    b = _b()
    laplacian = sp.expand(sp.diff(b, X, 2) + sp.diff(b, Y, 2))
    assert sp.expand(laplacian - (X ** 6 + Y ** 6 + X ** 2 * Y ** 2)) == 0


def test_wrong_laplacian_rejected():
    b = parse_expression("x^8/56", {"x": X, "y": Y}, allow_lambda=False)
    try:
        build_prop51_witness(b, _coarse_solution())
    except ConstructionError:
        return
    raise AssertionError("b with the wrong Laplacian accepted")


def test_potential_needs_an_odd_grid():
    try:
        integrate_potential(_b(), _coarse_solution(), nodes=20)
    except ConstructionError:
        return
    raise AssertionError("even witness grid accepted")


def test_path_dependent_potential_is_reported():
    try:
        integrate_potential(_b(), _coarse_solution(), nodes=41, tolerance=0.0)
    except PotentialInconsistencyError:
        return
    raise AssertionError("zero loop tolerance met by a numerical potential")


def test_reference_potential():
    witness = flagship_prop51_witness()
    data = witness.data
    centre = len(data.grid) // 2
    assert data.grid[centre] == 0.0
    assert data.potential[centre, centre] == 0.0
    assert POTENTIAL_LOOP_TOLERANCE == 1e-4
    assert data.loop_error <= POTENTIAL_LOOP_TOLERANCE
    assert np.all(np.isfinite(data.potential))


def test_witness_increment_along_t():
    witness = flagship_prop51_witness()
    for T in (0.5, 1.0):
        p = np.array([0.0, 0.0, 0.0, 0.0, 0.0, LAM])
        q = np.array([0.0, 0.0, T, 0.0, 0.0, LAM])
        values = witness.value(np.stack([p, q]))
        assert abs((values[1] - values[0]) - T * LAM) < 1e-9 * LAM


def test_hamiltonian_derivatives_vanish_on_the_characteristic_variety():
    op = get_entry("example9").operator
    witness = flagship_prop51_witness()
    rng = np.random.default_rng(11)
    x = rng.uniform(-0.3, 0.3, 50)
    y = rng.uniform(-0.3, 0.3, 50)
    t = rng.uniform(0.0, 1.0, 50)
    points = _on_characteristic_variety(x, y, t, np.full(50, LAM))
    assert hamiltonian_ratio(op, witness, points) < 1e-6


def test_hamiltonian_ratio_off_the_variety_is_bounded():
    op = get_entry("example9").operator
    witness = flagship_prop51_witness()
    grid = np.linspace(-0.25, 0.25, 5)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    points = np.stack([xx.ravel(), yy.ravel(), np.zeros(25), np.zeros(25), np.zeros(25), np.full(25, LAM)], axis=-1)
    ratio = hamiltonian_ratio(op, witness, points)
    assert np.isfinite(ratio)
    assert ratio < 50.0


def test_witness_outside_its_grid_is_rejected():
    op = get_entry("example9").operator
    points = np.array([[0.8, 0.0, 0.0, 0.0, 0.0, LAM]])
    try:
        hamiltonian_ratio(op, flagship_prop51_witness(), points)
    except WitnessError:
        return
    raise AssertionError("point outside the witness grid accepted")


def test_example9_lower_bound_is_linear_in_lambda():
    entry = get_entry("example9")
    for lam in (2.0 ** 10, 2.0 ** 14):
        p, q = entry.p(lam), entry.q(lam)
        lower = witness_lower_bound(entry.operator, entry.witness(lam), p, q)
        assert 0.02 * lam <= lower.lower <= lam * (1 + 1e-9)
        upper = certificate_upper_bound(entry.operator, entry.certificate(lam), q)
        assert lower.merge(upper).is_consistent()


def test_region_copy_keeps_the_data():
    witness = flagship_prop51_witness()
    copy = witness.with_region({0: (-0.1, 0.1, 3)})
    assert copy.data is witness.data
    assert copy.region == {0: (-0.1, 0.1, 3)}
    assert witness.region == {}


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Witness Construction")
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
