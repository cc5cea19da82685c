#!/usr/bin/env python3
"""
Test the exact Taylor-coefficient obstruction
"""
import sys
from fractions import Fraction

import sympy as sp

from modules.constructions import (
    ConstructionError,
    Verdict,
    WeightPolynomial,
    taylor_obstruction,
)


def test_flagship_weight_is_obstructed():
    system = taylor_obstruction(WeightPolynomial.flagship(6))
    assert system.verdict == Verdict.INCONSISTENT
    assert system.ansatz_degree == 3
    assert len(system.unknowns) == 20
    assert system.decisive_equations() == {
        "3*c1 + 3*c2 = 1": True,
        "7*c1 + c2 = 1": True,
        "c1 + 7*c2 = 1": True,
    }
    assert system.solution is None
    assert system.verify_certificate()


def test_certificate_rows_are_exact():
    system = taylor_obstruction(WeightPolynomial.flagship(6))
    rows = system.certificate_rows()
    assert rows
    for weight, equation in rows:
        assert isinstance(weight, Fraction) and weight != 0
        assert equation.endswith(" = 0")


def test_obstruction_is_scale_invariant():
    for factor in (3, Fraction(1, 5)):
        system = taylor_obstruction(WeightPolynomial.flagship(6).scaled(factor))
        assert system.verdict == Verdict.INCONSISTENT
        assert system.verify_certificate()


def test_pure_cross_term_is_consistent():
    system = taylor_obstruction(WeightPolynomial.parse("x^2*y^2"))
    assert system.verdict == Verdict.CONSISTENT
    assert system.certificate is None
    assert not system.verify_certificate()
    assert system.certificate_rows() == []
    assert system.solution[system.c1] + system.solution[system.c2] == sp.Rational(1, 3)


def test_homogeneous_quartic_is_consistent():
    system = taylor_obstruction(WeightPolynomial.flagship(4))
    assert system.verdict == Verdict.CONSISTENT
    assert system.solution[system.c1] == sp.Rational(1, 6)
    assert system.solution[system.c2] == sp.Rational(1, 6)
    # f = x/6, g = y/6 solves the equation for any quartic weight
    assert system.contains_equation({system.c1: 5, system.c2: 1}, 1)


def test_solution_satisfies_every_equation():
    system = taylor_obstruction(WeightPolynomial.parse("x^4 + 2*x^2*y^2 + 3*y^4"))
    assert system.verdict == Verdict.CONSISTENT
    for equation in system.equations:
        assert equation.xreplace(system.solution) == 0


def test_unrelated_equation_is_not_contained():
    system = taylor_obstruction(WeightPolynomial.flagship(4))
    assert not system.contains_equation({system.c1: 1}, 1)
    assert system.contains_equation({system.symbol("f", 0, 0): 1}, 0)


def test_degree_cap_below_the_weight_rejected():
    for cap in (2, 5):
        try:
            taylor_obstruction(WeightPolynomial.flagship(6), degree_cap=cap)
        except ConstructionError:
            continue
        raise AssertionError(f"degree cap {cap} accepted")
    assert taylor_obstruction(WeightPolynomial.flagship(6), degree_cap=6).degree_cap == 6


def test_higher_cap_keeps_the_obstruction():
    system = taylor_obstruction(WeightPolynomial.flagship(6), degree_cap=7)
    assert system.verdict == Verdict.INCONSISTENT
    assert system.ansatz_degree == 4
    assert system.verify_certificate()


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Taylor Obstruction")
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
