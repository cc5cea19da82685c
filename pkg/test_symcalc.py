#!/usr/bin/env python3
"""
Test principal symbols, Hamiltonian fields, Poisson brackets, bracket orders and nu
"""
import sys

import numpy as np
import sympy as sp

from modules.catalogue import EXAMPLE9_B, get_entry
from modules.expressions import compile_vector, parse_expression, sign_normalized
from modules.symcalc import (
    BaseVectorField,
    PhasePoint,
    PhaseSpace,
    PhaseSymbol,
    PhaseVectorField,
    SymcalcError,
    ZeroSectionError,
    bracket_order_at,
    hamiltonian_field,
    iterated_brackets,
    nu,
    poisson_bracket,
    principal_symbol,
)


def make_fields(names, rows):
    """Vector fields from coefficient strings over the named base variables."""
    space = PhaseSpace(tuple(names))
    table = dict(zip(space.base_names, space.base))
    fields = [
        BaseVectorField(space, tuple(sp.expand(parse_expression(c, table)) for c in row))
        for row in rows
    ]
    return space, fields


def symbol(space, text):
    return PhaseSymbol(space, sp.expand(parse_expression(text, space.symbol_table)))


def test_principal_symbol_of_coordinate_field():
    space, (field,) = make_fields(["x", "y"], [["1", "0"]])
    xi = space.symbol_table["xi"]
    assert principal_symbol(field).expr == xi


def test_principal_symbol_of_grusin_field():
    space, (field,) = make_fields(["x", "t"], [["0", "x"]])
    x, tau = space.symbol_table["x"], space.symbol_table["tau"]
    assert principal_symbol(field).expr == x * tau


def test_principal_symbol_with_polynomial_coefficient():
    space, (field,) = make_fields(["x", "y", "t"], [["1", "0", "-(y^7/7 + x^4*y/6)"]])
    table = space.symbol_table
    b = parse_expression(EXAMPLE9_B, table)
    expected = table["xi"] - sp.diff(b, table["y"]) * table["tau"]
    assert sp.expand(principal_symbol(field).expr - expected) == 0


def test_hamiltonian_field_examples():
    space = PhaseSpace(("x", "t"))
    table = space.symbol_table
    x, t, tau = table["x"], table["t"], table["tau"]

    assert hamiltonian_field(symbol(space, "xi")).components == (1, 0, 0, 0)
    assert hamiltonian_field(symbol(space, "x*tau")).components == (0, x, -tau, 0)

    # t^r tau with r = 3: t^3 d/dt - 3 t^2 tau d/dtau
    field = hamiltonian_field(symbol(space, "t^3*tau"))
    assert field.components == (0, t ** 3, 0, -3 * t ** 2 * tau)


def test_hamiltonian_velocity_matches_components():
    space = PhaseSpace(("x", "t"))
    field = hamiltonian_field(symbol(space, "x*tau"))
    velocity = field.velocity(np.array([[2.0, 0.0, 1.0, 5.0]]))
    assert np.allclose(velocity, [[0.0, 2.0, -5.0, 0.0]])


def test_phase_vector_fields_respect_symbol_classes():
    space = PhaseSpace(("x", "t"))
    table = space.symbol_table
    x, t, xi, tau = table["x"], table["t"], table["xi"], table["tau"]

    field = hamiltonian_field(symbol(space, "x^2*tau + t*xi"))
    assert field.symbol_class_degrees() == ([0, 0], [1, 1])
    # xi-free fiber coefficients lie in S^1 as well
    assert PhaseVectorField(space, (x, sp.S.Zero, sp.S.One, t)).symbol_class_degrees() == ([0, 0], [0, 0])

    for components in (
        (xi, sp.S.Zero, sp.S.Zero, sp.S.Zero),
        (sp.S.Zero, sp.S.Zero, xi * tau, sp.S.Zero),
        (sp.S.Zero, sp.S.Zero, sp.sqrt(tau), sp.S.Zero),
    ):
        try:
            PhaseVectorField(space, components)
        except SymcalcError:
            continue
        raise AssertionError(f"accepted {components}")

    # every catalogue operator yields admissible Hamiltonian fields
    for name, params in (("example9", {}), ("fedii", {}), ("heisenberg", {}), ("example8", {"m": 2, "r": 3})):
        assert len(get_entry(name, **params).operator.hamiltonian_fields) >= 2


def test_poisson_bracket_examples():
    space = PhaseSpace(("x", "t"))
    tau = space.symbol_table["tau"]
    xi = symbol(space, "xi")
    x_tau = symbol(space, "x*tau")
    assert poisson_bracket(xi, xi).expr == 0
    assert poisson_bracket(xi, x_tau).expr == tau
    assert poisson_bracket(x_tau, xi).expr == -tau


def test_poisson_bracket_gives_laplacian_of_b():
    space = PhaseSpace(("x", "y", "t"))
    table = space.symbol_table
    x, y, tau = table["x"], table["y"], table["tau"]
    b = parse_expression(EXAMPLE9_B, table)
    X = PhaseSymbol(space, sp.expand(table["xi"] - sp.diff(b, y) * tau))
    Y = PhaseSymbol(space, sp.expand(table["eta"] + sp.diff(b, x) * tau))
    laplacian = sp.diff(b, x, 2) + sp.diff(b, y, 2)
    assert sp.expand(laplacian - (x ** 6 + y ** 6 + x ** 2 * y ** 2)) == 0
    assert sp.expand(poisson_bracket(X, Y).expr - laplacian * tau) == 0


def test_iterated_brackets_order_one_is_the_input():
    space, fields = make_fields(["x", "t"], [["1", "0"], ["0", "x"]])
    symbols = [principal_symbol(f) for f in fields]
    es = iterated_brackets(symbols, 1)
    assert [expr for _, expr in es.family] == [s.expr for s in symbols]
    assert es.multi_indices() == [(0,), (1,)]


def test_iterated_brackets_grusin_family():
    space, fields = make_fields(["x", "t"], [["1", "0"], ["0", "x"]])
    table = space.symbol_table
    es = iterated_brackets([principal_symbol(f) for f in fields], 2)
    assert len(es.family) == 6
    nonzero = {sign_normalized(expr) for _, expr in es.family if expr != 0}
    assert nonzero == {table["xi"], table["x"] * table["tau"], table["tau"]}
    assert dict(es.family)[(1, 0)] == table["tau"]
    assert dict(es.family)[(0, 1)] == -table["tau"]


def test_iterated_brackets_rejects_order_zero():
    space, fields = make_fields(["x"], [["1"]])
    try:
        iterated_brackets([principal_symbol(fields[0])], 0)
    except SymcalcError:
        return
    raise AssertionError("order 0 accepted")


def test_example9_brackets_vanish_below_order_six():
    op = get_entry("example9").operator
    es = iterated_brackets(op.symbols, 6)
    point = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    short = [expr for index, expr in es.family if len(index) < 6]
    longest = [expr for index, expr in es.family if len(index) == 6]
    space = op.space
    values_short = [float(PhaseSymbol(space, e).evaluate(point)) for e in short]
    values_long = [float(PhaseSymbol(space, e).evaluate(point)) for e in longest]
    assert max(abs(v) for v in values_short) == 0.0
    assert max(abs(v) for v in values_long) > 0.0


def test_bracket_order_elliptic():
    _, fields = make_fields(["x", "y"], [["1", "0"], ["0", "1"]])
    assert bracket_order_at(fields, [0.0, 0.0]) == 1
    assert bracket_order_at(fields, [0.3, -2.0]) == 1


def test_bracket_order_example9():
    fields = get_entry("example9").operator.fields
    assert bracket_order_at(fields, [1.0, 0.0, 0.0]) == 2
    assert bracket_order_at(fields, ["1/3", "-1/2", "0"]) == 2
    assert bracket_order_at(fields, [0.0, 0.0, 0.0]) == 6


def test_bracket_order_cap_exhausted():
    # x^2 d/dt needs order 3; a cap of 2 must report nothing
    _, fields = make_fields(["x", "t"], [["1", "0"], ["0", "x^2"]])
    assert bracket_order_at(fields, [0.0, 0.0]) == 3
    assert bracket_order_at(fields, [0.0, 0.0], cap=2) is None


def test_bracket_order_flat_coefficient_is_none():
    fields = get_entry("fedii").operator.fields
    assert bracket_order_at(fields, [0.0, 0.0], cap=4) is None
    assert bracket_order_at(fields, [0.5, 0.0]) == 1


def sphere_directions(d):
    """Dense unit xi-directions in dimension d, coordinate axes included."""
    if d == 2:
        angles = np.linspace(0.0, 2 * np.pi, 3600, endpoint=False)
        points = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        n = 20000
        k = np.arange(n) + 0.5
        polar = np.arccos(1 - 2 * k / n)
        azimuth = np.pi * (1 + 5 ** 0.5) * k
        points = np.stack(
            [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1
        )
    return np.concatenate([points, np.eye(d), -np.eye(d)])


def sampled_bracket_order(op, x, cap=6):
    """Smallest m whose brackets of length <= m never vanish together on the sampled xi-sphere."""
    space = op.space
    substitutions = {sym: sp.Rational(str(value)) for sym, value in zip(space.base, x)}
    directions = sphere_directions(space.dimension)
    for m in range(1, cap + 1):
        exprs = [expr.xreplace(substitutions) for _, expr in iterated_brackets(op.symbols, m).family]
        values = compile_vector(exprs, space.fiber)(*directions.T)
        total = np.sum(values ** 2, axis=0)
        if total.max() > 0 and total.min() / total.max() > 1e-3:
            return m
    return None


def test_bracket_order_matches_sphere_sampling():
    cases = (
        ("elliptic2d", {}, (0, 0), 1),
        ("grusin", {"m": 2}, (0, 0), 2),
        ("grusin", {"m": 2}, (0.5, 0), 1),
        ("grusin", {"m": 3}, (0, 0), 3),
        ("metivier", {}, (0, 0), 2),
        ("metivier", {}, (0.25, 0), 1),
        ("baouendi_goulaouic", {"m": 2}, (0, 0, 0), 2),
        ("baouendi_goulaouic", {"m": 3}, (0, 0, 0), 3),
        ("example7", {"k": 2, "m": 3}, (0, 0, 0), 3),
        ("example7", {"k": 2, "m": 3}, (0.5, 0, 0), 1),
        ("heisenberg", {}, (0, 0, 0), 2),
        ("example8", {"m": 2, "r": 2}, (0, 0.5), 1),
        ("example8", {"m": 2, "r": 2}, (0, 0), 2),
    )
    for name, params, x, expected in cases:
        op = get_entry(name, **params).operator
        sampled = sampled_bracket_order(op, x)
        assert sampled == expected, (name, params, x, sampled)
        assert bracket_order_at(op.fields, list(x)) == sampled, (name, params, x)


def test_nu_elliptic_is_radius():
    _, fields = make_fields(["x", "y"], [["1", "0"], ["0", "1"]])
    es = iterated_brackets([principal_symbol(f) for f in fields], 1)
    for R in (1.0, 7.0, 64.0):
        assert abs(nu(es, [0.2, 0.1], R) - R) <= 1e-6 * R


def test_nu_grusin_is_square_root():
    es = get_entry("grusin", m=2).operator.effective_symbol
    for R in (4.0, 16.0, 256.0):
        assert abs(nu(es, [0.0, 0.0], R) - R ** 0.5) <= 1e-6 * R ** 0.5
    ratio = nu(es, [0.0, 0.0], 512.0) / nu(es, [0.0, 0.0], 256.0)
    assert abs(ratio - 2 ** 0.5) < 1e-6


def test_nu_line_bundle_shortcut_matches_sphere_search():
    es = get_entry("heisenberg").operator.effective_symbol
    x = [0.3, -0.2, 0.0]
    shortcut = nu(es, x, 64.0, use_line_bundle=True)
    searched = nu(es, x, 64.0, use_line_bundle=False)
    assert searched <= shortcut * (1 + 1e-6)
    assert searched >= 0.5 * shortcut


def test_nu_requires_radius_at_least_one():
    es = get_entry("grusin", m=2).operator.effective_symbol
    try:
        nu(es, [0.0, 0.0], 0.5)
    except SymcalcError:
        return
    raise AssertionError("R < 1 accepted")


def test_phase_point_rejects_zero_section():
    try:
        PhasePoint((0.0, 0.0), (0.0, 0.0))
    except ZeroSectionError:
        pass
    else:
        raise AssertionError("zero section accepted")
    point = PhasePoint((1.0, 2.0), (0.0, 3.0))
    assert np.array_equal(point.as_array(), [1.0, 2.0, 0.0, 3.0])
    assert PhasePoint.from_array(point.as_array()) == point


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Symbolic Calculus")
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
