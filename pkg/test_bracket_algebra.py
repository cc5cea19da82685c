#!/usr/bin/env python3
"""
Test the algebraic identities of the Poisson bracket on random polynomial symbols
"""
import itertools
import sys

import numpy as np
import sympy as sp

from modules.catalogue import get_entry
from modules.symcalc import (
    EffectiveSymbol,
    PhaseSpace,
    PhaseSymbol,
    iterated_brackets,
    poisson_bracket,
)

SPACES = (PhaseSpace(("x",)), PhaseSpace(("x", "t")), PhaseSpace(("x", "y", "t")))
SPACE = SPACES[1]
TRIALS = 100


def random_symbol(rng, space=SPACE, degree=4, terms=3):
    """Random integer polynomial of total degree <= degree in the phase coordinates."""
    coordinates = space.coordinates
    expr = sp.S.Zero
    for _ in range(terms):
        monomial = sp.Integer(int(rng.integers(-5, 6)))
        for axis in rng.integers(0, len(coordinates), size=int(rng.integers(0, degree + 1))):
            monomial *= coordinates[int(axis)]
        expr += monomial
    return PhaseSymbol(space, sp.expand(expr))


def random_triples(seed):
    """TRIALS triples cycling through dimensions 1, 2 and 3."""
    rng = np.random.default_rng(seed)
    for trial in range(TRIALS):
        space = SPACES[trial % len(SPACES)]
        yield space, tuple(random_symbol(rng, space) for _ in range(3))


def bracket(f, g):
    return poisson_bracket(f, g).expr


def test_antisymmetry():
    for _, (f, g, _) in random_triples(1):
        assert sp.expand(bracket(f, g) + bracket(g, f)) == 0


def test_jacobi_identity():
    for _, (f, g, h) in random_triples(2):
        total = (
            poisson_bracket(f, poisson_bracket(g, h)).expr
            + poisson_bracket(g, poisson_bracket(h, f)).expr
            + poisson_bracket(h, poisson_bracket(f, g)).expr
        )
        assert sp.expand(total) == 0


def test_leibniz_rule():
    for space, (f, g, h) in random_triples(3):
        product = PhaseSymbol(space, sp.expand(g.expr * h.expr))
        expected = bracket(f, g) * h.expr + g.expr * bracket(f, h)
        assert sp.expand(bracket(f, product) - expected) == 0


def test_bracket_is_bilinear():
    rng = np.random.default_rng(4)
    f, g, h = random_symbol(rng), random_symbol(rng), random_symbol(rng)
    a, b = sp.Rational(3, 7), sp.Rational(-2, 5)
    combination = PhaseSymbol(SPACE, sp.expand(a * g.expr + b * h.expr))
    assert sp.expand(bracket(f, combination) - a * bracket(f, g) - b * bracket(f, h)) == 0


def test_brackets_are_homogeneous_of_degree_one():
    r = sp.Rational(5, 3)
    for name, params in (("grusin", {"m": 3}), ("example7", {"k": 2, "m": 3}), ("metivier", {})):
        op = get_entry(name, **params).operator
        scaling = {xi: r * xi for xi in op.space.fiber}
        for _, expr in op.effective_symbol.family:
            assert sp.expand(expr.xreplace(scaling) - r * expr) == 0


def test_sigma_tilde_ignores_bracket_signs():
    op = get_entry("example7", k=2, m=3).operator
    es = op.effective_symbol
    flipped = EffectiveSymbol(
        space=es.space,
        family=tuple((index, -expr) for index, expr in es.family),
        order=es.order,
        mode=es.mode,
        principal=es.principal,
    )
    rng = np.random.default_rng(5)
    z = np.concatenate([rng.uniform(-1, 1, (200, 3)), rng.normal(0, 100, (200, 3))], axis=1)
    assert np.allclose(es.evaluate_z(z), flipped.evaluate_z(z), rtol=1e-12)


def test_higher_order_never_decreases_sigma_tilde():
    op = get_entry("baouendi_goulaouic", m=3).operator
    first = iterated_brackets(op.symbols, 1)
    full = iterated_brackets(op.symbols, 3)
    rng = np.random.default_rng(6)
    z = np.concatenate([rng.uniform(-1, 1, (500, 3)), rng.normal(0, 50, (500, 3))], axis=1)
    assert np.all(full.evaluate_z(z) >= first.evaluate_z(z))


def test_duplicate_brackets_counted_once():
    op = get_entry("grusin", m=2).operator
    terms = op.effective_symbol.terms
    # xi, x*tau and one copy of +-tau
    assert len(terms) == 3
    assert sorted(weight for _, weight in terms) == [1, 1, 2]


def test_family_records_every_multi_index():
    op = get_entry("heisenberg").operator
    es = iterated_brackets(op.symbols, 3)
    expected = [
        index
        for length in range(1, 4)
        for index in itertools.product(range(2), repeat=length)
    ]
    assert sorted(es.multi_indices()) == sorted(expected)


if __name__ == "__main__":
    print("\n" + "=" * 70)
    print("Testing Poisson Bracket Algebra")
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
