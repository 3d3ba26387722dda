import math

import numpy as np
import pytest

from pqlift.assumption import (BOTTOM, SolverFunction, builtin_assumptions, from_descriptor,
                               toy_bigsearch, toy_decision, toy_gl, toy_inject_owf,
                               value_of_function)
from pqlift.errors import ConfigurationError

CATALOG = builtin_assumptions(seed=0)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_contracts(name):
    P = CATALOG[name]
    P.check_image()   # raises on any violation
    for r in range(min(1 << P.d, 64)):
        assert P.generate(r) == P.generate(r)
        x = P.generate(r)
        assert 0 <= x < 1 << P.n
        assert not P.verify(r, BOTTOM)
    assert from_descriptor(P.descriptor()).generated.tolist() == P.generated.tolist()


def test_image_verifier_exhaustive():
    for P in CATALOG.values():
        if P.image is None:
            continue
        for r in range(1 << P.d):
            x = P.generate(r)
            for y in range(1 << P.m):
                if P.verify(r, y):
                    assert P.image.check(x, y)
        for x in set(P.generated.tolist()):
            assert len(P.valid_solutions(x)) <= P.image.bound


def test_gl_parameters():
    P = toy_gl(n_f=4)
    assert (P.d, P.n, P.m, P.c) == (8, 8, 1, 0.5)
    assert P.image.bound == 2
    for x in set(P.generated.tolist()):
        assert P.valid_solutions(x) == [0, 1]


def test_inject_owf_has_one_valid_solution():
    P = toy_inject_owf()
    assert P.c == 0.0 and P.image.bound == 1
    for x in set(P.generated.tolist()):
        assert len(P.valid_solutions(x)) == 1


def test_bigsearch_has_no_image_verifier():
    P = toy_bigsearch()
    assert P.image is None and P.m == P.n
    with pytest.raises(ConfigurationError):
        P.valid_solutions(0)


def test_bad_threshold_rejected():
    with pytest.raises(ConfigurationError):
        toy_gl().__class__("bad", 1, 1, 1, 1.5, lambda r: r, lambda r, y: True)


def test_value_perfect_gl_predictor():
    P = toy_gl()
    v, adv, se = value_of_function(P, SolverFunction.deterministic(1, P.solve))
    assert (v, adv, se) == (1.0, 0.5, 0.0)


def test_value_constant_on_balanced_decision():
    P = toy_decision()
    v, adv, _ = value_of_function(P, SolverFunction.deterministic(1, lambda x: 0))
    assert v == pytest.approx(0.5) and adv == pytest.approx(0.0)


def _table_predictor(P, fraction, seed=7):
    """Answers correctly on a fixed ``fraction`` of instances, wrongly elsewhere."""
    xs = sorted(set(P.generated.tolist()))
    good = set(np.random.default_rng(seed).permutation(xs)[: round(fraction * len(xs))].tolist())
    return SolverFunction.deterministic(1, lambda x: P.solve(x) if x in good else 1 - P.solve(x))


def test_value_table_predictor_matches_enumeration():
    P = toy_gl()
    f = _table_predictor(P, 0.75)
    # independent oracle: loop over every r and count acceptances
    wins = sum(P.verify(r, f.sample(P.generate(r), None)) for r in range(1 << P.d))
    oracle = wins / (1 << P.d)
    v, adv, se = value_of_function(P, f)
    assert oracle == 0.75
    assert v == pytest.approx(oracle, abs=1e-12) and adv == pytest.approx(0.25) and se == 0.0


@pytest.mark.parametrize("name", ["toy-GL", "toy-inject-OWF", "toy-decision", "toy-salted-decision"])
def test_monte_carlo_converges_to_exact(name):
    P = CATALOG[name]
    f = SolverFunction.noisy(P.m, lambda x: max(P.solve(x), 0), 0.3)
    exact, _, _ = value_of_function(P, f)
    mc, _, se = value_of_function(P, f, mode="monte_carlo", trials=10_000, seed=3)
    sigma = math.sqrt(exact * (1 - exact) / 10_000)
    assert abs(mc - exact) <= 3 * sigma + 1e-12
    assert se == pytest.approx(sigma, rel=0.05)


def test_exact_mode_rejects_large_d():
    P = toy_gl().__class__("big", 21, 1, 1, 0.5, lambda r: 0, lambda r, y: True)
    with pytest.raises(ConfigurationError):
        value_of_function(P, SolverFunction.uniform(1))
    with pytest.raises(ConfigurationError):
        value_of_function(toy_gl(), SolverFunction.uniform(1), mode="bogus")


def test_uniform_function_value():
    P = toy_inject_owf()
    v, _, _ = value_of_function(P, SolverFunction.uniform(P.m))
    assert v == pytest.approx(1 / (1 << P.m))
