import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pqlift.assumption import toy_gl
from pqlift.errors import ConfigurationError
from pqlift.memoryless import (QueryTupleDistribution, flood_length, fresh_instances,
                               gl_correlated_pairs, ideal_memoryless, random_marginal)
from pqlift.persistence import PersistentSolver
from pqlift.solver import index_parity_solver, noisy_solver, perfect_solver, use_once_solver
from pqlift.stateless import (combined_calls, index_mixture, induced_stateless, make_shuffle,
                              memoryless_runs, padded_distribution, padding_length, planted_steps,
                              product_distribution, sim_combined, sim_stateless)

GL = toy_gl()


def test_padding_length_examples():
    assert padding_length(3, 0.1) == 90
    assert padding_length(2, 0.2) == 20
    assert padding_length(1, 1.0) == 1
    assert padding_length(4, 1.0) == 16
    with pytest.raises(ConfigurationError):
        padding_length(2, 0.0)


@pytest.mark.parametrize("k,delta", [(3, 0.1), (2, 0.2), (5, 0.3), (2, 0.05)])
def test_collision_probability_within_delta(k, delta):
    t = padding_length(k, delta)
    collide = 1 - math.prod(1 - i / t for i in range(k))
    assert collide <= k * k / t <= delta + 1e-12


@given(st.integers(1, 6), st.integers(0, 30), st.integers(0, 2**32 - 1))
def test_shuffle_indices_distinct(k, extra, seed):
    t = k + extra
    plan = make_shuffle(40, k, t, np.random.default_rng(seed))
    for row in plan.indices:
        assert len(set(row.tolist())) == k
        assert row.min() >= 1 and row.max() <= t
    xs = np.arange(40 * k).reshape(40, k) + 1
    padded = plan.padded(xs)
    assert np.array_equal(plan.extract(padded), xs)
    assert np.count_nonzero(padded) == 40 * k


def test_make_shuffle_rejects_k_above_t(rng):
    with pytest.raises(ConfigurationError):
        make_shuffle(1, 5, 4, rng)


def test_single_query_index_is_uniform(rng):
    t = padding_length(1, 0.1)
    plan = make_shuffle(50_000, 1, t, rng)
    counts = np.bincount(plan.indices[:, 0], minlength=t + 1)[1:]
    expect = 50_000 / t
    stat = float(((counts - expect) ** 2 / expect).sum())
    assert stat <= (t - 1) + 5 * math.sqrt(2 * (t - 1))


def _per_index(B, t, x):
    ket = B.initial_branches()[0][2]
    return [B.answer_probabilities(ket, j, [x])[0, 0] for j in range(1, t + 1)]


def test_collapse_given_distinct_indices(rng):
    """Averaged over plans, the shuffle output equals B″ conditioned on distinct indices."""
    B = index_parity_solver(GL).to_quantum()
    xs = (GL.generate(3), GL.generate(77))
    t = padding_length(2, 1.0)
    per = [_per_index(B, t, x) for x in xs]
    # B″ restricted to distinct index pairs, built from per-index behaviours
    ideal: dict = {}
    pairs = [(i, j) for i in range(t) for j in range(t) if i != j]
    for i, j in pairs:
        for a, b in itertools.product(range(2), repeat=2):
            ideal[(a, b)] = ideal.get((a, b), 0.0) + per[0][i][a] * per[1][j][b] / len(pairs)
    # shuffle simulator: exact per-plan product distributions, averaged over all plans
    sim: dict = {}
    for i, j in itertools.permutations(range(1, t + 1), 2):
        for key, p in product_distribution(B, xs, (i, j)).items():
            sim[key] = sim.get(key, 0.0) + p / len(pairs)
    assert set(sim) <= set(ideal)
    assert all(abs(sim.get(k, 0.0) - p) < 1e-12 for k, p in ideal.items())
    # and the sampled simulator agrees with it
    R = 40_000
    res = sim_stateless(B, 1.0, np.tile(xs, (R, 1)), rng)
    emp = Counter(map(tuple, res.answers.tolist()))
    for key, p in sim.items():
        assert abs(emp[key] / R - p) <= 4 * math.sqrt(p * (1 - p) / R) + 1e-12


def test_index_parity_against_uniform_mixture(rng):
    B = index_parity_solver(GL).to_quantum()
    delta, R = 0.2, 50_000
    x1, x2 = GL.generate(10), GL.generate(200)
    t = padding_length(2, delta)
    m1, m2 = index_mixture(B, t, x1), index_mixture(B, t, x2)
    exact = {(a, b): m1[a] * m2[b] for a in range(2) for b in range(2)}
    res = sim_stateless(B, delta, np.tile([x1, x2], (R, 1)), rng)
    emp = Counter(map(tuple, res.answers.tolist()))
    tv = 0.5 * sum(abs(emp[k] / R - p) for k, p in exact.items())
    sigma = 0.5 * sum(math.sqrt(p * (1 - p) / R) for p in exact.values())
    assert tv <= delta + 3 * sigma


def test_induced_stateless_matches_index_mixture(rng):
    B = index_parity_solver(GL).to_quantum()
    x = GL.generate(5)
    t = 7
    R = 40_000
    runs = induced_stateless(B, t, rng, R)
    ans = runs.answer_batch(np.full((R, 1), x))[:, 0]
    p = index_mixture(B, t, x)
    assert abs((ans == 1).mean() - p[1]) <= 4 * math.sqrt(p[1] * p[0] / R)


def test_memoryless_runs_reject_stateful(rng):
    with pytest.raises(ConfigurationError):
        memoryless_runs(use_once_solver(GL), rng, 2)


def test_padded_distribution_marginal():
    D = QueryTupleDistribution.from_support(2, 3, [((5, 6), 1.0)])
    t = padding_length(2, 0.5)
    Dp = padded_distribution(D, t, pad=0)
    marg = random_marginal(Dp).exact()
    assert marg == pytest.approx({5: 1 / t, 6: 1 / t, 0: 1 - 2 / t})
    rows = Dp.sample_many(np.random.default_rng(0), 100)
    assert rows.shape == (100, t)
    assert all(sorted(r[r != 0].tolist()) == [5, 6] for r in rows)


def test_combined_budget_split(rng):
    D = fresh_instances(GL, 2)
    xs = D.sample_many(rng, 10)
    res = sim_combined(perfect_solver(GL).to_quantum(), D, 0, 0.2, xs, rng)
    assert res.shuffle.t == padding_length(2, 0.1) == 40
    assert res.inner.t == flood_length(0, 40, 0.1) == 1
    assert np.array_equal(res.answers, np.vectorize(GL.solve)(xs))
    assert combined_calls(2, 1, 0.2) == 40 * flood_length(1, 40, 0.1)
    steps = planted_steps(res)
    assert steps.shape == (10, 2) and np.all(steps >= 1) and np.all(steps <= res.inner.calls)
    assert np.all(steps[:, 0] != steps[:, 1])


def test_combined_zero_memory_matches_direct(rng):
    B = noisy_solver(GL).to_quantum()
    D = fresh_instances(GL, 2)
    R = 20_000
    xs = D.sample_many(rng, R)
    res = sim_combined(B, D, 0, 0.2, xs, rng)
    ok = res.answers == np.vectorize(GL.solve)(xs)
    assert abs(ok.mean() - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / ok.size)


def test_induced_stateless_of_persistent_solver_keeps_value(rng):
    eta = 0.1
    S = PersistentSolver(GL, use_once_solver(GL, alpha=0.6), eta)
    runs = S.start(rng, 15)
    ideal = ideal_memoryless(runs, gl_correlated_pairs(GL), S.B.layout.total_qubits, 0.5, rng, 15)
    induced_value = ideal.index_values(GL).mean(axis=1)     # uniform index mixture
    assert np.all(np.abs(induced_value - runs.p0) <= eta)
