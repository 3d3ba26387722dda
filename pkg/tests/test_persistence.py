import math

import numpy as np
import pytest

from pqlift.assumption import BOTTOM, toy_bigsearch, toy_gl, toy_inject_owf, toy_single
from pqlift.errors import ConfigurationError, RepairFailure, UnsupportedAssumptionError
from pqlift.linalg import TAU_NUM, DensityMatrix
from pqlift.persistence import (PersistentSolver, ValueOperator, alternation_rounds,
                                build_solution_measurement, epsilon_schedule, initial_ket,
                                measure_solution, persist_init, persist_step, repair, round_cap,
                                val_est)
from pqlift.solver import (ClassicalStatefulSolver, QuantumStatefulSolver, noisy_solver,
                           one_shot_value, perfect_solver, use_once_solver, wrong_solver, zoo)

GL = toy_gl()
OWF = toy_inject_owf()


def test_epsilon_schedule():
    eta = 0.1
    assert epsilon_schedule(eta, 1) == pytest.approx(eta / math.pi ** 2)
    assert epsilon_schedule(eta, 2) == pytest.approx(eta / (4 * math.pi ** 2))
    partial = 3 * math.fsum(epsilon_schedule(eta, i) for i in range(1, 200_001))
    assert partial == pytest.approx(eta / 2, rel=1e-5)
    assert partial < eta / 2
    with pytest.raises(ConfigurationError):
        epsilon_schedule(eta, 0)


def test_alternation_rounds_and_cap():
    assert alternation_rounds(0.1) == math.ceil(8 * math.log(40) / 0.01)
    assert alternation_rounds(1.0) == math.ceil(8 * math.log(4))
    assert round_cap(0.1) == 640 and round_cap(0.3) == 256
    with pytest.raises(ConfigurationError):
        alternation_rounds(0.0)


# ---------------------------------------------------- solution measurement

def _complete(meas_projectors, D):
    return np.allclose(sum(meas_projectors), np.eye(D), atol=TAU_NUM)


def test_solution_measurement_inject_owf():
    B = zoo(OWF)["perfect"]
    x = OWF.generate(5)
    sol = build_solution_measurement(OWF, x, B)
    assert sol.labels == [5, BOTTOM]
    assert _complete([sol.projector(g) for g in range(2)], B.D)


def test_solution_measurement_gl_has_empty_bottom():
    B = zoo(GL)["noisy"]
    sol = build_solution_measurement(GL, GL.generate(7), B)
    assert sol.labels == [0, 1, BOTTOM]
    assert np.allclose(sol.projector(2), 0)
    assert _complete([sol.projector(g) for g in range(3)], B.D)
    meas = sol.measurement(B.layout)
    assert [lab for lab, _ in meas.outcomes] == [0, 1, BOTTOM]


def test_solution_projectors_match_conjugation_oracle():
    # S·Y, one qubit each; B̂ = CNOT(S→Y) · (R_y(0.8) ⊗ I)
    c, s = math.cos(0.4), math.sin(0.4)
    ry = np.array([[c, -s], [s, c]])
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    U = cnot @ np.kron(ry, np.eye(2))
    B = QuantumStatefulSolver("two-qubit", 1, 1, 0, [1, 0], lambda t, x: U, t_class=lambda t: 0)
    P = toy_single()
    sol = build_solution_measurement(P, 0, B)
    for g, y in enumerate([0, 1]):
        Py = np.kron(np.eye(2), np.diag([1.0 - y, float(y)]))
        oracle = U.T @ Py @ U
        assert np.allclose(sol.projector(g), oracle, atol=1e-12)
        assert round(np.trace(oracle).real) == 2
    assert np.linalg.matrix_rank(sol.projector(2)) == 0


def test_missing_image_verifier_is_unsupported():
    P = toy_bigsearch()
    B = perfect_solver(P).to_quantum()
    with pytest.raises(UnsupportedAssumptionError):
        build_solution_measurement(P, 0, B)
    with pytest.raises(UnsupportedAssumptionError):
        PersistentSolver(P, B, 0.1)


# ------------------------------------------------------------------ ValEst

def _basis(D, i):
    v = np.zeros(D, dtype=complex)
    v[i] = 1
    return v


def _good_bad_solver(alpha):
    """toy-single (d = 0): state |0> always answers 0 (accepted), |1> always answers 1."""
    cls = ClassicalStatefulSolver("good-bad", 1, 1, lambda t, x, s, c: (s, s), t_class=lambda t: 0)
    return cls.to_quantum(init_ket=[math.cos(alpha), math.sin(alpha)])


def test_val_est_on_eigenstates(rng):
    B = perfect_solver(GL).to_quantum()
    op = ValueOperator(GL, B)
    assert np.allclose(op.matrix, np.diag([1.0, 0.0]))
    for i, p in ((0, 1.0), (1, 0.0)):
        post, est = val_est(op, _basis(2, i), 0.1, "exact", rng)
        assert est == p and np.allclose(post, _basis(2, i))


def test_val_est_density_matrix_input(rng):
    B = perfect_solver(GL).to_quantum()
    op = ValueOperator(GL, B)
    rho = DensityMatrix(B.layout, np.diag([0.25, 0.75]))
    ests = [val_est(op, rho, 0.1, "exact", rng)[1] for _ in range(4000)]
    assert abs(np.mean(ests) - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 4000)
    with pytest.raises(ConfigurationError):
        val_est(op, rho, 0.1, "sampled", rng)
    with pytest.raises(ConfigurationError):
        val_est(op, _basis(2, 0), 0.1, "magic", rng)


@pytest.mark.parametrize("alpha", [0.3, math.pi / 4, 1.2])
def test_val_est_born_rule(alpha, rng):
    B = _good_bad_solver(alpha)
    P = toy_single()
    op = ValueOperator(P, B)
    N = 10_000
    ests = np.array([val_est(op, initial_ket(B, rng)[1], 0.1, "exact", rng)[1] for _ in range(N)])
    assert set(np.unique(ests)) <= {0.0, 1.0}
    p = math.cos(alpha) ** 2
    assert abs(ests.mean() - p) <= 3 * math.sqrt(p * (1 - p) / N)


def test_sampled_estimates_are_grid_values(rng):
    B = zoo(GL)["use-once"]
    op = ValueOperator(GL, B)
    eps = 0.1
    N = alternation_rounds(eps)
    ests = np.array([val_est(op, initial_ket(B, rng)[1], eps, "sampled", rng)[1] for _ in range(3000)])
    assert np.allclose(ests * N, np.round(ests * N))
    p = one_shot_value(GL, B)
    sd = ests.std() / math.sqrt(len(ests))
    assert abs(ests.mean() - p) <= 3 * sd + 1e-9


def test_sampled_backend_almost_projective(rng):
    B = zoo(GL)["use-once"]
    op = ValueOperator(GL, B)
    eps, T = 0.1, 3000
    bad = 0
    for _ in range(T):
        ket, p1 = val_est(op, initial_ket(B, rng)[1], eps, "sampled", rng)
        _, p2 = val_est(op, ket, eps, "sampled", rng)
        bad += abs(p1 - p2) >= eps
    f = bad / T
    assert f <= eps + 3 * math.sqrt(eps * (1 - eps) / T)


# ------------------------------------------------------------------ Repair

def test_repair_leaves_good_state_unchanged(rng):
    B = _good_bad_solver(0.0)
    op = ValueOperator(toy_single(), B)
    sol = build_solution_measurement(toy_single(), 0, B)
    ket = initial_ket(B, rng)[1]
    out, rounds, failed = repair(op, ket, 0, sol, 1.0, 0.1, rng)
    assert rounds == 0 and not failed and np.allclose(out, ket)


@pytest.mark.parametrize("P", [GL, OWF])
def test_repair_perfect_solver(P, rng):
    B = perfect_solver(P).to_quantum()
    op = ValueOperator(P, B)
    for r in range(0, 1 << P.d, 37):
        x = P.generate(r)
        sol = build_solution_measurement(P, x, B)
        ket, p = val_est(op, initial_ket(B, rng)[1], 0.05, "exact", rng)
        g, ket = measure_solution(sol, ket, rng)
        assert sol.labels[g] == P.solve(x)
        ket, rounds, failed = repair(op, ket, g, sol, p, 0.05, rng)
        assert not failed and val_est(op, ket, 0.05, "exact", rng)[1] == 1.0


@pytest.mark.parametrize("name", ["use-once", "noisy", "duplicate-detecting"])
def test_repair_restores_estimate(name, rng):
    B = zoo(GL)[name]
    op = ValueOperator(GL, B)
    eps, T = 0.05, 10_000
    sols = {}
    misses, disturbed = 0, 0
    for _ in range(T):
        x = GL.sample_instance(rng)[1]
        sol = sols.setdefault(x, build_solution_measurement(GL, x, B))
        ket, p = val_est(op, initial_ket(B, rng)[1], eps, "exact", rng)
        g, ket = measure_solution(sol, ket, rng)
        ket, rounds, failed = repair(op, ket, g, sol, p, eps, rng)
        disturbed += rounds > 0
        _, p2 = val_est(op, ket, eps, "exact", rng)
        misses += abs(p - p2) >= eps
    assert misses / T <= eps + 3 * math.sqrt(eps * (1 - eps) / T)


def test_repair_failure_signal(rng):
    B = _good_bad_solver(0.0)
    P = toy_single()
    op = ValueOperator(P, B)
    sol = build_solution_measurement(P, 0, B)
    ket = initial_ket(B, rng)[1]
    # no eigenvalue lies within 0.4 of 0.5: the good subspace is empty
    out, rounds, failed = repair(op, ket, 0, sol, 0.5, 0.4, rng)
    assert failed and rounds == round_cap(0.4)
    assert np.isclose(np.linalg.norm(out), 1.0)
    with pytest.raises(RepairFailure) as info:
        repair(op, ket, 0, sol, 0.5, 0.4, rng, on_failure="raise")
    assert info.value.state is not None


# ------------------------------------------------------------ the wrapper

def test_persist_init_examples(rng):
    for make, p in ((perfect_solver, 1.0), (wrong_solver, 0.0)):
        S = PersistentSolver(GL, make(GL).to_quantum(), 0.1)
        assert np.all(S.start(rng, 200).p0 == p)


@pytest.mark.parametrize("name", ["noisy", "use-once"])
def test_persist_init_unbiased(name, rng):
    B = zoo(GL)[name]
    S = PersistentSolver(GL, B, 0.1)
    p0 = S.start(rng, 10_000).p0
    p = one_shot_value(GL, B)
    assert abs(p0.mean() - p) <= 3 * p0.std() / math.sqrt(len(p0)) + 1e-12


def test_persist_step_perfect_solver_python_path(rng):
    B = perfect_solver(OWF).to_quantum()
    op = ValueOperator(OWF, B)
    st = persist_init(op, 0.1, rng)
    assert st.p_prev == 1.0
    for _ in range(20):
        x = OWF.sample_instance(rng)[1]
        y, st = persist_step(op, st, x, rng)
        assert y == OWF.solve(x)
    assert st.i == 20
    assert [t["i"] for t in st.telemetry] == list(range(1, 21))
    assert all(t["p_before"] == 1.0 and t["p_after"] == 1.0 for t in st.telemetry)
    assert st.telemetry[1]["eps"] == pytest.approx(epsilon_schedule(0.1, 2))


def test_persisted_runs_telemetry(rng):
    S = PersistentSolver(GL, perfect_solver(GL).to_quantum(), 0.1)
    runs = S.start(rng, 5)
    runs.telemetry = []
    xs = np.array([[GL.generate(int(r)) for r in rng.integers(0, 256, 20)] for _ in range(5)])
    ans = runs.answer_batch(xs)
    assert np.array_equal(ans, np.vectorize(GL.solve)(xs))
    assert len(runs.telemetry) == 100
    assert all(t["p_before"] == 1.0 and t["p_after"] == 1.0 for t in runs.telemetry)
    assert np.all(runs.values() == 1.0)


def test_persisted_use_once_keeps_its_value(rng):
    """The raw use-once solver drops to 0.5; the wrapped one stays near p₀*."""
    B = use_once_solver(GL)
    S = PersistentSolver(GL, B, 0.1)
    runs = S.start(rng, 300)
    xs = np.array([[GL.generate(int(r)) for r in rng.integers(0, 256, 10)] for _ in range(300)])
    ans = runs.answer_batch(xs)
    assert np.mean(ans == np.vectorize(GL.solve)(xs)) > 0.99
    assert np.max(np.abs(runs.values() - runs.p0)) <= 0.1


def test_sampled_wrapper_runs(rng):
    S = PersistentSolver(OWF, zoo(OWF)["use-once"], 0.2, backend="sampled")
    runs = S.start(rng, 20)
    xs = np.array([[OWF.generate(int(r)) for r in rng.integers(0, 8, 3)] for _ in range(20)])
    runs.answer_batch(xs)
    assert np.all(runs.calls == 3)
    assert np.all((runs.p_prev >= 0) & (runs.p_prev <= 1))


def test_wrapper_parameter_checks():
    B = perfect_solver(GL).to_quantum()
    with pytest.raises(ConfigurationError):
        PersistentSolver(GL, B, 0.0)
    with pytest.raises(ConfigurationError):
        PersistentSolver(GL, B, 0.1, backend="approx")
    with pytest.raises(ConfigurationError):
        ValueOperator(OWF, B)   # answer length mismatch
