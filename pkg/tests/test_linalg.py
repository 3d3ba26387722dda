import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pqlift.errors import ConfigurationError, NumericalError
from pqlift.linalg import (TAU_INFO, TAU_NUM, DensityMatrix, ProjectiveMeasurement, RegisterLayout,
                           Unitary, jordan_blocks, measure, mutual_information, partial_trace,
                           purify, trace_distance, von_neumann_entropy)

from conftest import random_density, random_unitary

Q1 = RegisterLayout.of(("a", 1))
Q2 = RegisterLayout.of(("a", 1), ("b", 1))
KET0 = np.array([1, 0])
KET1 = np.array([0, 1])
PLUS = np.array([1, 1]) / math.sqrt(2)
BELL = np.array([1, 0, 0, 1]) / math.sqrt(2)


def seeds():
    return st.integers(0, 2**32 - 1)


# ------------------------------------------------------------------ layout

def test_layout_counts_and_cap():
    lay = RegisterLayout.of(("S", 2), ("Y", 1), ("Yhat", 3))
    assert lay.total_qubits == 6 and lay.dim == 64
    with pytest.raises(ConfigurationError):
        RegisterLayout.of(("a", 7), ("b", 6))
    with pytest.raises(ConfigurationError):
        RegisterLayout.of(("a", 1), ("a", 1))
    assert RegisterLayout.of(("a", 7), ("b", 6), cap=13).total_qubits == 13


def test_density_invariants_rejected():
    with pytest.raises(ConfigurationError):
        DensityMatrix(Q1, np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ConfigurationError):
        DensityMatrix(Q1, np.eye(2))
    with pytest.raises(ConfigurationError):
        DensityMatrix(Q1, np.diag([1.5, -0.5]))
    with pytest.raises(ConfigurationError):
        Unitary(Q1, np.array([[1, 1], [0, 1]]))


# ---------------------------------------------------------- trace distance

def test_trace_distance_examples():
    r0 = DensityMatrix.from_ket(Q1, KET0)
    r1 = DensityMatrix.from_ket(Q1, KET1)
    rp = DensityMatrix.from_ket(Q1, PLUS)
    assert trace_distance(r0, r0) == pytest.approx(0.0, abs=TAU_NUM)
    assert trace_distance(r0, r1) == pytest.approx(1.0, abs=TAU_NUM)
    # closed form for pure states: sqrt(1 - |<psi|phi>|^2)
    oracle = math.sqrt(1 - abs(np.vdot(KET0, PLUS)) ** 2)
    assert trace_distance(r0, rp) == pytest.approx(0.70710678, abs=1e-8)
    assert trace_distance(r0, rp) == pytest.approx(oracle, abs=1e-9)


def test_trace_distance_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        trace_distance(DensityMatrix.maximally_mixed(Q1), DensityMatrix.maximally_mixed(Q2))


@given(seeds())
def test_trace_distance_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (DensityMatrix(Q2, random_density(4, rng)) for _ in range(3))
    ab, bc, ac = trace_distance(a, b), trace_distance(b, c), trace_distance(a, c)
    assert 0 <= ab <= 1
    assert ab == pytest.approx(trace_distance(b, a), abs=TAU_NUM)
    assert ac <= ab + bc + TAU_NUM
    U = Unitary(Q2, random_unitary(4, rng))
    assert trace_distance(U.apply(a), U.apply(b)) == pytest.approx(ab, abs=1e-8)


# ------------------------------------------------------------ partial trace

def _naive_partial_trace(rho, dims, keep):
    """Index-summation partial trace over a product of subsystems."""
    n = len(dims)
    keep = sorted(keep)
    gone = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((dk, dk), dtype=complex)
    import itertools
    for a in itertools.product(*[range(dims[i]) for i in keep]):
        for b in itertools.product(*[range(dims[i]) for i in keep]):
            s = 0j
            for g in itertools.product(*[range(dims[i]) for i in gone]):
                ia, ib = [0] * n, [0] * n
                for pos, i in enumerate(keep):
                    ia[i], ib[i] = a[pos], b[pos]
                for pos, i in enumerate(gone):
                    ia[i] = ib[i] = g[pos]
                row = np.ravel_multi_index(ia, dims)
                col = np.ravel_multi_index(ib, dims)
                s += rho[row, col]
            out[np.ravel_multi_index(a, [dims[i] for i in keep]),
                np.ravel_multi_index(b, [dims[i] for i in keep])] = s
    return out


def test_partial_trace_examples(rng):
    ra = DensityMatrix(Q1, random_density(2, rng))
    rb = DensityMatrix(RegisterLayout.of(("b", 1)), random_density(2, rng))
    prod = ra.tensor(rb)
    assert partial_trace(prod, ["a"]).allclose(ra)
    bell = DensityMatrix.from_ket(Q2, BELL)
    assert np.allclose(partial_trace(bell, ["b"]).entries, np.eye(2) / 2, atol=TAU_NUM)
    assert partial_trace(bell, ["a", "b"]).allclose(bell)
    with pytest.raises(ConfigurationError):
        partial_trace(bell, ["zz"])


def test_partial_trace_three_qubits_against_index_sum(rng):
    lay = RegisterLayout.of(("a", 1), ("b", 1), ("c", 1))
    rho = DensityMatrix(lay, random_density(8, rng))
    for keep in (["a"], ["b"], ["c"], ["a", "c"], ["b", "c"]):
        idx = [lay.names.index(k) for k in keep]
        oracle = _naive_partial_trace(rho.entries, [2, 2, 2], idx)
        got = partial_trace(rho, keep).entries
        assert np.allclose(got, oracle, atol=1e-12)


# ----------------------------------------------------------------- purify

def test_purify_examples():
    pure = DensityMatrix.from_ket(Q1, PLUS)
    p = purify(pure)
    anc0 = np.zeros((2, 2)); anc0[0, 0] = 1
    assert np.allclose(p.entries, np.kron(pure.entries, anc0), atol=1e-12)
    mixed = purify(DensityMatrix.maximally_mixed(Q1))
    assert mixed.purity_gap() < TAU_NUM
    # maximally entangled: both halves maximally mixed, fidelity with a Bell state is 1
    assert abs(np.vdot(mixed.top_ket(), BELL)) ** 2 == pytest.approx(1.0, abs=1e-9)
    d = DensityMatrix(Q1, np.diag([0.75, 0.25]))
    pd = purify(d)
    assert pd.purity_gap() < TAU_NUM
    assert partial_trace(pd, ["a"]).allclose(d)


@given(seeds(), st.integers(1, 4))
def test_purify_round_trip(seed, rank):
    rng = np.random.default_rng(seed)
    rho = DensityMatrix(Q2, random_density(4, rng, rank))
    p = purify(rho)
    assert p.purity_gap() < 1e-9
    assert partial_trace(p, ["a", "b"]).allclose(rho, tol=1e-9)


# ---------------------------------------------------------------- entropy

def test_entropy_examples():
    assert von_neumann_entropy(DensityMatrix.from_ket(Q1, KET0)) == pytest.approx(0.0, abs=TAU_INFO)
    assert von_neumann_entropy(DensityMatrix.maximally_mixed(Q1)) == pytest.approx(1.0, abs=TAU_INFO)
    bell = DensityMatrix.from_ket(Q2, BELL)
    assert mutual_information(bell, (["a"], ["b"])) == pytest.approx(2.0, abs=TAU_INFO)
    with pytest.raises(ConfigurationError):
        mutual_information(bell, (["a"], ["a", "b"]))


@given(seeds())
def test_mutual_information_of_products_vanishes(seed):
    rng = np.random.default_rng(seed)
    ra = DensityMatrix(Q1, random_density(2, rng))
    rb = DensityMatrix(RegisterLayout.of(("b", 2)), random_density(4, rng))
    assert abs(mutual_information(ra.tensor(rb), (["a"], ["b"]))) <= TAU_INFO


@given(seeds())
def test_entropy_bounds(seed):
    rng = np.random.default_rng(seed)
    rho = DensityMatrix(Q2, random_density(4, rng))
    h = von_neumann_entropy(rho)
    assert -TAU_INFO <= h <= 2 + TAU_INFO
    assert mutual_information(rho, (["a"], ["b"])) >= -TAU_INFO


# ---------------------------------------------------------------- measure

def test_measure_examples(rng):
    comp = ProjectiveMeasurement.computational(Q1)
    label, post, p = measure(DensityMatrix.from_ket(Q1, KET0), comp, rng)
    assert (label, p) == (0, 1.0) and post.allclose(DensityMatrix.from_ket(Q1, KET0))
    labels = [measure(DensityMatrix.from_ket(Q1, PLUS), comp, rng)[0] for _ in range(2000)]
    assert abs(np.mean(labels) - 0.5) < 4 * 0.5 / math.sqrt(2000)
    _, _, p = measure(DensityMatrix.from_ket(Q1, PLUS), comp, rng)
    assert p == pytest.approx(0.5)


def test_measure_born_frequencies(rng):
    """Outcome frequencies on a fixed 2-qubit state match Tr(Π ρ) within 3σ."""
    psi = np.array([0.6, 0.0, 0.48j, 0.64])
    rho = DensityMatrix.from_ket(Q2, psi)
    comp = ProjectiveMeasurement.computational(Q2)
    exact = {lab: float(np.real(np.trace(P @ rho.entries))) for lab, P in comp.outcomes}
    N = 100_000
    counts = {lab: 0 for lab in exact}
    for _ in range(N):
        counts[measure(rho, comp, rng)[0]] += 1
    for lab, p in exact.items():
        assert abs(counts[lab] / N - p) <= 3 * math.sqrt(p * (1 - p) / N) + 1e-12


def test_measure_never_returns_null_outcome(rng):
    comp = ProjectiveMeasurement.computational(Q2)
    rho = DensityMatrix.from_ket(Q2, BELL)
    for _ in range(200):
        assert measure(rho, comp, rng)[0] in (0, 3)


def test_measurement_validation():
    with pytest.raises(ConfigurationError):
        ProjectiveMeasurement(Q1, ((0, np.diag([1, 0])),))
    with pytest.raises(ConfigurationError):
        ProjectiveMeasurement(Q1, ((0, np.array([[0.5, 0.5], [0.5, 0.5]])), (1, np.diag([1, 0]))))
    bad = DensityMatrix(Q1, np.eye(2) / 2)
    with pytest.raises(ConfigurationError):
        measure(bad, ProjectiveMeasurement.computational(Q2), np.random.default_rng(0))


def test_computational_subset_labels():
    comp = ProjectiveMeasurement.computational(Q2, ["b"])
    assert comp.labels == [0, 1]
    assert np.allclose(comp.projector(1), np.diag([0, 1, 0, 1]))


# ----------------------------------------------------------------- Jordan

def test_jordan_examples():
    P = np.diag([1.0, 0.0]).astype(complex)
    dec = jordan_blocks(P, P)
    assert sorted(b.value for b in dec.blocks) == [0.0, 1.0]
    Q = np.outer(PLUS, PLUS).astype(complex)
    dec = jordan_blocks(P, Q)
    assert len(dec.blocks) == 1 and dec.blocks[0].basis.shape[1] == 2
    assert dec.blocks[0].value == pytest.approx(abs(np.vdot(KET0, PLUS)) ** 2, abs=1e-12)
    Qo = np.diag([0.0, 1.0]).astype(complex)
    dec = jordan_blocks(P, Qo)
    assert [b.value for b in dec.blocks] == [0.0]
    with pytest.raises(ConfigurationError):
        jordan_blocks(P, np.eye(2) * 0.5)


def _random_projector(dim, rank, rng):
    u = random_unitary(dim, rng)[:, :rank]
    return u @ u.conj().T


@given(seeds(), st.integers(0, 6), st.integers(0, 6))
def test_jordan_properties(seed, rp, rq):
    rng = np.random.default_rng(seed)
    P, Q = _random_projector(6, rp, rng), _random_projector(6, rq, rng)
    dec = jordan_blocks(P, Q)
    basis = np.concatenate([b.basis for b in dec.blocks], axis=1)
    assert basis.shape == (6, 6)
    assert np.allclose(basis.conj().T @ basis, np.eye(6), atol=1e-8)
    for b in dec.blocks:
        assert b.basis.shape[1] in (1, 2) and 0.0 <= b.value <= 1.0
        proj = b.basis @ b.basis.conj().T
        for X in (P, Q):      # invariance: X maps the block into itself
            assert np.allclose(proj @ X @ b.basis, X @ b.basis, atol=1e-7)
    p2, q2 = dec.reconstruct()
    assert np.allclose(p2, P, atol=1e-7) and np.allclose(q2, Q, atol=1e-7)
