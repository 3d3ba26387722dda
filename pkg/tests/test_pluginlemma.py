import json
import math

import numpy as np
import pytest

from pqlift.errors import ConfigurationError
from pqlift.linalg import TAU_INFO, TAU_NUM, DensityMatrix, RegisterLayout
from pqlift.pluginlemma import (SideInfoExperiment, basis_map_experiment, bound_chain,
                                bundled_instances, chain_rule_bound,
                                conditional_mutual_information, conditional_td_decomposition,
                                exhaustive_sweep, from_document, joint_states, load_instance,
                                pinsker_bound, plugin_distance, random_density, random_experiment,
                                report_row, sweep_distributions, to_document)

from conftest import random_density as rd

BIT = {(0,): 0.5, (1,): 0.5}
TWO_QUBITS = RegisterLayout.of(("a", 1), ("b", 1))


def _copy_bit():
    return basis_map_experiment(BIT, 1, 1, [0, 1], name="copy-bit")


def test_independent_side_info_has_zero_distance():
    rho = rd(2, np.random.default_rng(0))
    exp = SideInfoExperiment(2, 1, (0, 1), {y: 0.25 for y in [(0, 0), (0, 1), (1, 0), (1, 1)]},
                             {y: rho for y in [(0, 0), (0, 1), (1, 0), (1, 1)]})
    assert plugin_distance(exp)["td"] <= TAU_NUM
    assert chain_rule_bound(exp)["I"] <= TAU_INFO


def test_copy_bit_distance_against_enumeration():
    exp = _copy_bit()
    # independent oracle: y ⊗ s diagonal blocks, real |y><y| against plugged I/2
    real = np.zeros(4)
    plug = np.zeros(4)
    for y in range(2):
        for s in range(2):
            real[2 * y + s] = 0.5 * (s == y)
            plug[2 * y + s] = 0.5 * 0.5
    oracle = 0.5 * np.abs(real - plug).sum()
    res = plugin_distance(exp)
    assert oracle == 0.5
    assert res["td"] == pytest.approx(oracle, abs=1e-12)
    assert res["bound"] == pytest.approx(0.70710678, abs=1e-8) and res["pass"]


def test_chain_rule_examples():
    cr = chain_rule_bound(_copy_bit())
    assert cr["I"] == pytest.approx(1.0, abs=TAU_INFO) and cr["bound"] == 1.0 and cr["pass"]
    seqs = [(a, b) for a in range(2) for b in range(2)]
    copy_last = basis_map_experiment({y: 0.25 for y in seqs}, 2, 1, [0, 1, 0, 1], name="copy-last")
    cr = chain_rule_bound(copy_last)
    assert cr["I"] == pytest.approx(0.5, abs=TAU_INFO) and cr["bound"] == 0.5 and cr["pass"]
    assert plugin_distance(copy_last)["td"] == pytest.approx(0.25, abs=1e-12)


def test_conditional_mutual_information_cross_check():
    rng = np.random.default_rng(5)
    for _ in range(20):
        exp = random_experiment(rng)
        assert chain_rule_bound(exp)["I"] == pytest.approx(conditional_mutual_information(exp), abs=1e-8)


def test_zero_memory_gives_zero_distance():
    rng = np.random.default_rng(9)
    for _ in range(10):
        exp = random_experiment(rng, max_ell=0)
        assert exp.ell == 0
        assert plugin_distance(exp)["td"] == 0.0


def test_decomposition_single_and_two_blocks():
    rho = rd(2, np.random.default_rng(1))
    one = SideInfoExperiment(1, 1, (0,), {(0,): 1.0}, {(0,): rho})
    assert conditional_td_decomposition(one)["residual"] <= TAU_NUM
    a = np.diag([0.9, 0.1]).astype(complex)
    b = np.array([[0.5, 0.5j], [-0.5j, 0.5]])
    two = SideInfoExperiment(1, 1, (0, 1), {(0,): 0.3, (1,): 0.7}, {(0,): a, (1,): b})
    mean = 0.3 * a + 0.7 * b
    by_hand = sum(w * 0.5 * np.abs(np.linalg.eigvalsh(r - mean)).sum()
                  for w, r in ((0.3, a), (0.7, b)))
    dec = conditional_td_decomposition(two)
    assert dec["rhs"] == pytest.approx(by_hand, abs=1e-12)
    assert dec["residual"] <= 1e-9


def test_random_instances_pass_everything():
    rng = np.random.default_rng(2024)
    for i in range(100):
        exp = random_experiment(rng, name=f"random-{i}")
        row = report_row(exp)
        assert row["pass"], row
        assert row["decomposition_residual"] <= 1e-9
        assert row["td"] <= row["bound"] + 1e-9


def test_exhaustive_sweep_passes():
    exps = list(exhaustive_sweep(3, 1))
    assert len(exps) == 1116
    worst = 0.0
    for exp in exps:
        pd = plugin_distance(exp)
        assert pd["td"] <= pd["bound"] + 1e-9
        assert chain_rule_bound(exp)["pass"]
        if pd["bound"] > 0:
            worst = max(worst, pd["td"] / pd["bound"])
    assert worst <= 1.0


def test_bound_chain_is_monotone():
    rng = np.random.default_rng(3)
    for _ in range(30):
        ch = bound_chain(random_experiment(rng))
        assert ch["pass"]
        a, b, c, d = ch["chain"]
        assert a <= b + TAU_NUM <= c + 2 * TAU_NUM <= d + 3 * TAU_NUM


def test_pinsker_examples():
    prod = DensityMatrix(TWO_QUBITS, np.kron(rd(2, np.random.default_rng(0)), rd(2, np.random.default_rng(1))))
    r = pinsker_bound(prod, (["a"], ["b"]))
    assert r["td"] <= TAU_NUM and abs(r["I"]) <= TAU_INFO
    bell = DensityMatrix.from_ket(TWO_QUBITS, np.array([1, 0, 0, 1]) / math.sqrt(2))
    spectrum = np.sort(np.linalg.eigvalsh(bell.entries - np.eye(4) / 4))
    assert np.allclose(spectrum, [-0.25, -0.25, -0.25, 0.75])
    r = pinsker_bound(bell, (["a"], ["b"]))
    assert r["td"] == pytest.approx(0.75, abs=1e-12)
    assert r["sqrt_half_I"] == pytest.approx(1.0, abs=1e-9) and r["pass"]
    with pytest.raises(ConfigurationError):
        pinsker_bound(bell, (["b"], ["a"]))


def test_pinsker_random_two_qubit_states():
    rng = np.random.default_rng(77)
    for _ in range(200):
        rho = DensityMatrix(TWO_QUBITS, random_density(4, rng))
        assert pinsker_bound(rho, (["a"], ["b"]))["pass"]


def test_joint_states_are_block_diagonal_and_normalised():
    exp = random_experiment(np.random.default_rng(8), max_t=2, max_ell=1)
    real, plug = joint_states(exp)
    for rho in (real, plug):
        assert abs(np.trace(rho.entries) - 1) <= TAU_NUM
    assert real.layout.names == ("j", "prefix", "y", "s")


def test_experiment_validation():
    with pytest.raises(ConfigurationError):
        SideInfoExperiment(1, 1, (0, 1), {(0,): 0.5, (1,): 0.4}, {(0,): np.eye(2) / 2, (1,): np.eye(2) / 2})
    with pytest.raises(ConfigurationError):
        SideInfoExperiment(1, 1, (0, 1), {(0,): 1.0}, {})
    with pytest.raises(ConfigurationError):
        SideInfoExperiment(1, 1, (0, 1), {(0,): 1.0}, {(0,): np.eye(4) / 4})
    with pytest.raises(ConfigurationError):
        SideInfoExperiment(9, 4, tuple(range(4)), {(0,) * 9: 1.0}, {(0,) * 9: np.eye(16) / 16})


def test_document_round_trip(tmp_path):
    exp = random_experiment(np.random.default_rng(4), name="rt")
    doc = to_document(exp)
    path = tmp_path / "rt.json"
    path.write_text(json.dumps(doc))
    back = load_instance(path)
    assert back.t == exp.t and back.ell == exp.ell and back.name == "rt"
    assert plugin_distance(back)["td"] == pytest.approx(plugin_distance(exp)["td"], abs=1e-12)


def test_document_with_kets_and_default_state():
    doc = {"name": "kets", "t": 1, "ell": 1, "alphabet": ["a", "b"],
           "distribution": [{"y": ["a"], "p": 0.5}, {"y": ["b"], "p": 0.5}],
           "state_map": [{"y": ["a"], "ket": [[1, 0], [0, 0]]}],
           "default_state": {"ket": [[0, 0], [1, 0]]}}
    exp = from_document(doc)
    assert plugin_distance(exp)["td"] == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        from_document({"t": 1})


def test_missing_instance_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_instance(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_instance(bad)


def test_bundled_instances_pass():
    paths = bundled_instances()
    assert len(paths) >= 7
    for p in paths:
        row = report_row(load_instance(p))
        assert row["pass"], row


def test_sweep_distributions_normalised():
    for t in (1, 2, 3):
        for name, probs in sweep_distributions(t).items():
            assert sum(probs.values()) == pytest.approx(1.0), name
