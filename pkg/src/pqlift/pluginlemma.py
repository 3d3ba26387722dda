"""Exact checks of the plug-in bound and the information inequalities behind it.

A side-information experiment is a joint distribution over sequences
y⃗ = (y_1, ..., y_t) from a finite alphabet together with an ℓ-qubit state
ρ(y⃗) for each sequence. With j uniform in [t] and y′ drawn from
Y_j | y⃗_{j-1}, the plug-in bound states

    TD((j, y⃗_{j-1}, y_j, ρ(y⃗)), (j, y⃗_{j-1}, y′, ρ(y⃗))) ≤ √(ℓ/(2t)).

Classical values are encoded as computational-basis states of their own
registers (j, the prefix padded to length t-1, the symbol), so both sides are
block-diagonal density matrices.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .linalg import (DEFAULT_QUBIT_CAP, TAU_NUM, DensityMatrix, RegisterLayout, mutual_information,
                     partial_trace, trace_distance, trace_norm, von_neumann_entropy)


@dataclass
class SideInfoExperiment:
    t: int
    ell: int
    alphabet: tuple
    probs: dict[tuple[int, ...], float]          # y⃗ (alphabet indices) -> probability
    states: dict[tuple[int, ...], np.ndarray]    # y⃗ -> 2^ℓ × 2^ℓ density matrix
    name: str = "experiment"
    cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        if self.t < 1:
            raise ConfigurationError("t must be at least 1")
        A = len(self.alphabet)
        if A < 1:
            raise ConfigurationError("empty alphabet")
        total = sum(self.probs.values())
        if abs(total - 1.0) > TAU_NUM:
            raise ConfigurationError(f"{self.name}: probabilities sum to {total}")
        if min(self.probs.values(), default=0.0) < -TAU_NUM:
            raise ConfigurationError(f"{self.name}: negative probability")
        dim = 1 << self.ell
        for y, p in self.probs.items():
            if len(y) != self.t or any(not 0 <= s < A for s in y):
                raise ConfigurationError(f"{self.name}: bad sequence {y}")
            if p > 0 and y not in self.states:
                raise ConfigurationError(f"{self.name}: no state for sequence {y}")
        lay = RegisterLayout((("s", self.ell),), cap=self.cap)
        for y, rho in self.states.items():
            if np.shape(rho) != (dim, dim):
                raise ConfigurationError(f"{self.name}: state for {y} is not {self.ell}-qubit")
            DensityMatrix(lay, rho)        # validates
        # exact unit trace, so that ℓ = 0 experiments give exactly zero distance
        self.states = {y: _unit_trace(np.asarray(rho, dtype=complex))
                       for y, rho in self.states.items()}
        if self.qubits_needed() > self.cap:
            raise ConfigurationError(f"{self.name}: encoding needs {self.qubits_needed()} qubits")

    @property
    def symbol_bits(self) -> int:
        return max(1, math.ceil(math.log2(len(self.alphabet)))) if len(self.alphabet) > 1 else 0

    @property
    def index_bits(self) -> int:
        return max(0, math.ceil(math.log2(self.t))) if self.t > 1 else 0

    def qubits_needed(self) -> int:
        return self.index_bits + self.t * self.symbol_bits + self.ell

    def layout(self) -> RegisterLayout:
        b = self.symbol_bits
        return RegisterLayout((("j", self.index_bits), ("prefix", (self.t - 1) * b),
                               ("y", b), ("s", self.ell)), cap=self.cap)

    # -- conditional pieces
    def prefix_table(self, j: int):
        """{prefix (length j-1): (p(prefix), {y: (p(y|prefix), mean ρ given prefix, y)})}."""
        out: dict = {}
        for seq, p in self.probs.items():
            if p <= 0:
                continue
            pre, y = seq[: j - 1], seq[j - 1]
            if pre not in out:
                out[pre] = [0.0, {}]
            out[pre][0] += p
            cell = out[pre][1].setdefault(y, [0.0, np.zeros_like(self.states[seq], dtype=complex)])
            cell[0] += p
            cell[1] = cell[1] + p * self.states[seq]
        table = {}
        for pre, (pp, cells) in out.items():
            table[pre] = (pp, {y: (py / pp, _unit_trace(rho)) for y, (py, rho) in cells.items()})
        return table


def _unit_trace(m: np.ndarray) -> np.ndarray:
    # real and imaginary parts divided separately: complex division is not correctly rounded
    tr = float(np.trace(m).real)
    return m.real / tr + 1j * (m.imag / tr)


def _mixture(cells) -> np.ndarray:
    """Σ_y p(y|prefix) ρ_y, renormalised so round-off in Σ p(y|prefix) cannot leak into distances."""
    return _unit_trace(sum(py * rho for py, rho in cells.values()))


def _encode(exp: SideInfoExperiment, j: int, pre: tuple, y: int) -> int:
    b = exp.symbol_bits
    code = j - 1
    for s in pre + (0,) * (exp.t - 1 - len(pre)):
        code = (code << b) | s
    return (code << b) | y


def joint_states(exp: SideInfoExperiment) -> tuple[DensityMatrix, DensityMatrix]:
    """(ρ_real, ρ_plugged): the two block-diagonal cq-states, as full matrices."""
    lay = exp.layout()
    ds = 1 << exp.ell
    real = np.zeros((lay.dim, lay.dim), dtype=complex)
    plug = np.zeros_like(real)
    for j in range(1, exp.t + 1):
        for pre, (pp, cells) in exp.prefix_table(j).items():
            mean = _mixture(cells)
            for y, (py, rho) in cells.items():
                c = _encode(exp, j, pre, y) * ds
                real[c:c + ds, c:c + ds] += pp * py * rho / exp.t
                plug[c:c + ds, c:c + ds] += pp * py * mean / exp.t
    return DensityMatrix(lay, real), DensityMatrix(lay, plug)


def plugin_bound(ell: int, t: int) -> float:
    return math.sqrt(ell / (2.0 * t))


def plugin_distance(exp: SideInfoExperiment) -> dict:
    """Exact TD between the real and plugged-in experiments, versus √(ℓ/(2t))."""
    real, plug = joint_states(exp)
    td = trace_distance(real, plug)
    bound = plugin_bound(exp.ell, exp.t)
    return {"td": td, "bound": bound, "pass": td <= bound + TAU_NUM}


def chain_rule_bound(exp: SideInfoExperiment) -> dict:
    """I(s : y_J | y⃗_{J-1}, J) from conditional entropies, versus ℓ/t.

    Uses H(s | Z) = E_z H(s | z) for the classical conditioning values.
    """
    total = 0.0
    terms = []
    for j in range(1, exp.t + 1):
        Ij = 0.0
        for pre, (pp, cells) in exp.prefix_table(j).items():
            mean = _mixture(cells)
            cond = sum(py * von_neumann_entropy(rho) for py, rho in cells.values())
            Ij += pp * (von_neumann_entropy(mean) - cond)
        terms.append(Ij)
        total += Ij / exp.t
    bound = exp.ell / exp.t
    return {"I": total, "bound": bound, "pass": total <= bound + TAU_NUM, "per_index": terms}


def conditional_mutual_information(exp: SideInfoExperiment) -> float:
    """The same quantity from joint entropies of the full real state:
    H(s,Z) + H(y,Z) - H(s,y,Z) - H(Z) with Z = (j, prefix)."""
    real, _ = joint_states(exp)
    z = ["j", "prefix"]
    h = lambda names: von_neumann_entropy(partial_trace(real, names))
    return h(z + ["s"]) + h(z + ["y"]) - von_neumann_entropy(real) - h(z)


def conditional_td_decomposition(exp: SideInfoExperiment) -> dict:
    """|TD(full states) - E_z TD(blocks)| with z = (j, prefix, y)."""
    real, plug = joint_states(exp)
    lhs = trace_distance(real, plug)
    ds = 1 << exp.ell
    rhs = 0.0
    for j in range(1, exp.t + 1):
        for pre, (pp, cells) in exp.prefix_table(j).items():
            mean = _mixture(cells)
            for y, (py, rho) in cells.items():
                w = pp * py / exp.t
                rhs += w * 0.5 * trace_norm(rho - mean)
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


def bound_chain(exp: SideInfoExperiment) -> dict:
    """The inequality chain term by term: TD ≤ E√(I_z/2) ≤ √(E I_z/2) ≤ √(ℓ/(2t))."""
    td = plugin_distance(exp)["td"]
    e_sqrt = 0.0
    e_I = 0.0
    for j in range(1, exp.t + 1):
        for pre, (pp, cells) in exp.prefix_table(j).items():
            mean = _mixture(cells)
            I = von_neumann_entropy(mean) - sum(py * von_neumann_entropy(rho) for py, rho in cells.values())
            I = I if I > TAU_NUM else 0.0
            e_sqrt += pp / exp.t * math.sqrt(I / 2.0)
            e_I += pp / exp.t * I
    chain = [td, e_sqrt, math.sqrt(e_I / 2.0), plugin_bound(exp.ell, exp.t)]
    ok = all(a <= b + TAU_NUM for a, b in zip(chain, chain[1:]))
    return {"chain": chain, "pass": ok}


def pinsker_bound(rho: DensityMatrix, split) -> dict:
    """TD(ρ_XY, ρ_X ⊗ ρ_Y) versus √(I(X:Y)/2)."""
    names = rho.layout.names
    a = [n for n in names if n in set(split[0])]
    b = [n for n in names if n in set(split[1])]
    if tuple(a + b) != names:
        raise ConfigurationError("split must be (leading registers, trailing registers) covering the layout")
    ra, rb = partial_trace(rho, a), partial_trace(rho, b)
    prod = DensityMatrix(rho.layout, np.kron(ra.entries, rb.entries), check=False)
    td = trace_distance(rho, prod)
    I = mutual_information(rho, (a, b))
    rhs = math.sqrt(max(I, 0.0) / 2.0)
    return {"td": td, "sqrt_half_I": rhs, "I": I, "pass": td <= rhs + TAU_NUM}


# ------------------------------------------------------------------ instances

def _ket_rho(ket) -> np.ndarray:
    v = np.asarray(ket, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def _complex(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def from_document(doc: dict) -> SideInfoExperiment:
    """Build an experiment from the JSON instance format (see README)."""
    try:
        t, ell = int(doc["t"]), int(doc["ell"])
        alphabet = tuple(doc["alphabet"])
        index = {s: i for i, s in enumerate(alphabet)}
        probs: dict = {}
        for e in doc["distribution"]:
            y = tuple(index[s] for s in e["y"])
            probs[y] = probs.get(y, 0.0) + float(e["p"])
        states: dict = {}
        default = doc.get("default_state")
        for e in doc.get("state_map", []):
            y = tuple(index[s] for s in e["y"])
            states[y] = _ket_rho(_complex(e["ket"])) if "ket" in e else _complex(e["rho"])
        if default is not None:
            rho = _ket_rho(_complex(default["ket"])) if "ket" in default else _complex(default["rho"])
            for y in probs:
                states.setdefault(y, rho)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigurationError(f"malformed instance document: {err}") from err
    return SideInfoExperiment(t, ell, alphabet, probs, states, name=str(doc.get("name", "instance")))


def to_document(exp: SideInfoExperiment) -> dict:
    def enc(m):
        return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]
    return {"name": exp.name, "t": exp.t, "ell": exp.ell, "alphabet": list(exp.alphabet),
            "distribution": [{"y": [exp.alphabet[s] for s in y], "p": p}
                             for y, p in sorted(exp.probs.items())],
            "state_map": [{"y": [exp.alphabet[s] for s in y], "rho": enc(r)}
                          for y, r in sorted(exp.states.items())]}


def load_instance(path) -> SideInfoExperiment:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigurationError(f"cannot read instance {path}: {err}") from err
    return from_document(doc)


def bundled_instances() -> list[Path]:
    here = Path(__file__).parent / "data" / "plugin_instances"
    return sorted(here.glob("*.json"))


def basis_map_experiment(probs: dict, t: int, ell: int, table: Sequence[int],
                         name: str = "basis-map") -> SideInfoExperiment:
    """Sequence y⃗ (binary, index = int of bits) mapped to basis state |table[y⃗]⟩."""
    dim = 1 << ell
    states = {}
    for idx, y in enumerate(itertools.product(range(2), repeat=t)):
        rho = np.zeros((dim, dim), dtype=complex)
        rho[table[idx], table[idx]] = 1.0
        states[y] = rho
    return SideInfoExperiment(t, ell, (0, 1), dict(probs), states, name=name)


def sweep_distributions(t: int) -> dict[str, dict]:
    """Binary sequence distributions used by the exhaustive sweep."""
    seqs = list(itertools.product(range(2), repeat=t))
    uniform = {y: 1.0 / len(seqs) for y in seqs}
    copies = {y: (0.5 if len(set(y)) == 1 else 0.0) for y in seqs}
    biased = {y: float(np.prod([0.8 if s == 0 else 0.2 for s in y])) for y in seqs}
    markov = {}
    for y in seqs:
        p = 0.5
        for a, b in zip(y, y[1:]):
            p *= 0.9 if a == b else 0.1
        markov[y] = p
    return {"uniform": uniform, "copies": {y: p for y, p in copies.items() if p > 0},
            "biased": biased, "markov": markov}


def exhaustive_sweep(max_t: int = 3, max_ell: int = 1) -> Iterable[SideInfoExperiment]:
    """Every deterministic basis-state map y⃗ -> |b⟩, b < 2^ℓ, for each sweep distribution."""
    for t in range(1, max_t + 1):
        for dname, probs in sweep_distributions(t).items():
            for ell in range(0, max_ell + 1):
                for table in itertools.product(range(1 << ell), repeat=1 << t):
                    yield basis_map_experiment(probs, t, ell, table,
                                               name=f"sweep-t{t}-l{ell}-{dname}-{table}")


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = rank or int(rng.integers(1, dim + 1))
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_experiment(rng: np.random.Generator, max_t: int = 3, max_ell: int = 2,
                      name: str = "random") -> SideInfoExperiment:
    t = int(rng.integers(1, max_t + 1))
    ell = int(rng.integers(0, max_ell + 1))
    A = int(rng.integers(2, 4)) if t <= 2 else 2
    seqs = list(itertools.product(range(A), repeat=t))
    p = rng.dirichlet(np.full(len(seqs), 0.5))
    probs = {y: float(q) for y, q in zip(seqs, p)}
    fix = 1.0 - sum(probs.values())
    probs[seqs[0]] += fix
    states = {y: random_density(1 << ell, rng) for y in seqs}
    return SideInfoExperiment(t, ell, tuple(range(A)), probs, states, name=name)


def report_row(exp: SideInfoExperiment) -> dict:
    pd = plugin_distance(exp)
    cr = chain_rule_bound(exp)
    dec = conditional_td_decomposition(exp)
    ch = bound_chain(exp)
    return {"name": exp.name, "t": exp.t, "ell": exp.ell, "td": pd["td"], "bound": pd["bound"],
            "I": cr["I"], "I_bound": cr["bound"], "decomposition_residual": dec["residual"],
            "chain_ok": ch["pass"],
            "pass": bool(pd["pass"] and cr["pass"] and ch["pass"] and dec["residual"] <= TAU_NUM)}
