"""Exact dense linear algebra over small register layouts.

All spectral quantities (trace distance, entropies, purification, Jordan
blocks) go through :func:`spectrum`, a thin wrapper around ``numpy.linalg.eigh``.
Basis ordering is big-endian over registers: the first register in a layout
holds the most significant bits of a basis index.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError

TAU_NUM = 1e-9
TAU_INFO = 1e-7
DEFAULT_QUBIT_CAP = 12

DEBUG = os.environ.get("PQLIFT_DEBUG", "") not in ("", "0")


def spectrum(h: np.ndarray, vectors: bool = True):
    """Eigen-decomposition of a Hermitian matrix (ascending eigenvalues)."""
    h = np.asarray(h)
    h = 0.5 * (h + h.conj().T)
    if vectors:
        return np.linalg.eigh(h)
    return np.linalg.eigvalsh(h)


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple[tuple[str, int], ...]
    cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        regs = tuple((str(n), int(q)) for n, q in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate register names in {names}")
        if any(q < 0 for _, q in regs):
            raise ConfigurationError("register sizes must be non-negative")
        if self.total_qubits > self.cap:
            raise ConfigurationError(
                f"layout needs {self.total_qubits} qubits, cap is {self.cap}")

    @classmethod
    def of(cls, *registers: tuple[str, int], cap: int = DEFAULT_QUBIT_CAP):
        return cls(tuple(registers), cap)

    @property
    def total_qubits(self) -> int:
        return sum(q for _, q in self.registers)

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.registers)

    def qubits(self, name: str) -> int:
        for n, q in self.registers:
            if n == name:
                return q
        raise ConfigurationError(f"unknown register {name!r}")

    def register_dims(self) -> list[int]:
        return [1 << q for _, q in self.registers]

    def select(self, names: Iterable[str]) -> "RegisterLayout":
        keep = set(names)
        for n in keep:
            self.qubits(n)
        return RegisterLayout(tuple(r for r in self.registers if r[0] in keep), self.cap)

    def __add__(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.registers + other.registers, max(self.cap, other.cap))

    def index(self, **values: int) -> int:
        """Basis index with the given register values (missing registers are 0)."""
        idx = 0
        for n, q in self.registers:
            v = int(values.get(n, 0))
            if v >> q:
                raise ConfigurationError(f"value {v} does not fit register {n}")
            idx = (idx << q) | v
        return idx


def _check_square(entries: np.ndarray, layout: RegisterLayout) -> np.ndarray:
    a = np.asarray(entries, dtype=complex)
    if a.shape != (layout.dim, layout.dim):
        raise ConfigurationError(f"matrix shape {a.shape} does not match layout dim {layout.dim}")
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    layout: RegisterLayout
    entries: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        a = _check_square(self.entries, self.layout)
        if self.check:
            if np.max(np.abs(a - a.conj().T), initial=0.0) > TAU_NUM:
                raise ConfigurationError("density matrix is not Hermitian")
            if abs(np.trace(a).real - 1.0) > TAU_NUM:
                raise ConfigurationError(f"density matrix trace {np.trace(a).real} != 1")
            if spectrum(a, vectors=False)[0] < -TAU_NUM:
                raise ConfigurationError("density matrix has a negative eigenvalue")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_ket(cls, layout: RegisterLayout, ket) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ConfigurationError("zero vector")
        v = v / nrm
        return cls(layout, np.outer(v, v.conj()))

    @classmethod
    def basis(cls, layout: RegisterLayout, index: int) -> "DensityMatrix":
        v = np.zeros(layout.dim, dtype=complex)
        v[index] = 1.0
        return cls.from_ket(layout, v)

    @classmethod
    def maximally_mixed(cls, layout: RegisterLayout) -> "DensityMatrix":
        return cls(layout, np.eye(layout.dim) / layout.dim)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(self.layout + other.layout, np.kron(self.entries, other.entries))

    def eigenvalues(self) -> np.ndarray:
        return spectrum(self.entries, vectors=False)

    def purity_gap(self) -> float:
        """1 minus the largest eigenvalue (0 for pure states)."""
        return float(1.0 - self.eigenvalues()[-1])

    def top_ket(self) -> np.ndarray:
        vals, vecs = spectrum(self.entries)
        return vecs[:, -1]

    def allclose(self, other: "DensityMatrix", tol: float = TAU_NUM) -> bool:
        return (self.entries.shape == other.entries.shape
                and np.max(np.abs(self.entries - other.entries)) <= tol)


@dataclass(frozen=True, eq=False)
class Unitary:
    layout: RegisterLayout
    entries: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        a = _check_square(self.entries, self.layout)
        if self.check and np.max(np.abs(a @ a.conj().T - np.eye(len(a)))) > TAU_NUM:
            raise ConfigurationError("matrix is not unitary")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        u = self.entries
        return DensityMatrix(rho.layout, u @ rho.entries @ u.conj().T)


def is_projector(p: np.ndarray, tol: float = TAU_NUM) -> bool:
    p = np.asarray(p)
    return (np.max(np.abs(p - p.conj().T), initial=0.0) <= tol
            and np.max(np.abs(p @ p - p), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class ProjectiveMeasurement:
    """Labelled projectors that are Hermitian, idempotent and sum to identity.

    Pairwise orthogonality follows from the other two conditions, so it is not
    checked separately.
    """
    layout: RegisterLayout
    outcomes: tuple[tuple[Hashable, np.ndarray], ...]

    def __post_init__(self):
        outs = []
        total = np.zeros((self.layout.dim, self.layout.dim), dtype=complex)
        for label, proj in self.outcomes:
            p = _check_square(proj, self.layout).copy()
            if not is_projector(p):
                raise ConfigurationError(f"outcome {label!r} is not a projector")
            p.setflags(write=False)
            outs.append((label, p))
            total += p
        if np.max(np.abs(total - np.eye(self.layout.dim))) > TAU_NUM:
            raise ConfigurationError("projectors do not sum to identity")
        object.__setattr__(self, "outcomes", tuple(outs))

    @property
    def labels(self) -> list:
        return [lab for lab, _ in self.outcomes]

    def projector(self, label) -> np.ndarray:
        for lab, p in self.outcomes:
            if lab == label:
                return p
        raise KeyError(label)

    @classmethod
    def computational(cls, layout: RegisterLayout, registers: Sequence[str] | None = None):
        """Measure the named registers (default: all) in the computational basis.

        Outcome labels are the integer values of the measured registers,
        concatenated in layout order.
        """
        names = layout.names if registers is None else tuple(registers)
        for n in names:
            layout.qubits(n)
        labels = np.zeros(layout.dim, dtype=np.int64)
        idx = np.arange(layout.dim)
        pos = layout.total_qubits
        offsets = {}
        for n, q in layout.registers:
            pos -= q
            offsets[n] = (pos, q)
        for n in names:
            off, q = offsets[n]
            labels = (labels << q) | ((idx >> off) & ((1 << q) - 1))
        outs = []
        for lab in np.unique(labels):
            outs.append((int(lab), np.diag((labels == lab).astype(complex))))
        return cls(layout, tuple(outs))


def trace_norm(h: np.ndarray) -> float:
    return float(np.sum(np.abs(spectrum(h, vectors=False))))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.entries.shape != sigma.entries.shape:
        raise ConfigurationError("trace distance of states with different dimensions")
    td = 0.5 * trace_norm(rho.entries - sigma.entries)
    return min(1.0, max(0.0, td))


def _trace_out(entries: np.ndarray, layout: RegisterLayout, keep: Sequence[str]) -> np.ndarray:
    dims = layout.register_dims()
    n = len(dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ConfigurationError("too many registers for partial trace")
    keep_set = set(keep)
    rows, cols, out_r, out_c = [], [], [], []
    for i, name in enumerate(layout.names):
        r = letters[i]
        if name in keep_set:
            c = letters[n + i]
            out_r.append(r)
            out_c.append(c)
        else:
            c = r
        rows.append(r)
        cols.append(c)
    spec = "".join(rows) + "".join(cols) + "->" + "".join(out_r) + "".join(out_c)
    t = np.einsum(spec, entries.reshape(dims + dims))
    d = int(np.prod([dims[i] for i, nm in enumerate(layout.names) if nm in keep_set], dtype=np.int64))
    return t.reshape(d, d)


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    """Reduce ``rho`` to the registers in ``keep`` (kept in layout order)."""
    keep = list(keep)
    for name in keep:
        rho.layout.qubits(name)
    sub = rho.layout.select(keep)
    return DensityMatrix(sub, _trace_out(rho.entries, rho.layout, sub.names))


def purify(rho: DensityMatrix, ancilla: str = "anc") -> DensityMatrix:
    """Rank-1 state on ``layout + ancilla`` whose reduction is ``rho``.

    Eigenvalues are paired with ancilla basis states in decreasing order, so a
    pure input comes back as ``rho ⊗ |0><0|``.
    """
    if ancilla in rho.layout.names:
        raise ConfigurationError(f"register {ancilla!r} already present")
    vals, vecs = spectrum(rho.entries)
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    d = rho.dim
    psi = (vecs * np.sqrt(vals)[None, :]).reshape(-1)  # psi[i*d + a] = sqrt(l_a) v_a[i]
    layout = rho.layout + RegisterLayout(((ancilla, rho.layout.total_qubits),), rho.layout.cap)
    return DensityMatrix.from_ket(layout, psi)


def _entropy_bits(vals: np.ndarray) -> float:
    p = vals[vals > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def von_neumann_entropy(rho: DensityMatrix | np.ndarray) -> float:
    a = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return _entropy_bits(spectrum(a, vectors=False))


def _check_split(layout: RegisterLayout, split) -> tuple[list[str], list[str]]:
    a, b = (list(g) for g in split)
    if set(a) & set(b):
        raise ConfigurationError("split groups overlap")
    if set(a) | set(b) != set(layout.names):
        raise ConfigurationError("split groups must cover the layout")
    return a, b


def mutual_information(rho: DensityMatrix, split) -> float:
    """I(A:B) = H(A) + H(B) - H(AB) in bits for a split ``(A names, B names)``."""
    a, b = _check_split(rho.layout, split)
    ha = von_neumann_entropy(partial_trace(rho, a))
    hb = von_neumann_entropy(partial_trace(rho, b))
    return ha + hb - von_neumann_entropy(rho)


def measure(rho: DensityMatrix, meas: ProjectiveMeasurement, rng: np.random.Generator):
    """Born-rule measurement: returns (label, post-state, probability)."""
    if meas.layout.dim != rho.dim:
        raise ConfigurationError("measurement and state dimensions differ")
    probs = np.array([np.real(np.trace(p @ rho.entries)) for _, p in meas.outcomes])
    if abs(probs.sum() - 1.0) > TAU_NUM:
        raise NumericalError(f"outcome probabilities sum to {probs.sum()}")
    probs = np.where(probs < TAU_NUM, 0.0, probs)
    total = probs.sum()
    if total <= 0:
        raise NumericalError("all outcome probabilities vanish")
    u = rng.random() * total
    i = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    i = min(i, len(probs) - 1)
    while probs[i] == 0.0:
        i -= 1
    label, p = meas.outcomes[i]
    post = p @ rho.entries @ p / probs[i]
    post = post / np.trace(post).real
    return label, DensityMatrix(rho.layout, post), float(probs[i])


@dataclass(frozen=True)
class JordanBlock:
    value: float
    basis: np.ndarray            # orthonormal columns spanning the block
    p_vector: np.ndarray | None  # unit vector of the block inside range(P)
    q_vector: np.ndarray | None  # unit vector of the block inside range(Q)


@dataclass(frozen=True)
class JordanBlockDecomposition:
    P: np.ndarray
    Q: np.ndarray
    blocks: tuple[JordanBlock, ...]

    def reconstruct(self) -> tuple[np.ndarray, np.ndarray]:
        d = len(self.P)
        p = np.zeros((d, d), dtype=complex)
        q = np.zeros((d, d), dtype=complex)
        for b in self.blocks:
            if b.p_vector is not None:
                p += np.outer(b.p_vector, b.p_vector.conj())
            if b.q_vector is not None:
                q += np.outer(b.q_vector, b.q_vector.conj())
        return p, q


def _range_basis(h: np.ndarray, basis: np.ndarray | None = None):
    """Split span(basis) into the +1 and 0 eigenspaces of a projector."""
    if basis is None:
        vals, vecs = spectrum(h)
    else:
        if basis.shape[1] == 0:
            return basis, basis
        vals, small = spectrum(basis.conj().T @ h @ basis)
        vecs = basis @ small
    return vecs[:, vals > 0.5], vecs[:, vals <= 0.5]


def jordan_blocks(P, Q, tol: float = 1e-9) -> JordanBlockDecomposition:
    """Common invariant decomposition of two projectors into 1- and 2-dim blocks.

    A 2-dim block pairs a unit vector p in range(P) with the unit vector q in
    range(Q) it overlaps; its value is |<p|q>|^2. Vectors in range(P) that Q
    annihilates are paired with unmatched vectors of range(Q) into value-0
    blocks. Leftover 1-dim blocks get value 1 if they lie in both ranges and 0
    otherwise.
    """
    P = np.asarray(P, dtype=complex)
    Q = np.asarray(Q, dtype=complex)
    if P.shape != Q.shape or P.shape[0] != P.shape[1]:
        raise ConfigurationError("projectors must be square and of equal size")
    if not (is_projector(P) and is_projector(Q)):
        raise ConfigurationError("jordan_blocks needs two projectors")
    d = len(P)
    rp, _ = _range_basis(P)
    blocks: list[JordanBlock] = []
    used = []
    p_only = []
    if rp.shape[1]:
        vals, small = spectrum(rp.conj().T @ Q @ rp)
        for c, col in zip(vals, small.T):
            v = rp @ col
            c = float(min(1.0, max(0.0, c)))
            if c >= 1.0 - tol:
                blocks.append(JordanBlock(1.0, v[:, None], v, v))
                used.append(v)
            elif c <= tol:
                p_only.append(v)
            else:
                w = Q @ v
                q = w / np.linalg.norm(w)
                perp = q - np.vdot(v, q) * v
                perp /= np.linalg.norm(perp)
                blocks.append(JordanBlock(c, np.stack([v, perp], axis=1), v, q))
                used.extend([v, perp])
    span = np.stack(used + p_only, axis=1) if (used or p_only) else np.zeros((d, 0), complex)
    # orthonormal basis of the complement of everything placed so far
    if span.shape[1] < d:
        proj = span @ span.conj().T
        vals, vecs = spectrum(np.eye(d) - proj)
        comp = vecs[:, vals > 0.5]
    else:
        comp = np.zeros((d, 0), complex)
    q_only, neither = _range_basis(Q, comp)
    pairs = min(len(p_only), q_only.shape[1])
    for i in range(pairs):
        v, w = p_only[i], q_only[:, i]
        blocks.append(JordanBlock(0.0, np.stack([v, w], axis=1), v, w))
    for v in p_only[pairs:]:
        blocks.append(JordanBlock(0.0, v[:, None], v, None))
    for w in q_only.T[pairs:]:
        blocks.append(JordanBlock(0.0, w[:, None], None, w))
    for v in neither.T:
        blocks.append(JordanBlock(0.0, v[:, None], None, None))
    return JordanBlockDecomposition(P, Q, tuple(blocks))


def check_state(rho: DensityMatrix | np.ndarray, pure: bool = False) -> None:
    """Debug-mode hand-off check for density matrices and kets."""
    if not DEBUG:
        return
    if isinstance(rho, DensityMatrix):
        a = rho.entries
        if pure and rho.purity_gap() > TAU_NUM:
            raise NumericalError("state expected pure")
        DensityMatrix(rho.layout, a)
    else:
        v = np.asarray(rho)
        if abs(np.vdot(v, v).real - 1.0) > 1e-8:
            raise NumericalError("ket is not normalised")


def fidelity_pure(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)
