"""Stateful solvers, the purified interaction engine and exact step values.

A quantum stateful solver is given in purified form: registers S (state, ℓ
qubits), Y (answer, m qubits) and Ŷ (purifying output, ĥ qubits), an initial
state on S·Ŷ, and a unitary per (step index t, instance x). A step applies the
unitary to ``state ⊗ |0>_Y |0>_Ŷ``, measures Y·Ŷ in the computational basis and
keeps the collapsed S register as the next state, which is pure given the
extended transcript.

Runs of a solver are handled in batches (:class:`RunBatch`): R independent runs
advanced in lockstep through fixed query sequences by the kernels in
``pqlift._kernels``. A single interactive run is a batch of size one.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from . import _kernels
from .assumption import BOTTOM, Assumption, SolverFunction, EXACT_D_LIMIT
from .errors import ConfigurationError
from .linalg import (DEFAULT_QUBIT_CAP, TAU_NUM, DensityMatrix, RegisterLayout, Unitary,
                     check_state)
from .records import hexstr
from .rng import kernel_key


def _hadamard(bits: int) -> np.ndarray:
    h = np.array([[1.0]])
    h1 = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    for _ in range(bits):
        h = np.kron(h, h1)
    return h


def complete_unitary(column: np.ndarray) -> np.ndarray:
    """A unitary whose first column is ``column`` (Householder completion)."""
    v = np.asarray(column, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    d = len(v)
    e = np.zeros(d, dtype=complex)
    e[0] = 1.0
    phase = v[0] / abs(v[0]) if abs(v[0]) > 1e-15 else 1.0
    w = v / phase - e
    if np.linalg.norm(w) < 1e-15:
        return np.eye(d, dtype=complex) * phase
    w /= np.linalg.norm(w)
    house = np.eye(d, dtype=complex) - 2.0 * np.outer(w, w.conj())
    return house * phase


class QuantumStatefulSolver:
    """Purified quantum stateful solver.

    ``step(t, x)`` returns the D×D unitary on S·Y·Ŷ. ``t_class(t)`` declares
    that the unitary depends on t only through the returned class id (default:
    every t is distinct); it is a caching hint and must be honest.
    """

    def __init__(self, name: str, ell: int, m: int, hat: int, init_state,
                 step: Callable[[int, int], np.ndarray],
                 t_class: Callable[[int], int] | None = None, n: int | None = None,
                 unit_cost: float = 1.0, cap: int = DEFAULT_QUBIT_CAP):
        self.name = name
        self.ell, self.m, self.hat = int(ell), int(m), int(hat)
        self.layout = RegisterLayout((("S", self.ell), ("Y", self.m), ("Yhat", self.hat)), cap)
        self.init_layout = RegisterLayout((("S", self.ell), ("Yhat", self.hat)), cap)
        self.dS = 1 << self.ell
        self.d_out = 1 << (self.m + self.hat)
        self.D = self.layout.dim
        init = np.asarray(init_state, dtype=complex).reshape(-1)
        if init.shape != (self.init_layout.dim,):
            raise ConfigurationError("initial state must live on S·Ŷ")
        self.init_state = init / np.linalg.norm(init)
        self._step = step
        self.t_class = t_class if t_class is not None else (lambda t: t)
        self.n = n
        self.unit_cost = unit_cost
        self._mats: dict[Hashable, np.ndarray] = {}
        self._bank_index: dict[int, int] = {}
        self._bank_list: list[np.ndarray] = []
        self._bank: np.ndarray | None = None
        self._lock = threading.RLock()

    # -- unitaries
    def key(self, t: int, x: int) -> tuple[int, int]:
        return (self.t_class(t), int(x))

    def matrix(self, t: int, x: int) -> np.ndarray:
        k = self.key(t, x)
        u = self._mats.get(k)
        if u is None:
            u = np.ascontiguousarray(self._step(t, x), dtype=complex)
            if u.shape != (self.D, self.D):
                raise ConfigurationError(f"step unitary has shape {u.shape}, expected {self.D}")
            if np.max(np.abs(u @ u.conj().T - np.eye(self.D))) > 1e-8:
                raise ConfigurationError(f"step ({t}, {x}) is not unitary")
            u.setflags(write=False)
            self._mats[k] = u
        return u

    def unitary(self, t: int, x: int) -> Unitary:
        return Unitary(self.layout, self.matrix(t, x))

    @property
    def init_unitary(self) -> Unitary:
        return Unitary(self.init_layout, complete_unitary(self.init_state))

    def isometry(self, t: int, x: int) -> np.ndarray:
        """Columns of the step unitary with Y = Ŷ = 0 (shape D × 2^ℓ)."""
        return self.matrix(t, x)[:, :: self.d_out]

    def bank_indices(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        # banks only grow, so rows handed out stay valid for later readers
        with self._lock:
            return self._bank_indices(ts, xs)

    def _bank_indices(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Map (t, x) arrays to rows of :meth:`bank`, adding missing isometries."""
        ts = np.asarray(ts, dtype=np.int64)
        xs = np.asarray(xs, dtype=np.int64)
        classes = np.vectorize(self.t_class, otypes=[np.int64])(ts) if ts.size else ts
        span = (1 << 62) // (1 << 20)
        codes = classes * (1 << 20) + xs if ts.size else ts
        if ts.size and (xs.max() >= (1 << 20) or classes.max() >= span):
            raise ConfigurationError("instance or step class out of range for the bank")
        uniq, inv = np.unique(codes, return_inverse=True)
        rows = np.empty(len(uniq), dtype=np.int64)
        grew = False
        for j, code in enumerate(uniq.tolist()):
            idx = self._bank_index.get(code)
            if idx is None:
                pos = int(np.argmax(codes == code))
                iso = self.isometry(int(ts.flat[pos]), int(xs.flat[pos]))
                idx = len(self._bank_list)
                self._bank_list.append(np.ascontiguousarray(iso))
                self._bank_index[code] = idx
                grew = True
            rows[j] = idx
        if grew or self._bank is None:
            self._bank = np.ascontiguousarray(np.stack(self._bank_list)) if self._bank_list \
                else np.zeros((0, self.D, self.dS), dtype=complex)
        return rows[inv].reshape(ts.shape)

    @property
    def bank(self) -> np.ndarray:
        return self._bank

    # -- initial state
    def initial_branches(self) -> list[tuple[int, float, np.ndarray]]:
        """(ŷ₀, probability, state₀) for every purifying initial value."""
        phi = self.init_state.reshape(self.dS, 1 << self.hat)
        out = []
        for yh in range(1 << self.hat):
            col = phi[:, yh]
            p = float(np.vdot(col, col).real)
            if p > _kernels.P_FLOOR:
                out.append((yh, p, col / math.sqrt(p)))
        return out

    def sample_initial(self, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        branches = self.initial_branches()
        p = np.array([b[1] for b in branches])
        i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        i = min(i, len(branches) - 1)
        return branches[i][0], branches[i][2]

    def start(self, rng: np.random.Generator, size: int = 1) -> "RawRuns":
        yh0 = np.zeros(size, dtype=np.int64)
        kets = np.zeros((size, self.dS), dtype=complex)
        keys = np.zeros(size, dtype=np.uint64)
        for r in range(size):
            yh0[r], kets[r] = self.sample_initial(rng)
            keys[r] = kernel_key(rng)
        return RawRuns(self, kets, np.zeros(size, dtype=np.int64), keys, yhat0=yh0)

    # -- exact values
    def answer_probabilities(self, kets: np.ndarray, t: int, xs: Sequence[int]) -> np.ndarray:
        """Pr[y | x] for each ket (rows) and instance: shape (R, len(xs), 2^m)."""
        W = np.stack([self.isometry(t, x) for x in xs])                # X × D × dS
        phi = np.einsum("xds,rs->rxd", W, np.atleast_2d(kets))
        pr = np.abs(phi.reshape(phi.shape[0], len(xs), self.dS, 1 << self.m, 1 << self.hat)) ** 2
        return pr.sum(axis=(2, 4))


def step_value(P: Assumption, state, B: QuantumStatefulSolver, t: int) -> float | np.ndarray:
    """Exact probability that V accepts the step-``t`` answer on a fresh instance.

    ``state`` is a ket on S, a 2-D array of kets (one value per row) or a
    :class:`DensityMatrix` on S.
    """
    if P.d > EXACT_D_LIMIT:
        raise ConfigurationError(f"exact step value needs d ≤ {EXACT_D_LIMIT}")
    weights = P.instance_weights
    xs = list(weights)
    wmat = np.stack([weights[x] for x in xs])                           # X × 2^m
    if isinstance(state, DensityMatrix):
        vals, vecs = np.linalg.eigh(state.entries)
        vals = np.clip(vals, 0.0, None)
        pr = B.answer_probabilities(vecs.T, t, xs)                      # eig × X × 2^m
        return float(np.einsum("e,exy,xy->", vals, pr, wmat))
    kets = np.asarray(state, dtype=complex)
    pr = B.answer_probabilities(kets, t, xs)
    vals = np.einsum("rxy,xy->r", pr, wmat)
    return float(vals[0]) if kets.ndim == 1 else vals


def one_shot_value(P: Assumption, B: QuantumStatefulSolver) -> float:
    """Value of the first call, averaged over the purifying initial value."""
    return float(sum(p * step_value(P, ket, B, 1) for _, p, ket in B.initial_branches()))


# ------------------------------------------------------------------ runs

class RunBatch:
    """R independent runs of one solver, advanced in lockstep.

    Subclasses implement :meth:`_advance` (answer a fixed R × n block of
    queries) and, where meaningful, :meth:`values` and :meth:`fork`.
    """
    m: int
    calls: np.ndarray

    @property
    def size(self) -> int:
        return len(self.calls)

    def answer_batch(self, queries, record: np.ndarray | None = None):
        """Answer ``queries[r, i]`` in order for every run r.

        ``record`` (int array R × nrec) lists step positions before which the
        run's internal state is copied out; position n is the final state.
        Returns answers (R × n), or (answers, states) when ``record`` is given.
        """
        q = np.atleast_2d(np.asarray(queries, dtype=np.int64))
        if q.shape[0] != self.size:
            raise ConfigurationError("one query row per run required")
        rec = np.full((self.size, 0), -1, dtype=np.int64) if record is None \
            else np.ascontiguousarray(record, dtype=np.int64)
        ans, states = self._advance(q, rec)
        return ans if record is None else (ans, states)

    def answer(self, x: int) -> int:
        return int(self.answer_batch(np.full((self.size, 1), x))[0, 0])

    def answer_many(self, xs: Sequence[int]) -> np.ndarray:
        return self.answer_batch(np.asarray(xs, dtype=np.int64)[None, :])[0]

    def _advance(self, q, rec):
        raise NotImplementedError

    def values(self, P: Assumption) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no exact values")

    def reference_values(self, P: Assumption) -> np.ndarray:
        """Per-run persistent value p to compare step values against."""
        raise NotImplementedError


class RawRuns(RunBatch):
    """Purified runs of a :class:`QuantumStatefulSolver`."""

    def __init__(self, solver: QuantumStatefulSolver, kets, calls, rng_keys,
                 counters=None, yhat0=None, offset: int = 0):
        self.solver = solver
        self.m = solver.m
        self.kets = np.ascontiguousarray(kets, dtype=complex)
        self.calls = np.asarray(calls, dtype=np.int64).copy()
        self.rng_keys = np.asarray(rng_keys, dtype=np.uint64).copy()
        self.counters = np.zeros(len(self.calls), dtype=np.uint64) if counters is None \
            else np.asarray(counters, dtype=np.uint64).copy()
        self.yhat0 = np.zeros(len(self.calls), dtype=np.int64) if yhat0 is None else np.asarray(yhat0)
        self.history: list[tuple[np.ndarray, np.ndarray]] = []   # (queries, joint Y·Ŷ outcomes)
        self.keep_history = False

    def _advance(self, q, rec):
        B = self.solver
        R, n = q.shape
        ts = self.calls[:, None] + 1 + np.arange(n)[None, :]
        keys = np.ascontiguousarray(B.bank_indices(ts, q))
        out, states = _kernels.walk_raw(B.bank, keys, self.kets, B.d_out,
                                        self.rng_keys, self.counters, rec)
        self.calls += n
        if self.keep_history:
            self.history.append((q.copy(), out.copy()))
        check_state(self.kets[0])
        return out >> B.hat, states

    def values(self, P: Assumption) -> np.ndarray:
        # all runs of a batch share the same call count in lockstep use
        out = np.empty(self.size)
        for c in np.unique(self.calls):
            sel = self.calls == c
            out[sel] = step_value(P, self.kets[sel], self.solver, int(c) + 1)
        return out

    def reference_values(self, P: Assumption) -> np.ndarray:
        return np.full(self.size, one_shot_value(P, self.solver))

    def fork(self, kets, calls, rng: np.random.Generator) -> "RawRuns":
        keys = np.array([kernel_key(rng) for _ in range(len(calls))], dtype=np.uint64)
        return RawRuns(self.solver, np.array(kets, dtype=complex), calls, keys)

    def extended_transcript(self, r: int = 0) -> "ExtendedTranscript":
        hat = self.solver.hat
        entries = []
        for q, out in self.history:
            for x, o in zip(q[r].tolist(), out[r].tolist()):
                entries.append((x, o >> hat, o & ((1 << hat) - 1)))
        return ExtendedTranscript(int(self.yhat0[r]), entries)


# ------------------------------------------------------------ transcripts

@dataclass
class ExtendedTranscript:
    yhat0: int
    entries: list[tuple[int, int, int]] = field(default_factory=list)

    def redact(self) -> list[tuple[int, int]]:
        return [(x, y) for x, y, _ in self.entries]

    def prefix(self, i: int) -> "ExtendedTranscript":
        return ExtendedTranscript(self.yhat0, list(self.entries[:i]))

    def __len__(self) -> int:
        return len(self.entries)

    def to_records(self, n: int, m: int, hat: int, extended: bool = True) -> list[dict]:
        recs = []
        for i, (x, y, yh) in enumerate(self.entries, start=1):
            rec = {"step": i, "x": hexstr(x, n), "y": hexstr(y, m)}
            if extended:
                rec["yhat"] = hexstr(yh, hat)
            recs.append(rec)
        return recs


def replay(B: QuantumStatefulSolver, ext: ExtendedTranscript, i: int | None = None) -> np.ndarray:
    """Re-derive the pure state after prefix ``i`` by post-selection (no randomness)."""
    i = len(ext) if i is None else i
    phi = B.init_state.reshape(B.dS, 1 << B.hat)[:, ext.yhat0]
    ket = phi / np.linalg.norm(phi)
    for t, (x, y, yh) in enumerate(ext.entries[:i], start=1):
        full = B.isometry(t, x) @ ket
        col = full.reshape(B.dS, B.d_out)[:, (y << B.hat) | yh]
        nrm = np.linalg.norm(col)
        if nrm < 1e-12:
            raise ConfigurationError(f"prefix has zero probability at step {t}")
        ket = col / nrm
    return ket


# --------------------------------------------------------------- classical

@dataclass
class ClassicalStatefulSolver:
    """Classical ℓ-bit stateful solver with explicit coin flips.

    ``step(t, x, state, coins) -> (y, state')`` with ``coins`` uniform in
    [0, 2^coin_bits); the run draws the coins from its RNG stream.
    """
    name: str
    ell: int
    m: int
    step: Callable[[int, int, int, int], tuple[int, int]]
    init_state: int = 0
    coin_bits: int = 0
    t_class: Callable[[int], int] | None = None
    n: int | None = None

    def start(self, rng: np.random.Generator, size: int = 1) -> "ClassicalRuns":
        return ClassicalRuns(self, rng, size)

    def to_quantum(self, init_ket=None, pre_rotation: np.ndarray | None = None,
                   cap: int = DEFAULT_QUBIT_CAP) -> QuantumStatefulSolver:
        """Purified embedding.

        Ŷ holds the previous state followed by the coin register; coins are
        prepared by Hadamards and the classical step acts as the permutation
        |s, y, a, c> -> |a ⊕ s'(s,c), y ⊕ y(s,c), s, c>. ``init_ket`` (on S)
        replaces the classical initial state; ``pre_rotation`` (on S) is
        applied before each step.
        """
        ell, m, cb = self.ell, self.m, self.coin_bits
        hat = ell + cb
        D = 1 << (ell + m + hat)
        dS = 1 << ell
        if init_ket is None:
            init_ket = np.zeros(dS, dtype=complex)
            init_ket[self.init_state] = 1.0
        init = np.kron(np.asarray(init_ket, dtype=complex), np.eye(1 << hat)[0])
        coin_h = np.kron(np.eye(1 << (ell + m + ell)), _hadamard(cb))
        if pre_rotation is not None:
            coin_h = coin_h @ np.kron(np.asarray(pre_rotation), np.eye(1 << (m + hat)))
        sstep = self.step

        def unitary(t, x):
            perm = np.empty(D, dtype=np.int64)
            for s in range(dS):
                for c in range(1 << cb):
                    y_out, s_new = sstep(t, x, s, c)
                    y_out = 0 if y_out == BOTTOM else y_out
                    for y in range(1 << m):
                        for a in range(dS):
                            src = (((s << m | y) << ell | a) << cb) | c
                            dst = ((((a ^ s_new) << m | (y ^ y_out)) << ell | s) << cb) | c
                            perm[src] = dst
            u = np.zeros((D, D))
            u[perm, np.arange(D)] = 1.0
            return u @ coin_h

        return QuantumStatefulSolver(self.name, ell, m, hat, init, unitary,
                                     t_class=self.t_class, n=self.n, cap=cap)


class ClassicalRuns(RunBatch):
    """Direct (non-purified) simulation of classical solver runs."""

    def __init__(self, solver: ClassicalStatefulSolver, rng: np.random.Generator, size: int):
        self.solver = solver
        self.m = solver.m
        self.rng = rng
        self.states = np.full(size, solver.init_state, dtype=np.int64)
        self.calls = np.zeros(size, dtype=np.int64)

    def _advance(self, q, rec):
        S = self.solver
        R, n = q.shape
        out = np.zeros((R, n), dtype=np.int64)
        states = np.zeros((R, rec.shape[1]), dtype=np.int64)
        for r in range(R):
            s = int(self.states[r])
            for i in range(n + 1):
                states[r][rec[r] == i] = s
                if i == n:
                    break
                coins = int(self.rng.integers(0, 1 << S.coin_bits)) if S.coin_bits else 0
                y, s = S.step(int(self.calls[r]) + i + 1, int(q[r, i]), s, coins)
                out[r, i] = y
            self.states[r] = s
        self.calls += n
        return out, states


class FunctionRuns(RunBatch):
    """A stateless oracle given by a :class:`SolverFunction`."""

    def __init__(self, f: SolverFunction, rng: np.random.Generator, size: int = 1):
        self.f = f
        self.m = f.m
        self.rng = rng
        self.calls = np.zeros(size, dtype=np.int64)

    def _advance(self, q, rec):
        out = np.vectorize(lambda x: self.f.sample(int(x), self.rng), otypes=[np.int64])(q) \
            if q.size else q.copy()
        self.calls += q.shape[1]
        return out, np.zeros((q.shape[0], rec.shape[1]))

    def reference_values(self, P):
        from .assumption import value_of_function
        return np.full(self.size, value_of_function(P, self.f)[0])


class CountingRuns(RunBatch):
    """Call-counting stub: answers 0 and only counts calls (used for dry runs)."""

    def __init__(self, m: int = 1, size: int = 1):
        self.m = m
        self.calls = np.zeros(size, dtype=np.int64)

    def _advance(self, q, rec):
        self.calls += q.shape[1]
        return np.zeros(q.shape, dtype=np.int64), np.zeros((q.shape[0], rec.shape[1]))


# -------------------------------------------------------------- strategies

class QueryStrategy:
    """A query program A with auxiliary input ``z``.

    ``next_query(history, rng)`` sees the (x, y) pairs so far. Non-adaptive
    strategies ignore the answers.
    """
    adaptive = False

    def __init__(self, n: int, z=None, name: str | None = None):
        self.n = n
        self.z = z
        self.name = name or type(self).__name__

    def next_query(self, history: Sequence[tuple[int, int]], rng: np.random.Generator) -> int:
        raise NotImplementedError

    def _emit(self, x: int) -> int:
        x = int(x)
        if not 0 <= x < (1 << self.n):
            raise ConfigurationError(f"query {x} is not an {self.n}-bit string")
        return x


class RandomInstances(QueryStrategy):
    """Fresh instances G(r) for uniform r."""

    def __init__(self, P: Assumption):
        super().__init__(P.n)
        self.P = P

    def next_query(self, history, rng):
        return self._emit(self.P.sample_instance(rng)[1])


class RepeatedPrefix(QueryStrategy):
    """toy-GL queries sharing one hidden prefix f(x): (f(x), r_1), (f(x), r_2), ..."""

    def __init__(self, P: Assumption, prefix_bits: int):
        super().__init__(P.n)
        self.P = P
        self.low = prefix_bits

    def next_query(self, history, rng):
        if not history:
            self.z = int(self.P.sample_instance(rng)[1]) >> self.low
        return self._emit((self.z << self.low) | int(rng.integers(0, 1 << self.low)))


class ConstantQuery(QueryStrategy):
    def __init__(self, n: int, x: int):
        super().__init__(n, z=x)

    def next_query(self, history, rng):
        return self._emit(self.z)


class AdaptiveEcho(QueryStrategy):
    """Repeats the previous query after a 1 answer, else draws a fresh instance."""
    adaptive = True

    def __init__(self, P: Assumption):
        super().__init__(P.n)
        self.P = P

    def next_query(self, history, rng):
        if history and history[-1][1] == 1:
            return self._emit(history[-1][0])
        return self._emit(self.P.sample_instance(rng)[1])


def _start(B, rng, size=1) -> RunBatch:
    if isinstance(B, SolverFunction):
        return FunctionRuns(B, rng, size)
    if isinstance(B, RunBatch):
        return B
    return B.start(rng, size)


def run_interaction(A: QueryStrategy, B, steps: int, rng: np.random.Generator):
    """Transcript [(x_i, y_i)] of A interacting with B for ``steps`` calls."""
    runs = _start(B, rng)
    hist: list[tuple[int, int]] = []
    for _ in range(steps):
        x = A.next_query(hist, rng)
        hist.append((x, runs.answer(x)))
    return hist


def run_purified_interaction(A: QueryStrategy, B: QuantumStatefulSolver, steps: int,
                             rng: np.random.Generator):
    """(ExtendedTranscript, [state_0, ..., state_steps]) of a purified run."""
    runs = B.start(rng)
    runs.keep_history = True
    states = [runs.kets[0].copy()]
    hist: list[tuple[int, int]] = []
    for _ in range(steps):
        x = A.next_query(hist, rng)
        hist.append((x, runs.answer(x)))
        states.append(runs.kets[0].copy())
    return runs.extended_transcript(0), states


# ------------------------------------------------------------ persistence

def check_persistence(P: Assumption, B, strategies: Sequence[QueryStrategy], eta: float,
                      trials: int, rng: np.random.Generator, steps: int = 50,
                      p=None) -> dict:
    """Estimate Pr[max_i |val_i - p| > η] over runs of B against each strategy.

    ``B`` is anything with ``start(rng, size)`` returning runs with exact
    ``values``. ``val_i`` is the value of call i+1 on the state after i calls,
    for i = 0..steps. ``p`` defaults to the runs' reference values (the one-shot
    value for raw solvers, p₀* for persisted ones).
    """
    per_strategy = []
    all_dev = []
    for si, A in enumerate(strategies):
        runs = _start(B, rng, trials)
        ref = runs.reference_values(P) if p is None else np.broadcast_to(np.asarray(p, float), (trials,))
        dev = np.abs(runs.values(P) - ref)
        hist = [[] for _ in range(trials)]
        for _ in range(steps):
            xs = np.array([A.next_query(hist[r], rng) for r in range(trials)], dtype=np.int64)
            ys = runs.answer_batch(xs[:, None])[:, 0]
            for r in range(trials):
                hist[r].append((int(xs[r]), int(ys[r])))
            dev = np.maximum(dev, np.abs(runs.values(P) - ref))
        fails = dev > eta
        f = float(fails.mean())
        per_strategy.append({"strategy": A.name, "failure_frequency": f,
                             "stderr": math.sqrt(max(f * (1 - f), 0.0) / trials),
                             "max_deviation": float(dev.max())})
        all_dev.append(dev)
    dev = np.concatenate(all_dev)
    f = float((dev > eta).mean())
    return {"failure_frequency": f, "stderr": math.sqrt(max(f * (1 - f), 0.0) / len(dev)),
            "runs": int(len(dev)), "max_deviations": dev, "per_strategy": per_strategy}


# ------------------------------------------------------------------- zoo

def _answer(P: Assumption):
    solve = P.solve
    if solve is None:
        raise ConfigurationError(f"{P.name} has no trapdoor for zoo solvers")

    def ans(x):
        y = solve(x)
        return 0 if y == BOTTOM else y
    return ans


def zoo_hash(P: Assumption, bits: int, seed: int) -> np.ndarray:
    from .rng import stream
    b = np.zeros(1 << bits, dtype=np.int64)
    b[: max(1, (1 << bits) // 2)] = 1
    return stream(seed, "zoo-hash", P.name, bits).permutation(b)


def perfect_solver(P: Assumption) -> ClassicalStatefulSolver:
    ans = _answer(P)
    return ClassicalStatefulSolver("perfect", 0, P.m, lambda t, x, s, c: (ans(x), 0),
                                   t_class=lambda t: 0, n=P.n)


def wrong_solver(P: Assumption) -> ClassicalStatefulSolver:
    """Always answers the correct answer with its lowest bit flipped (value 0)."""
    ans = _answer(P)
    return ClassicalStatefulSolver("wrong", 0, P.m, lambda t, x, s, c: (ans(x) ^ 1, 0),
                                   t_class=lambda t: 0, n=P.n)


def noisy_solver(P: Assumption, coin_bits: int = 2) -> ClassicalStatefulSolver:
    """Stateless; flips the lowest answer bit when all coins are 0 (value 1 - 2^-coins)."""
    ans = _answer(P)
    return ClassicalStatefulSolver("noisy", 0, P.m,
                                   lambda t, x, s, c: (ans(x) ^ int(c == 0), 0),
                                   coin_bits=coin_bits, t_class=lambda t: 0, n=P.n)


def table_solver(P: Assumption, correct_fraction: float = 0.75, seed: int = 0) -> ClassicalStatefulSolver:
    """Stateless and deterministic: correct on a seeded subset of instances."""
    from .rng import stream
    ans = _answer(P)
    good = stream(seed, "zoo-table", P.name).random(1 << P.n) < correct_fraction
    return ClassicalStatefulSolver("table", 0, P.m,
                                   lambda t, x, s, c: (ans(x) ^ int(not good[x]), 0),
                                   t_class=lambda t: 0, n=P.n)


def use_once_solver(P: Assumption, alpha: float = 0.0) -> QuantumStatefulSolver:
    """Starts in cos α|good> + sin α|junk>; good answers correctly, every call leaves junk.

    Junk answers are uniformly random m-bit strings.
    """
    ans = _answer(P)

    def step(t, x, s, c):
        return (ans(x) if s == 0 else c), 1

    cls = ClassicalStatefulSolver("use-once", 1, P.m, step, coin_bits=P.m,
                                  t_class=lambda t: 0, n=P.n)
    return cls.to_quantum(init_ket=[math.cos(alpha), math.sin(alpha)])


def duplicate_detecting_solver(P: Assumption, key_shift: int | None = None,
                               seed: int = 0) -> ClassicalStatefulSolver:
    """One bit of memory: h(key(x)) of the previous query.

    The first call is answered correctly. Later calls are answered randomly
    when h(key(x)) equals the stored bit and correctly otherwise. ``key(x)`` is
    ``x >> key_shift``; for toy-GL the default shift keeps the prefix f(x).
    """
    if key_shift is None:
        key_shift = P.params.get("n_f", 0) if P.name == "toy-GL" else 0
    ans = _answer(P)
    h = zoo_hash(P, P.n - key_shift, seed)

    def step(t, x, s, c):
        hx = int(h[x >> key_shift])
        if t == 1 or hx != s:
            return ans(x), hx
        return c, hx

    return ClassicalStatefulSolver("duplicate-detecting", 1, P.m, step, coin_bits=P.m,
                                   t_class=lambda t: min(t, 2), n=P.n)


def query_counting_solver(P: Assumption, budget: int = 2) -> ClassicalStatefulSolver:
    """Two-bit saturating call counter; correct while fewer than ``budget`` calls were made."""
    ans = _answer(P)

    def step(t, x, s, c):
        return (ans(x) if s < budget else c), min(s + 1, 3)

    return ClassicalStatefulSolver("query-counting", 2, P.m, step, coin_bits=P.m,
                                   t_class=lambda t: 0, n=P.n)


def index_parity_solver(P: Assumption) -> ClassicalStatefulSolver:
    """Memoryless but index-aware: correct on odd steps, flipped on even steps."""
    ans = _answer(P)
    return ClassicalStatefulSolver("index-parity", 0, P.m,
                                   lambda t, x, s, c: (ans(x) ^ int(t % 2 == 0), 0),
                                   t_class=lambda t: t % 2, n=P.n)


def rotating_solver(P: Assumption, theta: float = 0.7) -> QuantumStatefulSolver:
    """Use-once solver whose state is rotated by R_y(θ) before every call."""
    ans = _answer(P)
    rot = np.array([[math.cos(theta / 2), -math.sin(theta / 2)],
                    [math.sin(theta / 2), math.cos(theta / 2)]])

    def step(t, x, s, c):
        return (ans(x) if s == 0 else c), s

    cls = ClassicalStatefulSolver("rotating", 1, P.m, step, coin_bits=P.m,
                                  t_class=lambda t: 0, n=P.n)
    return cls.to_quantum(pre_rotation=rot)


def zoo(P: Assumption) -> dict[str, QuantumStatefulSolver]:
    """Purified zoo solvers for an assumption with a trapdoor."""
    return {
        "perfect": perfect_solver(P).to_quantum(),
        "noisy": noisy_solver(P).to_quantum(),
        "use-once": use_once_solver(P, alpha=math.pi / 4),
        "duplicate-detecting": duplicate_detecting_solver(P).to_quantum(),
        "query-counting": query_counting_solver(P).to_quantum(),
    }
