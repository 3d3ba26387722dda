"""Making a one-shot quantum solver persistent.

The wrapped solver keeps the whole work space H = S·Y·Ŷ of the purified
solver as its state. With ``U_x`` the solver's first-call unitary on instance
x, the averaged acceptance operator is

    E = Σ_r 2^-d · U_{G(r)}† (Σ_b [V(r, y(b))] |b><b|) U_{G(r)},

and ⟨ψ|E|ψ⟩ is the probability that the next call on a fresh instance is
accepted. Every call runs ValEst, the solution measurement Π_x, Repair and
ValEst again, with accuracy ε_i = η/(iπ)² on the i-th call.

Two ValEst backends are provided:

* ``exact``: measure the eigen-levels of E directly (perfectly projective);
* ``sampled``: alternate Π_unif = |u><u| ⊗ I and Π_acc = Σ_r |r><r| ⊗ Π_r for
  N = ⌈8 ln(4/ε)/ε²⌉ rounds and report the fraction of agreeing consecutive
  outcomes. The alternation is simulated exactly at the level of the Jordan
  blocks of (Π_unif, Π_acc), which are indexed by the eigenvectors of E.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .assumption import BOTTOM, EXACT_D_LIMIT, Assumption
from .errors import ConfigurationError, RepairFailure, UnsupportedAssumptionError
from .linalg import DEFAULT_QUBIT_CAP, TAU_NUM, DensityMatrix, ProjectiveMeasurement, spectrum
from .rng import kernel_key
from .solver import QuantumStatefulSolver, RunBatch

BACKENDS = ("exact", "sampled")


def epsilon_schedule(eta: float, i: int) -> float:
    """ε_i = η/(iπ)² for call i ≥ 1; the three uses per call sum to η/2 over all i."""
    if i < 1:
        raise ConfigurationError("calls are numbered from 1")
    return eta / (i * math.pi) ** 2


def alternation_rounds(eps: float) -> int:
    """Rounds of the sampled estimator: N = ⌈8 ln(4/ε)/ε²⌉."""
    if not 0.0 < eps <= 1.0:
        raise ConfigurationError("ε must lie in (0, 1]")
    return int(math.ceil(8.0 * math.log(4.0 / eps) / eps ** 2))


round_cap = _kernels.round_cap


def _pick(probs, rng: np.random.Generator) -> int:
    p = np.where(np.asarray(probs, float) > _kernels.P_FLOOR, probs, 0.0)
    nz = np.flatnonzero(p)
    if not nz.size:
        raise ConfigurationError("no outcome has positive probability")
    i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(i, int(nz[-1]))


# ---------------------------------------------------------------- operator

def _output_y(B: QuantumStatefulSolver) -> np.ndarray:
    b = np.arange(B.D)
    return (b >> B.hat) & ((1 << B.m) - 1)


class ValueOperator:
    """E for a solver/assumption pair, with its eigen-levels.

    Eigenvalues closer than τ_num are merged into one level.
    """

    def __init__(self, P: Assumption, B: QuantumStatefulSolver, cap: int = DEFAULT_QUBIT_CAP):
        if P.d > EXACT_D_LIMIT:
            raise ConfigurationError(f"the averaged operator needs d ≤ {EXACT_D_LIMIT}")
        if P.d + B.layout.total_qubits > 2 * cap + EXACT_D_LIMIT:
            raise ConfigurationError("control register too large")
        if B.m != P.m:
            raise ConfigurationError("solver and assumption disagree on the answer length")
        self.P, self.B = P, B
        self.D = B.D
        ys = _output_y(B)
        E = np.zeros((B.D, B.D), dtype=complex)
        for x, w in P.instance_weights.items():
            U = B.matrix(1, x)
            E += U.conj().T @ (w[ys][:, None] * U)
        self.matrix = 0.5 * (E + E.conj().T)
        vals, vecs = spectrum(self.matrix)
        level = np.zeros(len(vals), dtype=np.int64)
        levels = [vals[0]]
        members = [[vals[0]]]
        for i in range(1, len(vals)):
            if vals[i] - members[-1][-1] > TAU_NUM:
                members.append([])
            members[-1].append(vals[i])
            level[i] = len(members) - 1
        levels = np.clip([float(np.mean(mm)) for mm in members], 0.0, 1.0)
        self.V = np.ascontiguousarray(vecs)
        self.level = level
        self.levels = np.ascontiguousarray(levels, dtype=float)

    def value(self, kets) -> np.ndarray | float:
        kets = np.asarray(kets, dtype=complex)
        v = np.einsum("...i,ij,...j->...", kets.conj(), self.matrix, kets).real
        return float(v) if kets.ndim == 1 else v

    def level_weights(self, ket) -> np.ndarray:
        c = self.V.conj().T @ ket
        return np.bincount(self.level, weights=np.abs(c) ** 2, minlength=len(self.levels))

    def good_projector(self, p: float, eps: float) -> np.ndarray:
        """P_good(p, ε): span of eigenvectors with |λ - p| < ε."""
        cols = np.abs(self.levels[self.level] - p) < eps
        Vg = self.V[:, cols]
        return Vg @ Vg.conj().T

    def acceptance_projectors(self):
        """(|r>, Π_r) for every r: the blocks of Π_acc."""
        ys = _output_y(self.B)
        acc = self.P.accept_table
        for r, x in enumerate(self.P.generated):
            U = self.B.matrix(1, int(x))
            yield r, U.conj().T @ (acc[r][ys][:, None] * U)


# ---------------------------------------------------- solution measurement

@dataclass
class SolutionMeasurement:
    """Π_x = {B̂_x† Π_y B̂_x : y ∈ Y_x} ∪ {⊥} as basis-state groups of B̂_x."""
    x: int
    labels: list[int]          # answer per group; the last is BOTTOM
    groups: np.ndarray         # group id of each output basis state of B̂_x
    unitary: np.ndarray

    def measurement(self, layout) -> ProjectiveMeasurement:
        U = self.unitary
        outs = []
        for g, lab in enumerate(self.labels):
            mask = (self.groups == g).astype(complex)
            outs.append((lab, U.conj().T @ (mask[:, None] * U)))
        return ProjectiveMeasurement(layout, tuple(outs))

    def projector(self, g: int) -> np.ndarray:
        mask = (self.groups == g).astype(complex)
        return self.unitary.conj().T @ (mask[:, None] * self.unitary)


def solution_groups(P: Assumption, B: QuantumStatefulSolver, x: int) -> tuple[list[int], np.ndarray]:
    if P.image is None:
        raise UnsupportedAssumptionError(
            f"{P.name} has no image verifier; the solution measurement is undefined")
    valid = P.valid_solutions(x)
    if len(valid) > P.image.bound:
        raise ConfigurationError(f"instance {x} has {len(valid)} > k valid solutions")
    ys = _output_y(B)
    groups = np.full(B.D, len(valid), dtype=np.int64)
    for g, y in enumerate(valid):
        groups[ys == y] = g
    return list(valid) + [BOTTOM], groups


def build_solution_measurement(P: Assumption, x: int, B: QuantumStatefulSolver) -> SolutionMeasurement:
    labels, groups = solution_groups(P, B, x)
    return SolutionMeasurement(int(x), labels, groups, B.matrix(1, x))


# ----------------------------------------------------------------- ValEst

def _as_ket(state) -> np.ndarray:
    return np.asarray(state, dtype=complex).reshape(-1)


def _valest_exact_ket(op: ValueOperator, ket, rng):
    c = op.V.conj().T @ ket
    w = np.bincount(op.level, weights=np.abs(c) ** 2, minlength=len(op.levels))
    a = _pick(w, rng)
    c = np.where(op.level == a, c, 0.0) / math.sqrt(w[a])
    return op.V @ c, float(op.levels[a])


def _valest_sampled_ket(op: ValueOperator, ket, eps, rng):
    """Alternating estimator, simulated per eigen-level.

    In the Jordan block of an eigenvector of E with eigenvalue λ, each
    transition of the alternation repeats the previous outcome with amplitude
    √λ and flips it with amplitude √(1-λ), with a sign that depends only on the
    outcome sequence. The agreement count A after N transitions is therefore a
    Born-weighted mixture of Binomial(N, λ_a), and the post-state is
    Σ_a P_a ψ λ_a^{A/2}(1-λ_a)^{(N-A)/2}, renormalised. If the N-th outcome is
    not "Π_unif = 1" the alternation continues until it is.
    """
    N = alternation_rounds(eps)
    lam = op.levels
    c = op.V.conj().T @ ket
    w = np.bincount(op.level, weights=np.abs(c) ** 2, minlength=len(lam))
    a = _pick(w, rng)
    A = int(rng.binomial(N, lam[a]))
    agree, flip = A, N - A
    # the outcome after an even number of transitions is a Π_unif outcome;
    # it equals 1 iff the number of flips is even
    with np.errstate(divide="ignore"):
        log_l, log_f = np.log(lam), np.log1p(-lam)

    @np.errstate(invalid="ignore")
    def weights(ag, fl):
        lw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), -np.inf)
        lw = lw + np.where(ag > 0, ag * log_l, 0.0) + np.where(fl > 0, fl * log_f, 0.0)
        lw -= lw.max()
        return np.exp(lw)

    steps = N
    while steps % 2 == 1 or flip % 2 == 1:
        cur = weights(agree, flip)
        p_agree = float(np.dot(cur, lam) / cur.sum())
        if rng.random() < p_agree:
            agree += 1
        else:
            flip += 1
        steps += 1
    amp = np.sqrt(weights(agree, flip) / np.where(w > 0, w, 1.0))
    c = c * amp[op.level]
    c /= np.linalg.norm(c)
    return op.V @ c, A / N


def val_est(op: ValueOperator, state, eps: float, backend: str = "exact",
            rng: np.random.Generator | None = None):
    """(post-state, p*) for a ket or :class:`DensityMatrix` on S·Y·Ŷ."""
    if backend not in BACKENDS:
        raise ConfigurationError(f"unknown ValEst backend {backend!r}")
    if not 0.0 < eps <= 1.0:
        raise ConfigurationError("ε must lie in (0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    if isinstance(state, DensityMatrix):
        if backend != "exact":
            raise ConfigurationError("the sampled backend takes pure states")
        Vh = op.V.conj().T
        rho_e = Vh @ state.entries @ op.V
        diag = np.real(np.diag(rho_e))
        w = np.bincount(op.level, weights=diag, minlength=len(op.levels))
        a = _pick(w, rng)
        keep = (op.level == a)
        post = op.V @ (rho_e * np.outer(keep, keep)) @ Vh / w[a]
        return DensityMatrix(state.layout, post, check=False), float(op.levels[a])
    ket = _as_ket(state)
    if backend == "exact":
        return _valest_exact_ket(op, ket, rng)
    return _valest_sampled_ket(op, ket, eps, rng)


def measure_solution(sol: SolutionMeasurement, ket, rng: np.random.Generator):
    """Measure Π_x on a ket; returns (group index, post-measurement ket)."""
    phi = sol.unitary @ _as_ket(ket)
    gw = np.bincount(sol.groups, weights=np.abs(phi) ** 2, minlength=len(sol.labels))
    g = _pick(gw, rng)
    phi = np.where(sol.groups == g, phi, 0.0) / math.sqrt(gw[g])
    return g, sol.unitary.conj().T @ phi


# ----------------------------------------------------------------- Repair

def repair(op: ValueOperator, state, group: int, sol: SolutionMeasurement, p: float,
           eps: float, rng: np.random.Generator, on_failure: str = "continue"):
    """Alternate {P_good(p, ε), complement} and {Π_{x,g}, complement} until P_good fires.

    Returns (state, rounds, failed). At the round cap 64·⌈1/ε⌉ the unrepaired
    state is returned with ``failed=True``, or :class:`RepairFailure` is raised
    when ``on_failure="raise"``.
    """
    ket = _as_ket(state)
    good = np.abs(op.levels[op.level] - p) < eps
    inside = sol.groups == group
    U = sol.unitary
    cap = round_cap(eps)
    rounds = 0
    while True:
        c = op.V.conj().T @ ket
        w = np.abs(c) ** 2
        pg, pb = w[good].sum(), w[~good].sum()
        yes = _pick([pg, pb], rng) == 0
        keep = good if yes else ~good
        ket = op.V @ (np.where(keep, c, 0.0) / math.sqrt(pg if yes else pb))
        if yes:
            return ket, rounds, False
        rounds += 1
        phi = U @ ket
        w = np.abs(phi) ** 2
        pin, pout = w[inside].sum(), w[~inside].sum()
        yes = _pick([pin, pout], rng) == 0
        keep = inside if yes else ~inside
        ket = U.conj().T @ (np.where(keep, phi, 0.0) / math.sqrt(pin if yes else pout))
        if rounds >= cap:
            if on_failure == "raise":
                raise RepairFailure(f"repair hit the round cap {cap}", state=ket, rounds=rounds)
            return ket, rounds, True


# ------------------------------------------------------- wrapper solver

@dataclass
class PersistentSolverState:
    ket: np.ndarray
    p_prev: float
    i: int = 0
    eta: float = 0.1
    yhat0: int = 0
    telemetry: list[dict] = field(default_factory=list)


def initial_ket(B: QuantumStatefulSolver, rng) -> tuple[int, np.ndarray]:
    yh0, s0 = B.sample_initial(rng)
    ket = np.zeros(B.D, dtype=complex)
    ket[:: B.d_out] = s0
    return yh0, ket


def persist_init(op: ValueOperator, eta: float, rng: np.random.Generator,
                 backend: str = "exact") -> PersistentSolverState:
    """Prepare the solver's initial state and run ValEst with accuracy η/2."""
    yh0, ket = initial_ket(op.B, rng)
    ket, p = val_est(op, ket, eta / 2.0, backend, rng)
    return PersistentSolverState(ket, p, 0, eta, yh0)


def persist_step(op: ValueOperator, st: PersistentSolverState, x: int,
                 rng: np.random.Generator, backend: str = "exact",
                 sol: SolutionMeasurement | None = None) -> tuple[int, PersistentSolverState]:
    """One call: ValEst(ε_i), Π_x, Repair(ε_i), ValEst(ε_i). Returns (y, state)."""
    i = st.i + 1
    eps = epsilon_schedule(st.eta, i)
    sol = sol or build_solution_measurement(op.P, x, op.B)
    ket, p_before = val_est(op, st.ket, eps, backend, rng)
    g, ket = measure_solution(sol, ket, rng)
    ket, rounds, failed = repair(op, ket, g, sol, p_before, eps, rng)
    ket, p_after = val_est(op, ket, eps, backend, rng)
    y = sol.labels[g]
    st.telemetry.append({"i": i, "eps": eps, "p_before": p_before, "y": y,
                         "rounds": rounds, "p_after": p_after, "failed": failed})
    st.ket, st.p_prev, st.i = ket, p_after, i
    return y, st


class PersistentSolver:
    """The persisted wrapper of a one-shot solver ``B`` for assumption ``P``.

    The wrapped solver is built from ``B``'s first-call unitaries; later step
    indices of ``B`` are not used.
    """

    def __init__(self, P: Assumption, B: QuantumStatefulSolver, eta: float,
                 backend: str = "exact", op: ValueOperator | None = None):
        if P.image is None:
            raise UnsupportedAssumptionError(
                f"{P.name} has no image verifier; persistence is not available")
        if not 0.0 < eta < 1.0:
            raise ConfigurationError("η must lie in (0, 1)")
        if backend not in BACKENDS:
            raise ConfigurationError(f"unknown ValEst backend {backend!r}")
        self.P, self.B, self.eta, self.backend = P, B, float(eta), backend
        self.op = op or ValueOperator(P, B)
        self.m = B.m
        self._index: dict[int, int] = {}
        self._labels: list[list[int]] = []
        self._u: list[np.ndarray] = []
        self._g: list[np.ndarray] = []
        self._ubank = np.zeros((0, B.D, B.D), dtype=complex)
        self._gbank = np.zeros((0, B.D), dtype=np.int64)
        self._lab = np.zeros((0, 1), dtype=np.int64)
        self._lock = threading.RLock()

    @property
    def one_shot_value(self) -> float:
        from .solver import one_shot_value
        return one_shot_value(self.P, self.B)

    def bank_indices(self, xs: np.ndarray) -> np.ndarray:
        # banks only grow, so rows handed out stay valid for later readers
        with self._lock:
            return self._bank_indices(xs)

    def _bank_indices(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        uniq, inv = np.unique(xs, return_inverse=True)
        grew = False
        for x in uniq.tolist():
            if x not in self._index:
                labels, groups = solution_groups(self.P, self.B, x)
                self._index[x] = len(self._u)
                self._u.append(self.B.matrix(1, x))
                self._g.append(groups)
                self._labels.append(labels)
                grew = True
        if grew:
            self._ubank = np.ascontiguousarray(np.stack(self._u))
            self._gbank = np.ascontiguousarray(np.stack(self._g))
            width = max(len(l) for l in self._labels)
            lab = np.full((len(self._labels), width), BOTTOM, dtype=np.int64)
            for j, l in enumerate(self._labels):
                lab[j, : len(l) - 1] = l[:-1]
            self._lab = lab
        rows = np.array([self._index[x] for x in uniq.tolist()], dtype=np.int64)
        return rows[inv].reshape(xs.shape)

    def start(self, rng: np.random.Generator, size: int = 1) -> "PersistedRuns":
        """Run the initialiser for ``size`` independent copies."""
        B = self.B
        kets = np.zeros((size, B.D), dtype=complex)
        yh0 = np.zeros(size, dtype=np.int64)
        keys = np.array([kernel_key(rng) for _ in range(size)], dtype=np.uint64)
        for r in range(size):
            yh0[r], kets[r] = initial_ket(B, rng)
        runs = PersistedRuns(self, kets, np.zeros(size, dtype=np.int64), keys, yhat0=yh0)
        if self.backend == "exact":
            p0 = _kernels.valest_exact(self.op.V, self.op.level, self.op.levels, runs.kets,
                                       runs.rng_keys, runs.counters)
        else:
            p0 = np.empty(size)
            for r in range(size):
                runs.kets[r], p0[r] = val_est(self.op, runs.kets[r], self.eta / 2.0,
                                              "sampled", runs.py_rng(r))
        runs.p0 = np.asarray(p0, dtype=float)
        runs.p_prev = runs.p0.copy()
        return runs


class PersistedRuns(RunBatch):
    """Batch of persisted solver copies sharing one :class:`PersistentSolver`."""

    def __init__(self, solver: PersistentSolver, kets, calls, rng_keys, counters=None,
                 yhat0=None):
        self.solver = solver
        self.m = solver.m
        self.kets = np.ascontiguousarray(kets, dtype=complex)
        self.calls = np.asarray(calls, dtype=np.int64).copy()
        self.rng_keys = np.asarray(rng_keys, dtype=np.uint64).copy()
        self.counters = np.zeros(len(self.calls), dtype=np.uint64) if counters is None \
            else np.asarray(counters, dtype=np.uint64).copy()
        self.yhat0 = np.zeros(len(self.calls), dtype=np.int64) if yhat0 is None else yhat0
        self.p0 = np.zeros(len(self.calls))
        self.p_prev = np.zeros(len(self.calls))
        self.telemetry: list[dict] | None = None
        self.repair_failures = np.zeros(len(self.calls), dtype=np.int64)
        self.cost = np.zeros(len(self.calls))
        self._py_rngs: dict[int, np.random.Generator] = {}

    def py_rng(self, r: int) -> np.random.Generator:
        if r not in self._py_rngs:
            from .rng import stream
            self._py_rngs[r] = stream(int(self.rng_keys[r]), "sampled-valest")
        return self._py_rngs[r]

    def _advance(self, q, rec):
        S = self.solver
        op = S.op
        xk = np.ascontiguousarray(S.bank_indices(q))
        if S.backend == "exact":
            res, states = _kernels.walk_persisted(
                op.V, op.level, op.levels, S._ubank, S._gbank, xk, self.kets, self.calls,
                S.eta, self.rng_keys, self.counters, rec)
        else:
            res, states = self._advance_sampled(q, rec)
        answers = S._lab[xk, res["group"]]
        self.p_prev = res["p_after"][:, -1].copy() if q.shape[1] else self.p_prev
        self.repair_failures += res["failed"].sum(axis=1).astype(np.int64)
        self.cost += S.B.unit_cost * (1 + 2 * res["rounds"]).sum(axis=1)
        if self.telemetry is not None:
            R, n = q.shape
            for r in range(R):
                for s in range(n):
                    i = int(self.calls[r]) - n + s + 1
                    self.telemetry.append({
                        "run": r, "i": i, "eps": epsilon_schedule(S.eta, i),
                        "x": int(q[r, s]), "y": int(answers[r, s]),
                        "p_before": float(res["p_before"][r, s]),
                        "rounds": int(res["rounds"][r, s]),
                        "p_after": float(res["p_after"][r, s]),
                        "failed": bool(res["failed"][r, s])})
        return answers, states

    def _advance_sampled(self, q, rec):
        S = self.solver
        R, n = q.shape
        res = {"group": np.zeros((R, n), dtype=np.int64), "p_before": np.zeros((R, n)),
               "p_after": np.zeros((R, n)), "rounds": np.zeros((R, n), dtype=np.int64),
               "failed": np.zeros((R, n), dtype=np.uint8)}
        states = np.zeros((R, rec.shape[1], S.B.D), dtype=complex)
        for r in range(R):
            rng = self.py_rng(r)
            st = PersistentSolverState(self.kets[r], self.p_prev[r], int(self.calls[r]), S.eta)
            for s in range(n + 1):
                states[r][rec[r] == s] = st.ket
                if s == n:
                    break
                x = int(q[r, s])
                j = S._index[x]
                sol = SolutionMeasurement(x, S._labels[j], S._g[j], S._u[j])
                persist_step(S.op, st, x, rng, "sampled", sol)
                t = st.telemetry[-1]
                res["group"][r, s] = sol.labels.index(t["y"])
                res["p_before"][r, s] = t["p_before"]
                res["p_after"][r, s] = t["p_after"]
                res["rounds"][r, s] = t["rounds"]
                res["failed"][r, s] = t["failed"]
            self.kets[r] = st.ket
            self.calls[r] = st.i
        return res, states

    def values(self, P: Assumption | None = None) -> np.ndarray:
        return np.atleast_1d(self.solver.op.value(self.kets))

    def reference_values(self, P=None) -> np.ndarray:
        return self.p0.copy()

    def fork(self, kets, calls, rng: np.random.Generator) -> "PersistedRuns":
        keys = np.array([kernel_key(rng) for _ in range(len(calls))], dtype=np.uint64)
        runs = PersistedRuns(self.solver, np.array(kets, dtype=complex), calls, keys)
        runs.p0 = np.full(len(calls), np.nan)
        return runs
