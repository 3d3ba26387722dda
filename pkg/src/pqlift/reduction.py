"""Non-adaptive classical reductions and their lift to stateful quantum solvers.

A reduction program is a generator ``program(x_Q, coins)`` that yields one
tuple of k distinct P-instances, receives the k answers and returns its
Q-answer. Yielding a second time is an adaptive query and violates the
contract.

The lift wraps the P-solver with the persistence transformation, turns the
reduction's query distribution D into queries a memoryless and then stateless
solver could have answered (flood-and-plant, then shuffle), and answers each
Q-instance with exactly M solver calls. Durable mode keeps the same persisted
solver across invocations, so invocation τ uses solver steps τM+1 .. (τ+1)M.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Generator

import numpy as np

from .assumption import (BOTTOM, Assumption, SolverFunction, toy_decision, toy_gl,
                         toy_gl_inversion, toy_salted_decision)
from .errors import ConfigurationError, ContractViolation, UnsupportedAssumptionError
from .memoryless import InstanceDistribution, QueryTupleDistribution
from .persistence import PersistentSolver
from .solver import CountingRuns, QuantumStatefulSolver, RunBatch
from .stateless import sim_combined

Program = Callable[[int, int], Generator]


@dataclass
class ReductionSpec:
    name: str
    Q: Assumption
    P: Assumption
    k: int
    program: Program
    coin_bits: int = 0
    eps_prime: float | None = None      # declared Q-advantage against an ε-advantage oracle
    eps_reference: float = 0.25          # the ε that eps_prime was measured at
    positive_advantage: bool = True

    def queries(self, xq: int, coins: int) -> tuple[int, ...]:
        gen = self.program(int(xq), int(coins))
        qs = self._check(next(gen))
        gen.close()
        return qs

    def _check(self, qs) -> tuple[int, ...]:
        qs = tuple(int(q) for q in qs)
        if len(qs) != self.k:
            raise ContractViolation(f"{self.name} issued {len(qs)} queries, declared k = {self.k}")
        if len(set(qs)) != len(qs):
            raise ContractViolation(f"{self.name} repeated a query within its tuple")
        for q in qs:
            if not 0 <= q < (1 << self.P.n):
                raise ContractViolation(f"query {q} is not an {self.P.n}-bit instance")
        return qs

    def run(self, xq: int, coins: int, oracle: Callable[[tuple[int, ...]], np.ndarray]) -> int:
        """Drive the program once; ``oracle`` receives the whole tuple at once."""
        gen = self.program(int(xq), int(coins))
        qs = self._check(next(gen))
        answers = [int(a) for a in oracle(qs)]
        try:
            gen.send(answers)
        except StopIteration as stop:
            return BOTTOM if stop.value is None else int(stop.value)
        gen.close()
        raise ContractViolation(f"{self.name} asked a second round of queries (adaptive)")

    def finalize(self, xq: int, coins: int, answers) -> int:
        return self.run(xq, coins, lambda qs: answers)

    def query_distribution(self) -> QueryTupleDistribution:
        """D: the query tuple on a fresh Q-instance and fresh coins."""
        Q = self.Q
        cache: dict = {}

        def tup(r, c):
            key = (int(r), int(c))
            if key not in cache:
                cache[key] = self.queries(Q.generate(int(r)), int(c))
            return cache[key]

        def sampler(rng, R):
            rs = rng.integers(0, 1 << Q.d, size=R)
            cs = rng.integers(0, 1 << self.coin_bits, size=R)
            return np.array([tup(r, c) for r, c in zip(rs.tolist(), cs.tolist())], dtype=np.int64)

        total = 1 << (Q.d + self.coin_bits)
        support = None
        marginal = None
        if total <= 1 << 16:
            acc: dict = {}
            for r in range(1 << Q.d):
                for c in range(1 << self.coin_bits):
                    t = tup(r, c)
                    acc[t] = acc.get(t, 0.0) + 1.0 / total
            support = sorted(acc.items())
            single: dict = {}
            for t, p in support:
                for x in t:
                    single[x] = single.get(x, 0.0) + p / self.k
            marginal = InstanceDistribution.from_support(self.P.n, single)
        return QueryTupleDistribution(self.k, self.P.n, sampler, support, marginal,
                                      name=f"{self.name}-queries")


# ----------------------------------------------------------- classical runs

def _oracle_dist(f):
    if isinstance(f, SolverFunction):
        return f.distribution
    return lambda x: {int(f(x)): 1.0}


def run_classical(R: ReductionSpec, oracle, trials: int = 10_000,
                  rng: np.random.Generator | None = None, mode: str = "auto") -> dict:
    """Q-value and advantage of R with a stateless oracle.

    ``oracle`` is a :class:`SolverFunction` or a deterministic map x -> y.
    ``mode="exact"`` enumerates Q's randomness, the coins and the oracle's
    answer distributions; ``"auto"`` uses it whenever that is small enough.
    """
    Q = R.Q
    dist = _oracle_dist(oracle)
    total = 1 << (Q.d + R.coin_bits)
    if mode == "auto":
        mode = "exact" if total * (1 << (R.k * min(R.P.m, 2))) <= 1 << 22 else "monte_carlo"
    if mode == "exact":
        value = 0.0
        for r in range(1 << Q.d):
            xq = Q.generate(r)
            for c in range(1 << R.coin_bits):
                qs = R.queries(xq, c)
                dists = [dist(q) for q in qs]
                for combo in itertools.product(*[list(d.items()) for d in dists]):
                    p = float(np.prod([pp for _, pp in combo]))
                    if p == 0.0:
                        continue
                    yq = R.finalize(xq, c, [y for y, _ in combo])
                    value += p * Q.verify(r, yq)
        value /= total
        return {"value": value, "advantage": value - Q.c, "stderr": 0.0, "mode": "exact"}
    if mode != "monte_carlo":
        raise ConfigurationError(f"unknown mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    f = oracle if isinstance(oracle, SolverFunction) else SolverFunction.deterministic(R.P.m, oracle)
    wins = 0
    for _ in range(trials):
        r = int(rng.integers(0, 1 << Q.d))
        c = int(rng.integers(0, 1 << R.coin_bits))
        yq = R.run(Q.generate(r), c, lambda qs: [f.sample(q, rng) for q in qs])
        wins += Q.verify(r, yq)
    v = wins / trials
    return {"value": v, "advantage": v - Q.c, "stderr": math.sqrt(max(v * (1 - v), 0.0) / trials),
            "mode": "monte_carlo"}


def reference_oracle(P: Assumption, eps: float) -> SolverFunction:
    """Stateless oracle with value c + ε: correct w.p. ½ + ε for decisions, else c + ε."""
    if P.solve is None:
        raise ConfigurationError(f"{P.name} has no trapdoor")
    if P.m == 1:
        return SolverFunction.noisy(1, P.solve, flip=0.5 - eps)
    return SolverFunction.noisy(P.m, P.solve, flip=1.0 - (P.c + eps))


def measure_eps_prime(R: ReductionSpec, eps: float | None = None) -> float:
    eps = R.eps_reference if eps is None else eps
    return run_classical(R, reference_oracle(R.P, eps), mode="exact")["advantage"]


# ----------------------------------------------------------------- catalog

def gl_inverter(n_f: int = 4, seed: int = 0) -> ReductionSpec:
    """Invert f from a GL-bit oracle: query (f(x), r) and (f(x), r ⊕ e_i), x_i = a_0 ⊕ a_i."""
    Q, P = toy_gl_inversion(n_f, seed), toy_gl(n_f, seed)

    def program(xq, coins):
        r = coins
        qs = [(xq << n_f) | r] + [(xq << n_f) | (r ^ (1 << i)) for i in range(n_f)]
        a = yield qs
        return sum(((a[0] ^ a[i + 1]) & 1) << i for i in range(n_f))

    return ReductionSpec("gl-inverter", Q, P, n_f + 1, program, coin_bits=n_f, eps_prime=0.2)


def majority_amplifier(n: int = 3, s: int = 3, k: int = 5, seed: int = 0) -> ReductionSpec:
    """Decide b(w) by majority over k distinct salted copies of the instance."""
    if k > (1 << s) or k % 2 == 0:
        raise ConfigurationError("need an odd k ≤ 2^s")
    Q, P = toy_decision(n, seed), toy_salted_decision(n, s, seed)

    def program(xq, coins):
        qs = [(xq << s) | ((coins + i) % (1 << s)) for i in range(k)]
        a = yield qs
        return int(sum(a) * 2 > k)

    return ReductionSpec("majority-amplifier", Q, P, k, program, coin_bits=s, eps_prime=0.3)


def identity_reduction(P: Assumption) -> ReductionSpec:
    def program(xq, coins):
        a = yield [xq]
        return a[0]
    return ReductionSpec("identity", P, P, 1, program, eps_prime=0.25)


CATALOG = {"gl-inverter": gl_inverter, "majority-amplifier": majority_amplifier}


def catalog_reduction(name: str, seed: int = 0, **kw) -> ReductionSpec:
    if name == "identity":
        return identity_reduction(toy_gl(seed=seed))
    if name not in CATALOG:
        raise ConfigurationError(f"unknown reduction {name!r}")
    return CATALOG[name](seed=seed, **kw)


# ---------------------------------------------------------------- lifting

def lift_parameters(eps: float, eps_prime: float) -> dict:
    """δ = ε′/2 and η = min(ε/4, ε′/2)."""
    if not (0 < eps <= 1 and 0 < eps_prime <= 1):
        raise ConfigurationError("ε and ε′ must lie in (0, 1]")
    return {"delta": eps_prime / 2.0, "eta": min(eps / 4.0, eps_prime / 2.0)}


@dataclass
class LiftedReduction:
    spec: ReductionSpec
    solver: PersistentSolver
    runs: RunBatch
    eps: float
    eps_prime: float
    delta: float
    eta: float
    ell: int
    M: int
    D: QueryTupleDistribution
    max_calls: int | None = None
    invocations: int = 0
    telemetry: list[dict] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.runs.size

    def _invoke(self, xq, rng: np.random.Generator) -> np.ndarray:
        spec = self.spec
        xq = np.broadcast_to(np.asarray(xq, dtype=np.int64), (self.size,))
        coins = rng.integers(0, 1 << spec.coin_bits, size=self.size)
        X = np.array([spec.queries(a, c) for a, c in zip(xq.tolist(), coins.tolist())],
                     dtype=np.int64).reshape(self.size, spec.k)
        before = self.runs.calls.copy()
        fails_before = getattr(self.runs, "repair_failures", np.zeros(self.size)).copy()
        res = sim_combined(self.runs, self.D, self.ell, self.delta, X, rng, max_calls=self.max_calls)
        used = self.runs.calls - before
        if np.any(used > self.M):
            raise ContractViolation("an invocation exceeded its call budget M")
        short = self.M - used
        if np.any(short != short[0]):
            raise ContractViolation("parallel instances used different call counts")
        if short[0] > 0:               # pad to exactly M calls with fresh dummy queries
            width = int(short[0])
            pad = self.D.marginal.sample(rng, (self.size, width)) if self.D.marginal is not None \
                else np.zeros((self.size, width), dtype=np.int64)
            self.runs.answer_batch(pad)   # lockstep batches pad uniformly
        used = self.runs.calls - before
        yq = np.array([spec.finalize(a, c, ans) for a, c, ans in
                       zip(xq.tolist(), coins.tolist(), res.answers.tolist())], dtype=np.int64)
        fails = getattr(self.runs, "repair_failures", np.zeros(self.size)) - fails_before
        self.telemetry.append({"invocation": self.invocations,
                               "first_step": int(before.min()) + 1,
                               "last_step": int(self.runs.calls.max()),
                               "calls_min": int(used.min()), "calls_max": int(used.max()),
                               "exact_budget": bool(np.all(used == self.M)),
                               "repair_failures": int(np.sum(fails))})
        self.invocations += 1
        return yq


def dry_run_calls(spec: ReductionSpec, ell: int, delta: float, D: QueryTupleDistribution,
                  rng: np.random.Generator, max_calls: int | None = None) -> int:
    """M: solver calls of one invocation, measured with a call-counting stub."""
    stub = CountingRuns(spec.P.m, size=1)
    X = D.sample_many(rng, 1)
    sim_combined(stub, D, ell, delta, X, rng, max_calls=max_calls)
    return int(stub.calls[0])


def lift(spec: ReductionSpec, B: QuantumStatefulSolver, eps: float, rng: np.random.Generator,
         size: int = 1, eps_prime: float | None = None, eta: float | None = None,
         max_calls: int | None = None, backend: str = "exact") -> LiftedReduction:
    """Persist B once (per parallel instance) and fix δ, η and the budget M."""
    if spec.P.image is None:
        raise UnsupportedAssumptionError(
            f"{spec.P.name} has no image verifier; the lift needs persistence")
    eps_prime = spec.eps_prime if eps_prime is None else eps_prime
    if eps_prime is None:
        raise ConfigurationError(f"{spec.name} declares no ε′")
    params = lift_parameters(eps, eps_prime)
    eta = params["eta"] if eta is None else eta
    solver = PersistentSolver(spec.P, B, eta, backend=backend)
    runs = solver.start(rng, size)
    ell = B.layout.total_qubits
    D = spec.query_distribution()
    M = dry_run_calls(spec, ell, params["delta"], D, rng, max_calls)
    return LiftedReduction(spec, solver, runs, eps, eps_prime, params["delta"], eta, ell, M, D,
                           max_calls)


def solve_once(L: LiftedReduction, xq, rng: np.random.Generator) -> np.ndarray:
    """Answer one Q-instance per parallel instance of L with exactly M solver calls."""
    return L._invoke(xq, rng)


def solve_stream(L: LiftedReduction, xqs, rng: np.random.Generator) -> np.ndarray:
    """Durable mode: consecutive invocations on the same persisted solver.

    ``xqs`` has one row per invocation (broadcast over the parallel instances).
    """
    return np.stack([L._invoke(xq, rng) for xq in xqs])


def naive_reuse(spec: ReductionSpec, B, xq, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Control: feed the reduction's queries straight to the raw stateful solver, in order."""
    xq = np.broadcast_to(np.asarray(xq, dtype=np.int64), (size,))
    coins = rng.integers(0, 1 << spec.coin_bits, size=size)
    X = np.array([spec.queries(a, c) for a, c in zip(xq.tolist(), coins.tolist())], dtype=np.int64)
    runs = B.start(rng, size)
    ans = runs.answer_batch(X)
    return np.array([spec.finalize(a, c, y) for a, c, y in
                     zip(xq.tolist(), coins.tolist(), ans.tolist())], dtype=np.int64)
