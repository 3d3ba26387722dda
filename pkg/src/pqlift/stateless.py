"""Shuffling a memoryless solver into an effectively stateless one.

A memoryless solver answers by call index only. Placing the k real queries at
k distinct uniformly random indices among t = ⌈k²/δ⌉ (padding elsewhere with a
fixed instance) makes the answers δ-close to those of the induced stateless
solver B″, which answers every query at an independent uniform index in [t].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError
from .memoryless import (InstanceDistribution, MemlessResult, QueryTupleDistribution,
                         random_marginal, sim_memless)
from .records import hexstr
from .solver import QuantumStatefulSolver, RunBatch


def padding_length(k: int, delta: float) -> int:
    """t = ⌈k²/δ⌉, so that k distinct uniform indices collide with probability ≤ k²/t ≤ δ."""
    if not delta > 0:
        raise ConfigurationError("δ must be positive")
    return max(k, math.ceil(Fraction(k * k) / Fraction(repr(float(delta)))))


@dataclass
class ShufflePlans:
    """Distinct 1-based indices i_1..i_k in [t] per run, and the padding instance."""
    t: int
    indices: np.ndarray      # R × k
    pad: int = 0

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def padded(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64).reshape(self.size, self.k)
        out = np.full((self.size, self.t), self.pad, dtype=np.int64)
        out[np.arange(self.size)[:, None], self.indices - 1] = xs
        return out

    def extract(self, answers) -> np.ndarray:
        return np.asarray(answers)[np.arange(self.size)[:, None], self.indices - 1]

    def records(self, r: int, n: int) -> dict:
        return {"t": self.t, "indices": self.indices[r].tolist(), "pad": hexstr(self.pad, n)}


def make_shuffle(R: int, k: int, t: int, rng: np.random.Generator, pad: int = 0) -> ShufflePlans:
    if k > t:
        raise ConfigurationError("need k ≤ t distinct indices")
    idx = np.argsort(rng.random((R, t)), axis=1)[:, :k] + 1
    return ShufflePlans(t, idx.astype(np.int64), pad)


# ---------------------------------------------------------- memoryless handles

class MemorylessRuns(RunBatch):
    """A memoryless solver given by ``answer_at(rows, indices, xs)``.

    The call index advances by one per query; nothing else is carried.
    """

    def __init__(self, answer_at, m: int, size: int, rows=None):
        self.answer_at = answer_at
        self.m = m
        self.calls = np.zeros(size, dtype=np.int64)
        self.rows = np.arange(size) if rows is None else np.asarray(rows)

    def _advance(self, q, rec):
        R, n = q.shape
        out = np.zeros((R, n), dtype=np.int64)
        for s in range(n):
            out[:, s] = self.answer_at(self.rows, self.calls + s + 1, q[:, s])
        self.calls += n
        return out, np.zeros((R, rec.shape[1]))


def index_answer_sampler(B: QuantumStatefulSolver, rng: np.random.Generator):
    """``answer_at`` for an ℓ = 0 solver: sample y from its index-j answer distribution."""
    if B.ell != 0:
        raise ConfigurationError("a memoryless handle needs ℓ = 0")
    branches = B.initial_branches()
    if len(branches) != 1:
        raise ConfigurationError("ℓ = 0 solvers have a single initial branch")
    ket = branches[0][2]
    cache: dict = {}

    def probs(j, x):
        key = B.key(int(j), int(x))
        if key not in cache:
            cache[key] = np.cumsum(B.answer_probabilities(ket, int(j), [int(x)])[0, 0])
        return cache[key]

    def answer_at(rows, js, xs):
        u = rng.random(len(xs))
        out = np.empty(len(xs), dtype=np.int64)
        for n, (j, x) in enumerate(zip(np.broadcast_to(js, len(xs)).tolist(), xs.tolist())):
            c = probs(j, x)
            out[n] = min(int(np.searchsorted(c, u[n] * c[-1], side="right")), len(c) - 1)
        return out
    return answer_at


def memoryless_runs(B, rng: np.random.Generator, size: int) -> MemorylessRuns:
    """Batch of a memoryless solver: an ℓ = 0 solver or an ideal memoryless solver."""
    if isinstance(B, QuantumStatefulSolver):
        return MemorylessRuns(index_answer_sampler(B, rng), B.m, size)
    if hasattr(B, "answer_at"):
        if B.size != size:
            raise ConfigurationError("ideal solver size does not match")
        return MemorylessRuns(B.answer_at, B.m, size)
    raise ConfigurationError(f"{type(B).__name__} is not a memoryless solver")


class InducedStateless(RunBatch):
    """B″: every query is answered at an independent uniform index in [t]."""

    def __init__(self, answer_at, m: int, t: int, size: int, rng: np.random.Generator):
        self.answer_at, self.m, self.t, self.rng = answer_at, m, t, rng
        self.calls = np.zeros(size, dtype=np.int64)

    def _advance(self, q, rec):
        R, n = q.shape
        rows = np.arange(R)
        out = np.zeros((R, n), dtype=np.int64)
        for s in range(n):
            js = self.rng.integers(1, self.t + 1, size=R)
            out[:, s] = self.answer_at(rows, js, q[:, s])
        self.calls += n
        return out, np.zeros((R, rec.shape[1]))


def induced_stateless(B, t: int, rng: np.random.Generator, size: int = 1) -> InducedStateless:
    if isinstance(B, QuantumStatefulSolver):
        return InducedStateless(index_answer_sampler(B, rng), B.m, t, size, rng)
    return InducedStateless(B.answer_at, B.m, t, size, rng)


def index_mixture(B: QuantumStatefulSolver, t: int, x: int) -> np.ndarray:
    """Exact answer distribution of B″ on x for an ℓ = 0 solver: mean over indices 1..t."""
    ket = B.initial_branches()[0][2]
    return np.mean([B.answer_probabilities(ket, j, [x])[0, 0] for j in range(1, t + 1)], axis=0)


# ---------------------------------------------------------------- simulators

@dataclass
class StatelessResult:
    xs: np.ndarray
    answers: np.ndarray
    shuffle: ShufflePlans
    inner: MemlessResult | None = field(default=None, repr=False)

    def transcript(self, r: int = 0) -> list[tuple[int, int]]:
        return list(zip(self.xs[r].tolist(), self.answers[r].tolist()))


def sim_stateless(B, delta: float, xs, rng: np.random.Generator, pad: int = 0,
                  runs: RunBatch | None = None) -> StatelessResult:
    """Pad x⃗ to length t = ⌈k²/δ⌉ at distinct random indices and query B in order."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    R, k = xs.shape
    t = padding_length(k, delta)
    plan = make_shuffle(R, k, t, rng, pad)
    runs = runs if runs is not None else memoryless_runs(B, rng, R)
    ans = runs.answer_batch(plan.padded(xs))
    return StatelessResult(xs, plan.extract(ans), plan)


def padded_distribution(D: QueryTupleDistribution, t: int, pad: int = 0) -> QueryTupleDistribution:
    """D′: the padded sequences x⃗′ of the shuffle simulator for x⃗ ~ D.

    Its random marginal is (1 - k/t)·[pad] + (k/t)·D_U.
    """
    k = D.k

    def sampler(rng, R):
        return make_shuffle(R, k, t, rng, pad).padded(D.sample_many(rng, R))

    DU = random_marginal(D)
    marg_support = None
    if DU.support is not None:
        marg_support = {x: p * k / t for x, p in DU.support.items()}
        marg_support[pad] = marg_support.get(pad, 0.0) + (1.0 - k / t)

    def marg_sampler(rng, size):
        size = (size,) if isinstance(size, int) else tuple(size)
        z = DU.sample(rng, size)
        keep = rng.random(size) < k / t
        return np.where(keep, z, pad)

    marginal = InstanceDistribution(D.n, marg_sampler, marg_support)
    return QueryTupleDistribution(t, D.n, sampler, None, marginal, name=f"{D.name}-padded")


def sim_combined(B, D: QueryTupleDistribution, ell: int, delta: float, xs,
                 rng: np.random.Generator, pad: int = 0, max_calls: int | None = None) -> StatelessResult:
    """Stateful → stateless: flood-and-plant over D′ at δ/2, then shuffle bookkeeping at δ/2."""
    half = delta / 2.0
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    R, k = xs.shape
    t = padding_length(k, half)
    plan = make_shuffle(R, k, t, rng, pad)
    Dp = padded_distribution(D, t, pad)
    inner = sim_memless(B, Dp, ell, half, plan.padded(xs), rng, max_calls=max_calls)
    return StatelessResult(xs, plan.extract(inner.answers), plan, inner)


def combined_calls(k: int, ell: int, delta: float, max_calls: int | None = None) -> int:
    """Solver calls made by :func:`sim_combined` (k' · t with k' the padded length)."""
    from .memoryless import capped_length, flood_length
    kp = padding_length(k, delta / 2.0)
    t, _ = capped_length(kp, flood_length(ell, kp, delta / 2.0), max_calls)
    return kp * t


def planted_steps(res: StatelessResult) -> np.ndarray:
    """Global solver step at which each real query of a combined run was answered (R × k)."""
    inner = res.inner
    if inner is None:
        return res.shuffle.indices.copy()
    rows = np.arange(res.shuffle.size)[:, None]
    blocks = inner.plans.inverse[rows, res.shuffle.indices - 1]
    return blocks * inner.t + inner.plans.plants[rows, blocks]


def product_distribution(B: QuantumStatefulSolver, xs, steps) -> dict[tuple, float]:
    """Exact joint answer distribution of an ℓ = 0 solver answering xs[i] at steps[i]."""
    if B.ell != 0:
        raise ConfigurationError("exact product distributions need ℓ = 0")
    ket = B.initial_branches()[0][2]
    dist = {(): 1.0}
    for x, s in zip(np.asarray(xs).tolist(), np.asarray(steps).tolist()):
        p = B.answer_probabilities(ket, int(s), [int(x)])[0, 0]
        dist = {k + (y,): q * float(p[y]) for k, q in dist.items()
                for y in range(len(p)) if p[y] > 0}
    return dist
