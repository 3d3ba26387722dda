"""Flood-and-plant: simulating a memoryless solver with a bounded-memory one.

The real k-tuple x⃗ is hidden among k·t dummy queries drawn from the random
marginal D_U. Slot (j, i) for j ∈ [k], i ∈ [t] is the global step
t(j-1) + i; the j-th block carries x_{π(j)} at position i_j. With
t = max(1, ⌈ℓk²/(2δ²)⌉) the output transcript is within δ of the transcript of
a memoryless solver whose per-index states were fixed by an all-dummy run.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .linalg import trace_norm
from .records import hexstr
from .solver import QuantumStatefulSolver, RunBatch


# ------------------------------------------------------------ distributions

@dataclass
class InstanceDistribution:
    """A distribution over single n-bit instances, with optional exact support."""
    n: int
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    support: dict[int, float] | None = None

    def sample(self, rng: np.random.Generator, size: int | tuple = ()) -> np.ndarray:
        return np.asarray(self.sampler(rng, size), dtype=np.int64)

    def exact(self) -> dict[int, float]:
        if self.support is None:
            raise ConfigurationError("this distribution has no exact support")
        return dict(self.support)

    @classmethod
    def from_support(cls, n: int, support: dict[int, float]) -> "InstanceDistribution":
        xs = np.array(sorted(support), dtype=np.int64)
        p = np.array([support[x] for x in xs], dtype=float)
        p /= p.sum()

        def sampler(rng, size):
            return xs[rng.choice(len(xs), size=size, p=p)]
        return cls(n, sampler, {int(x): float(q) for x, q in zip(xs, p)})


@dataclass
class QueryTupleDistribution:
    """A distribution D over k-tuples of n-bit instances.

    ``sampler(rng, R)`` returns an int array of shape (R, k). ``support`` is an
    optional list of (tuple, probability). ``marginal`` may carry the exact
    random marginal when the tuple support is too large to list.
    """
    k: int
    n: int
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    support: list[tuple[tuple[int, ...], float]] | None = None
    marginal: InstanceDistribution | None = None
    name: str = "D"

    def sample_many(self, rng: np.random.Generator, R: int) -> np.ndarray:
        out = np.asarray(self.sampler(rng, R), dtype=np.int64).reshape(R, self.k)
        if out.size and (out.min() < 0 or out.max() >= (1 << self.n)):
            raise ConfigurationError(f"sampled instance is not an {self.n}-bit string")
        return out

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(v) for v in self.sample_many(rng, 1)[0])

    def exact(self) -> list[tuple[tuple[int, ...], float]]:
        if self.support is None:
            raise ConfigurationError(f"{self.name} has no exact support")
        return list(self.support)

    @classmethod
    def from_support(cls, k: int, n: int, support, name: str = "D") -> "QueryTupleDistribution":
        tuples = np.array([s for s, _ in support], dtype=np.int64).reshape(-1, k)
        p = np.array([q for _, q in support], dtype=float)
        p /= p.sum()

        def sampler(rng, R):
            return tuples[rng.choice(len(tuples), size=R, p=p)]
        return cls(k, n, sampler, [(tuple(int(v) for v in s), float(q))
                                   for s, q in zip(tuples, p)], name=name)


def random_marginal(D: QueryTupleDistribution) -> InstanceDistribution:
    """D_U: draw a tuple from D and output a uniformly chosen entry."""
    if D.marginal is not None:
        return D.marginal
    support = None
    if D.support is not None:
        support = {}
        for tup, p in D.support:
            for x in tup:
                support[x] = support.get(x, 0.0) + p / D.k

    def sampler(rng, size):
        size = (size,) if isinstance(size, int) else tuple(size)
        total = int(np.prod(size)) if size else 1
        tuples = D.sample_many(rng, total)
        pos = rng.integers(0, D.k, size=total)
        out = tuples[np.arange(total), pos]
        return out.reshape(size) if size else out[0]
    return InstanceDistribution(D.n, sampler, support)


def gl_correlated_pairs(P, k: int = 2) -> QueryTupleDistribution:
    """toy-GL tuples sharing one hidden prefix: ((f(x), r_1), ..., (f(x), r_k)), r's distinct."""
    nf = P.params["n_f"]
    low = 1 << nf
    support = []
    per = 1.0 / (low * math.perm(low, k))
    for pre in range(low):
        for rs in itertools.permutations(range(low), k):
            support.append((tuple((pre << nf) | r for r in rs), per))
    return QueryTupleDistribution.from_support(k, P.n, support, name=f"gl-correlated-{k}")


def fresh_instances(P, k: int) -> QueryTupleDistribution:
    """k independent fresh instances G(r_1), ..., G(r_k)."""
    def sampler(rng, R):
        rs = rng.integers(0, 1 << P.d, size=(R, k))
        return P.generated[rs]
    single: dict[int, float] = {}
    for x in P.generated.tolist():
        single[x] = single.get(x, 0.0) + 1.0 / (1 << P.d)
    support = None
    if len(single) ** k <= 1 << 16:
        support = [(tup, float(np.prod([single[x] for x in tup])))
                   for tup in itertools.product(sorted(single), repeat=k)]
    D = QueryTupleDistribution(k, P.n, sampler, support, name=f"fresh-{k}")
    D.marginal = InstanceDistribution.from_support(P.n, single)
    return D


# --------------------------------------------------------------- planning

def flood_length(ell: int, k: int, delta: float) -> int:
    """Smallest t ≥ 1 with k·√(ℓ/(2t)) ≤ δ, i.e. max(1, ⌈ℓk²/(2δ²)⌉)."""
    if not delta > 0:
        raise ConfigurationError("δ must be positive")
    d = Fraction(repr(float(delta)))
    need = Fraction(int(ell) * k * k) / (2 * d * d)
    return max(1, math.ceil(need))


@dataclass
class FloodPlans:
    """Flood plans for R independent runs.

    dummies  int64[R, k, t]   z_{j,i}
    plants   int64[R, k]      i_j ∈ [1, t]
    perms    int64[R, k]      π(j) - 1 for j = 1..k
    """
    t: int
    dummies: np.ndarray
    plants: np.ndarray
    perms: np.ndarray

    @property
    def k(self) -> int:
        return self.plants.shape[1]

    @property
    def size(self) -> int:
        return self.plants.shape[0]

    @property
    def positions(self) -> np.ndarray:
        """0-based position of slot (j, i_j) in the k·t query sequence, shape (R, k)."""
        return np.arange(self.k)[None, :] * self.t + self.plants - 1

    @property
    def inverse(self) -> np.ndarray:
        """π⁻¹ as 0-based block indices: inverse[r, i] = j with π(j) = i."""
        inv = np.empty_like(self.perms)
        rows = np.arange(self.size)[:, None]
        inv[rows, self.perms] = np.arange(self.k)[None, :]
        return inv

    def queries(self, xs: np.ndarray | None) -> np.ndarray:
        """z⃗* (R × k·t): dummies with x_{π(j)} planted at (j, i_j); dummies only if xs is None."""
        q = self.dummies.reshape(self.size, -1).copy()
        if xs is not None:
            xs = np.asarray(xs, dtype=np.int64).reshape(self.size, self.k)
            rows = np.arange(self.size)[:, None]
            q[rows, self.positions] = xs[rows, self.perms]
        return q

    def extract(self, answers: np.ndarray) -> np.ndarray:
        """y answers aligned with x⃗: out[r, i] = y*_{π⁻¹(i)}."""
        rows = np.arange(self.size)[:, None]
        ystar = answers[rows, self.positions]          # indexed by block j
        return ystar[rows, self.inverse]

    def row(self, r: int) -> "FloodPlans":
        return FloodPlans(self.t, self.dummies[r:r + 1], self.plants[r:r + 1], self.perms[r:r + 1])

    def records(self, r: int, queries, answers, n: int, m: int) -> list[dict]:
        out = []
        k, t = self.k, self.t
        for j in range(k):
            for i in range(t):
                pos = j * t + i
                out.append({"slot": j + 1, "i": i + 1, "query": hexstr(int(queries[pos]), n),
                            "answer": hexstr(int(answers[pos]), m),
                            "planted": bool(i + 1 == self.plants[r, j])})
        return out


def make_plans(R: int, k: int, t: int, DU: InstanceDistribution,
               rng: np.random.Generator) -> FloodPlans:
    dummies = DU.sample(rng, (R, k, t))
    plants = rng.integers(1, t + 1, size=(R, k))
    perms = np.argsort(rng.random((R, k)), axis=1)
    return FloodPlans(t, dummies, plants, perms)


def _start(B, rng, size) -> RunBatch:
    if isinstance(B, RunBatch):
        if B.size != size:
            raise ConfigurationError("run batch size does not match the number of tuples")
        return B
    return B.start(rng, size)


def capped_length(k: int, t: int, max_calls: int | None) -> tuple[int, bool]:
    if max_calls is None or k * t <= max_calls:
        return t, False
    if max_calls < k:
        raise ConfigurationError("max_calls must allow at least one slot per block")
    return max_calls // k, True


@dataclass
class MemlessResult:
    xs: np.ndarray          # R × k real tuples
    answers: np.ndarray     # R × k, aligned with xs
    plans: FloodPlans
    t: int
    t_required: int
    capped: bool
    queries: np.ndarray = field(repr=False, default=None)
    raw_answers: np.ndarray = field(repr=False, default=None)
    runs: RunBatch | None = field(repr=False, default=None)

    def transcript(self, r: int = 0) -> list[tuple[int, int]]:
        return list(zip(self.xs[r].tolist(), self.answers[r].tolist()))

    @property
    def calls(self) -> int:
        return self.plans.k * self.t


def sim_memless(B, D: QueryTupleDistribution, ell: int, delta: float, xs,
                rng: np.random.Generator, max_calls: int | None = None,
                keep_queries: bool = False) -> MemlessResult:
    """Flood B with dummies from D_U and plant x⃗; one run per row of ``xs``.

    ``B`` is a solver (anything with ``start(rng, size)``) or a live
    :class:`RunBatch`. ``max_calls`` caps k·t (the distance guarantee then uses
    the capped t); the result records both lengths.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    R, k = xs.shape
    if k != D.k:
        raise ConfigurationError(f"expected {D.k}-tuples, got {k}")
    t_req = flood_length(ell, k, delta)
    t, capped = capped_length(k, t_req, max_calls)
    plans = make_plans(R, k, t, random_marginal(D), rng)
    q = plans.queries(xs)
    runs = _start(B, rng, R)
    ans = runs.answer_batch(q)
    res = MemlessResult(xs, plans.extract(ans), plans, t, t_req, capped, runs=runs)
    if keep_queries:
        res.queries, res.raw_answers = q, ans
    return res


def memless_distance_bound(ell: int, k: int, t: int) -> float:
    return k * math.sqrt(ell / (2.0 * t))


# --------------------------------------------------- ideal memoryless solver

class IdealMemorylessSolver:
    """Index-only solvers B′(j, x), one per run, fixed by an all-dummy flood.

    For run r, B′(j, x) answers x with the state recorded right before slot
    (j′, i_{j′}) of the dummy flood, at step index t(j′-1) + i_{j′}, where
    j′ = π⁻¹(j). Every call starts from a fresh copy of that state.
    """

    def __init__(self, source: RunBatch, plans: FloodPlans, base_calls: np.ndarray,
                 states: np.ndarray, rng: np.random.Generator):
        self.source = source
        self.plans = plans
        self.base_calls = base_calls
        self.states = states           # R × k × dim, indexed by block j′
        self.rng = rng
        self.m = source.m

    @property
    def size(self) -> int:
        return self.plans.size

    @property
    def k(self) -> int:
        return self.plans.k

    def _fork(self, rows: np.ndarray, blocks: np.ndarray) -> RunBatch:
        calls = self.base_calls[rows] + self.plans.positions[rows, blocks]
        return self.source.fork(self.states[rows, blocks], calls, self.rng)

    def answer_at(self, rows, js, xs) -> np.ndarray:
        """B′ of run ``rows[n]`` at memoryless index ``js[n]`` (1-based) on ``xs[n]``."""
        rows = np.asarray(rows, dtype=np.int64)
        js = np.asarray(js, dtype=np.int64)
        if js.size and (js.min() < 1 or js.max() > self.k):
            raise ConfigurationError("memoryless index out of range")
        blocks = self.plans.inverse[rows, js - 1]
        runs = self._fork(rows, blocks)
        return runs.answer_batch(np.asarray(xs, dtype=np.int64)[:, None])[:, 0]

    def respond(self, xs) -> np.ndarray:
        """Answers to the real tuples, aligned: out[r, i] = B′_r(i, x_i)."""
        xs = np.asarray(xs, dtype=np.int64).reshape(self.size, self.k)
        R, k = xs.shape
        rows = np.repeat(np.arange(R), k)
        js = np.tile(np.arange(1, k + 1), R)
        return self.answer_at(rows, js, xs.reshape(-1)).reshape(R, k)

    def index_values(self, P) -> np.ndarray:
        """Exact value of B′(j, ·) for every run and index, shape (R, k)."""
        R, k = self.size, self.k
        rows = np.repeat(np.arange(R), k)
        js = np.tile(np.arange(1, k + 1), R)
        runs = self._fork(rows, self.plans.inverse[rows, js - 1])
        return np.asarray(runs.values(P)).reshape(R, k)


def ideal_memoryless(B, D: QueryTupleDistribution, ell: int, delta: float,
                     rng: np.random.Generator, size: int = 1,
                     max_calls: int | None = None) -> IdealMemorylessSolver:
    """Build the ideal solver from an all-dummy flood; independent of any real x⃗."""
    k = D.k
    t, _ = capped_length(k, flood_length(ell, k, delta), max_calls)
    plans = make_plans(size, k, t, random_marginal(D), rng)
    runs = _start(B, rng, size)
    base = runs.calls.copy()
    _, states = runs.answer_batch(plans.queries(None), record=plans.positions)
    return IdealMemorylessSolver(runs, plans, base, states, rng)


# ------------------------------------------------------------ hybrid oracle

HYBRID_LIMITS = {"k": 2, "t": 4, "ell": 1, "support": 4}


def _canon(v: np.ndarray) -> bytes:
    idx = int(np.argmax(np.abs(v) > 1e-9))
    ph = v[idx] / abs(v[idx])
    w = np.round(v / ph, 10) + 0.0
    return w.tobytes()


def _outcomes(B: QuantumStatefulSolver, t: int, x: int, ket: np.ndarray):
    phi = (B.isometry(t, x) @ ket).reshape(B.dS, B.d_out)
    pr = np.sum(np.abs(phi) ** 2, axis=0)
    for o in np.flatnonzero(pr > 1e-13):
        yield int(o), float(pr[o]), phi[:, o] / math.sqrt(pr[o])


def _hybrid_blocks(B: QuantumStatefulSolver, D: QueryTupleDistribution, t: int, h: int):
    """Classical key -> unnormalised density block of the quantum part, for hybrid S_h."""
    k = D.k
    DU = random_marginal(D).exact()
    norm = 1.0 / (math.factorial(k) * t ** k)
    blocks: dict = {}
    for perm in itertools.permutations(range(k)):
        for plants in itertools.product(range(1, t + 1), repeat=k):
            for xs, px in D.exact():
                # branch: (obs, cur ket, recorded kets) -> [prob, cur, recorded]
                branches = {}
                for _, p0, s0 in B.initial_branches():
                    key = ((), _canon(s0), ())
                    if key in branches:
                        branches[key][0] += p0
                    else:
                        branches[key] = [p0, s0, ()]
                for g in range(1, k * t + 1):
                    j, i = (g - 1) // t, (g - 1) % t + 1
                    new: dict = {}

                    def add(obs, cur, rec, p):
                        key = (obs, _canon(cur), tuple(_canon(v) for v in rec))
                        if key in new:
                            new[key][0] += p
                        else:
                            new[key] = [p, cur, rec]

                    for (obs, _, _), (p, cur, rec) in branches.items():
                        if i == 1:
                            rec = rec + (cur,)
                        if i == plants[j]:
                            rec = rec + (cur,)
                            x = xs[perm[j]]
                            if j >= h:      # block j+1 > h: the real query sits in the slot
                                for o, po, nxt in _outcomes(B, g, x, cur):
                                    add(obs + (o,), nxt, rec, p * po)
                                continue
                            sides = [(o, po) for o, po, _ in _outcomes(B, g, x, cur)]
                            for o, po in sides:
                                for z, pz in DU.items():
                                    for _, pd, nxt in _outcomes(B, g, z, cur):
                                        add(obs + (o,), nxt, rec, p * po * pz * pd)
                            continue
                        for z, pz in DU.items():
                            for _, pd, nxt in _outcomes(B, g, z, cur):
                                add(obs, nxt, rec, p * pz * pd)
                    branches = new
                for (obs, _, _), (p, cur, rec) in branches.items():
                    ket = np.array([1.0 + 0j])
                    for v in rec:
                        ket = np.kron(ket, v)
                    ckey = (perm, plants, tuple(xs), obs)
                    mat = p * px * norm * np.outer(ket, ket.conj())
                    if ckey in blocks:
                        blocks[ckey] = blocks[ckey] + mat
                    else:
                        blocks[ckey] = mat
    return blocks


def hybrid_distance(B: QuantumStatefulSolver, D: QueryTupleDistribution, t: int,
                    hs: Sequence[int] | None = None) -> dict:
    """Exact trace distances TD(S_h, S_{h+1}) between consecutive hybrids.

    Hybrid S_h plants the real queries only in blocks j > h; for j ≤ h the
    slot holds a dummy and the answer to x_{π(j)} is produced on the side from
    the state right before that slot. Each hybrid outputs (π, i⃗, x⃗, the
    (y, ŷ) answers) classically and the states at the start of every block and
    right before every planted slot quantumly.
    """
    k = D.k
    lim = HYBRID_LIMITS
    if k > lim["k"] or t > lim["t"] or B.ell > lim["ell"]:
        raise ConfigurationError(f"hybrid oracle limited to k ≤ 2, t ≤ 4, ℓ ≤ 1")
    if len(random_marginal(D).exact()) > lim["support"]:
        raise ConfigurationError("hybrid oracle limited to |supp D_U| ≤ 4")
    hs = list(range(k)) if hs is None else list(hs)
    cache = {}

    def rho(h):
        if h not in cache:
            cache[h] = _hybrid_blocks(B, D, t, h)
        return cache[h]

    def td(a, b):
        keys = set(a) | set(b)
        dim = (B.dS ** (2 * k))
        zero = np.zeros((dim, dim), dtype=complex)
        return 0.5 * sum(trace_norm(a.get(c, zero) - b.get(c, zero)) for c in keys)

    steps = [{"h": h, "td": td(rho(h), rho(h + 1)),
              "bound": math.sqrt(B.ell / (2.0 * t))} for h in hs]
    total = td(rho(0), rho(k))
    return {"steps": steps, "total": total, "total_bound": memless_distance_bound(B.ell, k, t)}


def deterministic_memory_solvers(n: int = 1, m: int = 1, ell: int = 1):
    """Every deterministic ℓ-bit solver on n-bit instances with index-free steps."""
    from .solver import ClassicalStatefulSolver
    keys = [(s, x) for s in range(1 << ell) for x in range(1 << n)]
    choices = [(y, s2) for y in range(1 << m) for s2 in range(1 << ell)]
    for table in itertools.product(choices, repeat=len(keys)):
        tab = dict(zip(keys, table))
        yield ClassicalStatefulSolver(f"det-{table}", ell, m,
                                      lambda t, x, s, c, tab=tab: tab[(s, x)],
                                      t_class=lambda t: 0, n=n)
