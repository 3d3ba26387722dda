"""Non-interactive assumptions (G, V, c) at desk scale.

Bit strings are Python ints; an ``n``-bit string is an int in ``[0, 2**n)``.
``BOTTOM`` (-1) is the reserved "no solution" value: every verifier rejects it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError

BOTTOM = -1
EXACT_D_LIMIT = 20


@dataclass(frozen=True)
class ImageVerifier:
    check: Callable[[int, int], bool]   # K(x, y)
    bound: int                          # k


@dataclass(frozen=True, eq=False)
class Assumption:
    name: str
    d: int
    n: int
    m: int
    c: float
    generate: Callable[[int], int]
    verify_fn: Callable[[int, int], bool]
    image: ImageVerifier | None = None
    solve: Callable[[int], int] | None = None   # trapdoor: a valid answer for x, or BOTTOM
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("d", "n", "m"):
            if getattr(self, attr) < 0:
                raise ConfigurationError(f"{attr} must be non-negative")
        if not 0.0 <= self.c <= 1.0:
            raise ConfigurationError("threshold c must lie in [0, 1]")

    def verify(self, r: int, y: int) -> bool:
        if y == BOTTOM:
            return False
        return bool(self.verify_fn(r, y))

    def descriptor(self) -> dict:
        return {"name": self.name, **dict(self.params)}

    @cached_property
    def generated(self) -> np.ndarray:
        """generate(r) for every r (exact enumeration, d ≤ 20)."""
        if self.d > EXACT_D_LIMIT:
            raise ConfigurationError(f"d = {self.d} too large for exact enumeration")
        return np.array([self.generate(r) for r in range(1 << self.d)], dtype=np.int64)

    @cached_property
    def accept_table(self) -> np.ndarray:
        """Boolean table ``[r, y]`` of verify(r, y)."""
        if self.m > 12:
            raise ConfigurationError("solution space too large to tabulate")
        return np.array([[self.verify(r, y) for y in range(1 << self.m)]
                         for r in range(1 << self.d)], dtype=bool)

    @cached_property
    def instance_weights(self) -> dict[int, np.ndarray]:
        """For each reachable instance x: Pr_r[G(r)=x and V(r, y)=1] as a vector over y."""
        out: dict[int, np.ndarray] = {}
        scale = 1.0 / (1 << self.d)
        for r, x in enumerate(self.generated):
            x = int(x)
            if x not in out:
                out[x] = np.zeros(1 << self.m)
            out[x] += self.accept_table[r] * scale
        return out

    def valid_solutions(self, x: int) -> list[int]:
        """Y_x = {y : K(x, y) = 1}."""
        if self.image is None:
            raise ConfigurationError(f"{self.name} has no image verifier")
        return [y for y in range(1 << self.m) if self.image.check(x, y)]

    def check_image(self) -> None:
        """Exhaustive check of the image-verifier contract."""
        if self.image is None:
            return
        for r in range(1 << self.d):
            x = self.generate(r)
            for y in range(1 << self.m):
                if self.verify(r, y) and not self.image.check(x, y):
                    raise ConfigurationError(f"V accepts ({r}, {y}) but K rejects it")
        for x in set(int(v) for v in self.generated):
            if len(self.valid_solutions(x)) > self.image.bound:
                raise ConfigurationError(f"instance {x} has more than k valid solutions")

    def sample_instance(self, rng: np.random.Generator) -> tuple[int, int]:
        r = int(rng.integers(0, 1 << self.d))
        return r, self.generate(r)


@dataclass(frozen=True)
class SolverFunction:
    """A randomised map x -> y given by its output distribution."""
    m: int
    distribution: Callable[[int], Mapping[int, float]]

    def sample(self, x: int, rng: np.random.Generator) -> int:
        dist = self.distribution(x)
        ys = list(dist)
        if len(ys) == 1:
            return ys[0]
        p = np.array([dist[y] for y in ys], dtype=float)
        i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        return ys[min(i, len(ys) - 1)]

    @classmethod
    def deterministic(cls, m: int, fn: Callable[[int], int]) -> "SolverFunction":
        return cls(m, lambda x: {fn(x): 1.0})

    @classmethod
    def noisy(cls, m: int, fn: Callable[[int], int], flip: float) -> "SolverFunction":
        """Answer fn(x), with the lowest bit flipped with probability ``flip``."""
        def dist(x):
            y = fn(x)
            if flip == 0.0:
                return {y: 1.0}
            return {y: 1.0 - flip, y ^ 1: flip}
        return cls(m, dist)

    @classmethod
    def uniform(cls, m: int) -> "SolverFunction":
        p = 1.0 / (1 << m)
        return cls(m, lambda x: {y: p for y in range(1 << m)})


def value_of_function(P: Assumption, f: SolverFunction, mode="exact",
                      trials: int = 10_000, seed: int = 0) -> tuple[float, float, float]:
    """(value, advantage, stderr) of ``f`` against ``P``.

    ``mode="exact"`` enumerates all r and the output distribution of ``f``;
    ``mode="monte_carlo"`` samples ``trials`` pairs (r, f(G(r))).
    """
    if mode == "exact":
        if P.d > EXACT_D_LIMIT:
            raise ConfigurationError(f"exact value needs d ≤ {EXACT_D_LIMIT}")
        total = 0.0
        cache: dict[int, Mapping[int, float]] = {}
        for r in range(1 << P.d):
            x = P.generate(r)
            if x not in cache:
                cache[x] = f.distribution(x)
            total += sum(p for y, p in cache[x].items() if P.verify(r, y))
        value = total / (1 << P.d)
        return value, abs(value - P.c), 0.0
    if mode != "monte_carlo":
        raise ConfigurationError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(trials):
        r, x = P.sample_instance(rng)
        wins += P.verify(r, f.sample(x, rng))
    value = wins / trials
    return value, abs(value - P.c), math.sqrt(max(value * (1 - value), 1e-12) / trials)


# ---------------------------------------------------------------- catalog

def _perm(bits: int, seed: int, label: str) -> np.ndarray:
    from .rng import stream
    return stream(seed, "table", label, bits).permutation(1 << bits)


def _balanced_bits(bits: int, seed: int, label: str) -> np.ndarray:
    from .rng import stream
    b = np.zeros(1 << bits, dtype=np.int64)
    b[: 1 << (bits - 1)] = 1
    return stream(seed, "table", label, bits).permutation(b)


def toy_gl(n_f: int = 4, seed: int = 0) -> Assumption:
    """Goldreich-Levin bit: instance (f(x), r), answer <x, r> mod 2."""
    if not 1 <= n_f <= 8:
        raise ConfigurationError("toy-GL needs 1 ≤ n_f ≤ 8")
    f = _perm(n_f, seed, "gl-f")
    finv = np.argsort(f)
    mask = (1 << n_f) - 1

    def generate(r):
        return (int(f[r >> n_f]) << n_f) | (r & mask)

    def verify(r, y):
        return y == (bin((r >> n_f) & r & mask).count("1") & 1)

    def solve(x):
        return bin(int(finv[x >> n_f]) & x & mask).count("1") & 1

    return Assumption("toy-GL", 2 * n_f, 2 * n_f, 1, 0.5, generate, verify,
                      ImageVerifier(lambda x, y: y in (0, 1), 2), solve,
                      {"n_f": n_f, "seed": seed})


def toy_gl_inversion(n_f: int = 4, seed: int = 0) -> Assumption:
    """Invert the toy-GL permutation f: instance f(x), answer x."""
    f = _perm(n_f, seed, "gl-f")
    finv = np.argsort(f)
    return Assumption("toy-GL-invert", n_f, n_f, n_f, 0.0,
                      lambda r: int(f[r]), lambda r, y: y == r,
                      ImageVerifier(lambda x, y: int(f[y]) == x, 1),
                      lambda x: int(finv[x]), {"n_f": n_f, "seed": seed})


def toy_inject_owf(d: int = 3, n: int = 5, seed: int = 0) -> Assumption:
    """Invert an injective table g: {0,1}^d -> {0,1}^n."""
    if n < d:
        raise ConfigurationError("an injective table needs n ≥ d")
    g = _perm(n, seed, "owf-g")[: 1 << d]
    ginv = {int(v): i for i, v in enumerate(g)}
    return Assumption("toy-inject-OWF", d, n, d, 0.0,
                      lambda r: int(g[r]), lambda r, y: y == r,
                      ImageVerifier(lambda x, y: int(g[y]) == x, 1),
                      lambda x: ginv.get(x, BOTTOM), {"d": d, "n": n, "seed": seed})


def toy_bigsearch(n: int = 6, seed: int = 0) -> Assumption:
    """Search with a random half of all m-bit strings accepted; no image verifier."""
    from .rng import stream
    perm = _perm(n, seed, "big-g")
    inv = np.argsort(perm)
    table = stream(seed, "table", "big-v", n).random((1 << n, 1 << n)) < 0.5
    table[np.arange(1 << n), 0] = True  # every instance has a solution

    def solve(x):
        return int(np.argmax(table[inv[x]]))

    return Assumption("toy-bigsearch", n, n, n, 0.0,
                      lambda r: int(perm[r]), lambda r, y: bool(table[r, y]),
                      None, solve, {"n": n, "seed": seed})


def toy_decision(n: int = 3, seed: int = 0) -> Assumption:
    """Balanced decision: instance perm(w), answer b(w), exactly half the b(w) are 1."""
    perm = _perm(n, seed, "dec-g")
    inv = np.argsort(perm)
    b = _balanced_bits(n, seed, "dec-b")
    return Assumption("toy-decision", n, n, 1, 0.5,
                      lambda r: int(perm[r]), lambda r, y: y == int(b[r]),
                      ImageVerifier(lambda x, y: y in (0, 1), 2),
                      lambda x: int(b[inv[x]]), {"n": n, "seed": seed})


def toy_salted_decision(n: int = 3, s: int = 3, seed: int = 0) -> Assumption:
    """toy-decision with an s-bit salt appended: instance (perm(w), salt), answer b(w)."""
    perm = _perm(n, seed, "dec-g")
    inv = np.argsort(perm)
    b = _balanced_bits(n, seed, "dec-b")
    mask = (1 << s) - 1
    return Assumption("toy-salted-decision", n + s, n + s, 1, 0.5,
                      lambda r: (int(perm[r >> s]) << s) | (r & mask),
                      lambda r, y: y == int(b[r >> s]),
                      ImageVerifier(lambda x, y: y in (0, 1), 2),
                      lambda x: int(b[inv[x >> s]]), {"n": n, "s": s, "seed": seed})


def toy_single(n: int = 1) -> Assumption:
    """One fixed instance 0 whose only solution is 0 (d = 0)."""
    return Assumption("toy-single", 0, n, 1, 0.5, lambda r: 0, lambda r, y: y == 0,
                      ImageVerifier(lambda x, y: y in (0, 1), 2), lambda x: 0, {"n": n})


_CATALOG = {
    "toy-GL": toy_gl,
    "toy-GL-invert": toy_gl_inversion,
    "toy-inject-OWF": toy_inject_owf,
    "toy-bigsearch": toy_bigsearch,
    "toy-decision": toy_decision,
    "toy-salted-decision": toy_salted_decision,
    "toy-single": toy_single,
}


def builtin_assumptions(seed: int = 0) -> dict[str, Assumption]:
    out = {}
    for name, make in _CATALOG.items():
        out[name] = make() if name == "toy-single" else make(seed=seed)
    return out


def from_descriptor(desc: Mapping) -> Assumption:
    """Rebuild an assumption from :meth:`Assumption.descriptor` output."""
    desc = dict(desc)
    name = desc.pop("name")
    if name not in _CATALOG:
        raise ConfigurationError(f"unknown assumption {name!r}")
    return _CATALOG[name](**desc)
