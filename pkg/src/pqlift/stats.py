"""Distances between distributions: exact tables and plug-in estimates."""
from __future__ import annotations

import math
from collections import Counter
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np


def exact_tv(p: Mapping[Hashable, float], q: Mapping[Hashable, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def histogram(samples: Iterable[Hashable], bin_fn: Callable | None = None) -> Counter:
    return Counter(bin_fn(s) if bin_fn else s for s in samples)


def plugin_tv(a: Iterable[Hashable], b: Iterable[Hashable], bin_fn: Callable | None = None):
    """Half-L1 distance of two empirical histograms and its binomial error.

    The error is ½ Σ_bins (σ_a + σ_b) with σ = √(p(1-p)/N) per bin, a
    conservative bound on the standard deviation of the plug-in estimate.
    """
    ha, hb = histogram(a, bin_fn), histogram(b, bin_fn)
    na, nb = sum(ha.values()), sum(hb.values())
    dist, err = 0.0, 0.0
    for k in set(ha) | set(hb):
        pa, pb = ha.get(k, 0) / na, hb.get(k, 0) / nb
        dist += abs(pa - pb)
        err += math.sqrt(pa * (1 - pa) / na) + math.sqrt(pb * (1 - pb) / nb)
    return 0.5 * dist, 0.5 * err


def tv_to_exact(samples: Iterable[Hashable], exact: Mapping[Hashable, float],
                bin_fn: Callable | None = None):
    """Plug-in distance of samples from an exact distribution, with its error."""
    h = histogram(samples, bin_fn)
    n = sum(h.values())
    ex: dict = {}
    for k, p in exact.items():
        kb = bin_fn(k) if bin_fn else k
        ex[kb] = ex.get(kb, 0.0) + p
    dist, err = 0.0, 0.0
    for k in set(h) | set(ex):
        pe = h.get(k, 0) / n
        dist += abs(pe - ex.get(k, 0.0))
        err += math.sqrt(pe * (1 - pe) / n)
    return 0.5 * dist, 0.5 * err


def mean_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def proportion(k: int, n: int) -> tuple[float, float]:
    p = k / n
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)
