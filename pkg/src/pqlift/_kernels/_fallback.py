"""Pure-numpy kernels. Vectorised across independent runs, sequential in steps.

Semantics (shared with the compiled kernels, draw for draw):

* every measurement consumes exactly one uniform ``u = uniform(key, counter)``
  of its run and then increments the run's counter;
* outcome probabilities at or below ``P_FLOOR`` are treated as zero; the
  outcome is the first index whose running sum exceeds ``u * total``, falling
  back to the last non-zero index when round-off leaves none.
"""
from __future__ import annotations

import math

import numpy as np

from ..rng import uniforms

P_FLOOR = 1e-14


def _draw(rng_keys, counters, rows):
    u = uniforms(rng_keys[rows], counters[rows])
    counters[rows] += np.uint64(1)
    return u


def _pick(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample one column per row of ``probs`` (rows need not be normalised)."""
    p = np.where(probs > P_FLOOR, probs, 0.0)
    cs = np.cumsum(p, axis=1)
    target = u * cs[:, -1]
    idx = np.sum(cs <= target[:, None], axis=1)
    nz = p > 0
    last = p.shape[1] - 1 - np.argmax(nz[:, ::-1], axis=1)
    return np.minimum(idx, last)


def _pick_binary(p_yes: np.ndarray, p_no: np.ndarray, u: np.ndarray) -> np.ndarray:
    """True where outcome 'yes' (index 0) is drawn."""
    return _pick(np.stack([p_yes, p_no], axis=1), u) == 0


def walk_raw(bank, keys, psi, d_out, rng_keys, counters, record):
    """Advance purified solver runs through a fixed query sequence.

    bank     complex[K, D, dS]  isometries (unitary columns with Y,Ŷ = 0)
    keys     int64[R, n]        bank index of each step
    psi      complex[R, dS]     current states, updated in place
    record   int64[R, nrec]     steps before which to copy the state (n = final)
    returns  outcomes int64[R, n] (joint Y·Ŷ value), states complex[R, nrec, dS]
    """
    R, n = keys.shape
    dS = psi.shape[1]
    rows = np.arange(R)
    out = np.zeros((R, n), dtype=np.int64)
    nrec = record.shape[1]
    states = np.zeros((R, nrec, dS), dtype=complex)
    for s in range(n + 1):
        hit = record == s
        if hit.any():
            r, c = np.nonzero(hit)
            states[r, c] = psi[r]
        if s == n:
            break
        w = bank[keys[:, s]]
        phi = np.einsum("rds,rs->rd", w, psi).reshape(R, dS, d_out)
        pr = np.sum(np.abs(phi) ** 2, axis=1)
        u = _draw(rng_keys, counters, rows)
        o = _pick(pr, u)
        out[:, s] = o
        psi[:] = phi[rows, :, o] / np.sqrt(pr[rows, o])[:, None]
    return out, states


def _valest(V, Vh, level, levels, psi, rows, rng_keys, counters):
    c = psi[rows] @ Vh.T
    w = np.abs(c) ** 2
    L = len(levels)
    pl = np.zeros((len(rows), L))
    for a in range(L):
        pl[:, a] = w[:, level == a].sum(axis=1)
    u = _draw(rng_keys, counters, rows)
    a = _pick(pl, u)
    keep = level[None, :] == a[:, None]
    c = np.where(keep, c, 0.0) / np.sqrt(pl[np.arange(len(rows)), a])[:, None]
    psi[rows] = c @ V.T
    return a


def valest_exact(V, level, levels, psi, rng_keys, counters):
    """Born-weighted eigen-level measurement of E on every run (in place)."""
    rows = np.arange(psi.shape[0])
    a = _valest(V, V.conj().T, level, levels, psi, rows, rng_keys, counters)
    return levels[a]


def round_cap(eps: float) -> int:
    return 64 * int(math.ceil(1.0 / eps))


def walk_persisted(V, level, levels, ubank, gbank, xkeys, psi, calls, eta,
                   rng_keys, counters, record):
    """Advance persisted solvers: ValEst, Π_x, Repair, ValEst per query.

    V, level, levels   eigenvectors of E (columns), their level index, level values
    ubank   complex[X, D, D]   step unitaries B̂_x
    gbank   int64[X, D]        solution-group id of each output basis state of B̂_x
    xkeys   int64[R, n]        bank index of each query
    psi     complex[R, D]      states (in place); calls int64[R] step counters (in place)
    returns dict of per-step arrays and the recorded states.
    """
    R, n = xkeys.shape
    D = psi.shape[1]
    Vh = V.conj().T
    all_rows = np.arange(R)
    res = {
        "group": np.zeros((R, n), dtype=np.int64),
        "p_before": np.zeros((R, n)),
        "p_after": np.zeros((R, n)),
        "rounds": np.zeros((R, n), dtype=np.int64),
        "failed": np.zeros((R, n), dtype=np.uint8),
    }
    nrec = record.shape[1]
    states = np.zeros((R, nrec, D), dtype=complex)
    for s in range(n + 1):
        hit = record == s
        if hit.any():
            r, c = np.nonzero(hit)
            states[r, c] = psi[r]
        if s == n:
            break
        a0 = _valest(V, Vh, level, levels, psi, all_rows, rng_keys, counters)
        p_prev = levels[a0]
        res["p_before"][:, s] = p_prev
        U = ubank[xkeys[:, s]]
        grp = gbank[xkeys[:, s]]
        phi = np.einsum("rij,rj->ri", U, psi)
        w = np.abs(phi) ** 2
        G = int(grp.max()) + 1
        gp = np.zeros((R, G))
        for g in range(G):
            gp[:, g] = np.where(grp == g, w, 0.0).sum(axis=1)
        u = _draw(rng_keys, counters, all_rows)
        g = _pick(gp, u)
        res["group"][:, s] = g
        inside = grp == g[:, None]
        phi = np.where(inside, phi, 0.0) / np.sqrt(gp[all_rows, g])[:, None]
        psi[:] = np.einsum("rji,rj->ri", U.conj(), phi)
        # repair
        i = (calls + 1).astype(float)
        eps = eta / (i * math.pi) ** 2
        caps = np.array([round_cap(e) for e in eps], dtype=np.int64)
        good = np.abs(levels[None, :] - p_prev[:, None]) < eps[:, None]   # R × L
        good_cols = good[:, level]                                          # R × D
        active = all_rows.copy()
        rounds = np.zeros(R, dtype=np.int64)
        while active.size:
            c = psi[active] @ Vh.T
            w = np.abs(c) ** 2
            gc = good_cols[active]
            pg = np.where(gc, w, 0.0).sum(axis=1)
            pb = np.where(gc, 0.0, w).sum(axis=1)
            u = _draw(rng_keys, counters, active)
            yes = _pick_binary(pg, pb, u)
            keep = np.where(yes[:, None], gc, ~gc)
            norm = np.sqrt(np.where(yes, pg, pb))
            psi[active] = (np.where(keep, c, 0.0) / norm[:, None]) @ V.T
            active = active[~yes]
            if not active.size:
                break
            rounds[active] += 1
            Ua = U[active]
            ins = inside[active]
            phi = np.einsum("rij,rj->ri", Ua, psi[active])
            w = np.abs(phi) ** 2
            pin = np.where(ins, w, 0.0).sum(axis=1)
            pout = np.where(ins, 0.0, w).sum(axis=1)
            u = _draw(rng_keys, counters, active)
            yes = _pick_binary(pin, pout, u)
            keep = np.where(yes[:, None], ins, ~ins)
            norm = np.sqrt(np.where(yes, pin, pout))
            phi = np.where(keep, phi, 0.0) / norm[:, None]
            psi[active] = np.einsum("rji,rj->ri", Ua.conj(), phi)
            over = rounds[active] >= caps[active]
            if over.any():
                res["failed"][active[over], s] = 1
                active = active[~over]
        res["rounds"][:, s] = rounds
        a1 = _valest(V, Vh, level, levels, psi, all_rows, rng_keys, counters)
        res["p_after"][:, s] = levels[a1]
        calls += 1
    return res, states
