"""Experiment suites shared by the command line and the acceptance tests.

Each suite takes a resolved configuration and returns ``(records, summary)``.
Records are one dict per trial, step or instance; the summary carries the
resolved configuration and a list of checks ``{name, value, threshold, pass}``.
All randomness is drawn from named streams of the master seed. Work is cut into
fixed-size chunks, each with its own stream, so the output does not depend on
the number of worker threads.
"""
from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels
from .assumption import builtin_assumptions, toy_decision, toy_gl, toy_inject_owf
from .errors import ConfigurationError
from .linalg import TAU_NUM
from .memoryless import (QueryTupleDistribution, deterministic_memory_solvers, fresh_instances,
                         gl_correlated_pairs,
                         hybrid_distance, ideal_memoryless, memless_distance_bound, sim_memless)
from .persistence import (PersistentSolver, ValueOperator, build_solution_measurement, initial_ket,
                          measure_solution, repair, val_est)
from .pluginlemma import (bundled_instances, exhaustive_sweep, load_instance, random_experiment,
                          report_row)
from .records import hexstr, write_json, write_jsonl
from .reduction import catalog_reduction, lift, naive_reuse, run_classical, solve_once, solve_stream
from .rng import stream
from .solver import (AdaptiveEcho, ConstantQuery, RandomInstances, RepeatedPrefix, check_persistence,
                     noisy_solver, one_shot_value, perfect_solver, table_solver, zoo, zoo_hash,
                     index_parity_solver)
from .stateless import (combined_calls, induced_stateless, padding_length, planted_steps, product_distribution,
                        sim_combined, sim_stateless)
from .stats import exact_tv, mean_stderr, plugin_tv, proportion

CHUNK = 1000

DEFAULTS: dict[str, dict] = {
    "plugin-verify": {"instances": [], "bundled": True, "sweep": True, "sweep_max_t": 3,
                      "sweep_max_ell": 1, "random_instances": 100, "random_max_t": 3,
                      "random_max_ell": 2},
    "persist-demo": {"parts": ["unbiased", "projective", "persistence"],
                     "assumptions": ["toy-GL", "toy-inject-OWF"],
                     "solvers": ["perfect", "noisy", "use-once", "duplicate-detecting"],
                     "backends": ["exact", "sampled"], "trials": 10_000, "eta": 0.1,
                     "epsilons": [0.1, 0.05], "persistence_trials": 2000, "steps": 50},
    "memless-sim": {"parts": ["distance", "hybrid"], "trials": 100_000, "k": 2, "ell": 1,
                    "delta": 0.2, "hybrid_t": [1, 2], "hybrid_stride": 4},
    "stateless-sim": {"parts": ["collapse", "shuffle"], "trials": 2000, "delta": 0.2,
                      "shuffle_trials": 20_000, "k": 2},
    "lift-run": {"parts": ["headline", "durable"], "reduction": "gl-inverter", "trials": 1000,
                 "eps": 0.5, "max_calls": 2000, "stream_size": 300, "invocations": 10,
                 "stream_solver": "use-once", "headline_solver": "duplicate-detecting"},
}

# the per-suite key that ``--trials`` overrides
TRIAL_KEY = {"plugin-verify": "random_instances", "persist-demo": "trials",
             "memless-sim": "trials", "stateless-sim": "trials", "lift-run": "trials"}


def resolve(name: str, overrides: dict | None = None, seed: int = 0,
            trials: int | None = None) -> dict:
    if name not in DEFAULTS:
        raise ConfigurationError(f"unknown subcommand {name!r}")
    cfg = copy.deepcopy(DEFAULTS[name])
    for k, v in (overrides or {}).items():
        if k not in cfg:
            raise ConfigurationError(f"{name}: unknown config key {k!r}")
        cfg[k] = v
    if trials is not None:
        if trials < 1:
            raise ConfigurationError("--trials must be positive")
        cfg[TRIAL_KEY[name]] = int(trials)
    cfg["seed"] = int(seed)
    cfg["subcommand"] = name
    return cfg


def _check(name: str, value, threshold, ok: bool, **extra) -> dict:
    return {"name": name, "value": value, "threshold": threshold, "pass": bool(ok), **extra}


def _chunks(total: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def _map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _within(diff: float, sigma: float) -> bool:
    return abs(diff) <= max(3.0 * sigma, TAU_NUM)


# ------------------------------------------------------------ plugin-verify

def plugin_verify(cfg: dict, threads: int = 1):
    seed = cfg["seed"]
    named = []
    if cfg["bundled"]:
        named += [("bundled", load_instance(p)) for p in bundled_instances()]
    named += [("file", load_instance(p)) for p in cfg["instances"]]
    if cfg["sweep"]:
        named += [("sweep", e) for e in exhaustive_sweep(cfg["sweep_max_t"], cfg["sweep_max_ell"])]
    rng = stream(seed, "plugin-random")
    named += [("random", random_experiment(rng, cfg["random_max_t"], cfg["random_max_ell"],
                                           name=f"random-{i}"))
              for i in range(cfg["random_instances"])]
    rows = _map(lambda item: {"group": item[0], **report_row(item[1])}, named, threads)
    checks = []
    groups = sorted({r["group"] for r in rows})
    for g in groups:
        sel = [r for r in rows if r["group"] == g]
        ratio = max((r["td"] / r["bound"] for r in sel if r["bound"] > 0), default=0.0)
        checks.append(_check(f"plugin-{g}", sum(r["pass"] for r in sel), len(sel),
                             all(r["pass"] for r in sel), worst_ratio=ratio))
    return rows, {"checks": checks, "instances": len(rows)}


# ------------------------------------------------------------- persist-demo

def _zoo_solver(P, name):
    z = zoo(P)
    if name not in z:
        raise ConfigurationError(f"unknown zoo solver {name!r}")
    return z[name]


def _unbiased(cfg, threads):
    records, checks = [], []
    catalog = builtin_assumptions(0)
    for aname in cfg["assumptions"]:
        if aname not in catalog:
            raise ConfigurationError(f"unknown assumption {aname!r}")
        P = catalog[aname]
        for sname in cfg["solvers"]:
            B = _zoo_solver(P, sname)
            target = one_shot_value(P, B)
            for backend in cfg["backends"]:
                S = PersistentSolver(P, B, cfg["eta"], backend=backend)

                def work(span, S=S, tag=(aname, sname, backend)):
                    rng = stream(cfg["seed"], "unbiased", *tag, span[0])
                    return S.start(rng, span[1] - span[0]).p0

                p0 = np.concatenate(_map(work, _chunks(cfg["trials"]), threads))
                mean, se = mean_stderr(p0)
                ok = _within(mean - target, se)
                records += [{"part": "unbiased", "assumption": aname, "solver": sname,
                             "backend": backend, "trial": i, "p0": float(v)}
                            for i, v in enumerate(p0)]
                checks.append(_check(f"unbiased/{aname}/{sname}/{backend}", mean, target, ok,
                                     stderr=se, trials=len(p0)))
    return records, checks


def _projective(cfg, threads):
    """Consecutive ValEst agreement and repair, on the use-once solver for toy-GL."""
    P = toy_gl()
    B = _zoo_solver(P, "use-once")
    op = ValueOperator(P, B)
    records, checks = [], []
    for eps in cfg["epsilons"]:
        for backend in cfg["backends"]:
            def work(span, eps=eps, backend=backend):
                rng = stream(cfg["seed"], "projective", backend, repr(eps), span[0])
                out = []
                for i in range(*span):
                    _, ket = initial_ket(B, rng)
                    ket, p1 = val_est(op, ket, eps, backend, rng)
                    _, p2 = val_est(op, ket, eps, backend, rng)
                    # repair after a disturbing Π_x measurement
                    _, ket = initial_ket(B, rng)
                    ket, p = val_est(op, ket, eps, backend, rng)
                    x = int(P.generated[rng.integers(0, 1 << P.d)])
                    sol = build_solution_measurement(P, x, B)
                    g, ket = measure_solution(sol, ket, rng)
                    ket, rounds, failed = repair(op, ket, g, sol, p, eps, rng)
                    _, p3 = val_est(op, ket, eps, backend, rng)
                    out.append({"part": "projective", "backend": backend, "eps": eps, "trial": i,
                                "p_first": p1, "p_second": p2, "p_repair_ref": p, "p_repaired": p3,
                                "rounds": rounds, "repair_failed": failed})
                return out

            rows = [r for chunk in _map(work, _chunks(cfg["trials"]), threads) for r in chunk]
            records += rows
            n = len(rows)
            f2, s2 = proportion(sum(abs(r["p_first"] - r["p_second"]) >= eps for r in rows), n)
            f3, s3 = proportion(sum(abs(r["p_repair_ref"] - r["p_repaired"]) >= eps for r in rows), n)
            bound2 = 0.0 if backend == "exact" else eps
            checks.append(_check(f"almost-projective/{backend}/eps={eps}", f2, bound2,
                                 f2 <= bound2 + 3 * s2 if backend != "exact" else f2 == 0.0,
                                 stderr=s2, trials=n))
            checks.append(_check(f"repair/{backend}/eps={eps}", f3, eps, f3 <= eps + 3 * s3,
                                 stderr=s3, trials=n,
                                 cap_hits=sum(bool(r["repair_failed"]) for r in rows)))
    return records, checks


def _persistence(cfg, threads):
    P = toy_gl()
    B = _zoo_solver(P, "use-once")
    eta = cfg["eta"]
    strategies = [RandomInstances(P), RepeatedPrefix(P, P.params["n_f"]), AdaptiveEcho(P),
                  ConstantQuery(P.n, int(P.generated[0]))]
    records, checks = [], []
    for label, solver in (("persisted", PersistentSolver(P, B, eta)), ("raw", B)):
        rng = stream(cfg["seed"], "persistence", label)
        res = check_persistence(P, solver, strategies, eta, cfg["persistence_trials"], rng,
                                steps=cfg["steps"])
        for s in res["per_strategy"]:
            records.append({"part": "persistence", "solver": label, **s})
        dev = res["max_deviations"]
        records += [{"part": "persistence-run", "solver": label, "run": i, "max_deviation": float(d)}
                    for i, d in enumerate(dev)]
        f, se = res["failure_frequency"], res["stderr"]
        if label == "persisted":
            checks.append(_check("persistence/use-once", f, eta, f <= eta + 3 * se,
                                 stderr=se, runs=res["runs"]))
        else:
            checks.append(_check("persistence/raw-control", f, eta, True, stderr=se,
                                 runs=res["runs"], informational=True))
    return records, checks


def persist_demo(cfg: dict, threads: int = 1):
    parts = {"unbiased": _unbiased, "projective": _projective, "persistence": _persistence}
    records, checks = [], []
    for part in cfg["parts"]:
        if part not in parts:
            raise ConfigurationError(f"persist-demo: unknown part {part!r}")
        r, c = parts[part](cfg, threads)
        records += r
        checks += c
    return records, {"checks": checks}


# -------------------------------------------------------------- memless-sim

def _gl_bin(P, h):
    """(correct_1, ..., correct_k, h(prefix of x_1)): a coarsening of the transcript."""
    nf = P.params["n_f"]

    def fn(tr):
        xs, ys = tr
        ok = tuple(int(P.solve(x) == y) for x, y in zip(xs, ys))
        return ok + (int(h[xs[0] >> nf]),)
    return fn


def _memless_distance(cfg, threads):
    P = toy_gl()
    B = _zoo_solver(P, "duplicate-detecting")
    k, ell, delta = cfg["k"], cfg["ell"], cfg["delta"]
    D = gl_correlated_pairs(P, k)

    def work(span):
        rng = stream(cfg["seed"], "memless", span[0])
        R = span[1] - span[0]
        xs = D.sample_many(rng, R)
        sim = sim_memless(B, D, ell, delta, xs, rng)
        ideal = ideal_memoryless(B, D, ell, delta, rng, size=R)
        return xs, sim.answers, ideal.respond(xs), sim.t

    parts = _map(work, _chunks(cfg["trials"], 10_000), threads)
    xs = np.concatenate([p[0] for p in parts])
    a_sim = np.concatenate([p[1] for p in parts])
    a_ideal = np.concatenate([p[2] for p in parts])
    t = parts[0][3]
    sim_tr = [(tuple(x), tuple(y)) for x, y in zip(xs.tolist(), a_sim.tolist())]
    ideal_tr = [(tuple(x), tuple(y)) for x, y in zip(xs.tolist(), a_ideal.tolist())]
    h = zoo_hash(P, P.n - P.params["n_f"], 0)
    dist, err = plugin_tv(sim_tr, ideal_tr, _gl_bin(P, h))
    full, full_err = plugin_tv(sim_tr, ideal_tr)
    records = [{"part": "memless", "run": i, "xs": [hexstr(v, P.n) for v in x],
                "sim": y1, "ideal": y2}
               for i, (x, y1, y2) in enumerate(zip(xs.tolist(), a_sim.tolist(), a_ideal.tolist()))]
    checks = [_check("memless/binned-distance", dist, delta, dist <= delta + 3 * err,
                     error=err, runs=len(xs), t=t, bound=memless_distance_bound(ell, k, t),
                     full_histogram_distance=full, full_histogram_error=full_err)]
    return records, checks


def _memless_hybrid(cfg, threads):
    """Exact hybrid steps for deterministic one-bit-memory solvers on 1-bit instances."""
    D = QueryTupleDistribution.from_support(2, 1, [((0, 1), 0.5), ((1, 0), 0.25), ((1, 1), 0.25)],
                                            name="pairs-1bit")
    solvers = list(deterministic_memory_solvers())[:: cfg["hybrid_stride"]]
    jobs = [(i, B, t) for i, B in enumerate(solvers) for t in cfg["hybrid_t"]]

    def work(job):
        i, B, t = job
        r = hybrid_distance(B.to_quantum(), D, t)
        return {"part": "hybrid", "solver": i, "t": t,
                "steps": [s["td"] for s in r["steps"]], "step_bound": r["steps"][0]["bound"],
                "total": r["total"], "total_bound": r["total_bound"]}

    rows = _map(work, jobs, threads)
    ok = all(max(r["steps"]) <= r["step_bound"] + TAU_NUM and r["total"] <= r["total_bound"] + TAU_NUM
             for r in rows)
    worst = max(max(r["steps"]) / r["step_bound"] for r in rows)
    return rows, [_check("memless/hybrid-steps", worst, 1.0, ok, cases=len(rows))]


def memless_sim(cfg: dict, threads: int = 1):
    parts = {"distance": _memless_distance, "hybrid": _memless_hybrid}
    records, checks = [], []
    for part in cfg["parts"]:
        if part not in parts:
            raise ConfigurationError(f"memless-sim: unknown part {part!r}")
        r, c = parts[part](cfg, threads)
        records += r
        checks += c
    return records, {"checks": checks}


# ------------------------------------------------------------ stateless-sim

def _stateless_cases():
    GL, DEC = toy_gl(), toy_decision()
    return [("toy-GL", "perfect", GL, perfect_solver(GL).to_quantum()),
            ("toy-GL", "noisy", GL, noisy_solver(GL).to_quantum()),
            ("toy-decision", "table", DEC, table_solver(DEC).to_quantum()),
            ("toy-decision", "noisy", DEC, noisy_solver(DEC).to_quantum())]


def _collapse(cfg, threads):
    """ℓ = 0, index-free solvers: the combined simulator's answers equal direct answering."""
    records, checks = [], []
    for aname, sname, P, B in _stateless_cases():
        D = fresh_instances(P, cfg["k"])

        def work(span, P=P, B=B, D=D, tag=(aname, sname)):
            rng = stream(cfg["seed"], "collapse", *tag, span[0])
            R = span[1] - span[0]
            xs = D.sample_many(rng, R)
            res = sim_combined(B, D, 0, cfg["delta"], xs, rng)
            steps = planted_steps(res)
            out = []
            for r in range(R):
                sim = product_distribution(B, xs[r], steps[r])
                direct = product_distribution(B, xs[r], np.arange(1, cfg["k"] + 1))
                out.append({"part": "collapse", "assumption": tag[0], "solver": tag[1],
                            "trial": span[0] + r, "xs": [hexstr(v, P.n) for v in xs[r].tolist()],
                            "steps": (steps[r]).tolist(), "tv": exact_tv(sim, direct)})
            return out

        rows = [r for c in _map(work, _chunks(cfg["trials"]), threads) for r in c]
        records += rows
        worst = max(r["tv"] for r in rows)
        checks.append(_check(f"collapse/{aname}/{sname}", worst, 0.0, worst <= TAU_NUM,
                             plans=len(rows)))
    return records, checks


def _shuffle(cfg, threads):
    """Index-aware memoryless solver: shuffled transcript vs the induced stateless solver."""
    P = toy_decision()
    B = index_parity_solver(P).to_quantum()
    k, delta = cfg["k"], cfg["delta"]
    t = padding_length(k, delta)

    def work(span):
        rng = stream(cfg["seed"], "shuffle", span[0])
        R = span[1] - span[0]
        xs = P.generated[rng.integers(0, 1 << P.d, size=(R, k))]
        a = sim_stateless(B, delta, xs, rng).answers
        b = induced_stateless(B, t, rng, R).answer_batch(xs)
        return xs, a, b

    parts = _map(work, _chunks(cfg["shuffle_trials"], 5000), threads)
    xs = np.concatenate([p[0] for p in parts])
    a = np.concatenate([p[1] for p in parts])
    b = np.concatenate([p[2] for p in parts])
    ta = [(tuple(x), tuple(y)) for x, y in zip(xs.tolist(), a.tolist())]
    tb = [(tuple(x), tuple(y)) for x, y in zip(xs.tolist(), b.tolist())]
    dist, err = plugin_tv(ta, tb)
    records = [{"part": "shuffle", "run": i, "xs": x, "sim": y1, "stateless": y2}
               for i, (x, y1, y2) in enumerate(zip(xs.tolist(), a.tolist(), b.tolist()))]
    return records, [_check("shuffle/index-parity", dist, delta, dist <= delta + 3 * err,
                            error=err, t=t, runs=len(xs))]


def stateless_sim(cfg: dict, threads: int = 1):
    parts = {"collapse": _collapse, "shuffle": _shuffle}
    records, checks = [], []
    for part in cfg["parts"]:
        if part not in parts:
            raise ConfigurationError(f"stateless-sim: unknown part {part!r}")
        r, c = parts[part](cfg, threads)
        records += r
        checks += c
    return records, {"checks": checks}


# ----------------------------------------------------------------- lift-run

def _q_instances(Q, rng, size):
    r = rng.integers(0, 1 << Q.d, size=size)
    return r, Q.generated[r]


def _headline(cfg, threads):
    spec = catalog_reduction(cfg["reduction"])
    P, Q = spec.P, spec.Q
    B = _zoo_solver(P, cfg["headline_solver"])
    base = run_classical(spec, P.solve, mode="auto")

    def work(span):
        rng = stream(cfg["seed"], "headline", span[0])
        R = span[1] - span[0]
        r, xq = _q_instances(Q, rng, R)
        ctrl = naive_reuse(spec, B, xq, rng, size=R)
        L = lift(spec, B, cfg["eps"], rng, size=R, max_calls=cfg["max_calls"])
        y = solve_once(L, xq, rng)
        return [{"part": "headline", "trial": span[0] + i, "xq": hexstr(int(xq[i]), Q.n),
                 "naive_ok": bool(Q.verify(int(r[i]), int(ctrl[i]))),
                 "lifted_ok": bool(Q.verify(int(r[i]), int(y[i]))),
                 "M": L.M, "calls_required": combined_calls(spec.k, L.ell, L.delta),
                 "p0": float(L.runs.p0[i])} for i in range(R)]

    rows = [x for c in _map(work, _chunks(cfg["trials"], 250), threads) for x in c]
    n = len(rows)
    naive, s_naive = proportion(sum(r["naive_ok"] for r in rows), n)
    lifted, s_lift = proportion(sum(r["lifted_ok"] for r in rows), n)
    checks = [_check("lift/naive-reuse", naive, 0.3, naive <= 0.3, stderr=s_naive, trials=n),
              _check("lift/solve-once", lifted, 0.7, lifted >= 0.7, stderr=s_lift, trials=n,
                     classical_baseline=base["value"], M=rows[0]["M"],
                     calls_required=rows[0]["calls_required"],
                     capped=rows[0]["calls_required"] > rows[0]["M"])]
    return rows, checks


def _durable(cfg, threads):
    spec = catalog_reduction(cfg["reduction"])
    Q = spec.Q
    B = _zoo_solver(spec.P, cfg["stream_solver"])
    rng = stream(cfg["seed"], "durable")
    size = cfg["stream_size"]
    L = lift(spec, B, cfg["eps"], rng, size=size, max_calls=cfg["max_calls"])
    rows, values = [], []
    for inv in range(cfg["invocations"]):
        r, xq = _q_instances(Q, rng, size)
        y = solve_stream(L, xq[None, :], rng)[0]
        ok = np.array([Q.verify(int(a), int(b)) for a, b in zip(r.tolist(), y.tolist())], dtype=float)
        values.append(ok)
        tel = L.telemetry[-1]
        rows.append({"part": "durable", "invocation": inv, "value": float(ok.mean()),
                     "advantage": float(ok.mean() - Q.c), **tel})
    checks = []
    a1, s1 = mean_stderr(values[0])
    worst, ok_all = 0.0, True
    for inv, v in enumerate(values[1:], start=2):
        a, s = mean_stderr(v)
        tol = L.eta + 3 * math.sqrt(s1 ** 2 + s ** 2)
        worst = max(worst, abs(a - a1))
        ok_all &= abs(a - a1) <= tol
    checks.append(_check("durable/advantage-stable", worst, L.eta, bool(ok_all),
                         invocations=len(values), first_advantage=a1 - Q.c, stderr=s1))
    budget = all(r["exact_budget"] for r in rows)
    checks.append(_check("durable/exact-budget", sum(r["exact_budget"] for r in rows), len(rows),
                         budget, M=L.M))
    return rows, checks


def lift_run(cfg: dict, threads: int = 1):
    parts = {"headline": _headline, "durable": _durable}
    records, checks = [], []
    for part in cfg["parts"]:
        if part not in parts:
            raise ConfigurationError(f"lift-run: unknown part {part!r}")
        r, c = parts[part](cfg, threads)
        records += r
        checks += c
    return records, {"checks": checks}


SUITES: dict[str, Callable] = {"plugin-verify": plugin_verify, "persist-demo": persist_demo,
                               "memless-sim": memless_sim, "stateless-sim": stateless_sim,
                               "lift-run": lift_run}


def run_suite(cfg: dict, threads: int = 1):
    records, summary = SUITES[cfg["subcommand"]](cfg, threads)
    summary["config"] = cfg
    summary["kernels"] = _kernels.BACKEND
    summary["pass"] = all(c["pass"] for c in summary["checks"])
    return records, summary


def human_summary(summary: dict) -> str:
    lines = [f"{summary['config']['subcommand']} (seed {summary['config']['seed']}): "
             f"{'PASS' if summary['pass'] else 'FAIL'}"]
    for c in summary["checks"]:
        lines.append(f"  [{'pass' if c['pass'] else 'FAIL'}] {c['name']}: "
                     f"{_fmt(c['value'])} vs {_fmt(c['threshold'])}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def write_report(out: Path, records, summary) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "records.jsonl", records)
    write_json(out / "summary.json", summary)
    (out / "summary.txt").write_text(human_summary(summary), encoding="utf-8")
