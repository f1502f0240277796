"""Acceptance criteria, one PASS/FAIL line each (collected and echoed in the
terminal summary).

Criteria that name Cora or Citeseer read dataset directories from
``$PPRDYN_DATA/cora`` and ``$PPRDYN_DATA/citeseer`` (either the
edges.txt/features.bin/labels.txt layout or raw LINQS ``*.content`` /
``*.cites`` files). When the data is absent those criteria fail with a
"dataset unavailable" line; synthetic stand-ins of the same size are run
alongside and reported as INFO lines, never as evidence for the criterion.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import complete_graph, random_graph

from pprdyn import classifier as mlp
from pprdyn.graph import DynamicGraph
from pprdyn.harness import (ExperimentPlan, calibrate_eps_scale, compare_solvers, convert_linqs,
                            load_dataset, make_synthetic, run_experiment)
from pprdyn.harness.datasets import choose_tracked
from pprdyn.ppr import (PprConfig, PushState, certify, forward_push, ista_adjust_edge, ista_solve,
                        power_iteration, push_adjust_edge, residual_check, to_ppr)

LINES: list[str] = []
DATA_ROOT = Path(os.environ.get("PPRDYN_DATA", Path(__file__).resolve().parents[1] / "data"))


def verdict(cid: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def info(cid: str, detail: str) -> None:
    line = f"[INFO] {cid}: {detail}"
    LINES.append(line)
    print(line)


def real_dataset(name: str, tmp_root: Path, n_tracked: int = 1000):
    base = DATA_ROOT / name
    if (base / "edges.txt").exists():
        return load_dataset(base, n_tracked=n_tracked)
    content, cites = base / f"{name}.content", base / f"{name}.cites"
    if content.exists() and cites.exists():
        convert_linqs(content, cites, tmp_root / name, name=name)
        return load_dataset(tmp_root / name, n_tracked=n_tracked)
    return None


def unavailable(cid: str, name: str):
    verdict(cid, False, f"{name} dataset unavailable under {DATA_ROOT / name}; not evaluated")


_SYNTH = {}


def synthetic(kind: str, n_tracked: int = 1000):
    key = (kind, n_tracked)
    if key not in _SYNTH:
        if kind == "cora-like":
            ds = make_synthetic(2708, 5277, 1433, 7, seed=0, name="synthetic-cora-like")
        else:
            ds = make_synthetic(3279, 4552, 3703, 6, seed=1, name="synthetic-citeseer-like")
        choose_tracked(ds, n_tracked=n_tracked)
        _SYNTH[key] = ds
    return _SYNTH[key]


def l1(a, b):
    return float(np.abs(a - b).sum())


# 1 -----------------------------------------------------------------------------

def _oracle_equivalence(ds, n_sources=50):
    g = DynamicGraph(ds.n)
    g.insert_events(ds.events)
    csr = g.csr()
    plan = ExperimentPlan(ds)
    scale = calibrate_eps_scale(ds, plan)
    cfg = PprConfig(eps_push=1e-8, eps_ista=scale * 0.15 * 1e-8 / csr.m)
    rng = np.random.default_rng(0)
    srcs = rng.choice(ds.tracked, size=min(n_sources, ds.tracked.size), replace=False)
    worst = {"push": 0.0, "ista": 0.0, "power": 0.0}
    for s in srcs:
        s = int(s)
        oracle = power_iteration(csr, s, 0.15, tol=1e-12).to_dense(ds.n)
        p = forward_push(csr, s, cfg)
        x = ista_solve(csr, s, cfg)
        worst["push"] = max(worst["push"], l1(p.p, oracle))
        worst["ista"] = max(worst["ista"], l1(to_ppr(x, csr.degree).to_dense(ds.n), oracle))
        worst["power"] = max(worst["power"], l1(power_iteration(csr, s, 0.15, tol=1e-10).to_dense(ds.n), oracle))
    return worst, scale


@pytest.mark.parametrize("corpus", ["synthetic-cora-like", "synthetic-citeseer-like", "cora", "citeseer"])
def test_c1_oracle_equivalence(corpus, tmp_path):
    cid = f"C1 oracle equivalence [{corpus}]"
    if corpus.startswith("synthetic"):
        ds = synthetic(corpus.split("-", 1)[1])
    else:
        ds = real_dataset(corpus, tmp_path)
        if ds is None:
            unavailable(cid, corpus)
    t0 = time.perf_counter()
    worst, scale = _oracle_equivalence(ds)
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-5 and dt < 300
    verdict(cid, ok, f"max l1 push={worst['push']:.2e} ista={worst['ista']:.2e} "
                     f"power={worst['power']:.2e} (bound 1e-5, ISTA eps multiplier {scale:.3g}, "
                     f"{dt:.0f}s)")


# 2 -----------------------------------------------------------------------------

def test_c2_analytic_small_graphs():
    cases = [(complete_graph(2), 0.15, (0.540541, 0.459459)),
             (complete_graph(3), 0.2, (3 / 7, 2 / 7, 2 / 7))]
    worst = 0.0
    for g, alpha, expected in cases:
        n = g.n
        cfg = PprConfig(alpha=alpha, eps_push=1e-10, eps_ista=1e-12)
        outs = [power_iteration(g, 0, alpha, tol=1e-12).to_dense(n),
                forward_push(g, 0, cfg).p,
                to_ppr(ista_solve(g, 0, cfg), g.degree).to_dense(n)]
        for out in outs:
            worst = max(worst, float(np.abs(out - np.array(expected)).max()))
    verdict("C2 analytic K2/K3 values", worst <= 1e-6,
            f"max deviation {worst:.2e} over power/push/ISTA (bound 1e-6)")


# 3 -----------------------------------------------------------------------------

@pytest.mark.parametrize("solver", ["push", "ista"])
def test_c3_dynamic_correctness(solver):
    t0 = time.perf_counter()
    failures = []
    worst_ratio, worst_rel = 0.0, 0.0
    for seq in range(100):
        rng = np.random.default_rng(seq)
        g = random_graph(200, 400, seed=seq)
        s = int(rng.integers(0, 200))
        cfg0 = PprConfig(eps_push=1e-8, eps_ista=0.15 * 1e-8 / g.m)
        run = forward_push if solver == "push" else ista_solve
        warm = run(g, s, cfg0)
        for _ in range(int(rng.integers(20, 80))):
            u, v = (int(a) for a in rng.integers(0, 200, 2))
            if u == v or g.has_edge(u, v):
                continue
            if solver == "push":
                push_adjust_edge(warm, g, u, v)
                push_adjust_edge(warm, g, v, u)
            else:
                ista_adjust_edge(warm, g, u, v)
            g.insert_edge(u, v)
        cfg = PprConfig(eps_push=1e-8, eps_ista=0.15 * 1e-8 / g.m)
        run(g, warm, cfg)
        cold = run(g, s, cfg)
        if not certify(g, warm, cfg):
            failures.append(f"seq {seq}: certificate")
        oracle = power_iteration(g, s, tol=1e-12).to_dense(200)
        w = to_ppr(warm, g.degree).to_dense(200)
        c = to_ppr(cold, g.degree).to_dense(200)
        static_err = l1(c, oracle)
        ratio = l1(w, c) / static_err if static_err > 0 else 0.0
        worst_ratio = max(worst_ratio, ratio)
        worst_rel = max(worst_rel, l1(w, oracle) / static_err if static_err > 0 else 0.0)
        if l1(w, c) > 2 * static_err:
            failures.append(f"seq {seq}: |warm-cold|={l1(w, c):.3e} > 2 x {static_err:.3e}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 120
    verdict(f"C3 dynamic correctness [{solver}]", ok,
            f"100 sequences, violations={len(failures)}, max |warm-cold|/static_err={worst_ratio:.4f} "
            f"(bound 2), max warm_err/static_err={worst_rel:.4f}, {dt:.0f}s"
            + (f"; first: {failures[0]}" if failures else ""))


# 4 -----------------------------------------------------------------------------

def _economy(ds, n_tracked_note=""):
    plan = ExperimentPlan(ds, schedule="minor", batch=100, k=3, n_oracle=3)
    rep, rows = compare_solvers(plan)
    by = {r["method"]: r for r in rows}
    r = rep.notes["ratios"]
    return rep, by, r


def _economy_line(by, r):
    return (f"ISTA ops warm={by['ista-dynamic']['op_count']} cold={by['ista-static']['op_count']} "
            f"ratio={r['ista_warm_over_cold']:.3f}; push warm/cold={r['push_warm_over_cold']:.3f}; "
            f"ISTA/push ops static={r['ista_over_push_static']:.2f} dynamic={r['ista_over_push_dynamic']:.2f}; "
            f"wall ms ISTA warm={by['ista-dynamic']['wall_ms']:.0f} cold={by['ista-static']['wall_ms']:.0f} "
            f"push warm={by['push-dynamic']['wall_ms']:.0f} cold={by['push-static']['wall_ms']:.0f}")


def test_c4_warm_start_economy_synthetic_info():
    ds = synthetic("cora-like", n_tracked=200)
    rep, by, r = _economy(ds)
    assert rep.error is None, rep.error
    info("C4 warm-start economy [synthetic-cora-like, 200 sources]", _economy_line(by, r))


@pytest.mark.parametrize("corpus", ["cora", "citeseer"])
def test_c4_warm_start_economy(corpus, tmp_path):
    cid = f"C4 warm-start economy [{corpus}]"
    ds = real_dataset(corpus, tmp_path)
    if ds is None:
        unavailable(cid, corpus)
    rep, by, r = _economy(ds)
    ok = rep.error is None and by["ista-dynamic"]["op_count"] < by["ista-static"]["op_count"]
    verdict(cid, ok, _economy_line(by, r) + (f"; error {rep.error}" if rep.error else ""))


# 5 -----------------------------------------------------------------------------

def test_c5_bookkeeping_invariants():
    rng = np.random.default_rng(5)
    g = random_graph(400, 800, seed=5)
    cfg = PprConfig(eps_push=1e-7, eps_ista=1e-10)
    push = [forward_push(g, s, cfg) for s in (0, 1)]
    ista = [ista_solve(g, s, cfg) for s in (0, 1)]
    worst_mass, worst_res, ops = 0.0, 0.0, 0
    while ops < 10_000:
        if rng.random() < 0.7:
            u, v = (int(a) for a in rng.integers(0, 400, 2))
            if u == v or g.has_edge(u, v):
                continue
            for st in push:
                push_adjust_edge(st, g, u, v)
                worst_mass = max(worst_mass, abs(st.mass() - 1.0))
                push_adjust_edge(st, g, v, u)
            for st in ista:
                ista_adjust_edge(st, g, u, v)
            g.insert_edge(u, v)
        else:
            k = int(rng.integers(0, 4))
            st = (push + ista)[k]
            (forward_push if isinstance(st, PushState) else ista_solve)(g, st, cfg)
        ops += 1
        for st in push:
            worst_mass = max(worst_mass, abs(st.mass() - 1.0))
        for st in push + ista:
            worst_res = max(worst_res, residual_check(g, st))
    ok = worst_mass <= 1e-12 and worst_res <= 1e-9
    verdict("C5 bookkeeping invariants", ok,
            f"{ops} fuzzed operations, max |mass-1|={worst_mass:.1e} (bound 1e-12), "
            f"max residual_check={worst_res:.1e} (bound 1e-9)")


# 6 -----------------------------------------------------------------------------

def test_c6_mlp_gradient_audit():
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(20):
        d_in = int(rng.integers(3, 40))
        hidden = mlp.SMALL_HIDDEN if k % 2 == 0 else (int(rng.integers(2, 30)), int(rng.integers(2, 30)))
        L = int(rng.integers(2, 8))
        split = int(rng.integers(1, d_in)) if k % 3 == 0 else None
        model = mlp.init([d_in, *hidden, L], seed=k, split=split)
        x = rng.normal(size=d_in)
        worst = max(worst, mlp.grad_check(model, x, int(rng.integers(0, L)), seed=k))
    verdict("C6 MLP gradient audit", worst < 1e-4,
            f"max relative error {worst:.2e} over 20 random models (bound 1e-4)")


# 7-9 -------------------------------------------------------------------------------

def _accuracy(ds, method, modes, **kw):
    rep = run_experiment(ExperimentPlan(ds, methods=(method,), modes=modes, n_oracle=1, **kw))
    assert rep.error is None, rep.error
    return {m: rep.mean("acc", f"{method}:{m}") for m in modes}


def test_c7_intact_accuracy_synthetic_info():
    acc = _accuracy(synthetic("cora-like"), "push-dynamic", ("concat",))
    info("C7 intact accuracy [synthetic-cora-like, push-dynamic]",
         f"concat mean acc {acc['concat']:.4f} (Cora band [0.74, 0.84] does not apply)")


def test_c7_intact_accuracy_cora(tmp_path):
    cid = "C7 intact-feature accuracy [cora]"
    ds = real_dataset("cora", tmp_path)
    if ds is None:
        unavailable(cid, "cora")
    acc = _accuracy(ds, "ista-dynamic", ("concat",))["concat"]
    verdict(cid, 0.74 <= acc <= 0.84, f"concat mean acc {acc:.4f} (band [0.74, 0.84])")


def _robust_line(acc):
    return (f"mean acc concat={acc['concat']:.4f} pe_only={acc['pe_only']:.4f} "
            f"feat_only={acc['feat_only']:.4f}; gaps {acc['concat'] - acc['feat_only']:+.4f}, "
            f"{acc['pe_only'] - acc['feat_only']:+.4f} (need >= +0.15)")


def test_c8_robustness_synthetic_info():
    acc = _accuracy(synthetic("cora-like"), "push-dynamic", ("concat", "pe_only", "feat_only"),
                    noise=0.0)
    info("C8 robustness ordering [synthetic-cora-like, push-dynamic]", _robust_line(acc))


def test_c8_robustness_cora(tmp_path):
    cid = "C8 robustness ordering [cora]"
    ds = real_dataset("cora", tmp_path)
    if ds is None:
        unavailable(cid, "cora")
    acc = _accuracy(ds, "ista-dynamic", ("concat", "pe_only", "feat_only"), noise=0.0)
    ok = (acc["concat"] - acc["feat_only"] >= 0.15) and (acc["pe_only"] - acc["feat_only"] >= 0.15)
    verdict(cid, ok, _robust_line(acc))


def test_c9_pe_distinguishability_synthetic_info():
    acc = _accuracy(synthetic("cora-like"), "push-dynamic", ("pe_only",), identical_features=True)
    info("C9 PE distinguishability [synthetic-cora-like, push-dynamic]",
         f"pe_only mean acc with identical features {acc['pe_only']:.4f}")


def test_c9_pe_distinguishability_cora(tmp_path):
    cid = "C9 PE distinguishability [cora]"
    ds = real_dataset("cora", tmp_path)
    if ds is None:
        unavailable(cid, "cora")
    acc = _accuracy(ds, "ista-dynamic", ("pe_only",), identical_features=True)["pe_only"]
    verdict(cid, 0.65 <= acc <= 0.85, f"pe_only mean acc {acc:.4f} (band [0.65, 0.85], target 0.70)")


# 10 ----------------------------------------------------------------------------------

def _strip_wall(text):
    rows = [ln.split(",") for ln in text.splitlines()]
    k = rows[0].index("wall_ms")
    return "\n".join(",".join(r[:k] + r[k + 1:]) for r in rows)


def test_c10_determinism():
    ds = make_synthetic(600, 1800, 100, 4, seed=10, name="det")
    choose_tracked(ds, n_tracked=200)
    plan = ExperimentPlan(ds, methods=("push-dynamic", "ista-dynamic"),
                          modes=("concat", "additive", "pe_only"), noise=0.0, epochs=30,
                          n_oracle=2)
    a = _strip_wall(run_experiment(plan).to_csv())
    b = _strip_wall(run_experiment(plan).to_csv())
    verdict("C10 determinism", a == b and a.count("\n") == 5 * 2 * 3,
            f"two runs, {a.count(chr(10))} records, CSV identical modulo wall_ms: {a == b}")
