"""Snapshot replay, per-snapshot PPR maintenance, embedding and
classification, with op-count / oracle-error instrumentation.

A method name is ``<solver>-<static|dynamic>`` with solver ``push`` or
``ista``. Static methods re-solve every tracked source from scratch on each
snapshot; dynamic ones adjust the previous state for each inserted edge and
resume the solver.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from sklearn.preprocessing import StandardScaler

from .. import classifier as mlp
from ..embedding import PPREmbedding
from ..exceptions import DegreeZeroError, InvalidArgumentError, PprDynError
from ..graph import DynamicGraph, build_schedule
from ..ppr import (PprConfig, PprState, PushState, adjust_batch, certify, forward_push,
                   ista_solve, power_iteration, to_ppr)
from .datasets import Dataset, choose_tracked, load_dataset
from .noise import NoiseConfig, apply_noise

SCHEMA_VERSION = 1
METHODS = ("push-static", "push-dynamic", "ista-static", "ista-dynamic")
CSV_COLUMNS = ("dataset", "snapshot", "method", "op_count", "l1_err", "acc", "macro_f1",
               "seed", "wall_ms")


@dataclass
class ExperimentPlan:
    """Everything that determines a run. ``dataset`` is a directory path
    or an in-memory :class:`Dataset`.

    ``eps_ista=None`` maps the push tolerance to the ISTA weight
    ``eps_scale * alpha * eps_push / m`` on each snapshot, which puts both
    solvers' stopping rules on the same residual scale.
    """

    dataset: object
    schedule: str = "major"
    T: int = 5
    batch: int = 100
    k: int = 3
    methods: tuple = ("ista-dynamic",)
    modes: tuple = ("concat",)
    alpha: float = 0.15
    eps_push: float = 1e-8
    eps_ista: float | None = None
    eps_scale: float = 1.0
    n_tracked: int = 1000
    n_oracle: int = 5
    noise: float | None = None
    identical_features: bool = False
    d_pe: int | None = None
    encoder: str = "hash"
    hidden: tuple = mlp.SMALL_HIDDEN
    epochs: int = 100
    max_epochs: int | None = None
    patience: int = 20
    lr: float = 1e-3
    classify: bool = True
    seed: int = 0
    threads: int | None = None

    def validate(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidArgumentError(f"unknown methods {bad}; choose from {METHODS}")
        if self.classify and not self.modes:
            raise InvalidArgumentError("classification needs at least one embedding mode")
        if self.n_oracle < 0 or self.n_tracked < 1:
            raise InvalidArgumentError("n_oracle must be >= 0 and n_tracked >= 1")

    def echo(self) -> dict:
        out = asdict(replace(self, dataset=None))
        out["dataset"] = self.dataset.name if isinstance(self.dataset, Dataset) else str(self.dataset)
        out["methods"] = list(self.methods)
        out["modes"] = list(self.modes)
        out["hidden"] = list(self.hidden)
        return out


@dataclass
class RunReport:
    dataset: str
    plan: dict
    records: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    error: dict | None = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        raw = json.loads(text)
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise InvalidArgumentError(f"unsupported report schema {raw.get('schema_version')}")
        return cls(**raw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def mean(self, key: str, method: str) -> float:
        vals = [r[key] for r in self.records if r["method"] == method and r[key] is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def total(self, key: str, method: str) -> int:
        return int(sum(r[key] for r in self.records if r["method"] == method))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _threads(plan: ExperimentPlan) -> int:
    if plan.threads:
        return max(1, int(plan.threads))
    env = os.environ.get("PPRDYN_THREADS")
    return max(1, int(env)) if env else 1


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def ista_eps(plan: ExperimentPlan, m: int) -> float:
    if plan.eps_ista is not None:
        return plan.eps_ista
    return plan.eps_scale * plan.alpha * plan.eps_push / max(m, 1)


def _config(plan: ExperimentPlan, m: int) -> PprConfig:
    return PprConfig(alpha=plan.alpha, eps_push=plan.eps_push, eps_ista=ista_eps(plan, m))


def _solve(solver: str, csr, state, cfg: PprConfig):
    if solver == "push":
        return forward_push(csr, state, cfg)
    return ista_solve(csr, state, cfg)


def _dense_pi(state, degree) -> np.ndarray:
    if isinstance(state, PushState):
        return state.p
    return np.sqrt(degree) * state.x


def _ppr_matrix(states, degree, n) -> sp.csr_matrix:
    rows = [sp.csr_matrix(np.maximum(_dense_pi(s, degree), 0.0)) for s in states]
    return sp.vstack(rows, format="csr") if rows else sp.csr_matrix((0, n))


def _features_at(ds: Dataset, plan: ExperimentPlan, t: int, T: int, noise_cfg):
    X = ds.X
    if plan.identical_features:
        X = np.repeat(X.mean(axis=1, keepdims=True), ds.n, axis=1).astype(X.dtype)
    if noise_cfg is not None:
        X = apply_noise(X, t, T, noise_cfg)
    return X


def _classify(ds: Dataset, plan: ExperimentPlan, P, X, mode: str, t: int) -> tuple[float, float]:
    emb = PPREmbedding(features=None if mode == "pe_only" else X, mode=mode, d_pe=plan.d_pe,
                       encoder=plan.encoder, seed=plan.seed)
    Z = emb.fit_transform(P).astype(np.float64)
    row = {int(s): k for k, s in enumerate(ds.tracked)}
    sel = {name: np.array([row[i] for i in getattr(ds.splits, name)], dtype=np.int64)
           for name in ("train", "dev", "test")}
    # Raw PPR aggregates and sketches live on very different scales.
    Z = StandardScaler().fit(Z[sel["train"]]).transform(Z)
    y = ds.y[ds.tracked]
    dims = [Z.shape[1], *plan.hidden, ds.n_labels]
    model = mlp.init(dims, plan.seed + 1000 * t, emb.split_)
    cfg = mlp.TrainConfig(epochs=plan.epochs, lr=plan.lr, seed=plan.seed + 1000 * t,
                          max_epochs=plan.max_epochs, patience=plan.patience)
    dev = (Z[sel["dev"]], y[sel["dev"]]) if sel["dev"].size else None
    model, _ = mlp.train(model, Z[sel["train"]], y[sel["train"]], cfg, dev)
    return mlp.evaluate(model, Z[sel["test"]], y[sel["test"]])


def _sample_sources(ds: Dataset, plan: ExperimentPlan) -> list[int]:
    k = min(plan.n_oracle, ds.tracked.size)
    rng = np.random.default_rng(plan.seed + 17)
    return sorted(int(s) for s in rng.choice(ds.tracked, size=k, replace=False))


def _native(state) -> dict:
    vec = state.p if isinstance(state, PushState) else state.x
    idx = np.flatnonzero(vec)
    return {"kind": "push" if isinstance(state, PushState) else "ista",
            "entries": [[int(i), float(vec[i])] for i in idx]}


def _tracked_in_base(ds: Dataset, sched, plan: ExperimentPlan, report: RunReport) -> Dataset:
    """Tracked nodes are picked on the half-stream graph. A minor schedule on
    a small stream can start from a smaller base, so re-pick there if needed."""
    g = DynamicGraph(ds.n)
    g.insert_events(ds.events[: sched.base])
    if np.all(g.degree[ds.tracked] > 0):
        return ds
    ds = replace(ds)
    choose_tracked(ds, base_fraction=sched.base / len(ds.events), n_tracked=plan.n_tracked,
                   seed=plan.seed)
    report.notes["tracked_repicked"] = True
    return ds


def run_experiment(plan: ExperimentPlan) -> RunReport:
    """Replay the snapshot schedule once per method and emit one record per
    (snapshot, method[, mode]). A failure stops the run; the report keeps
    the records gathered so far and an ``error`` entry."""
    plan.validate()
    ds = plan.dataset
    if not isinstance(ds, Dataset):
        ds = load_dataset(ds, n_tracked=plan.n_tracked, seed=plan.seed)
    sched = build_schedule(ds.events, plan.schedule, T=plan.T, batch=plan.batch, k=plan.k)
    report = RunReport(ds.name, plan.echo())
    ds = _tracked_in_base(ds, sched, plan, report)
    report.notes["schedule"] = {"mode": sched.mode, "base": sched.base, "steps": sched.steps}
    report.notes["tracked"] = int(ds.tracked.size)
    threads = _threads(plan)
    noise_cfg = None
    if plan.noise is not None:
        noise_cfg = NoiseConfig.from_features(ds.X, plan.noise, plan.seed)
    sample = _sample_sources(ds, plan)
    oracle_cache: dict = {}
    n_steps = len(sched.steps)
    bounds = sched.boundaries()
    stage = "setup"
    method, t = None, 0
    try:
        for method in plan.methods:
            solver, kind = method.split("-")
            g = DynamicGraph(ds.n)
            stage = "base graph"
            g.insert_events(ds.events[: sched.base])
            csr = g.csr()
            cfg = _config(plan, csr.m)
            sources = [int(s) for s in ds.tracked]
            stage = "initial solve"
            states = _map(lambda s: _solve(solver, csr, s, cfg), sources, threads)
            fallbacks = 0
            for t in range(1, n_steps + 1):
                lo, hi = bounds[t]
                stage = "replay"
                t0 = time.perf_counter()
                deg_before = g.degree.copy()
                batch = []
                for e in ds.events[lo:hi]:
                    stamp = g.m
                    if g.insert_edge(e.u, e.v):
                        batch.append((e.u, e.v, stamp))
                csr = g.csr()
                cfg = _config(plan, csr.m)
                ops_before = sum(s.op_count for s in states)

                def step(st):
                    if kind == "static":
                        return _solve(solver, csr, st.source, cfg), False
                    try:
                        adjust_batch(st, csr, deg_before, batch, plan.alpha)
                    except DegreeZeroError:
                        cold = _solve(solver, csr, st.source, cfg)
                        cold.op_count += st.op_count
                        return cold, True
                    return _solve(solver, csr, st, cfg), False

                stage = "solve"
                if kind == "static":
                    ops_before = 0
                out = _map(step, states, threads)
                states = [s for s, _ in out]
                fallbacks += sum(f for _, f in out)
                ops = sum(s.op_count for s in states) - ops_before
                wall_ms = (time.perf_counter() - t0) * 1e3
                stage = "certify"
                bad = [s.source for s in states if not certify(csr, s, cfg)]
                if bad:
                    raise PprDynError(f"{len(bad)} states fail the termination certificate, "
                                      f"first source {bad[0]}")
                stage = "oracle"
                by_src = {s.source: s for s in states}
                errs = []
                for s in sample:
                    key = (t, s)
                    if key not in oracle_cache:
                        oracle_cache[key] = power_iteration(csr, s, plan.alpha, tol=1e-12).to_dense(ds.n)
                    pi = to_ppr(by_src[s], csr.degree).to_dense(ds.n)
                    errs.append(float(np.abs(pi - oracle_cache[key]).sum()))
                    report.checks.append({"method": method, "snapshot": t, "source": s,
                                          "l1_err": errs[-1], **_native(by_src[s])})
                l1 = float(np.mean(errs)) if errs else None
                base = {"dataset": ds.name, "snapshot": t, "op_count": int(ops), "l1_err": l1,
                        "seed": plan.seed, "wall_ms": round(wall_ms, 3),
                        "l1_max": float(max(errs)) if errs else None,
                        "eps_ista": cfg.eps_ista if solver == "ista" else None,
                        "edges": int(csr.m)}
                if not plan.classify:
                    report.records.append({**base, "method": method, "acc": None, "macro_f1": None})
                    continue
                stage = "embed/classify"
                P = _ppr_matrix(states, csr.degree, ds.n)
                X = _features_at(ds, plan, t, n_steps, noise_cfg)
                for mode in plan.modes:
                    acc, f1 = _classify(ds, plan, P, X, mode, t)
                    report.records.append({**base, "method": f"{method}:{mode}",
                                           "acc": acc, "macro_f1": f1})
            report.notes.setdefault("cold_fallbacks", {})[method] = fallbacks
    except PprDynError as exc:
        report.error = {"method": method, "snapshot": t, "stage": stage,
                        "type": type(exc).__name__, "message": str(exc)}
    return report


def compare_solvers(plan: ExperimentPlan) -> tuple[RunReport, list[dict]]:
    """All four solver modes on the same schedule and sources, without
    classification. Returns the report and one summary row per method."""
    report = run_experiment(replace(plan, methods=METHODS, classify=False))
    rows = []
    for m in METHODS:
        recs = [r for r in report.records if r["method"] == m]
        rows.append({
            "method": m,
            "op_count": report.total("op_count", m),
            "wall_ms": float(sum(r["wall_ms"] for r in recs)),
            "l1_err_mean": report.mean("l1_err", m),
            "l1_err_max": max((r["l1_max"] for r in recs if r["l1_max"] is not None), default=None),
            "snapshots": len(recs),
        })
    by = {r["method"]: r for r in rows}

    def ratio(a, b):
        return by[a]["op_count"] / by[b]["op_count"] if by[b]["op_count"] else float("nan")

    report.notes["ratios"] = {
        "ista_warm_over_cold": ratio("ista-dynamic", "ista-static"),
        "push_warm_over_cold": ratio("push-dynamic", "push-static"),
        "ista_over_push_static": ratio("ista-static", "push-static"),
        "ista_over_push_dynamic": ratio("ista-dynamic", "push-dynamic"),
    }
    report.notes["push_dynamic_exceeds_static"] = by["push-dynamic"]["op_count"] > by["push-static"]["op_count"]
    return report, rows


def calibrate_eps_scale(ds: Dataset, plan: ExperimentPlan, n_sources: int = 10,
                        iters: int = 12) -> float:
    """Bisection (in log space) on the ISTA tolerance multiplier so that the
    mean l1 error of ISTA on the base graph matches that of push over
    ``n_sources`` tracked sources. Returns the multiplier."""
    g = DynamicGraph(ds.n)
    sched = build_schedule(ds.events, plan.schedule, T=plan.T, batch=plan.batch, k=plan.k)
    g.insert_events(ds.events[: sched.base])
    csr = g.csr()
    rng = np.random.default_rng(plan.seed + 29)
    pool = ds.tracked[g.degree[ds.tracked] > 0]
    srcs = rng.choice(pool, size=min(n_sources, pool.size), replace=False)
    oracles = {int(s): power_iteration(csr, int(s), plan.alpha, tol=1e-12).to_dense(ds.n) for s in srcs}
    base_cfg = PprConfig(alpha=plan.alpha, eps_push=plan.eps_push)

    def err(state):
        return np.abs(to_ppr(state, csr.degree).to_dense(ds.n) - oracles[state.source]).sum()

    target = np.mean([err(forward_push(csr, int(s), base_cfg)) for s in srcs])

    def ista_err(scale):
        cfg = replace(base_cfg, eps_ista=scale * plan.alpha * plan.eps_push / csr.m)
        return np.mean([err(ista_solve(csr, int(s), cfg)) for s in srcs])

    lo, hi = -3.0, 3.0  # log10 of the multiplier
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ista_err(10.0 ** mid) > target:
            hi = mid
        else:
            lo = mid
    return float(10.0 ** lo)


def verify_report(report: RunReport, dataset: Dataset, rtol: float = 1e-9) -> list[str]:
    """Re-check every stored state: rebuild the snapshot graph, rerun the
    termination certificate and recompute the oracle error. Returns a list
    of problems (empty when everything checks out)."""
    plan = report.plan
    sched = build_schedule(dataset.events, plan["schedule"], T=plan["T"], batch=plan["batch"],
                           k=plan["k"])
    bounds = sched.boundaries()
    problems = []
    by_t: dict = {}
    for c in report.checks:
        by_t.setdefault(c["snapshot"], []).append(c)
    g = DynamicGraph(dataset.n)
    g.insert_events(dataset.events[: sched.base])
    for t in range(1, len(sched.steps) + 1):
        lo, hi = bounds[t]
        g.insert_events(dataset.events[lo:hi])
        if t not in by_t:
            continue
        csr = g.csr()
        p_ = ExperimentPlan(None, alpha=plan["alpha"], eps_push=plan["eps_push"],
                            eps_ista=plan["eps_ista"], eps_scale=plan["eps_scale"])
        cfg = _config(p_, csr.m)
        for c in by_t[t]:
            vec = np.zeros(dataset.n)
            for i, v in c["entries"]:
                vec[i] = v
            if c["kind"] == "push":
                state = PushState(c["source"], vec, np.zeros(dataset.n))
            else:
                state = PprState(c["source"], vec, np.zeros(dataset.n))
            tag = f"{c['method']} t={t} s={c['source']}"
            if not certify(csr, state, cfg):
                problems.append(f"{tag}: certificate fails")
            oracle = power_iteration(csr, c["source"], plan["alpha"], tol=1e-12).to_dense(dataset.n)
            err = float(np.abs(to_ppr(state, csr.degree).to_dense(dataset.n) - oracle).sum())
            if abs(err - c["l1_err"]) > rtol * max(err, 1e-12) + 1e-15:
                problems.append(f"{tag}: l1 error {err:.3e} differs from recorded {c['l1_err']:.3e}")
    return problems
