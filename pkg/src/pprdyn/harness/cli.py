"""Command-line entry point.

    pprdyn ppr solve --graph edges.txt --source 0 --solver ista
    pprdyn bench dynamic --dataset DIR --schedule minor --solvers all --out report.json
    pprdyn classify --dataset DIR --mode concat --noise lambda_base=0.0 --out results.csv
    pprdyn verify --report report.json
    pprdyn data synth --out DIR   |   pprdyn data linqs --content X --cites Y --out DIR

Every subcommand accepts ``--config file.toml``; its keys (flag names with
``-`` or ``_``) replace the built-in defaults, and flags given on the
command line take precedence over both.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..exceptions import PprDynError
from ..graph import DynamicGraph, load_edge_stream
from ..ppr import (PprConfig, PprState, PushState, adjust_batch, forward_push, ista_solve,
                   load_state, save_state, to_ppr)

log = logging.getLogger("pprdyn")

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _parse_noise(text: str | None):
    if text is None:
        return None
    key, _, val = text.partition("=")
    if not _:
        return float(key)
    if key.strip() != "lambda_base":
        raise argparse.ArgumentTypeError(f"unknown noise key {key!r}")
    return float(val)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pprdyn", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="group", required=True)

    def with_config(p):
        p.add_argument("--config", type=Path, help="TOML file with default values")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    ppr = sub.add_parser("ppr", help="single-source PPR").add_subparsers(dest="cmd", required=True)
    s = with_config(ppr.add_parser("solve", help="solve PPR for one source"))
    s.add_argument("--graph", type=Path, required=True)
    s.add_argument("--source", type=int, required=True)
    s.add_argument("--nodes", type=int, default=None,
                   help="node count (default: largest id in the file + 1)")
    s.add_argument("--alpha", type=float, default=0.15)
    s.add_argument("--eps", type=float, default=1e-8, help="push tolerance")
    s.add_argument("--eps-ista", type=float, default=None,
                   help="ISTA weight; default alpha * eps / m")
    s.add_argument("--solver", choices=("push", "ista"), default="push")
    s.add_argument("--warm", type=Path, help="state file to resume from")
    s.add_argument("--since", type=int, default=None,
                   help="with --warm: edges from this line index on are new since the state was saved")
    s.add_argument("--save-state", type=Path)
    s.add_argument("--out", type=Path, help="PPR export (default stdout)")
    s.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="solver benchmarks").add_subparsers(dest="cmd", required=True)
    b = with_config(bench.add_parser("dynamic", help="compare static and dynamic solvers"))
    b.add_argument("--dataset", type=Path, required=True)
    b.add_argument("--schedule", choices=("major", "minor"), default="major")
    b.add_argument("--solvers", default="all",
                   help="'all' or a comma list of push-static,push-dynamic,ista-static,ista-dynamic")
    _common(b)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--csv", type=Path)
    b.set_defaults(func=cmd_bench)

    c = with_config(sub.add_parser("classify", help="embed and classify per snapshot"))
    c.add_argument("--dataset", type=Path, required=True)
    c.add_argument("--schedule", choices=("major", "minor"), default="major")
    c.add_argument("--mode", default="concat",
                   help="comma list of concat,additive,pe_only,feat_only")
    c.add_argument("--method", default="ista-dynamic")
    c.add_argument("--noise", type=_parse_noise, default=None, help="lambda_base=<value>")
    c.add_argument("--identical-features", action="store_true")
    c.add_argument("--d-pe", type=int, default=None)
    c.add_argument("--encoder", choices=("hash", "srp"), default="hash")
    c.add_argument("--epochs", type=int, default=100)
    c.add_argument("--lr", type=float, default=1e-3)
    _common(c)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--report", type=Path)
    c.set_defaults(func=cmd_classify)

    v = with_config(sub.add_parser("verify", help="re-check certificates stored in a report"))
    v.add_argument("--report", type=Path, required=True)
    v.add_argument("--dataset", type=Path, help="defaults to the path recorded in the report")
    v.set_defaults(func=cmd_verify)

    data = sub.add_parser("data", help="dataset preparation").add_subparsers(dest="cmd", required=True)
    d = with_config(data.add_parser("synth", help="write a synthetic dataset directory"))
    d.add_argument("--out", type=Path, required=True)
    d.add_argument("--n", type=int, default=2708)
    d.add_argument("--m", type=int, default=5277)
    d.add_argument("--d", type=int, default=1433)
    d.add_argument("--labels", type=int, default=7)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_synth)
    lq = with_config(data.add_parser("linqs", help="convert LINQS .content/.cites files"))
    lq.add_argument("--content", type=Path, required=True)
    lq.add_argument("--cites", type=Path, required=True)
    lq.add_argument("--out", type=Path, required=True)
    lq.set_defaults(func=cmd_linqs)
    return ap


def _common(p):
    p.add_argument("--T", type=int, default=5)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.15)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--eps-ista", type=float, default=None)
    p.add_argument("--tracked", type=int, default=1000)
    p.add_argument("--oracle-samples", type=int, default=5)
    p.add_argument("--calibrate", action="store_true",
                   help="bisect the ISTA tolerance to match push precision")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="overrides PPRDYN_THREADS")


def _subparser(parser, argv):
    """The leaf parser selected by the leading command words of ``argv``."""
    node = parser
    words = iter(a for a in argv if not a.startswith("-"))
    while True:
        subs = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs:
            return node
        name = next(words, None)
        if name not in subs[0].choices:
            return None
        node = subs[0].choices[name]


def _apply_config(parser, argv):
    """Parse ``argv`` with TOML values from ``--config`` installed as the
    defaults of the selected subcommand."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = None
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            path = argv[k + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    leaf = _subparser(parser, argv) if path else None
    if leaf is not None:
        try:
            with open(path, "rb") as fh:
                conf = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            parser.error(f"cannot read config {path}: {exc}")
        actions = {a.dest: a for a in leaf._actions}
        defaults = {}
        for k, v in conf.items():
            dest = k.replace("-", "_")
            if dest not in actions or dest in ("config", "help", "func"):
                parser.error(f"{path}: unknown key {k!r}")
            defaults[dest] = v
            actions[dest].required = False
        leaf.set_defaults(**defaults)
    return parser.parse_args(argv)


def cmd_solve(args) -> int:
    events = load_edge_stream(args.graph)
    n = 1 + max((max(e.u, e.v) for e in events), default=args.source)
    n = max(n, args.source + 1) if args.nodes is None else args.nodes
    g = DynamicGraph(n)
    cut = len(events) if args.since is None else args.since
    g.insert_events(events[:cut])
    if args.warm:
        state = load_state(args.warm)
        width = (state.x if isinstance(state, PprState) else state.p).shape[0]
        if width != n:
            raise PprDynError(f"warm state covers {width} nodes, graph has {n}")
        deg_before = g.degree.copy()
        batch = []
        for e in events[cut:]:
            stamp = g.m
            if g.insert_edge(e.u, e.v):
                batch.append((e.u, e.v, stamp))
        adjust_batch(state, g.csr(), deg_before, batch, args.alpha)
    else:
        state = args.source
    csr = g.csr()
    eps_ista = args.eps_ista or args.alpha * args.eps / max(csr.m, 1)
    cfg = PprConfig(alpha=args.alpha, eps_push=args.eps, eps_ista=eps_ista)
    if args.solver == "push":
        if isinstance(state, PprState):
            raise PprDynError("warm state is an ISTA state; use --solver ista")
        state = forward_push(csr, state, cfg)
    else:
        if isinstance(state, PushState):
            raise PprDynError("warm state is a push state; use --solver push")
        state = ista_solve(csr, state, cfg)
    text = to_ppr(state, csr.degree).to_text()
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.save_state:
        save_state(args.save_state, state)
    log.info("source %d: %d ops", state.source, state.op_count)
    return 0


def _plan_kwargs(args) -> dict:
    return dict(schedule=args.schedule, T=args.T, batch=args.batch, k=args.k, alpha=args.alpha,
                eps_push=args.eps, eps_ista=args.eps_ista, n_tracked=args.tracked,
                n_oracle=args.oracle_samples, seed=args.seed, threads=args.threads)


def _load(args):
    from .datasets import load_dataset
    return load_dataset(args.dataset, n_tracked=args.tracked, seed=args.seed)


def _maybe_calibrate(args, ds, kw):
    if args.calibrate and args.eps_ista is None:
        from .experiment import ExperimentPlan, calibrate_eps_scale
        kw["eps_scale"] = calibrate_eps_scale(ds, ExperimentPlan(ds, **kw))
        log.info("calibrated ISTA tolerance multiplier %.4g", kw["eps_scale"])


def cmd_bench(args) -> int:
    from .experiment import METHODS, ExperimentPlan, compare_solvers, run_experiment
    ds = _load(args)
    kw = _plan_kwargs(args)
    _maybe_calibrate(args, ds, kw)
    if args.solvers == "all":
        report, rows = compare_solvers(ExperimentPlan(ds, classify=False, **kw))
        for r in rows:
            log.info("%-13s ops=%d l1=%.3e", r["method"], r["op_count"], r["l1_err_mean"])
    else:
        methods = tuple(m.strip() for m in args.solvers.split(","))
        bad = set(methods) - set(METHODS)
        if bad:
            raise PprDynError(f"unknown solvers {sorted(bad)}")
        report = run_experiment(ExperimentPlan(ds, methods=methods, classify=False, **kw))
    report.plan["dataset_path"] = str(args.dataset.resolve())
    args.out.write_text(report.to_json())
    if args.csv:
        args.csv.write_text(report.to_csv())
    return _finish(report)


def cmd_classify(args) -> int:
    from .experiment import ExperimentPlan, run_experiment
    ds = _load(args)
    kw = _plan_kwargs(args)
    _maybe_calibrate(args, ds, kw)
    modes = tuple(m.strip() for m in args.mode.split(","))
    plan = ExperimentPlan(ds, methods=(args.method,), modes=modes, noise=args.noise,
                          identical_features=args.identical_features, d_pe=args.d_pe,
                          encoder=args.encoder, epochs=args.epochs, lr=args.lr, **kw)
    report = run_experiment(plan)
    report.plan["dataset_path"] = str(args.dataset.resolve())
    args.out.write_text(report.to_csv())
    if args.report:
        args.report.write_text(report.to_json())
    for m in sorted({r["method"] for r in report.records}):
        log.info("%s mean acc %.4f", m, report.mean("acc", m))
    return _finish(report)


def _finish(report) -> int:
    if report.error:
        log.error("run stopped at snapshot %s (%s): %s", report.error["snapshot"],
                  report.error["stage"], report.error["message"])
        return 1
    return 0


def cmd_verify(args) -> int:
    from .datasets import load_dataset
    from .experiment import RunReport, verify_report
    report = RunReport.from_json(args.report.read_text())
    path = args.dataset or report.plan.get("dataset_path")
    if path is None:
        raise PprDynError("report has no dataset path; pass --dataset")
    ds = load_dataset(path, n_tracked=report.plan["n_tracked"], seed=report.plan["seed"])
    problems = verify_report(report, ds)
    for p in problems:
        print(p)
    print(json.dumps({"checked": len(report.checks), "problems": len(problems)}))
    return 1 if problems else 0


def cmd_synth(args) -> int:
    from .datasets import make_synthetic, save_dataset
    ds = make_synthetic(args.n, args.m, args.d, args.labels, seed=args.seed, name=args.out.name)
    save_dataset(ds, args.out)
    return 0


def cmd_linqs(args) -> int:
    from .datasets import convert_linqs
    ds = convert_linqs(args.content, args.cites, args.out)
    print(json.dumps({"n": ds.n, "edges": len(ds.events), "d": ds.d, "labels": ds.n_labels}))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PprDynError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
