"""Command-line interface: constraint generation, clustering, tuning,
evaluation, the experiment harness, the information table, and the labeling
service."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import em, infotheory, metrics, oracle, tuning
from .core import ConstraintSet, Dataset, HyperParams


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _load_dataset(args) -> Dataset:
    ds = data_mod.load_csv(args.data, label_column=args.label_column)
    if getattr(args, "standardize", True):
        ds = data_mod.standardize(ds)
    return ds


def _emit(args, payload: dict, human: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument(
        "--label-column",
        default="auto",
        help="ground-truth column name or 0-based index; 'auto' uses a 'label' header, 'none' disables",
    )
    p.add_argument(
        "--no-standardize",
        dest="standardize",
        action="store_false",
        help="skip per-column z-scoring",
    )


def _normalize_label_column(args) -> None:
    if args.label_column == "none":
        args.label_column = None
    elif args.label_column not in ("auto", None):
        try:
            args.label_column = int(args.label_column)
        except ValueError:
            pass


def _hyper_from_args(args, k: int) -> HyperParams:
    epsilon = 0.0 if getattr(args, "hard", False) else args.epsilon
    return HyperParams(
        k=k,
        epsilon=epsilon,
        tau=args.tau,
        lam=args.lam,
        balance=getattr(args, "balance", False),
        seed=args.seed,
        mstep_warm_cap=getattr(args, "mstep_warm_cap", 20),
    )


# --- gen-constraints ---


def cmd_gen_constraints(args) -> int:
    _normalize_label_column(args)
    ds = _load_dataset(args)
    pool = None
    if args.boundary_fraction is not None:
        pool = oracle.boundary_pool(ds, args.boundary_fraction)
    if args.mode == "drop-dnk" and args.yn_policy == "filter":
        drawn = oracle.sample_constraints(
            ds, args.count, mode="keep-dnk", noise=args.noise, seed=args.seed, pool=pool
        )
        constraints = oracle.filter_yes_no(drawn)
    else:
        constraints = oracle.sample_constraints(
            ds, args.count, mode=args.mode, noise=args.noise, seed=args.seed, pool=pool
        )
    oracle.write_constraints(args.out, constraints)
    _emit(
        args,
        {"out": str(args.out), "count": constraints.m},
        f"wrote {constraints.m} constraints to {args.out}",
    )
    return 0


# --- cluster ---


def cmd_cluster(args) -> int:
    _normalize_label_column(args)
    ds = _load_dataset(args)
    if args.constraints:
        constraints = oracle.read_constraints(args.constraints, n=ds.n)
    else:
        constraints = ConstraintSet((), n=ds.n)
    hyper = _hyper_from_args(args, args.k)
    result = em.fit(ds, constraints, hyper)
    em.save_model(args.out, result, hyper, ds)
    _emit(
        args,
        {
            "out": str(args.out),
            "em_iterations": result.em_iterations,
            "converged": result.converged,
            "lower_bound": result.lb_trace[-1],
        },
        f"model written to {args.out} "
        f"({result.em_iterations} EM iterations, converged={result.converged})",
    )
    return 0


# --- tune ---


def cmd_tune(args) -> int:
    _normalize_label_column(args)
    ds = _load_dataset(args)
    constraints = oracle.read_constraints(args.constraints, n=ds.n)
    base = _hyper_from_args(args, args.k)
    taus = [float(t) for t in args.taus.split(",")] if args.taus else tuning.DEFAULT_TAUS
    lams = [float(l) for l in args.lambdas.split(",")] if args.lambdas else tuning.DEFAULT_LAMBDAS
    result = tuning.tune(
        ds,
        constraints,
        base,
        taus=taus,
        lambdas=lams,
        yn_only=args.yn_only,
        workers=args.workers,
    )
    if args.report:
        Path(args.report).write_text(tuning.format_report_csv(result), encoding="utf-8")
    payload = {
        "tau": result.hyper.tau,
        "lambda": result.hyper.lam,
        "epsilon": result.hyper.epsilon,
        "k": result.hyper.k,
        "warned": result.warned,
    }
    _emit(
        args,
        payload,
        f"selected tau={result.hyper.tau} lambda={result.hyper.lam}"
        + (" (too few constraints, defaults kept)" if result.warned else ""),
    )
    return 0


# --- evaluate ---


def cmd_evaluate(args) -> int:
    _normalize_label_column(args)
    doc = em.load_model(args.model)
    ds = data_mod.load_csv(args.data, label_column=args.label_column)
    checksum = em.dataset_checksum(ds if not doc.standardized else data_mod.standardize(ds))
    if doc.standardized:
        ds = data_mod.standardize(ds)
    if checksum != doc.dataset_checksum:
        print("warning: dataset checksum differs from the one the model was fit on", file=sys.stderr)
    assignments = em.predict(doc.weights, ds)
    payload: dict = {"n": ds.n, "k": doc.hyper.k}
    if ds.labels is not None:
        payload["fmeasure"] = metrics.pairwise_f_measure(assignments, ds.labels)
        payload["ari"] = metrics.ari(assignments, ds.labels)
        payload["nmi"] = metrics.nmi(assignments, ds.labels)
    if args.constraints:
        held_out = oracle.read_constraints(args.constraints, n=ds.n)
        payload["constraint_accuracy"] = metrics.constraint_accuracy(assignments, held_out)
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# --- experiment ---

METHODS = ("dcrc", "dcrc-yn", "kmeans")


def _parse_budgets(text: str) -> list[float]:
    text = text.replace("N", "").strip()
    if ".." in text:
        lo, hi = (float(p) for p in text.split("..", 1))
        vals = []
        v = lo
        while v <= hi + 1e-9:
            vals.append(round(v, 10))
            v += 0.05
        return vals
    return [float(p) for p in text.split(",")]


def _experiment_job(payload):
    (ds, budget, run, methods, base, tune_enabled, yn_policy, noise, seed) = payload
    count = max(1, int(round(budget * ds.n)))
    draw_seed = _derive_seed(seed, int(budget * 10000), run)
    constraints = oracle.sample_constraints(ds, count, mode="keep-dnk", noise=noise, seed=draw_seed)
    rows = []
    for method in methods:
        hyper = base.with_(seed=_derive_seed(seed, int(budget * 10000), run, METHODS.index(method)))
        if method == "kmeans":
            km = em.kmeans(ds, hyper.k, seed=hyper.seed)
            assignments = km.assignments + 1
        else:
            if method == "dcrc-yn":
                if yn_policy == "resample":
                    cs = oracle.sample_constraints(
                        ds, count, mode="drop-dnk", noise=noise, seed=draw_seed
                    )
                else:
                    cs = oracle.filter_yes_no(constraints)
            else:
                cs = constraints
            if tune_enabled:
                tuned = tuning.tune(
                    ds, cs, hyper, yn_only=(method == "dcrc-yn"), workers=1
                )
                hyper = tuned.hyper
            assignments = em.fit(ds, cs, hyper).assignments
        rows.append(
            (
                method,
                budget,
                count,
                run,
                metrics.pairwise_f_measure(assignments, ds.labels),
                metrics.ari(assignments, ds.labels),
                metrics.nmi(assignments, ds.labels),
            )
        )
    return rows


def cmd_experiment(args) -> int:
    _normalize_label_column(args)
    ds = _load_dataset(args)
    if ds.labels is None:
        raise ValueError("the experiment harness needs a labeled dataset")
    budgets = _parse_budgets(args.budgets)
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    base = _hyper_from_args(args, args.k)
    payloads = [
        (ds, budget, run, methods, base, args.tune, args.yn_policy, args.noise, args.seed)
        for budget in budgets
        for run in range(args.runs)
    ]
    workers = args.workers if args.workers is not None else tuning.default_workers()
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_experiment_job, payloads, chunksize=1))
    else:
        chunks = [_experiment_job(p) for p in payloads]
    rows = sorted(
        (row for chunk in chunks for row in chunk),
        key=lambda r: (r[0], r[1], r[3]),
    )

    runs_path = Path(f"{args.out}.runs.csv")
    lines = ["method,budget,count,run,fmeasure,ari,nmi"]
    for method, budget, count, run, f, a, n in rows:
        lines.append(f"{method},{budget!r},{count},{run},{f!r},{a!r},{n!r}")
    runs_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary_path = Path(f"{args.out}.summary.csv")
    lines = ["method,budget,count,runs,fmeasure_mean,fmeasure_ci95,ari_mean,ari_ci95,nmi_mean,nmi_ci95"]

    def ci(vals):
        if len(vals) < 2:
            return 0.0
        return 1.96 * float(np.std(vals, ddof=1)) / len(vals) ** 0.5

    for method in methods:
        for budget in budgets:
            sel = [r for r in rows if r[0] == method and r[1] == budget]
            fs = [r[4] for r in sel]
            ars = [r[5] for r in sel]
            nms = [r[6] for r in sel]
            lines.append(
                f"{method},{budget!r},{sel[0][2]},{len(sel)},"
                f"{float(np.mean(fs))!r},{ci(fs)!r},"
                f"{float(np.mean(ars))!r},{ci(ars)!r},"
                f"{float(np.mean(nms))!r},{ci(nms)!r}"
            )
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(
        args,
        {"runs_csv": str(runs_path), "summary_csv": str(summary_path), "rows": len(rows)},
        f"wrote {runs_path} and {summary_path}",
    )
    return 0


# --- mi-table ---


def cmd_mi_table(args) -> int:
    text = infotheory.format_mi_csv(args.kmax, bits=args.bits)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- serve ---


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        session_dir=args.session_dir, data_root=args.data_root, ui_dir=args.ui_dir
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relclust",
        description="Clustering driven by relative similarity constraints with yes/no/don't-know answers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-constraints", help="sample answered triplet queries from ground truth")
    _add_data_args(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--mode", choices=("keep-dnk", "drop-dnk"), default="keep-dnk")
    p.add_argument(
        "--yn-policy",
        choices=("filter", "resample"),
        default="filter",
        help="drop-dnk only: filter an ordinary draw, or resample until count yes/no answers",
    )
    p.add_argument("--noise", type=float, default=0.0, help="probability of a wrong answer")
    p.add_argument("--boundary-fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen_constraints)

    p = sub.add_parser("cluster", help="fit the model and save it as JSON")
    _add_data_args(p)
    p.add_argument("--constraints", default=None, help="constraint file (optional)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0**-6)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--hard", action="store_true", help="treat answers as exact (epsilon = 0)")
    p.add_argument("--mstep-warm-cap", dest="mstep_warm_cap", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("tune", help="five-fold cross-validated grid search")
    _add_data_args(p)
    p.add_argument("--constraints", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0**-6)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--taus", default=None, help="comma-separated grid, default 0.5,1,1.5")
    p.add_argument("--lambdas", default=None, help="comma-separated grid, default 2^-10..2^-2")
    p.add_argument("--yn-only", action="store_true", help="score only yes/no validation constraints")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--report", default=None, help="per-fold accuracy CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="score a saved model against ground truth")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--constraints", default=None, help="held-out constraints to score")
    p.add_argument("--out", default=None, help="also write the JSON result here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="budget sweep with repeated randomized runs")
    _add_data_args(p)
    p.add_argument("--budgets", default="0.05..0.3", help="fractions of N, e.g. 0.05..0.3 or 0.1,0.2")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--methods", default="dcrc,dcrc-yn,kmeans")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=2.0**-6)
    p.add_argument("--balance", action="store_true")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--tune", action="store_true", help="cross-validate tau/lambda per run")
    p.add_argument("--yn-policy", choices=("filter", "resample"), default="filter")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix for .runs.csv / .summary.csv")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("mi-table", help="information content of constraint answers vs cluster count")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--bits", action="store_true", help="report bits instead of nats")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mi_table)

    p = sub.add_parser("serve", help="run the constraint-labeling HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--session-dir", required=True)
    p.add_argument("--data-root", default=".")
    p.add_argument("--ui-dir", default=None, help="static directory with the labeling UI")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
