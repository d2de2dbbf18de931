"""Command-line entry point: ``oarc <subcommand> ...``.

Every subcommand accepts ``--config file.json`` whose keys mirror the long
flag names; flags given on the command line win.  Outputs get a sibling
``<out>.manifest.json`` and CSVs start with a ``# manifest:`` line, so a run
can be repeated with ``--config <out>.manifest.json``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fluid import PriorityOrdering, fluid_cost, solve, water_fill
from .schedulers import builtin
from .simulator import SimConfig, regret, run, steady_state_report
from .ski_rental import value_functions
from .tree import load_tree, post_video_example, water_filling_example

TREE_POLICIES = ("oarc", "cmu", "cmutheta", "fifo", "random")
CONTENT_POLICIES = ("pviolating", "velocity", "piv", "oarch")
BUILTIN_TREES = {
    "builtin:water-filling": water_filling_example,
    "builtin:post-video": post_video_example,
}


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def parse_ratios(text: str) -> list[float]:
    """``a:step:b`` (inclusive) or a comma list."""
    text = str(text)
    if ":" in text:
        a, step, b = (float(x) for x in text.split(":"))
        k = int(math.floor((b - a) / step + 1e-9))
        return [round(a + i * step, 10) for i in range(k + 1)]
    return _floats(text)


def _tree(spec: str):
    if spec in BUILTIN_TREES:
        return BUILTIN_TREES[spec]()
    if not Path(spec).exists():
        raise CliError(f"--tree: file not found: {spec}")
    return load_tree(spec)


def _manifest(args, command: str) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config", "command")}
    return {"command": command, "version": __version__, "seed": cfg.get("seed"), "config": cfg}


def _write_manifest(out: str | None, manifest: dict) -> None:
    if out:
        Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _csv_text(header, rows, manifest: dict | None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest: " + json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(out, header, rows, manifest):
    text = _csv_text(header, rows, manifest)
    if out:
        Path(out).write_text(text)
        _write_manifest(out, manifest)
    return text


# --- subcommands ----------------------------------------------------------

def cmd_fluid_solve(args) -> int:
    tree = _tree(args.tree)
    sol = solve(tree, args.lam, args.mu)
    if args.ordering:
        order = PriorityOrdering.from_labels(tree, str(args.ordering).split(","))
        eq = water_fill(tree, args.lam, args.mu, order)
        cost = fluid_cost(tree, eq)
    else:
        eq, cost = sol.equilibrium, sol.cost
    vt = value_functions(tree, sol.gamma_star)
    man = _manifest(args, "fluid-solve")
    index_rows = [[tree.labels[i], repr(float(tree.cost[i])), repr(float(vt.Vf[i])),
                   repr(float(vt.index[i])), repr(float(vt.beta[i]))] for i in range(tree.n)]
    eq_rows = [[tree.labels[i], f"T-{int(eq.classification[i])}", repr(float(eq.q[i])),
                repr(float(eq.nu[i]))] for i in range(tree.n)]
    partial = "none" if eq.partial is None else tree.labels[eq.partial]
    kappa = "inf" if eq.kappa is None else repr(eq.kappa)
    summary = (f"m={eq.m} partial={partial} kappa={kappa} cost={cost!r} "
               f"gamma_star={sol.gamma_star!r}")
    head = f"gamma_star={sol.gamma_star!r} dual_objective={sol.dual_objective!r} c_star={sol.cost!r}"
    if sol.segment_end is not None and sol.segment_end > sol.gamma_star:
        head += f" flat_minimum_to={sol.segment_end!r}"
    eq_text = _emit(args.out, ["state", "label", "q", "nu"], eq_rows, man)
    idx_text = _emit(args.index_out, ["state", "cost", "Vf", "index", "beta"], index_rows, man)
    sys.stdout.write(head + "\n" + idx_text + "\n" + eq_text + summary + "\n")
    return 0


def cmd_simulate(args) -> int:
    tree = _tree(args.tree)
    if args.policy not in TREE_POLICIES:
        raise CliError(f"--policy: expected one of {', '.join(TREE_POLICIES)}")
    cfg = SimConfig(args.n, args.lam, args.mu, args.t, args.warmup, args.seed, args.reps)
    sol = solve(tree, args.lam, args.mu) if args.lam > 0 else None
    vt = value_functions(tree, sol.gamma_star) if sol else value_functions(tree, 0.0)
    policy = builtin(args.policy, tree, vt)
    m = run(tree, cfg, policy, trace=bool(args.trace), workers=args.workers)
    man = _manifest(args, "simulate")
    rows = [[r, t, repr(float(m.cost[r, t])), int(m.served[r, t]), int(m.queue_len[r, t])]
            for r in range(cfg.replications) for t in range(cfg.T)]
    _emit(args.out, ["replication", "period", "total_cost", "served", "queue_len"], rows, man)
    if args.trace and m.trace is not None:
        tr = m.trace
        trows = [[t, tree.labels[i], int(tr.queue[t, i]), int(tr.served[t, i]),
                  int(tr.moved[t, i]), int(tr.abandoned[t, i])]
                 for t in range(cfg.T) for i in range(tree.n)]
        _emit(args.trace, ["period", "state", "queue", "served", "moved_in", "abandoned"], trows, man)
    line = f"policy={policy.name} cost_avg={m.cost_avg!r} se={m.cost_se!r}"
    if sol is not None:
        rg = regret(m, cfg.N, sol.cost)
        line += (f" N*C*={cfg.N * sol.cost!r} regret={rg.value!r} "
                 f"ci=[{rg.ci_low!r},{rg.ci_high!r}]")
    print(line)
    for note in m.notes:
        print("# " + note)
    rep = steady_state_report(m)
    for i in range(tree.n):
        print(f"{tree.labels[i]},Q={rep.mean_queue[i]:.6g},R={rep.mean_served[i]:.6g},"
              f"Z={rep.mean_remaining[i]:.6g}")
    return 0


def cmd_gen_data(args) -> int:
    from .content.data import gen_ads, gen_ugc, load_dataset, split, to_csv

    man = _manifest(args, "gen-data")
    mtext = json.dumps(man, sort_keys=True, separators=(",", ":"))
    seeds = np.random.SeedSequence(args.seed).generate_state(2)

    def make(seed):
        if args.kind == "ads":
            size = args.size or 5000
            return gen_ads(size, args.ads_per_campaign, args.length or 100, int(seed))
        size = args.size or 20000
        return gen_ugc(size, args.length or 200, int(seed))

    if args.kind == "csv":
        if not args.input:
            raise CliError("--input is required for gen-data csv")
        data = load_dataset(args.input, zero_fill=args.zero_fill)
        parts = split(data, args.seed) if args.split else (data,)
    elif args.split:
        # independently generated halves, as for the synthetic experiments
        parts = (make(seeds[0]), make(seeds[1]))
    else:
        parts = (make(seeds[0]),)
    if len(parts) == 2:
        stem = str(args.out)
        stem = stem[:-4] if stem.endswith(".csv") else stem
        for name, part in zip(("train", "test"), parts):
            path = f"{stem}_{name}.csv"
            to_csv(part, path, mtext)
            _write_manifest(path, man)
            print(f"wrote {path} ({part.n} records, L={part.L})")
    else:
        to_csv(parts[0], args.out, mtext)
        _write_manifest(args.out, man)
        print(f"wrote {args.out} ({parts[0].n} records, L={parts[0].L})")
    return 0


def cmd_train(args) -> int:
    from .content.data import gamma_percentile, load_dataset
    from .content.regressor import save_models, train_regressor

    data = load_dataset(args.data, zero_fill=args.zero_fill)
    gamma = args.gamma if args.gamma is not None else gamma_percentile(data, args.gamma_percentile)
    params = dict(n_trees=args.trees, max_depth=args.depth) if args.kind == "gbt" else {}
    capped = train_regressor(data, gamma, kind=args.kind, max_rows=args.max_rows, seed=args.seed,
                             **params)
    uncapped = train_regressor(data, float("inf"), kind=args.kind, max_rows=args.max_rows,
                               seed=args.seed, **params)
    man = _manifest(args, "train")
    save_models({"capped": capped, "uncapped": uncapped}, args.model,
                extra={"gamma_star": gamma, "manifest": man})
    _write_manifest(args.model, man)
    print(f"gamma_star={gamma!r} capped_mse={capped.train_mse!r} "
          f"uncapped_mse={uncapped.train_mse!r} -> {args.model}")
    return 0


def cmd_sweep(args) -> int:
    from .content.data import load_dataset, perturb_pviolating
    from .content.regressor import load_models
    from .content.sim import ContentSimConfig, reviewer_hour_savings, sweep, vio_table

    policies = [p.strip() for p in str(args.policies).split(",") if p.strip()]
    bad = [p for p in policies if p not in CONTENT_POLICIES]
    if bad:
        raise CliError(f"--policies: unknown {bad}; expected {', '.join(CONTENT_POLICIES)}")
    test = load_dataset(args.data, zero_fill=args.zero_fill)
    models = load_models(args.model)[0] if args.model else None
    ratios = parse_ratios(args.ratios)
    base = ContentSimConfig(args.n, args.lam, ratios[0], args.t, args.reps, args.seed)
    eps_list = _floats(args.epsilon) if args.epsilon is not None else [0.0]
    rows = []
    for eps in eps_list:
        data = perturb_pviolating(test, eps, args.seed)
        res = sweep(data, policies, ratios, base, models, workers=args.workers)
        for p in policies:
            for r in ratios:
                m = res[p][r]
                for k in range(args.reps):
                    rows.append([p, repr(r), repr(eps), k] + [repr(float(m.per_rep[f][k])) for f in
                                 ("vio_views", "pvio_views", "iv", "reviews")])
        if len(eps_list) == 1 and "oarch" in policies:
            sav = reviewer_hour_savings(vio_table(res))
            for p in policies:
                if p != "oarch":
                    cells = ["none" if sav[p][r] is None else f"{sav[p][r]:.3f}" for r in ratios]
                    print(f"savings vs {p}: " + " ".join(cells))
    man = _manifest(args, "sweep")
    _emit(args.out, ["policy", "ratio", "epsilon", "replication", "vio_views", "pvio_views", "iv",
                     "reviews"], rows, man)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_regret_scaling(args) -> int:
    tree = _tree(args.tree)
    sizes = _ints(args.n)
    sol = solve(tree, args.lam, args.mu)
    vt = value_functions(tree, sol.gamma_star)
    policy = builtin(args.policy, tree, vt)
    rows, vals = [], []
    for N in sizes:
        cfg = SimConfig(N, args.lam, args.mu, args.t, args.warmup, args.seed, args.reps)
        rg = regret(run(tree, cfg, policy, workers=args.workers), N, sol.cost)
        vals.append(rg.value)
        rows.append([N, repr(rg.value), repr(rg.se), repr(rg.ci_low), repr(rg.ci_high),
                     repr(rg.value / N)])
    slope = loglog_slope(sizes, vals)
    man = _manifest(args, "regret-scaling")
    text = _csv_text(["N", "regret", "se", "ci_low", "ci_high", "regret_per_N"], rows, man)
    text += f"# loglog_slope={slope!r} c_star={sol.cost!r} gamma_star={sol.gamma_star!r}\n"
    if args.out:
        Path(args.out).write_text(text)
        _write_manifest(args.out, man)
    sys.stdout.write(text)
    return 0


def _read_csv(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_report(args) -> int:
    """Summarise a sweep CSV: mean metric per (policy, ratio), the reduction
    achieved by the target policy and reviewer-hour savings."""
    from .content.sim import reviewer_hour_savings

    rows = _read_csv(args.sweep)
    if not rows:
        raise CliError(f"--sweep: no rows in {args.sweep}")
    acc: dict = {}
    for r in rows:
        if float(r["epsilon"]) != args.epsilon:
            continue
        acc.setdefault(r["policy"], {}).setdefault(float(r["ratio"]), []).append(float(r[args.metric]))
    table = {p: {k: float(np.mean(v)) for k, v in d.items()} for p, d in acc.items()}
    if args.target not in table:
        raise CliError(f"--target: sweep has no rows for {args.target}")
    sav = reviewer_hour_savings(table, args.target)
    out_rows = []
    for p in sorted(table):
        for r in sorted(table[p]):
            red = 1.0 - table[args.target][r] / table[p][r] if table[p][r] > 0 else float("nan")
            s = sav[p][r]
            out_rows.append([p, repr(r), repr(table[p][r]), repr(red), "none" if s is None else repr(s)])
    man = _manifest(args, "report")
    sys.stdout.write(_emit(args.out, ["policy", "ratio", args.metric, f"reduction_by_{args.target}",
                                      "reviewer_hour_savings"], out_rows, man))
    return 0


# --- parser ---------------------------------------------------------------

REQUIRED = {
    "fluid-solve": ("tree", "lam", "mu"),
    "simulate": ("tree", "policy", "n", "lam", "mu", "t"),
    "gen-data": ("kind", "out"),
    "train": ("data", "model"),
    "sweep": ("data", "out"),
    "regret-scaling": ("n",),
    "report": ("sweep",),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oarc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    workers = os.cpu_count() or 1

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file of flag values (or a manifest)")
        sp.set_defaults(func=func)
        return sp

    s = add("fluid-solve", cmd_fluid_solve, "gamma*, OaRC indices and a water-filled equilibrium")
    s.add_argument("--tree")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--ordering", help="comma-separated state labels, highest priority first")
    s.add_argument("--out", help="equilibrium CSV path")
    s.add_argument("--index-out", dest="index_out", help="index table CSV path")

    s = add("simulate", cmd_simulate, "simulate a tree-job queue under one policy")
    s.add_argument("--tree")
    s.add_argument("--policy", choices=TREE_POLICIES)
    s.add_argument("--n", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--t", type=int)
    s.add_argument("--warmup", type=int)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--trace")
    s.add_argument("--workers", type=int, default=workers)

    s = add("gen-data", cmd_gen_data, "generate or split a trajectory dataset")
    s.add_argument("kind", nargs="?", choices=("ads", "ugc", "csv"))
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int, help="campaigns (ads) or contents (ugc)")
    s.add_argument("--ads-per-campaign", dest="ads_per_campaign", type=int, default=5)
    s.add_argument("--length", type=int, help="trajectory length L")
    s.add_argument("--split", action="store_true", help="write <out>_train.csv and <out>_test.csv")
    s.add_argument("--input", help="CSV to split (kind csv)")
    s.add_argument("--zero-fill", dest="zero_fill", action="store_true")

    s = add("train", cmd_train, "fit the capped and uncapped future-view regressors")
    s.add_argument("--data")
    s.add_argument("--gamma-percentile", dest="gamma_percentile", type=float, default=99.0)
    s.add_argument("--gamma", type=float, help="explicit cap (overrides the percentile)")
    s.add_argument("--model")
    s.add_argument("--kind", choices=("gbt", "lookup"), default="gbt")
    s.add_argument("--trees", type=int, default=60)
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--max-rows", dest="max_rows", type=int, default=200_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--zero-fill", dest="zero_fill", action="store_true")

    s = add("sweep", cmd_sweep, "content-review simulations over review ratios")
    s.add_argument("--data")
    s.add_argument("--model")
    s.add_argument("--policies", default=",".join(CONTENT_POLICIES))
    s.add_argument("--ratios", default="0.01:0.005:0.205")
    s.add_argument("--epsilon", help="comma list of calibration errors")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--lambda", dest="lam", type=float, default=0.1)
    s.add_argument("--t", type=int, default=500)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=workers)
    s.add_argument("--zero-fill", dest="zero_fill", action="store_true")

    s = add("regret-scaling", cmd_regret_scaling, "regret of a policy across system sizes")
    s.add_argument("--tree", default="builtin:water-filling")
    s.add_argument("--policy", choices=TREE_POLICIES, default="oarc")
    s.add_argument("--n")
    s.add_argument("--lambda", dest="lam", type=float, default=0.8)
    s.add_argument("--mu", type=float, default=0.7)
    s.add_argument("--t", type=int, default=5000)
    s.add_argument("--warmup", type=int)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=workers)

    s = add("report", cmd_report, "reductions and reviewer-hour savings from a sweep CSV")
    s.add_argument("--sweep")
    s.add_argument("--target", default="oarch")
    s.add_argument("--metric", default="vio_views", choices=("vio_views", "pvio_views"))
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--out")
    return p


def _load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"--config: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"--config: invalid JSON ({exc})") from None
    if isinstance(cfg, dict) and "config" in cfg and "command" in cfg:
        cfg = cfg["config"]
    if not isinstance(cfg, dict):
        raise CliError("--config: expected a JSON object")
    out = {}
    for k, v in cfg.items():
        key = {"lambda": "lam"}.get(k, k.replace("-", "_"))
        out[key] = v
    return out


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    if args.config:
        try:
            cfg = _load_config(args.config)
        except CliError as exc:
            sp.error(str(exc))
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known - {"command"})
        if unknown:
            sp.error(f"--config: unknown fields {', '.join('config.' + u for u in unknown)}")
        sp.set_defaults(**{k: v for k, v in cfg.items() if k != "command"})
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d, None) is None]
    if missing:
        flags = {"lam": "--lambda", "kind": "KIND"}
        sp.error("missing required option(s): " + ", ".join(flags.get(d, "--" + d.replace("_", "-"))
                                                            for d in missing))
    try:
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"oarc {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
