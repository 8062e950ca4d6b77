"""Command-line front end.

    ppolab run --config exp.json --runs 20 --out out/
    ppolab sweep --dims 10,20,50,100 --surrogates clip,fkl,rkl
    ppolab gradcheck
    ppolab regret --n 50 --K 200
    ppolab diagnose --experiment failure1_wide --policy beta
    ppolab landscape --experiment failure2

Exit codes: 0 success, 1 a checked property failed, 2 bad configuration or
unusable output directory.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import experiments as ex
from . import gradcheck, mw_theory, outputs, svg
from .experiments import ExperimentConfig
from .rng import InvalidParameterError, RngStream, derive_seed
from .surrogate import (
    ReverseKL, parse_surrogate, per_sample_contributions, sample_weighting, surrogate_label,
)
from .trainer import (
    RewardScaler, TrainConfig, collect_batch, compute_advantages, make_optimizer, ppo_iteration,
)

log = logging.getLogger("ppolab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_KEYS = {"experiment", "policy", "surrogate", "surrogates", "n_actions", "runs", "seed",
               "out", "kl_estimator", "dims", "jobs", "svg"}
TRAIN_KEYS = set(TrainConfig.__dataclass_fields__) - {"surrogate", "seed"}


class ConfigError(Exception):
    pass


# -- config resolution --------------------------------------------------------

def load_config_file(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a flat JSON object")
    unknown = set(doc) - CONFIG_KEYS - TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def merged(args, defaults: dict | None = None) -> dict:
    """Config file values overridden by any flags given on the command line."""
    doc = dict(defaults or {})
    doc.update(load_config_file(getattr(args, "config", None)))
    for key in CONFIG_KEYS | TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            doc[key] = v
    return doc


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def experiment_config(doc: dict, surrogate=None) -> ExperimentConfig:
    try:
        sur = surrogate if surrogate is not None else parse_surrogate(doc.get("surrogate", "clip"))
        overrides = {k: doc[k] for k in TRAIN_KEYS if k in doc}
        return ExperimentConfig(
            experiment=doc.get("experiment", "failure1"),
            policy=doc.get("policy"),
            surrogate=sur,
            n_actions=int(doc.get("n_actions", 100)),
            runs=int(doc.get("runs", 20)),
            seed=int(doc.get("seed", 0)),
            out=doc.get("out"),
            kl_estimator=doc.get("kl_estimator"),
            overrides=overrides,
            dims=tuple(_int_list(doc.get("dims", ()))),
        )
    except (InvalidParameterError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(doc, default):
    out = doc.get("out") or default
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {out!r} is not writable: {exc}") from exc
    return out


# -- run ----------------------------------------------------------------------

def cmd_run(args) -> int:
    doc = merged(args)
    cfg = experiment_config(doc)
    if doc.get("svg") and not cfg.discrete and "density_points" not in cfg.overrides:
        cfg = replace(cfg, overrides={**cfg.overrides, "density_points": 100})
    out = _out_dir(doc, "out")
    started = outputs.now_iso()
    resolved = cfg.to_dict() | {"train": cfg.train_config(0).to_dict() | {"seed": None}}
    outcomes = ex.run_many(cfg, jobs=doc.get("jobs"))
    files = []
    for o in outcomes:
        path = os.path.join(out, f"run_{o.run_index:03d}.csv")
        outputs.write_csv(path, outputs.RECORD_COLUMNS, outputs.record_rows(o.result.records),
                          cfg.seed, resolved, {"run": o.run_index, "run_seed": o.seed})
        files.append(os.path.basename(path))
    summary = ex.summarize(outcomes)
    outputs.write_json(os.path.join(out, "summary.json"), summary)
    runs = [{"run": o.run_index, "seed": o.seed, "file": f, "verdict": o.verdict,
             "final_policy": o.result.final_params.to_dict()} for o, f in zip(outcomes, files)]
    outputs.write_manifest(os.path.join(out, "manifest.json"), config=resolved, seed=cfg.seed,
                           started=started, files=files + ["summary.json"],
                           verdict=summary, extra={"runs": runs})
    if doc.get("svg"):
        _run_plots(out, cfg, outcomes)
    print(_summary_line(cfg, summary))
    return EXIT_OK


def _summary_line(cfg, s) -> str:
    line = (f"{cfg.experiment} {cfg.policy} {surrogate_label(cfg.surrogate)}: "
            f"converged {s['converged']}/{s['runs']} ({s['convergence_fraction']:.2f}, "
            f"95% CI {s['ci_low']:.2f}-{s['ci_high']:.2f})")
    if "collapsed" in s:
        line += f", collapsed {s['collapsed']}/{s['runs']}"
    if s["diverged"]:
        line += f", diverged {s['diverged']}"
    return line


def _run_plots(out, cfg, outcomes):
    series = {f"run {o.run_index}": (np.arange(len(o.result.records)), o.result.probe_rewards)
              for o in outcomes}
    svg.write(os.path.join(out, "probe_reward.svg"),
              svg.line_plot(series, f"{cfg.experiment}: policy reward on probe grid", ylabel="reward"))
    first = outcomes[0].result.records
    dens = [r.density for r in first if r.density is not None]
    if dens:
        env = ex.make_env(cfg, outcomes[0].seed)
        svg.write(os.path.join(out, "density_run000.svg"),
                  svg.heatmap(np.array(dens), ((0, len(dens)), (env.lo, env.hi)),
                              f"{cfg.experiment}: policy density, run 0"))


# -- sweep --------------------------------------------------------------------

def _sweep_task(args):
    cfg, n, i = args
    return n, surrogate_label(cfg.surrogate), ex.run_one(cfg, i, n_actions=n)


def cmd_sweep(args) -> int:
    doc = merged(args, {"experiment": "action_sweep"})
    dims = _int_list(doc.get("dims", "")) or [int(doc.get("n_actions", 100))]
    try:
        surrogates = ex.parse_surrogate_list(doc.get("surrogates") or doc.get("surrogate", "clip,fkl,rkl"))
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc
    if not surrogates or not dims:
        raise ConfigError("sweep needs at least one dimension and one surrogate")
    cfgs = [experiment_config(doc, s) for s in surrogates]
    out = _out_dir(doc, "out")
    started = outputs.now_iso()
    tasks = [(cfg, n, i) for n in dims for cfg in cfgs for i in range(cfg.runs)]
    jobs = ex.default_jobs(doc.get("jobs"))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    rows = []
    for n in dims:
        for cfg in cfgs:
            label = surrogate_label(cfg.surrogate)
            hits = [o for m, s, o in results if m == n and s == label]
            k = sum(bool(o.verdict.get("converged")) for o in hits)
            lo, hi = ex.wilson_interval(k, len(hits))
            rows.append({"n": n, "surrogate": label, "policy": cfg.policy, "converged": k,
                         "total": len(hits), "fraction": k / len(hits), "ci_low": lo, "ci_high": hi})
    resolved = {"sweep": [c.to_dict() for c in cfgs], "dims": dims}
    outputs.write_csv(os.path.join(out, "sweep.csv"), outputs.SWEEP_COLUMNS, rows, cfgs[0].seed, resolved)
    outputs.write_manifest(os.path.join(out, "manifest.json"), config=resolved, seed=cfgs[0].seed,
                           started=started, files=["sweep.csv"], verdict={"rows": rows})
    if doc.get("svg") and len(dims) > 1:
        series = {}
        for cfg in cfgs:
            label = surrogate_label(cfg.surrogate)
            pts = [(r["n"], r["fraction"]) for r in rows if r["surrogate"] == label]
            series[label] = ([p[0] for p in pts], [p[1] for p in pts])
        svg.write(os.path.join(out, "sweep.svg"),
                  svg.line_plot(series, "fraction converging to the optimal action", "actions", "fraction"))
    for r in rows:
        print(f"n={r['n']:<5} {r['surrogate']:<16} {r['converged']:>3}/{r['total']:<3} "
              f"{r['fraction']:.2f} [{r['ci_low']:.2f}, {r['ci_high']:.2f}]")
    return EXIT_OK


# -- gradcheck ----------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    cells = gradcheck.run_suite(n_configs=args.configs, seed=args.seed or 0)
    failed = 0
    excluded = 0
    print(f"{'surrogate':<14} {'family':<9} {'checked':>7} {'excluded':>8} {'max rel err':>12}")
    for c in cells:
        excluded += c.excluded
        failed += not c.passed
        print(f"{c.surrogate:<14} {c.family:<9} {c.checked:>7} {c.excluded:>8} "
              f"{c.max_rel_error:>12.3e} {'ok' if c.passed else 'FAIL'}")
    print(f"mask-boundary exclusions: {excluded}; tolerance {gradcheck.TOLERANCE:g}")
    return EXIT_FAIL if failed else EXIT_OK


# -- regret -------------------------------------------------------------------

def cmd_regret(args) -> int:
    doc = merged(args, {"experiment": "failure3"})
    n = int(doc.get("n_actions", 50))
    runs = int(doc.get("runs", 1))
    seed = int(doc.get("seed", 0))
    eta = args.eta
    beta = args.beta
    if not eta > 0:
        raise ConfigError("eta must be positive")
    out = _out_dir(doc, "out")
    started = outputs.now_iso()
    resolved = {"n": n, "K": args.K, "eta": eta, "beta": beta, "runs": runs, "seed": seed}
    exact_ok = True
    report = []
    for i in range(runs):
        run_seed = derive_seed(seed, i)
        cfg = ExperimentConfig("failure3", "softmax", ReverseKL(beta), n_actions=n, runs=1,
                               overrides={"iterations": args.K})
        env = ex.make_env(cfg, run_seed)
        try:
            ledger = mw_theory.exact_mw_ledger(env.means, args.K, eta)
        except InvalidParameterError as exc:
            print(f"refused: {exc}; the regret bound assumes eta < 1/rho", file=sys.stderr)
            return EXIT_CONFIG
        check = mw_theory.regret_check(ledger)
        rows = mw_theory.prefix_table(ledger)
        outputs.write_csv(os.path.join(out, f"ledger_exact_{i:03d}.csv"), outputs.LEDGER_COLUMNS,
                          rows, seed, resolved, {"run": i, "run_seed": run_seed})
        simple = mw_theory.discrete_bound(ledger)
        ok = all(r["holds"] for r in rows) and simple["holds"]
        exact_ok &= ok
        entry = {"run": i, "seed": run_seed, "exact_holds_all_prefixes": ok,
                 "lhs": check["lhs"], "rhs": check["rhs_general"], "avg_gap": simple["avg_gap"],
                 "simplified_bound": simple["bound"]}
        if not args.skip_ppo:
            entry.update(_ppo_ledger(cfg, env, run_seed, beta, out, i, resolved))
        report.append(entry)
        print(f"run {i}: exact MW {'holds' if ok else 'VIOLATED'} "
              f"(lhs {check['lhs']:.4f} <= rhs {check['rhs_general']:.4f}; avg gap "
              f"{simple['avg_gap']:.4f} <= {simple['bound']:.4f})"
              + (f"; PPO-RKL residual alpha max {entry['alpha_max']:.4f}" if "alpha_max" in entry else ""))
    outputs.write_manifest(os.path.join(out, "manifest.json"), config=resolved, seed=seed,
                           started=started, files=sorted(f for f in os.listdir(out) if f.endswith(".csv")),
                           verdict={"exact_holds": exact_ok, "runs": report})
    return EXIT_OK if exact_ok else EXIT_FAIL


def _ppo_ledger(cfg, env, run_seed, beta, out, i, resolved) -> dict:
    """Approximate mode: train RKL PPO, measure alpha_k per step, report only."""
    params = ex.make_policy(cfg, env)
    tc = cfg.train_config(run_seed)
    rng = RngStream(run_seed)
    opt = make_optimizer(tc)
    scaler = RewardScaler(tc.reward_scaling)
    policies = [params.probs()]
    for k in range(tc.iterations):
        params, rec = ppo_iteration(env, params, tc, rng, k, scaler, opt)
        if rec.diverged:
            break
        policies.append(params.probs())
    ledger = mw_theory.policy_ledger(env.means, policies, 1.0 / beta)
    rows = mw_theory.prefix_table(ledger)
    outputs.write_csv(os.path.join(out, f"ledger_ppo_rkl_{i:03d}.csv"), outputs.LEDGER_COLUMNS,
                      rows, resolved["seed"], resolved, {"run": i, "run_seed": run_seed})
    check = mw_theory.regret_check(ledger)
    return {"alpha_max": float(ledger.alpha.max()), "alpha_mean": float(ledger.alpha.mean()),
            "ppo_bound_holds": check["holds"]}


# -- diagnose -----------------------------------------------------------------

def cmd_diagnose(args) -> int:
    doc = merged(args, {"experiment": "failure1_wide"})
    cfg = experiment_config(doc | {"runs": 1})
    if cfg.discrete:
        raise ConfigError("diagnose needs a continuous action space")
    out = _out_dir(doc, "out")
    started = outputs.now_iso()
    seed = derive_seed(cfg.seed, 0)
    env = ex.make_env(cfg, seed)
    if args.noiseless:
        env = replace(env, noise_std=0.0)
    tc = cfg.train_config(seed)
    rng = RngStream(seed)
    params = ex.make_policy(cfg, env)
    opt = make_optimizer(tc)
    scaler = RewardScaler(tc.reward_scaling)
    for k in range(args.iteration):
        params, _ = ppo_iteration(env, params, tc, rng, k, scaler, opt)
    # a copy of the stream and scaler reproduces the batch the update is about to draw
    batch = compute_advantages(
        collect_batch(env, params, copy.deepcopy(rng), tc.timesteps_per_iter), tc, copy.deepcopy(scaler))
    new = params
    if not args.no_update:
        new, _ = ppo_iteration(env, params, tc, rng, args.iteration, scaler, opt)
    ratio = np.exp(new.log_prob(batch.actions) - batch.old_log_probs)
    score = new.score_raw(batch.actions)
    contrib = np.linalg.norm(per_sample_contributions(tc.surrogate, new, batch), axis=1)
    rows = []
    for j in range(len(batch)):
        try:
            w = sample_weighting(tc.surrogate, ratio[j], batch.advantages[j])
        except InvalidParameterError:
            w = float("nan")
        rows.append({"action": float(batch.actions[j]), "reward": float(batch.rewards[j]),
                     "ratio": float(ratio[j]), "score_norm": float(np.linalg.norm(score[j])),
                     "weighting": float(w), "grad_contrib": float(contrib[j])})
    resolved = cfg.to_dict() | {"iteration": args.iteration, "noiseless": args.noiseless,
                                "no_update": args.no_update}
    outputs.write_csv(os.path.join(out, "diagnose.csv"), outputs.DIAGNOSE_COLUMNS, rows, cfg.seed, resolved)
    outputs.write_manifest(os.path.join(out, "manifest.json"), config=resolved, seed=cfg.seed,
                           started=started, files=["diagnose.csv"], verdict={})
    if doc.get("svg"):
        order = np.argsort(batch.actions)
        a = batch.actions[order]
        svg.write(os.path.join(out, "diagnose.svg"), svg.line_plot(
            {"score norm": (a, np.linalg.norm(score, axis=1)[order]),
             "|grad contribution|": (a, contrib[order])},
            f"{cfg.policy} policy, one iteration", "action", ""))
    s = np.linalg.norm(score, axis=1)
    print(f"{cfg.policy}: {len(rows)} samples, score norm median {np.median(s):.3g}, "
          f"max {s.max():.3g}; ratio range [{ratio.min():.3g}, {ratio.max():.3g}]")
    return EXIT_OK


# -- landscape ----------------------------------------------------------------

def cmd_landscape(args) -> int:
    doc = merged(args, {"experiment": "failure1"})
    cfg = experiment_config(doc | {"runs": 1})
    out = _out_dir(doc, "out")
    env = ex.make_env(cfg, derive_seed(cfg.seed, 0))
    if getattr(env, "discrete", False):
        grid = np.arange(env.n_actions)
    else:
        grid = np.linspace(env.lo, env.hi, args.points)
    rows = [{"action": a, "mean_reward": r} for a, r in env.landscape_probe(grid)]
    resolved = cfg.to_dict() | {"points": args.points}
    outputs.write_csv(os.path.join(out, "landscape.csv"), outputs.LANDSCAPE_COLUMNS, rows, cfg.seed, resolved)
    if doc.get("svg"):
        svg.write(os.path.join(out, "landscape.svg"), svg.line_plot(
            {"mean reward": ([r["action"] for r in rows], [r["mean_reward"] for r in rows])},
            f"{cfg.experiment} reward landscape", "action", "reward"))
    best = max(rows, key=lambda r: r["mean_reward"])
    print(f"{cfg.experiment}: {len(rows)} points, best action {best['action']:.4g} "
          f"(mean reward {best['mean_reward']:.4g})")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat JSON config; flags override its values")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--runs", type=int, help="number of seeded runs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")


def _experiment_flags(p):
    p.add_argument("--experiment", choices=ex.EXPERIMENTS)
    p.add_argument("--policy", choices=ex.POLICIES)
    p.add_argument("--surrogate", help="clip[:eps] | fkl[:beta] | rkl[:beta] | none")
    p.add_argument("--kl-estimator", dest="kl_estimator", choices=("sample", "analytic"))
    p.add_argument("--n-actions", dest="n_actions", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppolab", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="seeded runs of one experiment")
    _common(p)
    _experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="dimensions x surrogates x seeds")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--dims", help="comma-separated action counts")
    p.add_argument("--surrogates", help="comma-separated surrogate specs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("regret", help="regret ledgers for exact MW and RKL PPO")
    _common(p)
    p.add_argument("--n", dest="n_actions", type=int)
    p.add_argument("--K", type=int, default=200)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--skip-ppo", action="store_true", help="exact MW ledger only")
    p.set_defaults(func=cmd_regret)

    p = sub.add_parser("diagnose", help="per-sample dump of one PPO iteration")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--iteration", type=int, default=0, help="iterations to train before the dump")
    p.add_argument("--noiseless", action="store_true", help="zero reward noise")
    p.add_argument("--no-update", action="store_true",
                   help="evaluate ratios at the snapshot policy instead of after the update")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("landscape", help="mean reward over the action space")
    _common(p)
    _experiment_flags(p)
    p.add_argument("--points", type=int, default=301)
    p.set_defaults(func=cmd_landscape)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
