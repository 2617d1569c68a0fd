"""Command-line experiment harness.

Subcommands: ``generate-data``, ``train``, ``infer-is``, ``oracle-check`` and
``mh-demo``.  Experiments are described by a strict JSON config; every
numeric output file carries a hash of the resolved config.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 check failure.
"""

import argparse
import copy
import glob
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fixtures as fx
from . import linreg, oracle
from .core import choicemap_from_json, choicemap_to_json
from .errors import AllWeightsZero, ConfigError, NonFiniteGradient, ProposalProgramError
from .runtime import as_rng, assess, substream_seed
from .samplers import ProposalKernel, importance_sample, mh_chain, write_is_diagnostics, write_mh_diagnostics
from .trainer import SGD, Adam, estimate_gradient, load_checkpoint, save_checkpoint, train, write_objective_csv

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
THREADS_ENV = "PROPOSAL_PROGRAMS_THREADS"
PROPOSAL_KINDS = ("ransac_nn", "nn")

log = logging.getLogger("proposal_programs")

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {"N": 20, "x_grid": [-5.0, 5.0]},
    "proposal": {"kind": "ransac_nn", "hidden_width": 10, "iter_support": 10},
    "training": {
        "K": 20,
        "M": 8,
        "iterations": 300,
        "optimizer": "adam",
        "adam": {"alpha": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
        "sgd_step": 1e-3,
    },
    "inference": {"N_particles": 6, "K": 1, "target_scale": 1.0, "use_prior_proposal": False},
    "output": {"dir": "out"},
}


# config ------------------------------------------------------------------------


def _merge_strict(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict):
            out[key] = _merge_strict(defaults[key], val, where)
        else:
            out[key] = val
    return out


def _int(v, where, lo):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer")
    if v < lo:
        raise ConfigError(f"{where} must be >= {lo}")
    return v


def _real(v, where, lo=None, hi=None, lo_open=True, hi_open=True):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where} must be a finite number")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{where} out of range")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(f"{where} out of range")
    return float(v)


def validate_config(raw):
    """Fill defaults, reject unknown keys and check every field; returns the resolved config."""
    cfg = _merge_strict(DEFAULT_CONFIG, raw, "")
    if isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], (int, str)):
        raise ConfigError("seed must be an integer or a string")
    ds = cfg["dataset"]
    _int(ds["N"], "dataset.N", 2)
    grid = ds["x_grid"]
    if not isinstance(grid, list) or len(grid) != 2:
        raise ConfigError("dataset.x_grid must be [lo, hi]")
    lo, hi = (_real(g, "dataset.x_grid") for g in grid)
    if not lo < hi:
        raise ConfigError("dataset.x_grid needs lo < hi")
    pr = cfg["proposal"]
    if pr["kind"] not in PROPOSAL_KINDS:
        raise ConfigError(f"proposal.kind must be one of {PROPOSAL_KINDS}")
    _int(pr["hidden_width"], "proposal.hidden_width", 1)
    _int(pr["iter_support"], "proposal.iter_support", 1)
    tr = cfg["training"]
    _int(tr["K"], "training.K", 2)
    _int(tr["M"], "training.M", 1)
    _int(tr["iterations"], "training.iterations", 0)
    if tr["optimizer"] not in ("adam", "sgd"):
        raise ConfigError("training.optimizer must be 'adam' or 'sgd'")
    ad = tr["adam"]
    _real(ad["alpha"], "training.adam.alpha", lo=0.0)
    _real(ad["beta1"], "training.adam.beta1", lo=0.0, hi=1.0, lo_open=False)
    _real(ad["beta2"], "training.adam.beta2", lo=0.0, hi=1.0, lo_open=False)
    _real(ad["eps"], "training.adam.eps", lo=0.0)
    _real(tr["sgd_step"], "training.sgd_step", lo=0.0)
    inf = cfg["inference"]
    _int(inf["N_particles"], "inference.N_particles", 1)
    _int(inf["K"], "inference.K", 1)
    _real(inf["target_scale"], "inference.target_scale", lo=0.0)
    if not isinstance(inf["use_prior_proposal"], bool):
        raise ConfigError("inference.use_prior_proposal must be a boolean")
    if not isinstance(cfg["output"]["dir"], str):
        raise ConfigError("output.dir must be a string")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return validate_config(raw)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def thread_cap(environ=os.environ):
    """Validated value of the thread-cap variable, or ``None`` when unset.

    Execution is single-process, so any positive value is accepted and
    behaves the same.
    """
    val = environ.get(THREADS_ENV)
    if val is None or val == "":
        return None
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {val!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {val!r}")
    return n


def _out_path(cfg, given, default_name):
    if given:
        return Path(given)
    return Path(cfg["output"]["dir"]) / default_name


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _prepare(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    with open(_prepare(Path(path)), "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


# commands ----------------------------------------------------------------------


def cmd_generate_data(args):
    cfg = load_config(args.config)
    h = config_hash(cfg)
    ds = cfg["dataset"]
    data, z = linreg.generate_training_pair(ds["N"], substream_seed(cfg["seed"], "data"), tuple(ds["x_grid"]))
    out = _prepare(_out_path(cfg, args.out, "data.csv"))
    data.to_csv(out, header=f"config_hash={h}")
    latents = {"config_hash": h, "latents": json.loads(choicemap_to_json(z))}
    _write_json(_sibling(out, ".latents.json"), latents)
    print(f"wrote {out} ({len(data)} points)")
    return EXIT_OK


def _make_optimizer(tr):
    if tr["optimizer"] == "adam":
        a = tr["adam"]
        return Adam(a["alpha"], a["beta1"], a["beta2"], a["eps"])
    return SGD(tr["sgd_step"])


def cmd_train(args):
    cfg = load_config(args.config)
    h = config_hash(cfg)
    ds, pr, tr = cfg["dataset"], cfg["proposal"], cfg["training"]
    kind = pr["kind"]
    params = linreg.init_params(kind, ds["N"], pr["hidden_width"], pr["iter_support"], seed=_int_seed(cfg["seed"]))
    opt = _make_optimizer(tr)
    program = linreg.PROPOSALS[kind]
    sampler = linreg.training_sampler(ds["N"], tuple(ds["x_grid"]))

    def progress(t, _params, value):
        if t % 50 == 0 or t == tr["iterations"]:
            log.info("iteration %d: mean log xi_hat %.4f", t, value)

    try:
        result = train(
            program, sampler, params, tr["K"], tr["M"], opt, tr["iterations"], substream_seed(cfg["seed"], "train"),
            callback=progress,
        )
    except NonFiniteGradient as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _prepare(_out_path(cfg, args.out, "checkpoint.json"))
    save_checkpoint(
        out,
        tr["iterations"],
        result.params,
        opt,
        proposal_kind=kind,
        N=ds["N"],
        config_hash=h,
    )
    write_objective_csv(_sibling(out, ".objective.csv"), result.objective_log, header=f"config_hash={h}")
    print(f"wrote {out} after {tr['iterations']} iterations")
    return EXIT_OK


def _int_seed(seed):
    """Deterministic integer seed for numpy initializers, derived from the config seed."""
    return int.from_bytes(hashlib.sha256(f"{seed}/init".encode()).digest()[:8], "little")


def posterior_mean_line(result):
    w = result.normalized_weights()
    slope = float(sum(wi * s.z["slope"] for wi, s in zip(w, result.samples) if wi > 0))
    intercept = float(sum(wi * s.z["intercept"] for wi, s in zip(w, result.samples) if wi > 0))
    return slope, intercept


def cmd_infer_is(args):
    cfg = load_config(args.config)
    h = config_hash(cfg)
    inf = cfg["inference"]
    data = linreg.Dataset.from_csv(args.data)
    if inf["use_prior_proposal"]:
        kind, program, params = "prior", linreg.prior_proposal, None
    else:
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required unless inference.use_prior_proposal is true")
        ckpt = load_checkpoint(args.checkpoint)
        kind = ckpt.get("proposal_kind")
        if kind != cfg["proposal"]["kind"]:
            raise ConfigError(f"checkpoint holds a {kind!r} proposal but the config asks for {cfg['proposal']['kind']!r}")
        if ckpt.get("N") != len(data):
            raise ConfigError(f"checkpoint was trained for N={ckpt.get('N')} but the dataset has {len(data)} points")
        program, params = linreg.PROPOSALS[kind], ckpt["params"]
    target = linreg.posterior_target(data)
    if inf["target_scale"] != 1.0:
        target = target.scaled(inf["target_scale"])
    try:
        result = importance_sample(
            target, program, data, params, inf["N_particles"], inf["K"], lambda z: z["slope"],
            substream_seed(cfg["seed"], "infer"),
        )
    except AllWeightsZero as e:
        print(f"error: {e}; {inf['N_particles']} particles, K={inf['K']}, proposal {kind}", file=sys.stderr)
        return EXIT_RUNTIME
    w = result.normalized_weights()
    slope, intercept = posterior_mean_line(result)
    samples = [
        {
            "slope": s.z["slope"],
            "intercept": s.z["intercept"],
            "outliers": linreg.outlier_flags(s.z, len(data)),
            "log_weight": s.log_weight if math.isfinite(s.log_weight) else None,
            "normalized_weight": float(wi),
        }
        for s, wi in zip(result.samples, w)
    ]
    out = _out_path(cfg, args.out, "samples.json")
    _write_json(
        out,
        {
            "config_hash": h,
            "proposal_kind": kind,
            "N_particles": inf["N_particles"],
            "K": inf["K"],
            "samples": samples,
            "summary": {"posterior_mean_slope": slope, "posterior_mean_intercept": intercept},
        },
    )
    write_is_diagnostics(_sibling(out, ".diagnostics.csv"), result, lambda z: z["slope"], header=f"config_hash={h}")
    print(f"wrote {out}: posterior mean line slope={slope:.4f} intercept={intercept:.4f}")
    return EXIT_OK


# oracle checks -----------------------------------------------------------------

SUITES = ("fixtures", "unbiased", "appendix-a1", "appendix-a2", "jensen", "stationarity", "gradient")
DEFAULT_FIXTURES_DIR = Path(__file__).parent / "data" / "fixtures"


class CheckResult:
    def __init__(self, name, ok, detail):
        self.name, self.ok, self.detail = name, ok, detail

    def line(self):
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def load_fixture_records(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.json")))
    if not paths:
        raise ConfigError(f"no fixture files in {directory}")
    records = []
    for p in paths:
        with open(p) as fh:
            obj = json.load(fh)
        if set(obj) != {"fixture", "z", "exact_marginal"}:
            raise ConfigError(f"{p}: expected keys fixture, z, exact_marginal")
        records.append((Path(p).stem, obj["fixture"], choicemap_from_json(obj["z"]), float(obj["exact_marginal"])))
    return records


def check_fixtures(records):
    out = []
    for stem, name, z, expected in records:
        f = fx.get(name)
        got = oracle.marginal_of(f.program, f.x, f.params, z)
        err = abs(got - expected)
        out.append(CheckResult(f"fixtures/{stem}", err <= 1e-12, f"enumerated {got:.15g}, stored {expected:.15g}"))
    return out


def check_unbiased(records, n=20000, seed="oracle-unbiased"):
    out = []
    for stem, name, z, expected in records:
        f = fx.get(name)
        vals = np.array([assess(f.program, f.x, f.params, z, 1, seed=substream_seed(seed, f"{stem}/{i}")).xi_hat for i in range(n)])
        se = vals.std(ddof=1) / math.sqrt(n)
        dev = abs(vals.mean() - expected)
        # programs without internal choices give a constant estimate
        ok = dev <= max(4 * se, 1e-12)
        out.append(CheckResult(f"unbiased/{stem}", ok, f"mean {vals.mean():.5f} vs {expected:.5f}, |dev| {dev:.3g}, se {se:.3g}"))
    return out


def check_weight_identity():
    f = fx.get("two-coin")
    worst = max(
        abs(w - r) / abs(r) for _, _, w, r in oracle.extended_weight_discrepancies(f.program, f.x, f.params, f.target, K=2)
    )
    return [CheckResult("appendix-a1/two-coin", worst <= 1e-12, f"max relative deviation {worst:.3g}")]


def check_ratio_identity():
    out = []
    for name in ("two-coin", "four-state"):
        f = fx.get(name)
        worst = max(
            abs(s - e) / abs(e)
            for _, _, s, e in oracle.extended_mh_discrepancies(f.program, f.params, f.target, f.states, K=2)
        )
        out.append(CheckResult(f"appendix-a2/{name}", worst <= 1e-12, f"max relative deviation {worst:.3g}"))
    return out


def _uniform_pairs(f):
    return [(f.x, z, 1.0 / len(f.zs)) for z in f.zs]


def check_jensen():
    out = []
    for name, strict in (("two-coin", True), ("output-only", False)):
        f = fx.get(name)
        pairs = _uniform_pairs(f)
        for K in (1, 2, 3):
            J, JK = oracle.exact_J_and_JK(f.program, f.params, pairs, K)
            ok = JK < J - 1e-12 if strict else abs(JK - J) <= 1e-12
            rel = "<" if strict else "=="
            out.append(CheckResult(f"jensen/{name}/K={K}", ok, f"J^K {JK:.12f} {rel} J {J:.12f}"))
    return out


def check_stationarity(steps=20000, thin=20, seed="oracle-mh"):
    f = fx.get("four-state")
    exact = oracle.exact_target_distribution(f.target, f.states)
    out = []
    for K in (1, 2):
        chain = mh_chain(f.target, [ProposalKernel(f.program, f.params, K)], f.states[0], steps, f"{seed}/{K}")
        counts = oracle.empirical_distribution(chain.iterates[1:], f.states)
        thinned = oracle.empirical_distribution(chain.iterates[1::thin], f.states)
        gof = oracle.chi_square_gof(thinned, exact)
        tv = oracle.tv_distance(counts / counts.sum(), exact)
        ok = gof.p_value > 1e-3 and tv < 0.03
        out.append(CheckResult(f"stationarity/four-state/K={K}", ok, f"chi-square p {gof.p_value:.4f}, TV {tv:.4f}"))
    return out


def check_gradient(n=20000, seed="oracle-grad"):
    f = fx.get("param-two-coin")
    pairs = fx.TWO_COIN_TRAINING_PAIRS
    exact = oracle.exact_grad_JK(f.program, f.params, pairs, 2)
    fd = oracle.finite_difference_grad_JK(f.program, f.params, pairs, 2)
    fd_err = max(abs(exact[k] - fd[k]).max() for k in exact)
    out = [CheckResult("gradient/finite-difference", fd_err <= 1e-6, f"max |exact - fd| {fd_err:.3g}")]
    draws = {k: [] for k in exact}
    for i in range(n):
        rng = as_rng(substream_seed(seed, i))
        x, z = fx.two_coin_training_sampler(rng)
        g = estimate_gradient(f.program, x, z, f.params, 2, seed=rng).grad
        for k in draws:
            draws[k].append(float(g[k]))
    worst = 0.0
    for k, vals in draws.items():
        v = np.array(vals)
        se = v.std(ddof=1) / math.sqrt(n)
        worst = max(worst, abs(v.mean() - float(exact[k])) / se)
    out.append(CheckResult("gradient/unbiased", worst <= 4.0, f"max |mean - exact|/se {worst:.2f}"))
    return out


def run_suite(suite, fixtures_dir=DEFAULT_FIXTURES_DIR):
    """Run one named suite (or ``"all"``) and return a list of CheckResult."""
    if suite != "all" and suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}")
    wanted = SUITES if suite == "all" else (suite,)
    results = []
    records = None
    for s in wanted:
        if s in ("fixtures", "unbiased") and records is None:
            records = load_fixture_records(fixtures_dir)
        if s == "fixtures":
            results += check_fixtures(records)
        elif s == "unbiased":
            results += check_unbiased(records)
        elif s == "appendix-a1":
            results += check_weight_identity()
        elif s == "appendix-a2":
            results += check_ratio_identity()
        elif s == "jensen":
            results += check_jensen()
        elif s == "stationarity":
            results += check_stationarity()
        elif s == "gradient":
            results += check_gradient()
    return results


def cmd_oracle_check(args):
    results = run_suite(args.suite, args.fixtures_dir or DEFAULT_FIXTURES_DIR)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_mh_demo(args):
    if args.steps < 1 or args.K < 1:
        raise ConfigError("--steps and --K must be >= 1")
    f = fx.get(args.fixture)
    settings = {"command": "mh-demo", "fixture": args.fixture, "steps": args.steps, "K": args.K, "seed": args.seed}
    h = config_hash(settings)
    chain = mh_chain(f.target, [ProposalKernel(f.program, f.params, args.K)], f.states[0], args.steps, args.seed)
    exact = oracle.exact_target_distribution(f.target, f.states)
    counts = oracle.empirical_distribution(chain.iterates[1:], f.states)
    summary = {
        "config_hash": h,
        "fixture": args.fixture,
        "K": args.K,
        "steps": args.steps,
        "acceptance_rate": chain.accept_rates[0],
        "states": [json.loads(choicemap_to_json(z)) for z in f.states],
        "empirical": (counts / counts.sum()).tolist(),
        "exact": exact.tolist(),
        "tv_distance": oracle.tv_distance(counts / counts.sum(), exact),
    }
    if args.out:
        out = _prepare(Path(args.out))
        write_mh_diagnostics(out, chain, header=f"config_hash={h}")
        _write_json(_sibling(out, ".summary.json"), summary)
    print(json.dumps(summary, indent=1))
    return EXIT_OK


# entry point -------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="proposal-programs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="sample a dataset and its latent assignment from the model")
    g.add_argument("--config", required=True)
    g.add_argument("--out", help="dataset CSV path (default: <output.dir>/data.csv)")
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train a proposal on model-sampled pairs")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="checkpoint path (default: <output.dir>/checkpoint.json)")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer-is", help="importance sampling on a dataset")
    i.add_argument("--config", required=True)
    i.add_argument("--checkpoint")
    i.add_argument("--data", required=True)
    i.add_argument("--out", help="samples JSON path (default: <output.dir>/samples.json)")
    i.set_defaults(func=cmd_infer_is)

    o = sub.add_parser("oracle-check", help="exact identities and statistical checks on enumerable fixtures")
    o.add_argument("--suite", default="all", choices=("all",) + SUITES)
    o.add_argument("--fixtures-dir", help="directory of fixture JSON files")
    o.set_defaults(func=cmd_oracle_check)

    m = sub.add_parser("mh-demo", help="Metropolis-Hastings chain on a discrete fixture")
    m.add_argument("--fixture", default="two-coin", choices=("two-coin", "four-state"))
    m.add_argument("--steps", type=int, default=10000)
    m.add_argument("--K", type=int, default=2)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", help="per-step CSV path; a .summary.json is written next to it")
    m.set_defaults(func=cmd_mh_demo)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        thread_cap()
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ProposalProgramError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
