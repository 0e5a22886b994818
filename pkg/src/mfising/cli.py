"""Command-line interface: ``mfising <command> [options]``.

Every option has a dotted config key (shown in ``--help`` as the metavar
destination).  ``--config FILE`` loads a JSON object of such keys; nested
objects are flattened, and command-line flags override file values.  Each
command records its resolved configuration next to its outputs.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 numerical failure.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ._validation import ConvergenceError, DomainError
from .core import Theta, model_summary
from .diagnostics import coverage_study, density_compare, summarize, theoretical_mean_trace
from .posterior import PriorSpec
from .samplers import Chain, NumericalError, SamplerConfig, default_workers, grid_ranking, run_chains
from .scenarios import SCENARIOS, reproduce
from .simulate import RngSpec, read_dataset, sample_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _triple(text):
    try:
        parts = [float(x) for x in str(text).replace(" ", "").strip("()[]").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K,J,h but got {text!r}") from None
    if len(parts) != 3 or not all(math.isfinite(p) for p in parts):
        raise argparse.ArgumentTypeError(f"expected three finite numbers K,J,h but got {text!r}")
    return Theta(*parts)


def _grid_options(p):
    p.add_argument("--grid-lo", dest="grid.lo", type=_triple, default=Theta(-2.0, -2.0, -2.0))
    p.add_argument("--grid-hi", dest="grid.hi", type=_triple, default=Theta(2.0, 2.0, 2.0))
    p.add_argument("--grid-step", dest="grid.step", type=float, default=0.2)


def _rng_options(p, seed=0):
    p.add_argument("--seed", dest="rng.seed", type=int, default=seed)
    p.add_argument("--stream", dest="rng.stream", type=int, default=0)


def _theta_options(p):
    p.add_argument("--K", dest="theta.K", type=float, required=False, default=None)
    p.add_argument("--J", dest="theta.J", type=float, required=False, default=None)
    p.add_argument("--h", dest="theta.h", type=float, required=False, default=None)


def _sampler_options(p, iters=5000, burnin=2500):
    p.add_argument("--kernel", dest="sampler.kernel", default="hybrid", type=str.lower, choices=["amh", "rmahmc", "hybrid"])
    p.add_argument("--iters", dest="sampler.n_iter", type=int, default=iters)
    p.add_argument("--burnin", dest="sampler.burn_in", type=int, default=burnin)
    p.add_argument("--step-size", dest="sampler.step_size", type=float, default=0.01)
    p.add_argument("--leapfrog-steps", dest="sampler.leapfrog_steps", type=int, default=10)
    p.add_argument("--adapt-step-size", dest="sampler.adapt_step_size", action="store_true", default=False)
    p.add_argument("--amh-scale", dest="sampler.amh_scale", type=float, default=1.0 / 3.0)
    p.add_argument("--chi-burnin", dest="sampler.chi_burnin", type=float, default=1e-4)
    p.add_argument("--chi-after", dest="sampler.chi_after", type=float, default=0.0)
    p.add_argument("--jitter", dest="sampler.jitter", type=float, default=1e-10)
    p.add_argument("--prior-sd", dest="prior.sd", type=float, default=math.sqrt(2.0))


def build_parser():
    parser = _Parser(prog="mfising", description="Mean-field Ising model with three-body coupling: simulate and fit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of dotted option keys; flags override it")
        return p

    p = command("simulate", "draw a dataset of magnetizations")
    _theta_options(p)
    p.add_argument("--n", dest="data.n", type=int, default=300)
    p.add_argument("--m", dest="data.m", type=int, default=1000)
    _rng_options(p)
    p.add_argument("--out", dest="output.prefix", default="dataset", help="writes PREFIX.csv and PREFIX.json")

    p = command("fit", "run MCMC chains on a dataset")
    p.add_argument("dataset")
    p.add_argument("--n", dest="data.n", type=int, default=None, help="spins per configuration (CSV input)")
    _sampler_options(p)
    p.add_argument("--chains", dest="sampler.n_chains", type=int, default=4)
    p.add_argument("--init", dest="init", type=_triple, action="append", default=None, help="K,J,h start; repeat to give one per chain (cycled)")
    p.add_argument("--level", dest="report.level", type=float, default=0.95)
    p.add_argument("--workers", dest="workers", type=int, default=None)
    _grid_options(p)
    _rng_options(p)
    p.add_argument("--out", dest="output.dir", default="fit_out")

    p = command("init-grid", "rank grid points by log-posterior")
    p.add_argument("dataset")
    p.add_argument("--n", dest="data.n", type=int, default=None)
    p.add_argument("--top", dest="grid.top", type=int, default=1)
    p.add_argument("--prior-sd", dest="prior.sd", type=float, default=math.sqrt(2.0))
    _grid_options(p)

    p = command("density", "tabulate model pmfs over the spectrum")
    p.add_argument("--theta", dest="theta", type=_triple, action="append", default=None, help="K,J,h; repeat for more columns")
    p.add_argument("--n", dest="data.n", type=int, default=300)
    p.add_argument("--out", dest="output.path", default=None, help="CSV path (default: stdout)")

    p = command("diagnose", "summarize chain CSV files")
    p.add_argument("chains", nargs="+")
    p.add_argument("--burnin", dest="sampler.burn_in", type=int, default=0)
    p.add_argument("--level", dest="report.level", type=float, default=0.95)
    p.add_argument("--split", dest="report.split", action="store_true", default=False)
    p.add_argument("--n", dest="data.n", type=int, default=None, help="also report the E[m] trace interval")
    p.add_argument("--out", dest="output.path", default=None)

    p = command("coverage", "frequentist coverage of credible intervals")
    _theta_options(p)
    p.add_argument("--n", dest="data.n", type=int, default=300)
    p.add_argument("--m", dest="data.m", type=int, default=1000)
    p.add_argument("--reps", dest="coverage.reps", type=int, default=20)
    p.add_argument("--level", dest="report.level", type=float, default=0.95)
    _sampler_options(p)
    p.add_argument("--workers", dest="workers", type=int, default=None)
    _grid_options(p)
    _rng_options(p)
    p.add_argument("--out", dest="output.path", default=None)

    p = command("reproduce", "run a benchmark scenario end to end")
    p.add_argument("scenario", choices=list(SCENARIOS))
    p.add_argument("--iters", dest="sampler.n_iter", type=int, default=5000)
    p.add_argument("--burnin", dest="sampler.burn_in", type=int, default=2500)
    p.add_argument("--chains", dest="sampler.n_chains", type=int, default=4)
    p.add_argument("--n", dest="data.n", type=int, default=300)
    p.add_argument("--m", dest="data.m", type=int, default=1000)
    p.add_argument("--workers", dest="workers", type=int, default=None)
    _rng_options(p, seed=7)
    p.add_argument("--out", dest="output.dir", default=None, help="default: reproduce_<scenario>")
    return parser


# -- configuration -------------------------------------------------------------


def _flatten(doc, prefix=""):
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(sub, args, argv):
    """Fill options not given on the command line from ``args.config``."""
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    doc = _flatten(doc)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(doc) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
    flags = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    given = {a.dest for a in sub._actions if flags & set(a.option_strings)}
    for key, value in doc.items():
        if key in given:
            continue
        action = actions[key]
        try:
            if isinstance(action, argparse._AppendAction):
                items = value if isinstance(value, list) else [value]
                value = [action.type(str(v)) if action.type else v for v in items]
            elif action.type is not None and value is not None:
                value = action.type(value if isinstance(value, str) else json.dumps(value).strip('"'))
        except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
            raise UsageError(f"bad value for config key {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key} must be one of {list(action.choices)}, got {value!r}")
        setattr(args, key, value)


def effective_config(args):
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("config", "func"):
            continue
        if isinstance(v, Theta):
            v = list(v)
        elif isinstance(v, list):
            v = [list(x) if isinstance(x, Theta) else x for x in v]
        out[k] = v
    return out


def _get(args, key):
    return getattr(args, key)


def _theta_from(args):
    vals = [_get(args, f"theta.{c}") for c in "KJh"]
    if any(v is None for v in vals):
        raise UsageError("--K, --J and --h are all required")
    try:
        return Theta.coerce(vals)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _config_error(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _sampler_cfg(args):
    return _config_error(
        SamplerConfig,
        n_iter=_get(args, "sampler.n_iter"),
        burn_in=_get(args, "sampler.burn_in"),
        leapfrog_steps=_get(args, "sampler.leapfrog_steps"),
        step_size=_get(args, "sampler.step_size"),
        adapt_step_size=bool(_get(args, "sampler.adapt_step_size")),
        chi_burnin=_get(args, "sampler.chi_burnin"),
        chi_after=_get(args, "sampler.chi_after"),
        amh_scale=_get(args, "sampler.amh_scale"),
        jitter=_get(args, "sampler.jitter"),
        kernel=_get(args, "sampler.kernel"),
        rng=RngSpec(_get(args, "rng.seed"), _get(args, "rng.stream")),
    )


def _prior(args):
    return _config_error(PriorSpec, (_get(args, "prior.sd"),) * 3)


def _grid(args):
    return {"lo": tuple(_get(args, "grid.lo")), "hi": tuple(_get(args, "grid.hi")), "step": _get(args, "grid.step")}


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _workers(args):
    w = _get(args, "workers")
    return default_workers() if w is None else w


# -- commands ------------------------------------------------------------------


def cmd_simulate(args):
    theta = _theta_from(args)
    rng = _config_error(RngSpec, _get(args, "rng.seed"), _get(args, "rng.stream"))
    data = _config_error(sample_dataset, theta, _get(args, "data.n"), _get(args, "data.m"), rng)
    prefix = Path(_get(args, "output.prefix"))
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(prefix.with_name(prefix.name + ".csv"))
    data.to_json(prefix.with_name(prefix.name + ".json"))
    _write_json(prefix.with_name(prefix.name + ".config.json"), effective_config(args))
    S1, S2, S3 = data.suffstats.tolist()
    v = data.values
    print(f"N={data.N} M={data.M} seed={rng.seed} stream={rng.stream}")
    print(f"S1={S1!r} S2={S2!r} S3={S3!r}")
    print(f"mean={v.mean():.6f} frac(m<0)={np.mean(v < 0):.3f} frac(m=0)={np.mean(v == 0):.3f} frac(m>0)={np.mean(v > 0):.3f}")
    counts, edges = np.histogram(v, bins=10, range=(-1.0, 1.0))
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        print(f"[{lo:+.1f},{hi:+.1f}) {c:6d} {'#' * int(round(50 * c / max(1, counts.max())))}")
    return EXIT_OK


def cmd_fit(args):
    data = read_dataset(args.dataset, _get(args, "data.n"))
    cfg = _sampler_cfg(args)
    prior = _prior(args)
    n_chains = _get(args, "sampler.n_chains")
    if n_chains < 1:
        raise UsageError("--chains must be at least 1")
    if args.init:
        starts = [args.init[c % len(args.init)] for c in range(n_chains)]
    else:
        pts, _ = _config_error(grid_ranking, data, prior, **_grid(args))
        starts = [Theta(*p.tolist()) for p in pts[:n_chains]]
    chains = run_chains(data, prior, cfg, starts, _workers(args))
    report = summarize(chains, cfg.burn_in, _get(args, "report.level"))
    out = Path(_get(args, "output.dir"))
    out.mkdir(parents=True, exist_ok=True)
    for c, ch in enumerate(chains):
        ch.to_csv(out / f"chain_{c}.csv")
    report.to_json(out / "report.json")
    conf = effective_config(args)
    conf["starts"] = [list(s) for s in starts]
    conf["chain_streams"] = [[cfg.rng.seed, cfg.rng.stream, 1, c] for c in range(n_chains)]
    _write_json(out / "config.json", conf)
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_init_grid(args):
    data = read_dataset(args.dataset, _get(args, "data.n"))
    pts, lp = _config_error(grid_ranking, data, _prior(args), **_grid(args))
    top = max(1, _get(args, "grid.top"))
    print("K,J,h,logpost")
    for p, v in zip(pts[:top].tolist(), lp[:top].tolist()):
        print(f"{p[0]!r},{p[1]!r},{p[2]!r},{v!r}")
    return EXIT_OK


def cmd_density(args):
    thetas = args.theta
    if not thetas:
        raise UsageError("give at least one --theta K,J,h")
    N = _get(args, "data.n")
    cols = [_config_error(model_summary, t, N).pmf for t in thetas]
    atoms = model_summary(thetas[0], N).atoms
    lines = ["m," + ",".join(f"pmf_{i + 1}" for i in range(len(cols)))]
    for k, m in enumerate(atoms):
        lines.append(",".join([repr(float(m))] + [repr(float(c[k])) for c in cols]))
    text = "\n".join(lines) + "\n"
    path = _get(args, "output.path")
    info = sys.stdout if path else sys.stderr
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    for i, t in enumerate(thetas[1:], start=2):
        print(f"tv(pmf_1, pmf_{i}) = {density_compare(thetas[0], t, N):.6g}", file=info)
    return EXIT_OK


def cmd_diagnose(args):
    chains = []
    for path in args.chains:
        chains.append(Chain.from_csv(Path(path).read_text()))
    burn = _get(args, "sampler.burn_in")
    report = summarize(chains, burn, _get(args, "report.level"))
    doc = report.to_dict()
    if _get(args, "report.split") and len(chains) >= 1:
        from .diagnostics import gelman_rubin

        doc["psrf_split"] = [float(x) if math.isfinite(x) else None for x in gelman_rubin(chains, burn, split=True)]
    N = _get(args, "data.n")
    if N is not None:
        b = theoretical_mean_trace(np.concatenate([c.draws[burn:] for c in chains]), N)
        alpha = (1.0 - report.ci_level) / 2.0
        doc["mean_magnetization_ci"] = [float(x) for x in np.quantile(b, [alpha, 1.0 - alpha])]
    text = json.dumps(doc, indent=2) + "\n"
    path = _get(args, "output.path")
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_coverage(args):
    theta = _theta_from(args)
    cfg = _sampler_cfg(args)
    result = coverage_study(
        theta,
        N=_get(args, "data.n"),
        M=_get(args, "data.m"),
        n_reps=_get(args, "coverage.reps"),
        cfg=cfg,
        level=_get(args, "report.level"),
        rng=cfg.rng,
        prior=_prior(args),
        grid=_grid(args),
        workers=_workers(args),
    )
    doc = result.to_dict()
    doc["config"] = effective_config(args)
    text = json.dumps(doc, indent=2) + "\n"
    path = _get(args, "output.path")
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_reproduce(args):
    out = _get(args, "output.dir") or f"reproduce_{args.scenario}"
    manifest = reproduce(
        args.scenario,
        seed=_get(args, "rng.seed"),
        out_dir=out,
        workers=_workers(args),
        N=_get(args, "data.n"),
        M=_get(args, "data.m"),
        n_iter=_get(args, "sampler.n_iter"),
        burn_in=_get(args, "sampler.burn_in"),
        n_chains=_get(args, "sampler.n_chains"),
    )
    for c in manifest["criteria"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  observed={c['observed']}")
    print(f"manifest: {Path(out) / 'manifest.json'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "init-grid": cmd_init_grid,
    "density": cmd_density,
    "diagnose": cmd_diagnose,
    "coverage": cmd_coverage,
    "reproduce": cmd_reproduce,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.config:
            _apply_config(_subparser(parser, args.command), args, argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mfising: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ConvergenceError, FloatingPointError) as exc:
        print(f"mfising: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, OSError) as exc:
        print(f"mfising: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
