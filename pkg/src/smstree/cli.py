"""Command-line front end: ``sms curves | learn | eval | compare | verify``.

Settings resolve as command-line flags > JSON config file (``--config``) >
built-in defaults.  Every output file starts with ``#`` lines echoing the
effective configuration, and is written atomically.  Exit codes: 0 success,
1 failed verification, 2 configuration, 3 data, 4 schema, 5 numerical.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from importlib import resources

from smstree.copulas.families import CopulaFamily, density_clamps
from smstree.curves import (
    DEFAULT_FAMILIES,
    DEFAULT_STEP,
    FamilyPrior,
    atomic_write,
    build_curves,
    default_prior,
    load_curves,
    save_curves,
)
from smstree.empirical import read_csv, write_csv
from smstree.errors import ConfigError, NumericalError, SMSError
from smstree.evaluation import (
    FittedModel,
    SplitResult,
    avg_test_logprob,
    crossval_report,
    format_report,
)
from smstree.tree import (
    LearnConfig,
    learn,
    learn_timing,
    load_tree,
    read_tree_comments,
    sample_tree,
    save_tree,
)
from smstree.verify import default_checks, format_reports

DEFAULTS = {
    "families": ",".join(f.value for f in DEFAULT_FAMILIES),
    "seed": 0,
    "threads": None,
    "resolution": 200,
    "step": DEFAULT_STEP,
    "method": "sms",
    "folds": 10,
    "mle_tolerance": 1e-6,
    "samples": 1000,
    "jacobian": True,
    "priors": {},
}
# The verifier covers every family unless told otherwise.
COMMAND_DEFAULTS = {"verify": {"families": ",".join(f.value for f in CopulaFamily)}}

_PATH_AND_FLAG_KEYS = {"curves", "train", "input", "output", "plot_output", "model", "theta",
                       "refine_mle", "synthesize", "gaussian_baseline"}


def default_curves_path():
    return str(resources.files("smstree") / "data" / "default_curves.txt")


def _parse_families(text):
    tokens = [t.strip() for t in str(text).split(",") if t.strip()]
    if not tokens:
        raise ConfigError("--families needs at least one family token")
    return tuple(CopulaFamily.from_token(t) for t in tokens)


def _load_config_file(path):
    if not path:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - set(DEFAULTS) - _PATH_AND_FLAG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve(args):
    """Merge defaults, the config file and explicit flags into one dict."""
    config = dict(DEFAULTS)
    config.update(COMMAND_DEFAULTS.get(args.command, {}))
    config.update(_load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("func", "config", "prior", "command"):
            continue
        if value is not None:
            config[key] = value
    priors = dict(config.get("priors") or {})
    for item in args.prior or ():
        family, sep, spec = item.partition("=")
        if not sep:
            raise ConfigError(f"--prior expects FAMILY=FORM:PARAMS, got {item!r}")
        priors[family.strip()] = spec.strip()
    config["priors"] = priors
    config["families"] = _parse_families(config["families"])
    if int(config["seed"]) != config["seed"]:
        raise ConfigError("--seed must be an integer")
    if config["threads"] is None:
        config["threads"] = os.cpu_count() or 1
    return config


def _echo(config, command):
    lines = [f"command={command}"]
    for key in sorted(config):
        if key in ("threads", "output", "plot_output"):  # results do not depend on these
            continue
        value = config[key]
        if key == "families":
            value = ",".join(f.value for f in value)
        elif key == "priors":
            value = json.dumps(value, sort_keys=True)
        lines.append(f"{key}={value}")
    return lines


def _require_file(path, what):
    if not path:
        raise ConfigError(f"{what} path is required")
    if not os.path.isfile(path):
        raise ConfigError(f"{what} {path!r} does not exist")
    return path


def _require_output(config):
    out = config.get("output")
    if not out:
        raise ConfigError("--output is required")
    parent = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"cannot write to {out!r}")
    return out


def _priors(config):
    out = {}
    for family in config["families"]:
        spec = config["priors"].get(family.value)
        prior = FamilyPrior.parse(family, spec) if spec else default_prior(family)
        if not config["jacobian"]:
            prior = FamilyPrior(prior.family, prior.form, prior.params, jacobian=False)
        out[family] = prior
    return out


def cmd_curves(config):
    out = _require_output(config)
    plot = config.get("plot_output") or os.path.splitext(out)[0] + "_plot.csv"
    curves = build_curves(config["families"], _priors(config), float(config["step"]),
                          int(config["resolution"]), int(config["threads"]))
    comments = _echo(config, "curves")
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    buf.write("rho,family,raw,posterior\n")
    for c in curves:
        for r, raw, post in zip(c.rho_grid, c.raw_values, c.posterior_values):
            buf.write(f"{r:.17g},{c.family.value},{raw:.17g},{post:.17g}\n")
    save_curves(curves, out, comments)
    atomic_write(plot, buf.getvalue())
    print(f"wrote {len(curves)} curves to {out} and plot data to {plot}")
    return 0


def _load_sms_curves(config):
    path = config.get("curves") or default_curves_path()
    _require_file(path, "curve file")
    curves = load_curves(path)
    have = {c.family for c in curves}
    missing = [f.value for f in config["families"] if f not in have]
    if missing:
        raise ConfigError(f"curve file {path!r} has no curves for: {', '.join(missing)}")
    return curves


def cmd_learn(config):
    out = _require_output(config)
    source = _require_file(config.get("input"), "input")
    if config.get("synthesize"):
        truth = load_tree(source)
        data = sample_tree(truth, int(config["samples"]), int(config["seed"]))
        buf = io.StringIO()
        write_csv(data, buf, _echo(config, "learn --synthesize"))
        atomic_write(out, buf.getvalue())
        print(f"sampled M={data.M} rows over n={data.n} variables to {out}")
        return 0
    data = read_csv(source)
    cfg = LearnConfig(config["families"], config["method"], float(config["mle_tolerance"]),
                      int(config["seed"]), int(config["threads"]),
                      bool(config.get("refine_mle")))
    curves = _load_sms_curves(config) if cfg.method == "sms" else None
    tree = learn(data, cfg, curves)
    timing = learn_timing(data, cfg, curves=curves)
    save_tree(tree, out, _echo(config, "learn"))
    print(f"n={data.n} M={data.M} edges={len(tree.edges)} "
          f"scoring_seconds={timing.wall_seconds:.6g}")
    return 0


def _comment_value(comments, key):
    prefix = f"{key}="
    for line in comments:
        if line.startswith(prefix):
            return line[len(prefix):]
    return None


def cmd_eval(config):
    out = _require_output(config)
    model_path = _require_file(config.get("model"), "model")
    test = read_csv(_require_file(config.get("input"), "input"))
    tree = load_tree(model_path)
    comments = read_tree_comments(model_path)
    train_path = config.get("train") or _comment_value(comments, "input")
    train = read_csv(_require_file(train_path, "training data"))
    model = FittedModel.fit(tree, train)
    score = avg_test_logprob(model, test)
    method = _comment_value(comments, "method") or "model"
    config = dict(config, train=train_path)
    text = format_report([SplitResult(0, method, "avg_logprob", score)], _echo(config, "eval"))
    atomic_write(out, text)
    print(f"avg_logprob={score:.10g}")
    return 0


def cmd_compare(config):
    out = _require_output(config)
    data = read_csv(_require_file(config.get("input"), "input"))
    common = dict(mle_tolerance=float(config["mle_tolerance"]), seed=int(config["seed"]),
                  threads=1)
    methods = {
        "sms": LearnConfig(config["families"], "sms", **common),
        "mle": LearnConfig(config["families"], "mle", **common),
    }
    if config.get("gaussian_baseline"):
        methods["gaussian"] = LearnConfig((CopulaFamily.GAUSSIAN,), "sms", **common)
    curves = _load_sms_curves(config)
    rows = crossval_report(data, int(config["folds"]), methods, curves,
                           seed=int(config["seed"]), threads=int(config["threads"]))
    atomic_write(out, format_report(rows, _echo(config, "compare")))
    print(f"wrote {len(rows)} report rows for {config['folds']} splits to {out}")
    return 0


def cmd_verify(config):
    out = _require_output(config)
    thetas = config.get("theta")
    reports, errors = [], []
    for family in config["families"]:
        try:
            reports.extend(default_checks(family, thetas, int(config["resolution"])))
        except NumericalError as exc:
            errors.append(f"{family.value}: {exc}")
            print(f"numerical error: {family.value}: {exc}", file=sys.stderr)
        except ConfigError:
            raise
    atomic_write(out, format_reports(reports, _echo(config, "verify")))
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"FAIL {r.family.value} {r.check} theta1={r.theta1} theta2={r.theta2} "
              f"worst={r.worst_violation:.3g}", file=sys.stderr)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    if errors:
        return NumericalError.exit_code
    return 1 if failed else 0


def _theta_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid theta list {text!r}") from exc


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", help="input CSV (or ground-truth model with --synthesize)")
    shared.add_argument("--output", help="output file, written atomically")
    shared.add_argument("--families", help="comma-separated family tokens")
    shared.add_argument("--seed", type=int, help="random seed (default 0)")
    shared.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    shared.add_argument("--config", help="JSON file with default settings")
    shared.add_argument("--resolution", type=int, help="Gauss-Legendre nodes per axis")

    parser = argparse.ArgumentParser(prog="sms", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curves", parents=[shared], help="build characteristic curves")
    p.add_argument("--step", type=float, help="rho grid step (default 0.01)")
    p.add_argument("--prior", action="append",
                   help="FAMILY=FORM:key=value,... (repeatable)")
    p.add_argument("--no-jacobian", dest="jacobian", action="store_false", default=None,
                   help="omit the theta-to-rho change-of-variables term")
    p.add_argument("--plot-output", help="plot CSV path (default <output>_plot.csv)")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("learn", parents=[shared], help="learn a copula tree")
    p.add_argument("--method", choices=("sms", "mle"))
    p.add_argument("--curves", help="curve file (default: bundled curves)")
    p.add_argument("--mle-tolerance", dest="mle_tolerance", type=float)
    p.add_argument("--refine-mle", dest="refine_mle", action="store_true", default=None)
    p.add_argument("--synthesize", action="store_true", default=None,
                   help="sample a CSV from the ground-truth model given as --input")
    p.add_argument("--samples", type=int, help="rows to sample with --synthesize")
    p.set_defaults(func=cmd_learn, prior=None)

    p = sub.add_parser("eval", parents=[shared], help="held-out log probability of a model")
    p.add_argument("--model", help="learned model file")
    p.add_argument("--train", help="training CSV for the marginals "
                                   "(default: the input recorded in the model)")
    p.set_defaults(func=cmd_eval, prior=None)

    p = sub.add_parser("compare", parents=[shared], help="cross-validated SMS vs MLE report")
    p.add_argument("--folds", type=int)
    p.add_argument("--curves")
    p.add_argument("--mle-tolerance", dest="mle_tolerance", type=float)
    p.add_argument("--gaussian-baseline", dest="gaussian_baseline", action="store_true",
                   default=None, help="also score a Gaussian-only SMS model")
    p.set_defaults(func=cmd_compare, prior=None)

    p = sub.add_parser("verify", parents=[shared], help="numerical theory checks")
    p.add_argument("--theta", type=_theta_list, help="comma-separated parameter values")
    p.set_defaults(func=cmd_verify, prior=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve(args)
        density_clamps.reset()
        return args.func(config)
    except SMSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
