"""Command-line interface: ``proftree {train,evaluate,tune,bench,synth,export}``.

Every tunable value can come from a flag, from a ``key = value`` config file
(``--config``), or from the built-in default, in that order of precedence.
Exit status is 0 on success, 1 on a computation error and 2 on a usage or
input/output error.
"""

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, load_csv, synth_churn, write_csv
from .evaluate import ProfitParams, ScoredSample, campaign_list, profit_report
from .evolve import EvolveConfig, evolve
from .tree import TreeConstraints, export, from_json, to_dot, to_json, to_text
from .tune import LambdaGrid, benchmark, tune_lambda

log = logging.getLogger("proftree")


class UsageError(Exception):
    """Bad flags, config keys or values."""


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    if isinstance(s, (list, tuple)):
        return tuple(float(x) for x in s)
    return tuple(float(x) for x in str(s).replace(";", ",").split(",") if x.strip())


# key -> (converter, default, help). These are the keys a config file may set.
SETTINGS = {
    "label": (str, "churn", "name of the churn label column"),
    "schema": (str, None, "schema override file (name = kind[: levels])"),
    "seed": (_int, None, "random seed; an OS-derived seed is drawn and logged when absent"),
    "jobs": (_int, 1, "maximum number of worker threads/processes"),
    "clv": (_float, 200.0, "customer lifetime value"),
    "offer_cost": (_float, 10.0, "cost d of the retention offer"),
    "contact_cost": (_float, 1.0, "cost f of contacting a customer"),
    "alpha": (_float, 6.0, "alpha of the Beta prior on the acceptance rate"),
    "beta": (_float, 14.0, "beta of the Beta prior on the acceptance rate"),
    "gamma": (_float, None, "fixed acceptance rate for MPC (default: prior mean)"),
    "population": (_int, 100, "population size"),
    "lam": (_float, 0.0, "penalty per leaf"),
    "operator_probs": (_floats, (0.2, 0.2, 0.2, 0.2, 0.2), "split,prune,major,minor,crossover probabilities"),
    "min_iterations": (_int, 1000, "iterations before convergence may stop the search"),
    "max_iterations": (_int, 10000, "hard iteration cap"),
    "window": (_int, 100, "stall length that counts as converged"),
    "elite_fraction": (_float, 0.05, "fraction of the population tracked for convergence"),
    "min_internal": (_int, 20, "minimum observations in an internal node"),
    "min_leaf": (_int, 7, "minimum observations in a leaf"),
    "max_depth": (_int, 9, "maximum depth"),
    "max_leaves": (_int, None, "maximum number of leaves (default 2**max_depth)"),
    "debug": (_bool, False, "check constraints on every generation"),
    "grid": (_floats, None, "comma-separated lambda grid for tune/bench"),
    "grid_lo": (_float, 0.01, "smallest lambda of the default log grid"),
    "grid_hi": (_float, 1.0, "largest lambda of the default log grid"),
    "grid_n": (_int, 20, "number of lambdas in the default log grid"),
    "replications": (_int, 5, "replications of twofold cross-validation"),
}


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(args, seeded=True):
    """Merge flags, config file and defaults into a plain dict of typed values.

    With ``seeded`` a missing seed is drawn from OS entropy and logged.
    """
    conf = read_config(args.config) if args.config else {}
    out = {}
    for key, (conv, default, _) in SETTINGS.items():
        flag = getattr(args, key, None)
        try:
            if flag is not None:
                out[key] = conv(flag)
            elif key in conf:
                out[key] = conv(conf[key])
            else:
                out[key] = default
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    if seeded and out["seed"] is None:
        out["seed"] = int(np.random.SeedSequence().entropy % 2**32)
        log.warning("no --seed given; using seed=%d", out["seed"])
    return out


def profit_params(s):
    try:
        return ProfitParams(clv=s["clv"], d=s["offer_cost"], f=s["contact_cost"], alpha=s["alpha"], beta=s["beta"], gamma=s["gamma"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def evolve_config(s):
    try:
        c = TreeConstraints(s["min_internal"], s["min_leaf"], s["max_depth"], s["max_leaves"])
        return EvolveConfig(
            population_size=s["population"],
            operator_probs=s["operator_probs"],
            lam=s["lam"],
            min_iterations=s["min_iterations"],
            convergence_window=s["window"],
            elite_fraction=s["elite_fraction"],
            max_iterations=s["max_iterations"],
            constraints=c,
            seed=s["seed"],
            jobs=s["jobs"],
            debug=s["debug"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def lambda_grid(s):
    try:
        if s["grid"] is not None:
            return LambdaGrid(s["grid"])
        return LambdaGrid.log_spaced(s["grid_lo"], s["grid_hi"], s["grid_n"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path, s, **kw):
    return load_csv(path, s["label"], schema_override=kw.pop("schema", s["schema"]), **kw)


def _read_tree(path):
    try:
        return from_json(Path(path).read_text(encoding="utf-8"))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: not a valid tree file ({exc})") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args):
    s = resolve(args)
    p = profit_params(s)
    cfg = evolve_config(s)
    data = _load(args.data, s)
    res = evolve(data, p, cfg)
    out = _out_dir(args)
    tree = res.best
    (out / "tree.json").write_text(to_json(tree), encoding="utf-8")
    (out / "tree.dot").write_text(to_dot(tree), encoding="utf-8")
    (out / "tree.txt").write_text(to_text(tree), encoding="utf-8")
    (out / "trace.csv").write_text(res.trace.to_csv(), encoding="utf-8")
    rep = profit_report(ScoredSample(tree.predict(data), data.y), p)
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(rep.to_text("train"), encoding="utf-8")
    print(f"iterations={res.iterations} fitness={res.fitness:.6f} leaves={tree.n_leaves}")
    print(rep.to_text("train"), end="")
    return 0


def campaign_csv(scores, eta):
    top = campaign_list(ScoredSample(scores, np.zeros(len(scores), dtype=np.int64)), eta)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "score", "rank"])
    for rank, i in enumerate(top, 1):
        w.writerow([int(i), repr(float(scores[i])), rank])
    return buf.getvalue()


def cmd_evaluate(args):
    s = resolve(args, seeded=False)
    p = profit_params(s)
    tree = _read_tree(args.tree)
    data = _load(args.data, s, schema=tree.schema, extend_levels=True)
    scores = tree.predict(data)
    rep = profit_report(ScoredSample(scores, data.y), p)
    out = _out_dir(args)
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(rep.to_text("evaluate"), encoding="utf-8")
    (out / "campaign.csv").write_text(campaign_csv(scores, rep.eta_empc), encoding="utf-8")
    print(rep.to_text("evaluate"), end="")
    return 0


def cmd_tune(args):
    s = resolve(args)
    p = profit_params(s)
    cfg = evolve_config(s)
    data = _load(args.data, s)
    res = tune_lambda(data, p, lambda_grid(s), cfg, s["seed"], s["replications"], s["jobs"])
    out = _out_dir(args)
    (out / "tune_curve.csv").write_text(res.curve_csv(), encoding="utf-8")
    (out / "tune.json").write_text(res.to_json(), encoding="utf-8")
    print(res.curve_csv(), end="")
    print(f"lambda_opt={res.lambda_opt!r}")
    return 0


def cmd_bench(args):
    s = resolve(args)
    p = profit_params(s)
    cfg = evolve_config(s)
    datasets = [_load(path, s) for path in args.data]
    names = [Path(path).stem for path in args.data]
    seen = {}
    for i, nm in enumerate(names):
        seen[nm] = seen.get(nm, 0) + 1
        if seen[nm] > 1:
            names[i] = f"{nm}_{seen[nm]}"
    res = benchmark(datasets, p, cfg, s["seed"], lambda_grid(s), names, s["replications"], s["jobs"])
    out = _out_dir(args)
    (out / "bench.json").write_text(res.to_json(), encoding="utf-8")
    (out / "bench.txt").write_text(res.to_text(), encoding="utf-8")
    (out / "boxplot.csv").write_text(res.boxplot_csv(), encoding="utf-8")
    print(res.to_text(), end="")
    return 0


def cmd_synth(args):
    s = resolve(args)
    try:
        data, truth = synth_churn(args.n, args.churn_rate, args.p_numeric, args.p_categorical, s["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = Path(args.output)
    schema_path = path.with_suffix(".schema")
    write_csv(data, path, schema_path)
    path.with_suffix(".planted.json").write_text(to_json(truth.planted), encoding="utf-8")
    print(f"wrote {path} ({data.n} rows, {data.n_churn} churners), {schema_path}")
    return 0


def cmd_export(args):
    tree = _read_tree(args.tree)
    text = export(tree, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_settings(sp, keys):
    for key in keys:
        conv, default, text = SETTINGS[key]
        flag = "--" + key.replace("_", "-")
        if conv is _bool:
            sp.add_argument(flag, action="store_const", const="true", default=None, help=text)
        else:
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            sp.add_argument(flag, default=None, metavar=key.upper(), help=f"{text} (default: {shown})")


PROFIT_KEYS = ("clv", "offer_cost", "contact_cost", "alpha", "beta", "gamma")
EVOLVE_KEYS = (
    "population", "lam", "operator_probs", "min_iterations", "max_iterations", "window",
    "elite_fraction", "min_internal", "min_leaf", "max_depth", "max_leaves", "debug",
)
GRID_KEYS = ("grid", "grid_lo", "grid_hi", "grid_n", "replications")


def build_parser():
    ap = argparse.ArgumentParser(prog="proftree", description="Profit-driven churn decision trees.")
    ap.add_argument("--version", action="version", version=f"proftree {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, keys=()):
        sp.add_argument("--config", help="key = value settings file")
        _add_settings(sp, ("label", "schema", "seed", "jobs") + tuple(keys))

    sp = sub.add_parser("train", help="evolve a tree on a CSV file")
    sp.add_argument("data")
    sp.add_argument("--out", default="proftree-out", help="output directory")
    common(sp, PROFIT_KEYS + EVOLVE_KEYS)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a CSV file with a saved tree")
    sp.add_argument("tree")
    sp.add_argument("data")
    sp.add_argument("--out", default="proftree-eval", help="output directory")
    common(sp, PROFIT_KEYS)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("tune", help="choose lambda by 5x2 cross-validation")
    sp.add_argument("data")
    sp.add_argument("--out", default="proftree-tune", help="output directory")
    common(sp, PROFIT_KEYS + EVOLVE_KEYS + GRID_KEYS)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("bench", help="compare models on one or more CSV files")
    sp.add_argument("data", nargs="+")
    sp.add_argument("--out", default="proftree-bench", help="output directory")
    common(sp, PROFIT_KEYS + EVOLVE_KEYS + GRID_KEYS)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("synth", help="write a synthetic churn CSV with a planted tree")
    sp.add_argument("output")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--churn-rate", type=float, default=0.3)
    sp.add_argument("--p-numeric", type=int, default=4)
    sp.add_argument("--p-categorical", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("export", help="convert a saved tree to json, dot or text")
    sp.add_argument("tree")
    sp.add_argument("--format", choices=("json", "dot", "text"), default="text")
    sp.add_argument("-o", "--output", help="file to write (default: stdout)")
    sp.set_defaults(func=cmd_export, config=None)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, OSError) as exc:
        print(f"proftree: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure inside the models is a computation error
        print(f"proftree: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
