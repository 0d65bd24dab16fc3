"""Lambda selection by replicated twofold cross-validation, and model benchmarks."""

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import fit_greedy, prune_greedy
from .data import DataError, stratified_split
from .evaluate import REPORT_COLUMNS, ProfitReport, ScoredSample, empc, profit_report
from .evolve import EvolveConfig, evolve, fitness
from .tree import single_leaf

log = logging.getLogger(__name__)

MODELS = ("ProfTree", "Greedy", "Greedy+prune", "Constant")
METRICS = tuple(key for _, key in REPORT_COLUMNS)
LOWER_IS_BETTER = frozenset({"mer"})


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing, non-negative candidate values of the size penalty."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("lambda grid is empty")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError("lambda values must be finite and >= 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda grid must be strictly increasing")

    @classmethod
    def log_spaced(cls, lo=0.01, hi=1.0, n=20):
        if n == 1:
            return cls((float(lo),))
        return cls(tuple(np.geomspace(lo, hi, n)))

    def __len__(self):
        return len(self.values)


@dataclass
class TuneResult:
    """Cross-validated EMPC per lambda and the selected value."""

    lambdas: tuple
    mean: tuple
    sd: tuple
    lambda_opt: float
    fold_empc: tuple = ()  # per lambda, one test EMPC per (replication, fold)
    trees: dict = field(default_factory=dict, repr=False)  # (lambda idx, rep, fold) -> Tree

    def curve_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "mean_empc", "sd_empc"])
        for row in zip(self.lambdas, self.mean, self.sd):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @staticmethod
    def read_curve_csv(text):
        rows = list(csv.DictReader(io.StringIO(text)))
        return tuple((float(r["lambda"]), float(r["mean_empc"]), float(r["sd_empc"])) for r in rows)

    def to_dict(self):
        return {
            "lambdas": list(self.lambdas),
            "mean": list(self.mean),
            "sd": list(self.sd),
            "lambda_opt": self.lambda_opt,
            "fold_empc": [list(f) for f in self.fold_empc],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            tuple(d["lambdas"]),
            tuple(d["mean"]),
            tuple(d["sd"]),
            float(d["lambda_opt"]),
            tuple(tuple(f) for f in d["fold_empc"]),
        )


def select_lambda(lambdas, means):
    """Value with the largest mean; ties go to the larger lambda."""
    best = max(means)
    return max(lam for lam, m in zip(lambdas, means) if m == best)


def check_folds(data, plan):
    """Raise unless every fold holds both classes."""
    for r, fold, train, test in plan.pairs():
        for idx in (train, test):
            k = int(data.y[idx].sum())
            if k == 0 or k == idx.size:
                raise DataError(f"replication {r} fold {fold} holds a single class")


def job_seed(seed, *key):
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _fit_fold(args):
    data, p, cfg, train_idx, test_idx = args
    train = data.subset(train_idx)
    test = data.subset(test_idx)
    res = evolve(train, p, cfg)
    s = ScoredSample(res.best.predict(test), test.y)
    return res.best, empc(s, p).empc


def _run(tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(jobs, len(tasks))) as ex:
            return list(ex.map(_fit_fold, tasks))
    return [_fit_fold(t) for t in tasks]


def tune_lambda(data, p, grid=None, cfg=None, seed=0, replications=5, jobs=1, plan=None):
    """Pick the size penalty by replicated twofold cross-validated EMPC.

    Every lambda shares one fold plan. Each (lambda, replication, fold) job
    trains on one half with its own seed and is scored on the other half.
    A single-value grid returns that value without training.
    """
    grid = grid or LambdaGrid.log_spaced()
    cfg = cfg or EvolveConfig()
    if len(grid) == 1:
        lam = grid.values[0]
        return TuneResult((lam,), (float("nan"),), (float("nan"),), lam, ((),))
    plan = plan or stratified_split(data, replications, seed)
    check_folds(data, plan)
    keys = []
    tasks = []
    for li, lam in enumerate(grid.values):
        for r, fold, train, test in plan.pairs():
            c = replace(cfg, lam=lam, seed=job_seed(seed, li, r, fold), jobs=1)
            keys.append((li, r, fold))
            tasks.append((data, p, c, train, test))
    results = _run(tasks, jobs)
    per = [[] for _ in grid.values]
    trees = {}
    for key, (tree, value) in zip(keys, results):
        per[key[0]].append(value)
        trees[key] = tree
    means = tuple(float(np.mean(v)) for v in per)
    sds = tuple(float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for v in per)
    lam_opt = select_lambda(grid.values, means)
    log.info("lambda_opt=%g mean EMPC=%.6f", lam_opt, max(means))
    return TuneResult(grid.values, means, sds, lam_opt, tuple(tuple(v) for v in per), trees)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def average_ranks(values, higher_is_better=True):
    """Ranks starting at 1 for the best value; tied values share their mean rank."""
    v = np.asarray(values, dtype=np.float64)
    key = np.where(np.isnan(v), -np.inf, v) if higher_is_better else np.where(np.isnan(v), np.inf, -v)
    order = np.argsort(-key, kind="stable")
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and key[order[j + 1]] == key[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    return ranks


@dataclass
class BenchmarkResult:
    """Per-fold reports, per-dataset means and average ranks for every model."""

    datasets: tuple
    models: tuple
    lambda_opt: dict  # dataset -> lambda
    folds: dict  # dataset -> model -> list of (replication, fold, ProfitReport, train fitness)
    means: dict = field(init=False)
    ranks: dict = field(init=False)  # dataset -> metric -> list of ranks in model order
    average_rank: dict = field(init=False)  # metric -> list of ranks in model order

    def __post_init__(self):
        self.means = {
            ds: {m: {k: float(np.mean([getattr(f[2], k) for f in self.folds[ds][m]])) for k in METRICS} for m in self.models}
            for ds in self.datasets
        }
        self.ranks = {
            ds: {
                k: [float(x) for x in average_ranks([self.means[ds][m][k] for m in self.models], k not in LOWER_IS_BETTER)]
                for k in METRICS
            }
            for ds in self.datasets
        }
        self.average_rank = {
            k: [float(np.mean([self.ranks[ds][k][i] for ds in self.datasets])) for i in range(len(self.models))] for k in METRICS
        }

    def train_fitness(self, ds, model):
        return [f[3] for f in self.folds[ds][model]]

    def to_dict(self):
        return {
            "datasets": list(self.datasets),
            "models": list(self.models),
            "lambda_opt": self.lambda_opt,
            "folds": {
                ds: {m: [{"replication": r, "fold": k, "train_fitness": tf, "report": rep.to_dict()} for r, k, rep, tf in rows] for m, rows in per.items()}
                for ds, per in self.folds.items()
            },
            "means": self.means,
            "ranks": self.ranks,
            "average_rank": self.average_rank,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        folds = {
            ds: {m: [(f["replication"], f["fold"], ProfitReport.from_dict(f["report"]), f["train_fitness"]) for f in rows] for m, rows in per.items()}
            for ds, per in d["folds"].items()
        }
        return cls(tuple(d["datasets"]), tuple(d["models"]), d["lambda_opt"], folds)

    def to_text(self, digits=3):
        names = dict((key, head) for head, key in REPORT_COLUMNS)
        width = max(len(m) for m in self.models)
        dw = max([len(ds) for ds in self.datasets] + [7])
        out = []
        for ds in self.datasets:
            out.append(f"dataset {ds} (lambda_opt={self.lambda_opt[ds]:.4g})")
            out.append(f"{'':<{width}} " + " ".join(f"{names[k]:>8}" for k in METRICS))
            for m in self.models:
                out.append(f"{m:<{width}} " + " ".join(f"{self.means[ds][m][k]:>8.{digits}f}" for k in METRICS))
            out.append("")
        out.append("ranks (1 = best)")
        out.append(f"{'metric':<8} {'dataset':<{dw}} " + " ".join(f"{m:>{max(len(m), 6)}}" for m in self.models))
        for k in METRICS:
            for ds in self.datasets:
                out.append(f"{names[k]:<8} {ds:<{dw}} " + " ".join(f"{r:>{max(len(m), 6)}.2f}" for m, r in zip(self.models, self.ranks[ds][k])))
            out.append(f"{names[k]:<8} {'average':<{dw}} " + " ".join(f"{r:>{max(len(m), 6)}.2f}" for m, r in zip(self.models, self.average_rank[k])))
        return "\n".join(out) + "\n"

    def boxplot_csv(self):
        """Long-format per-fold values: dataset, model, replication, fold, metric, value."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "model", "replication", "fold", "metric", "value"])
        for ds in self.datasets:
            for m in self.models:
                for r, k, rep, _ in self.folds[ds][m]:
                    for key in METRICS:
                        w.writerow([ds, m, r, k, key, repr(float(getattr(rep, key)))])
        return buf.getvalue()


def benchmark(datasets, p, cfg=None, seed=0, grid=None, names=None, replications=5, jobs=1):
    """Compare the evolved tree (tuned lambda) with greedy, pruned greedy and constant scorers.

    All models of one dataset see the same fold plan. The evolved trees for
    the selected lambda are the ones already trained during tuning.
    """
    if not datasets:
        raise ValueError("benchmark needs at least one dataset")
    cfg = cfg or EvolveConfig()
    names = tuple(names or (f"data{i + 1}" for i in range(len(datasets))))
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    lam_opt = {}
    folds = {}
    for di, (name, data) in enumerate(zip(names, datasets)):
        dseed = job_seed(seed, di)
        plan = stratified_split(data, replications, dseed)
        tr = tune_lambda(data, p, grid, cfg, dseed, replications, jobs, plan)
        lam = tr.lambda_opt
        lam_opt[name] = lam
        li = list(tr.lambdas).index(lam)
        per = {m: [] for m in MODELS}
        for r, k, train_idx, test_idx in plan.pairs():
            train = data.subset(train_idx)
            test = data.subset(test_idx)
            tree = tr.trees.get((li, r, k))
            if tree is None:
                c = replace(cfg, lam=lam, seed=job_seed(dseed, li, r, k), jobs=1)
                tree = evolve(train, p, c).best
            greedy = fit_greedy(train, cfg.constraints)
            models = {
                "ProfTree": tree,
                "Greedy": greedy,
                "Greedy+prune": prune_greedy(greedy, train, lam, p),
                "Constant": single_leaf(train),
            }
            for m, t in models.items():
                rep = profit_report(ScoredSample(t.predict(test), test.y), p)
                per[m].append((r, k, rep, fitness(t, train, p, lam)))
        folds[name] = per
        log.info("benchmark %s done", name)
    return BenchmarkResult(names, MODELS, lam_opt, folds)

