"""Evolutionary search for trees maximizing ``EMPC - lambda * leaves``.

Each iteration every population slot draws one variation operator (split,
prune, major rule mutation, minor rule mutation, crossover), builds a
candidate from a private random stream seeded by ``(seed, iteration, slot)``
and keeps whichever of incumbent and candidate is fitter. Candidates are
generated against the population as it stood at the start of the iteration,
so results do not depend on the number of worker threads.
"""

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import genome as gn
from . import kernels
from .data import DataError
from .evaluate import ProfitParams, ScoredSample, empc
from .tree import TreeConstraints, check_constraints

log = logging.getLogger(__name__)

OPERATORS = ("split", "prune", "major_mutation", "minor_mutation", "crossover")
_INIT_STREAM = 0


def fitness(tree, data, p, lam):
    """Regularized EMPC of a fitted tree on ``data``."""
    s = ScoredSample(tree.predict(data), data.y)
    return empc(s, p).empc - lam * tree.n_leaves


@dataclass(frozen=True)
class EvolveConfig:
    population_size: int = 100
    operator_probs: tuple = (0.2, 0.2, 0.2, 0.2, 0.2)
    lam: float = 0.0
    min_iterations: int = 1000
    convergence_window: int = 100
    elite_fraction: float = 0.05
    max_iterations: int = 10000
    constraints: TreeConstraints = field(default_factory=TreeConstraints)
    seed: int = 0
    jobs: int = 1
    max_retries: int = 10
    debug: bool = False

    def __post_init__(self):
        probs = tuple(float(x) for x in self.operator_probs)
        object.__setattr__(self, "operator_probs", probs)
        if len(probs) != 5 or min(probs) < 0 or abs(sum(probs) - 1) > 1e-9:
            raise ValueError("operator_probs must be 5 non-negative numbers summing to 1")
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.elite_fraction <= 1:
            raise ValueError("elite_fraction must lie in (0, 1]")
        if self.convergence_window > self.min_iterations:
            raise ValueError("convergence_window cannot exceed min_iterations")
        if self.max_iterations < self.min_iterations:
            raise ValueError("max_iterations must be >= min_iterations")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def elite_size(self):
        return math.ceil(self.elite_fraction * self.population_size)


@dataclass
class FitnessTrace:
    best: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    best_size: list = field(default_factory=list)

    def record(self, fits, sizes):
        k = int(np.argmax(fits))
        self.best.append(float(fits[k]))
        self.mean.append(float(np.mean(fits)))
        self.best_size.append(int(sizes[k]))

    def __len__(self):
        return len(self.best)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "best", "mean", "best_size"])
        for i, row in enumerate(zip(self.best, self.mean, self.best_size)):
            w.writerow([i, repr(row[0]), repr(row[1]), row[2]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        out = cls()
        for row in csv.DictReader(io.StringIO(text)):
            out.best.append(float(row["best"]))
            out.mean.append(float(row["mean"]))
            out.best_size.append(int(row["best_size"]))
        return out


class EvolveResult(NamedTuple):
    best: object
    fitness: float
    trace: FitnessTrace
    iterations: int


class Individual:
    __slots__ = ("g", "fitness", "flat", "leaf", "node_n")

    def __init__(self, g, fitness, flat, leaf, node_n):
        self.g = g
        self.fitness = fitness
        self.flat = flat
        self.leaf = leaf
        self.node_n = node_n

    @property
    def n_leaves(self):
        return gn.n_leaves(self.g)

    def rows_at(self, i):
        lo = i
        hi = i + self.flat.size[i]
        return np.flatnonzero((self.leaf >= lo) & (self.leaf < hi))


class Search:
    """Fitness evaluation and variation operators over one training view."""

    def __init__(self, data, params, cfg):
        self.view = gn.TrainView(data)
        self.params = params
        self.cfg = cfg
        self.c = cfg.constraints
        self.cache = {}
        p = params
        self._empc_args = (p.clv, p.delta, p.phi, p.alpha, p.beta)

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, g):
        """Individual for ``g``, or None when it violates the constraints."""
        c = self.c
        if gn.n_leaves(g) > c.max_leaves:
            return None
        fl, leaf, node_n, node_pos = gn.route(g, self.view)
        if fl.depth.max() > c.max_depth:
            return None
        leaf_mask = fl.is_leaf
        ln = node_n[leaf_mask]
        if ln.min() < c.min_leaf:
            return None
        if (~leaf_mask).any() and node_n[~leaf_mask].min() < c.min_internal:
            return None
        lc = node_pos[leaf_mask]
        order = np.lexsort((ln, lc))
        key = (lc[order].tobytes(), ln[order].tobytes())
        value = self.cache.get(key)
        if value is None:
            value, _ = kernels.empc_leaves(lc, ln, *self._empc_args)
            value = max(value, 0.0)
            if len(self.cache) > 200_000:
                self.cache.clear()
            self.cache[key] = value
        return Individual(g, value - self.cfg.lam * ln.size, fl, leaf, node_n)

    # -- random split rules -----------------------------------------------------

    def random_rule(self, rows, rng):
        """``(var, code, mask)`` splitting ``rows`` into two non-empty parts, or None."""
        view = self.view
        for v in rng.permutation(view.p):
            x = view.codes[rows, v]
            u = np.unique(x)
            if u.size < 2:
                continue
            if not view.iscat[v]:
                return int(v), int(u[rng.integers(u.size - 1)]), 0
            while True:
                side = rng.random(u.size) < 0.5
                k = int(side.sum())
                if 0 < k < u.size:
                    mask = 0
                    for code in u[side]:
                        mask |= 1 << int(code)
                    return int(v), -1, mask
        return None

    # -- operators ------------------------------------------------------------

    def _retry(self, attempt, rng):
        for _ in range(self.cfg.max_retries):
            g = attempt(rng)
            if g is None:
                continue
            ind = self.evaluate(g)
            if ind is not None:
                return ind
        return None

    def split(self, ind, rng):
        c = self.c
        if ind.n_leaves >= c.max_leaves:
            return None
        fl = ind.flat
        ok = fl.is_leaf & (fl.depth < c.max_depth) & (ind.node_n >= c.min_split)
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            return None

        def attempt(rng):
            i = int(cand[rng.integers(cand.size)])
            rule = self.random_rule(ind.rows_at(i), rng)
            if rule is None:
                return None
            return gn.replace(ind.g, i, gn.make(*rule, None, None))

        return self._retry(attempt, rng)

    def prune(self, ind, rng):
        fl = ind.flat
        internal = ~fl.is_leaf
        if not internal.any():
            return None
        li = np.where(internal, fl.left, 0)
        ri = np.where(internal, fl.right, 0)
        cand = np.flatnonzero(internal & fl.is_leaf[li] & fl.is_leaf[ri])
        i = int(cand[rng.integers(cand.size)])
        return self.evaluate(gn.replace(ind.g, i, None))

    def major(self, ind, rng):
        cand = np.flatnonzero(~ind.flat.is_leaf)
        if cand.size == 0:
            return None

        def attempt(rng):
            i = int(cand[rng.integers(cand.size)])
            rule = self.random_rule(ind.rows_at(i), rng)
            if rule is None:
                return None
            sub = gn.subtree(ind.g, i)
            return gn.replace(ind.g, i, gn.make(*rule, sub[3], sub[4]))

        return self._retry(attempt, rng)

    def minor_step(self, ind, i, rng, direction=None):
        """Genome with node ``i``'s rule nudged, or None when no nudge exists.

        Numeric rules move to the neighbouring cutoff among the node's own
        distinct values (``direction`` -1 or +1, random when None);
        categorical rules flip one present level to the other side.
        """
        sub = gn.subtree(ind.g, i)
        var, code, mask = sub[0], sub[1], sub[2]
        u = np.unique(self.view.codes[ind.rows_at(i), var]).astype(np.int64)
        if code >= 0:
            valid = u[:-1]
            if direction is None:
                direction = -1 if rng.random() < 0.5 else 1
            if direction < 0:
                side = valid[valid < code]
                if side.size == 0:
                    return None
                new = int(side[-1])
            else:
                side = valid[valid > code]
                if side.size == 0:
                    return None
                new = int(side[0])
            return gn.replace(ind.g, i, gn.make(var, new, 0, sub[3], sub[4]))
        if u.size == 0:
            return None
        flip = int(u[rng.integers(u.size)])
        new_mask = mask ^ (1 << flip)
        k = sum(1 for lv in u if new_mask >> int(lv) & 1)
        if k == 0 or k == u.size:
            return None
        return gn.replace(ind.g, i, gn.make(var, -1, new_mask, sub[3], sub[4]))

    def minor(self, ind, rng):
        cand = np.flatnonzero(~ind.flat.is_leaf)
        if cand.size == 0:
            return None

        def attempt(rng):
            i = int(cand[rng.integers(cand.size)])
            return self.minor_step(ind, i, rng)

        return self._retry(attempt, rng)

    def crossover(self, ind, other, rng):
        i = int(rng.integers(gn.size(ind.g)))
        j = int(rng.integers(gn.size(other.g)))
        return self.evaluate(gn.replace(ind.g, i, gn.subtree(other.g, j)))

    def crossover_pair(self, a, b, rng):
        """Both children of a subtree swap; infeasible children fall back to their parent."""
        i = int(rng.integers(gn.size(a.g)))
        j = int(rng.integers(gn.size(b.g)))
        ca = self.evaluate(gn.replace(a.g, i, gn.subtree(b.g, j)))
        cb = self.evaluate(gn.replace(b.g, j, gn.subtree(a.g, i)))
        return (ca or a), (cb or b)

    # -- population -------------------------------------------------------------

    def initial(self, slot):
        rng = np.random.default_rng([self.cfg.seed, _INIT_STREAM, slot])
        rows = np.arange(self.view.n)
        if self.view.n >= self.c.min_split and self.c.max_depth >= 1 and self.c.max_leaves >= 2:
            for _ in range(self.cfg.max_retries):
                rule = self.random_rule(rows, rng)
                if rule is None:
                    break
                ind = self.evaluate(gn.make(*rule, None, None))
                if ind is not None:
                    return ind
        return None

    def leaf_individual(self):
        ind = self.evaluate(None)
        if ind is None:
            raise DataError("the training data violates the leaf-size constraint")
        return ind

    def vary(self, slot, iteration, pop):
        rng = np.random.default_rng([self.cfg.seed, iteration, slot])
        r = rng.random()
        probs = self.cfg.operator_probs
        op = 0
        acc = probs[0]
        while r >= acc and op < 4:
            op += 1
            acc += probs[op]
        ind = pop[slot]
        if op == 0:
            return self.split(ind, rng)
        if op == 1:
            return self.prune(ind, rng)
        if op == 2:
            return self.major(ind, rng)
        if op == 3:
            return self.minor(ind, rng)
        partner = pop[int(rng.integers(len(pop)))]
        return self.crossover(ind, partner, rng)


def init_population(data, cfg, params=None):
    """Initial individuals: random root splits, single leaves when none is feasible."""
    search = Search(data, params or ProfitParams(), cfg)
    return _init(search)


def _init(search):
    cfg = search.cfg
    pop = []
    fallback = 0
    for s in range(cfg.population_size):
        ind = search.initial(s)
        if ind is None:
            fallback += 1
            ind = search.leaf_individual()
        pop.append(ind)
    if fallback == cfg.population_size:
        log.warning("no feasible root split; starting from single-leaf trees")
    return pop


def _chunks(n, k):
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(k) if bounds[i] < bounds[i + 1]]


def evolve(data, p, cfg, on_iteration=None):
    """Run the search; returns :class:`EvolveResult` with the fittest tree found.

    ``on_iteration(iteration, population)`` is called after every iteration
    (the initial population is iteration 0).
    """
    search = Search(data, p, cfg)
    pop = _init(search)
    trace = FitnessTrace()

    def snapshot(it):
        fits = np.array([ind.fitness for ind in pop])
        trace.record(fits, [ind.n_leaves for ind in pop])
        if cfg.debug:
            _debug_check(search, pop, it)
        if on_iteration is not None:
            on_iteration(it, pop)
        return fits

    fits = snapshot(0)
    k = cfg.elite_size
    elite = np.sort(fits)[-k:].mean()
    stall = 0
    it = 0
    pool = ThreadPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    chunks = _chunks(cfg.population_size, cfg.jobs)
    try:
        for it in range(1, cfg.max_iterations + 1):
            current = list(pop)
            if pool is None:
                cands = [search.vary(s, it, current) for s in range(len(current))]
            else:
                parts = pool.map(lambda rg: [search.vary(s, it, current) for s in rg], chunks)
                cands = [c for part in parts for c in part]
            for s, cand in enumerate(cands):
                if cand is not None and cand.fitness >= pop[s].fitness:
                    pop[s] = cand
            fits = snapshot(it)
            new_elite = np.sort(fits)[-k:].mean()
            if new_elite > elite + 1e-12:
                elite = new_elite
                stall = 0
            else:
                stall += 1
            if it >= cfg.min_iterations and stall >= cfg.convergence_window:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    best = max(range(len(pop)), key=lambda s: (pop[s].fitness, -s))
    tree = gn.to_tree(pop[best].g, search.view)
    return EvolveResult(tree, float(pop[best].fitness), trace, it)


def _debug_check(search, pop, it):
    for s, ind in enumerate(pop):
        tree = gn.to_tree(ind.g, search.view)
        bad = check_constraints(tree, search.view.data, search.c)
        if bad:
            raise AssertionError(f"iteration {it}, slot {s}: {bad}")
        if tree.n_internal != tree.n_leaves - 1:
            raise AssertionError(f"iteration {it}, slot {s}: malformed tree")


# ---------------------------------------------------------------------------
# tree-level operator wrappers
# ---------------------------------------------------------------------------

def _lift(tree, data, cfg, params=None):
    search = Search(data, params or ProfitParams(), cfg)
    ind = search.evaluate(gn.from_tree(tree, search.view))
    if ind is None:
        raise ValueError("input tree violates the constraints on this data")
    return search, ind


def _lower(search, ind, fallback):
    return fallback if ind is None else gn.to_tree(ind.g, search.view)


def mutate_split(tree, data, cfg, rng):
    search, ind = _lift(tree, data, cfg)
    return _lower(search, search.split(ind, rng), tree)


def mutate_prune(tree, data, cfg, rng):
    search, ind = _lift(tree, data, cfg)
    return _lower(search, search.prune(ind, rng), tree)


def mutate_major(tree, data, cfg, rng):
    search, ind = _lift(tree, data, cfg)
    return _lower(search, search.major(ind, rng), tree)


def mutate_minor(tree, data, cfg, rng):
    search, ind = _lift(tree, data, cfg)
    return _lower(search, search.minor(ind, rng), tree)


def crossover(a, b, data, cfg, rng):
    search, ia = _lift(a, data, cfg)
    ib = search.evaluate(gn.from_tree(b, search.view))
    if ib is None:
        raise ValueError("second parent violates the constraints on this data")
    ca, cb = search.crossover_pair(ia, ib, rng)
    return gn.to_tree(ca.g, search.view), gn.to_tree(cb.g, search.view)
