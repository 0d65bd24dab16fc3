"""Profit- and accuracy-based evaluation of churn scores.

Conventions: label 1 is a churner. A customer is *targeted* (predicted to
churn) when its score is strictly above the threshold ``t``. Profit measures
are written in terms of the fraction of churners targeted (``eta_c``) and the
fraction of non-churners targeted (``eta_n``).
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ProfitParams:
    """Retention-campaign economics and the Beta prior on offer acceptance."""

    clv: float = 200.0
    d: float = 10.0
    f: float = 1.0
    alpha: float = 6.0
    beta: float = 14.0
    gamma: Optional[float] = None  # fixed acceptance rate for MPC; None means the prior mean

    def __post_init__(self):
        if not (self.clv > self.d > 0 and self.f > 0):
            raise ValueError("need CLV > d > 0 and f > 0")
        if not (self.alpha > 1 and self.beta > 1):
            raise ValueError("Beta prior needs alpha > 1 and beta > 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.alpha / (self.alpha + self.beta))
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def delta(self):
        return self.d / self.clv

    @property
    def phi(self):
        return self.f / self.clv

    def benefit(self, gamma):
        """Per-customer gain of targeting a churner at acceptance rate ``gamma``."""
        return self.clv * (gamma * (1 - self.delta) - self.phi)

    @property
    def cost(self):
        """Per-customer loss of targeting a non-churner."""
        return self.clv * (self.delta + self.phi)


@dataclass(frozen=True)
class CostBenefitMatrix:
    """Benefits ``b0, b1`` of correct and costs ``c0, c1`` of wrong classification.

    Index 0 is the churner ("case") class and a class-0 prediction means
    being targeted, which is how the churn campaign specializes this matrix.
    """

    b0: float = 0.0
    b1: float = 0.0
    c0: float = 0.0
    c1: float = 0.0

    @classmethod
    def churn(cls, params, gamma):
        return cls(b0=params.benefit(gamma), b1=0.0, c0=0.0, c1=params.cost)


class ScoredSample:
    """Scores paired with 0/1 labels, grouped by distinct score."""

    def __init__(self, scores, labels):
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels).ravel().astype(np.int64)
        if scores.shape != labels.shape:
            raise EvaluationError("scores and labels differ in length")
        if scores.size == 0:
            raise EvaluationError("empty sample")
        if not np.isin(labels, (0, 1)).all():
            raise EvaluationError("labels must be 0/1")
        self.scores = scores
        self.labels = labels
        self.n = scores.size
        self.n_churn = int(labels.sum())
        self.n_non = self.n - self.n_churn
        uniq, inv = np.unique(-scores, return_inverse=True)
        self.group_scores = -uniq  # descending
        self.group_churn = np.bincount(inv, weights=labels, minlength=uniq.size).astype(np.int64)
        self.group_non = np.bincount(inv, minlength=uniq.size).astype(np.int64) - self.group_churn
        self.cum_churn = np.concatenate([[0], np.cumsum(self.group_churn)])
        self.cum_non = np.concatenate([[0], np.cumsum(self.group_non)])

    @property
    def pi_churn(self):
        return self.n_churn / self.n

    @property
    def pi_non(self):
        return self.n_non / self.n

    def _require_both(self):
        if self.n_churn == 0 or self.n_non == 0:
            raise EvaluationError("measure needs both classes")

    def targeted_counts(self, t):
        """(churners, non-churners) with score > t."""
        k = int(np.searchsorted(-self.group_scores, -t, side="left"))
        return int(self.cum_churn[k]), int(self.cum_non[k])

    def targeted(self, t):
        """Fractions ``(eta_c, eta_n)`` of churners / non-churners with score > t."""
        c, nn = self.targeted_counts(t)
        eta_c = c / self.n_churn if self.n_churn else 0.0
        eta_n = nn / self.n_non if self.n_non else 0.0
        return eta_c, eta_n

    def cdf(self, t):
        """Empirical score CDFs ``(F_non(t), F_churn(t))`` = P(score <= t | class)."""
        eta_c, eta_n = self.targeted(t)
        return 1.0 - eta_n, 1.0 - eta_c

    def thresholds(self):
        """Every distinct score plus one value below the minimum (target everyone)."""
        low = np.nextafter(self.group_scores[-1], -np.inf)
        return np.concatenate([self.group_scores, [low]])


def _as_sample(s, labels=None):
    if isinstance(s, ScoredSample):
        return s
    return ScoredSample(s, labels)


# ---------------------------------------------------------------------------
# threshold and accuracy measures
# ---------------------------------------------------------------------------

def threshold_metrics(s, t):
    """Accuracy-type metrics at threshold ``t`` in class-0 (non-churn) terms.

    ``recall`` is the share of class-0 instances predicted 0 and ``precision``
    the share of class-0 predictions that are correct (``None`` when nothing
    is predicted 0), following the usual textbook definitions over the
    confusion matrix with ``score <= t`` predicting class 0.
    """
    s = _as_sample(s)
    tgt_c, tgt_n = s.targeted_counts(t)
    tn = s.n_non - tgt_n  # class 0 predicted 0
    fn = s.n_churn - tgt_c  # class 1 predicted 0
    accuracy = (tn + tgt_c) / s.n
    recall = tn / s.n_non if s.n_non else None
    pred0 = tn + fn
    precision = tn / pred0 if pred0 else None
    f1 = 2 * tn / (s.n_non + pred0) if (s.n_non + pred0) else None
    return {
        "accuracy": accuracy,
        "error_rate": 1.0 - accuracy,
        "recall": recall,
        "precision": precision,
        "f1": f1,
    }


def auc(s, labels=None):
    """Tie-corrected probability that a churner outscores a non-churner."""
    s = _as_sample(s, labels)
    s._require_both()
    lower_non = s.n_non - s.cum_non[1:]  # non-churners strictly below each group
    conc = int(np.dot(s.group_churn, lower_non))
    ties = int(np.dot(s.group_churn, s.group_non))
    return (2 * conc + ties) / (2 * s.n_churn * s.n_non)


def mer(s, labels=None):
    """Minimum error rate over all thresholds."""
    s = _as_sample(s, labels)
    errors = s.cum_non + (s.n_churn - s.cum_churn)
    return int(errors.min()) / s.n


# ---------------------------------------------------------------------------
# profit
# ---------------------------------------------------------------------------

def general_profit(s, t, cb):
    """Average profit per customer for a cost-benefit matrix at threshold ``t``."""
    s = _as_sample(s)
    eta_c, eta_n = s.targeted(t)
    pc, pn = s.pi_churn, s.pi_non
    return cb.b0 * pc * eta_c + cb.b1 * pn * (1 - eta_n) - cb.c0 * pc * (1 - eta_c) - cb.c1 * pn * eta_n


def churn_profit(s, t, p, gamma):
    """Average campaign profit per customer when targeting scores above ``t``."""
    s = _as_sample(s)
    eta_c, eta_n = s.targeted(t)
    return p.benefit(gamma) * s.pi_churn * eta_c - p.cost * s.pi_non * eta_n


class MpcResult(NamedTuple):
    mpc: float
    t_opt: float
    eta_mpc: float


class EmpcResult(NamedTuple):
    empc: float
    eta_empc: float


class EtaMeasures(NamedTuple):
    eta_precision: float
    eta_recall: float
    eta_f1: float


def _vertex_threshold(s, k):
    # lowest t that targets exactly the top k score groups
    if k < s.group_scores.size:
        return float(s.group_scores[k])
    return float(np.nextafter(s.group_scores[-1], -np.inf))


def mpc(s, p, labels=None):
    """Maximum profit at the fixed acceptance rate ``p.gamma``.

    Ties between thresholds resolve to the lowest threshold.
    """
    s = _as_sample(s, labels)
    if s.n_churn == 0:
        return MpcResult(0.0, float(s.group_scores[0]), 0.0)
    profit = (p.benefit(p.gamma) * s.cum_churn - p.cost * s.cum_non) / s.n
    best = profit.max()
    tol = 1e-12 * max(1.0, abs(best))
    k = int(np.flatnonzero(profit >= best - tol)[-1])
    eta = (s.cum_churn[k] + s.cum_non[k]) / s.n
    return MpcResult(float(profit[k]), _vertex_threshold(s, k), float(eta))


def empc(s, p, labels=None):
    """Expected maximum profit under the Beta acceptance prior, exactly."""
    s = _as_sample(s, labels)
    if s.n_churn == 0:
        return EmpcResult(0.0, 0.0)
    value, eta = kernels.empc_groups(s.group_churn, s.group_non, p.clv, p.delta, p.phi, p.alpha, p.beta)
    # the "target nobody" floor guards against round-off of a few ulps
    return EmpcResult(max(value, 0.0), min(max(eta, 0.0), 1.0))


def eta_f1(precision, recall):
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def campaign_list(s, eta):
    """Row indices of the top ``ceil(eta * N)`` scores, ties in input order."""
    s = _as_sample(s)
    size = math.ceil(eta * s.n - 1e-9) if eta > 0 else 0
    order = np.argsort(-s.scores, kind="stable")
    return order[:size]


def eta_measures(s, p, eta_empc=None, labels=None):
    """Hit rate, coverage and their harmonic mean on the EMPC campaign list."""
    s = _as_sample(s, labels)
    if eta_empc is None:
        eta_empc = empc(s, p).eta_empc
    top = campaign_list(s, eta_empc)
    if top.size == 0 or s.n_churn == 0:
        return EtaMeasures(0.0, 0.0, 0.0)
    hits = int(s.labels[top].sum())
    prec = hits / top.size
    rec = hits / s.n_churn
    return EtaMeasures(prec, rec, eta_f1(prec, rec))


@dataclass(frozen=True)
class RocHull:
    """Upper convex hull of the ROC staircase.

    ``x`` / ``y`` are the fractions of non-churners / churners targeted at each
    vertex, ``eta`` the overall fraction targeted and ``thresholds`` the
    lowest threshold realizing the vertex.
    """

    x: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    thresholds: np.ndarray

    def slopes(self):
        dx = np.diff(self.x)
        dy = np.diff(self.y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(dx > 0, dy / np.where(dx > 0, dx, 1), np.inf)


def roc_hull(s, labels=None):
    s = _as_sample(s, labels)
    s._require_both()
    idx, cx, cy = kernels.roc_hull_indices(s.group_churn, s.group_non)
    x = cx[idx] / s.n_non
    y = cy[idx] / s.n_churn
    eta = (cx[idx] + cy[idx]) / s.n
    thr = np.array([_vertex_threshold(s, int(k)) for k in idx])
    return RocHull(x, y, eta, thr)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    ("EMPC", "empc"),
    ("MPC", "mpc"),
    ("η̄_p", "eta_precision"),
    ("η̄_r", "eta_recall"),
    ("η̄_F", "eta_f1"),
    ("AUC", "auc"),
    ("MER", "mer"),
)


@dataclass(frozen=True)
class ProfitReport:
    empc: float
    mpc: float
    eta_empc: float
    eta_mpc: float
    t_opt: float
    eta_precision: float
    eta_recall: float
    eta_f1: float
    auc: float
    mer: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_text(self, name="model"):
        return format_table({name: self})


def profit_report(s, p, labels=None):
    """Every measure for one scored sample."""
    s = _as_sample(s, labels)
    e = empc(s, p)
    m = mpc(s, p)
    eta = eta_measures(s, p, e.eta_empc)
    both = s.n_churn > 0 and s.n_non > 0
    return ProfitReport(
        empc=e.empc,
        mpc=m.mpc,
        eta_empc=e.eta_empc,
        eta_mpc=m.eta_mpc,
        t_opt=m.t_opt,
        eta_precision=eta.eta_precision,
        eta_recall=eta.eta_recall,
        eta_f1=eta.eta_f1,
        auc=auc(s) if both else float("nan"),
        mer=mer(s),
    )


def format_table(reports, digits=3):
    """Aligned text table, one row per named report."""
    names = list(reports)
    width = max([len(n) for n in names] + [5])
    head = " ".join(f"{h:>8}" for h, _ in REPORT_COLUMNS)
    lines = [f"{'':<{width}} {head}"]
    for name in names:
        r = reports[name]
        row = " ".join(f"{getattr(r, key):>8.{digits}f}" for _, key in REPORT_COLUMNS)
        lines.append(f"{name:<{width}} {row}")
    return "\n".join(lines) + "\n"


def profit_curve(s, p, gamma=None):
    """Rows ``(t, eta, eta_churn, eta_non, profit)`` at every distinct threshold."""
    s = _as_sample(s)
    gamma = p.gamma if gamma is None else gamma
    rows = []
    for t in s.thresholds():
        eta_c, eta_n = s.targeted(t)
        eta = s.pi_churn * eta_c + s.pi_non * eta_n
        rows.append((float(t), eta, eta_c, eta_n, churn_profit(s, t, p, gamma)))
    return rows


def profit_curve_csv(s, p, gamma=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "eta", "eta_churn", "eta_nonchurn", "profit"])
    for row in profit_curve(s, p, gamma):
        w.writerow([repr(v) for v in row])
    return buf.getvalue()


def threshold_table(s):
    """Per-threshold accuracy metrics for every distinct cutoff."""
    s = _as_sample(s)
    return [(float(t), threshold_metrics(s, t)) for t in s.thresholds()]
