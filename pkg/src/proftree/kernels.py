"""Hot numeric kernels.

Each kernel has a numba implementation and a numpy/python one. The public
names (:func:`route`, :func:`empc_groups`, :func:`betainc`) dispatch on
``PROFTREE_NO_JIT``; the ``*_jit`` / ``*_numpy`` variants stay importable
so the benchmark and the tests can compare both paths directly.
"""

import math

import numpy as np

from ._jit import JIT_ENABLED, njit

_CF_MAX_ITER = 1000
_CF_EPS = 1e-15
_CF_TINY = 1e-300


# ---------------------------------------------------------------------------
# regularized incomplete beta
# ---------------------------------------------------------------------------

def _betacf(a, b, x):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    return np.nan


def _betainc_py(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


_betacf_jit = njit(_betacf)


@njit
def _betainc_jit(a, b, x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf_jit(a, b, x) / a
    return 1.0 - front * _betacf_jit(b, a, 1.0 - x) / b


def betainc(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)`` for scalar inputs.

    Raises ``FloatingPointError`` if the continued fraction fails to converge.
    """
    val = _betainc_jit(a, b, x) if JIT_ENABLED else _betainc_py(a, b, x)
    if val != val:
        raise FloatingPointError(f"incomplete beta did not converge: a={a}, b={b}, x={x}")
    return val


# ---------------------------------------------------------------------------
# ROC convex hull + exact EMPC
# ---------------------------------------------------------------------------

def _hull_py(n_churn, n_non):
    # groups are in descending-score order; vertex k is "target the top k groups"
    k = n_churn.shape[0]
    cx = np.zeros(k + 1, dtype=np.int64)
    cy = np.zeros(k + 1, dtype=np.int64)
    for i in range(k):
        cx[i + 1] = cx[i] + n_non[i]
        cy[i + 1] = cy[i] + n_churn[i]
    hull = np.zeros(k + 1, dtype=np.int64)
    h = 0
    for i in range(k + 1):
        while h >= 2:
            o = hull[h - 2]
            a = hull[h - 1]
            cross = (cx[a] - cx[o]) * (cy[i] - cy[o]) - (cy[a] - cy[o]) * (cx[i] - cx[o])
            if cross >= 0:
                h -= 1
            else:
                break
        hull[h] = i
        h += 1
    return hull[:h], cx, cy


def _empc_py(n_churn, n_non, clv, delta, phi, alpha, beta):
    hull, cx, cy = _hull_py(n_churn, n_non)
    total = cx[-1] + cy[-1]
    if total == 0:
        return np.nan, np.nan
    scale = clv / total
    benefit = 1.0 - delta
    cost = delta + phi
    mean = alpha / (alpha + beta)
    empc = 0.0
    eta = 0.0
    lo = -np.inf
    nv = hull.shape[0]
    for j in range(nv):
        if j + 1 < nv:
            dn = cx[hull[j + 1]] - cx[hull[j]]
            dc = cy[hull[j + 1]] - cy[hull[j]]
            if dc > 0:
                hi = (phi + cost * dn / dc) / benefit
            else:
                hi = np.inf
        else:
            hi = np.inf
        a = max(lo, 0.0)
        b = min(hi, 1.0)
        v = hull[j]
        if b > a and j > 0:
            w0 = _betainc_py(alpha, beta, b) - _betainc_py(alpha, beta, a)
            w1 = mean * (_betainc_py(alpha + 1.0, beta, b) - _betainc_py(alpha + 1.0, beta, a))
            empc += scale * (benefit * cy[v] * w1 - (phi * cy[v] + cost * cx[v]) * w0)
            eta += (cx[v] + cy[v]) / total * w0
        lo = hi
    return empc, eta


_hull_jit = njit(_hull_py)


@njit
def _empc_jit(n_churn, n_non, clv, delta, phi, alpha, beta):
    hull, cx, cy = _hull_jit(n_churn, n_non)
    total = cx[-1] + cy[-1]
    if total == 0:
        return np.nan, np.nan
    scale = clv / total
    benefit = 1.0 - delta
    cost = delta + phi
    mean = alpha / (alpha + beta)
    empc = 0.0
    eta = 0.0
    lo = -np.inf
    nv = hull.shape[0]
    for j in range(nv):
        if j + 1 < nv:
            dn = cx[hull[j + 1]] - cx[hull[j]]
            dc = cy[hull[j + 1]] - cy[hull[j]]
            if dc > 0:
                hi = (phi + cost * dn / dc) / benefit
            else:
                hi = np.inf
        else:
            hi = np.inf
        a = max(lo, 0.0)
        b = min(hi, 1.0)
        v = hull[j]
        if b > a and j > 0:
            w0 = _betainc_jit(alpha, beta, b) - _betainc_jit(alpha, beta, a)
            w1 = mean * (_betainc_jit(alpha + 1.0, beta, b) - _betainc_jit(alpha + 1.0, beta, a))
            empc += scale * (benefit * cy[v] * w1 - (phi * cy[v] + cost * cx[v]) * w0)
            eta += (cx[v] + cy[v]) / total * w0
        lo = hi
    return empc, eta


@njit
def _leaf_groups_jit(leaf_churn, leaf_n):
    # merge leaves with identical churn fraction, sorted by fraction descending
    m = leaf_n.shape[0]
    frac = np.empty(m)
    for i in range(m):
        frac[i] = leaf_churn[i] / leaf_n[i]
    order = np.argsort(-frac, kind="mergesort")
    gc = np.zeros(m, dtype=np.int64)
    gn = np.zeros(m, dtype=np.int64)
    g = -1
    prev = np.nan
    for i in range(m):
        k = order[i]
        if g < 0 or frac[k] != prev:
            g += 1
            prev = frac[k]
        gc[g] += leaf_churn[k]
        gn[g] += leaf_n[k] - leaf_churn[k]
    return gc[: g + 1], gn[: g + 1]


def _leaf_groups_numpy(leaf_churn, leaf_n):
    frac = leaf_churn / leaf_n
    uniq, inv = np.unique(-frac, return_inverse=True)
    gc = np.bincount(inv, weights=leaf_churn, minlength=uniq.size).astype(np.int64)
    gn = np.bincount(inv, weights=leaf_n - leaf_churn, minlength=uniq.size).astype(np.int64)
    return gc, gn


@njit
def _empc_leaves_jit(leaf_churn, leaf_n, clv, delta, phi, alpha, beta):
    gc, gn = _leaf_groups_jit(leaf_churn, leaf_n)
    return _empc_jit(gc, gn, clv, delta, phi, alpha, beta)


def _empc_leaves_numpy(leaf_churn, leaf_n, clv, delta, phi, alpha, beta):
    gc, gn = _leaf_groups_numpy(leaf_churn, leaf_n)
    return _empc_py(gc, gn, clv, delta, phi, alpha, beta)


def roc_hull_indices(n_churn, n_non):
    """Upper-hull vertices of the ROC staircase built from score groups.

    ``n_churn[i]`` / ``n_non[i]`` count churners / non-churners sharing the
    i-th highest distinct score. Returns ``(vertex, cum_non, cum_churn)`` where
    ``vertex`` indexes the cumulative arrays (0 is "target nobody").
    """
    n_churn = np.ascontiguousarray(n_churn, dtype=np.int64)
    n_non = np.ascontiguousarray(n_non, dtype=np.int64)
    if JIT_ENABLED:
        return _hull_jit(n_churn, n_non)
    return _hull_py(n_churn, n_non)


def empc_groups(n_churn, n_non, clv, delta, phi, alpha, beta):
    """Exact EMPC and expected profit-maximizing fraction from score groups."""
    n_churn = np.ascontiguousarray(n_churn, dtype=np.int64)
    n_non = np.ascontiguousarray(n_non, dtype=np.int64)
    args = (float(clv), float(delta), float(phi), float(alpha), float(beta))
    if JIT_ENABLED:
        empc, eta = _empc_jit(n_churn, n_non, *args)
    else:
        empc, eta = _empc_py(n_churn, n_non, *args)
    if empc != empc:
        raise FloatingPointError("EMPC evaluation failed")
    return float(empc), float(eta)


def empc_leaves(leaf_churn, leaf_n, clv, delta, phi, alpha, beta):
    """EMPC of a tree scorer given per-leaf churner counts and sizes."""
    args = (float(clv), float(delta), float(phi), float(alpha), float(beta))
    if JIT_ENABLED:
        return _empc_leaves_jit(leaf_churn, leaf_n, *args)
    return _empc_leaves_numpy(leaf_churn, leaf_n, *args)


# ---------------------------------------------------------------------------
# tree routing
# ---------------------------------------------------------------------------
#
# A tree is flattened in preorder into parallel arrays. ``left[k] < 0`` marks
# a leaf. Numeric nodes send a row left iff value <= thr[k]; categorical
# nodes read the value as a level code and send it left iff catmask[k, code].
# Codes outside the mask (unseen levels are encoded as -1) go right.


@njit
def route_jit(X, y, feat, thr, iscat, catmask, left, right):
    n = X.shape[0]
    nodes = feat.shape[0]
    nlev = catmask.shape[1]
    leaf = np.empty(n, dtype=np.int64)
    node_n = np.zeros(nodes, dtype=np.int64)
    node_pos = np.zeros(nodes, dtype=np.int64)
    for i in range(n):
        k = 0
        node_n[0] += 1
        node_pos[0] += y[i]
        while left[k] >= 0:
            v = X[i, feat[k]]
            if iscat[k]:
                c = int(v) if v == v else -1
                go = c >= 0 and c < nlev and catmask[k, c]
            else:
                go = v <= thr[k]
            k = left[k] if go else right[k]
            node_n[k] += 1
            node_pos[k] += y[i]
        leaf[i] = k
    return leaf, node_n, node_pos


def route_numpy(X, y, feat, thr, iscat, catmask, left, right):
    n = X.shape[0]
    nodes = feat.shape[0]
    nlev = catmask.shape[1]
    rows = np.arange(n)
    cur = np.zeros(n, dtype=np.int64)
    node_n = np.zeros(nodes, dtype=np.int64)
    node_pos = np.zeros(nodes, dtype=np.int64)
    node_n[0] = n
    node_pos[0] = int(y.sum())
    active = left[cur] >= 0
    while active.any():
        idx = rows[active]
        k = cur[idx]
        v = X[idx, feat[k]]
        with np.errstate(invalid="ignore"):
            num_go = v <= thr[k]
            code = np.where(np.isnan(v), -1, v).astype(np.int64)
        ok = (code >= 0) & (code < nlev)
        cat_go = np.zeros(idx.size, dtype=bool)
        if nlev:
            cat_go[ok] = catmask[k[ok], code[ok]]
        go = np.where(iscat[k], cat_go, num_go)
        nxt = np.where(go, left[k], right[k])
        cur[idx] = nxt
        node_n += np.bincount(nxt, minlength=nodes)
        node_pos += np.bincount(nxt, weights=y[idx], minlength=nodes).astype(np.int64)
        active[idx] = left[nxt] >= 0
    return cur, node_n, node_pos


def route(X, y, feat, thr, iscat, catmask, left, right):
    """Route every row to its leaf.

    Returns ``(leaf_node, node_n, node_pos)``: the preorder id of each row's
    leaf, and per-node row and churner counts.
    """
    if JIT_ENABLED:
        return route_jit(X, y, feat, thr, iscat, catmask, left, right)
    return route_numpy(X, y, feat, thr, iscat, catmask, left, right)
