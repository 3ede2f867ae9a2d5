"""Hot loops for tree growth, forest inference and TreeSHAP.

Every kernel exists twice: a loop form compiled by numba and a numpy form
used when numba is missing or disabled. Both forms consume the same random
keys and evaluate the same float expressions in the same order, so they grow
bit-identical trees and return identical predictions.
"""
from __future__ import annotations

import types

import numpy as np

from . import _accel

# ---------------------------------------------------------------------------
# tree growth
# ---------------------------------------------------------------------------


def node_capacity(n_samples: int, min_leaf: int) -> int:
    return 2 * (n_samples // min_leaf) + 1


def _grow_loop(X, y, samples, max_depth, min_leaf, mtry, keys):
    n = samples.shape[0]
    cap = 2 * (n // min_leaf) + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, 2), np.int64)

    work = samples.copy()
    buf = np.empty(n, np.int64)
    vals = np.empty(n)
    ys = np.empty(n, np.int64)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)

    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        c1 = 0
        for i in range(start, end):
            c1 += y[work[i]]
        c0 = m - c1
        counts[node, 0] = c0
        counts[node, 1] = c1
        if c0 == 0 or c1 == 0 or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        order = np.argsort(keys[node])
        best_g = np.inf
        best_f = -1
        best_t = 0.0
        evaluated = 0
        for k in range(order.shape[0]):
            if evaluated >= mtry:
                break
            f = order[k]
            for i in range(m):
                s = work[start + i]
                vals[i] = X[s, f]
                ys[i] = y[s]
            srt = np.argsort(vals[:m])
            if vals[srt[0]] == vals[srt[m - 1]]:
                continue
            evaluated += 1
            l1 = 0
            for i in range(m - 1):
                l1 += ys[srt[i]]
                nl = i + 1
                nr = m - nl
                if nr < min_leaf:
                    break
                a = vals[srt[i]]
                b = vals[srt[i + 1]]
                if a == b or nl < min_leaf:
                    continue
                fl1 = float(l1)
                fl0 = float(nl - l1)
                fr1 = float(c1 - l1)
                fr0 = float(nr - (c1 - l1))
                fnl = float(nl)
                fnr = float(nr)
                g = (fnl - (fl0 * fl0 + fl1 * fl1) / fnl) + (fnr - (fr0 * fr0 + fr1 * fr1) / fnr)
                if g < best_g or (g == best_g and f < best_f):
                    best_g = g
                    best_f = f
                    t = (a + b) / 2.0
                    if t <= a:
                        t = b
                    best_t = t
        if best_f < 0:
            continue

        nl = 0
        for i in range(start, end):
            s = work[i]
            if X[s, best_f] < best_t:
                buf[nl] = s
                nl += 1
        j = nl
        for i in range(start, end):
            s = work[i]
            if not X[s, best_f] < best_t:
                buf[j] = s
                j += 1
        for i in range(m):
            work[start + i] = buf[i]

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lnode
        right[node] = rnode
        st_node[sp] = rnode
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lnode
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


def _best_split_numpy(Xn, yn, c1, min_leaf, mtry, key_row):
    m = yn.shape[0]
    best_g = np.inf
    best_f = -1
    best_t = 0.0
    evaluated = 0
    nl = np.arange(1, m)
    nr = m - nl
    fnl = nl.astype(np.float64)
    fnr = nr.astype(np.float64)
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for f in np.argsort(key_row):
        if evaluated >= mtry:
            break
        v = Xn[:, f]
        srt = np.argsort(v, kind="stable")
        vs = v[srt]
        if vs[0] == vs[-1]:
            continue
        evaluated += 1
        valid = size_ok & (vs[:-1] != vs[1:])
        if not valid.any():
            continue
        cum1 = np.cumsum(yn[srt])[:-1]
        fl1 = cum1.astype(np.float64)
        fl0 = fnl - fl1
        fr1 = c1 - fl1
        fr0 = fnr - fr1
        g = (fnl - (fl0 * fl0 + fl1 * fl1) / fnl) + (fnr - (fr0 * fr0 + fr1 * fr1) / fnr)
        g = np.where(valid, g, np.inf)
        i = int(np.argmin(g))
        gi = g[i]
        if gi < best_g or (gi == best_g and f < best_f):
            best_g = gi
            best_f = int(f)
            a = vs[i]
            b = vs[i + 1]
            t = (a + b) / 2.0
            best_t = b if t <= a else t
    return best_f, best_t


def _grow_numpy(X, y, samples, max_depth, min_leaf, mtry, keys):
    n = samples.shape[0]
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((0, 0))
        return len(feature) - 1

    new_node()
    work = samples.copy()
    stack = [(0, 0, n, 0)]
    while stack:
        node, start, end, depth = stack.pop()
        idx = work[start:end]
        yn = y[idx]
        m = end - start
        c1 = int(yn.sum())
        c0 = m - c1
        counts[node] = (c0, c1)
        if c0 == 0 or c1 == 0 or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        Xn = X[idx]
        best_f, best_t = _best_split_numpy(Xn, yn, float(c1), min_leaf, mtry, keys[node])
        if best_f < 0:
            continue
        go_left = Xn[:, best_f] < best_t
        work[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        nl = int(go_left.sum())
        lnode = new_node()
        rnode = new_node()
        feature[node] = best_f
        threshold[node] = best_t
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, start + nl, end, depth + 1))
        stack.append((lnode, start, start + nl, depth + 1))

    return (
        np.asarray(feature, np.int64),
        np.asarray(threshold, np.float64),
        np.asarray(left, np.int64),
        np.asarray(right, np.int64),
        np.asarray(counts, np.int64).reshape(-1, 2),
    )


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def _predict_loop(feature, threshold, left, right, value, X):
    n = X.shape[0]
    n_trees = feature.shape[0]
    out = np.empty(n)
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if X[r, feature[t, node]] < threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[r] = acc / n_trees
    return out


def _leaves_numpy(feature, threshold, left, right, X, t):
    n = X.shape[0]
    node = np.zeros(n, np.int64)
    f = feature[t]
    active = np.nonzero(f[node] >= 0)[0]
    while active.size:
        na = node[active]
        go_left = X[active, f[na]] < threshold[t, na]
        node[active] = np.where(go_left, left[t, na], right[t, na])
        active = active[f[node[active]] >= 0]
    return node


def _predict_numpy(feature, threshold, left, right, value, X):
    acc = np.zeros(X.shape[0])
    for t in range(feature.shape[0]):
        acc += value[t, _leaves_numpy(feature, threshold, left, right, X, t)]
    return acc / feature.shape[0]


def _cover_loop(feature, threshold, left, right, X):
    n_trees, cap = feature.shape
    cover = np.zeros((n_trees, cap), np.int64)
    for t in range(n_trees):
        for r in range(X.shape[0]):
            node = 0
            cover[t, 0] += 1
            while feature[t, node] >= 0:
                if X[r, feature[t, node]] < threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
                cover[t, node] += 1
    return cover


def _cover_numpy(feature, threshold, left, right, X):
    n_trees, cap = feature.shape
    cover = np.zeros((n_trees, cap), np.int64)
    n = X.shape[0]
    for t in range(n_trees):
        node = np.zeros(n, np.int64)
        cover[t] += np.bincount(node, minlength=cap)
        active = np.nonzero(feature[t, node] >= 0)[0]
        while active.size:
            na = node[active]
            go_left = X[active, feature[t, na]] < threshold[t, na]
            node[active] = np.where(go_left, left[t, na], right[t, na])
            cover[t] += np.bincount(node[active], minlength=cap)
            active = active[feature[t, node[active]] >= 0]
    return cover


# ---------------------------------------------------------------------------
# TreeSHAP (path-dependent)
# ---------------------------------------------------------------------------
# A path element is (feature, zero_fraction, one_fraction, weight). Each node
# depth owns one fixed-width segment of the path buffers.


# One-fractions are always indicators (0 or 1), and rcp[k] holds 1 / k, so
# the inner loops multiply instead of divide.


def _extend(pf, pz, po, pw, src, off, ud, zf, of, fi, rcp):
    """Copy the parent path from ``src`` into ``off`` and append one element."""
    for i in range(ud):
        pf[off + i] = pf[src + i]
        pz[off + i] = pz[src + i]
        po[off + i] = po[src + i]
    pf[off + ud] = fi
    pz[off + ud] = zf
    po[off + ud] = of
    pw[off + ud] = 1.0 if ud == 0 else 0.0
    r = rcp[ud + 1]
    if of != 0.0:
        for i in range(ud - 1, -1, -1):
            w = pw[src + i]
            pw[off + i + 1] += w * ((i + 1) * r)
            pw[off + i] = zf * w * ((ud - i) * r)
    else:
        for i in range(ud - 1, -1, -1):
            pw[off + i] = zf * pw[src + i] * ((ud - i) * r)


def _unwind(pf, pz, po, pw, off, ud, pi, rcp):
    of = po[off + pi]
    zf = pz[off + pi]
    n1 = float(ud + 1)
    r = rcp[ud + 1]
    if of != 0.0:
        nxt = pw[off + ud]
        for i in range(ud - 1, -1, -1):
            tmp = pw[off + i]
            w = nxt * n1 * rcp[i + 1]
            pw[off + i] = w
            nxt = tmp - w * zf * ((ud - i) * r)
    else:
        s = n1 / zf
        for i in range(ud - 1, -1, -1):
            pw[off + i] = pw[off + i] * s * rcp[ud - i]
    for i in range(pi, ud):
        pf[off + i] = pf[off + i + 1]
        pz[off + i] = pz[off + i + 1]
        po[off + i] = po[off + i + 1]


def _shap_tree(feature, threshold, left, right, value, frac, x, phi, base, bufs, fbufs, stride):
    # leaves equal to ``base`` contribute nothing (attributions ignore a
    # constant shift of every leaf value), so they are never visited
    pf, s_node, s_depth, s_ud, s_f, hot_idx = bufs
    pz, po, pw, s_z, s_o, nxt, tot, zh, rcp = fbufs

    s_node[0] = 0
    s_depth[0] = 0
    s_ud[0] = 0
    s_z[0] = 1.0
    s_o[0] = 1.0
    s_f[0] = -1
    sp = 1
    while sp > 0:
        sp -= 1
        node = s_node[sp]
        d = s_depth[sp]
        ud = s_ud[sp]
        off = d * stride
        _extend(pf, pz, po, pw, off - stride, off, ud, s_z[sp], s_o[sp], s_f[sp], rcp)

        f = feature[node]
        if f < 0:
            v = value[node] - base
            # elements with one-fraction 0 share a single weighted pass;
            # the rest run their unwind chains interleaved
            n_hot = 0
            n_cold = 0
            for i in range(1, ud + 1):
                if po[off + i] == 1.0:
                    hot_idx[n_hot] = i
                    n_hot += 1
                else:
                    n_cold += 1
            if n_cold > 0:
                s0 = 0.0
                for i in range(ud - 1, -1, -1):
                    s0 += pw[off + i] * rcp[ud - i]
                s0 *= ud + 1
                for i in range(1, ud + 1):
                    if po[off + i] == 0.0:
                        phi[pf[off + i]] -= s0 * v
            if n_hot > 0:
                # one-fractions are indicators, so hot elements have o == 1
                for j in range(n_hot):
                    nxt[j] = pw[off + ud]
                    tot[j] = 0.0
                    zh[j] = pz[off + hot_idx[j]]
                for i in range(ud - 1, -1, -1):
                    a = rcp[i + 1]
                    c = float(ud - i)
                    p_i = pw[off + i]
                    for j in range(n_hot):
                        tmp = nxt[j] * a
                        tot[j] += tmp
                        nxt[j] = p_i - tmp * zh[j] * c
                for j in range(n_hot):
                    phi[pf[off + hot_idx[j]]] += tot[j] * (ud + 1) * (1.0 - zh[j]) * v
            continue

        if x[f] < threshold[node]:
            hot = left[node]
            cold = right[node]
        else:
            hot = right[node]
            cold = left[node]
        iz = 1.0
        io = 1.0
        k = ud + 1
        for i in range(ud + 1):
            if pf[off + i] == f:
                k = i
                break
        nud = ud
        if k <= ud:
            iz = pz[off + k]
            io = po[off + k]
            _unwind(pf, pz, po, pw, off, ud, k, rcp)
            nud = ud - 1
        cz = frac[cold] * iz
        if cz > 0.0 and not (feature[cold] < 0 and value[cold] == base):
            s_node[sp] = cold
            s_depth[sp] = d + 1
            s_ud[sp] = nud + 1
            s_z[sp] = cz
            s_o[sp] = 0.0
            s_f[sp] = f
            sp += 1
        hz = frac[hot] * iz
        # with both fractions zero every leaf below contributes nothing
        if (hz > 0.0 or io > 0.0) and not (feature[hot] < 0 and value[hot] == base):
            s_node[sp] = hot
            s_depth[sp] = d + 1
            s_ud[sp] = nud + 1
            s_z[sp] = hz
            s_o[sp] = io
            s_f[sp] = f
            sp += 1


def _shap_forest(feature, threshold, left, right, value, frac, depth, X, n_features):
    n = X.shape[0]
    n_trees = feature.shape[0]
    max_depth = 0
    for t in range(n_trees):
        max_depth = max(max_depth, depth[t])
    stride = max_depth + 2
    size = (max_depth + 2) * stride
    cap = 2 * max_depth + 4
    bufs = (
        np.zeros(size, np.int64),
        np.empty(cap, np.int64),
        np.empty(cap, np.int64),
        np.empty(cap, np.int64),
        np.empty(cap, np.int64),
        np.empty(stride, np.int64),
    )
    rcp = np.zeros(stride + 1)
    for i in range(1, stride + 1):
        rcp[i] = 1.0 / i
    fbufs = (
        np.zeros(size),
        np.zeros(size),
        np.zeros(size),
        np.empty(cap),
        np.empty(cap),
        np.empty(stride),
        np.empty(stride),
        np.empty(stride),
        rcp,
    )
    # per-tree baseline: whichever pure leaf value (0 or 1) is more common
    base = np.zeros(n_trees)
    for t in range(n_trees):
        n0 = 0
        n1 = 0
        for m in range(feature.shape[1]):
            if feature[t, m] < 0:
                continue
            for c in (left[t, m], right[t, m]):
                if feature[t, c] < 0:
                    if value[t, c] == 0.0:
                        n0 += 1
                    elif value[t, c] == 1.0:
                        n1 += 1
        base[t] = 1.0 if n1 > n0 else 0.0
    out = np.zeros((n, n_features))
    phi = np.zeros(n_features)
    for r in range(n):
        for t in range(n_trees):
            phi[:] = 0.0
            _shap_tree(feature[t], threshold[t], left[t], right[t], value[t], frac[t], X[r], phi, base[t], bufs, fbufs, stride)
            for j in range(n_features):
                out[r, j] += phi[j]
        for j in range(n_features):
            out[r, j] /= n_trees
    return out



def _rebind(func, **globals_):
    """Copy ``func`` with some module globals swapped, so the compiled walker calls compiled helpers."""
    g = dict(func.__globals__)
    g.update(globals_)
    return types.FunctionType(func.__code__, g, func.__name__, func.__defaults__, func.__closure__)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if _accel.HAVE_NUMBA:
    grow_tree_numba = _accel.jit(_grow_loop)
    predict_numba = _accel.jit(_predict_loop)
    cover_numba = _accel.jit(_cover_loop)
    _shap_tree_numba = _accel.jit(_rebind(_shap_tree, _extend=_accel.jit(_extend), _unwind=_accel.jit(_unwind)))
    shap_forest_numba = _accel.jit(_rebind(_shap_forest, _shap_tree=_shap_tree_numba))
else:  # pragma: no cover
    grow_tree_numba = predict_numba = cover_numba = shap_forest_numba = None


grow_tree_numpy = _grow_numpy
predict_numpy = _predict_numpy
cover_numpy = _cover_numpy
shap_forest_numpy = _shap_forest


def grow_tree(X, y, samples, max_depth, min_leaf, mtry, keys):
    fn = grow_tree_numba if _accel.USE_NUMBA else grow_tree_numpy
    return fn(X, y, samples, max_depth, min_leaf, mtry, keys)


def predict(feature, threshold, left, right, value, X):
    fn = predict_numba if _accel.USE_NUMBA else predict_numpy
    return fn(feature, threshold, left, right, value, X)


def cover(feature, threshold, left, right, X):
    fn = cover_numba if _accel.USE_NUMBA else cover_numpy
    return fn(feature, threshold, left, right, X)


def shap_forest(feature, threshold, left, right, value, frac, depth, X, n_features):
    fn = shap_forest_numba if _accel.USE_NUMBA else shap_forest_numpy
    return fn(feature, threshold, left, right, value, frac, depth, X, n_features)
