"""Compiled inner loops: CART split search and projected-tree traversal.

Everything here works on flat numpy arrays so numba can compile it in
nopython mode. The Python-facing API lives in ``forest`` and ``projected``.
"""

import numba
import numpy as np

LEAF = -1


@numba.njit(cache=True)
def best_split_regression(X, y, idx, w, features, min_leaf):
    """Best variance-reduction split among ``features`` for node samples ``idx``.

    ``w`` holds the bootstrap multiplicity of each sample in ``idx``. Returns
    ``(feature, threshold, gain)``; feature is -1 when no admissible split
    exists. Scanning features in increasing index order with a strict ``>``
    keeps the lowest feature / lowest threshold on ties.
    """
    m = idx.shape[0]
    W = 0.0
    s = 0.0
    ss = 0.0
    for j in range(m):
        wi = w[j]
        yi = y[idx[j]]
        W += wi
        s += wi * yi
        ss += wi * yi * yi
    parent = s * s / W
    sse = ss - parent
    best_f = -1
    best_t = 0.0
    best_gain = 0.0
    if sse <= 1e-12 * max(1.0, ss):
        return best_f, best_t, best_gain
    tol = 1e-12 * sse
    vals = np.empty(m)
    for fi in range(features.shape[0]):
        f = features[fi]
        for j in range(m):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals)
        wl = 0.0
        sl = 0.0
        for r in range(m - 1):
            j = order[r]
            wl += w[j]
            sl += w[j] * y[idx[j]]
            v = vals[j]
            vn = vals[order[r + 1]]
            if vn <= v:
                continue
            wr = W - wl
            if wl < min_leaf or wr < min_leaf:
                continue
            sr = s - sl
            gain = sl * sl / wl + sr * sr / wr - parent
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                best_t = 0.5 * (v + vn)
    return best_f, best_t, best_gain


@numba.njit(cache=True)
def best_split_classification(X, y, idx, w, features, min_leaf, n_classes):
    """Best Gini-decrease split; same contract as the regression variant."""
    m = idx.shape[0]
    tot = np.zeros(n_classes)
    W = 0.0
    for j in range(m):
        tot[y[idx[j]]] += w[j]
        W += w[j]
    sq = 0.0
    for c in range(n_classes):
        sq += tot[c] * tot[c]
    parent = sq / W
    best_f = -1
    best_t = 0.0
    best_gain = 0.0
    # pure node
    if W - parent <= 1e-12 * W:
        return best_f, best_t, best_gain
    tol = 1e-12 * W
    vals = np.empty(m)
    left = np.empty(n_classes)
    for fi in range(features.shape[0]):
        f = features[fi]
        for j in range(m):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals)
        left[:] = 0.0
        wl = 0.0
        for r in range(m - 1):
            j = order[r]
            left[y[idx[j]]] += w[j]
            wl += w[j]
            v = vals[j]
            vn = vals[order[r + 1]]
            if vn <= v:
                continue
            wr = W - wl
            if wl < min_leaf or wr < min_leaf:
                continue
            ql = 0.0
            qr = 0.0
            for c in range(n_classes):
                ql += left[c] * left[c]
                rc = tot[c] - left[c]
                qr += rc * rc
            gain = ql / wl + qr / wr - parent
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                best_t = 0.5 * (v + vn)
    return best_f, best_t, best_gain


@numba.njit(cache=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf id of every row of ``X`` (``<=`` goes left)."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True)
def projected_traverse(feature, threshold, left, right, x, in_s, XT, boot,
                       inbag, min_node_size, buf, queue, lo, hi):
    """Level-order projected descent of one tree.

    At a split on a feature in S only the child holding ``x`` is followed and
    the surviving in-bag samples are filtered by the split; splits outside S
    send the frontier to both children. A split whose filter would leave
    fewer than ``min_node_size`` bootstrap observations is not applied and
    its node is frozen (not descended). ``lo``/``hi`` receive the retained
    constraints as ``(lo, hi]`` bounds; ``buf[:m]`` the surviving in-bag
    sample ids. ``XT`` is the transposed (p, n) training matrix. Returns
    ``(m, bootstrap_mass)``.
    """
    p = x.shape[0]
    for j in range(p):
        lo[j] = -np.inf
        hi[j] = np.inf
    m = inbag.shape[0]
    mass = 0
    for r in range(m):
        buf[r] = inbag[r]
        mass += boot[inbag[r]]
    qh = 0
    qt = 0
    queue[qt] = 0
    qt += 1
    while qh < qt:
        node = queue[qh]
        qh += 1
        if left[node] == LEAF:
            continue
        f = feature[node]
        if not in_s[f]:
            queue[qt] = left[node]
            qt += 1
            queue[qt] = right[node]
            qt += 1
            continue
        t = threshold[node]
        if x[f] <= t:
            if t < hi[f]:
                cand = 0
                for r in range(m):
                    i = buf[r]
                    if XT[f, i] <= t:
                        cand += boot[i]
                if cand < min_node_size:
                    continue
                k = 0
                for r in range(m):
                    i = buf[r]
                    if XT[f, i] <= t:
                        buf[k] = i
                        k += 1
                m = k
                mass = cand
                hi[f] = t
            queue[qt] = left[node]
            qt += 1
        else:
            if t > lo[f]:
                cand = 0
                for r in range(m):
                    i = buf[r]
                    if XT[f, i] > t:
                        cand += boot[i]
                if cand < min_node_size:
                    continue
                k = 0
                for r in range(m):
                    i = buf[r]
                    if XT[f, i] > t:
                        buf[k] = i
                        k += 1
                m = k
                mass = cand
                lo[f] = t
            queue[qt] = right[node]
            qt += 1
    return m, mass


@numba.njit(cache=True)
def projected_box(feature, threshold, left, right, x, in_s, queue, lo, hi):
    """Box of the projected cell ignoring the ``min_node_size`` guard.

    Node-only traversal; cheap because no sample set is carried along.
    """
    p = x.shape[0]
    for j in range(p):
        lo[j] = -np.inf
        hi[j] = np.inf
    qh = 0
    qt = 0
    queue[qt] = 0
    qt += 1
    while qh < qt:
        node = queue[qh]
        qh += 1
        if left[node] == LEAF:
            continue
        f = feature[node]
        if not in_s[f]:
            queue[qt] = left[node]
            qt += 1
            queue[qt] = right[node]
            qt += 1
            continue
        t = threshold[node]
        if x[f] <= t:
            if t < hi[f]:
                hi[f] = t
            queue[qt] = left[node]
            qt += 1
        else:
            if t > lo[f]:
                lo[f] = t
            queue[qt] = right[node]
            qt += 1


@numba.njit(cache=True)
def box_mass(lo, hi, sdims, order, svals, XT, boot, hit):
    """Bootstrap mass and hit mass of the training rows inside ``(lo, hi]``.

    Only the dimensions listed in ``sdims`` can be constrained. The rows are
    enumerated from the narrowest constrained dimension using the global
    per-feature sort ``order``/``svals``, so the cost scales with that range.
    """
    best = -1
    best_a = 0
    best_b = 0
    n = XT.shape[1]
    for d in range(sdims.shape[0]):
        j = sdims[d]
        if lo[j] == -np.inf and hi[j] == np.inf:
            continue
        a = 0 if lo[j] == -np.inf else np.searchsorted(svals[j], lo[j], side="right")
        b = n if hi[j] == np.inf else np.searchsorted(svals[j], hi[j], side="right")
        if best < 0 or b - a < best_b - best_a:
            best = j
            best_a = a
            best_b = b
    mass = 0.0
    hmass = 0.0
    if best < 0:
        for i in range(n):
            mass += boot[i]
            hmass += boot[i] * hit[i]
        return mass, hmass
    for r in range(best_a, best_b):
        i = order[best, r]
        bi = boot[i]
        if bi == 0:
            continue
        ok = True
        for d in range(sdims.shape[0]):
            j = sdims[d]
            if j == best:
                continue
            v = XT[j, i]
            if v <= lo[j] or v > hi[j]:
                ok = False
                break
        if ok:
            mass += bi
            hmass += bi * hit[i]
    return mass, hmass


@numba.njit(cache=True)
def _frozen_run(feature, threshold, left, right, x, in_s, frozen, n_frozen, queue,
                lo, hi, st_dim, st_val, st_node):
    """Unguarded traversal that skips ``frozen`` nodes.

    Each genuine tightening is logged in order: ``st_dim`` holds ``f`` for a
    new upper bound and ``-(f + 1)`` for a new lower bound. Returns the count.
    """
    p = x.shape[0]
    for j in range(p):
        lo[j] = -np.inf
        hi[j] = np.inf
    T = 0
    qh = 0
    qt = 0
    queue[qt] = 0
    qt += 1
    while qh < qt:
        node = queue[qh]
        qh += 1
        if left[node] == LEAF:
            continue
        f = feature[node]
        if not in_s[f]:
            queue[qt] = left[node]
            qt += 1
            queue[qt] = right[node]
            qt += 1
            continue
        skip = False
        for r in range(n_frozen):
            if frozen[r] == node:
                skip = True
                break
        if skip:
            continue
        t = threshold[node]
        if x[f] <= t:
            if t < hi[f]:
                hi[f] = t
                st_dim[T] = f
                st_val[T] = t
                st_node[T] = node
                T += 1
            queue[qt] = left[node]
            qt += 1
        else:
            if t > lo[f]:
                lo[f] = t
                st_dim[T] = -(f + 1)
                st_val[T] = t
                st_node[T] = node
                T += 1
            queue[qt] = right[node]
            qt += 1
    return T


@numba.njit(cache=True)
def _replay(n_steps, st_dim, st_val, lo, hi):
    for j in range(lo.shape[0]):
        lo[j] = -np.inf
        hi[j] = np.inf
    for r in range(n_steps):
        d = st_dim[r]
        if d >= 0:
            hi[d] = st_val[r]
        else:
            lo[-d - 1] = st_val[r]


@numba.njit(cache=True)
def guarded_box(feature, threshold, left, right, x, in_s, sdims, order, svals, XT,
                boot, hit, min_node_size, queue, lo, hi):
    """Result of the guarded traversal (``projected_traverse``) without
    carrying a sample list.

    Candidate masses only shrink along the sequence of tightenings, so the
    first split the guard rejects is found by bisection on that sequence.
    That node is frozen and the traversal replayed until no split is
    rejected. Returns ``(mass, hit_mass)``; ``lo``/``hi`` hold the box.
    """
    n_nodes = feature.shape[0]
    frozen = np.empty(n_nodes, dtype=np.int64)
    n_frozen = 0
    st_dim = np.empty(n_nodes, dtype=np.int64)
    st_val = np.empty(n_nodes)
    st_node = np.empty(n_nodes, dtype=np.int64)
    while True:
        T = _frozen_run(feature, threshold, left, right, x, in_s, frozen, n_frozen, queue,
                        lo, hi, st_dim, st_val, st_node)
        mass, hmass = box_mass(lo, hi, sdims, order, svals, XT, boot, hit)
        if mass >= min_node_size:
            return mass, hmass
        # smallest prefix length whose box falls under the guard
        a = 0
        b = T
        while b - a > 1:
            mid = (a + b) // 2
            _replay(mid, st_dim, st_val, lo, hi)
            m_mid, _ = box_mass(lo, hi, sdims, order, svals, XT, boot, hit)
            if m_mid < min_node_size:
                b = mid
            else:
                a = mid
        frozen[n_frozen] = st_node[b - 1]
        n_frozen += 1


@numba.njit(cache=True)
def _tree_hit_fraction(feature, threshold, left, right, x, in_s, sdims, order, svals, XT,
                       boot, hit, min_node_size, queue, lo, hi):
    projected_box(feature, threshold, left, right, x, in_s, queue, lo, hi)
    mass, hmass = box_mass(lo, hi, sdims, order, svals, XT, boot, hit)
    if mass < min_node_size:
        mass, hmass = guarded_box(feature, threshold, left, right, x, in_s, sdims, order,
                                  svals, XT, boot, hit, min_node_size, queue, lo, hi)
    return hmass / mass


@numba.njit(cache=True)
def _max_tree_size(node_off):
    m = 0
    for l in range(node_off.shape[0] - 1):
        c = node_off[l + 1] - node_off[l]
        if c > m:
            m = c
    return m


@numba.njit(cache=True)
def projected_sdp_batch(feature, threshold, left, right, node_off, boot,
                        order, svals, XT, x, masks, hit, min_node_size):
    """Projected-forest estimate of ``P(hit | X_S = x_S)`` for many subsets.

    ``masks`` is (m, p) boolean, one row per subset S; ``hit`` is a 0/1 float
    per training sample (target inside the decision band, or equal to the
    decision label). Each tree contributes its bootstrap-weighted hit
    fraction over its projected cell; trees are averaged.

    The unguarded box is tried first: every intermediate set of the guarded
    traversal contains the final one, so when the unguarded cell already
    holds ``min_node_size`` draws no node can have been frozen and both
    traversals agree.
    """
    n_sub = masks.shape[0]
    k = node_off.shape[0] - 1
    p = x.shape[0]
    out = np.zeros(n_sub)
    lo = np.empty(p)
    hi = np.empty(p)
    queue = np.empty(_max_tree_size(node_off), dtype=np.int64)
    for s in range(n_sub):
        in_s = masks[s]
        sdims = np.flatnonzero(in_s)
        acc = 0.0
        for l in range(k):
            a = node_off[l]
            b = node_off[l + 1]
            acc += _tree_hit_fraction(feature[a:b], threshold[a:b], left[a:b], right[a:b], x,
                                      in_s, sdims, order, svals, XT, boot[l], hit,
                                      min_node_size, queue, lo, hi)
        out[s] = acc / k
    return out


@numba.njit(cache=True)
def projected_sdp_points(feature, threshold, left, right, node_off, boot,
                         order, svals, XT, Z, in_s, hit, min_node_size):
    """Same estimate for one subset at each row of ``Z``."""
    m = Z.shape[0]
    k = node_off.shape[0] - 1
    p = Z.shape[1]
    out = np.zeros(m)
    lo = np.empty(p)
    hi = np.empty(p)
    queue = np.empty(_max_tree_size(node_off), dtype=np.int64)
    sdims = np.flatnonzero(in_s)
    for r in range(m):
        x = Z[r]
        acc = 0.0
        for l in range(k):
            a = node_off[l]
            b = node_off[l + 1]
            acc += _tree_hit_fraction(feature[a:b], threshold[a:b], left[a:b], right[a:b], x,
                                      in_s, sdims, order, svals, XT, boot[l], hit,
                                      min_node_size, queue, lo, hi)
        out[r] = acc / k
    return out


@numba.njit(cache=True)
def projected_sdp_pairs(feature, threshold, left, right, node_off, boot,
                        order, svals, XT, tree_ids, Z, in_s, hit, min_node_size):
    """Per-tree hit fraction for each ``(tree_ids[r], Z[r])`` pair."""
    m = Z.shape[0]
    p = Z.shape[1]
    out = np.zeros(m)
    lo = np.empty(p)
    hi = np.empty(p)
    queue = np.empty(_max_tree_size(node_off), dtype=np.int64)
    sdims = np.flatnonzero(in_s)
    for r in range(m):
        l = tree_ids[r]
        a = node_off[l]
        b = node_off[l + 1]
        out[r] = _tree_hit_fraction(feature[a:b], threshold[a:b], left[a:b], right[a:b], Z[r],
                                    in_s, sdims, order, svals, XT, boot[l], hit,
                                    min_node_size, queue, lo, hi)
    return out


@numba.njit(cache=True)
def grid_missing(lut, doff, toff, tstride, wlo, tab, lo_idx, hi_idx, count_only,
                 out_l, out_c, out_g):
    """Tree cells overlapping the grid box ``[lo_idx, hi_idx]`` whose value is
    not cached yet (NaN in ``tab``).

    ``lut[l, doff[d] + g]`` maps grid cell ``g`` of dim ``d`` to the cell of
    tree ``l``'s own thresholds; the map is monotone and onto, so the tree
    cells met by the box form a box too. Tree ``l`` stores its values in a
    window starting at tree cell ``wlo[l]`` at ``tab[toff[l]:]`` with strides
    ``tstride[l]``. For each miss, ``out_g`` receives a grid cell inside the
    box lying in that tree cell. Returns the count.
    """
    k = lut.shape[0]
    D = lo_idx.shape[0]
    a = np.empty(D, dtype=np.int64)
    b = np.empty(D, dtype=np.int64)
    c = np.empty(D, dtype=np.int64)
    n = 0
    for l in range(k):
        for d in range(D):
            a[d] = lut[l, doff[d] + lo_idx[d]]
            b[d] = lut[l, doff[d] + hi_idx[d]]
            c[d] = a[d]
        while True:
            flat = toff[l]
            for d in range(D):
                flat += (c[d] - wlo[l, d]) * tstride[l, d]
            if np.isnan(tab[flat]):
                if not count_only:
                    out_l[n] = l
                    for d in range(D):
                        out_c[n, d] = c[d]
                        # first grid cell of dim d mapped to c[d], clipped into the box
                        row = lut[l, doff[d] + lo_idx[d]: doff[d] + hi_idx[d] + 1]
                        out_g[n, d] = lo_idx[d] + np.searchsorted(row, c[d])
                n += 1
            d = D - 1
            while d >= 0:
                c[d] += 1
                if c[d] <= b[d]:
                    break
                c[d] = a[d]
                d -= 1
            if d < 0:
                break
    return n


@numba.njit(cache=True)
def grid_values(lut, doff, toff, tstride, wlo, tab, lo_idx, hi_idx, pi, out):
    """Forest value of every grid cell in the box (C order) into ``out``.

    With ``pi >= 0`` it stops at the first cell below ``pi`` and returns
    False; otherwise it fills everything and returns True.
    """
    k = lut.shape[0]
    D = lo_idx.shape[0]
    g = np.empty(D, dtype=np.int64)
    for d in range(D):
        g[d] = lo_idx[d]
    r = 0
    while True:
        acc = 0.0
        for l in range(k):
            flat = toff[l]
            for d in range(D):
                flat += (lut[l, doff[d] + g[d]] - wlo[l, d]) * tstride[l, d]
            acc += tab[flat]
        v = acc / k
        if pi >= 0.0:
            if v < pi:
                return False
        else:
            out[r] = v
        r += 1
        d = D - 1
        while d >= 0:
            g[d] += 1
            if g[d] <= hi_idx[d]:
                break
            g[d] = lo_idx[d]
            d -= 1
        if d < 0:
            return True


@numba.njit(cache=True)
def _tree_minmax(lut, doff, toff, tstride, wlo, tab, l, lo_idx, hi_idx, a, b, c):
    D = lo_idx.shape[0]
    for d in range(D):
        a[d] = lut[l, doff[d] + lo_idx[d]]
        b[d] = lut[l, doff[d] + hi_idx[d]]
        c[d] = a[d]
    mn = np.inf
    mx = -np.inf
    while True:
        flat = toff[l]
        for d in range(D):
            flat += (c[d] - wlo[l, d]) * tstride[l, d]
        v = tab[flat]
        mn = min(mn, v)
        mx = max(mx, v)
        d = D - 1
        while d >= 0:
            c[d] += 1
            if c[d] <= b[d]:
                break
            c[d] = a[d]
            d -= 1
        if d < 0:
            return mn, mx


@numba.njit(cache=True)
def grid_all_good(lut, doff, toff, tstride, wlo, tab, lo_idx, hi_idx, pi):
    """True iff every grid cell in the box has forest value ``>= pi``.

    Branch and bound: the mean of per-tree minima (maxima) over a sub-box
    bounds each of its cells from below (above), which settles most
    sub-boxes without visiting their cells; the rest are bisected along the
    widest dimension. A single cell's bounds equal its value, so the answer
    is exact.
    """
    k = lut.shape[0]
    D = lo_idx.shape[0]
    cap = 2
    for d in range(D):
        w = hi_idx[d] - lo_idx[d] + 1
        while w > 1:
            cap += 1
            w = (w + 1) // 2
    slo = np.empty((cap, D), dtype=np.int64)
    shi = np.empty((cap, D), dtype=np.int64)
    a = np.empty(D, dtype=np.int64)
    b = np.empty(D, dtype=np.int64)
    c = np.empty(D, dtype=np.int64)
    slo[0] = lo_idx
    shi[0] = hi_idx
    top = 1
    while top > 0:
        top -= 1
        lo = slo[top].copy()
        hi = shi[top].copy()
        s_mn = 0.0
        s_mx = 0.0
        for l in range(k):
            mn, mx = _tree_minmax(lut, doff, toff, tstride, wlo, tab, l, lo, hi, a, b, c)
            s_mn += mn
            s_mx += mx
        if s_mn / k >= pi:
            continue
        if s_mx / k < pi:
            return False
        best = -1
        bw = 1
        for d in range(D):
            w = hi[d] - lo[d] + 1
            if w > bw:
                bw = w
                best = d
        if best < 0:
            return False
        mid = lo[best] + bw // 2 - 1
        slo[top] = lo
        shi[top] = hi
        shi[top, best] = mid
        top += 1
        slo[top] = lo
        shi[top] = hi
        slo[top, best] = mid + 1
        top += 1
    return True
