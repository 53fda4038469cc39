"""Compiled inner loops shared by the tree learners and the SVM.

The tree grower works on presorted per-feature index lists that are
stable-partitioned at every split, so no sorting happens inside a node.
Both tree models use the same kernel: the split gain is the second-order
formula gain = 0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)) - gamma,
which reduces to the Gini criterion for a forest when g carries the 0/1
labels and h the sample weights (for binary labels the Gini drop equals
the weighted variance drop up to a constant factor).
"""

import numpy as np
from numba import njit

LEAF_FRACTION = 0  # leaf value G/H, the weighted positive fraction
LEAF_NEWTON = 1    # leaf value -G/(H+lam), the damped Newton step


@njit(cache=True)
def grow_tree(x, order, counts, g, h, w,
              max_depth, min_leaf_w, max_features, lam, gamma, gain_eps,
              leaf_mode, seed,
              feature, threshold, left, right, value):
    """Grow one tree; returns the number of nodes written.

    x           (n, d) feature matrix
    order       (d, n) row indices presorted by each feature
    counts      per-row weight, rows with 0 are absent from this tree
    g, h, w     per-row gain numerator, gain denominator, leaf-size weight
    feature..value   preallocated output arrays; feature[i] == -1 marks
                     a leaf and value[i] then holds its prediction
    """
    n, d = x.shape

    n_active = 0
    for r in range(n):
        if counts[r] > 0.0:
            n_active += 1

    # per-feature lists of (row, value) in ascending value order; these
    # get partitioned in place as the tree splits
    idx = np.empty((d, n_active), np.int64)
    vals = np.empty((d, n_active), np.float64)
    for f in range(d):
        p = 0
        for t in range(n):
            r = order[f, t]
            if counts[r] > 0.0:
                idx[f, p] = r
                vals[f, p] = x[r, f]
                p += 1

    tmp_idx = np.empty(n_active, np.int64)
    tmp_vals = np.empty(n_active, np.float64)
    goes_left = np.zeros(n, np.bool_)
    feat_pool = np.empty(d, np.int64)

    if max_features < d:
        np.random.seed(seed)

    cap = 2 * n_active + 1
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    stack_node = np.empty(cap, np.int64)

    stack_start[0] = 0
    stack_end[0] = n_active
    stack_depth[0] = 0
    stack_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        node = stack_node[top]

        gt = 0.0
        ht = 0.0
        wt = 0.0
        for p in range(start, end):
            r = idx[0, p]
            gt += g[r]
            ht += h[r]
            wt += w[r]

        best_f = -1
        best_thr = 0.0
        best_gain = gain_eps
        if depth < max_depth and end - start >= 2 and wt >= 2.0 * min_leaf_w:
            m = max_features
            if m < d:
                for i in range(d):
                    feat_pool[i] = i
                for i in range(m):
                    j = i + np.random.randint(0, d - i)
                    t = feat_pool[i]
                    feat_pool[i] = feat_pool[j]
                    feat_pool[j] = t
            parent_term = gt * gt / (ht + lam)
            for fi in range(m):
                f = feat_pool[fi] if m < d else fi
                gl = 0.0
                hl = 0.0
                wl = 0.0
                for p in range(start, end - 1):
                    r = idx[f, p]
                    gl += g[r]
                    hl += h[r]
                    wl += w[r]
                    lo = vals[f, p]
                    hi = vals[f, p + 1]
                    if hi > lo:
                        wr = wt - wl
                        if wl >= min_leaf_w and wr >= min_leaf_w:
                            gr = gt - gl
                            hr = ht - hl
                            gain = 0.5 * (gl * gl / (hl + lam)
                                          + gr * gr / (hr + lam)
                                          - parent_term) - gamma
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                thr = 0.5 * (lo + hi)
                                # the midpoint of two adjacent floats can
                                # round up onto the right value; fall back
                                # to the left value so x <= thr still
                                # separates the two
                                if thr >= hi:
                                    thr = lo
                                best_thr = thr

        if best_f < 0:
            feature[node] = -1
            threshold[node] = 0.0
            left[node] = -1
            right[node] = -1
            if leaf_mode == LEAF_FRACTION:
                value[node] = gt / ht
            else:
                value[node] = -gt / (ht + lam)
            continue

        n_left = 0
        for p in range(start, end):
            flag = vals[best_f, p] <= best_thr
            goes_left[idx[best_f, p]] = flag
            if flag:
                n_left += 1

        for f in range(d):
            c = 0
            for p in range(start, end):
                r = idx[f, p]
                if goes_left[r]:
                    tmp_idx[c] = r
                    tmp_vals[c] = vals[f, p]
                    c += 1
            for p in range(start, end):
                r = idx[f, p]
                if not goes_left[r]:
                    tmp_idx[c] = r
                    tmp_vals[c] = vals[f, p]
                    c += 1
            for q in range(end - start):
                idx[f, start + q] = tmp_idx[q]
                vals[f, start + q] = tmp_vals[q]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        value[node] = 0.0

        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        stack_node[top] = lid
        top += 1
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_node[top] = rid
        top += 1

    return n_nodes


@njit(cache=True)
def predict_trees(x, feature, threshold, left, right, value, offsets,
                  average):
    """Sum (or average) the leaf values of a stacked set of trees.

    offsets[t] is the index of tree t's root in the flat node arrays;
    left/right hold tree-local ids.
    """
    n = x.shape[0]
    n_trees = len(offsets) - 1
    out = np.zeros(n)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            nid = 0
            while feature[base + nid] >= 0:
                f = feature[base + nid]
                if x[i, f] <= threshold[base + nid]:
                    nid = left[base + nid]
                else:
                    nid = right[base + nid]
            out[i] += value[base + nid]
    if average and n_trees > 0:
        out /= n_trees
    return out


@njit(cache=True)
def pegasos_train(x, ypm, lam, n_epochs, seed):
    """Averaged stochastic subgradient descent on the hinge objective.

    Step size 1/(lam*t); the bias is updated on margin violations but
    never shrunk.  Returns the average of all iterates, which is what
    stabilizes the otherwise noisy per-step solution.
    """
    n, d = x.shape
    np.random.seed(seed)
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    perm = np.arange(n)
    t = 0
    for _ in range(n_epochs):
        for i in range(n - 1, 0, -1):
            j = np.random.randint(0, i + 1)
            p = perm[i]
            perm[i] = perm[j]
            perm[j] = p
        for k in range(n):
            i = perm[k]
            t += 1
            eta = 1.0 / (lam * t)
            margin = b
            for f in range(d):
                margin += w[f] * x[i, f]
            shrink = 1.0 - eta * lam
            if ypm[i] * margin < 1.0:
                step = eta * ypm[i]
                for f in range(d):
                    w[f] = shrink * w[f] + step * x[i, f]
                b += step
            else:
                for f in range(d):
                    w[f] = shrink * w[f]
            for f in range(d):
                w_avg[f] += w[f]
            b_avg += b
    total = float(n_epochs * n)
    return w_avg / total, b_avg / total
