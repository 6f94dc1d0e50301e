"""Compiled kernels for the hot paths: tree metrics and bag splitting.

Everything here is plain numeric code over arrays so numba can cache the
compiled machine code on disk. The pure-Python callers keep working when
numba is unavailable; they just skip importing this module.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def metric_block(order, parent, pweight, lo, hi, reg_cols, src_rows, inv):
    """Regular-pair distance block via the parent-row recurrence.

    ``order`` is a root-first traversal; each node's row is its parent's
    row plus the edge weight, negated on the subtree column range
    [lo, hi). Columns live in discovery order; ``inv`` maps label order
    back into it, ``src_rows``/``reg_cols`` locate the regular nodes.
    """
    nv = order.shape[0]
    nr = reg_cols.shape[0]
    depth = np.zeros(nv)
    for t in range(1, nv):
        x = order[t]
        depth[x] = depth[parent[x]] + pweight[x]
    rows = np.empty((nv, nr))
    root = order[0]
    for c in range(nr):
        rows[root, c] = depth[reg_cols[c]]
    for t in range(1, nv):
        x = order[t]
        w = pweight[x]
        p = parent[x]
        for c in range(nr):
            rows[x, c] = rows[p, c] + w
        for c in range(lo[x], hi[x]):
            rows[x, c] -= 2.0 * w
    out = np.empty((nr, nr))
    for i in range(nr):
        r = src_rows[i]
        for j in range(nr):
            out[i, j] = rows[r, inv[j]]
        out[i, i] = 0.0
    return out


@njit(cache=True)
def euler_depths(indptr, indices, weights):
    """Euler tour of a tree rooted at node 0, for range-minimum LCA lookups.

    Returns (first, tdepth, depth): the tour position of each node's first
    visit, the node depth at each of the 2|V| - 1 tour positions, and the
    per-node depth. The minimum of ``tdepth`` between two first visits is
    the depth of the nodes' lowest common ancestor.
    """
    nv = indptr.shape[0] - 1
    first = np.empty(nv, dtype=np.int64)
    depth = np.zeros(nv)
    tdepth = np.empty(2 * nv - 1)
    parent = np.full(nv, -1, dtype=np.int64)
    cursor = indptr[:-1].copy()
    stack = np.empty(nv, dtype=np.int64)
    stack[0] = 0
    top = 1
    first[0] = 0
    tdepth[0] = 0.0
    t = 1
    while top > 0:
        x = stack[top - 1]
        child = np.int64(-1)
        w = 0.0
        k = cursor[x]
        hi = indptr[x + 1]
        while k < hi:
            y = indices[k]
            if y != parent[x]:
                child = y
                w = weights[k]
                k += 1
                break
            k += 1
        cursor[x] = k
        if child >= 0:
            parent[child] = x
            depth[child] = depth[x] + w
            first[child] = t
            tdepth[t] = depth[child]
            t += 1
            stack[top] = child
            top += 1
        else:
            top -= 1
            if top > 0:
                tdepth[t] = depth[stack[top - 1]]
                t += 1
    return first, tdepth, depth


# -- bag-splitting kernels ----------------------------------------------------
#
# These mirror the reference recovery operations entry for entry: the same
# pairs get billed, the same stable sort breaks ties, the same expressions
# produce every derived value, so a kernel run is bit-identical to the
# pure-Python run. Oracles are passed as their raw storage arrays plus the
# Euler-tour structure for backends that materialize distances on demand
# (``filled`` selects the dense-block read instead; the tour arrays are
# unused dummies then).


@njit(cache=True)
def _native(nat, nat_seen, filled, first, depth, st, logs, i, j):
    """Value of the native pair (i, j) and a 0/1 first-access billing flag."""
    if i == j:
        return 0.0, 0
    if nat_seen[i, j]:
        return nat[i, j], 0
    if filled:
        v = nat[i, j]
    else:
        a = first[i]
        b = first[j]
        if a > b:
            a, b = b, a
        k = logs[b - a + 1]
        m1 = st[k, a]
        m2 = st[k, b - (1 << k) + 1]
        m = m1 if m1 < m2 else m2
        v = depth[i] + depth[j] - 2.0 * m
        nat[i, j] = v
        nat[j, i] = v
    nat_seen[i, j] = 1
    nat_seen[j, i] = 1
    return v, 1


@njit(cache=True)
def _transfer(nat, nat_seen, filled, first, depth, st, logs, i, j):
    """Make a native pair available without billing (value is derived)."""
    if i == j or nat_seen[i, j]:
        return
    if not filled:
        a = first[i]
        b = first[j]
        if a > b:
            a, b = b, a
        k = logs[b - a + 1]
        m1 = st[k, a]
        m2 = st[k, b - (1 << k) + 1]
        m = m1 if m1 < m2 else m2
        v = depth[i] + depth[j] - 2.0 * m
        nat[i, j] = v
        nat[j, i] = v
    nat_seen[i, j] = 1
    nat_seen[j, i] = 1


@njit(cache=True)
def basic_split(nat, nat_seen, lat, lat_seen, filled, first, depth, st, logs,
                n, members, rep, alpha, group_tol, onpath_tol, next_slot):
    """Split a sorted slot bag along the rep-alpha path.

    Returns (err, billed, n_new, ngroups, nedges, length, out_members,
    out_off, out_reps, out_isnew, out_svals, eu, ev, ew). Error codes:
    1 member collapsed onto a path node, 2 latent member in a branch
    group, 3 branch point off the path, 4 member collapsed onto its
    branch point, 5 path representatives out of order, 6 latent row
    gathered before it was stored, 7 foreign latent member, 9 latent
    row capacity exceeded. New latents take slots next_slot, next_slot+1,
    ... in group order; the caller registers them (and, when the bag
    representative is itself latent, stores the latent-latent anchor
    length - s).
    """
    m = members.shape[0]
    out_members = np.empty(2 * m, dtype=np.int64)
    out_off = np.zeros(m + 2, dtype=np.int64)
    out_reps = np.empty(m + 1, dtype=np.int64)
    out_isnew = np.zeros(m + 1, dtype=np.uint8)
    out_svals = np.empty(m + 1)
    eu = np.empty(m + 1, dtype=np.int64)
    ev = np.empty(m + 1, dtype=np.int64)
    ew = np.empty(m + 1)
    err = 0
    billed = 0
    n_new = 0
    ngroups = 0
    nedges = 0
    length = 0.0

    rep_latent = rep >= n
    nreg = m - 1 if rep_latent else m
    dva = np.empty(m)
    dvr = np.empty(m)
    if rep_latent:
        kr = rep - n
        if lat_seen[kr, alpha] == 0:
            err = 6
        else:
            length = lat[kr, alpha]
            for t in range(nreg):
                c = members[t]
                if c >= n:
                    err = 7
                    break
                if lat_seen[kr, c] == 0:
                    err = 6
                    break
                dvr[t] = lat[kr, c]
                v, bill = _native(nat, nat_seen, filled, first, depth, st, logs,
                                  alpha, c)
                dva[t] = v
                billed += bill
            dva[m - 1] = length
            dvr[m - 1] = 0.0
    else:
        for t in range(m):
            c = members[t]
            if c >= n:
                err = 7
                break
            v, bill = _native(nat, nat_seen, filled, first, depth, st, logs,
                              alpha, c)
            dva[t] = v
            billed += bill
            v, bill = _native(nat, nat_seen, filled, first, depth, st, logs,
                              rep, c)
            dvr[t] = v
            billed += bill
            if c == rep:
                length = dva[t]

    if err == 0:
        dvalue = dva - dvr
        order = np.argsort(dvalue, kind="mergesort")
        prev_w = np.int64(-1)
        prev_s = 0.0
        pos = 0
        a = 0
        while a < m and err == 0:
            b = a + 1
            while b < m and dvalue[order[b]] - dvalue[order[b - 1]] <= group_tol:
                b += 1
            pu = a
            best = dva[order[a]]
            for t in range(a + 1, b):
                if dva[order[t]] < best:
                    best = dva[order[t]]
                    pu = t
            iu = order[pu]
            start = pos
            w = np.int64(-1)
            s = 0.0
            isnew = np.uint8(0)
            if abs(dva[iu] + dvr[iu] - length) <= onpath_tol:
                w = members[iu]
                s = dva[iu]
                if b - a > 1:
                    for t in range(a, b):
                        iv = order[t]
                        if iv == iu:
                            continue
                        if 0.5 * (dva[iv] + dvr[iv] - length) <= 0.0:
                            err = 1
                            break
                    if err == 0 and w < n:
                        for t in range(a, b):
                            c = members[order[t]]
                            if c != w and c < n:
                                _transfer(nat, nat_seen, filled, first, depth,
                                          st, logs, w, c)
                    for t in range(a, b):
                        out_members[pos] = members[order[t]]
                        pos += 1
                    out_members[start:pos] = np.sort(out_members[start:pos])
                else:
                    out_members[pos] = w
                    pos += 1
            else:
                for t in range(a, b):
                    if members[order[t]] >= n:
                        err = 2
                        break
                if err == 0:
                    w = next_slot + n_new
                    kw = w - n
                    if kw >= lat.shape[0]:
                        err = 9
                if err == 0:
                    i0 = order[a]
                    s = 0.5 * (dva[i0] + length - dvr[i0])
                    if not (0.0 < s < length):
                        err = 3
                if err == 0:
                    for t in range(a, b):
                        iv = order[t]
                        h = 0.5 * (dva[iv] + dvr[iv] - length)
                        if h <= 0.0:
                            err = 4
                            break
                        c = members[iv]
                        if lat_seen[kw, c] == 0:
                            lat[kw, c] = h
                            lat_seen[kw, c] = 1
                if err == 0:
                    if lat_seen[kw, alpha] == 0:
                        lat[kw, alpha] = s
                        lat_seen[kw, alpha] = 1
                    if rep < n and lat_seen[kw, rep] == 0:
                        lat[kw, rep] = length - s
                        lat_seen[kw, rep] = 1
                    n_new += 1
                    isnew = np.uint8(1)
                    for t in range(a, b):
                        out_members[pos] = members[order[t]]
                        pos += 1
                    out_members[start:pos] = np.sort(out_members[start:pos])
                    out_members[pos] = w  # the largest slot so far
                    pos += 1
            if err == 0:
                if prev_w >= 0:
                    step = s - prev_s
                    if step <= 0.0:
                        err = 5
                    else:
                        eu[nedges] = prev_w
                        ev[nedges] = w
                        ew[nedges] = step
                        nedges += 1
            if err == 0:
                prev_w = w
                prev_s = s
                out_reps[ngroups] = w
                out_isnew[ngroups] = isnew
                out_svals[ngroups] = s
                ngroups += 1
                out_off[ngroups] = pos
            a = b

    return (err, billed, n_new, ngroups, nedges, length, out_members, out_off,
            out_reps, out_isnew, out_svals, eu, ev, ew)


@njit(cache=True)
def explode_split(nat, nat_seen, lat, lat_seen, filled, first, depth, st, logs,
                  n, members, rep, subtree_tol):
    """Partition a sorted slot bag by the subtrees at its representative.

    Returns (err, billed, ngroups, out_members, out_off) with the same
    error codes as :func:`basic_split`.
    """
    m = members.shape[0]
    out_members = np.empty(2 * m, dtype=np.int64)
    out_off = np.zeros(m + 1, dtype=np.int64)
    err = 0
    billed = 0
    ngroups = 0
    rem = np.empty(m - 1, dtype=np.int64)
    dvr = np.empty(m - 1)
    j = 0
    for t in range(m):
        c = members[t]
        if c != rep:
            if c >= n:
                err = 7
                break
            rem[j] = c
            j += 1
    if err == 0:
        if rep >= n:
            kr = rep - n
            for t in range(m - 1):
                if lat_seen[kr, rem[t]] == 0:
                    err = 6
                    break
                dvr[t] = lat[kr, rem[t]]
        else:
            for t in range(m - 1):
                v, bill = _native(nat, nat_seen, filled, first, depth, st, logs,
                                  rep, rem[t])
                dvr[t] = v
                billed += bill
    pos = 0
    nalive = m - 1
    while err == 0 and nalive > 0:
        u = rem[0]
        du = dvr[0]
        start = pos
        out_members[pos] = u
        pos += 1
        ns = 0
        for t in range(1, nalive):
            c = rem[t]
            dv = dvr[t]
            v, bill = _native(nat, nat_seen, filled, first, depth, st, logs,
                              u, c)
            billed += bill
            if du + dv - v > subtree_tol:
                out_members[pos] = c
                pos += 1
            else:
                rem[ns] = c
                dvr[ns] = dv
                ns += 1
        out_members[pos] = rep
        pos += 1
        out_members[start:pos] = np.sort(out_members[start:pos])
        ngroups += 1
        out_off[ngroups] = pos
        nalive = ns
    return err, billed, ngroups, out_members, out_off


@njit(cache=True)
def distance_rows(indptr, indices, weights, sources, targets):
    """Shortest-path distances from each source to each target on a tree.

    The graph is given in CSR form; because it is a tree, a single stack
    traversal from each source reaches every node once.
    """
    n = indptr.shape[0] - 1
    out = np.empty((sources.shape[0], targets.shape[0]))
    dist = np.empty(n)
    stack = np.empty(n, dtype=np.int64)
    for r in range(sources.shape[0]):
        s = sources[r]
        dist[:] = -1.0
        dist[s] = 0.0
        stack[0] = s
        top = 1
        while top > 0:
            top -= 1
            x = stack[top]
            dx = dist[x]
            for k in range(indptr[x], indptr[x + 1]):
                y = indices[k]
                if dist[y] < 0.0:
                    dist[y] = dx + weights[k]
                    stack[top] = y
                    top += 1
        for c in range(targets.shape[0]):
            out[r, c] = dist[targets[c]]
    return out


@njit(cache=True)
def small_bag(nat, nat_seen, lat, lat_seen, filled, first, depth, st, logs,
              n, members, tol, slack):
    """Insertion reconstruction of the subtree induced by a small bag.

    Members arrive as a sorted slot array and are inserted one at a time
    into a growing skeleton held as an adjacency matrix over local ids:
    members occupy 0..m-1 and created latents m, m+1, ... in creation
    order, so ascending local id is ascending node order.  Returns
    (err, billed, n_new, nedges, eu, ev, ew); error codes extend the
    basic_split set with 10 (members coincide), 11 (ambiguous attachment)
    and 12 (path metric check failed).
    """
    m = members.shape[0]
    cap = 2 * m
    est = np.zeros((cap, m))
    billed = 0
    err = 0

    for i in range(m):
        si = members[i]
        if err:
            break
        for j in range(i + 1, m):
            sj = members[j]
            if si < n and sj < n:
                v, bill = _native(nat, nat_seen, filled, first, depth, st,
                                  logs, si, sj)
                billed += bill
            elif si >= n and sj >= n:
                err = 7
                break
            else:
                a = si if si < n else sj
                b = sj if si < n else si
                if lat_seen[b - n, a] == 0:
                    err = 6
                    break
                v = lat[b - n, a]
            est[i, j] = v
            est[j, i] = v

    present = np.zeros((cap, cap), dtype=np.uint8)
    wgt = np.zeros((cap, cap))
    nn = m
    if err == 0:
        d01 = est[0, 1]
        if d01 <= 0.0:
            err = 10
        else:
            present[0, 1] = 1
            present[1, 0] = 1
            wgt[0, 1] = d01
            wgt[1, 0] = d01

    x = 2
    while err == 0 and x < m:
        cur = 0
        prev = -1
        while True:
            inw_c = -1
            inw_m = 0.0
            full = False
            for c in range(cap):
                if present[cur, c] == 0 or c == prev:
                    continue
                elen = wgt[cur, c]
                mm = 0.5 * (est[cur, x] + elen - est[c, x])
                if mm <= tol:
                    continue
                if inw_c >= 0:
                    err = 11
                    break
                inw_c = c
                inw_m = mm
                full = mm >= elen - tol
            if err:
                break
            if inw_c >= 0 and full:
                prev = cur
                cur = inw_c
                continue
            if inw_c < 0:
                gap = est[cur, x]
                if gap <= tol:
                    if cur >= m:
                        # identify the created latent cur with member x
                        for c in range(cap):
                            if present[cur, c]:
                                present[x, c] = 1
                                present[c, x] = 1
                                wgt[x, c] = wgt[cur, c]
                                wgt[c, x] = wgt[cur, c]
                                present[cur, c] = 0
                                present[c, cur] = 0
                    else:
                        err = 10
                else:
                    present[cur, x] = 1
                    present[x, cur] = 1
                    wgt[cur, x] = gap
                    wgt[x, cur] = gap
                break
            c = inw_c
            mm = inw_m
            elen = wgt[cur, c]
            h = 0.5 * (est[cur, x] + est[c, x] - elen)
            if h <= tol:
                mid = x
            else:
                mid = nn
                nn += 1
                for y in range(m):
                    my = 0.5 * (est[cur, y] + elen - est[c, y])
                    hy = 0.5 * (est[cur, y] + est[c, y] - elen)
                    est[mid, y] = hy + abs(mm - my)
            present[cur, c] = 0
            present[c, cur] = 0
            present[cur, mid] = 1
            present[mid, cur] = 1
            wgt[cur, mid] = mm
            wgt[mid, cur] = mm
            present[c, mid] = 1
            present[mid, c] = 1
            wgt[c, mid] = elen - mm
            wgt[mid, c] = elen - mm
            if mid != x:
                present[mid, x] = 1
                present[x, mid] = 1
                wgt[mid, x] = h
                wgt[x, mid] = h
            break
        x += 1

    if err == 0:
        dist = np.empty(cap)
        stk = np.empty(cap, dtype=np.int64)
        for src in range(m):
            for t in range(cap):
                dist[t] = -1.0
            dist[src] = 0.0
            stk[0] = src
            top = 1
            while top > 0:
                top -= 1
                a = stk[top]
                da = dist[a]
                for b in range(cap):
                    if present[a, b] and dist[b] < 0.0:
                        dist[b] = da + wgt[a, b]
                        stk[top] = b
                        top += 1
            for dst in range(m):
                if abs(dist[dst] - est[src, dst]) > slack:
                    err = 12
                    break
            if err:
                break

    nedges = 0
    eu = np.empty(2 * cap, dtype=np.int64)
    ev = np.empty(2 * cap, dtype=np.int64)
    ew = np.empty(2 * cap)
    if err == 0:
        for u in range(cap):
            for v in range(u + 1, cap):
                if present[u, v]:
                    eu[nedges] = u
                    ev[nedges] = v
                    ew[nedges] = wgt[u, v]
                    nedges += 1
    return err, billed, nn - m, nedges, eu, ev, ew
