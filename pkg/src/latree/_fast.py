"""Vectorized recovery engine over oracle slots.

Mirrors the reference operations decision for decision: same probe
stream, same group boundaries, same tie-breaking, same billing, same
latent numbering. The only difference is representation — bags are
sorted arrays of oracle slots and whole distance rows are gathered at
once — so each run produces the identical tree, query count, and
statistics as the reference engine for the same seed.

Slot order coincides with node order (regular labels ascending take
slots 0..n-1, latents follow in creation order), so sorted slot arrays
enumerate members exactly as the reference's sorted node lists do.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import _kernels
from .errors import (
    InvalidDelta,
    NoiseTooLarge,
    NotATreeMetric,
    RoundBudgetExceeded,
    UnknownNodeError,
)
from .tree import NodeId
from .recovery import (
    Bag,
    LatentRecord,
    ProbeStream,
    RecoveryStats,
    Skeleton,
    _note_round,
    _sample_indices,
    _thresholds,
    small_bag_reconstruct,
)

_ERRORS = {
    1: (NoiseTooLarge,
        "a member collapsed onto a path node; noise exceeds the split margin"),
    2: (NoiseTooLarge, "latent representative displaced from its path group"),
    3: (NoiseTooLarge, "latent branch point fell outside the path"),
    4: (NoiseTooLarge, "a member collapsed onto its latent branch point"),
    5: (NoiseTooLarge, "path representatives out of order; noise too large"),
    6: (UnknownNodeError,
        "latent slot gathered before its distances were stored"),
    7: (NoiseTooLarge, "two latent nodes ended up in one bag"),
    10: (NotATreeMetric, "two members of a small bag coincide"),
    11: (NoiseTooLarge, "ambiguous attachment: two directions descend"),
    12: (NotATreeMetric,
         "skeleton path metric disagrees with the queried distances; "
         "input violates the four-point condition"),
}


def _oracle_kargs(oracle):
    """Kernel arguments describing how to materialize native pairs."""
    if oracle._lca is not None:
        first, depth, st, logs = oracle._lca
        return False, first, depth, st, logs
    dummy_i = np.zeros(1, dtype=np.int64)
    return True, dummy_i, np.zeros(1), np.zeros((1, 1)), dummy_i


def _basic_k(oracle, kargs, members, rep, gen, alpha, tolerance, epsilon):
    """Kernel-backed :func:`_basic`; same outputs, same side effects."""
    group_tol, onpath_tol, _ = _thresholds(tolerance, epsilon, gen)
    n = oracle._n
    oracle._reserve_latent_rows(
        len(oracle._slot_node) - n + members.shape[0] + 1)
    (err, billed, n_new, ngroups, nedges, length, out_members, out_off,
     out_reps, out_isnew, out_svals, eu, ev, ew) = _kernels.basic_split(
        oracle._nat, oracle._nat_seen, oracle._lat, oracle._lat_seen, *kargs,
        n, members, rep, alpha, group_tol, onpath_tol, len(oracle._slot_node))
    oracle._count += int(billed)
    for _ in range(n_new):
        oracle._register_latent(oracle.fresh_latent_uid())
    if err:
        exc, msg = _ERRORS[err]
        raise exc(msg)
    bags_out = []
    for g in range(ngroups):
        w = int(out_reps[g])
        if out_isnew[g]:
            gen_w = gen + 1
            if rep >= n:
                key = (rep, w) if rep < w else (w, rep)
                oracle._ll.setdefault(key, float(length) - float(out_svals[g]))
        else:
            gen_w = gen if w == rep else 0
        bags_out.append((out_members[out_off[g]:out_off[g + 1]], w, gen_w))
    edges = [(int(eu[t]), int(ev[t]), float(ew[t])) for t in range(nedges)]
    return bags_out, edges


def _explode_k(oracle, kargs, members, rep, gen, tolerance, epsilon):
    """Kernel-backed :func:`_explode`; same outputs, same side effects."""
    _, _, subtree_tol = _thresholds(tolerance, epsilon, gen)
    err, billed, ngroups, out_members, out_off = _kernels.explode_split(
        oracle._nat, oracle._nat_seen, oracle._lat, oracle._lat_seen, *kargs,
        oracle._n, members, rep, subtree_tol)
    oracle._count += int(billed)
    if err:
        exc, msg = _ERRORS[err]
        raise exc(msg)
    return [(out_members[out_off[g]:out_off[g + 1]], rep, gen)
            for g in range(ngroups)]


def _small_bag_k(oracle, kargs, members, gen, tolerance, epsilon):
    """Kernel-backed :func:`small_bag_reconstruct`; returns edge triples."""
    m = members.shape[0]
    if m < 2:
        return []
    e_bag = (1.0 + 0.5 * gen) * epsilon
    tol = tolerance + 3.0 * e_bag
    slack = 8.0 * tolerance + (2.0 * m + 4.0) * (e_bag + epsilon)
    err, billed, n_new, nedges, eu, ev, ew = _kernels.small_bag(
        oracle._nat, oracle._nat_seen, oracle._lat, oracle._lat_seen, *kargs,
        oracle._n, members, tol, slack)
    oracle._count += int(billed)
    # Latent uids are minted in creation order even when the walk fails,
    # keeping the uid sequence aligned with the reference engine.
    created = [NodeId.latent(oracle.fresh_latent_uid()) for _ in range(n_new)]
    if err:
        exc, msg = _ERRORS[err]
        raise exc(msg)
    nodes = oracle._slot_node

    def node_of(local: int) -> NodeId:
        if local < m:
            return nodes[int(members[local])]
        return created[local - m]

    return [(node_of(int(eu[t])), node_of(int(ev[t])), float(ew[t]))
            for t in range(nedges)]


def _basic(oracle, members, rep, gen, alpha, tolerance, epsilon, on_latent):
    """Split a slot-array bag along the rep-alpha path. Returns
    (new bags as (slots, rep, gen) triples, path edges as slot triples)."""
    n = oracle._n
    group_tol, onpath_tol, _ = _thresholds(tolerance, epsilon, gen)
    m = members.shape[0]
    rep_latent = rep >= n
    regs = members[:-1] if rep_latent else members
    dva = np.empty(m)
    dvr = np.empty(m)
    nreg = regs.shape[0]
    dva[:nreg] = oracle._row_gather(alpha, regs)
    dvr[:nreg] = oracle._row_gather(rep, regs)
    nodes = oracle._slot_node
    if rep_latent:
        length = oracle.query(nodes[alpha], nodes[rep])
        dva[-1] = length
        dvr[-1] = 0.0
    else:
        length = float(dva[np.searchsorted(regs, rep)])

    dvalue = dva - dvr
    order = np.argsort(dvalue, kind="stable")
    gaps = np.flatnonzero(np.diff(dvalue[order]) > group_tol) + 1
    starts = np.concatenate(([0], gaps))
    ends = np.concatenate((gaps, [m]))

    bags_out = []
    edges = []
    prev_rep = -1
    prev_s = 0.0
    for a, b in zip(starts, ends):
        idx = order[a:b]
        g = members[idx]
        dva_g = dva[idx]
        dvr_g = dvr[idx]
        pos = int(np.argmin(dva_g))
        h = 0.5 * (dva_g + dvr_g - length)
        if abs(float(dva_g[pos] + dvr_g[pos] - length)) <= onpath_tol:
            w = int(g[pos])
            s = float(dva_g[pos])
            gen_w = gen if w == rep else 0
            if g.size > 1:
                keep = np.arange(g.size) != pos
                if (h[keep] <= 0.0).any():
                    raise NoiseTooLarge(
                        "a member collapsed onto a path node; noise exceeds "
                        "the split margin"
                    )
                if w < n:
                    others = g[keep]
                    oracle._mark_seen(w, others[others < n])
                # A latent path node is the bag representative, whose
                # member distances are stored already.
            bag_slots = np.sort(g) if g.size > 1 else g
        else:
            if (g >= n).any():
                raise NoiseTooLarge(
                    "latent representative displaced from its path group"
                )
            uid = oracle.fresh_latent_uid()
            w = oracle._register_latent(uid)
            gen_w = gen + 1
            s = 0.5 * float(dva_g[0] + length - dvr_g[0])
            if not 0.0 < s < length:
                raise NoiseTooLarge(
                    f"latent branch point fell outside the path (offset {s})"
                )
            if (h <= 0.0).any():
                raise NoiseTooLarge("a member collapsed onto its latent branch point")
            oracle._store_row(w, g, h)
            oracle.store(nodes[w], nodes[alpha], s)
            oracle.store(nodes[w], nodes[rep], length - s)
            if on_latent is not None:
                on_latent(LatentRecord(
                    uid, gen_w, nodes[alpha], nodes[rep], nodes[int(g[0])],
                    tuple((nodes[int(x)], float(val)) for x, val in zip(g, h)),
                ))
            bag_slots = np.append(np.sort(g), w)  # w is the largest slot so far
        if prev_rep >= 0:
            step = s - prev_s
            if step <= 0.0:
                raise NoiseTooLarge(
                    "path representatives out of order; noise too large"
                )
            edges.append((prev_rep, w, step))
        prev_rep, prev_s = w, s
        bags_out.append((bag_slots, w, gen_w))
    return bags_out, edges


def _explode(oracle, members, rep, gen, tolerance, epsilon):
    """Partition a slot-array bag by the subtrees at its representative."""
    _, _, subtree_tol = _thresholds(tolerance, epsilon, gen)
    rem = members[members != rep]
    if (rem >= oracle._n).any():
        raise NoiseTooLarge("two latent nodes ended up in one bag")
    dvr = oracle._row_gather(rep, rem) if rem.size else np.empty(0)
    out = []
    while rem.size:
        u = int(rem[0])
        row = oracle._row_gather(u, rem[1:])
        keep = (dvr[0] + dvr[1:] - row) > subtree_tol
        group = np.concatenate(([u], rem[1:][keep]))
        slots = np.sort(np.append(group, rep))
        out.append((slots, rep, gen))
        rem = rem[1:][~keep]
        dvr = dvr[1:][~keep]
    return out


def _bigsplit(oracle, kargs, members, rep, gen, probes, delta, tolerance,
              epsilon, stream, stats, on_latent, max_retries=10_000):
    pool = members[members != rep]
    kappa = len(probes)
    target = members.shape[0] / math.sqrt(delta)
    iters = 0
    while True:
        iters += 1
        if iters > max_retries:
            raise RoundBudgetExceeded(
                f"bigsplit failed to shrink the bag after {max_retries} attempts"
            )
        collection = [(members, rep, gen)]
        edges = []
        for u in probes:
            at = -1
            for pos, (slots, r, _) in enumerate(collection):
                loc = np.searchsorted(slots, u)
                if loc < slots.shape[0] and slots[loc] == u:
                    at = pos
                    break
            if at < 0 or collection[at][1] == u:
                continue
            holder = collection.pop(at)
            if kargs is not None:
                new_bags, frag = _basic_k(oracle, kargs, holder[0], holder[1],
                                          holder[2], int(u), tolerance, epsilon)
            else:
                new_bags, frag = _basic(oracle, holder[0], holder[1], holder[2],
                                        int(u), tolerance, epsilon, on_latent)
            collection.extend(new_bags)
            edges.extend(frag)
        final = []
        for slots, r, g in collection:
            if kargs is not None:
                subs = _explode_k(oracle, kargs, slots, r, g, tolerance, epsilon)
            else:
                subs = _explode(oracle, slots, r, g, tolerance, epsilon)
            if len(subs) > delta:
                raise InvalidDelta(
                    f"representative slot {r} branches into {len(subs)} "
                    f"subtrees, exceeding delta={delta}"
                )
            final.extend(subs)
        largest = max((slots.shape[0] for slots, _, _ in final), default=0)
        if stats is not None:
            stats.split_iterations += 1
            if largest >= 1.0 + target:
                stats.split_oversize += 1
        if largest <= target:
            return edges, final, iters
        probes = pool[np.asarray(_sample_indices(pool.shape[0], kappa, stream),
                                 dtype=np.int64)]


def run(oracle, labels, delta, tolerance, epsilon, stream: ProbeStream,
        round_budget, stats: RecoveryStats, on_latent) -> Skeleton:
    n = len(labels)
    kappa = delta
    nodes = oracle._slot_node
    # The compiled splitters cannot invoke the latent-audit callback, so
    # audited runs take the equivalent numpy route.
    kargs = _oracle_kargs(oracle) if on_latent is None else None
    queue = deque()
    queue.append((np.arange(n, dtype=np.int64), 0, 0, 0))
    edge_rows = []
    small_edges = []
    while queue:
        members, rep, gen, rnd = queue.popleft()
        _note_round(stats, rnd, members.shape[0])
        if members.shape[0] <= kappa:
            if kargs is not None:
                small_edges.extend(_small_bag_k(
                    oracle, kargs, members, gen, tolerance, epsilon))
            else:
                bag = Bag(frozenset(nodes[int(s)] for s in members),
                          nodes[int(rep)], gen)
                small_edges.extend(small_bag_reconstruct(
                    bag, oracle, tolerance=tolerance, epsilon=epsilon).edges())
            continue
        if round_budget is not None and rnd >= round_budget:
            raise RoundBudgetExceeded(
                f"bag of size {members.shape[0]} still large after {rnd} rounds "
                f"(budget {round_budget})"
            )
        stats.rounds = max(stats.rounds, rnd + 1)
        pool = members[members != rep]
        probes = pool[np.asarray(_sample_indices(pool.shape[0], kappa, stream),
                                 dtype=np.int64)]
        edges, final, iters = _bigsplit(oracle, kargs, members, rep, gen, probes,
                                        delta, tolerance, epsilon, stream, stats,
                                        on_latent)
        stats.bigsplit_retries.append(iters)
        edge_rows.extend(edges)
        top_gen = 0
        for slots, r, g in final:
            if g > top_gen:
                top_gen = g
            if slots.shape[0] >= 2:
                queue.append((slots, r, g, rnd + 1))
        stats.max_gen = max(stats.max_gen, top_gen)
    skeleton = Skeleton()
    for a, b, length in edge_rows:
        skeleton.add_edge(nodes[a], nodes[b], length)
    for u, v, length in small_edges:
        skeleton.add_edge(u, v, length)
    return skeleton
