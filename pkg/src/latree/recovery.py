"""Randomized divide-and-conquer recovery of a semi-labeled tree.

The driver keeps a FIFO queue of bags (node sets with a distinguished
representative). Small bags are reconstructed outright from all their
pairwise distances. A large bag is handed to ``bigsplit``, which runs
rounds of ``basic`` (split a bag along the path between its
representative and a probe node, synthesizing latent representatives at
branch points) followed by ``explode`` (partition a bag by the subtrees
hanging off its representative), retrying with fresh random probes until
the largest remaining bag has shrunk by a factor of sqrt(delta). The
union of the emitted skeleton fragments is the recovered tree.

Every operation takes an optional ``epsilon``: with ``epsilon = 0`` the
decision thresholds collapse to the float tolerance, and with a positive
value they widen so a run on distances perturbed by at most epsilon makes
the same decisions as the noiseless run, as long as epsilon stays well
under the minimum distance. Values derived through latent nodes carry a
growing error bound, tracked per bag as a generation counter ``gen``:
a value touching a generation-g representative is trusted only up to
``(1 + g/2) * epsilon``, and thresholds widen accordingly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidDelta,
    InvalidTreeError,
    NoiseTooLarge,
    NotATreeMetric,
    RoundBudgetExceeded,
)
from .oracle import DistanceOracle
from .tree import NodeId, SemiLabeledTree

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None


# -- deterministic probe randomness --------------------------------------------
#
# Probe sampling uses a dedicated 64-bit stream (splitmix64) implemented
# identically here and in the compiled kernels, so the reference and fast
# engines consume the same draws and paired noisy/noiseless runs can share
# one probe sequence.

_M64 = (1 << 64) - 1


class ProbeStream:
    """Deterministic stream of bounded integers for probe sampling."""

    __slots__ = ("state",)

    def __init__(self, seed: int | None = None):
        if seed is None:
            seed = int(np.random.SeedSequence().entropy)
        self.state = np.array([seed & _M64], dtype=np.uint64)

    def next_below(self, n: int) -> int:
        s = (int(self.state[0]) + 0x9E3779B97F4A7C15) & _M64
        self.state[0] = s
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        z = z ^ (z >> 31)
        return z % n


def _sample_indices(m: int, k: int, stream: ProbeStream) -> list[int]:
    """First k positions of a partial Fisher-Yates shuffle of range(m).

    Both engines draw probes through this helper, so a shared stream
    yields the same probe sequence regardless of engine.
    """
    arr = list(range(m))
    k = min(k, m)
    for i in range(k):
        j = i + stream.next_below(m - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k]


def _sample_without_replacement(pool: list, k: int, stream: ProbeStream) -> list:
    return [pool[i] for i in _sample_indices(len(pool), k, stream)]


# -- domain types ---------------------------------------------------------------


@dataclass(frozen=True)
class Bag:
    """A working node set with a representative the skeleton already holds.

    ``gen`` counts how many latent derivations the representative's
    distances went through (0 for regular representatives); it scales the
    noise thresholds of operations on this bag.
    """

    members: frozenset
    representative: NodeId
    gen: int = 0

    def __post_init__(self):
        if not isinstance(self.members, frozenset):
            object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise ValueError("a bag cannot be empty")
        if self.representative not in self.members:
            raise ValueError("the representative must be a member")

    def __len__(self) -> int:
        return len(self.members)


class Skeleton:
    """A growing set of weighted edges that must stay acyclic.

    Edge insertions maintain a union-find over the touched nodes, so a
    cycle-closing or duplicated edge fails immediately instead of
    corrupting the final assembly.
    """

    def __init__(self):
        self._edges: dict[tuple[NodeId, NodeId], float] = {}
        self._parent: dict[NodeId, NodeId] = {}
        self._size: dict[NodeId, int] = {}

    def _find(self, x: NodeId) -> NodeId:
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def add_edge(self, u: NodeId, v: NodeId, length: float) -> None:
        if u == v:
            raise InvalidTreeError(f"skeleton self-loop at {u}")
        if not (math.isfinite(length) and length > 0.0):
            raise InvalidTreeError(f"skeleton edge {u}-{v} has invalid length {length!r}")
        for x in (u, v):
            if x not in self._parent:
                self._parent[x] = x
                self._size[x] = 1
        ru, rv = self._find(u), self._find(v)
        if ru == rv:
            raise InvalidTreeError(f"skeleton edge {u}-{v} would close a cycle")
        if self._size[ru] < self._size[rv]:
            ru, rv = rv, ru
        self._parent[rv] = ru
        self._size[ru] += self._size[rv]
        key = (u, v) if u < v else (v, u)
        self._edges[key] = float(length)

    def merge(self, other: "Skeleton") -> None:
        for (u, v), length in other._edges.items():
            self.add_edge(u, v, length)

    def edges(self):
        for (u, v), length in self._edges.items():
            yield u, v, length

    def nodes(self) -> set[NodeId]:
        return set(self._parent)

    @property
    def connected(self) -> bool:
        roots = {self._find(x) for x in self._parent}
        return len(roots) <= 1

    def __len__(self) -> int:
        return len(self._edges)


@dataclass(frozen=True)
class LatentRecord:
    """Provenance of one synthesized latent node, for error audits."""

    uid: int
    gen: int
    alpha: NodeId
    rho: NodeId
    first_member: NodeId
    stored: tuple


@dataclass
class RecoveryStats:
    """Instrumentation of one recovery run.

    ``bigsplit_retries`` holds the while-iteration count of every bigsplit
    call; ``split_oversize`` counts the iterations whose largest output
    bag was at least 1 + |B|/sqrt(delta); ``max_bag_trajectory[r]`` is the
    largest bag processed at queue round r.
    """

    query_count: int = 0
    rounds: int = 0
    bigsplit_retries: list = field(default_factory=list)
    max_bag_trajectory: list = field(default_factory=list)
    split_iterations: int = 0
    split_oversize: int = 0
    latent_count: int = 0
    max_gen: int = 0
    latents: list = field(default_factory=list)


def _thresholds(tolerance: float, epsilon: float, gen: int) -> tuple[float, float, float]:
    """Decision widths for a bag whose representative is generation ``gen``.

    Returns (grouping, on-path, same-subtree) thresholds. A queried value
    errs by at most epsilon and a value involving the representative by at
    most e = (1 + gen/2) * epsilon, so the D-value gap test compares two
    (query - rep) differences (2 * (epsilon + e)) and both three-term
    tests combine one query with two representative legs (epsilon + 2e).
    """
    e = (1.0 + 0.5 * gen) * epsilon
    return (
        tolerance + 2.0 * (epsilon + e),
        tolerance + epsilon + 2.0 * e,
        tolerance + epsilon + 2.0 * e,
    )


# -- core operations -------------------------------------------------------------


def basic(bag: Bag, alpha: NodeId, oracle: DistanceOracle, *,
          tolerance: float = 1e-9, epsilon: float = 0.0,
          on_latent=None) -> tuple[list[Bag], Skeleton]:
    """Split a bag along the path from its representative to ``alpha``.

    Every member v is placed by the value D(v) = d(v, alpha) - d(v, rep),
    which is constant exactly on the sets of members branching off the
    rep-alpha path at the same point. The bags come back ordered small to
    large D, so alpha's bag is first and the representative's last. Each
    bag's representative is the path point it hangs from: an existing
    member if one sits on the path, otherwise a fresh latent node whose
    distances to the bag are published to the oracle. The returned
    skeleton fragment is the path through those representatives.

    New queries are at most 2|B| - 3: the alpha column costs |B| - 1 and
    the representative column at most |B| - 2 more (their shared pair is
    counted once, and rep distances are usually already available).
    """
    rep = bag.representative
    if alpha == rep:
        raise ValueError("alpha must differ from the bag representative")
    if alpha not in bag.members:
        raise ValueError("alpha must be a member of the bag")
    members = sorted(bag.members)
    dva = {v: oracle.query(v, alpha) for v in members}
    dvr = {v: oracle.query(v, rep) for v in members}
    length = dva[rep]

    group_tol, onpath_tol, _ = _thresholds(tolerance, epsilon, bag.gen)
    dvalue = {v: dva[v] - dvr[v] for v in members}
    ordered = sorted(members, key=dvalue.get)
    groups: list[list[NodeId]] = []
    prev = None
    for v in ordered:
        if prev is None or dvalue[v] - prev > group_tol:
            groups.append([])
        groups[-1].append(v)
        prev = dvalue[v]

    bags_out: list[Bag] = []
    reps: list[NodeId] = []
    svals: list[float] = []
    fragment = Skeleton()
    for g in groups:
        u = min(g, key=dva.get)
        if abs(dva[u] + dvr[u] - length) <= onpath_tol:
            w, s = u, dva[u]
            gen_w = bag.gen if u == rep else 0
            for v in g:
                if v == u:
                    continue
                h = 0.5 * (dva[v] + dvr[v] - length)
                if h <= 0.0:
                    raise NoiseTooLarge(
                        f"member {v} collapsed onto path node {u}; "
                        f"noise exceeds the split margin"
                    )
                oracle.store(u, v, h)
        else:
            if any(v.is_latent for v in g):
                raise NoiseTooLarge(
                    "latent representative displaced from its path group"
                )
            uid = oracle.fresh_latent_uid()
            w = NodeId.latent(uid)
            gen_w = bag.gen + 1
            s = 0.5 * (dva[g[0]] + length - dvr[g[0]])
            if not 0.0 < s < length:
                raise NoiseTooLarge(
                    f"latent branch point fell outside the path (offset {s})"
                )
            stored = []
            for v in g:
                h = 0.5 * (dva[v] + dvr[v] - length)
                if h <= 0.0:
                    raise NoiseTooLarge(
                        f"member {v} collapsed onto its latent branch point"
                    )
                oracle.store(w, v, h)
                stored.append((v, h))
            oracle.store(w, alpha, s)
            oracle.store(w, rep, length - s)
            if on_latent is not None:
                on_latent(LatentRecord(uid, gen_w, alpha, rep, g[0], tuple(stored)))
        reps.append(w)
        svals.append(s)
        bags_out.append(Bag(frozenset(g) | {w}, w, gen_w))
    for i in range(len(reps) - 1):
        step = svals[i + 1] - svals[i]
        if step <= 0.0:
            raise NoiseTooLarge("path representatives out of order; noise too large")
        fragment.add_edge(reps[i], reps[i + 1], step)
    return bags_out, fragment


def explode(bag: Bag, oracle: DistanceOracle, *,
            tolerance: float = 1e-9, epsilon: float = 0.0) -> list[Bag]:
    """Partition a bag by the subtrees hanging off its representative.

    Members u, v share a subtree exactly when the path between them avoids
    the representative, i.e. d(u, rep) + d(v, rep) - d(u, v) is strictly
    positive (above the noise threshold). Peels one subtree at a time;
    every output bag keeps the input representative. New queries stay
    under (|B| - 1) * deg(rep): each peel pass queries one row of the
    remaining members, and rep distances are already available.
    """
    rep = bag.representative
    _, _, subtree_tol = _thresholds(tolerance, epsilon, bag.gen)
    remaining = sorted(bag.members - {rep})
    if any(v.is_latent for v in remaining):
        raise NoiseTooLarge("two latent nodes ended up in one bag")
    out: list[Bag] = []
    while remaining:
        u = remaining[0]
        dur = oracle.query(u, rep)
        group = [u]
        rest = []
        for v in remaining[1:]:
            if dur + oracle.query(v, rep) - oracle.query(u, v) > subtree_tol:
                group.append(v)
            else:
                rest.append(v)
        out.append(Bag(frozenset(group) | {rep}, rep, bag.gen))
        remaining = rest
    return out


def bigsplit(bag: Bag, probes: list, oracle: DistanceOracle, delta: int, *,
             tolerance: float = 1e-9, epsilon: float = 0.0,
             rng: ProbeStream | None = None, stats: RecoveryStats | None = None,
             on_latent=None, max_retries: int = 10_000) -> tuple[Skeleton, list[Bag], int]:
    """Split a large bag until every piece is at most |B|/sqrt(delta).

    One iteration applies ``basic`` at each probe (within whatever bag
    currently holds it) and then explodes every resulting bag. If the
    largest output still exceeds the target, the iteration is discarded
    wholesale and retried with fresh probes drawn from the original bag;
    the geometric retry count is part of the expected-query bound.
    Returns the successful iteration's skeleton fragment, its bags, and
    the number of iterations used.
    """
    rep = bag.representative
    probes = list(probes)
    if len(set(probes)) != len(probes):
        raise ValueError("probes must be distinct")
    for u in probes:
        if u not in bag.members or u == rep:
            raise ValueError("probes must be bag members distinct from the representative")
    if not probes:
        raise ValueError("need at least one probe")
    if rng is None:
        rng = ProbeStream(0)
    kappa = len(probes)
    pool = sorted(bag.members - {rep})
    target = len(bag.members) / math.sqrt(delta)

    iters = 0
    while True:
        iters += 1
        if iters > max_retries:
            raise RoundBudgetExceeded(
                f"bigsplit failed to shrink the bag after {max_retries} attempts"
            )
        collection = [bag]
        fragment = Skeleton()
        for u in probes:
            holder = None
            for b in collection:
                if u in b.members:
                    holder = b
                    break
            if holder is None or u == holder.representative:
                continue
            new_bags, frag = basic(holder, u, oracle, tolerance=tolerance,
                                   epsilon=epsilon, on_latent=on_latent)
            collection.remove(holder)
            collection.extend(new_bags)
            fragment.merge(frag)
        final: list[Bag] = []
        for b in collection:
            subs = explode(b, oracle, tolerance=tolerance, epsilon=epsilon)
            if len(subs) > delta:
                raise InvalidDelta(
                    f"representative {b.representative} branches into {len(subs)} "
                    f"subtrees, exceeding delta={delta}"
                )
            final.extend(subs)
        largest = max((len(b) for b in final), default=0)
        if stats is not None:
            stats.split_iterations += 1
            if largest >= 1.0 + target:
                stats.split_oversize += 1
        if largest <= target:
            return fragment, final, iters
        probes = _sample_without_replacement(pool, kappa, rng)


def small_bag_reconstruct(bag: Bag, oracle: DistanceOracle, *,
                          tolerance: float = 1e-9, epsilon: float = 0.0) -> Skeleton:
    """Exact weighted skeleton of the tree induced by a small bag.

    Queries all pairwise distances, then inserts members one at a time:
    walk the partial skeleton from its first node, at each node measuring
    how far the new member's attachment sits along each outgoing edge
    (the split value (d(cur, x) + len - d(other, x)) / 2). The walk either
    descends, stops at a node, or stops strictly inside an edge, where a
    latent node is created. Distance estimates for created latent nodes
    are derived once from the member distances, so estimate errors stay
    bounded regardless of insertion order.
    """
    members = sorted(bag.members)
    fragment = Skeleton()
    if len(members) < 2:
        return fragment
    e_bag = (1.0 + 0.5 * bag.gen) * epsilon
    tol = tolerance + 3.0 * e_bag

    for i, u in enumerate(members):
        for v in members[i + 1:]:
            oracle.query(u, v)

    # est[x][y]: estimated distance from skeleton node x to member y.
    est: dict[NodeId, dict[NodeId, float]] = {
        m: {v: oracle.query(m, v) for v in members} for m in members
    }
    adj: dict[NodeId, dict[NodeId, float]] = {m: {} for m in members[:2]}
    first_len = est[members[0]][members[1]]
    if first_len <= 0.0:
        raise NotATreeMetric(f"members {members[0]} and {members[1]} coincide")
    adj[members[0]][members[1]] = first_len
    adj[members[1]][members[0]] = first_len

    def substitute(old: NodeId, new: NodeId) -> None:
        adj[new] = adj.pop(old)
        for nbr in adj[new]:
            adj[nbr][new] = adj[nbr].pop(old)
        del est[old]

    for x in members[2:]:
        cur = members[0]
        prev = None
        while True:
            inward = None  # (neighbor, split value, full descent?)
            for c in sorted(adj[cur]):
                if c == prev:
                    continue
                elen = adj[cur][c]
                m = 0.5 * (est[cur][x] + elen - est[c][x])
                if m <= tol:
                    continue
                if inward is not None:
                    raise NoiseTooLarge(
                        f"ambiguous attachment of {x}: two directions from {cur}"
                    )
                inward = (c, m, m >= elen - tol)
            if inward is not None and inward[2]:
                prev, cur = cur, inward[0]
                continue
            if inward is None:
                # x attaches at cur itself.
                gap = est[cur][x]
                if gap <= tol:
                    # Only a latent this call created may be identified with
                    # x; a coinciding member (regular or the bag's latent
                    # representative) means the input is not a tree metric.
                    if cur.is_latent and cur not in bag.members:
                        substitute(cur, x)
                    else:
                        raise NotATreeMetric(f"nodes {cur} and {x} coincide")
                else:
                    adj[cur][x] = gap
                    adj.setdefault(x, {})[cur] = gap
                break
            c, m, _ = inward
            elen = adj[cur][c]
            h = 0.5 * (est[cur][x] + est[c][x] - elen)
            if h <= tol:
                # x sits on the edge interior itself: split without a latent.
                _split_edge(adj, cur, c, x, m, elen)
            else:
                w = NodeId.latent(oracle.fresh_latent_uid())
                row = {}
                for y in members:
                    my = 0.5 * (est[cur][y] + elen - est[c][y])
                    hy = 0.5 * (est[cur][y] + est[c][y] - elen)
                    row[y] = hy + abs(m - my)
                est[w] = row
                _split_edge(adj, cur, c, w, m, elen)
                adj[w][x] = h
                adj.setdefault(x, {})[w] = h
            break

    _validate_small_skeleton(adj, est, members, tolerance, e_bag, epsilon)
    for u, nbrs in adj.items():
        for v, length in nbrs.items():
            if u < v:
                fragment.add_edge(u, v, length)
    return fragment


def _split_edge(adj, cur, c, mid, m, elen) -> None:
    del adj[cur][c]
    del adj[c][cur]
    node = adj.setdefault(mid, {})
    node[cur] = m
    node[c] = elen - m
    adj[cur][mid] = m
    adj[c][mid] = elen - m


def _validate_small_skeleton(adj, est, members, tolerance, e_bag, epsilon) -> None:
    """Cross-check the built skeleton's path metric against the queried one."""
    slack = 8.0 * tolerance + (2.0 * len(members) + 4.0) * (e_bag + epsilon)
    for src in members:
        dist = {src: 0.0}
        stack = [src]
        while stack:
            a = stack.pop()
            for b, length in adj[a].items():
                if b not in dist:
                    dist[b] = dist[a] + length
                    stack.append(b)
        for dst in members:
            if abs(dist[dst] - est[src][dst]) > slack:
                raise NotATreeMetric(
                    f"pair {src}-{dst}: skeleton path {dist[dst]!r} vs queried "
                    f"{est[src][dst]!r}; input violates the four-point condition"
                )


def assemble(skeleton: Skeleton) -> SemiLabeledTree:
    """Build the final tree from a skeleton, contracting degree-2 latents.

    A latent node that ends with exactly two incident edges cannot exist
    in a valid semi-labeled tree, so its edges are merged into one with
    the summed length.
    """
    adj: dict[NodeId, dict[NodeId, float]] = {}
    for u, v, length in skeleton.edges():
        adj.setdefault(u, {})[v] = length
        adj.setdefault(v, {})[u] = length
    if not adj:
        raise InvalidTreeError("empty skeleton")
    if not skeleton.connected:
        raise InvalidTreeError("skeleton is disconnected")

    # Contract in ascending node order, rescanning until stable, and sum the
    # two edge lengths smaller-neighbor first.  The fixed order keeps float
    # rounding on chains identical across skeletons that hold the same edge
    # set in a different insertion order.
    changed = True
    while changed:
        changed = False
        for x in sorted(adj):
            if not x.is_latent or len(adj.get(x, ())) != 2:
                continue
            (a, la), (b, lb) = sorted(adj[x].items())
            del adj[a][x]
            del adj[b][x]
            del adj[x]
            adj[a][b] = la + lb
            adj[b][a] = la + lb
            changed = True
    edges = []
    for u in sorted(adj):
        for v, length in adj[u].items():
            if u < v:
                edges.append((u, v, length))
    return SemiLabeledTree(edges, nodes=sorted(adj))


# -- main driver ------------------------------------------------------------------


def recover(oracle: DistanceOracle, regular_labels=None, delta: int = 3, *,
            tolerance: float = 1e-9, seed: int | None = None,
            engine: str = "auto", record_latents: bool = False
            ) -> tuple[SemiLabeledTree, RecoveryStats]:
    """Recover the semi-labeled tree behind an exact distance oracle.

    ``delta`` must be at least the maximum degree of the underlying tree;
    it also sets the probe count and the small-bag threshold. ``seed``
    fixes the probe stream. ``engine`` selects the compiled fast path
    ("fast"), the pure-Python reference path ("reference"), or whichever
    is available ("auto"); both produce identical output for identical
    seeds.
    """
    return _recover_impl(oracle, regular_labels, delta, tolerance, 0.0, seed,
                         engine, None, record_latents)


def _recover_impl(oracle, regular_labels, delta, tolerance, epsilon, seed,
                  engine, round_budget, record_latents):
    if regular_labels is None:
        regular_labels = oracle.labels
    labels = sorted(int(x) for x in regular_labels)
    if not labels:
        raise ValueError("need at least one regular label")
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate regular labels")
    delta = int(delta)
    if delta < 2:
        raise InvalidDelta(f"delta must be at least 2, got {delta}")

    stats = RecoveryStats()
    if len(labels) == 1:
        tree = SemiLabeledTree([], nodes=[NodeId.regular(labels[0])])
        stats.query_count = oracle.query_count
        return tree, stats

    if engine not in ("auto", "fast", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    fast_ok = _kernels is not None and (oracle._filled or oracle._lca is not None)
    if engine == "fast" and not fast_ok:
        raise ValueError(
            "fast engine needs compiled kernels and a block-backed oracle"
        )
    use_fast = fast_ok if engine == "auto" else engine == "fast"

    # Reserve rows for every latent the run typically creates (at most
    # n - 2 in the final tree, plus up to delta - 1 per discarded retry
    # iteration) so latent storage rarely reallocates mid-run.
    oracle._reserve_latent_rows(len(labels) + delta + 16)

    stream = ProbeStream(seed)
    on_latent = stats.latents.append if record_latents else None
    if use_fast:
        skeleton = _fast_run(oracle, labels, delta, tolerance, epsilon,
                             stream, round_budget, stats, on_latent)
    else:
        skeleton = _reference_run(oracle, labels, delta, tolerance, epsilon,
                                  stream, round_budget, stats, on_latent)
    tree = assemble(skeleton)
    stats.query_count = oracle.query_count
    stats.latent_count = tree.num_latent
    return tree, stats


def _note_round(stats: RecoveryStats, rnd: int, size: int) -> None:
    while len(stats.max_bag_trajectory) <= rnd:
        stats.max_bag_trajectory.append(0)
    if size > stats.max_bag_trajectory[rnd]:
        stats.max_bag_trajectory[rnd] = size


def _reference_run(oracle, labels, delta, tolerance, epsilon, stream,
                   round_budget, stats, on_latent) -> Skeleton:
    kappa = delta
    members = frozenset(NodeId.regular(lab) for lab in labels)
    root = Bag(members, NodeId.regular(labels[0]))
    skeleton = Skeleton()
    queue = deque([(root, 0)])
    while queue:
        bag, rnd = queue.popleft()
        _note_round(stats, rnd, len(bag))
        if len(bag) <= kappa:
            skeleton.merge(small_bag_reconstruct(bag, oracle, tolerance=tolerance,
                                                 epsilon=epsilon))
            continue
        if round_budget is not None and rnd >= round_budget:
            raise RoundBudgetExceeded(
                f"bag of size {len(bag)} still large after {rnd} rounds "
                f"(budget {round_budget})"
            )
        stats.rounds = max(stats.rounds, rnd + 1)
        pool = sorted(bag.members - {bag.representative})
        probes = _sample_without_replacement(pool, kappa, stream)
        fragment, out_bags, iters = bigsplit(
            bag, probes, oracle, delta, tolerance=tolerance, epsilon=epsilon,
            rng=stream, stats=stats, on_latent=on_latent)
        stats.bigsplit_retries.append(iters)
        skeleton.merge(fragment)
        for b in out_bags:
            if len(b) >= 2:
                queue.append((b, rnd + 1))
        stats.max_gen = max(stats.max_gen, max((b.gen for b in out_bags), default=0))
    return skeleton


def _fast_run(oracle, labels, delta, tolerance, epsilon, stream,
              round_budget, stats, on_latent) -> Skeleton:
    from . import _fast

    return _fast.run(oracle, labels, delta, tolerance, epsilon, stream,
                     round_budget, stats, on_latent)
