"""Semi-labeled weighted trees and tree-metric utilities.

A semi-labeled tree carries two kinds of nodes: regular nodes, identified
by integer labels, and anonymous latent nodes. Latent nodes must be
internal with degree at least 3, which bounds the total node count by
2n + 1 for n regular nodes. Edge lengths are strictly positive, and the
induced shortest-path distance between regular nodes is the tree metric
the rest of the package works with.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidTreeError

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None


class NodeId(NamedTuple):
    """Identity of a tree node: a labeled regular node or an anonymous latent one.

    Regular nodes sort before latent nodes, which keeps iteration orders
    deterministic everywhere a mixed set of nodes is sorted.
    """

    is_latent: bool
    index: int

    @classmethod
    def regular(cls, label: int) -> "NodeId":
        return cls(False, int(label))

    @classmethod
    def latent(cls, uid: int) -> "NodeId":
        return cls(True, int(uid))

    def __repr__(self) -> str:
        return f"L{self.index}" if self.is_latent else f"R{self.index}"


class SemiLabeledTree:
    """Immutable weighted tree with labeled regular and anonymous latent nodes.

    Parameters
    ----------
    edges:
        Iterable of ``(u, v, length)`` triples with ``NodeId`` endpoints.
    nodes:
        Optional extra nodes; only needed for the edgeless single-node tree.

    The constructor validates every structural invariant: positive finite
    lengths, no self-loops or parallel edges, connectedness, acyclicity
    (|E| = |V| - 1), latent degree >= 3, and the 2n + 1 node bound.
    """

    __slots__ = ("_adj", "_nodes", "_regular_labels", "_index", "_csr_cache",
                 "_lca_cache")

    def __init__(
        self,
        edges: Iterable[tuple[NodeId, NodeId, float]],
        nodes: Iterable[NodeId] = (),
    ):
        adj: dict[NodeId, dict[NodeId, float]] = {}
        for node in nodes:
            self._check_node(node)
            adj.setdefault(node, {})
        for u, v, length in edges:
            self._check_node(u)
            self._check_node(v)
            w = float(length)
            if not np.isfinite(w) or w <= 0.0:
                raise InvalidTreeError(f"edge {u}-{v} has non-positive length {length!r}")
            if u == v:
                raise InvalidTreeError(f"self-loop at {u}")
            if v in adj.get(u, ()):
                raise InvalidTreeError(f"parallel edge {u}-{v}")
            adj.setdefault(u, {})[v] = w
            adj.setdefault(v, {})[u] = w

        if not adj:
            raise InvalidTreeError("a tree needs at least one node")
        n_nodes = len(adj)
        n_edges = sum(len(nbrs) for nbrs in adj.values()) // 2
        if n_edges != n_nodes - 1:
            raise InvalidTreeError(f"{n_nodes} nodes need {n_nodes - 1} edges, got {n_edges}")

        seen = {next(iter(adj))}
        stack = [next(iter(adj))]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        if len(seen) != n_nodes:
            raise InvalidTreeError("tree is disconnected")

        regular = sorted(node.index for node in adj if not node.is_latent)
        if not regular:
            raise InvalidTreeError("tree has no regular nodes")
        if len(set(regular)) != len(regular):
            raise InvalidTreeError("duplicate regular labels")
        for node, nbrs in adj.items():
            if node.is_latent and len(nbrs) < 3:
                raise InvalidTreeError(f"latent node {node} has degree {len(nbrs)} < 3")
        if n_nodes > 2 * len(regular) + 1:
            raise InvalidTreeError(
                f"{n_nodes} nodes exceed the 2n+1 bound for n={len(regular)} regular nodes"
            )

        self._adj = adj
        self._nodes = tuple(adj)
        self._regular_labels = tuple(regular)
        self._index = {node: i for i, node in enumerate(self._nodes)}
        self._csr_cache: tuple | None = None
        self._lca_cache: tuple | None = None

    @staticmethod
    def _check_node(node: NodeId) -> None:
        if not isinstance(node, NodeId):
            raise InvalidTreeError(f"expected NodeId, got {node!r}")

    # -- structure ---------------------------------------------------------

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return self._nodes

    @property
    def regular_labels(self) -> tuple[int, ...]:
        """Sorted labels of the regular nodes."""
        return self._regular_labels

    @property
    def num_regular(self) -> int:
        return len(self._regular_labels)

    @property
    def num_latent(self) -> int:
        return len(self._nodes) - len(self._regular_labels)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node: NodeId) -> bool:
        return node in self._adj

    def neighbors(self, node: NodeId) -> dict[NodeId, float]:
        """Mapping neighbor -> edge length. Do not mutate."""
        return self._adj[node]

    def degree(self, node: NodeId) -> int:
        return len(self._adj[node])

    @property
    def max_degree(self) -> int:
        return max(len(nbrs) for nbrs in self._adj.values())

    def edges(self) -> Iterator[tuple[NodeId, NodeId, float]]:
        """All edges once each, endpoints in sorted order."""
        for u, nbrs in self._adj.items():
            for v, w in nbrs.items():
                if u < v:
                    yield u, v, w

    @property
    def min_edge_length(self) -> float:
        """Smallest edge length; a conservative floor for all node separations."""
        return min(w for _, _, w in self.edges())

    # -- metric ------------------------------------------------------------

    def path_distance(self, u: NodeId, v: NodeId) -> float:
        """Length of the unique path between two nodes."""
        if u not in self._adj or v not in self._adj:
            raise KeyError(f"node not in tree: {u if u not in self._adj else v}")
        if u == v:
            return 0.0
        dist = {u: 0.0}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            dx = dist[x]
            for y, w in self._adj[x].items():
                if y not in dist:
                    dist[y] = dx + w
                    if y == v:
                        return dist[y]
                    queue.append(y)
        raise AssertionError("unreachable: tree is connected")

    def _csr(self):
        """Adjacency in CSR form over the node indexing, cached."""
        if self._csr_cache is None:
            n = len(self._nodes)
            indptr = np.zeros(n + 1, dtype=np.int64)
            for node, nbrs in self._adj.items():
                indptr[self._index[node] + 1] = len(nbrs)
            np.cumsum(indptr, out=indptr)
            indices = np.empty(indptr[-1], dtype=np.int64)
            weights = np.empty(indptr[-1], dtype=np.float64)
            cursor = indptr[:-1].copy()
            for node, nbrs in self._adj.items():
                i = self._index[node]
                for other, w in nbrs.items():
                    k = cursor[i]
                    indices[k] = self._index[other]
                    weights[k] = w
                    cursor[i] += 1
            self._csr_cache = (indptr, indices, weights)
        return self._csr_cache

    def _euler_lca(self):
        """Euler-tour range-minimum structure for O(1) exact distances, cached.

        Returns ``(first, depth, st, logs)`` over node indices: ``st[k, i]``
        is the minimum tour depth on the window ``[i, i + 2^k)``, and the
        minimum between the first visits of two nodes is their lowest
        common ancestor's depth, so
        ``d(u, v) = depth[u] + depth[v] - 2 * lca_depth`` with every term
        an exact sum of edge lengths.
        """
        if self._lca_cache is None:
            indptr, indices, weights = self._csr()
            if _kernels is not None:
                first, tdepth, depth = _kernels.euler_depths(indptr, indices, weights)
            else:
                first, tdepth, depth = _euler_depths_py(indptr, indices, weights)
            m = tdepth.shape[0]
            levels = max(1, int(m).bit_length())
            st = np.empty((levels, m))
            st[0] = tdepth
            for k in range(1, levels):
                half = 1 << (k - 1)
                valid = m - (1 << k) + 1
                if valid > 0:
                    np.minimum(st[k - 1, :valid], st[k - 1, half:half + valid],
                               out=st[k, :valid])
                    st[k, valid:] = st[k - 1, valid:]
                else:
                    st[k] = st[k - 1]
            # logs[i] = floor(log2(i)); frexp exponents are exact for ints.
            logs = np.frexp(np.arange(m + 1, dtype=np.float64))[1].astype(np.int64) - 1
            logs[0] = 0
            self._lca_cache = (first, depth, st, logs)
        return self._lca_cache

    def distance_rows(self, sources: Sequence[NodeId], targets: Sequence[NodeId]) -> np.ndarray:
        """Distances from each source to each target as a dense array."""
        indptr, indices, weights = self._csr()
        src = np.fromiter((self._index[s] for s in sources), dtype=np.int64, count=len(sources))
        tgt = np.fromiter((self._index[t] for t in targets), dtype=np.int64, count=len(targets))
        if _kernels is not None:
            return _kernels.distance_rows(indptr, indices, weights, src, tgt)
        out = np.empty((len(src), len(tgt)))
        full = np.empty(len(self._nodes))
        for r, s in enumerate(src):
            full[:] = -1.0
            full[s] = 0.0
            stack = [s]
            while stack:
                x = stack.pop()
                dx = full[x]
                for k in range(indptr[x], indptr[x + 1]):
                    y = indices[k]
                    if full[y] < 0.0:
                        full[y] = dx + weights[k]
                        stack.append(y)
            out[r] = full[tgt]
        return out

    def full_metric(self) -> "DistanceMatrix":
        """Pairwise distances between all regular nodes."""
        return DistanceMatrix(self._regular_labels, self.regular_block())

    def regular_block(self) -> np.ndarray:
        """Dense regular-pair distance block in sorted-label order.

        One rooted traversal fixes depths; every other row is its parent's
        row shifted by the connecting edge, with the sign flipped on the
        subtree below (a contiguous column range once columns are laid out
        in discovery order). Each entry is an exact sum/difference of edge
        lengths, so the block is exactly symmetric whenever the lengths
        make path sums representable.
        """
        indptr, indices, weights = self._csr()
        nv = len(self._nodes)
        order = np.empty(nv, dtype=np.int64)
        parent = np.full(nv, -1, dtype=np.int64)
        pweight = np.zeros(nv)
        tin = np.empty(nv, dtype=np.int64)
        tout = np.empty(nv, dtype=np.int64)
        # Iterative DFS from node 0: discovery order gives both the
        # parent-before-child sweep and the subtree intervals.
        stack = [(0, False)]
        clock = 0
        pos = 0
        while stack:
            x, leaving = stack.pop()
            if leaving:
                tout[x] = clock
                continue
            tin[x] = clock
            clock += 1
            order[pos] = x
            pos += 1
            stack.append((x, True))
            for k in range(indptr[x], indptr[x + 1]):
                y = indices[k]
                if parent[x] != y and y != 0:
                    parent[y] = x
                    pweight[y] = weights[k]
                    stack.append((y, False))

        reg_idx = np.fromiter(
            (self._index[NodeId.regular(lab)] for lab in self._regular_labels),
            dtype=np.int64,
            count=len(self._regular_labels),
        )
        # Columns in discovery order so each subtree is one contiguous slice.
        col_order = np.argsort(tin[reg_idx], kind="stable")
        reg_tins = tin[reg_idx][col_order]
        lo = np.searchsorted(reg_tins, tin)
        hi = np.searchsorted(reg_tins, tout)
        inv = np.empty_like(col_order)
        inv[col_order] = np.arange(len(col_order))

        if _kernels is not None:
            return _kernels.metric_block(order, parent, pweight, lo, hi,
                                         reg_idx[col_order], reg_idx, inv)
        rows = np.empty((nv, len(reg_idx)))
        root = order[0]
        depth = np.zeros(nv)
        for x in order[1:]:
            depth[x] = depth[parent[x]] + pweight[x]
        rows[root] = depth[reg_idx[col_order]]
        for x in order[1:]:
            w = pweight[x]
            np.add(rows[parent[x]], w, out=rows[x])
            rows[x, lo[x]:hi[x]] -= 2.0 * w
        block = np.ascontiguousarray(rows[reg_idx][:, inv])
        np.fill_diagonal(block, 0.0)
        return block

    def extremes(self) -> tuple[float, float]:
        """(min, max) distance over distinct regular pairs."""
        if self.num_regular < 2:
            raise InvalidTreeError("extremes need at least two regular nodes")
        values = self.full_metric().values
        off = values[~np.eye(len(values), dtype=bool)]
        return float(off.min()), float(off.max())


def _euler_depths_py(indptr, indices, weights):
    """Pure-Python mirror of the compiled Euler-tour builder."""
    nv = indptr.shape[0] - 1
    first = np.empty(nv, dtype=np.int64)
    depth = np.zeros(nv)
    tdepth = np.empty(2 * nv - 1)
    parent = np.full(nv, -1, dtype=np.int64)
    cursor = indptr[:-1].copy()
    stack = [0]
    first[0] = 0
    tdepth[0] = 0.0
    t = 1
    while stack:
        x = stack[-1]
        child = -1
        w = 0.0
        k = cursor[x]
        hi = indptr[x + 1]
        while k < hi:
            y = indices[k]
            if y != parent[x]:
                child = int(y)
                w = float(weights[k])
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
            stack.append(child)
        else:
            stack.pop()
            if stack:
                tdepth[t] = depth[stack[-1]]
                t += 1
    return first, tdepth, depth


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric distance matrix over labeled regular nodes.

    ``labels`` are sorted integers; ``values[i, j]`` is the distance between
    ``labels[i]`` and ``labels[j]``.
    """

    labels: tuple[int, ...]
    values: np.ndarray
    _pos: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"matrix must be square, got shape {values.shape}")
        if len(labels) != values.shape[0]:
            raise ValueError("label count does not match matrix size")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix entries must be finite")
        if not np.array_equal(values, values.T):
            raise ValueError("matrix must be symmetric")
        if np.any(np.diagonal(values) != 0.0):
            raise ValueError("diagonal must be zero")
        off = values[~np.eye(len(labels), dtype=bool)]
        if off.size and off.min() <= 0.0:
            raise ValueError("off-diagonal distances must be strictly positive")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_pos", {lab: i for i, lab in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def distance(self, u_label: int, v_label: int) -> float:
        return float(self.values[self._pos[u_label], self._pos[v_label]])


def matrix_to_csv(matrix: DistanceMatrix) -> str:
    """Serialize a distance matrix: header ``label,<l1>,...`` then one row per label."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", *matrix.labels])
    for i, lab in enumerate(matrix.labels):
        writer.writerow([lab, *(_format_float(v) for v in matrix.values[i])])
    return buf.getvalue()


def matrix_from_csv(text: str) -> DistanceMatrix:
    """Parse the CSV format written by :func:`matrix_to_csv`."""
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows or rows[0][:1] != ["label"]:
        raise ValueError("matrix CSV must start with a 'label' header row")
    try:
        labels = [int(x) for x in rows[0][1:]]
    except ValueError as exc:
        raise ValueError(f"non-integer label in header: {exc}") from None
    if len(rows) != len(labels) + 1:
        raise ValueError(f"expected {len(labels)} data rows, got {len(rows) - 1}")
    values = np.zeros((len(labels), len(labels)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(labels) + 1:
            raise ValueError(f"row {i + 2} has {len(row)} fields, expected {len(labels) + 1}")
        if int(row[0]) != labels[i]:
            raise ValueError(f"row {i + 2} is labeled {row[0]}, expected {labels[i]}")
        values[i] = [float(x) for x in row[1:]]
    return DistanceMatrix(tuple(labels), values)


def _format_float(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


# -- four-point condition ----------------------------------------------------


@dataclass(frozen=True)
class FourPointResult:
    """Outcome of a four-point scan.

    ``ok`` is False iff a violating quadruple was found; ``witness`` then
    holds its labels. ``checked`` counts scanned quadruples and
    ``exhaustive`` says whether that was all of them.
    """

    ok: bool
    witness: tuple[int, int, int, int] | None
    checked: int
    exhaustive: bool
    max_violation: float

    def __bool__(self) -> bool:
        return self.ok


def check_four_point(
    matrix: DistanceMatrix | np.ndarray,
    tolerance: float = 0.0,
    *,
    labels: Sequence[int] | None = None,
    exhaustive_limit: int = 60,
    sample_size: int = 1_000_000,
    seed: int = 0,
) -> FourPointResult:
    """Test the four-point condition over quadruples with repetition.

    A quadruple (i, j, k, l) violates the condition when
    ``d(i,j) + d(k,l) > max(d(i,k) + d(j,l), d(i,l) + d(j,k)) + tolerance``.
    All quadruples are scanned for up to ``exhaustive_limit`` labels;
    beyond that, ``sample_size`` quadruples are drawn with a seeded RNG.
    """

    if isinstance(matrix, DistanceMatrix):
        d = matrix.values
        labs = matrix.labels
    else:
        d = np.asarray(matrix, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("matrix must be square")
        if not np.array_equal(d, d.T):
            raise ValueError("matrix must be symmetric")
        if np.any(d < 0.0):
            raise ValueError("distances must be non-negative")
        labs = tuple(labels) if labels is not None else tuple(range(d.shape[0]))
    n = d.shape[0]
    if n < 2:
        return FourPointResult(True, None, 0, True, 0.0)

    if n <= exhaustive_limit:
        return _four_point_exhaustive(d, labs, tolerance)
    return _four_point_sampled(d, labs, tolerance, sample_size, seed)


def _four_point_exhaustive(d: np.ndarray, labs, tol: float) -> FourPointResult:
    n = d.shape[0]
    checked = 0
    worst = 0.0
    for i in range(n):
        di = d[i]
        for j in range(i, n):  # (i,j) swap is a symmetry of the condition
            dj = d[j]
            lhs = d[i, j] + d
            rhs = np.maximum(di[:, None] + dj[None, :], dj[:, None] + di[None, :])
            excess = lhs - rhs
            checked += n * n
            m = float(excess.max())
            if m > worst:
                worst = m
            if m > tol:
                k, l = np.unravel_index(int(np.argmax(excess)), excess.shape)
                witness = (labs[i], labs[j], labs[int(k)], labs[int(l)])
                return FourPointResult(False, witness, checked, False, worst)
    return FourPointResult(True, None, checked, True, worst)


def _four_point_sampled(d, labs, tol, sample_size, seed) -> FourPointResult:
    rng = np.random.default_rng(seed)
    n = d.shape[0]
    flat = d.ravel()
    checked = 0
    worst = 0.0
    chunk = 250_000
    while checked < sample_size:
        m = min(chunk, sample_size - checked)
        q = rng.integers(0, n, size=(4, m))
        i, j, k, l = q
        lhs = flat[i * n + j] + flat[k * n + l]
        rhs = np.maximum(flat[i * n + k] + flat[j * n + l], flat[i * n + l] + flat[j * n + k])
        excess = lhs - rhs
        checked += m
        mx = float(excess.max())
        if mx > worst:
            worst = mx
        if mx > tol:
            at = int(np.argmax(excess))
            witness = (labs[i[at]], labs[j[at]], labs[k[at]], labs[l[at]])
            return FourPointResult(False, witness, checked, False, worst)
    return FourPointResult(True, None, checked, False, worst)


# -- random generation -------------------------------------------------------


def random_tree(
    n: int,
    max_degree: int = 3,
    length_range: tuple[float, float] = (0.5, 2.0),
    latent_fraction: float = 0.25,
    seed: int | None = None,
) -> SemiLabeledTree:
    """Draw a random semi-labeled tree with exactly ``n`` regular nodes.

    Grows a tree by attaching each new node to a uniformly random node
    with residual degree capacity, designates latent nodes (preferring
    nodes of degree >= 3), then repairs any designated node that cannot
    legally stay latent by deleting it (degree 1) or contracting it
    (degree 2). Edge lengths are drawn i.i.d. uniform from
    ``length_range`` after the structure is final, so contraction never
    produces out-of-range lengths.
    """

    if n < 2:
        raise ValueError(f"need at least 2 regular nodes, got n={n}")
    if max_degree < 3:
        raise ValueError(f"max_degree must be at least 3, got {max_degree}")
    lo, hi = float(length_range[0]), float(length_range[1])
    if not (0.0 < lo <= hi) or not np.isfinite(hi):
        raise ValueError(f"invalid length range {length_range!r}")
    if not 0.0 <= latent_fraction <= 1.0:
        raise ValueError(f"latent_fraction must lie in [0, 1], got {latent_fraction}")

    rng = np.random.default_rng(seed)
    m_target = int(round(latent_fraction * (n - 2)))  # n - 2 is the latent maximum
    total = n + m_target

    adj: list[set[int]] = [set() for _ in range(total)]
    avail = [0]
    for i in range(1, total):
        at = int(rng.integers(len(avail)))
        j = avail[at]
        adj[i].add(j)
        adj[j].add(i)
        if len(adj[j]) == max_degree:
            avail[at] = avail[-1]
            avail.pop()
        avail.append(i)

    # Designate latents: degree >= 3 nodes need no repair, the rest will be
    # repaired below. Padding keeps the regular count at exactly n.
    eligible = [v for v in range(total) if len(adj[v]) >= 3]
    rest = [v for v in range(total) if len(adj[v]) < 3]
    latent: set[int] = set()
    if m_target:
        take = min(m_target, len(eligible))
        if take:
            picked = rng.choice(len(eligible), size=take, replace=False)
            latent.update(eligible[int(i)] for i in picked)
        if take < m_target:
            pad = rng.choice(len(rest), size=m_target - take, replace=False)
            latent.update(rest[int(i)] for i in pad)

    alive = set(range(total))
    changed = True
    while changed:
        changed = False
        for v in sorted(latent & alive):
            deg = len(adj[v])
            if deg >= 3:
                continue
            if deg <= 1:
                for u in list(adj[v]):
                    adj[u].discard(v)
                adj[v].clear()
                alive.discard(v)
            else:
                a, b = sorted(adj[v])
                adj[a].discard(v)
                adj[b].discard(v)
                adj[v].clear()
                adj[a].add(b)
                adj[b].add(a)
                alive.discard(v)
            changed = True

    ids: dict[int, NodeId] = {}
    next_label = 1
    next_latent = 1
    for v in sorted(alive):
        if v in latent:
            ids[v] = NodeId.latent(next_latent)
            next_latent += 1
        else:
            ids[v] = NodeId.regular(next_label)
            next_label += 1

    pairs = sorted((min(u, v), max(u, v)) for u in alive for v in adj[u] if u < v)
    lengths = _dyadic_uniform(rng, lo, hi, len(pairs))
    edges = [(ids[u], ids[v], float(w)) for (u, v), w in zip(pairs, lengths)]
    return SemiLabeledTree(edges, nodes=[ids[v] for v in sorted(alive)])


def _dyadic_uniform(rng, lo: float, hi: float, size: int) -> np.ndarray:
    """Uniform lengths from the grid of multiples of a power of two in [lo, hi].

    Exact dyadic lengths keep every path sum (and every half-sum the
    recovery derives) exactly representable in doubles, so tree metrics
    satisfy the four-point condition with zero tolerance and recovered
    edge lengths are bit-equal to the truth.
    """
    grid = 1024.0
    while math.ceil(lo * grid) > math.floor(hi * grid):
        if grid >= float(1 << 40):
            # Degenerate range without a grid point: snap to the nearest.
            return np.full(size, round(lo * grid) / grid)
        grid *= 2.0
    klo = math.ceil(lo * grid)
    khi = math.floor(hi * grid)
    return rng.integers(klo, khi + 1, size=size) / grid


# -- isomorphism -------------------------------------------------------------


def trees_isomorphic(
    a: SemiLabeledTree,
    b: SemiLabeledTree,
    length_tolerance: float = 1e-9,
) -> bool:
    """True iff a label-preserving bijection matches both trees.

    The bijection must map regular nodes to equal labels, latent nodes to
    latent nodes, and paired edges to lengths within ``length_tolerance``
    (pass ``math.inf`` for a topology-only comparison).

    Both trees are rooted at the smallest regular label. Because every
    subtree contains a regular node, sibling subtrees carry distinct
    minimum labels, so children pair up uniquely by that key and the walk
    runs in linear time with no backtracking.
    """

    if a.regular_labels != b.regular_labels:
        return False
    if len(a) != len(b):
        return False
    root = NodeId.regular(a.regular_labels[0])

    def min_labels(tree: SemiLabeledTree) -> dict[NodeId, int]:
        order: list[tuple[NodeId, NodeId | None]] = [(root, None)]
        for node, parent in order:
            for child in tree.neighbors(node):
                if child != parent:
                    order.append((child, node))
        big = max(tree.regular_labels) + 1
        out = {node: (big if node.is_latent else node.index) for node, _ in order}
        for node, parent in reversed(order):  # children are settled before parents
            if parent is not None and out[node] < out[parent]:
                out[parent] = out[node]
        return out

    mla, mlb = min_labels(a), min_labels(b)
    stack: list[tuple[NodeId, NodeId, NodeId | None, NodeId | None]] = [(root, root, None, None)]
    while stack:
        xa, xb, pa, pb = stack.pop()
        if xa.is_latent != xb.is_latent:
            return False
        if not xa.is_latent and xa.index != xb.index:
            return False
        kids_a = sorted(
            ((mla[c], c, w) for c, w in a.neighbors(xa).items() if c != pa)
        )
        kids_b = sorted(
            ((mlb[c], c, w) for c, w in b.neighbors(xb).items() if c != pb)
        )
        if len(kids_a) != len(kids_b):
            return False
        for (ka, ca, wa), (kb, cb, wb) in zip(kids_a, kids_b):
            if ka != kb:
                return False
            if abs(wa - wb) > length_tolerance:
                return False
            stack.append((ca, cb, xa, xb))
    return True
