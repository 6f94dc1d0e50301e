"""Recovery driver, its split operations, and cross-engine agreement."""

import math

import numpy as np
import pytest

from latree import (
    Bag,
    DistanceMatrix,
    ExactOracle,
    InvalidDelta,
    MatrixOracle,
    NodeId,
    NoiseTooLarge,
    NotATreeMetric,
    SemiLabeledTree,
    Skeleton,
    assemble,
    basic,
    bigsplit,
    explode,
    random_tree,
    recover,
    serialize,
    small_bag_reconstruct,
    trees_isomorphic,
)
from latree.errors import InvalidTreeError
from latree.recovery import ProbeStream, _sample_without_replacement

from conftest import branch_offset, point_to_node, walk_distances

R = NodeId.regular
L = NodeId.latent


def edge_lengths(tree: SemiLabeledTree) -> list[float]:
    return sorted(w for _, _, w in tree.edges())


# -- true-position audit -----------------------------------------------------------


def audit_latents(true_tree: SemiLabeledTree, records) -> list[tuple[int, float]]:
    """(gen, |stored - true|) for every stored latent distance.

    Each record's latent sits, in the true tree, at the branch point of
    its first member off the path between its two parents; parents that
    are themselves latents are resolved through the same map, so the
    audit follows the whole derivation chain.
    """
    block = true_tree.regular_block()
    pos = {lab: i for i, lab in enumerate(true_tree.regular_labels)}
    reg_rows: dict = {}
    lat_rows: dict = {}
    lat_lat: dict = {}

    def row(node: NodeId) -> np.ndarray:
        if node.is_latent:
            return lat_rows[node]
        if node not in reg_rows:
            reg_rows[node] = block[pos[node.index]]
        return reg_rows[node]

    def dist(p: NodeId, q: NodeId) -> float:
        if p == q:
            return 0.0
        if p.is_latent and q.is_latent:
            return lat_lat[frozenset((p, q))]
        if q.is_latent:
            p, q = q, p
        if p.is_latent:
            return float(lat_rows[p][pos[q.index]])
        return float(block[pos[p.index], pos[q.index]])

    out = []
    for rec in records:
        w = NodeId.latent(rec.uid)
        a, b, v0 = rec.rho, rec.alpha, rec.first_member
        d_ab = dist(a, b)
        t = branch_offset(d_ab, dist(a, v0), dist(b, v0))
        ra, rb = row(a), row(b)
        m = 0.5 * (ra + d_ab - rb)
        hang = 0.5 * (ra + rb - d_ab)
        lat_rows[w] = hang + np.abs(t - m)
        for other in [x for x in lat_rows if x != w]:
            lat_lat[frozenset((w, other))] = point_to_node(
                t, d_ab, dist(a, other), dist(b, other))
        for v, stored in rec.stored:
            out.append((rec.gen, abs(stored - point_to_node(
                t, d_ab, dist(a, v), dist(b, v)))))
    return out


# -- end-to-end recovery -----------------------------------------------------------


def test_recover_quartet(quartet_tree):
    got, stats = recover(ExactOracle(quartet_tree), delta=3, seed=0)
    assert trees_isomorphic(quartet_tree, got, length_tolerance=0.0)
    assert edge_lengths(got) == [1.0, 2.0, 2.5, 3.5, 5.0]
    assert stats.query_count <= 6


def test_recover_quartet_from_matrix(quartet_matrix, quartet_tree):
    got, _ = recover(MatrixOracle(quartet_matrix), delta=3, seed=0)
    assert trees_isomorphic(quartet_tree, got, length_tolerance=0.0)


def test_recover_two_nodes():
    t = SemiLabeledTree([(R(1), R(2), 1.25)])
    got, _ = recover(ExactOracle(t), delta=3)
    assert trees_isomorphic(t, got)


def test_recover_path_tree():
    edges = [(R(i), R(i + 1), 0.5 * i) for i in range(1, 7)]
    t = SemiLabeledTree(edges)
    got, _ = recover(ExactOracle(t), delta=3, seed=1)
    assert trees_isomorphic(t, got, length_tolerance=0.0)


def test_recover_star_tree():
    center = L(0)
    edges = [(R(i), center, float(i)) for i in range(1, 6)]
    t = SemiLabeledTree(edges)
    got, _ = recover(ExactOracle(t), delta=5, seed=2)
    assert trees_isomorphic(t, got, length_tolerance=0.0)


@pytest.mark.parametrize("n,delta", [(10, 3), (25, 3), (40, 5), (60, 10)])
def test_recover_random_trees_exactly(n, delta):
    for seed in range(6):
        t = random_tree(n, max_degree=delta, seed=seed)
        got, _ = recover(ExactOracle(t), delta=delta, seed=seed)
        assert trees_isomorphic(t, got, length_tolerance=1e-9)


def test_recover_is_seed_deterministic():
    t = random_tree(40, max_degree=3, seed=5)
    a, sa = recover(ExactOracle(t), delta=3, seed=11)
    b, sb = recover(ExactOracle(t), delta=3, seed=11)
    assert serialize(a) == serialize(b)
    assert sa.query_count == sb.query_count
    assert sa.bigsplit_retries == sb.bigsplit_retries


def test_recover_different_seeds_same_tree():
    t = random_tree(40, max_degree=3, seed=5)
    a, _ = recover(ExactOracle(t), delta=3, seed=1)
    b, _ = recover(ExactOracle(t), delta=3, seed=2)
    assert trees_isomorphic(a, b, length_tolerance=0.0)


def test_engines_produce_identical_output():
    for seed in range(8):
        t = random_tree(45, max_degree=4, seed=100 + seed)
        fast, sf = recover(ExactOracle(t), delta=4, seed=seed, engine="fast")
        ref, sr = recover(ExactOracle(t), delta=4, seed=seed, engine="reference")
        assert serialize(fast) == serialize(ref)
        assert sf.query_count == sr.query_count
        assert sf.rounds == sr.rounds
        assert sf.bigsplit_retries == sr.bigsplit_retries
        assert sf.split_iterations == sr.split_iterations
        assert sf.split_oversize == sr.split_oversize


def test_recover_rejects_bad_arguments(quartet_tree):
    o = ExactOracle(quartet_tree)
    with pytest.raises(InvalidDelta):
        recover(o, delta=1)
    with pytest.raises(ValueError):
        recover(o, engine="warp")
    with pytest.raises(ValueError):
        recover(o, regular_labels=[])
    with pytest.raises(ValueError):
        recover(o, regular_labels=[1, 1, 2])


def test_recover_delta_too_small_for_wide_star():
    # A 30-leaf star cannot be taken apart with delta = 3: once the
    # center latent is found, its subtree count exceeds the cap no
    # matter which probes were drawn.
    center = L(0)
    t = SemiLabeledTree([(R(i), center, 1.0) for i in range(1, 31)])
    with pytest.raises(InvalidDelta):
        recover(ExactOracle(t), delta=3, seed=0)


def test_bigsplit_detects_excess_branching():
    center = L(0)
    t = SemiLabeledTree([(R(i), center, 1.0) for i in range(1, 7)])
    oracle = ExactOracle(t)
    members = frozenset(R(i) for i in range(1, 7))
    bag = Bag(members, R(1))
    with pytest.raises(InvalidDelta):
        bigsplit(bag, [R(2)], oracle, 3, rng=ProbeStream(0))


def test_recover_rejects_non_tree_metric():
    values = np.array([
        [0.0, 1.0, 1.4, 1.0],
        [1.0, 0.0, 1.0, 1.4],
        [1.4, 1.0, 0.0, 1.0],
        [1.0, 1.4, 1.0, 0.0],
    ])
    oracle = MatrixOracle(DistanceMatrix((1, 2, 3, 4), values))
    # The violation may surface as an impossible branch-point geometry
    # (NoiseTooLarge) or as a failed skeleton validation (NotATreeMetric),
    # depending on which pair the walk inspects first.
    with pytest.raises((NotATreeMetric, NoiseTooLarge)):
        recover(oracle, delta=3, seed=0)
    with pytest.raises(NotATreeMetric):
        recover(oracle, delta=4, seed=0)


def test_recover_single_label(quartet_tree):
    got, _ = recover(ExactOracle(quartet_tree), regular_labels=[2], delta=3)
    assert got.regular_labels == (2,)
    assert len(got) == 1


def test_recover_subset_of_labels(quartet_tree):
    # Restricted to {1, 2, 3} the quartet's second junction disappears.
    got, _ = recover(ExactOracle(quartet_tree), regular_labels=[1, 2, 3],
                     delta=3, seed=0)
    assert got.num_regular == 3
    assert got.num_latent == 1
    dist = walk_distances(got)
    assert dist[frozenset((R(1), R(3)))] == 9.5
    assert dist[frozenset((R(1), R(2)))] == 5.5


def test_recorded_latents_are_exact_on_exact_oracles():
    for seed in range(5):
        t = random_tree(35, max_degree=3, seed=50 + seed)
        _, stats = recover(ExactOracle(t), delta=3, seed=seed,
                           record_latents=True)
        audits = audit_latents(t, stats.latents)
        assert audits, "expected at least one recorded latent"
        worst = max(err for _, err in audits)
        assert worst == 0.0


# -- split operations --------------------------------------------------------------


def spine_tree() -> SemiLabeledTree:
    """1 - a - b - 2 spine with 3, 4, 5 hanging off a, b, and b."""
    a, b = L(0), L(1)
    return SemiLabeledTree([
        (R(1), a, 1.0),
        (a, R(3), 0.5),
        (a, b, 2.0),
        (b, R(4), 0.25),
        (b, R(5), 0.75),
        (b, R(2), 1.5),
    ])


def test_basic_splits_along_path():
    t = spine_tree()
    oracle = ExactOracle(t)
    members = frozenset(R(i) for i in (1, 2, 3, 4, 5))
    bags, skel = basic(Bag(members, R(1)), R(2), oracle)
    # Singletons for alpha (first) and the representative (last) frame
    # the two branch-point bags: one for member 3, one for 4 and 5.
    assert len(bags) == 4
    assert bags[0].members == frozenset([R(2)])
    assert bags[-1].members == frozenset([R(1)])
    mids = bags[1:-1]
    assert sorted(len(b.members) for b in mids) == [2, 3]
    for b in mids:
        assert b.representative.is_latent
        assert b.gen == 1
    # The fragment is the path between the stops: lengths 1.5, 2, 1.
    lengths = sorted(w for _, _, w in skel.edges())
    assert lengths == [1.0, 1.5, 2.0]
    # Path goes alpha, latent of {4, 5}, latent of {3}, representative.
    w45 = mids[0].representative if len(mids[0]) == 3 else mids[1].representative
    w3 = mids[0].representative if len(mids[0]) == 2 else mids[1].representative
    got = {frozenset((u, v)): w for u, v, w in skel.edges()}
    assert got[frozenset((R(2), w45))] == 1.5
    assert got[frozenset((w45, w3))] == 2.0
    assert got[frozenset((w3, R(1)))] == 1.0


def test_basic_latent_distances_are_true():
    t = spine_tree()
    oracle = ExactOracle(t)
    members = frozenset(R(i) for i in (1, 2, 3, 4, 5))
    records = []
    basic(Bag(members, R(1)), R(2), oracle, on_latent=records.append)
    assert len(records) == 2
    dist = walk_distances(t)
    # Both latents correspond to true nodes a and b; stored member
    # distances must equal the true ones exactly.
    for rec in records:
        for v, stored in rec.stored:
            true_a = dist[frozenset((L(0), v))]
            true_b = dist[frozenset((L(1), v))]
            assert stored in (true_a, true_b)


def test_explode_partitions_by_subtree():
    t = spine_tree()
    oracle = ExactOracle(t)
    members = frozenset([R(1), R(3), L(0), R(4), R(5), R(2)])
    dist = walk_distances(t)
    for x in (R(1), R(3), R(4), R(5), R(2)):
        oracle.store(L(0), x, dist[frozenset((L(0), x))])
    out = explode(Bag(members, L(0)), oracle)
    parts = sorted(sorted(map(repr, b.members - {L(0)})) for b in out)
    assert parts == [["R1"], ["R2", "R4", "R5"], ["R3"]]
    for b in out:
        assert b.representative == L(0)
        assert b.gen == 0


def test_explode_keeps_singleton_bag():
    t = SemiLabeledTree([(R(1), R(2), 1.0)])
    oracle = ExactOracle(t)
    out = explode(Bag(frozenset([R(1), R(2)]), R(1)), oracle)
    assert len(out) == 1
    assert out[0].members == frozenset([R(1), R(2)])


def test_bigsplit_reaches_target_size():
    t = random_tree(60, max_degree=3, seed=31)
    oracle = ExactOracle(t)
    members = frozenset(R(lab) for lab in t.regular_labels)
    bag = Bag(members, R(t.regular_labels[0]))
    stream = ProbeStream(7)
    pool = sorted(bag.members - {bag.representative})
    probes = _sample_without_replacement(pool, 3, stream)
    frag, out, iters = bigsplit(bag, probes, oracle, 3, rng=stream)
    target = len(bag) / math.sqrt(3)
    assert iters >= 1
    assert max(len(b) for b in out) <= target
    # Every regular node ends up either in an output bag or already
    # placed on a skeleton edge.
    placed = {m for b in out for m in b.members if not m.is_latent}
    placed |= {x for u, v, _ in frag.edges() for x in (u, v) if not x.is_latent}
    assert placed == members


def test_small_bag_reconstruct_quartet(quartet_tree):
    oracle = ExactOracle(quartet_tree)
    members = frozenset(R(i) for i in (1, 2, 3, 4))
    skel = small_bag_reconstruct(Bag(members, R(1)), oracle)
    got = assemble(skel)
    assert trees_isomorphic(quartet_tree, got, length_tolerance=0.0)
    assert oracle.query_count == 6


def test_small_bag_rejects_non_metric():
    values = np.array([
        [0.0, 1.0, 1.4, 1.0],
        [1.0, 0.0, 1.0, 1.4],
        [1.4, 1.0, 0.0, 1.0],
        [1.0, 1.4, 1.0, 0.0],
    ])
    oracle = MatrixOracle(DistanceMatrix((1, 2, 3, 4), values))
    members = frozenset(R(i) for i in (1, 2, 3, 4))
    with pytest.raises(NotATreeMetric):
        small_bag_reconstruct(Bag(members, R(1)), oracle)


# -- skeleton and assembly ---------------------------------------------------------


def test_skeleton_rejects_cycles():
    s = Skeleton()
    s.add_edge(R(1), R(2), 1.0)
    s.add_edge(R(2), R(3), 1.0)
    with pytest.raises(InvalidTreeError):
        s.add_edge(R(3), R(1), 1.0)


def test_assemble_contracts_degree_two_latents():
    s = Skeleton()
    s.add_edge(R(1), L(5), 1.0)
    s.add_edge(L(5), R(2), 0.5)
    tree = assemble(s)
    assert tree.num_latent == 0
    assert tree.path_distance(R(1), R(2)) == 1.5


def test_assemble_keeps_degree_three_latents():
    s = Skeleton()
    for i in (1, 2, 3):
        s.add_edge(R(i), L(0), float(i))
    tree = assemble(s)
    assert tree.num_latent == 1


def test_bag_validation():
    with pytest.raises(ValueError):
        Bag(frozenset([R(1)]), R(2))  # representative not a member
