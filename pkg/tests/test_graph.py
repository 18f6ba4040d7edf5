from collections import deque

import numpy as np
import pytest

from conftest import make_entity, make_pattern, random_skeleton
from relprop.errors import NoObservables
from relprop.graph import (
    NetworkSkeleton,
    build_skeleton,
    export_dot,
    khop_subgraph,
    prune,
    relation_histogram,
)
from relprop.linking import Kind


def path_skeleton(observable_flags):
    entities = [make_entity(i, observable=obs) for i, obs in enumerate(observable_flags)]
    patterns = [make_pattern(i, i + 1) for i in range(len(entities) - 1)]
    skeleton, _ = build_skeleton(entities, patterns)
    return skeleton


def test_parallel_labels_merge_into_one_edge():
    entities = [make_entity(0), make_entity(1)]
    patterns = [make_pattern(0, 1, "inhibitor"), make_pattern(0, 1, "agonist")]
    skeleton, dropped = build_skeleton(entities, patterns)
    assert skeleton.n_edges == 1
    assert {l.label for l in skeleton.edges[0].labels} == {"inhibitor", "agonist"}
    assert dropped == 0


def test_self_pairs_dropped_with_counter():
    entities = [make_entity(0)]
    skeleton, dropped = build_skeleton(entities, [make_pattern(0, 0)])
    assert skeleton.n_edges == 0
    assert dropped == 1


def test_duplicate_label_weights_sum():
    entities = [make_entity(0), make_entity(1)]
    patterns = [make_pattern(0, 1, "x", weight=2), make_pattern(1, 0, "x", weight=3)]
    skeleton, _ = build_skeleton(entities, patterns)
    assert skeleton.edges[0].labels[0].weight == 5


def test_histogram_descending_and_fractions_sum_to_one():
    entities = [make_entity(i) for i in range(6)]
    patterns = (
        [make_pattern(0, i + 1, "common") for i in range(4)]
        + [make_pattern(1, 2, "rare"), make_pattern(3, 4, "mid"), make_pattern(4, 5, "mid")]
    )
    skeleton, _ = build_skeleton(entities, patterns)
    hist = relation_histogram(skeleton)
    counts = [c for _, c, _ in hist]
    assert counts == sorted(counts, reverse=True)
    assert abs(sum(f for _, _, f in hist) - 1.0) <= 1e-12
    assert hist[0][0] == "common"


def test_histogram_empty_skeleton():
    skeleton, _ = build_skeleton([make_entity(0)], [])
    assert relation_histogram(skeleton) == []


def test_khop_path_examples():
    # O - a - b - c with only O observable
    skeleton = path_skeleton([True, False, False, False])
    sub1, mapping = khop_subgraph(skeleton, 1)
    assert {e.canonical_name for e in sub1.entities} == {"E0", "E1"}
    assert sub1.n_edges == 1
    assert mapping == {0: 0, 1: 1}
    sub2, _ = khop_subgraph(skeleton, 2)
    assert {e.canonical_name for e in sub2.entities} == {"E0", "E1", "E2"}


def test_khop_requires_observables():
    skeleton = path_skeleton([False, False, False])
    with pytest.raises(NoObservables):
        khop_subgraph(skeleton, 1)


def bfs_oracle(skeleton, k):
    seeds = [e.id for e in skeleton.entities if e.observable]
    dist = {s: 0 for s in seeds}
    frontier = deque(seeds)
    while frontier:
        node = frontier.popleft()
        if dist[node] >= k:
            continue
        for nbr, _ in skeleton.adjacency[node]:
            if nbr not in dist:
                dist[nbr] = dist[node] + 1
                frontier.append(nbr)
    return set(dist)


@pytest.mark.parametrize("seed", range(8))
def test_khop_matches_bfs_oracle(seed):
    skeleton = random_skeleton(seed, n_nodes=200, n_edges=600, observable_prob=0.1)
    if not any(e.observable for e in skeleton.entities):
        pytest.skip("no observables drawn")
    for k in (1, 2, 3):
        sub, mapping = khop_subgraph(skeleton, k)
        assert set(mapping) == bfs_oracle(skeleton, k)


@pytest.mark.parametrize("seed", range(6))
def test_khop_monotone_in_k(seed):
    skeleton = random_skeleton(seed, observable_prob=0.3)
    if not any(e.observable for e in skeleton.entities):
        pytest.skip("no observables drawn")
    previous: set = set()
    for k in (1, 2, 3, 4):
        _, mapping = khop_subgraph(skeleton, k)
        nodes = set(mapping)
        assert previous <= nodes
        previous = nodes


def test_prune_star_becomes_empty():
    entities = [make_entity(0, observable=True)] + [
        make_entity(i, observable=False) for i in (1, 2, 3)
    ]
    skeleton, _ = build_skeleton(entities, [make_pattern(0, i) for i in (1, 2, 3)])
    assert prune(skeleton).n_entities == 0


def test_prune_keeps_mediating_chain():
    skeleton = path_skeleton([True, False, True])
    pruned = prune(skeleton)
    assert pruned.n_entities == 3
    assert pruned.n_edges == 2


def prune_oracle(skeleton):
    """Apply both rules to fixpoint with a plain recomputation loop."""
    alive = {e.id for e in skeleton.entities}

    def degree(node):
        return sum(1 for nbr, _ in skeleton.adjacency[node] if nbr in alive)

    changed = True
    while changed:
        changed = False
        for node in sorted(alive):
            if not skeleton.entities[node].observable and degree(node) <= 1:
                alive.discard(node)
                changed = True
    kept = set()
    seen = set()
    for start in sorted(alive):
        if start in seen:
            continue
        component = []
        stack = [start]
        seen.add(start)
        while stack:
            node = stack.pop()
            component.append(node)
            for nbr, _ in skeleton.adjacency[node]:
                if nbr in alive and nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if sum(skeleton.entities[i].observable for i in component) >= 2:
            kept |= set(component)
    return kept


@pytest.mark.parametrize("seed", range(10))
def test_prune_matches_fixpoint_oracle(seed):
    skeleton = random_skeleton(seed, observable_prob=0.35)
    pruned = prune(skeleton)
    assert {e.uid for e in pruned.entities} == prune_oracle(skeleton)


@pytest.mark.parametrize("seed", range(10))
def test_prune_idempotent_and_degree_postcondition(seed):
    skeleton = random_skeleton(seed, observable_prob=0.35)
    once = prune(skeleton)
    twice = prune(once)
    assert {e.uid for e in twice.entities} == {e.uid for e in once.entities}
    assert twice.n_edges == once.n_edges
    for e in once.entities:
        if not e.observable:
            assert once.degree(e.id) >= 2


def test_build_skeleton_permutation_invariant_stats():
    rng = np.random.default_rng(0)
    entities = [make_entity(i) for i in range(12)]
    patterns = [
        make_pattern(int(a), int(b), f"lab{int(l)}")
        for a, b, l in zip(rng.integers(0, 12, 40), rng.integers(0, 12, 40), rng.integers(0, 4, 40))
        if a != b
    ]
    base, _ = build_skeleton(entities, patterns)
    shuffled = list(patterns)
    rng.shuffle(shuffled)
    other, _ = build_skeleton(entities, shuffled)
    assert base.n_edges == other.n_edges
    assert relation_histogram(base) == relation_histogram(other)
    assert {(e.i, e.j) for e in base.edges} == {(e.i, e.j) for e in other.edges}


def test_export_dot_conventions(tmp_path):
    gene = make_entity(0, kind=Kind.GENE, name="EGFR", observable=True, entrez=1956)
    drug = make_entity(1, kind=Kind.CHEMICAL, name="Gefitinib", observable=False)
    skeleton, _ = build_skeleton([gene, drug], [make_pattern(0, 1, "inhibitor")])
    path = tmp_path / "g.dot"
    export_dot(skeleton, path)
    text = path.read_text()
    assert text.startswith("graph ")
    assert 'n0 [label="1956"' in text
    assert 'n1 [label="Gefitinib"' in text
    assert text.count(" -- ") == 1
    assert "observable=true" in text.split("\n")[1]
    assert "observable=true" not in text.split("\n")[2]


def test_export_dot_empty(tmp_path):
    skeleton, _ = build_skeleton([], [])
    path = tmp_path / "empty.dot"
    export_dot(skeleton, path)
    text = path.read_text()
    assert text.startswith("graph ")
    assert text.rstrip().endswith("}")


def test_graph_save_load_round_trip(tmp_path):
    skeleton = random_skeleton(4, observable_prob=0.4)
    p1, p2 = tmp_path / "a.graph", tmp_path / "b.graph"
    skeleton.save(p1)
    loaded = NetworkSkeleton.load(p1)
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.n_entities == skeleton.n_entities
    assert [(e.i, e.j, e.labels) for e in loaded.edges] == [
        (e.i, e.j, e.labels) for e in skeleton.edges
    ]
    assert [e.aliases for e in loaded.entities] == [e.aliases for e in skeleton.entities]
