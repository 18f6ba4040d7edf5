"""The interaction network skeleton and its structural operations.

Nodes are linked entities; an undirected edge joins every entity pair that
appears in at least one relation row, carrying the merged set of relation
labels from all sources. The skeleton is immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .errors import MalformedRow, NoObservables
from .linking import Entity, Kind, LinkedPattern, Provenance, Scheme

GRAPH_MAGIC = "relprop-graph v1"


@dataclass(frozen=True)
class EdgeLabel:
    label: str
    provenance: Provenance
    weight: int


@dataclass(frozen=True)
class Edge:
    """Undirected edge; endpoints are entity ids with i < j."""

    i: int
    j: int
    labels: tuple[EdgeLabel, ...]

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("self-loops are not allowed")
        if not self.labels:
            raise ValueError("edge must carry at least one label")


class NetworkSkeleton:
    """Entities plus deduplicated undirected edges and an adjacency index."""

    def __init__(self, entities: Sequence[Entity], edges: Sequence[Edge]):
        self.entities: list[Entity] = list(entities)
        self.edges: list[Edge] = list(edges)
        n = len(self.entities)
        for idx, e in enumerate(self.entities):
            if e.id != idx:
                raise ValueError("entity ids must be dense 0..n-1 in list order")
        seen: set[tuple[int, int]] = set()
        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for eid, edge in enumerate(self.edges):
            if not (0 <= edge.i < n and 0 <= edge.j < n):
                raise ValueError("edge endpoint out of range")
            key = (edge.i, edge.j)
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            adjacency[edge.i].append((edge.j, eid))
            adjacency[edge.j].append((edge.i, eid))
        # Canonical neighbor order makes every downstream reduction deterministic.
        self.adjacency: list[list[tuple[int, int]]] = [sorted(a) for a in adjacency]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def observable_ids(self) -> list[int]:
        return [e.id for e in self.entities if e.observable]

    def kind_counts(self) -> dict[Kind, int]:
        counts = {k: 0 for k in Kind}
        for e in self.entities:
            counts[e.kind] += 1
        return counts

    def stats_line(self) -> str:
        counts = self.kind_counts()
        return (
            f"genes={counts[Kind.GENE]} drugs={counts[Kind.CHEMICAL]} "
            f"diseases={counts[Kind.DISEASE]} edges={self.n_edges} "
            f"observables={len(self.observable_ids())}"
        )

    def save(self, path) -> None:
        out = [f"{GRAPH_MAGIC} entities={self.n_entities} edges={self.n_edges}"]
        for e in self.entities:
            out.append(
                f"N\t{e.id}\t{e.uid}\t{e.kind.value}\t{int(e.observable)}\t{e.canonical_name}"
            )
        for e in self.entities:
            for scheme, value in sorted(e.aliases, key=lambda a: (a[0].value, a[1])):
                out.append(f"A\t{e.id}\t{scheme.value}\t{value}")
        for edge in self.edges:
            out.append(f"E\t{edge.i}\t{edge.j}")
        for eid, edge in enumerate(self.edges):
            for lab in edge.labels:
                out.append(f"L\t{eid}\t{lab.provenance.value}\t{lab.weight}\t{lab.label}")
        Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NetworkSkeleton":
        text = Path(path).read_text(encoding="utf-8")
        lines = [l for l in text.split("\n") if l and not l.startswith("#")]
        if not lines or not lines[0].startswith(GRAPH_MAGIC):
            raise MalformedRow(path, 1, f"expected {GRAPH_MAGIC!r} header")
        meta = dict(tok.split("=") for tok in lines[0].split()[2:])
        n, m = int(meta["entities"]), int(meta["edges"])
        names: dict[int, tuple[int, Kind, bool, str]] = {}
        aliases: dict[int, set[tuple[Scheme, str]]] = {}
        endpoints: list[tuple[int, int]] = []
        labels: dict[int, list[EdgeLabel]] = {}
        for no, line in enumerate(lines[1:], start=2):
            f = line.split("\t")
            tag = f[0]
            if tag == "N":
                names[int(f[1])] = (int(f[2]), Kind(f[3]), bool(int(f[4])), f[5])
            elif tag == "A":
                aliases.setdefault(int(f[1]), set()).add((Scheme(f[2]), f[3]))
            elif tag == "E":
                endpoints.append((int(f[1]), int(f[2])))
            elif tag == "L":
                labels.setdefault(int(f[1]), []).append(
                    EdgeLabel(label=f[4], provenance=Provenance(f[2]), weight=int(f[3]))
                )
            else:
                raise MalformedRow(path, no, f"unknown record tag {tag!r}")
        entities = []
        for i in range(n):
            uid, kind, observable, name = names[i]
            entities.append(
                Entity(
                    id=i,
                    kind=kind,
                    canonical_name=name,
                    aliases=frozenset(aliases.get(i, {(Scheme.NAME, name)})),
                    observable=observable,
                    uid=uid,
                )
            )
        edges = [
            Edge(i=a, j=b, labels=tuple(labels[eid]))
            for eid, (a, b) in enumerate(endpoints)
        ]
        if len(edges) != m:
            raise MalformedRow(path, 1, f"edge count mismatch: header says {m}, found {len(edges)}")
        return cls(entities, edges)


def build_skeleton(
    entities: Sequence[Entity], patterns: Sequence[LinkedPattern]
) -> tuple[NetworkSkeleton, int]:
    """Merge patterns into one edge per unordered entity pair.

    Patterns on the same pair with the same (label, provenance) merge by
    summing their weights, so the label histogram counts occurrences no matter
    how rows were split across files. Self-pairs are dropped and counted;
    the count is returned alongside the skeleton.
    """
    pair_order: list[tuple[int, int]] = []
    merged: dict[tuple[int, int], dict[tuple[str, Provenance], int]] = {}
    self_pairs = 0
    for p in patterns:
        if p.src == p.dst:
            self_pairs += 1
            continue
        key = (min(p.src, p.dst), max(p.src, p.dst))
        if key not in merged:
            pair_order.append(key)
            merged[key] = {}
        slot = merged[key]
        lk = (p.relation_label, p.provenance)
        slot[lk] = slot.get(lk, 0) + p.weight
    edges = [
        Edge(
            i=i,
            j=j,
            labels=tuple(
                EdgeLabel(label=lab, provenance=prov, weight=w)
                for (lab, prov), w in sorted(
                    merged[(i, j)].items(), key=lambda kv: (kv[0][0], kv[0][1].value)
                )
            ),
        )
        for i, j in pair_order
    ]
    return NetworkSkeleton(entities, edges), self_pairs


def relation_histogram(skeleton: NetworkSkeleton) -> list[tuple[str, int, float]]:
    """Label occurrence counts, descending, with fractions of the total."""
    counts: dict[str, int] = {}
    for edge in skeleton.edges:
        for lab in edge.labels:
            counts[lab.label] = counts.get(lab.label, 0) + lab.weight
    total = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(label, count, count / total) for label, count in ordered]


def histogram_tsv(histogram: Sequence[tuple[str, int, float]]) -> str:
    lines = ["label\tcount\tfraction"]
    lines += [f"{label}\t{count}\t{fraction:.6f}" for label, count, fraction in histogram]
    return "\n".join(lines) + "\n"


def _induced(
    skeleton: NetworkSkeleton, keep: Sequence[int]
) -> tuple[NetworkSkeleton, dict[int, int]]:
    """Subgraph induced on ``keep`` (sorted old ids), with re-densified ids."""
    id_map = {old: new for new, old in enumerate(keep)}
    entities = [
        replace(skeleton.entities[old], id=new) for old, new in id_map.items()
    ]
    edges = [
        Edge(i=id_map[e.i], j=id_map[e.j], labels=e.labels)
        for e in skeleton.edges
        if e.i in id_map and e.j in id_map
    ]
    return NetworkSkeleton(entities, edges), id_map


def khop_subgraph(
    skeleton: NetworkSkeleton, k: int
) -> tuple[NetworkSkeleton, dict[int, int]]:
    """Induced subgraph on nodes within distance k of any observable node.

    Returns the subgraph and the old-id to new-id mapping. Raises
    :class:`NoObservables` when the skeleton has no observable node.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seeds = skeleton.observable_ids()
    if not seeds:
        raise NoObservables("skeleton has no observable entity")
    dist = {s: 0 for s in seeds}
    queue = deque(seeds)
    while queue:
        node = queue.popleft()
        if dist[node] == k:
            continue
        for nbr, _ in skeleton.adjacency[node]:
            if nbr not in dist:
                dist[nbr] = dist[node] + 1
                queue.append(nbr)
    return _induced(skeleton, sorted(dist))


def prune(skeleton: NetworkSkeleton) -> NetworkSkeleton:
    """Drop nodes that cannot mediate propagation between observables.

    First unobserved nodes of degree <= 1 are peeled off to a fixpoint
    (observable nodes are never peeled), then every connected component with
    fewer than two observable nodes is removed.
    """
    n = skeleton.n_entities
    alive = [True] * n
    degree = [skeleton.degree(i) for i in range(n)]
    observable = [e.observable for e in skeleton.entities]
    queue = deque(i for i in range(n) if not observable[i] and degree[i] <= 1)
    while queue:
        node = queue.popleft()
        if not alive[node] or observable[node] or degree[node] > 1:
            continue
        alive[node] = False
        for nbr, _ in skeleton.adjacency[node]:
            if alive[nbr]:
                degree[nbr] -= 1
                if not observable[nbr] and degree[nbr] <= 1:
                    queue.append(nbr)

    keep: list[int] = []
    visited = [False] * n
    for start in range(n):
        if not alive[start] or visited[start]:
            continue
        component = []
        stack = [start]
        visited[start] = True
        while stack:
            node = stack.pop()
            component.append(node)
            for nbr, _ in skeleton.adjacency[node]:
                if alive[nbr] and not visited[nbr]:
                    visited[nbr] = True
                    stack.append(nbr)
        if sum(observable[i] for i in component) >= 2:
            keep.extend(component)
    subgraph, _ = _induced(skeleton, sorted(keep))
    return subgraph


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _node_label(entity: Entity) -> str:
    if entity.kind is Kind.GENE:
        ids = entity.alias_values(Scheme.ENTREZ)
        if ids:
            return ids[0]
    return entity.canonical_name


def export_dot(skeleton: NetworkSkeleton, path) -> None:
    """Write an undirected DOT graph; genes are labelled by Entrez id,
    chemicals by name, observable nodes carry ``observable=true``."""
    out = ["graph skeleton {"]
    for e in skeleton.entities:
        attrs = [f'label="{_dot_escape(_node_label(e))}"', f'kind="{e.kind.value}"']
        if e.observable:
            attrs.append("observable=true")
        out.append(f"  n{e.id} [{', '.join(attrs)}];")
    for edge in skeleton.edges:
        label = "|".join(sorted({lab.label for lab in edge.labels}))
        out.append(f'  n{edge.i} -- n{edge.j} [label="{_dot_escape(label)}"];')
    out.append("}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
