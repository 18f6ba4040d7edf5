"""Entity linking across relation files and cell-line measurement panels.

Mentions of genes, chemicals and diseases arrive from several files under
inconsistent naming. Two mentions of the same kind are merged into one entity
when they share a structured identifier (Entrez, MESH or CID) or a normalized
name; kinds are never merged. Linking is a single deterministic union-find
pass, so identical inputs always produce identical entities, ids and reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence


class Kind(str, enum.Enum):
    GENE = "Gene"
    CHEMICAL = "Chemical"
    DISEASE = "Disease"


class Scheme(str, enum.Enum):
    ENTREZ = "Entrez"
    MESH = "MESH"
    CID = "CID"
    NAME = "Name"


class Provenance(str, enum.Enum):
    CATEGORICAL = "Categorical"
    META_PATTERN = "MetaPattern"


#: Schemes that carry curated identifiers (everything except NAME).
STRUCTURED_SCHEMES: tuple[Scheme, ...] = (Scheme.ENTREZ, Scheme.MESH, Scheme.CID)

#: Identifier scheme implied by an entity kind in the input files.
ID_SCHEME_FOR_KIND: dict[Kind, Scheme] = {
    Kind.GENE: Scheme.ENTREZ,
    Kind.CHEMICAL: Scheme.CID,
    Kind.DISEASE: Scheme.MESH,
}

_STRIP_CHARS = str.maketrans("", "", "-_.")


def normalize_name(name: str) -> str:
    """Name form used for matching: case-folded, ``-_.`` removed, whitespace collapsed."""
    return " ".join(name.casefold().translate(_STRIP_CHARS).split())


@dataclass(frozen=True)
class RawPattern:
    """One relation row as parsed from a file: a labelled entity pair."""

    relation_label: str
    src_name: str
    src_id: Optional[str]
    dst_name: str
    dst_id: Optional[str]
    src_kind: Kind
    dst_kind: Kind
    provenance: Provenance
    weight: int = 1

    def __post_init__(self):
        if not self.relation_label:
            raise ValueError("relation_label must be nonempty")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")


@dataclass(frozen=True)
class LinkedPattern:
    """A RawPattern with both endpoints resolved to entity ids."""

    src: int
    dst: int
    relation_label: str
    provenance: Provenance
    weight: int = 1


@dataclass(frozen=True)
class Mention:
    """One occurrence of a named thing in some source, with optional ids."""

    kind: Kind
    name: str
    ids: Mapping[Scheme, str] = field(default_factory=dict)
    source: str = ""


@dataclass
class Entity:
    """A linked entity: the merge of all mentions that matched by id or name.

    ``id`` is the dense index in the current graph; ``uid`` is the stable
    handle assigned at link time and preserved through subgraph extraction,
    so panels keyed by uid stay joinable after nodes are dropped.
    """

    id: int
    kind: Kind
    canonical_name: str
    aliases: frozenset[tuple[Scheme, str]]
    observable: bool = False
    uid: int = -1

    def __post_init__(self):
        if not self.canonical_name:
            raise ValueError("canonical_name must be nonempty")
        if not self.aliases:
            raise ValueError("aliases must be nonempty")
        if self.uid < 0:
            self.uid = self.id

    def alias_values(self, scheme: Scheme) -> list[str]:
        return sorted(v for s, v in self.aliases if s is scheme)


@dataclass(frozen=True)
class ConflictRecord:
    """A quarantined mention: merging it would give one entity two distinct
    identifiers under the same structured scheme."""

    source: str
    kind: Kind
    name: str
    scheme: Scheme
    values: tuple[str, ...]

    def tsv_row(self) -> str:
        return "\t".join(
            [self.source, self.kind.value, self.name, self.scheme.value, "|".join(self.values)]
        )


@dataclass
class LinkReport:
    mentions: int = 0
    linked_mentions: int = 0
    entities: int = 0
    merges: int = 0
    name_conflicts: int = 0
    quarantined_patterns: int = 0
    observable_entities: int = 0
    conflicts: list[ConflictRecord] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            "entity linking report",
            f"mentions\t{self.mentions}",
            f"linked_mentions\t{self.linked_mentions}",
            f"entities\t{self.entities}",
            f"merges\t{self.merges}",
            f"name_conflicts\t{self.name_conflicts}",
            f"quarantined_mentions\t{len(self.conflicts)}",
            f"quarantined_patterns\t{self.quarantined_patterns}",
            f"observable_entities\t{self.observable_entities}",
        ]
        return "\n".join(lines) + "\n"

    def conflicts_tsv(self) -> str:
        header = "source\tkind\tname\tscheme\tvalues"
        return "\n".join([header] + [c.tsv_row() for c in self.conflicts]) + "\n"


@dataclass
class LinkResult:
    entities: list[Entity]
    patterns: list[LinkedPattern]
    report: LinkReport


class _Cluster:
    __slots__ = ("first", "kind", "names", "norm_names", "ids", "observable")

    def __init__(self, first: int, kind: Kind, name: str, norm: str,
                 ids: Mapping[Scheme, str], observable: bool):
        self.first = first
        self.kind = kind
        self.names = [name]
        self.norm_names = {norm}
        self.ids: dict[Scheme, set[str]] = {s: {v} for s, v in ids.items()}
        self.observable = observable

    def absorb(self, other: "_Cluster") -> None:
        for n in other.names:
            if n not in self.names:
                self.names.append(n)
        self.norm_names |= other.norm_names
        for s, vals in other.ids.items():
            self.ids.setdefault(s, set()).update(vals)
        self.observable = self.observable or other.observable


class _Linker:
    """Union-find over mentions, keyed by structured ids and normalized names."""

    def __init__(self):
        self.clusters: list[Optional[_Cluster]] = []
        self.parent: list[int] = []
        self.keys: dict[tuple[Kind, Scheme, str], int] = {}
        self.report = LinkReport()

    def _find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    @staticmethod
    def _mention_keys(m: Mention) -> list[tuple[Kind, Scheme, str]]:
        keys = [
            (m.kind, s, m.ids[s])
            for s in STRUCTURED_SCHEMES
            if m.ids.get(s)
        ]
        keys.append((m.kind, Scheme.NAME, normalize_name(m.name)))
        return keys

    def _candidates(self, keys) -> list[int]:
        roots: list[int] = []
        for key in keys:
            idx = self.keys.get(key)
            if idx is not None:
                root = self._find(idx)
                if root not in roots:
                    roots.append(root)
        return roots

    def _conflict(self, m: Mention, roots: Sequence[int]) -> Optional[ConflictRecord]:
        # A merge may not leave two distinct values under one structured scheme.
        for scheme in STRUCTURED_SCHEMES:
            values: set[str] = set()
            if m.ids.get(scheme):
                values.add(m.ids[scheme])
            for r in roots:
                values |= self.clusters[r].ids.get(scheme, set())
            if len(values) > 1:
                return ConflictRecord(
                    source=m.source,
                    kind=m.kind,
                    name=m.name,
                    scheme=scheme,
                    values=tuple(sorted(values)),
                )
        return None

    def add(self, m: Mention, observable: bool = False) -> Optional[int]:
        """Link one mention; returns its cluster index, or None if quarantined."""
        self.report.mentions += 1
        keys = self._mention_keys(m)
        roots = self._candidates(keys)
        conflict = self._conflict(m, roots)
        if conflict is not None:
            self.report.conflicts.append(conflict)
            return None

        norm = normalize_name(m.name)
        structured = {s: v for s, v in m.ids.items() if v and s in STRUCTURED_SCHEMES}
        if not roots:
            target = len(self.clusters)
            self.clusters.append(_Cluster(target, m.kind, m.name, norm, structured, observable))
            self.parent.append(target)
        else:
            # Id-driven attachments whose name evidence disagrees are the
            # per-name validation signal reported to the caller.
            seen: set[int] = set()
            for key in keys[:-1]:
                idx = self.keys.get(key)
                if idx is None:
                    continue
                root = self._find(idx)
                if root not in seen and norm not in self.clusters[root].norm_names:
                    self.report.name_conflicts += 1
                seen.add(root)
            target = min(roots, key=lambda r: self.clusters[r].first)
            for r in roots:
                if r != target:
                    self.clusters[target].absorb(self.clusters[r])
                    self.clusters[r] = None
                    self.parent[r] = target
            cl = self.clusters[target]
            if m.name not in cl.names:
                cl.names.append(m.name)
            cl.norm_names.add(norm)
            for s, v in structured.items():
                cl.ids.setdefault(s, set()).add(v)
            cl.observable = cl.observable or observable
        for key in keys:
            self.keys[key] = target
        self.report.linked_mentions += 1
        return target


def _pattern_mentions(p: RawPattern, row_tag: str) -> tuple[Mention, Mention]:
    src_ids = {ID_SCHEME_FOR_KIND[p.src_kind]: p.src_id} if p.src_id else {}
    dst_ids = {ID_SCHEME_FOR_KIND[p.dst_kind]: p.dst_id} if p.dst_id else {}
    return (
        Mention(kind=p.src_kind, name=p.src_name, ids=src_ids, source=row_tag),
        Mention(kind=p.dst_kind, name=p.dst_name, ids=dst_ids, source=row_tag),
    )


def link_entities(
    patterns: Sequence[RawPattern],
    expression_mentions: Iterable[Mention] = (),
    sensitivity_mentions: Iterable[Mention] = (),
) -> LinkResult:
    """Merge all mentions into entities and remap patterns onto entity ids.

    Mentions are processed in input order: pattern endpoints first, then the
    expression-panel gene aliases, then the sensitivity-panel drug aliases.
    Entities mentioned by either panel are flagged observable. A mention whose
    merge would put two distinct values of one structured scheme into a single
    entity is quarantined: it is recorded in the report and the pattern row
    that carried it is dropped (a row is dropped whenever either endpoint is
    quarantined). Linking then continues, so one bad row never aborts a build.
    """
    linker = _Linker()
    pending: list[tuple[int, int, RawPattern]] = []
    for row, p in enumerate(patterns):
        m_src, m_dst = _pattern_mentions(p, f"pattern:{row}")
        src_idx = linker.add(m_src)
        if src_idx is None:
            linker.report.quarantined_patterns += 1
            continue
        dst_idx = linker.add(m_dst)
        if dst_idx is None:
            linker.report.quarantined_patterns += 1
            continue
        pending.append((src_idx, dst_idx, p))

    for m in expression_mentions:
        linker.add(m, observable=True)
    for m in sensitivity_mentions:
        linker.add(m, observable=True)

    roots = sorted(
        (i for i, c in enumerate(linker.clusters) if c is not None),
        key=lambda i: linker.clusters[i].first,
    )
    entity_of_root: dict[int, int] = {}
    entities: list[Entity] = []
    for new_id, root in enumerate(roots):
        cl = linker.clusters[root]
        aliases = {(Scheme.NAME, n) for n in cl.names}
        for s, vals in cl.ids.items():
            aliases |= {(s, v) for v in vals}
        entities.append(
            Entity(
                id=new_id,
                kind=cl.kind,
                canonical_name=cl.names[0],
                aliases=frozenset(aliases),
                observable=cl.observable,
                uid=new_id,
            )
        )
        entity_of_root[root] = new_id

    linked = [
        LinkedPattern(
            src=entity_of_root[linker._find(s)],
            dst=entity_of_root[linker._find(d)],
            relation_label=p.relation_label,
            provenance=p.provenance,
            weight=p.weight,
        )
        for s, d, p in pending
    ]

    report = linker.report
    report.entities = len(entities)
    report.merges = report.linked_mentions - len(entities)
    report.observable_entities = sum(e.observable for e in entities)
    return LinkResult(entities=entities, patterns=linked, report=report)
