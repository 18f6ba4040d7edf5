import numpy as np
import pytest

from relprop.graph import build_skeleton
from relprop.linking import Entity, Kind, LinkedPattern, Provenance, Scheme


def make_entity(i, kind=Kind.GENE, name=None, observable=True, entrez=None):
    name = name or f"E{i}"
    aliases = {(Scheme.NAME, name)}
    if entrez is not None:
        aliases.add((Scheme.ENTREZ, str(entrez)))
    return Entity(id=i, kind=kind, canonical_name=name,
                  aliases=frozenset(aliases), observable=observable)


def make_pattern(a, b, label="binds", provenance=Provenance.CATEGORICAL, weight=1):
    return LinkedPattern(src=a, dst=b, relation_label=label,
                         provenance=provenance, weight=weight)


def random_skeleton(seed, n_nodes=None, n_edges=None, observable_prob=0.5):
    """Seeded random skeleton with mixed kinds; useful for property tests."""
    rng = np.random.default_rng(seed)
    n = int(n_nodes if n_nodes is not None else rng.integers(4, 20))
    kinds = [Kind.GENE, Kind.CHEMICAL, Kind.DISEASE]
    entities = [
        make_entity(
            i,
            kind=kinds[int(rng.integers(0, 3))],
            observable=bool(rng.random() < observable_prob),
        )
        for i in range(n)
    ]
    m = int(n_edges if n_edges is not None else rng.integers(n, 3 * n))
    patterns = []
    for _ in range(m):
        a, b = (int(x) for x in rng.integers(0, n, 2))
        if a != b:
            patterns.append(make_pattern(a, b))
    skeleton, _ = build_skeleton(entities, patterns)
    return skeleton


@pytest.fixture(scope="session")
def reference_scale_files(tmp_path_factory):
    """Large crafted input files matching the reference corpus scale."""
    from scale_fixture import write_reference_scale_fixture

    root = tmp_path_factory.mktemp("scale")
    return write_reference_scale_fixture(root)
