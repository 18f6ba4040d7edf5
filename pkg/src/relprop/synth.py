"""Seeded synthetic skeletons and panels with a known generating model.

The generator plants relation matrices, a readout and per-cell-line node
states, then emits observations through the model's own forward functions, so
the resulting learning problem has a realizable optimum: at zero noise the
planted parameters score their own panel with exactly zero loss.

Construction: drug states vary along a fixed direction with one latent scalar
per (cell line, drug); gene states are solved from the propagation fixpoint,
which makes every gene's estimate equal its state. Gene observations are the
readout of gene states, drug observations the readout of propagated drug
states, both optionally corrupted with clipped Gaussian noise. Binary drug
labels split at the per-drug median.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .errors import DegenerateGraph
from .graph import NetworkSkeleton, build_skeleton
from .linking import Entity, Kind, LinkedPattern, Provenance, Scheme
from .panel import CellLinePanel
from .parsers import (
    ExpressionMatrix,
    SensitivityRecord,
    write_expression,
    write_interactions,
    write_metapatterns,
    write_sensitivity,
)
from .propagation import ModelParams, _propagate_batch, _readout_batch, compile_graph, init_params

_EDGE_LABELS = ("inhibitor", "agonist", "binder")
_RING_LABEL = "co-mentioned with"


@dataclass
class SynthConfig:
    n_genes: int = 21
    n_drugs: int = 7
    edge_prob: float = 0.02
    gene_edge_prob: float = 0.0
    k: int = 4
    n_cell_lines: int = 40
    noise_sigma: float = 0.02
    seed: int = 42

    def validate(self) -> None:
        if min(self.n_genes, self.n_drugs, self.n_cell_lines) < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 < self.edge_prob <= 1.0):
            raise ValueError("edge_prob must lie in (0, 1]")
        if not (0.0 <= self.gene_edge_prob <= 1.0):
            raise ValueError("gene_edge_prob must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass
class SynthTruth:
    """The generating model: structural params plus per-cell-line states."""

    params: ModelParams
    states: np.ndarray  # (C, n, k)

    def params_for_cell(self, c: int) -> ModelParams:
        out = self.params.copy()
        out.v = self.states[c].copy()
        return out


@dataclass
class SynthResult:
    config: SynthConfig
    skeleton: NetworkSkeleton
    panel: CellLinePanel
    truth: SynthTruth


def _gene_entity(i: int) -> Entity:
    name = f"SYNG{i:03d}"
    entrez = str(10000 + i)
    return Entity(
        id=i,
        kind=Kind.GENE,
        canonical_name=name,
        aliases=frozenset({(Scheme.NAME, name), (Scheme.ENTREZ, entrez)}),
        observable=True,
    )


def _drug_entity(i: int, j: int) -> Entity:
    name = f"SYND{j:02d}"
    cid = str(90000 + j)
    return Entity(
        id=i,
        kind=Kind.CHEMICAL,
        canonical_name=name,
        aliases=frozenset({(Scheme.NAME, name), (Scheme.CID, cid)}),
        observable=True,
    )


def _build_graph(config: SynthConfig, rng: np.random.Generator) -> NetworkSkeleton:
    G, D = config.n_genes, config.n_drugs
    entities = [_gene_entity(i) for i in range(G)]
    entities += [_drug_entity(G + j, j) for j in range(D)]

    patterns: list[LinkedPattern] = []
    if G >= 2:
        # A gene ring keeps the observable side connected and lets gene
        # states be pinned by neighboring observations; optional extra
        # gene-gene edges add denser pinning.
        gene_pairs = [(i, (i + 1) % G) for i in range(G)] if G >= 3 else [(0, 1)]
        extra = rng.random((G, G))
        gene_pairs += [
            (a, b)
            for a in range(G)
            for b in range(a + 1, G)
            if extra[a, b] < config.gene_edge_prob
        ]
        for a, b in gene_pairs:
            patterns.append(
                LinkedPattern(src=a, dst=b, relation_label=_RING_LABEL,
                              provenance=Provenance.META_PATTERN, weight=1)
            )
    # Every gene reports to one drug (contiguous blocks along the ring), so
    # each drug owns a reporter block and no observable is ever isolated;
    # Bernoulli edges add cross-talk on top.
    gene_drug = [(g, (g * D) // G) for g in range(G)]
    draws = rng.random((G, D))
    gene_drug += [(g, d) for g in range(G) for d in range(D) if draws[g, d] < config.edge_prob]
    covered = {d for _, d in gene_drug}
    gene_drug += [(d % G, d) for d in range(D) if d not in covered]
    for idx, (g, d) in enumerate(gene_drug):
        patterns.append(
            LinkedPattern(src=g, dst=G + d, relation_label=_EDGE_LABELS[idx % len(_EDGE_LABELS)],
                          provenance=Provenance.CATEGORICAL, weight=1)
        )
    skeleton, _ = build_skeleton(entities, patterns)
    for e in skeleton.entities:
        if e.observable and skeleton.degree(e.id) == 0:
            raise DegenerateGraph(f"observable entity {e.canonical_name} ended isolated")
    return skeleton


def _planted_params(skeleton: NetworkSkeleton, config: SynthConfig,
                    rng: np.random.Generator) -> ModelParams:
    """Structural parameters with a wide monotone readout along one direction."""
    params = init_params(skeleton, config.k, config.seed)
    k = config.k
    a = np.ones(k) / np.sqrt(k)
    g1 = rng.uniform(2.0, 3.0)
    g2 = -rng.uniform(2.0, 3.0)
    params.W1 = np.vstack([g1 * a, g2 * a]) + rng.uniform(-0.05, 0.05, size=(2, k))
    params.c1 = rng.uniform(-0.1, 0.1, size=2)
    params.w2 = np.array([rng.uniform(2.5, 3.5), -rng.uniform(2.5, 3.5)])
    from .propagation import sigmoid

    # Centering the readout at exactly 0.5 for a zero state keeps the
    # per-drug medians near the decision threshold.
    params.c2 = float(-(params.w2 @ sigmoid(params.c1)))
    return params


def _solve_gene_states(skeleton: NetworkSkeleton, params: ModelParams,
                       drug_states: np.ndarray, gene_ids: np.ndarray,
                       drug_ids: np.ndarray) -> np.ndarray:
    """Gene states satisfying est_g == v_g given the drug states.

    Genes neighbor genes and drugs only, so the fixpoint is the linear system
    (I - A) x = c with A the gene-to-gene propagation operator. Every gene has
    at least one drug neighbor, which keeps the system well conditioned.
    """
    k = params.k
    G = len(gene_ids)
    C = drug_states.shape[0]
    gene_pos = {int(g): idx for idx, g in enumerate(gene_ids)}
    drug_pos = {int(d): idx for idx, d in enumerate(drug_ids)}

    A = np.zeros((G * k, G * k))
    const = np.zeros((C, G * k))
    for g in gene_ids:
        gi = gene_pos[int(g)]
        deg = len(skeleton.adjacency[g])
        for nbr, eid in skeleton.adjacency[g]:
            slot = 2 * eid + (0 if g < nbr else 1)
            block = params.R[slot] / deg
            if nbr in gene_pos:
                ni = gene_pos[nbr]
                A[gi * k : (gi + 1) * k, ni * k : (ni + 1) * k] += block
            else:
                di = drug_pos[nbr]
                const[:, gi * k : (gi + 1) * k] += drug_states[:, di] @ block.T
    solution = np.linalg.solve(np.eye(G * k) - A, const.T).T
    return solution.reshape(C, G, k)


def generate(config: SynthConfig) -> SynthResult:
    """Generate a seeded (skeleton, panel, truth) triple."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    skeleton = _build_graph(config, rng)
    params = _planted_params(skeleton, config, rng)
    cg = compile_graph(skeleton)

    gene_ids = np.array([e.id for e in skeleton.entities if e.kind is Kind.GENE])
    drug_ids = np.array([e.id for e in skeleton.entities if e.kind is Kind.CHEMICAL])
    C, k = config.n_cell_lines, config.k
    n = skeleton.n_entities

    # Latent drug levels: magnitudes bounded away from zero with per-drug
    # sign-balanced assignment, so each drug's score distribution has a low
    # density valley at its median and the median label split is exact.
    direction = np.ones(k) / np.sqrt(k)
    D = len(drug_ids)
    magnitude = rng.uniform(1.0, 3.0, size=(C, D))
    signs = np.ones((C, D))
    for j in range(D):
        half = C // 2
        flip = rng.permutation(C)[:half]
        signs[flip, j] = -1.0
    z = magnitude * signs
    drug_states = z[..., None] * direction

    states = np.zeros((C, n, k))
    states[:, drug_ids] = drug_states
    states[:, gene_ids] = _solve_gene_states(skeleton, params, drug_states, gene_ids, drug_ids)

    B = np.zeros((C, n, k))
    Lam = np.ones((C, n))
    est, _ = _propagate_batch(cg, params, states, B, Lam)
    scores, _ = _readout_batch(params, est)

    gene_obs = scores[:, gene_ids]
    drug_obs = scores[:, drug_ids]
    if config.noise_sigma > 0:
        gene_obs = gene_obs + rng.normal(0.0, config.noise_sigma, size=gene_obs.shape)
        drug_obs = drug_obs + rng.normal(0.0, config.noise_sigma, size=drug_obs.shape)
        gene_obs = np.clip(gene_obs, 0.0, 1.0)
        drug_obs = np.clip(drug_obs, 0.0, 1.0)

    labels = np.zeros_like(drug_obs, dtype=np.int8)
    for j in range(drug_obs.shape[1]):
        labels[:, j] = (drug_obs[:, j] >= np.median(drug_obs[:, j])).astype(np.int8)

    width = len(str(C))
    panel = CellLinePanel(
        cell_lines=[f"CL{i + 1:0{max(width, 3)}d}" for i in range(C)],
        gene_ids=np.array([skeleton.entities[g].uid for g in gene_ids], dtype=np.int64),
        drug_ids=np.array([skeleton.entities[d].uid for d in drug_ids], dtype=np.int64),
        gene_values=gene_obs,
        gene_mask=np.ones_like(gene_obs, dtype=bool),
        drug_values=drug_obs,
        drug_mask=np.ones_like(drug_obs, dtype=bool),
        drug_labels=labels,
    )
    return SynthResult(
        config=config,
        skeleton=skeleton,
        panel=panel,
        truth=SynthTruth(params=params, states=states),
    )


def write_ingest_files(result: SynthResult, out_dir) -> dict[str, Path]:
    """Write the panel and graph back out in the four ingestion formats.

    Gene expression cells hold expm1 of the observation so the ingest-side
    log1p recovers it; per-feature min-max rescaling downstream is monotone,
    so binary labels survive the round trip unchanged.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    skeleton, panel = result.skeleton, result.panel
    entity = {e.id: e for e in skeleton.entities}

    inter_rows = []
    meta_rows = []
    for edge in skeleton.edges:
        ei, ej = entity[edge.i], entity[edge.j]
        label = edge.labels[0].label
        if ei.kind is Kind.GENE and ej.kind is Kind.CHEMICAL:
            inter_rows.append(
                (
                    ei.canonical_name,
                    ei.alias_values(Scheme.ENTREZ)[0],
                    label,
                    ej.canonical_name,
                    ej.alias_values(Scheme.CID)[0],
                    "synth",
                )
            )
        else:
            meta_rows.append(
                (
                    label,
                    ei.kind.value,
                    ei.alias_values(Scheme.ENTREZ)[0],
                    ei.canonical_name,
                    ej.kind.value,
                    ej.alias_values(Scheme.ENTREZ)[0],
                    ej.canonical_name,
                    1,
                )
            )

    paths = {
        "interactions": out / "interactions.tsv",
        "metapatterns": out / "metapatterns.tsv",
        "expression": out / "expression.tsv",
        "sensitivity": out / "sensitivity.tsv",
    }
    write_interactions(paths["interactions"], inter_rows)
    write_metapatterns(paths["metapatterns"], meta_rows)

    uid_entity = {e.uid: e for e in skeleton.entities}
    expr = ExpressionMatrix(
        entrez=[uid_entity[int(u)].alias_values(Scheme.ENTREZ)[0] for u in panel.gene_ids],
        gene_names=[uid_entity[int(u)].canonical_name for u in panel.gene_ids],
        cell_lines=list(panel.cell_lines),
        values=np.expm1(panel.gene_values).T.copy(),
        mask=panel.gene_mask.T.copy(),
    )
    write_expression(paths["expression"], expr)

    records = []
    for i, cell in enumerate(panel.cell_lines):
        for j, uid in enumerate(panel.drug_ids):
            if not panel.drug_mask[i, j]:
                continue
            e = uid_entity[int(uid)]
            records.append(
                SensitivityRecord(
                    cell_line=cell,
                    drug_name=e.canonical_name,
                    drug_cid=e.alias_values(Scheme.CID)[0],
                    intensity=float(panel.drug_values[i, j]),
                )
            )
    write_sensitivity(paths["sensitivity"], records)
    return paths
