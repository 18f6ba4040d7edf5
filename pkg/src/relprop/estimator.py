"""Alternating training over cell-line episodes, prediction and explanation.

Each epoch replays every cell line as an independent episode: node states
(v, b, lambda) are reset to the shared initialization and fitted for a fixed
number of inner gradient iterations (gene nodes with the gene learning rate,
chemical nodes with the chemical one). The structural parameters, relation
matrices and readout, are shared across episodes and take one averaged
gradient step per epoch. Prediction refits node states from gene observations
only, with the structural parameters frozen, and reads drug scores off the
propagated drug states.

Everything is seed-deterministic: episodes are processed in lexicographic
cell-line order and reduced with fixed-order array sums, so repeated runs are
bit-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import Diverged, EmptyOverlap, ShapeMismatch, UnknownDrug
from .graph import NetworkSkeleton
from .linking import Entity, Kind
from .panel import CellLinePanel
from .parsers import _fmt
from .propagation import (
    CompiledGraph,
    LossBreakdown,
    ModelParams,
    ObsBatch,
    _backward_batch,
    _propagate_batch,
    _readout_batch,
    compile_graph,
    init_params,
)


@dataclass
class TrainingConfig:
    """Knobs of the alternating optimizer; defaults follow the reference
    setting (embedding dimension 4, gene rate 0.1, chemical rate 0.001)."""

    k: int = 4
    lr_gene: float = 0.1
    lr_chem: float = 0.001
    lr_edge: float = 0.01
    beta: float = 1.0
    epochs: int = 100
    inner_iters: int = 20
    seed: int = 0
    predict_threshold: float = 0.5
    shuffle_cell_lines: bool = False
    inner_loss: str = "full"

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("lr_gene", "lr_chem", "lr_edge"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.inner_iters < 0:
            raise ValueError("inner_iters must be >= 0")
        if not (0.0 < self.predict_threshold < 1.0):
            raise ValueError("predict_threshold must lie strictly inside (0,1)")
        if self.inner_loss not in ("full", "gene"):
            raise ValueError("inner_loss must be 'full' or 'gene'")

    def echo_lines(self) -> list[str]:
        return [
            f"# {name} = {getattr(self, name)}"
            for name in (
                "k",
                "lr_gene",
                "lr_chem",
                "lr_edge",
                "beta",
                "epochs",
                "inner_iters",
                "seed",
                "predict_threshold",
                "shuffle_cell_lines",
                "inner_loss",
            )
        ]


@dataclass
class TrainReport:
    trajectory: list[LossBreakdown]
    params: ModelParams
    config: TrainingConfig
    seed: int
    wall_time: float
    n_cell_lines: int

    def trajectory_tsv(self) -> str:
        lines = self.config.echo_lines()
        lines.append("epoch\tl_gene\tl_chem\ttotal")
        for epoch, lb in enumerate(self.trajectory, start=1):
            lines.append(
                f"{epoch}\t{_fmt(lb.l_gene)}\t{_fmt(lb.l_chem)}\t{_fmt(lb.total)}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Prediction:
    cell_line: str
    drug_uid: int
    drug_name: str
    score: float
    call: int


@dataclass
class PredictionSet:
    """Per (cell line, drug) scores with the provenance of the run."""

    predictions: list[Prediction]
    provenance: dict[str, str] = field(default_factory=dict)

    def by_key(self) -> dict[tuple[str, int], Prediction]:
        return {(p.cell_line, p.drug_uid): p for p in self.predictions}

    def tsv(self) -> str:
        lines = [f"# {k} = {v}" for k, v in sorted(self.provenance.items())]
        lines.append("cell_line\tdrug_uid\tdrug_name\tscore\tcall")
        for p in self.predictions:
            lines.append(
                f"{p.cell_line}\t{p.drug_uid}\t{p.drug_name}\t{_fmt(p.score)}\t{p.call}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.tsv(), encoding="utf-8")


@dataclass
class Contribution:
    entity: Entity
    labels: tuple[str, ...]
    vector: np.ndarray
    norm: float


@dataclass
class Explanation:
    """Per-neighbor decomposition of one drug-node estimate."""

    cell_line: str
    drug: Entity
    contributions: list[Contribution]
    bias_vector: np.ndarray
    estimate: np.ndarray
    score: float

    def tsv(self) -> str:
        lines = ["rank\tentity\tlabels\tcontribution"]
        for rank, c in enumerate(self.contributions, start=1):
            lines.append(
                f"{rank}\t{c.entity.canonical_name}\t{'|'.join(c.labels)}\t{_fmt(c.norm)}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class _Problem:
    """Panel observations aligned onto skeleton node indices."""

    cg: CompiledGraph
    cell_lines: list[str]
    obs: ObsBatch
    drug_nodes: np.ndarray  # node index per panel drug column, -1 if absent
    gene_nodes: np.ndarray


def _align(skeleton: NetworkSkeleton, panel: CellLinePanel) -> _Problem:
    cg = compile_graph(skeleton)
    node_of_uid = {e.uid: e.id for e in skeleton.entities}
    order = sorted(range(panel.n_cell_lines), key=lambda i: panel.cell_lines[i])
    cells = [panel.cell_lines[i] for i in order]
    C, n = len(cells), cg.n

    gene_nodes = np.array([node_of_uid.get(int(u), -1) for u in panel.gene_ids], dtype=np.int64)
    drug_nodes = np.array([node_of_uid.get(int(u), -1) for u in panel.drug_ids], dtype=np.int64)

    obs = ObsBatch(
        gene_mask=np.zeros((C, n), dtype=bool),
        gene_target=np.zeros((C, n)),
        drug_mask=np.zeros((C, n), dtype=bool),
        drug_target=np.zeros((C, n)),
    )
    for col, node in enumerate(gene_nodes):
        if node < 0:
            continue
        present = panel.gene_mask[order, col]
        obs.gene_mask[present, node] = True
        obs.gene_target[present, node] = panel.gene_values[order, col][present]
    for col, node in enumerate(drug_nodes):
        if node < 0:
            continue
        present = panel.drug_mask[order, col]
        obs.drug_mask[present, node] = True
        obs.drug_target[present, node] = panel.drug_values[order, col][present]
    return _Problem(cg=cg, cell_lines=cells, obs=obs, drug_nodes=drug_nodes, gene_nodes=gene_nodes)


def _node_rates(skeleton: NetworkSkeleton, config: TrainingConfig) -> np.ndarray:
    # Chemical nodes move at the chemical rate; everything else at the gene rate.
    return np.array(
        [config.lr_chem if e.kind is Kind.CHEMICAL else config.lr_gene for e in skeleton.entities]
    )


def _fit_states(cg, params, obs: ObsBatch, lr_node: np.ndarray, config: TrainingConfig,
                epoch: int):
    """Run the inner loop: episode-local state fitting from the shared init."""
    C = obs.gene_mask.shape[0]
    V = np.repeat(params.v[None], C, axis=0)
    B = np.repeat(params.b[None], C, axis=0)
    Lam = np.repeat(params.lam[None], C, axis=0)
    rate = lr_node[None, :, None]
    for it in range(1, config.inner_iters + 1):
        _, _, grads = _backward_batch(cg, params, V, B, Lam, obs, config.beta)
        V -= rate * grads["v"]
        B -= rate * grads["b"]
        Lam -= lr_node[None, :] * grads["lam"]
        if not (np.isfinite(V).all() and np.isfinite(B).all() and np.isfinite(Lam).all()):
            raise Diverged(epoch, it)
    return V, B, Lam


def train(skeleton: NetworkSkeleton, panel: CellLinePanel, config: TrainingConfig) -> TrainReport:
    """Fit relation matrices and readout over per-cell-line episodes.

    Raises :class:`EmptyOverlap` when no panel observation touches the
    skeleton, and :class:`Diverged` when any parameter goes non-finite.
    """
    config.validate()
    started = time.perf_counter()
    problem = _align(skeleton, panel)
    if not (problem.obs.gene_mask.any() or problem.obs.drug_mask.any()):
        raise EmptyOverlap("no panel observation maps onto the skeleton")

    params = init_params(skeleton, config.k, config.seed)
    lr_node = _node_rates(skeleton, config)
    rng = np.random.default_rng(config.seed)
    trajectory: list[LossBreakdown] = []

    for epoch in range(1, config.epochs + 1):
        obs = problem.obs
        if config.shuffle_cell_lines:
            # Episode order never changes the fixed-order reductions below;
            # the shuffle only exists so the episode stream can be permuted.
            perm = rng.permutation(len(problem.cell_lines))
            obs = ObsBatch(
                gene_mask=obs.gene_mask[perm],
                gene_target=obs.gene_target[perm],
                drug_mask=obs.drug_mask[perm],
                drug_target=obs.drug_target[perm],
            )
        if config.inner_loss == "gene":
            # Prediction-aligned episodes: states are fitted exactly the way
            # predict fits them, so the structural step learns a map it will
            # actually see at prediction time.
            fit_obs = ObsBatch(
                gene_mask=obs.gene_mask,
                gene_target=obs.gene_target,
                drug_mask=np.zeros_like(obs.drug_mask),
                drug_target=np.zeros_like(obs.drug_target),
            )
        else:
            fit_obs = obs
        V, B, Lam = _fit_states(problem.cg, params, fit_obs, lr_node, config, epoch)
        l_gene, l_chem, grads = _backward_batch(problem.cg, params, V, B, Lam, obs, config.beta)
        if config.inner_iters > 0:
            params.R -= config.lr_edge * grads["R"].mean(axis=0)
            params.W1 -= config.lr_edge * grads["W1"].mean(axis=0)
            params.c1 -= config.lr_edge * grads["c1"].mean(axis=0)
            params.w2 -= config.lr_edge * grads["w2"].mean(axis=0)
            params.c2 -= config.lr_edge * float(grads["c2"].mean())
        if not params.all_finite():
            raise Diverged(epoch, config.inner_iters)
        breakdown = LossBreakdown(
            l_gene=float(l_gene.mean()), l_chem=float(l_chem.mean()), beta=config.beta
        )
        if not np.isfinite(breakdown.total):
            raise Diverged(epoch, config.inner_iters)
        trajectory.append(breakdown)

    return TrainReport(
        trajectory=trajectory,
        params=params,
        config=config,
        seed=config.seed,
        wall_time=time.perf_counter() - started,
        n_cell_lines=len(problem.cell_lines),
    )


def _check_params(skeleton: NetworkSkeleton, params: ModelParams) -> None:
    if params.n_nodes != skeleton.n_entities or params.n_edges != skeleton.n_edges:
        raise ShapeMismatch(
            f"params cover {params.n_nodes} nodes / {params.n_edges} edges, "
            f"skeleton has {skeleton.n_entities} / {skeleton.n_edges}"
        )


def _predict_states(skeleton, params, panel, config):
    """Refit node states from gene observations only (structure frozen)."""
    problem = _align(skeleton, panel)
    gene_only = ObsBatch(
        gene_mask=problem.obs.gene_mask,
        gene_target=problem.obs.gene_target,
        drug_mask=np.zeros_like(problem.obs.drug_mask),
        drug_target=np.zeros_like(problem.obs.drug_target),
    )
    lr_node = _node_rates(skeleton, config)
    V, B, Lam = _fit_states(problem.cg, params, gene_only, lr_node, config, epoch=0)
    return problem, V, B, Lam


def predict(
    skeleton: NetworkSkeleton,
    params: ModelParams,
    panel: CellLinePanel,
    config: TrainingConfig,
    drugs: Optional[Sequence[int]] = None,
) -> PredictionSet:
    """Score (cell line, drug) pairs and call them at the decision threshold.

    ``drugs`` are entity uids; by default every panel drug present in the
    skeleton is scored. Unknown uids raise :class:`UnknownDrug`.
    """
    config.validate()
    _check_params(skeleton, params)
    node_of_uid = {e.uid: e.id for e in skeleton.entities}
    if drugs is None:
        wanted = [int(u) for u in panel.drug_ids if int(u) in node_of_uid]
    else:
        wanted = []
        for uid in drugs:
            if int(uid) not in node_of_uid:
                raise UnknownDrug(f"entity uid {uid} is not in the skeleton")
            wanted.append(int(uid))

    problem, V, B, Lam = _predict_states(skeleton, params, panel, config)
    est, _ = _propagate_batch(problem.cg, params, V, B, Lam)
    scores, _ = _readout_batch(params, est)

    predictions = []
    for c, cell in enumerate(problem.cell_lines):
        for uid in wanted:
            node = node_of_uid[uid]
            score = float(scores[c, node])
            predictions.append(
                Prediction(
                    cell_line=cell,
                    drug_uid=uid,
                    drug_name=skeleton.entities[node].canonical_name,
                    score=score,
                    call=int(score >= config.predict_threshold),
                )
            )
    provenance = {
        "nodes": str(skeleton.n_entities),
        "edges": str(skeleton.n_edges),
        "threshold": str(config.predict_threshold),
        "inner_iters": str(config.inner_iters),
        "seed": str(config.seed),
        "k": str(config.k),
    }
    return PredictionSet(predictions=predictions, provenance=provenance)


def explain(
    skeleton: NetworkSkeleton,
    params: ModelParams,
    panel: CellLinePanel,
    cell_line: str,
    drug_uid: int,
    config: TrainingConfig,
) -> Explanation:
    """Rank a drug node's neighbors by the norm of their propagated message.

    The contribution vectors plus the bias term reproduce the drug estimate
    exactly, so the ranking is a faithful decomposition of the score.
    """
    config.validate()
    _check_params(skeleton, params)
    node_of_uid = {e.uid: e.id for e in skeleton.entities}
    if int(drug_uid) not in node_of_uid:
        raise UnknownDrug(f"entity uid {drug_uid} is not in the skeleton")
    if cell_line not in panel.cell_lines:
        raise ValueError(f"unknown cell line {cell_line!r}")
    sub = panel.subset([panel.cell_lines.index(cell_line)])
    problem, V, B, Lam = _predict_states(skeleton, params, sub, config)

    node = node_of_uid[int(drug_uid)]
    entity = skeleton.entities[node]
    deg = len(skeleton.adjacency[node])
    lam = float(Lam[0, node])
    contributions = []
    total = lam * B[0, node]
    for nbr, eid in skeleton.adjacency[node]:
        edge = skeleton.edges[eid]
        slot = 2 * eid + (0 if node < nbr else 1)
        vec = (lam / deg) * params.R[slot] @ V[0, nbr]
        total = total + vec
        contributions.append(
            Contribution(
                entity=skeleton.entities[nbr],
                labels=tuple(sorted({lab.label for lab in edge.labels})),
                vector=vec,
                norm=float(np.linalg.norm(vec)),
            )
        )
    contributions.sort(key=lambda c: (-c.norm, c.entity.id))
    score, _ = _readout_batch(params, total[None, None, :])
    return Explanation(
        cell_line=cell_line,
        drug=entity,
        contributions=contributions,
        bias_vector=lam * B[0, node],
        estimate=total,
        score=float(score[0, 0]),
    )


class NetworkPropagationModel(BaseEstimator):
    """Sklearn-style front end: fit on a panel, predict drug calls per cell line.

    The skeleton is a structural argument fixed at construction; all training
    knobs are plain constructor parameters so ``get_params``/``set_params``
    and cloning work as usual.
    """

    def __init__(
        self,
        skeleton: Optional[NetworkSkeleton] = None,
        k: int = 4,
        lr_gene: float = 0.1,
        lr_chem: float = 0.001,
        lr_edge: float = 0.01,
        beta: float = 1.0,
        epochs: int = 100,
        inner_iters: int = 20,
        seed: int = 0,
        predict_threshold: float = 0.5,
        shuffle_cell_lines: bool = False,
        inner_loss: str = "full",
    ):
        self.skeleton = skeleton
        self.k = k
        self.lr_gene = lr_gene
        self.lr_chem = lr_chem
        self.lr_edge = lr_edge
        self.beta = beta
        self.epochs = epochs
        self.inner_iters = inner_iters
        self.seed = seed
        self.predict_threshold = predict_threshold
        self.shuffle_cell_lines = shuffle_cell_lines
        self.inner_loss = inner_loss

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            k=self.k,
            lr_gene=self.lr_gene,
            lr_chem=self.lr_chem,
            lr_edge=self.lr_edge,
            beta=self.beta,
            epochs=self.epochs,
            inner_iters=self.inner_iters,
            seed=self.seed,
            predict_threshold=self.predict_threshold,
            shuffle_cell_lines=self.shuffle_cell_lines,
            inner_loss=self.inner_loss,
        )

    def fit(self, panel: CellLinePanel, y=None) -> "NetworkPropagationModel":
        if self.skeleton is None:
            raise ValueError("a skeleton is required to fit")
        self.report_ = train(self.skeleton, panel, self._config())
        self.params_ = self.report_.params
        return self

    def decision_scores(self, panel: CellLinePanel,
                        drugs: Optional[Sequence[int]] = None) -> PredictionSet:
        self._require_fitted()
        return predict(self.skeleton, self.params_, panel, self._config(), drugs=drugs)

    def predict(self, panel: CellLinePanel,
                drugs: Optional[Sequence[int]] = None) -> PredictionSet:
        return self.decision_scores(panel, drugs=drugs)

    def explain(self, panel: CellLinePanel, cell_line: str, drug_uid: int) -> Explanation:
        self._require_fitted()
        return explain(self.skeleton, self.params_, panel, cell_line, drug_uid, self._config())

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("model is not fitted; call fit first")
