"""Model parameters and the propagation/readout/loss/gradient core.

Every node i carries a state vector v_i (length k), a bias vector b_i and a
scale lambda_i. Every undirected edge carries two k-by-k relation matrices,
one per direction. A node's estimated state is

    est_i = (lambda_i / |N(i)|) * sum_{j in N(i)} R[i<-j] @ v_j + lambda_i * b_i

(an isolated node estimates lambda_i * b_i), and a shared two-hidden-unit
sigmoid readout maps any state to a scalar in (0,1). The squared-error loss
averages readout residuals separately over observed genes and observed
chemicals and combines them as l_gene + beta * l_chem.

All heavy functions run batched over an axis of independent episodes (cell
lines); the single-observation wrappers below are the batched code with a
batch of one, so both paths are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import MalformedRow, ShapeMismatch
from .graph import NetworkSkeleton
from .parsers import _fmt

PARAMS_MAGIC = "relprop-params v1"


def sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class CompiledGraph:
    """Flat edge-entry arrays for vectorized propagation.

    One entry per directed adjacency pair (aggregating node ``dst`` reads
    neighbor ``src`` through relation matrix slot ``slot``). Entries are
    emitted in (dst, src) sorted order, so segment reductions over ``dst``
    are contiguous; ``src_order`` re-sorts entries by src for the reverse
    scatter in the backward pass.
    """

    n: int
    n_edges: int
    dst: np.ndarray
    src: np.ndarray
    slot: np.ndarray
    deg: np.ndarray  # (n,) float, |N(i)|
    inv_deg: np.ndarray  # (n,) float, 0.0 for isolated nodes
    dst_nodes: np.ndarray  # nodes with at least one entry, ascending
    dst_starts: np.ndarray  # reduceat offsets into entries for dst_nodes
    src_order: np.ndarray  # permutation sorting entries by src
    src_nodes: np.ndarray
    src_starts: np.ndarray
    endpoints: np.ndarray  # (m, 2) undirected edge endpoints, i < j


def compile_graph(skeleton: NetworkSkeleton) -> CompiledGraph:
    n = skeleton.n_entities
    dst, src, slot = [], [], []
    for i in range(n):
        for nbr, eid in skeleton.adjacency[i]:
            dst.append(i)
            src.append(nbr)
            slot.append(2 * eid + (0 if i < nbr else 1))
    dst = np.asarray(dst, dtype=np.int64)
    src = np.asarray(src, dtype=np.int64)
    slot = np.asarray(slot, dtype=np.int64)
    deg = np.zeros(n)
    np.add.at(deg, dst, 1.0)
    inv_deg = np.zeros(n)
    inv_deg[deg > 0] = 1.0 / deg[deg > 0]
    dst_nodes, dst_starts = np.unique(dst, return_index=True)
    src_order = np.argsort(src, kind="stable")
    src_nodes, src_starts = np.unique(src[src_order], return_index=True)
    return CompiledGraph(
        n=n,
        n_edges=skeleton.n_edges,
        dst=dst,
        src=src,
        slot=slot,
        deg=deg,
        inv_deg=inv_deg,
        dst_nodes=dst_nodes,
        dst_starts=dst_starts,
        src_order=src_order,
        src_nodes=src_nodes,
        src_starts=src_starts,
        endpoints=np.array([(e.i, e.j) for e in skeleton.edges], dtype=np.int64).reshape(-1, 2),
    )


@dataclass
class ModelParams:
    """Everything the optimizer updates: node states, relation matrices and
    the shared readout. ``R[2e]`` is the matrix used when the lower endpoint
    of edge e aggregates the higher one; ``R[2e+1]`` is the reverse."""

    k: int
    v: np.ndarray  # (n, k)
    b: np.ndarray  # (n, k)
    lam: np.ndarray  # (n,)
    R: np.ndarray  # (2m, k, k)
    W1: np.ndarray  # (2, k)
    c1: np.ndarray  # (2,)
    w2: np.ndarray  # (2,)
    c2: float

    @property
    def n_nodes(self) -> int:
        return self.v.shape[0]

    @property
    def n_edges(self) -> int:
        return self.R.shape[0] // 2

    def copy(self) -> "ModelParams":
        return ModelParams(
            k=self.k,
            v=self.v.copy(),
            b=self.b.copy(),
            lam=self.lam.copy(),
            R=self.R.copy(),
            W1=self.W1.copy(),
            c1=self.c1.copy(),
            w2=self.w2.copy(),
            c2=float(self.c2),
        )

    def all_finite(self) -> bool:
        return bool(
            np.isfinite(self.v).all()
            and np.isfinite(self.b).all()
            and np.isfinite(self.lam).all()
            and np.isfinite(self.R).all()
            and np.isfinite(self.W1).all()
            and np.isfinite(self.c1).all()
            and np.isfinite(self.w2).all()
            and np.isfinite(self.c2)
        )


@dataclass
class ParamGrads:
    """Partial derivatives of the total loss, same shapes as ModelParams."""

    v: np.ndarray
    b: np.ndarray
    lam: np.ndarray
    R: np.ndarray
    W1: np.ndarray
    c1: np.ndarray
    w2: np.ndarray
    c2: float


@dataclass
class NodeObservations:
    """Observed readout targets for one cell line, split by node class."""

    genes: Mapping[int, float] = field(default_factory=dict)
    drugs: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class LossBreakdown:
    l_gene: float
    l_chem: float
    beta: float

    @property
    def total(self) -> float:
        return self.l_gene + self.beta * self.l_chem


@dataclass
class ObsBatch:
    """Dense per-episode observation masks/targets over graph nodes."""

    gene_mask: np.ndarray  # (C, n) bool
    gene_target: np.ndarray  # (C, n)
    drug_mask: np.ndarray
    drug_target: np.ndarray

    @classmethod
    def from_single(cls, obs: NodeObservations, n: int) -> "ObsBatch":
        batch = cls(
            gene_mask=np.zeros((1, n), dtype=bool),
            gene_target=np.zeros((1, n)),
            drug_mask=np.zeros((1, n), dtype=bool),
            drug_target=np.zeros((1, n)),
        )
        for node, value in obs.genes.items():
            batch.gene_mask[0, node] = True
            batch.gene_target[0, node] = value
        for node, value in obs.drugs.items():
            batch.drug_mask[0, node] = True
            batch.drug_target[0, node] = value
        return batch


def init_params(skeleton: NetworkSkeleton, k: int, seed: int) -> ModelParams:
    """Seed-deterministic initialization: small uniform states, zero biases,
    unit scales, near-identity relation matrices, small uniform readout."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    n, m = skeleton.n_entities, skeleton.n_edges
    v = rng.uniform(-0.1, 0.1, size=(n, k))
    R = np.broadcast_to(np.eye(k), (2 * m, k, k)) + rng.uniform(-0.01, 0.01, size=(2 * m, k, k))
    W1 = rng.uniform(-0.5, 0.5, size=(2, k))
    w2 = rng.uniform(-0.5, 0.5, size=2)
    return ModelParams(
        k=k,
        v=v,
        b=np.zeros((n, k)),
        lam=np.ones(n),
        R=np.ascontiguousarray(R),
        W1=W1,
        c1=np.zeros(2),
        w2=w2,
        c2=0.0,
    )


def _segment_sum(values: np.ndarray, starts: np.ndarray, nodes: np.ndarray, n: int) -> np.ndarray:
    """Sum entry values (C, T, k) into per-node slots (C, n, k)."""
    out = np.zeros((values.shape[0], n, values.shape[2]))
    if len(nodes):
        out[:, nodes] = np.add.reduceat(values, starts, axis=1)
    return out


def _propagate_batch(cg: CompiledGraph, params: ModelParams, V, B, Lam):
    """Estimated states for all nodes of all episodes: (C, n, k)."""
    msgs = np.einsum("tkl,ctl->ctk", params.R[cg.slot], V[:, cg.src])
    neigh = _segment_sum(msgs, cg.dst_starts, cg.dst_nodes, cg.n)
    return Lam[..., None] * (neigh * cg.inv_deg[None, :, None] + B), neigh


def _readout_batch(params: ModelParams, X):
    z1 = X @ params.W1.T + params.c1
    h = sigmoid(z1)
    u = sigmoid(h @ params.w2 + params.c2)
    return u, h


def _loss_batch(cg, params, V, B, Lam, obs: ObsBatch, beta: float):
    """Per-episode loss components; also returns forward intermediates."""
    est, neigh = _propagate_batch(cg, params, V, B, Lam)
    u, h = _readout_batch(params, est)
    n_gene = obs.gene_mask.sum(axis=1)
    n_drug = obs.drug_mask.sum(axis=1)
    res_gene = np.where(obs.gene_mask, u - obs.gene_target, 0.0)
    res_drug = np.where(obs.drug_mask, u - obs.drug_target, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        l_gene = np.where(n_gene > 0, (res_gene**2).sum(axis=1) / np.maximum(n_gene, 1), 0.0)
        l_chem = np.where(n_drug > 0, (res_drug**2).sum(axis=1) / np.maximum(n_drug, 1), 0.0)
    return l_gene, l_chem, (est, neigh, u, h, res_gene, res_drug, n_gene, n_drug)


def _backward_batch(cg, params, V, B, Lam, obs: ObsBatch, beta: float):
    """Loss components plus exact gradients for every parameter.

    Node gradients come back per episode, shaped like the state arrays;
    structural gradients (R, readout) come back per episode as well so the
    caller chooses how to reduce them.
    """
    l_gene, l_chem, cache = _loss_batch(cg, params, V, B, Lam, obs, beta)
    est, neigh, u, h, res_gene, res_drug, n_gene, n_drug = cache
    C = V.shape[0]

    coef = np.zeros_like(u)
    gene_rows = n_gene > 0
    drug_rows = n_drug > 0
    coef[gene_rows] += obs.gene_mask[gene_rows] / n_gene[gene_rows, None]
    if beta != 0.0:
        coef_drug = np.zeros_like(u)
        coef_drug[drug_rows] = beta * obs.drug_mask[drug_rows] / n_drug[drug_rows, None]
    else:
        coef_drug = np.zeros_like(u)

    g = 2.0 * (coef * res_gene + coef_drug * res_drug)  # dL/du per node
    d2 = g * u * (1.0 - u)
    g_w2 = np.einsum("cn,cnh->ch", d2, h)
    g_c2 = d2.sum(axis=1)
    d1 = d2[..., None] * params.w2 * h * (1.0 - h)  # (C, n, 2)
    g_c1 = d1.sum(axis=1)
    g_W1 = np.einsum("cnh,cnk->chk", d1, est)
    q = np.einsum("cnh,hk->cnk", d1, params.W1)  # dL/d est

    g_lam = np.einsum("cnk,cnk->cn", q, neigh * cg.inv_deg[None, :, None] + B)
    g_b = Lam[..., None] * q

    # Edge entries: dst aggregates src with weight lambda_dst / deg_dst.
    w_entry = (Lam * cg.inv_deg[None, :])[:, cg.dst]  # (C, T)
    qd = q[:, cg.dst] * w_entry[..., None]  # (C, T, k)
    g_R = np.zeros((C, params.R.shape[0], params.k, params.k))
    g_R[:, cg.slot] = np.einsum("ctk,ctl->ctkl", qd, V[:, cg.src])
    back = np.einsum("tkl,ctk->ctl", params.R[cg.slot], qd)[:, cg.src_order]
    g_v = _segment_sum(back, cg.src_starts, cg.src_nodes, cg.n)

    grads = {
        "v": g_v,
        "b": g_b,
        "lam": g_lam,
        "R": g_R,
        "W1": g_W1,
        "c1": g_c1,
        "w2": g_w2,
        "c2": g_c2,
    }
    return l_gene, l_chem, grads


def _single_batch(params: ModelParams):
    return params.v[None], params.b[None], params.lam[None]


def propagate(params: ModelParams, skeleton: NetworkSkeleton, node: int,
              cg: Optional[CompiledGraph] = None) -> np.ndarray:
    """Estimated state of one node from its neighbors' current states."""
    cg = cg or compile_graph(skeleton)
    if not (0 <= node < cg.n):
        raise ValueError(f"node {node} out of range")
    est, _ = _propagate_batch(cg, params, *_single_batch(params))
    return est[0, node]


def readout(params: ModelParams, x: np.ndarray) -> float:
    """Shared readout: scalar in (0,1) for any finite state vector."""
    from .validation import check_finite

    x = check_finite("readout input", x)
    u, _ = _readout_batch(params, x[None, None, :])
    return float(u[0, 0])


def loss(params: ModelParams, skeleton: NetworkSkeleton, obs: NodeObservations,
         beta: float, cg: Optional[CompiledGraph] = None) -> LossBreakdown:
    """Squared-error loss of readout(propagate(.)) against the observations."""
    cg = cg or compile_graph(skeleton)
    batch = ObsBatch.from_single(obs, cg.n)
    l_gene, l_chem, _ = _loss_batch(cg, params, *_single_batch(params), batch, beta)
    return LossBreakdown(l_gene=float(l_gene[0]), l_chem=float(l_chem[0]), beta=beta)


def grad(params: ModelParams, skeleton: NetworkSkeleton, obs: NodeObservations,
         beta: float, cg: Optional[CompiledGraph] = None) -> ParamGrads:
    """Exact analytic gradient of the total loss for every parameter."""
    cg = cg or compile_graph(skeleton)
    batch = ObsBatch.from_single(obs, cg.n)
    _, _, grads = _backward_batch(cg, params, *_single_batch(params), batch, beta)
    return ParamGrads(
        v=grads["v"][0],
        b=grads["b"][0],
        lam=grads["lam"][0],
        R=grads["R"][0],
        W1=grads["W1"][0],
        c1=grads["c1"][0],
        w2=grads["w2"][0],
        c2=float(grads["c2"][0]),
    )


def finite_diff_grad(params: ModelParams, skeleton: NetworkSkeleton,
                     obs: NodeObservations, beta: float, h: float = 1e-5) -> ParamGrads:
    """Central-difference gradient computed only through :func:`loss`.

    Test oracle for :func:`grad`; O(#parameters) loss evaluations, intended
    for small fixtures.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    cg = compile_graph(skeleton)
    work = params.copy()

    def total() -> float:
        return loss(work, skeleton, obs, beta, cg=cg).total

    out = ParamGrads(
        v=np.zeros_like(params.v),
        b=np.zeros_like(params.b),
        lam=np.zeros_like(params.lam),
        R=np.zeros_like(params.R),
        W1=np.zeros_like(params.W1),
        c1=np.zeros_like(params.c1),
        w2=np.zeros_like(params.w2),
        c2=0.0,
    )
    for name in ("v", "b", "lam", "R", "W1", "c1", "w2"):
        arr = getattr(work, name)
        target = getattr(out, name)
        flat = arr.reshape(-1)
        gflat = target.reshape(-1)
        for idx in range(flat.size):
            x0 = flat[idx]
            flat[idx] = x0 + h
            up = total()
            flat[idx] = x0 - h
            down = total()
            flat[idx] = x0
            gflat[idx] = (up - down) / (2.0 * h)
    x0 = work.c2
    work.c2 = x0 + h
    up = total()
    work.c2 = x0 - h
    down = total()
    work.c2 = x0
    out.c2 = (up - down) / (2.0 * h)
    return out


def save_params(params: ModelParams, skeleton: NetworkSkeleton, path) -> None:
    """Plain-text serialization; 17 significant digits, lossless round-trip."""
    if params.n_nodes != skeleton.n_entities or params.n_edges != skeleton.n_edges:
        raise ShapeMismatch("parameters do not match the skeleton")
    n, m, k = params.n_nodes, params.n_edges, params.k
    out = [f"{PARAMS_MAGIC} k={k} nodes={n} edges={m}"]
    for i in range(n):
        vals = [_fmt(params.lam[i])]
        vals += [_fmt(x) for x in params.v[i]]
        vals += [_fmt(x) for x in params.b[i]]
        out.append("N\t" + str(i) + "\t" + "\t".join(vals))
    for e, (a, b) in enumerate((edge.i, edge.j) for edge in skeleton.edges):
        fwd = "\t".join(_fmt(x) for x in params.R[2 * e].reshape(-1))
        rev = "\t".join(_fmt(x) for x in params.R[2 * e + 1].reshape(-1))
        out.append(f"E\t{a}\t{b}\t{fwd}")
        out.append(f"E\t{b}\t{a}\t{rev}")
    out.append("W1\t" + "\t".join(_fmt(x) for x in params.W1.reshape(-1)))
    out.append("c1\t" + "\t".join(_fmt(x) for x in params.c1))
    out.append("w2\t" + "\t".join(_fmt(x) for x in params.w2))
    out.append("c2\t" + _fmt(params.c2))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_params(path) -> ModelParams:
    text = Path(path).read_text(encoding="utf-8")
    lines = [l for l in text.split("\n") if l and not l.startswith("#")]
    if not lines or not lines[0].startswith(PARAMS_MAGIC):
        raise MalformedRow(path, 1, f"expected {PARAMS_MAGIC!r} header")
    meta = dict(tok.split("=") for tok in lines[0].split()[2:])
    k, n, m = int(meta["k"]), int(meta["nodes"]), int(meta["edges"])
    params = ModelParams(
        k=k,
        v=np.zeros((n, k)),
        b=np.zeros((n, k)),
        lam=np.zeros(n),
        R=np.zeros((2 * m, k, k)),
        W1=np.zeros((2, k)),
        c1=np.zeros(2),
        w2=np.zeros(2),
        c2=0.0,
    )
    directed: list[tuple[int, int, np.ndarray]] = []
    for no, line in enumerate(lines[1:], start=2):
        f = line.split("\t")
        tag = f[0]
        if tag == "N":
            i = int(f[1])
            vals = np.array([float(x) for x in f[2:]])
            if vals.size != 1 + 2 * k:
                raise MalformedRow(path, no, "bad node record length")
            params.lam[i] = vals[0]
            params.v[i] = vals[1 : 1 + k]
            params.b[i] = vals[1 + k :]
        elif tag == "E":
            a, b = int(f[1]), int(f[2])
            mat = np.array([float(x) for x in f[3:]])
            if mat.size != k * k:
                raise MalformedRow(path, no, "bad edge record length")
            directed.append((a, b, mat.reshape(k, k)))
        elif tag == "W1":
            params.W1 = np.array([float(x) for x in f[1:]]).reshape(2, k)
        elif tag == "c1":
            params.c1 = np.array([float(x) for x in f[1:]])
        elif tag == "w2":
            params.w2 = np.array([float(x) for x in f[1:]])
        elif tag == "c2":
            params.c2 = float(f[1])
        else:
            raise MalformedRow(path, no, f"unknown record tag {tag!r}")
    if len(directed) != 2 * m:
        raise MalformedRow(path, 1, f"expected {2 * m} directed edge records, found {len(directed)}")
    for e in range(m):
        a, b, fwd = directed[2 * e]
        b2, a2, rev = directed[2 * e + 1]
        if (a, b) != (a2, b2):
            raise MalformedRow(path, 1, f"edge records {2 * e} and {2 * e + 1} are not a directed pair")
        params.R[2 * e] = fwd
        params.R[2 * e + 1] = rev
    return params
