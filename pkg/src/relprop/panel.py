"""Aligned per-cell-line observations for genes and drugs.

Expression and sensitivity sources are joined on normalized cell-line names.
Gene values are log(1+x) transformed then min-max scaled to [0,1] per gene;
drug intensities are min-max scaled per drug; binary drug labels split at the
per-drug median of the scaled intensity. Missing cells stay masked and are
never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MalformedRow, NoOverlap
from .linking import Entity, Kind, Scheme, normalize_name
from .parsers import ExpressionMatrix, SensitivityRecord, _fmt

PANEL_MAGIC = "relprop-panel v1"


@dataclass
class CellLinePanel:
    """Aligned observations: rows are cell lines, columns are entity uids."""

    cell_lines: list[str]
    gene_ids: np.ndarray  # (G,) entity uids, ascending
    drug_ids: np.ndarray  # (D,) entity uids, ascending
    gene_values: np.ndarray  # (C, G) in [0,1] where masked
    gene_mask: np.ndarray  # (C, G) bool
    drug_values: np.ndarray  # (C, D) in [0,1] where masked
    drug_mask: np.ndarray  # (C, D) bool
    drug_labels: np.ndarray  # (C, D) int8, valid exactly where drug_mask

    def __post_init__(self):
        self.validate()

    @property
    def n_cell_lines(self) -> int:
        return len(self.cell_lines)

    def validate(self) -> None:
        C, G, D = len(self.cell_lines), len(self.gene_ids), len(self.drug_ids)
        if self.gene_values.shape != (C, G) or self.gene_mask.shape != (C, G):
            raise ValueError("gene arrays do not match panel dimensions")
        if self.drug_values.shape != (C, D) or self.drug_mask.shape != (C, D):
            raise ValueError("drug arrays do not match panel dimensions")
        if self.drug_labels.shape != (C, D):
            raise ValueError("drug labels do not match panel dimensions")
        for values, mask, tag in (
            (self.gene_values, self.gene_mask, "gene"),
            (self.drug_values, self.drug_mask, "drug"),
        ):
            present = values[mask]
            if present.size and not (
                np.isfinite(present).all() and present.min() >= 0.0 and present.max() <= 1.0
            ):
                raise ValueError(f"{tag} values outside [0,1]")
        labels = self.drug_labels[self.drug_mask]
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("drug labels must be 0 or 1")

    def missing_fraction(self) -> float:
        total = self.gene_mask.size + self.drug_mask.size
        if total == 0:
            return 0.0
        present = int(self.gene_mask.sum()) + int(self.drug_mask.sum())
        return 1.0 - present / total

    def subset(self, cell_indices: Sequence[int]) -> "CellLinePanel":
        """Panel restricted to the given cell-line rows (order preserved)."""
        idx = list(cell_indices)
        return CellLinePanel(
            cell_lines=[self.cell_lines[i] for i in idx],
            gene_ids=self.gene_ids.copy(),
            drug_ids=self.drug_ids.copy(),
            gene_values=self.gene_values[idx].copy(),
            gene_mask=self.gene_mask[idx].copy(),
            drug_values=self.drug_values[idx].copy(),
            drug_mask=self.drug_mask[idx].copy(),
            drug_labels=self.drug_labels[idx].copy(),
        )

    def save(self, path) -> None:
        """Serialize to the panel text format (deterministic, lossless)."""
        out = [
            f"{PANEL_MAGIC} cells={self.n_cell_lines} "
            f"genes={len(self.gene_ids)} drugs={len(self.drug_ids)}"
        ]
        for i, name in enumerate(self.cell_lines):
            out.append(f"C\t{i}\t{name}")
        for j, uid in enumerate(self.gene_ids):
            out.append(f"GID\t{j}\t{int(uid)}")
        for j, uid in enumerate(self.drug_ids):
            out.append(f"DID\t{j}\t{int(uid)}")
        for i in range(self.n_cell_lines):
            for j in range(len(self.gene_ids)):
                if self.gene_mask[i, j]:
                    out.append(f"GV\t{i}\t{j}\t{_fmt(self.gene_values[i, j])}")
        for i in range(self.n_cell_lines):
            for j in range(len(self.drug_ids)):
                if self.drug_mask[i, j]:
                    out.append(
                        f"DV\t{i}\t{j}\t{_fmt(self.drug_values[i, j])}\t{int(self.drug_labels[i, j])}"
                    )
        Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CellLinePanel":
        text = Path(path).read_text(encoding="utf-8")
        lines = [l for l in text.split("\n") if l and not l.startswith("#")]
        if not lines or not lines[0].startswith(PANEL_MAGIC):
            raise MalformedRow(path, 1, f"expected {PANEL_MAGIC!r} header")
        meta = dict(tok.split("=") for tok in lines[0].split()[2:])
        C, G, D = int(meta["cells"]), int(meta["genes"]), int(meta["drugs"])
        cell_lines = [""] * C
        gene_ids = np.zeros(G, dtype=np.int64)
        drug_ids = np.zeros(D, dtype=np.int64)
        gene_values = np.zeros((C, G))
        gene_mask = np.zeros((C, G), dtype=bool)
        drug_values = np.zeros((C, D))
        drug_mask = np.zeros((C, D), dtype=bool)
        drug_labels = np.zeros((C, D), dtype=np.int8)
        for no, line in enumerate(lines[1:], start=2):
            f = line.split("\t")
            tag = f[0]
            if tag == "C":
                cell_lines[int(f[1])] = f[2]
            elif tag == "GID":
                gene_ids[int(f[1])] = int(f[2])
            elif tag == "DID":
                drug_ids[int(f[1])] = int(f[2])
            elif tag == "GV":
                i, j = int(f[1]), int(f[2])
                gene_values[i, j] = float(f[3])
                gene_mask[i, j] = True
            elif tag == "DV":
                i, j = int(f[1]), int(f[2])
                drug_values[i, j] = float(f[3])
                drug_mask[i, j] = True
                drug_labels[i, j] = int(f[4])
            else:
                raise MalformedRow(path, no, f"unknown record tag {tag!r}")
        return cls(
            cell_lines=cell_lines,
            gene_ids=gene_ids,
            drug_ids=drug_ids,
            gene_values=gene_values,
            gene_mask=gene_mask,
            drug_values=drug_values,
            drug_mask=drug_mask,
            drug_labels=drug_labels,
        )


@dataclass
class PanelReport:
    joined_cell_lines: int = 0
    dropped_expression_cell_lines: int = 0
    dropped_sensitivity_cell_lines: int = 0
    unmapped_expression_rows: int = 0
    unmapped_sensitivity_records: int = 0
    constant_genes: list[int] = field(default_factory=list)
    constant_drugs: list[int] = field(default_factory=list)
    missing_fraction: float = 0.0

    def summary(self) -> str:
        lines = [
            "panel report",
            f"joined_cell_lines\t{self.joined_cell_lines}",
            f"dropped_expression_cell_lines\t{self.dropped_expression_cell_lines}",
            f"dropped_sensitivity_cell_lines\t{self.dropped_sensitivity_cell_lines}",
            f"unmapped_expression_rows\t{self.unmapped_expression_rows}",
            f"unmapped_sensitivity_records\t{self.unmapped_sensitivity_records}",
            f"constant_genes\t{len(self.constant_genes)}",
            f"constant_drugs\t{len(self.constant_drugs)}",
            f"missing_fraction\t{self.missing_fraction:.6f}",
        ]
        return "\n".join(lines) + "\n"


def _alias_index(entities: Sequence[Entity], kind: Kind) -> dict[tuple[Scheme, str], int]:
    """Alias lookup for one kind; names are stored normalized, first entity wins."""
    index: dict[tuple[Scheme, str], int] = {}
    for e in entities:
        if e.kind is not kind:
            continue
        for scheme, value in sorted(e.aliases, key=lambda a: (a[0].value, a[1])):
            key = (scheme, normalize_name(value) if scheme is Scheme.NAME else value)
            index.setdefault(key, e.uid)
    return index


def _minmax_unit(column: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, bool]:
    """Min-max scale the masked values to [0,1]; constant columns become 0.5."""
    out = np.zeros_like(column)
    present = column[mask]
    if present.size == 0:
        return out, False
    lo, hi = present.min(), present.max()
    if hi > lo:
        out[mask] = (present - lo) / (hi - lo)
        return out, False
    out[mask] = 0.5
    return out, True


def build_panel(
    expr: ExpressionMatrix,
    records: Sequence[SensitivityRecord],
    entities: Sequence[Entity],
) -> tuple[CellLinePanel, PanelReport]:
    """Join the two measurement sources into a normalized panel.

    Cell lines are joined on normalized names; lines present in only one
    source are dropped and counted in the report. Expression rows or
    sensitivity records that resolve to the same entity are averaged cell-wise
    before scaling. Raises :class:`NoOverlap` when the join is empty.
    """
    report = PanelReport()
    gene_index = _alias_index(entities, Kind.GENE)
    drug_index = _alias_index(entities, Kind.CHEMICAL)

    expr_by_norm: dict[str, int] = {}
    expr_names: dict[str, str] = {}
    for j, name in enumerate(expr.cell_lines):
        norm = normalize_name(name)
        if norm not in expr_by_norm:
            expr_by_norm[norm] = j
            expr_names[norm] = name
    sens_norms = {normalize_name(r.cell_line) for r in records}

    joined = sorted(set(expr_by_norm) & sens_norms)
    if not joined:
        raise NoOverlap("expression and sensitivity share no cell line")
    report.joined_cell_lines = len(joined)
    report.dropped_expression_cell_lines = len(expr_by_norm) - len(joined)
    report.dropped_sensitivity_cell_lines = len(sens_norms) - len(joined)
    cell_of_norm = {norm: i for i, norm in enumerate(joined)}
    cell_lines = [expr_names[n] for n in joined]
    C = len(joined)

    # Accumulate raw gene values per (cell, entity); rows for the same entity
    # are averaged where both are present.
    gene_uids: list[int] = []
    gene_sum: dict[int, np.ndarray] = {}
    gene_cnt: dict[int, np.ndarray] = {}
    col_of_expr = [cell_of_norm.get(normalize_name(n), -1) for n in expr.cell_lines]
    for i in range(expr.n_genes):
        uid = None
        if expr.entrez[i]:
            uid = gene_index.get((Scheme.ENTREZ, expr.entrez[i]))
        if uid is None:
            uid = gene_index.get((Scheme.NAME, normalize_name(expr.gene_names[i])))
        if uid is None:
            report.unmapped_expression_rows += 1
            continue
        if uid not in gene_sum:
            gene_uids.append(uid)
            gene_sum[uid] = np.zeros(C)
            gene_cnt[uid] = np.zeros(C)
        for j, cell in enumerate(col_of_expr):
            if cell >= 0 and expr.mask[i, j]:
                gene_sum[uid][cell] += expr.values[i, j]
                gene_cnt[uid][cell] += 1

    gene_ids = np.array(sorted(gene_uids), dtype=np.int64)
    G = len(gene_ids)
    gene_raw = np.zeros((C, G))
    gene_mask = np.zeros((C, G), dtype=bool)
    for j, uid in enumerate(gene_ids):
        cnt = gene_cnt[uid]
        present = cnt > 0
        gene_mask[:, j] = present
        gene_raw[present, j] = gene_sum[uid][present] / cnt[present]

    gene_values = np.zeros((C, G))
    for j, uid in enumerate(gene_ids):
        scaled, constant = _minmax_unit(np.log1p(gene_raw[:, j]), gene_mask[:, j])
        gene_values[:, j] = scaled
        if constant:
            report.constant_genes.append(int(uid))

    drug_uids: list[int] = []
    drug_sum: dict[int, np.ndarray] = {}
    drug_cnt: dict[int, np.ndarray] = {}
    for r in records:
        cell = cell_of_norm.get(normalize_name(r.cell_line))
        if cell is None:
            continue
        uid = None
        if r.drug_cid:
            uid = drug_index.get((Scheme.CID, r.drug_cid))
        if uid is None:
            uid = drug_index.get((Scheme.NAME, normalize_name(r.drug_name)))
        if uid is None:
            report.unmapped_sensitivity_records += 1
            continue
        if uid not in drug_sum:
            drug_uids.append(uid)
            drug_sum[uid] = np.zeros(C)
            drug_cnt[uid] = np.zeros(C)
        drug_sum[uid][cell] += r.intensity
        drug_cnt[uid][cell] += 1

    drug_ids = np.array(sorted(drug_uids), dtype=np.int64)
    D = len(drug_ids)
    drug_raw = np.zeros((C, D))
    drug_mask = np.zeros((C, D), dtype=bool)
    for j, uid in enumerate(drug_ids):
        cnt = drug_cnt[uid]
        present = cnt > 0
        drug_mask[:, j] = present
        drug_raw[present, j] = drug_sum[uid][present] / cnt[present]

    drug_values = np.zeros((C, D))
    drug_labels = np.zeros((C, D), dtype=np.int8)
    for j, uid in enumerate(drug_ids):
        scaled, constant = _minmax_unit(drug_raw[:, j], drug_mask[:, j])
        drug_values[:, j] = scaled
        if constant:
            report.constant_drugs.append(int(uid))
        present = drug_mask[:, j]
        if present.any():
            median = float(np.median(scaled[present]))
            drug_labels[present, j] = (scaled[present] >= median).astype(np.int8)

    panel = CellLinePanel(
        cell_lines=cell_lines,
        gene_ids=gene_ids,
        drug_ids=drug_ids,
        gene_values=gene_values,
        gene_mask=gene_mask,
        drug_values=drug_values,
        drug_mask=drug_mask,
        drug_labels=drug_labels,
    )
    report.missing_fraction = panel.missing_fraction()
    return panel, report
