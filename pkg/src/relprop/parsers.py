"""Parsers and writers for the four tab-separated input formats.

All formats are UTF-8 with ``\\n`` line endings; lines starting with ``#``
are comments and skipped. Parsers never guess: a row with the wrong column
count, an unparseable number or a violated sign constraint raises with the
offending file and 1-based line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import EmptyFile, MalformedRow, NegativeValue, NonPositiveCount
from .linking import Kind, Mention, Provenance, RawPattern, Scheme

INTERACTIONS_HEADER = ["gene_name", "gene_entrez", "interaction", "drug_name", "drug_cid", "source"]
METAPATTERNS_HEADER = ["pattern", "e1_kind", "e1_id", "e1_name", "e2_kind", "e2_id", "e2_name", "count"]
SENSITIVITY_HEADER = ["cell_line", "drug_name", "drug_cid", "intensity"]
EXPRESSION_HEADER_PREFIX = ["entrez", "gene_name"]


def _fmt(x: float) -> str:
    """Decimal form with 17 significant digits; losslessly round-trips float64."""
    return format(float(x), ".17g")


def _lines(path) -> Iterator[tuple[int, str]]:
    text = Path(path).read_text(encoding="utf-8")
    for no, line in enumerate(text.split("\n"), start=1):
        if not line or line.startswith("#"):
            continue
        yield no, line


def _rows(path, width: int, header: Sequence[str]):
    """Yield (line_no, fields) for data rows after validating the header."""
    it = _lines(path)
    try:
        no, line = next(it)
    except StopIteration:
        raise EmptyFile(path, "missing header") from None
    fields = line.split("\t")
    if fields != list(header):
        raise MalformedRow(path, no, f"expected header {list(header)}, got {fields}")
    for no, line in it:
        fields = line.split("\t")
        if len(fields) != width:
            raise MalformedRow(path, no, f"expected {width} columns, got {len(fields)}")
        yield no, fields


def parse_interactions(path) -> list[RawPattern]:
    """Parse curated drug-gene interaction rows into patterns.

    Each row is one categorical relation between a gene and a chemical; row
    order is preserved and duplicate rows are kept (they are merged later when
    the graph is built).
    """
    patterns = []
    for no, f in _rows(path, 6, INTERACTIONS_HEADER):
        gene_name, entrez, label, drug_name, cid, _source = f
        if not label:
            raise MalformedRow(path, no, "empty interaction label")
        patterns.append(
            RawPattern(
                relation_label=label,
                src_name=gene_name,
                src_id=entrez or None,
                dst_name=drug_name,
                dst_id=cid or None,
                src_kind=Kind.GENE,
                dst_kind=Kind.CHEMICAL,
                provenance=Provenance.CATEGORICAL,
            )
        )
    if not patterns:
        raise EmptyFile(path)
    return patterns


def _parse_kind(path, no, token: str) -> Kind:
    try:
        return Kind(token)
    except ValueError:
        raise MalformedRow(path, no, f"unknown entity kind {token!r}") from None


def parse_metapatterns(path) -> list[RawPattern]:
    """Parse text-mined relation rows; ``count`` becomes the pattern weight."""
    patterns = []
    for no, f in _rows(path, 8, METAPATTERNS_HEADER):
        label, k1, id1, n1, k2, id2, n2, count = f
        if not label:
            raise MalformedRow(path, no, "empty pattern")
        try:
            weight = int(count)
        except ValueError:
            raise MalformedRow(path, no, f"count is not an integer: {count!r}") from None
        if weight < 1:
            raise NonPositiveCount(path, no, weight)
        patterns.append(
            RawPattern(
                relation_label=label,
                src_name=n1,
                src_id=id1 or None,
                dst_name=n2,
                dst_id=id2 or None,
                src_kind=_parse_kind(path, no, k1),
                dst_kind=_parse_kind(path, no, k2),
                provenance=Provenance.META_PATTERN,
                weight=weight,
            )
        )
    if not patterns:
        raise EmptyFile(path)
    return patterns


@dataclass
class ExpressionMatrix:
    """Raw gene expression: one row per gene alias, one column per cell line.

    Empty cells are missing, not zero: ``mask`` marks present values.
    """

    entrez: list[Optional[str]]
    gene_names: list[str]
    cell_lines: list[str]
    values: np.ndarray  # (genes, cell lines), float64, 0.0 where missing
    mask: np.ndarray  # (genes, cell lines), bool

    @property
    def n_genes(self) -> int:
        return len(self.gene_names)


def parse_expression(path) -> ExpressionMatrix:
    """Parse the expression matrix, keeping cell-line names verbatim."""
    it = _lines(path)
    try:
        no, line = next(it)
    except StopIteration:
        raise EmptyFile(path, "missing header") from None
    header = line.split("\t")
    if header[:2] != EXPRESSION_HEADER_PREFIX or len(header) < 3:
        raise MalformedRow(path, no, "expected header starting with entrez<TAB>gene_name and at least one cell line column")
    cell_lines = header[2:]
    width = len(header)

    entrez, names, rows, masks = [], [], [], []
    for no, line in it:
        f = line.split("\t")
        if len(f) != width:
            raise MalformedRow(path, no, f"expected {width} columns, got {len(f)}")
        entrez.append(f[0] or None)
        names.append(f[1])
        row = np.zeros(len(cell_lines))
        present = np.zeros(len(cell_lines), dtype=bool)
        for j, cell in enumerate(f[2:]):
            if cell == "":
                continue
            try:
                value = float(cell)
            except ValueError:
                raise MalformedRow(path, no, f"not a number: {cell!r}") from None
            if not np.isfinite(value):
                raise MalformedRow(path, no, f"non-finite value: {cell!r}")
            if value < 0:
                raise NegativeValue(path, no, cell_lines[j], value)
            row[j] = value
            present[j] = True
        rows.append(row)
        masks.append(present)

    values = np.array(rows) if rows else np.zeros((0, len(cell_lines)))
    mask = np.array(masks) if masks else np.zeros((0, len(cell_lines)), dtype=bool)
    return ExpressionMatrix(entrez=entrez, gene_names=names, cell_lines=cell_lines,
                            values=values, mask=mask)


@dataclass(frozen=True)
class SensitivityRecord:
    cell_line: str
    drug_name: str
    drug_cid: Optional[str]
    intensity: float


def parse_sensitivity(path) -> list[SensitivityRecord]:
    """Parse drug sensitivity rows; duplicate (cell line, drug) rows are
    averaged so ingestion is independent of row order."""
    order: list[tuple[str, str, Optional[str]]] = []
    sums: dict[tuple[str, str, Optional[str]], float] = {}
    counts: dict[tuple[str, str, Optional[str]], int] = {}
    for no, f in _rows(path, 4, SENSITIVITY_HEADER):
        cell_line, drug_name, cid, intensity = f
        try:
            value = float(intensity)
        except ValueError:
            raise MalformedRow(path, no, f"not a number: {intensity!r}") from None
        if not np.isfinite(value) or value < 0:
            raise MalformedRow(path, no, f"intensity must be a finite nonnegative number, got {intensity!r}")
        key = (cell_line, drug_name, cid or None)
        if key not in sums:
            order.append(key)
            sums[key] = 0.0
            counts[key] = 0
        sums[key] += value
        counts[key] += 1
    if not order:
        raise EmptyFile(path)
    return [
        SensitivityRecord(cell_line=c, drug_name=d, drug_cid=i, intensity=sums[k] / counts[k])
        for k in order
        for c, d, i in [k]
    ]


def expression_mentions(expr: ExpressionMatrix) -> list[Mention]:
    """One gene mention per expression row, for entity linking."""
    return [
        Mention(
            kind=Kind.GENE,
            name=name,
            ids={Scheme.ENTREZ: ez} if ez else {},
            source=f"expression:{i}",
        )
        for i, (ez, name) in enumerate(zip(expr.entrez, expr.gene_names))
    ]


def sensitivity_mentions(records: Sequence[SensitivityRecord]) -> list[Mention]:
    """One chemical mention per sensitivity record, for entity linking."""
    return [
        Mention(
            kind=Kind.CHEMICAL,
            name=r.drug_name,
            ids={Scheme.CID: r.drug_cid} if r.drug_cid else {},
            source=f"sensitivity:{i}",
        )
        for i, r in enumerate(records)
    ]


def write_interactions(path, rows: Sequence[tuple[str, str, str, str, str, str]]) -> None:
    """Write (gene_name, entrez, interaction, drug_name, cid, source) rows."""
    out = ["\t".join(INTERACTIONS_HEADER)]
    out += ["\t".join(r) for r in rows]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def write_metapatterns(path, rows: Sequence[tuple[str, str, str, str, str, str, str, int]]) -> None:
    out = ["\t".join(METAPATTERNS_HEADER)]
    out += ["\t".join([*r[:7], str(r[7])]) for r in rows]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def write_expression(path, expr: ExpressionMatrix) -> None:
    out = ["\t".join(EXPRESSION_HEADER_PREFIX + list(expr.cell_lines))]
    for i in range(expr.n_genes):
        cells = [
            _fmt(expr.values[i, j]) if expr.mask[i, j] else ""
            for j in range(len(expr.cell_lines))
        ]
        out.append("\t".join([expr.entrez[i] or "", expr.gene_names[i], *cells]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def write_sensitivity(path, records: Sequence[SensitivityRecord]) -> None:
    out = ["\t".join(SENSITIVITY_HEADER)]
    out += [
        "\t".join([r.cell_line, r.drug_name, r.drug_cid or "", _fmt(r.intensity)])
        for r in records
    ]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
