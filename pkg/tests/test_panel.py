import math

import numpy as np
import pytest

from relprop.errors import NoOverlap
from relprop.linking import link_entities
from relprop.panel import CellLinePanel, build_panel
from relprop.parsers import ExpressionMatrix, SensitivityRecord


def expr_matrix(gene_rows, cell_lines):
    """gene_rows: list of (entrez, name, values with None for missing)."""
    values = np.array([[v if v is not None else 0.0 for v in row[2]] for row in gene_rows])
    mask = np.array([[v is not None for v in row[2]] for row in gene_rows])
    return ExpressionMatrix(
        entrez=[r[0] for r in gene_rows],
        gene_names=[r[1] for r in gene_rows],
        cell_lines=list(cell_lines),
        values=values,
        mask=mask,
    )


def linked_entities(expr, records):
    from relprop.parsers import expression_mentions, sensitivity_mentions

    return link_entities([], expression_mentions(expr), sensitivity_mentions(records)).entities


def simple_records(cells, name="drugA", cid="77", intensities=None):
    intensities = intensities or [0.1 * (i + 1) for i in range(len(cells))]
    return [
        SensitivityRecord(cell, name, cid, x) for cell, x in zip(cells, intensities)
    ]


def test_log1p_minmax_formula():
    cells = ["c1", "c2", "c3"]
    expr = expr_matrix([("1", "G", (0.0, math.e - 1.0, math.e**2 - 1.0))], cells)
    records = simple_records(cells)
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    assert np.allclose(panel.gene_values[:, 0], [0.0, 0.5, 1.0], atol=1e-12)


def test_gene_scaling_is_monotone():
    rng = np.random.default_rng(11)
    raw = rng.uniform(0, 500, size=8)
    cells = [f"c{i}" for i in range(8)]
    expr = expr_matrix([("1", "G", tuple(raw))], cells)
    records = simple_records(cells, intensities=list(rng.uniform(0, 2, 8)))
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    assert (np.argsort(panel.gene_values[:, 0]) == np.argsort(raw)).all()
    assert panel.gene_values.min() >= 0.0 and panel.gene_values.max() <= 1.0


def test_drug_median_labels():
    cells = ["c1", "c2"]
    expr = expr_matrix([("1", "G", (1.0, 2.0))], cells)
    records = simple_records(cells, intensities=[0.2, 0.8])
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    # scaled to {0,1}, median 0.5: 0.8 -> 1, 0.2 -> 0
    assert list(panel.drug_labels[:, 0]) == [0, 1]


def test_constant_feature_becomes_half_and_flagged():
    cells = ["c1", "c2"]
    expr = expr_matrix([("1", "G", (3.0, 3.0))], cells)
    records = simple_records(cells, intensities=[1.0, 1.0])
    panel, report = build_panel(expr, records, linked_entities(expr, records))
    assert np.allclose(panel.gene_values[:, 0], 0.5)
    assert np.allclose(panel.drug_values[:, 0], 0.5)
    assert len(report.constant_genes) == 1 and len(report.constant_drugs) == 1


def test_cell_line_join_normalized_and_drop_counts():
    expr = expr_matrix([("1", "G", (1.0, 2.0, 3.0))], ["A-549", "HeLa", "ExprOnly"])
    records = [
        SensitivityRecord("a549", "drugA", "77", 0.5),
        SensitivityRecord("HELA", "drugA", "77", 0.7),
        SensitivityRecord("SensOnly", "drugA", "77", 0.9),
    ]
    panel, report = build_panel(expr, records, linked_entities(expr, records))
    assert panel.cell_lines == ["A-549", "HeLa"]
    assert report.dropped_expression_cell_lines == 1
    assert report.dropped_sensitivity_cell_lines == 1


def test_no_overlap_raises():
    expr = expr_matrix([("1", "G", (1.0,))], ["only-expr"])
    records = [SensitivityRecord("only-sens", "drugA", "77", 0.5)]
    with pytest.raises(NoOverlap):
        build_panel(expr, records, linked_entities(expr, records))


def test_missing_cells_stay_masked():
    cells = ["c1", "c2", "c3", "c4"]
    expr = expr_matrix(
        [("1", "G1", (1.0, None, 3.0, None)), ("2", "G2", (None, 2.0, 1.0, 4.0))], cells
    )
    records = simple_records(cells)
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    assert panel.gene_mask.sum() == 5
    # 3 missing of 8 gene cells; drug cells complete
    assert panel.missing_fraction() == pytest.approx(3 / 12)


def test_duplicate_gene_rows_for_one_entity_averaged():
    cells = ["c1", "c2"]
    expr = expr_matrix(
        [("1", "G", (math.e - 1.0, 0.0)), ("1", "G-alias", (math.e - 1.0, math.e**2 - 1.0))],
        cells,
    )
    records = simple_records(cells)
    entities = linked_entities(expr, records)
    panel, _ = build_panel(expr, records, entities)
    assert panel.gene_values.shape[1] == 1
    # cell c1 averages two identical raw values; log1p then scales
    assert panel.gene_values[0, 0] != panel.gene_values[1, 0]


def test_panel_round_trip_identity(tmp_path):
    rng = np.random.default_rng(5)
    cells = [f"cl{i}" for i in range(6)]
    expr = expr_matrix(
        [(str(i), f"G{i}", tuple(rng.uniform(0, 9, 6))) for i in range(1, 4)], cells
    )
    records = []
    for d, (name, cid) in enumerate([("dA", "70"), ("dB", "71")]):
        for c in cells:
            records.append(SensitivityRecord(c, name, cid, float(rng.uniform(0, 3))))
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    p1 = tmp_path / "panel1.tsv"
    p2 = tmp_path / "panel2.tsv"
    panel.save(p1)
    loaded = CellLinePanel.load(p1)
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.cell_lines == panel.cell_lines
    assert np.array_equal(loaded.gene_values, panel.gene_values)
    assert np.array_equal(loaded.drug_labels, panel.drug_labels)


def test_subset_partition_reassembles():
    rng = np.random.default_rng(9)
    cells = [f"cl{i}" for i in range(5)]
    expr = expr_matrix([("1", "G", tuple(rng.uniform(0, 2, 5)))], cells)
    records = simple_records(cells, intensities=list(rng.uniform(0, 1, 5)))
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    left = panel.subset([0, 2, 4])
    right = panel.subset([1, 3])
    names = sorted(left.cell_lines + right.cell_lines)
    assert names == sorted(panel.cell_lines)


def test_values_always_in_unit_interval():
    rng = np.random.default_rng(13)
    cells = [f"cl{i}" for i in range(7)]
    expr = expr_matrix(
        [(str(g), f"G{g}", tuple(rng.uniform(0, 1e4, 7))) for g in range(1, 5)], cells
    )
    records = []
    for name, cid in [("dA", "70"), ("dB", "71")]:
        for c in cells:
            records.append(SensitivityRecord(c, name, cid, float(rng.uniform(0, 100))))
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    assert panel.gene_values[panel.gene_mask].min() >= 0
    assert panel.gene_values[panel.gene_mask].max() <= 1
    assert panel.drug_values[panel.drug_mask].min() >= 0
    assert panel.drug_values[panel.drug_mask].max() <= 1


def test_deterministic_build():
    cells = ["c1", "c2", "c3"]
    expr = expr_matrix([("1", "G", (1.0, 2.0, 3.0))], cells)
    records = simple_records(cells)
    entities = linked_entities(expr, records)
    a, ra = build_panel(expr, records, entities)
    b, rb = build_panel(expr, records, entities)
    assert np.array_equal(a.gene_values, b.gene_values)
    assert ra.summary() == rb.summary()


def test_evaluation_extract_shape():
    # 539 usable (cell line, drug) records across 7 drugs and 21 genes:
    # 77 cell lines x 7 drugs, with a gene panel of 21 genes
    rng = np.random.default_rng(42)
    cells = [f"cl{i:02d}" for i in range(77)]
    expr = expr_matrix(
        [(str(g), f"G{g}", tuple(rng.uniform(0, 100, 77))) for g in range(1, 22)], cells
    )
    records = []
    for d in range(7):
        for c in cells:
            records.append(SensitivityRecord(c, f"drug{d}", str(900 + d), float(rng.uniform(0, 5))))
    assert len(records) == 539
    panel, _ = build_panel(expr, records, linked_entities(expr, records))
    assert panel.n_cell_lines == 77
    assert len(panel.gene_ids) == 21
    assert len(panel.drug_ids) == 7
    assert int(panel.drug_mask.sum()) == 539
