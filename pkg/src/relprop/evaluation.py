"""Cell-line splits, binary accuracy reports and the baseline comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baseline import logreg_predict, logreg_train
from .errors import EmptyIntersection, TooFewCellLines
from .validation import check_unit_interval
from .estimator import PredictionSet
from .panel import CellLinePanel
from .parsers import _fmt


@dataclass
class EvalReport:
    method: str
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    n_test: int
    seed: Optional[int] = None

    def __post_init__(self):
        if self.tp + self.fp + self.fn + self.tn != self.n_test:
            raise ValueError("confusion counts must sum to n_test")

    @classmethod
    def from_confusion(cls, method: str, tp: int, fp: int, fn: int, tn: int,
                       seed: Optional[int] = None) -> "EvalReport":
        n = tp + fp + fn + tn
        return cls(method=method, accuracy=(tp + tn) / n, tp=tp, fp=fp, fn=fn, tn=tn,
                   n_test=n, seed=seed)

    def tsv_row(self) -> str:
        seed = "" if self.seed is None else str(self.seed)
        return "\t".join(
            [self.method, _fmt(self.accuracy), str(self.tp), str(self.fp),
             str(self.fn), str(self.tn), str(self.n_test), seed]
        )

    def summary(self) -> str:
        return (
            f"{self.method}: accuracy={self.accuracy:.4f} "
            f"(tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn} n={self.n_test})"
        )


EVAL_TSV_HEADER = "method\taccuracy\ttp\tfp\tfn\ttn\tn\tseed"


def split_cell_lines(
    panel: CellLinePanel, test_fraction: float, seed: int
) -> tuple[CellLinePanel, CellLinePanel]:
    """Partition a panel by cell line; no line ever appears on both sides.

    The test size is ``round-half-up(n * test_fraction)`` clamped so both
    sides stay nonempty. Deterministic for a given seed.
    """
    check_unit_interval("test_fraction", test_fraction, open_interval=True)
    C = panel.n_cell_lines
    if C < 2:
        raise TooFewCellLines(f"need at least 2 cell lines to split, have {C}")
    n_test = int(np.floor(C * test_fraction + 0.5))
    n_test = min(max(n_test, 1), C - 1)
    rng = np.random.default_rng(seed)
    order = sorted(range(C), key=lambda i: panel.cell_lines[i])
    perm = rng.permutation(np.array(order))
    test_rows = sorted(int(i) for i in perm[:n_test])
    train_rows = sorted(int(i) for i in perm[n_test:])
    return panel.subset(train_rows), panel.subset(test_rows)


def evaluate(predictions: PredictionSet, panel: CellLinePanel, method: str = "relprop",
             seed: Optional[int] = None) -> EvalReport:
    """Binary accuracy of prediction calls against the panel's drug labels.

    Only (cell line, drug) cells present on both sides and unmasked in the
    panel are scored; an empty intersection raises.
    """
    bykey = predictions.by_key()
    cell_row = {name: i for i, name in enumerate(panel.cell_lines)}
    drug_col = {int(u): j for j, u in enumerate(panel.drug_ids)}
    tp = fp = fn = tn = 0
    for (cell, uid), pred in sorted(bykey.items()):
        i = cell_row.get(cell)
        j = drug_col.get(uid)
        if i is None or j is None or not panel.drug_mask[i, j]:
            continue
        truth = int(panel.drug_labels[i, j])
        if pred.call == 1 and truth == 1:
            tp += 1
        elif pred.call == 1 and truth == 0:
            fp += 1
        elif pred.call == 0 and truth == 1:
            fn += 1
        else:
            tn += 1
    if tp + fp + fn + tn == 0:
        raise EmptyIntersection("no prediction matches an unmasked panel cell")
    return EvalReport.from_confusion(method, tp, fp, fn, tn, seed=seed)


def _gene_features(panel: CellLinePanel) -> np.ndarray:
    # Missing cells are filled with the scale midpoint; the model side keeps
    # them masked, but a flat feature matrix needs a value everywhere.
    features = np.where(panel.gene_mask, panel.gene_values, 0.5)
    return features


def baseline_evaluate(
    train_panel: CellLinePanel,
    test_panel: CellLinePanel,
    l1_strength: float = 0.01,
    max_iters: int = 10000,
    seed: Optional[int] = None,
) -> EvalReport:
    """Per-drug L1 logistic regression on gene features, pooled accuracy.

    One classifier per drug is trained on the training panel's labelled cells
    and scored on the test panel's; drugs whose training labels are all one
    class fall back to that constant call.
    """
    Xtr = _gene_features(train_panel)
    Xte = _gene_features(test_panel)
    tp = fp = fn = tn = 0
    for j in range(len(train_panel.drug_ids)):
        rows_tr = train_panel.drug_mask[:, j]
        rows_te = test_panel.drug_mask[:, j]
        if not rows_tr.any() or not rows_te.any():
            continue
        y_tr = train_panel.drug_labels[rows_tr, j].astype(float)
        y_te = test_panel.drug_labels[rows_te, j]
        if np.unique(y_tr).size < 2:
            calls = np.full(int(rows_te.sum()), int(y_tr[0]), dtype=np.int8)
        else:
            fit = logreg_train(Xtr[rows_tr], y_tr, l1_strength, max_iters=max_iters)
            calls, _ = logreg_predict(fit, Xte[rows_te])
        for call, truth in zip(calls, y_te):
            if call == 1 and truth == 1:
                tp += 1
            elif call == 1 and truth == 0:
                fp += 1
            elif call == 0 and truth == 1:
                fn += 1
            else:
                tn += 1
    if tp + fp + fn + tn == 0:
        raise EmptyIntersection("no drug has labelled cells on both sides of the split")
    return EvalReport.from_confusion("logreg-l1", tp, fp, fn, tn, seed=seed)
