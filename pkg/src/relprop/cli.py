"""Command-line front end wiring the full pipeline.

Subcommands: ``synth`` (write synthetic input files), ``build`` (ingest and
link), ``subgraph`` (k-hop extraction and pruning), ``stats`` (relation
histogram), ``train``, ``predict`` and ``eval``. Every run is deterministic
given its inputs and ``--seed``: no wall-clock or OS entropy reaches any
output file, and repeated runs are byte-identical.

Exit codes: 0 success, 2 input error, 3 degenerate graph, 4 divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .errors import (
    DegenerateGraph,
    Diverged,
    NoObservables,
    NoOverlap,
    ParseError,
    RelpropError,
)
from .estimator import TrainingConfig, explain, predict, train
from .evaluation import EVAL_TSV_HEADER, baseline_evaluate, evaluate, split_cell_lines
from .graph import NetworkSkeleton, build_skeleton, export_dot, histogram_tsv, khop_subgraph, prune, relation_histogram
from .linking import link_entities
from .panel import CellLinePanel, build_panel
from .parsers import (
    expression_mentions,
    parse_expression,
    parse_interactions,
    parse_metapatterns,
    parse_sensitivity,
    sensitivity_mentions,
)
from .propagation import load_params, save_params
from .synth import SynthConfig, generate, write_ingest_files

_CONFIG_CASTS = {
    "k": int,
    "lr_gene": float,
    "lr_chem": float,
    "lr_edge": float,
    "beta": float,
    "epochs": int,
    "inner_iters": int,
    "seed": int,
    "predict_threshold": float,
    "shuffle_cell_lines": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "inner_loss": str,
    "test_fraction": float,
    "l1_strength": float,
    "max_iters": int,
}


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` text, UTF-8, ``#`` comments."""
    out: dict[str, str] = {}
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(path, no, "expected key = value")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(args, file_cfg: dict[str, str], key: str, default):
    """Flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return _CONFIG_CASTS[key](file_cfg[key])
    return default


def _training_config(args) -> TrainingConfig:
    file_cfg = parse_config_file(args.config) if getattr(args, "config", None) else {}
    defaults = TrainingConfig()
    kwargs = {
        f.name: _resolve(args, file_cfg, f.name, getattr(defaults, f.name))
        for f in fields(TrainingConfig)
    }
    config = TrainingConfig(**kwargs)
    config.validate()
    return config


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--k", type=int)
    p.add_argument("--lr-gene", dest="lr_gene", type=float)
    p.add_argument("--lr-chem", dest="lr_chem", type=float)
    p.add_argument("--lr-edge", dest="lr_edge", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--inner-iters", dest="inner_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--predict-threshold", dest="predict_threshold", type=float)
    p.add_argument("--shuffle-cell-lines", dest="shuffle_cell_lines",
                   action="store_const", const=True)
    p.add_argument("--inner-loss", dest="inner_loss", choices=("full", "gene"))
    p.add_argument("--threads", type=int, default=1,
                   help="cap on episode parallelism (results are identical for any value)")


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_genes=args.genes,
        n_drugs=args.drugs,
        edge_prob=args.edge_prob,
        gene_edge_prob=args.gene_edge_prob,
        k=args.k if args.k is not None else 4,
        n_cell_lines=args.cells,
        noise_sigma=args.sigma,
        seed=args.seed if args.seed is not None else 42,
    )
    result = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_ingest_files(result, out)
    result.skeleton.save(out / "truth_skeleton.graph")
    result.panel.save(out / "truth_panel.tsv")
    print(result.skeleton.stats_line())
    print(f"wrote {' '.join(str(p) for p in paths.values())}")
    return 0


def cmd_build(args) -> int:
    patterns = parse_interactions(args.interactions)
    if args.metapatterns:
        patterns = patterns + parse_metapatterns(args.metapatterns)
    expr = parse_expression(args.expr)
    sens = parse_sensitivity(args.sens)
    link = link_entities(patterns, expression_mentions(expr), sensitivity_mentions(sens))
    skeleton, self_pairs = build_skeleton(link.entities, link.patterns)
    panel, panel_report = build_panel(expr, sens, link.entities)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skeleton.save(out / "skeleton.graph")
    panel.save(out / "panel.tsv")
    (out / "link_report.txt").write_text(link.report.summary(), encoding="utf-8")
    (out / "link_conflicts.tsv").write_text(link.report.conflicts_tsv(), encoding="utf-8")
    (out / "panel_report.txt").write_text(panel_report.summary(), encoding="utf-8")
    print(f"{skeleton.stats_line()} self_pairs_dropped={self_pairs}")
    print(f"panel: cells={panel.n_cell_lines} genes={len(panel.gene_ids)} drugs={len(panel.drug_ids)} "
          f"missing_fraction={panel.missing_fraction():.4f}")
    return 0


def cmd_subgraph(args) -> int:
    skeleton = NetworkSkeleton.load(getattr(args, "in"))
    if args.k not in (1, 2) and not args.allow_any_k:
        print("error: --k must be 1 or 2 (pass --allow-any-k to override)", file=sys.stderr)
        return 2
    before = skeleton.stats_line()
    sub, _ = khop_subgraph(skeleton, args.k)
    if args.prune:
        sub = prune(sub)
    sub.save(args.out)
    if args.dot:
        export_dot(sub, args.dot)
    print(f"before: {before}")
    print(f"after:  {sub.stats_line()}")
    if sub.n_entities == 0:
        print("warning: subgraph is empty after pruning")
    return 0


def cmd_stats(args) -> int:
    skeleton = NetworkSkeleton.load(args.graph)
    text = histogram_tsv(relation_histogram(skeleton))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    skeleton = NetworkSkeleton.load(args.graph)
    panel = CellLinePanel.load(args.panel)
    config = _training_config(args)
    report = train(skeleton, panel, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(report.params, skeleton, out / "model.params")
    (out / "loss_trajectory.tsv").write_text(report.trajectory_tsv(), encoding="utf-8")
    summary = "\n".join(
        config.echo_lines()
        + [
            f"cell_lines\t{report.n_cell_lines}",
            f"epochs_run\t{len(report.trajectory)}",
            f"final_l_gene\t{report.trajectory[-1].l_gene!r}",
            f"final_l_chem\t{report.trajectory[-1].l_chem!r}",
            f"final_total\t{report.trajectory[-1].total!r}",
        ]
    ) + "\n"
    (out / "train_report.txt").write_text(summary, encoding="utf-8")
    print(f"trained {config.epochs} epochs on {report.n_cell_lines} cell lines "
          f"in {report.wall_time:.2f}s; final loss {report.trajectory[-1].total:.6f}")
    return 0


def cmd_predict(args) -> int:
    skeleton = NetworkSkeleton.load(args.graph)
    panel = CellLinePanel.load(args.panel)
    params = load_params(args.params)
    config = _training_config(args)
    drugs = None
    if args.drugs:
        drugs = [int(tok) for tok in args.drugs.split(",") if tok]
    predictions = predict(skeleton, params, panel, config, drugs=drugs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    predictions.save(out / "predictions.tsv")
    print(f"scored {len(predictions.predictions)} (cell line, drug) pairs")
    return 0


def cmd_explain(args) -> int:
    skeleton = NetworkSkeleton.load(args.graph)
    panel = CellLinePanel.load(args.panel)
    params = load_params(args.params)
    config = _training_config(args)
    explanation = explain(skeleton, params, panel, args.cell_line, args.drug, config)
    text = explanation.tsv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"score for ({args.cell_line}, {explanation.drug.canonical_name}): "
          f"{explanation.score:.6f}")
    return 0


def cmd_eval(args) -> int:
    skeleton = NetworkSkeleton.load(args.graph)
    panel = CellLinePanel.load(args.panel)
    config = _training_config(args)
    file_cfg = parse_config_file(args.config) if args.config else {}
    test_fraction = _resolve(args, file_cfg, "test_fraction", 0.2)
    l1_strength = _resolve(args, file_cfg, "l1_strength", 0.01)
    max_iters = _resolve(args, file_cfg, "max_iters", 10000)

    train_panel, test_panel = split_cell_lines(panel, test_fraction, config.seed)
    report = train(skeleton, train_panel, config)
    predictions = predict(skeleton, report.params, test_panel, config)
    model_eval = evaluate(predictions, test_panel, method="relprop", seed=config.seed)
    base_eval = baseline_evaluate(train_panel, test_panel, l1_strength=l1_strength,
                                  max_iters=max_iters, seed=config.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(report.params, skeleton, out / "model.params")
    (out / "loss_trajectory.tsv").write_text(report.trajectory_tsv(), encoding="utf-8")
    predictions.save(out / "predictions.tsv")
    lines = config.echo_lines()
    lines.append(f"# test_fraction = {test_fraction}")
    lines.append(f"# l1_strength = {l1_strength}")
    lines.append(EVAL_TSV_HEADER)
    lines.append(model_eval.tsv_row())
    lines.append(base_eval.tsv_row())
    (out / "eval.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "eval_report.txt").write_text(
        model_eval.summary() + "\n" + base_eval.summary() + "\n", encoding="utf-8"
    )
    print(model_eval.summary())
    print(base_eval.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relprop",
        description="drug-gene network propagation: ingest, build, train, predict, evaluate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic input files with a planted model")
    p.add_argument("--genes", type=int, default=21)
    p.add_argument("--drugs", type=int, default=7)
    p.add_argument("--cells", type=int, default=40)
    p.add_argument("--edge-prob", dest="edge_prob", type=float, default=0.02)
    p.add_argument("--gene-edge-prob", dest="gene_edge_prob", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="parse inputs, link entities, build skeleton and panel")
    p.add_argument("--interactions", required=True)
    p.add_argument("--metapatterns")
    p.add_argument("--expr", required=True)
    p.add_argument("--sens", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("subgraph", help="k-hop neighborhood of observables, optional prune")
    p.add_argument("--in", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--allow-any-k", dest="allow_any_k", action="store_true")
    p.add_argument("--prune", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--dot")
    p.set_defaults(func=cmd_subgraph)

    p = sub.add_parser("stats", help="relation label histogram")
    p.add_argument("--graph", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="fit relation matrices and readout")
    p.add_argument("--graph", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score drugs per cell line with trained parameters")
    p.add_argument("--graph", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--drugs", help="comma-separated entity uids (default: all panel drugs)")
    p.add_argument("--out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="rank a drug node's neighbor contributions for one cell line")
    p.add_argument("--graph", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--cell-line", dest="cell_line", required=True)
    p.add_argument("--drug", type=int, required=True, help="drug entity uid")
    p.add_argument("--out")
    _add_training_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="split, train, predict and compare against the baseline")
    p.add_argument("--graph", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--l1-strength", dest="l1_strength", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    _add_training_flags(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NoOverlap as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (NoObservables, DegenerateGraph) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except Diverged as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (RelpropError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
