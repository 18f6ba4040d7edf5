"""Drug response prediction by propagating relation matrices over a
text-enhanced drug-gene interaction network."""

from .baseline import L1LogisticRegression, logreg_predict, logreg_train
from .errors import RelpropError
from .estimator import (
    Explanation,
    NetworkPropagationModel,
    PredictionSet,
    TrainingConfig,
    TrainReport,
    explain,
    predict,
    train,
)
from .evaluation import EvalReport, baseline_evaluate, evaluate, split_cell_lines
from .graph import (
    Edge,
    NetworkSkeleton,
    build_skeleton,
    export_dot,
    khop_subgraph,
    prune,
    relation_histogram,
)
from .linking import (
    Entity,
    Kind,
    LinkedPattern,
    Mention,
    Provenance,
    RawPattern,
    Scheme,
    link_entities,
    normalize_name,
)
from .panel import CellLinePanel, build_panel
from .parsers import (
    ExpressionMatrix,
    SensitivityRecord,
    parse_expression,
    parse_interactions,
    parse_metapatterns,
    parse_sensitivity,
)
from .propagation import (
    LossBreakdown,
    ModelParams,
    NodeObservations,
    finite_diff_grad,
    grad,
    init_params,
    load_params,
    loss,
    propagate,
    readout,
    save_params,
)
from .synth import SynthConfig, SynthResult, generate

__version__ = "0.1.0"

__all__ = [
    "CellLinePanel",
    "Edge",
    "Entity",
    "EvalReport",
    "Explanation",
    "ExpressionMatrix",
    "Kind",
    "L1LogisticRegression",
    "LinkedPattern",
    "LossBreakdown",
    "Mention",
    "ModelParams",
    "NetworkPropagationModel",
    "NetworkSkeleton",
    "NodeObservations",
    "PredictionSet",
    "Provenance",
    "RawPattern",
    "RelpropError",
    "Scheme",
    "SensitivityRecord",
    "SynthConfig",
    "SynthResult",
    "TrainReport",
    "TrainingConfig",
    "baseline_evaluate",
    "build_panel",
    "build_skeleton",
    "evaluate",
    "explain",
    "export_dot",
    "finite_diff_grad",
    "generate",
    "grad",
    "init_params",
    "khop_subgraph",
    "link_entities",
    "load_params",
    "logreg_predict",
    "logreg_train",
    "loss",
    "normalize_name",
    "parse_expression",
    "parse_interactions",
    "parse_metapatterns",
    "parse_sensitivity",
    "predict",
    "propagate",
    "prune",
    "readout",
    "relation_histogram",
    "save_params",
    "split_cell_lines",
    "train",
]
