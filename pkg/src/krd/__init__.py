"""GNN-to-MLP distillation with reliability-weighted neighborhood supervision.

Pipeline: pretrain a GCN teacher, score each node's knowledge by how
little its output entropy moves under feature noise, then train an MLP
student against labels, teacher outputs, and per-epoch samples of
reliable neighbor nodes acting as extra teachers.
"""

from krd.distill import (
    DistillConfig,
    DistillRun,
    glnn_baseline,
    loss_kd,
    loss_krd,
    loss_total,
    run_distillation,
)
from krd.graphs import (
    GraphBundle,
    SplitSpec,
    load_bundle,
    make_split,
    normalize_adjacency,
    save_bundle,
    synth_graph,
)
from krd.knowledge import ReliabilityProfile, dirichlet_energy, quantify_reliability
from krd.models import StudentModel, TeacherModel, TrainConfig, predict, train_teacher
from krd.report import RunMetrics, evaluate
from krd.rng import Rng
from krd.sampler import (
    AgreementHistogram,
    ProbabilityModel,
    SampledSupervision,
    build_agreement_histogram,
    eval_probability,
    fit_alpha,
    momentum_update,
    sample_supervision,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementHistogram",
    "DistillConfig",
    "DistillRun",
    "GraphBundle",
    "ProbabilityModel",
    "ReliabilityProfile",
    "Rng",
    "RunMetrics",
    "SampledSupervision",
    "SplitSpec",
    "StudentModel",
    "TeacherModel",
    "TrainConfig",
    "build_agreement_histogram",
    "dirichlet_energy",
    "eval_probability",
    "evaluate",
    "fit_alpha",
    "glnn_baseline",
    "load_bundle",
    "loss_kd",
    "loss_krd",
    "loss_total",
    "make_split",
    "momentum_update",
    "normalize_adjacency",
    "predict",
    "quantify_reliability",
    "run_distillation",
    "sample_supervision",
    "save_bundle",
    "synth_graph",
    "train_teacher",
]
