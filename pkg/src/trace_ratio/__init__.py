from .baselines import dinkelbach_ratio, gep_projections
from .evaluation import (
    EvalResult,
    SplitSpec,
    evaluate_model,
    knn1_classify,
    project_and_fuse,
    stratified_split,
)
from .linalg import (
    polar_orthogonal_factor,
    sin_theta_distance,
    sym_eig_topk,
    trace_norm,
)
from .multiview import (
    BlockProblem,
    MultiViewDataset,
    MultiViewModel,
    MultiViewModelSpec,
    alternate_solve,
    assemble_subproblem,
    build_block_problem,
    get_models,
)
from .problem import Certificate, TraceRatioProblem
from .scf import SolveReport, SolverOptions, SolveStatus, scf_solve
from .synthetic import SynthSpec, generate
from .util import NormMode, TraceRatioError, UpdateMode

__all__ = [
    "TraceRatioProblem",
    "Certificate",
    "SolverOptions",
    "SolveReport",
    "SolveStatus",
    "scf_solve",
    "SynthSpec",
    "generate",
    "MultiViewDataset",
    "MultiViewModel",
    "MultiViewModelSpec",
    "BlockProblem",
    "build_block_problem",
    "assemble_subproblem",
    "alternate_solve",
    "get_models",
    "SplitSpec",
    "EvalResult",
    "stratified_split",
    "project_and_fuse",
    "knn1_classify",
    "evaluate_model",
    "dinkelbach_ratio",
    "gep_projections",
    "sym_eig_topk",
    "polar_orthogonal_factor",
    "trace_norm",
    "sin_theta_distance",
    "NormMode",
    "UpdateMode",
    "TraceRatioError",
]
