"""Graph neural machines: message passing on a near-complete directed graph.

A model is a node set split into input, hidden, bias, and output ranges plus
one adjacency matrix per step.  Running the model is K rounds of matrix-vector
multiplication with a ReLU between rounds; the bias node is pinned to 1 so
affine maps fit in the same picture.  Classic feed-forward networks embed
exactly, which this package exercises both as a correctness oracle and as a
baseline in the shipped experiments.

Hot numeric loops live in a small compiled extension when it is available and
in a pure-Python twin otherwise; both produce bit-identical floats, so every
result is reproducible regardless of which one loaded.
"""

from ._kernels import active_backend, available_backends, use as use_backend
from .errors import (
    ConfigError,
    DataError,
    GnmError,
    ModelFileError,
    NumericError,
    ShapeError,
    TrainingDiverged,
)
from .graph import (
    GnmGraph,
    MlpGraph,
    NodePartition,
    build_gnm_graph,
    build_mlp_graph,
    topological_layers,
)
from .linalg import Matrix, Rng, Vector, derive_seed, matmul, matvec, relu, rng_uniform
from .metrics import EvalReport, accuracy, macro_f1, mse, r2
from .model import (
    AdjacencyTensor,
    ForwardTape,
    GnmModel,
    GradientSet,
    MlpModel,
    MlpSpec,
    annotate_input,
    embed_mlp,
    gnm_backward,
    gnm_forward,
    gnm_param_count,
    gnn_mlp_forward,
    init_gnm,
    init_mlp,
    mlp_forward,
    mlp_param_count,
    transcribe_mlp_weights,
)
from .modelfile import load_model, save_model
from .data import Dataset, Standardizer, kfold, load_csv, make_moons, make_xor_gaussians
from .sparsity import SparseMatrix, StructureReport, extract_structure, prune, sparse_forward, to_sparse
from .train import (Splits, TrainConfig, TrainHistory, cross_entropy,
                    l1_penalty, mse_loss, train)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyTensor",
    "ConfigError",
    "DataError",
    "Dataset",
    "EvalReport",
    "ForwardTape",
    "GnmError",
    "GnmGraph",
    "GnmModel",
    "GradientSet",
    "Matrix",
    "MlpGraph",
    "MlpModel",
    "MlpSpec",
    "ModelFileError",
    "NodePartition",
    "NumericError",
    "Rng",
    "ShapeError",
    "SparseMatrix",
    "Standardizer",
    "StructureReport",
    "Splits",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "Vector",
    "accuracy",
    "active_backend",
    "annotate_input",
    "available_backends",
    "build_gnm_graph",
    "build_mlp_graph",
    "cross_entropy",
    "derive_seed",
    "embed_mlp",
    "extract_structure",
    "gnm_backward",
    "gnm_forward",
    "gnm_param_count",
    "gnn_mlp_forward",
    "init_gnm",
    "init_mlp",
    "kfold",
    "l1_penalty",
    "load_csv",
    "load_model",
    "macro_f1",
    "make_moons",
    "make_xor_gaussians",
    "matmul",
    "matvec",
    "mlp_forward",
    "mlp_param_count",
    "mse",
    "mse_loss",
    "prune",
    "r2",
    "relu",
    "rng_uniform",
    "save_model",
    "sparse_forward",
    "to_sparse",
    "topological_layers",
    "train",
    "transcribe_mlp_weights",
    "use_backend",
    "__version__",
]
