"""Incomplete multi-view learning by low-rank graph tensor completion."""

from .evaluation import ClusteringReport, accuracy, evaluate_embedding, kmeans, nmi, purity
from .graphs import MultiViewDataset, build_graph_tensor, build_knn_graph, laplacian
from .prox import GstParams, gst_scalar, gst_threshold, matrix_wsp_prox, tensor_wsp_prox
from .solver import SolverConfig, SolverResult, run, transform_out_of_sample
from .tensor import SchattenSpec, TransformSpec, fold, mode3_transform, unfold, wsp_norm

__version__ = "0.1.0"

__all__ = [
    "ClusteringReport",
    "GstParams",
    "MultiViewDataset",
    "SchattenSpec",
    "SolverConfig",
    "SolverResult",
    "TransformSpec",
    "accuracy",
    "build_graph_tensor",
    "build_knn_graph",
    "evaluate_embedding",
    "fold",
    "gst_scalar",
    "gst_threshold",
    "kmeans",
    "laplacian",
    "matrix_wsp_prox",
    "mode3_transform",
    "nmi",
    "purity",
    "run",
    "tensor_wsp_prox",
    "transform_out_of_sample",
    "unfold",
    "wsp_norm",
]
