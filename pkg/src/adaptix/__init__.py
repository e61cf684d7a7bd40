"""Thread-parallel anisotropic triangle-mesh adaptation.

Four colour-batched adaptive kernels (coarsen, refine, swap, smooth) run
over independent sets with deferred adjacency commits, atomic-capture
worklists and a work-stealing loop scheduler; a CLI harness benchmarks
the pipeline on a synthetic moving-front field.
"""

from .bench import BenchConfig, BenchReport, edge_band_fraction, emit_report, run_benchmark
from .colouring import Colouring, colour_graph, verify_colouring
from .errors import (AdaptationError, ColouringError, InvertedElementError,
                     MeshStructureError)
from .kernels import (AdaptReport, KernelOutcome, KernelParams, adapt, coarsen,
                      collapse_edge, refine, smooth, swap)
from .mesh import (AdjacencyEdit, ConformityReport, Mesh, build_adjacency,
                   commit_edits, structured_square_mesh, verify)
from .metric import (MetricField, MetricTensor, SyntheticField, eval_psi,
                     hessian_to_metric, interpolate_metric, metric_edge_length,
                     recover_hessian)
from .quality import min_patch_quality, quality_histogram, triangle_quality
from .runtime import (DeferredLedger, EditBuffers, SharedWorklist, StealScheduler,
                      ThreadTeam, parallel_for_stealing)

__version__ = "0.1.0"

__all__ = [
    "AdaptReport", "AdaptationError", "AdjacencyEdit", "BenchConfig", "BenchReport",
    "Colouring", "ColouringError", "ConformityReport", "DeferredLedger",
    "EditBuffers", "InvertedElementError", "KernelOutcome", "KernelParams", "Mesh",
    "MeshStructureError", "MetricField", "MetricTensor", "SharedWorklist",
    "StealScheduler", "SyntheticField", "ThreadTeam", "adapt", "build_adjacency",
    "coarsen", "collapse_edge", "colour_graph", "commit_edits", "edge_band_fraction",
    "emit_report", "eval_psi", "hessian_to_metric", "interpolate_metric",
    "metric_edge_length", "min_patch_quality", "parallel_for_stealing",
    "quality_histogram", "recover_hessian", "refine", "run_benchmark", "smooth",
    "structured_square_mesh", "swap", "triangle_quality", "verify",
    "verify_colouring",
]
