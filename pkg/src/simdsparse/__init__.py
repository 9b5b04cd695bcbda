"""SIMD-width-aware structured sparsity for small autoregressive decoders.

Group regularizers and gradual magnitude pruning keep weight groups
aligned to the SIMD register width, so the pruned matrices run through a
block-sparse gemv that vectorizes cleanly; a toy subband GRU decoder ties
the pieces together end to end.
"""

from .bench import bench_gemv, bench_rtf
from .checkpoint import (heatmap_image, load_checkpoint, read_pgm,
                         save_checkpoint, write_matrix_csv, write_pgm,
                         write_trace_csv)
from .data import (SignalTaskConfig, build_decoder_inputs,
                   global_gaussian_nll, make_dataset)
from .estimator import SparseGRUDecoder
from .inference import generate, generate_reference
from .linalg import gemv, saxpy
from .model import (backward_window, build_chol, decoder_step, forward_heads,
                    forward_window, gaussian_nll, gru_cell, init_params,
                    mean_nll, sample_head)
from .pruning import (PruneSchedule, ScheduledPruner, apply_mask,
                      compute_group_mask, group_norms)
from .regularizers import (BlockGroupLasso, ColumnGroupLasso, Lasso,
                           combined_objective, regularizer_from_name)
from .sparse import BlockSparseMatrix, ScalarSparseMatrix
from .trainer import (TrainConfig, TrainResult, TrainingDiverged,
                      evaluate_nll, train)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "bench_gemv",
    "bench_rtf",
    "heatmap_image",
    "load_checkpoint",
    "read_pgm",
    "save_checkpoint",
    "write_matrix_csv",
    "write_pgm",
    "write_trace_csv",
    "SignalTaskConfig",
    "build_decoder_inputs",
    "global_gaussian_nll",
    "make_dataset",
    "SparseGRUDecoder",
    "generate",
    "generate_reference",
    "gemv",
    "saxpy",
    "backward_window",
    "build_chol",
    "decoder_step",
    "forward_heads",
    "forward_window",
    "gaussian_nll",
    "gru_cell",
    "init_params",
    "mean_nll",
    "sample_head",
    "PruneSchedule",
    "ScheduledPruner",
    "apply_mask",
    "compute_group_mask",
    "group_norms",
    "BlockGroupLasso",
    "ColumnGroupLasso",
    "Lasso",
    "combined_objective",
    "regularizer_from_name",
    "BlockSparseMatrix",
    "ScalarSparseMatrix",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "evaluate_nll",
    "train",
]
