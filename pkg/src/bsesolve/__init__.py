"""Structured iterative eigensolvers for J-symmetric block eigenproblems.

The package is organized around the pipeline:

problem    -- instance data model, synthesizer, BSEP1 container
lowrank    -- truncated SVD and the diagonal-plus-low-rank operator algebra
sherman    -- precomputed structured inverses (Woodbury + Schur complement)
eigensolve -- shift-invert Krylov solvers and a dense oracle
redbasis   -- reduced-block screened interaction, Galerkin reduction, bounds
tt         -- tensor-train / quantized-TT kernels (vectors, operators, blocks)
dmrg       -- block-TT alternating eigensolver on the quantized operator
cli        -- command-line front end and benchmark harness
"""

from ._kernels import USING_NUMBA
from .problem import (
    EnergyDiagonal,
    ProblemInstance,
    energy_diagonal,
    load,
    save,
    synthesize,
)
from .lowrank import (
    AuxAssembly,
    BlockJSymmetric,
    DiagPlusLowRank,
    LowRankMatrix,
    assemble_aux,
    truncated_svd,
)
from .sherman import (
    BlockDiagEnergyInverse,
    BseInverse,
    TdaInverse,
    apply_bse,
    apply_tda,
    precompute_bse,
    precompute_reduced_bse,
    precompute_reduced_tda,
    precompute_tda,
)
from .eigensolve import (
    EigenResult,
    dense_eig_oracle,
    forward_tda,
    positive_branch,
    shift_invert_bse,
    shift_invert_tda,
)

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA",
    "EnergyDiagonal",
    "ProblemInstance",
    "energy_diagonal",
    "load",
    "save",
    "synthesize",
    "AuxAssembly",
    "BlockJSymmetric",
    "DiagPlusLowRank",
    "LowRankMatrix",
    "assemble_aux",
    "truncated_svd",
    "BlockDiagEnergyInverse",
    "BseInverse",
    "TdaInverse",
    "apply_bse",
    "apply_tda",
    "precompute_bse",
    "precompute_reduced_bse",
    "precompute_reduced_tda",
    "precompute_tda",
    "EigenResult",
    "dense_eig_oracle",
    "forward_tda",
    "positive_branch",
    "shift_invert_bse",
    "shift_invert_tda",
    "__version__",
]
