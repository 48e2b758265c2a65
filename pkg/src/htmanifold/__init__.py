"""Riemannian optimization on fixed-rank Hierarchical Tucker tensors.

The public surface is re-exported here; see the submodules for details:
``tensor_core`` (dense tensor algebra), ``dimension_tree``, ``ht_format``
(parameters, orthogonalization, gauge), ``riemannian`` (tangent space,
gradients, retraction), ``gauss_newton`` (Gramians, preconditioner,
regularizer), ``optimizer`` (SD / CG / GN solvers) and ``completion``.
"""

__version__ = "0.1.0"

from .completion import (
    CompletionProblem,
    SamplingSet,
    complement_snr,
    initial_guess,
    make_synthetic,
    random_guess,
    sample_fibers,
    sample_points,
    snr,
    snr_on,
    spectral_guess,
)
from .dimension_tree import DimensionTree, complete_tree, paired_tree, parse_tree
from .errors import *  # noqa: F401,F403
from .gauss_newton import (
    GramianSet,
    apply_hgn_inverse,
    dgramians_adjoint,
    dgramians_forward,
    gramians,
    hgn_forward,
    regularizer_gradient,
    regularizer_value,
)
from .ht_format import (
    HTParams,
    apply_gauge,
    eval_entries,
    expand,
    frames,
    make_ranks,
    orthogonality_residual,
    qr_orthogonalize,
    random_gauge,
    random_ht,
    sqrt_orthogonalize,
    truncate,
)
from .optimizer import IterateTrace, IterRecord, SolverConfig, line_search, solve
from .riemannian import (
    TangentVector,
    dphi,
    inner,
    objective_gradient_dense,
    objective_gradient_sparse,
    objective_sparse,
    project_horizontal,
    random_tangent,
    retract,
    riemannian_gradient_dense,
    transport,
    vertical_vector,
)
