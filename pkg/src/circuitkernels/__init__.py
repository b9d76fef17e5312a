"""Exact kernel expectations over circuit-represented distributions.

Core pieces: discrete probability circuits, kernel circuits over paired
inputs, an exact expectation recursion for compatible pairs, Stein kernels
with collapsed sampling, simplex-weighted importance estimators, and kernel
regressors evaluated under missing features.
"""

from ._core import backend_name
from ._util import enumerate_states, n_states
from .circuits import (
    Circuit,
    InputUnit,
    ProductUnit,
    SumUnit,
    condition,
    evaluate,
    evaluate_batch,
    make_circuit,
    marginalize,
    mixture,
    partition_function,
    point_mass_circuit,
    sample_circuit,
    scale_root,
)
from .compilation import compile_from_factors
from .errors import (
    CircuitError,
    DegenerateEvidenceError,
    FormatError,
    IncompatibleError,
    InvalidAssignmentError,
    PositivityError,
    ResourceBoundError,
    StructuralError,
)
from .expectation import (
    brute_force_expected_kernel,
    expected_kernel,
    mmd2,
    singly_expected_kernel,
)
from .importance import (
    ProposalConfig,
    as_collapsed,
    bbis,
    cbbis,
    estimate_marginals,
    gibbs_propose,
    kkt_residual,
    project_simplex,
    self_normalized_is_weights,
    solve_simplex_qp,
    weight_collapsed,
)
from .kernels import (
    KernelCircuit,
    KernelLeaf,
    build_hamming_kc,
    build_kronecker_kc,
    build_rbf_kc,
    check_kernel_compatible,
    evaluate_kernel,
    kernel_matrix,
    make_kernel_circuit,
    permute_kernel,
    project,
    verify_pd,
)
from .models import (
    FactorModel,
    build_ising,
    exact_marginals,
    factor_model_from_dict,
    hellinger_avg,
    load_bayes_net,
)
from .stein import (
    CollapsedSample,
    brute_force_kdsd,
    conditional_stein_kernel,
    gram_matrix,
    gram_matrix_collapsed,
    negate,
    score,
    stein_kernel,
)
from .structure import (
    StructureReport,
    check_compatible,
    check_structural,
    extract_vtree,
    is_deterministic,
    is_structured,
)
from .svr import (
    MissingnessMask,
    SvrModel,
    expected_prediction,
    fit_kernel_regressor,
    impute_map,
    impute_median,
    mcar_mask,
    svr_predict,
)
from .vtree import Vtree, balanced_vtree, random_vtree, right_linear_vtree

__version__ = "0.1.0"

__all__ = [
    "enumerate_states",
    "n_states",
    "Circuit",
    "InputUnit",
    "SumUnit",
    "ProductUnit",
    "make_circuit",
    "evaluate",
    "evaluate_batch",
    "marginalize",
    "partition_function",
    "condition",
    "sample_circuit",
    "mixture",
    "point_mass_circuit",
    "scale_root",
    "Vtree",
    "right_linear_vtree",
    "balanced_vtree",
    "random_vtree",
    "StructureReport",
    "check_structural",
    "check_compatible",
    "extract_vtree",
    "is_structured",
    "is_deterministic",
    "KernelCircuit",
    "KernelLeaf",
    "make_kernel_circuit",
    "evaluate_kernel",
    "kernel_matrix",
    "project",
    "permute_kernel",
    "verify_pd",
    "check_kernel_compatible",
    "build_hamming_kc",
    "build_rbf_kc",
    "build_kronecker_kc",
    "expected_kernel",
    "singly_expected_kernel",
    "mmd2",
    "brute_force_expected_kernel",
    "negate",
    "score",
    "stein_kernel",
    "conditional_stein_kernel",
    "CollapsedSample",
    "gram_matrix",
    "gram_matrix_collapsed",
    "brute_force_kdsd",
    "project_simplex",
    "solve_simplex_qp",
    "kkt_residual",
    "bbis",
    "cbbis",
    "weight_collapsed",
    "ProposalConfig",
    "gibbs_propose",
    "as_collapsed",
    "estimate_marginals",
    "self_normalized_is_weights",
    "FactorModel",
    "build_ising",
    "exact_marginals",
    "factor_model_from_dict",
    "hellinger_avg",
    "load_bayes_net",
    "compile_from_factors",
    "SvrModel",
    "svr_predict",
    "fit_kernel_regressor",
    "MissingnessMask",
    "mcar_mask",
    "expected_prediction",
    "impute_median",
    "impute_map",
    "CircuitError",
    "FormatError",
    "InvalidAssignmentError",
    "StructuralError",
    "IncompatibleError",
    "DegenerateEvidenceError",
    "PositivityError",
    "ResourceBoundError",
    "backend_name",
    "__version__",
]
