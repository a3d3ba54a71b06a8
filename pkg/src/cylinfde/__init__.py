"""Coefficient-space reduction of functional differential equations with a
PINN solver: orthonormal bases, the reduced PDE problems, a hand-rolled
network engine, the training recipe, and evaluation metrics."""

import os

# Thread-pool tuning: the BLAS pool and the numba OpenMP pool share the same
# cores in the training loop; by default each pool's idle workers spin-wait
# and steal cycles from the active pool.  These must be set before
# numpy/numba initialize their threading layers, so importing this package
# before numpy is preferable (the CLI guarantees it).
os.environ.setdefault("OMP_WAIT_POLICY", "passive")
os.environ.setdefault("GOMP_SPINCOUNT", "0")
os.environ.setdefault("OPENBLAS_THREAD_TIMEOUT", "4")
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

if os.environ.get("CYLIN_FDE_THREADS"):
    os.environ.setdefault("OMP_NUM_THREADS", os.environ["CYLIN_FDE_THREADS"])
    os.environ.setdefault("OPENBLAS_NUM_THREADS", os.environ["CYLIN_FDE_THREADS"])
    os.environ.setdefault("NUMBA_NUM_THREADS", os.environ["CYLIN_FDE_THREADS"])

from .basis import (  # noqa: E402
    BasisFamily,
    BasisSpec,
    CoefficientVector,
    Quadrature,
    eval_basis,
    eval_basis_second_derivative,
    fourier_spec,
    gauss_legendre,
    legendre_spec,
    project,
    reconstruct,
)
from .cylindrical import (  # noqa: E402
    FunctionalOracle,
    approx_functional,
    convergence_study,
    reconstruct_functional_derivative,
)
from .problems import (  # noqa: E402
    BheConfig,
    CovarianceKind,
    FteConfig,
    FteVariant,
    PdeProblem,
    analytic_partials,
    bhe_operator_matrix,
    bhe_problem,
    fte_problem,
)
from .network import (  # noqa: E402
    Mlp,
    forward,
    input_gradient,
    load_checkpoint,
    loss_and_weight_gradient,
    save_checkpoint,
)
from .training import (  # noqa: E402
    LossKind,
    SamplerConfig,
    ScheduleConfig,
    TrainConfig,
    TrainingDiverged,
    adamw_step,
    decayed_ranges,
    latin_hypercube,
    loss_terms,
    lr_at,
    softmax_reweight,
    train,
)
from .evaluation import (  # noqa: E402
    ErrorReport,
    cross_degree_eval,
    derivative_error_at_zero,
    l1_errors,
    second_derivative_fd,
)

__version__ = "0.1.0"
