"""Error metrics and post-training analyses.

L1 relative/absolute errors with a near-zero guard, functional-derivative
errors at the zero function, finite-difference second-order coefficient
Hessians with basis reconstruction, and cross-degree evaluation of a model
on lower-degree inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, basis_matrix
from .cylindrical import reconstruct_functional_derivative
from .network import Mlp, forward, input_gradient
from .problems import PdeProblem

REL_GUARD = 1e-12


@dataclass
class ErrorReport:
    mean_rel: float
    mean_abs: float
    n_points: int
    n_excluded: int
    per_point_abs: np.ndarray | None = None
    per_point_rel: np.ndarray | None = None  # NaN on excluded points


def l1_errors(pred, truth, guard: float = REL_GUARD, keep_details: bool = False) -> ErrorReport:
    """Mean absolute error over all points; mean relative error over the
    points with |truth| >= guard (the rest are excluded and counted)."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("empty error input")
    abs_err = np.abs(pred - truth)
    keep = np.abs(truth) >= guard
    rel = np.full_like(abs_err, np.nan)
    rel[keep] = abs_err[keep] / np.abs(truth)[keep]
    mean_rel = float(rel[keep].mean()) if keep.any() else float("nan")
    return ErrorReport(
        mean_rel=mean_rel,
        mean_abs=float(abs_err.mean()),
        n_points=int(pred.size),
        n_excluded=int((~keep).sum()),
        per_point_abs=abs_err if keep_details else None,
        per_point_rel=rel if keep_details else None,
    )


def derivative_error_at_zero(net: Mlp, problem: PdeProblem, t: float, x_grid,
                             keep_details: bool = False) -> ErrorReport:
    """Error of the first-order functional derivative at theta = 0.

    The model's coefficient gradient at a = 0 re-expands through the basis
    and is compared with the analytic derivative on the given spatial grid.
    """
    m = problem.dim
    point = np.zeros(m + 1)
    point[0] = t
    g = np.asarray(input_gradient(net.astype(np.float64), point), dtype=float)
    pred = reconstruct_functional_derivative(g[1:], problem.spec, x_grid)
    _, df_da = problem.partials(np.zeros(m), t)
    truth = reconstruct_functional_derivative(df_da[0], problem.spec, x_grid)
    return l1_errors(np.atleast_1d(pred), np.atleast_1d(truth), keep_details=keep_details)


def second_derivative_fd(net: Mlp, a, t: float, h: float = 1e-3) -> np.ndarray:
    """Coefficient Hessian of the network via central differences of the
    input gradient, symmetrized; float64 inference mode."""
    if h <= 0:
        raise ValueError("step h must be positive")
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    net64 = net.astype(np.float64)
    pts = np.tile(np.concatenate(([t], a)), (2 * m, 1))
    for k in range(m):
        pts[2 * k, 1 + k] += h
        pts[2 * k + 1, 1 + k] -= h
    grads = input_gradient(net64, pts)[:, 1:]
    hess = (grads[0::2] - grads[1::2]) / (2 * h)
    if not np.isfinite(hess).all():
        raise FloatingPointError("non-finite entries in the finite-difference Hessian")
    return 0.5 * (hess + hess.T)


def second_derivative_kernel(hess: np.ndarray, spec: BasisSpec, x, y) -> np.ndarray:
    """Reconstruct the two-point kernel sum_kl H_kl phi_k(x) phi_l(y)."""
    px = basis_matrix(spec, np.atleast_1d(x))
    py = basis_matrix(spec, np.atleast_1d(y))
    return px @ hess @ py.T


def cross_degree_eval(net: Mlp, problem: PdeProblem, n_points: int = 10_000,
                      seed: int = 0, mode: str = "auto",
                      keep_details: bool = False) -> ErrorReport:
    """Evaluate a model trained at degree m on points drawn at degree m'.

    Points are drawn over the degree-m' problem's box and embedded into the
    model's input space: zero-padded when m' <= m, truncated to the first m
    coefficients when m' > m (the model then sees the projection of the
    evaluation function).  The truth is always the degree-m' analytic
    solution.  mode: "auto" (default), "zero_pad", or "truncate"; asking to
    zero-pad with m' > m is unsupported.
    """
    from .training import latin_hypercube  # deferred to avoid an import cycle

    m_eval = problem.dim
    m_net = net.input_dim - 1
    if mode not in ("auto", "zero_pad", "truncate"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "zero_pad" and m_eval > m_net:
        raise ValueError(f"cannot zero-pad degree-{m_eval} points into a degree-{m_net} model")
    pts = latin_hypercube(n_points, problem.sampler_ranges, seed)
    truth = np.asarray(problem.analytic(pts[:, 1:], pts[:, 0]), dtype=float)
    if m_eval <= m_net:
        embedded = np.zeros((n_points, m_net + 1))
        embedded[:, : m_eval + 1] = pts
    else:
        embedded = pts[:, : m_net + 1]
    pred = np.asarray(forward(net, embedded.astype(net.dtype)), dtype=float)
    return l1_errors(pred, truth, keep_details=keep_details)
