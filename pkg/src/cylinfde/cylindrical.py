"""Functionals on truncated coefficient space and convergence studies.

A functional F([theta]) restricted to degree-m truncations becomes an
m-variable function f(a_0, ..., a_{m-1}); its gradient re-expands to the
functional derivative through the basis.  The convergence study measures
how fast F([P_m theta]) approaches a high-degree reference as m grows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSpec, CoefficientVector, basis_matrix


@dataclass
class FunctionalOracle:
    """Deterministic evaluator of f(a) = F([sum_k a_k phi_k]), with an
    optional analytic coefficient gradient."""

    spec: BasisSpec
    evaluate: Callable[[CoefficientVector], float]
    gradient: Callable[[CoefficientVector], np.ndarray] | None = None

    @property
    def degree(self) -> int:
        return self.spec.degree


def approx_functional(oracle: FunctionalOracle, a: CoefficientVector) -> float:
    """f(a) for a coefficient vector of the oracle's degree."""
    if a.spec.degree != oracle.degree:
        raise ValueError(
            f"coefficient vector has degree {a.spec.degree}, oracle expects {oracle.degree}"
        )
    return float(oracle.evaluate(a))


def reconstruct_functional_derivative(grad_f, spec: BasisSpec, x):
    """Sum_k (df/da_k) phi_k(x): the coefficient gradient re-expanded in the
    basis, i.e. the truncated functional derivative at point(s) x."""
    grad_f = np.asarray(grad_f, dtype=float)
    if grad_f.shape != (spec.degree,):
        raise ValueError(f"gradient length {grad_f.shape} does not match degree {spec.degree}")
    scalar = np.isscalar(x) or np.ndim(x) == 0
    phi = basis_matrix(spec, x)
    out = phi @ grad_f
    return float(out[0]) if scalar else out


@dataclass
class ConvergenceRow:
    degree: int
    n_samples: int
    n_excluded: int
    mean_rel_error: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]

    COLUMNS = ("degree", "n_samples", "n_excluded", "mean_rel_error")

    def errors(self) -> np.ndarray:
        return np.array([r.mean_rel_error for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for r in self.rows:
                writer.writerow([r.degree, r.n_samples, r.n_excluded, repr(r.mean_rel_error)])


def convergence_study(
    reference: FunctionalOracle,
    degrees: Sequence[int],
    thetas: Sequence[CoefficientVector] | np.ndarray,
    guard: float = 1e-12,
) -> ConvergenceTable:
    """Mean L1 relative error of F([P_m theta]) against F([theta]) per degree.

    ``thetas`` live at the reference degree; truncation to degree m keeps the
    first m coefficients (the bases are nested).  Samples whose reference
    value falls below ``guard`` are excluded from the mean and counted.
    """
    degrees = list(degrees)
    if any(b <= a for a, b in zip(degrees, degrees[1:])):
        raise ValueError("degrees must be strictly increasing")
    if degrees and degrees[-1] >= reference.degree:
        raise ValueError("all degrees must be below the reference degree")

    coeffs = np.asarray(
        [t.values if isinstance(t, CoefficientVector) else t for t in thetas], dtype=float
    )
    if coeffs.ndim != 2 or coeffs.shape[1] != reference.degree:
        raise ValueError("theta samples must match the reference degree")

    ref_vals = np.array([
        reference.evaluate(CoefficientVector(c, reference.spec)) for c in coeffs
    ])
    rows = []
    for m in degrees:
        truncated = coeffs.copy()
        truncated[:, m:] = 0.0
        vals = np.array([
            reference.evaluate(CoefficientVector(c, reference.spec)) for c in truncated
        ])
        keep = np.abs(ref_vals) >= guard
        n_excluded = int((~keep).sum())
        if keep.any():
            rel = float((np.abs(ref_vals - vals)[keep] / np.abs(ref_vals)[keep]).mean())
        else:
            rel = float("nan")
        rows.append(ConvergenceRow(m, len(coeffs), n_excluded, rel))
    return ConvergenceTable(rows)
