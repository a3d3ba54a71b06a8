"""The two concrete coefficient-space PDE problems.

A functional evolution equation is reduced to an m-dimensional PDE over the
basis coefficients a = (a_0, ..., a_{m-1}).  Both problems here have
first-order residuals of the common form

    residual = df/dt + sum_k drift_k(a) * df/da_k

with drift(a) = u (transport problem, constant) or drift(a) = -A^T a
(Burgers-Hopf problem), where A_kl = (phi_k, phi_l'').  Each problem carries
its initial condition, a closed-form solution, exact partials of that
solution, and the sampling box used for collocation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import (
    BasisFamily,
    BasisSpec,
    Quadrature,
    basis_matrix,
    fourier_second_derivative_eigenvalue,
    fourier_spec,
    gauss_legendre,
    legendre_spec,
)

NONLINEAR_IC_MAX_INDEX = 14  # u_k = upsilon0 for k <= 14, clipped to k < m


class FteVariant(enum.Enum):
    LINEAR_IC = "linear"
    NONLINEAR_IC = "nonlinear"


class CovarianceKind(enum.Enum):
    DELTA = "delta"
    CONSTANT = "constant"
    MODERATE = "moderate"


@dataclass(frozen=True)
class FteConfig:
    """Transport problem: basis, advection spectrum u_k, and constants."""

    spec: BasisSpec
    u_coeffs: np.ndarray
    rho0: float
    variant: FteVariant

    def __post_init__(self):
        if self.spec.family is not BasisFamily.LEGENDRE_ORTHONORMAL:
            raise ValueError("transport problem uses the Legendre basis")
        u = np.asarray(self.u_coeffs, dtype=float)
        object.__setattr__(self, "u_coeffs", u)
        if u.shape != (self.spec.degree,):
            raise ValueError("u_coeffs length must equal the basis degree")
        expected = _fte_u_pattern(self.variant, self.spec.degree, _fte_upsilon(u, self.variant))
        if not np.array_equal(u, expected):
            raise ValueError(f"u_coeffs do not match variant {self.variant.value}")

    @classmethod
    def linear(cls, degree: int, rho0: float = 1.0, upsilon0: float = 1.0) -> "FteConfig":
        if degree < 2:
            raise ValueError("linear variant needs degree >= 2 (u sits at k=1)")
        u = _fte_u_pattern(FteVariant.LINEAR_IC, degree, upsilon0)
        return cls(legendre_spec(degree), u, rho0, FteVariant.LINEAR_IC)

    @classmethod
    def nonlinear(cls, degree: int, rho0: float = 1.0, upsilon0: float = 1.0) -> "FteConfig":
        u = _fte_u_pattern(FteVariant.NONLINEAR_IC, degree, upsilon0)
        return cls(legendre_spec(degree), u, rho0, FteVariant.NONLINEAR_IC)


def _fte_upsilon(u: np.ndarray, variant: FteVariant) -> float:
    return float(u[1]) if variant is FteVariant.LINEAR_IC else float(u[0])


def _fte_u_pattern(variant: FteVariant, degree: int, upsilon0: float) -> np.ndarray:
    u = np.zeros(degree)
    if variant is FteVariant.LINEAR_IC:
        u[1] = upsilon0
    else:
        u[: NONLINEAR_IC_MAX_INDEX + 1] = upsilon0
    return u


@dataclass(frozen=True)
class BheConfig:
    """Burgers-Hopf problem: Fourier basis, covariance spectrum, constants."""

    spec: BasisSpec
    cov: np.ndarray
    mu_bar: float
    sigma2: float
    covariance_kind: CovarianceKind

    def __post_init__(self):
        if self.spec.family is not BasisFamily.FOURIER_PERIODIC:
            raise ValueError("Burgers-Hopf problem uses the Fourier basis")
        m = self.spec.degree
        if m % 2 != 0:
            raise ValueError(f"degree must be even (m = 2M), got {m}")
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "cov", cov)
        if cov.shape != (m, m):
            raise ValueError("covariance matrix must be m x m")
        if not np.array_equal(cov, cov.T):
            raise ValueError("covariance matrix must be symmetric")
        expected = _covariance_matrix(self.covariance_kind, m, self.sigma2)
        if not np.array_equal(cov, expected):
            raise ValueError(f"cov does not match kind {self.covariance_kind.value}")

    @classmethod
    def build(
        cls,
        degree: int,
        kind: CovarianceKind,
        mu_bar: float = 8.0,
        sigma2: float = 10.0,
    ) -> "BheConfig":
        cov = _covariance_matrix(kind, degree, sigma2)
        return cls(fourier_spec(degree), cov, mu_bar, sigma2, kind)

    @classmethod
    def delta(cls, degree: int, mu_bar: float = 8.0, sigma2: float = 10.0) -> "BheConfig":
        return cls.build(degree, CovarianceKind.DELTA, mu_bar, sigma2)

    @classmethod
    def constant(cls, degree: int, mu_bar: float = 8.0, sigma2: float = 10.0) -> "BheConfig":
        return cls.build(degree, CovarianceKind.CONSTANT, mu_bar, sigma2)

    @classmethod
    def moderate(cls, degree: int, mu_bar: float = 8.0, sigma2: float = 10.0) -> "BheConfig":
        return cls.build(degree, CovarianceKind.MODERATE, mu_bar, sigma2)


def _covariance_matrix(kind: CovarianceKind, m: int, sigma2: float) -> np.ndarray:
    cov = np.zeros((m, m))
    if kind is CovarianceKind.DELTA:
        np.fill_diagonal(cov, sigma2)
    elif kind is CovarianceKind.CONSTANT:
        cov[0, 0] = sigma2
    else:
        k = np.arange(min(m, 100))
        cov[k, k] = sigma2 * np.exp(-k / 10.0) ** 2
    return cov


@dataclass
class PdeProblem:
    """An m-dimensional PDE with initial condition and closed-form solution.

    ``initial``, ``analytic`` and ``partials`` accept a single coefficient
    vector of shape (m,) or a batch of shape (n, m); ``analytic`` and
    ``partials`` take a scalar time or a per-sample time vector.
    """

    name: str
    spec: BasisSpec
    t_range: tuple[float, float]
    a_ranges: list[tuple[float, float]]
    initial: Callable[[np.ndarray], np.ndarray]
    analytic: Callable[[np.ndarray, np.ndarray], np.ndarray]
    partials: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    drift: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[float], np.ndarray] | None = None
    constants: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.spec.degree

    @property
    def sampler_ranges(self) -> list[tuple[float, float]]:
        """Per-coordinate intervals for (t, a_0, ..., a_{m-1})."""
        return [self.t_range, *self.a_ranges]

    def residual(self, t, a, df_dt, df_da):
        """PDE residual from supplied partial derivatives (0 for the solution)."""
        a_arr = np.asarray(a, dtype=float)
        batch = np.atleast_2d(a_arr)
        df_da = np.atleast_2d(np.asarray(df_da, dtype=float))
        out = np.asarray(df_dt, dtype=float) + np.sum(self.drift(batch) * df_da, axis=-1)
        return out if a_arr.ndim > 1 else float(out[0])


def fte_problem(cfg: FteConfig) -> PdeProblem:
    """Constant-coefficient advection in coefficient space with its solution."""
    u = cfg.u_coeffs
    rho0 = cfg.rho0
    u_sq = float(u @ u)
    m = cfg.spec.degree

    def initial(a):
        a = np.asarray(a, dtype=float)
        out = a @ u * rho0
        return out if a.ndim > 1 else float(out)

    def analytic(a, t):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        out = rho0 * (a @ u - u_sq * t)
        return out if a.ndim > 1 else float(out)

    def partials(a, t):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        n = a.shape[0]
        df_dt = np.full(n, -rho0 * u_sq)
        df_da = np.broadcast_to(rho0 * u, (n, m)).copy()
        return df_dt, df_da

    def drift(a):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return np.broadcast_to(u, a.shape)

    return PdeProblem(
        name=f"fte-{cfg.variant.value}-deg{m}",
        spec=cfg.spec,
        t_range=(0.0, 1.0),
        a_ranges=[(-1.0, 1.0)] * m,
        initial=initial,
        analytic=analytic,
        partials=partials,
        drift=drift,
        hessian=lambda t: np.zeros((m, m)),
        constants={"rho0": rho0, "upsilon0": _fte_upsilon(u, cfg.variant)},
    )


def bhe_operator_matrix(spec: BasisSpec, quad: Quadrature | None = None) -> np.ndarray:
    """A_kl = (phi_k, phi_l'') by quadrature.

    For the Fourier family the exact matrix is diagonal with
    A_00 = 0, A_kk = -pi^2 (k+1)^2 for odd k and -pi^2 k^2 for even k != 0;
    the default quadrature order resolves the oscillatory integrands well
    past that accuracy.
    """
    if spec.family is not BasisFamily.FOURIER_PERIODIC:
        raise ValueError("operator matrix is defined for the Fourier basis")
    if quad is None:
        quad = gauss_legendre(max(256, 4 * spec.degree)).rescaled(*spec.domain)
    phi = basis_matrix(spec, quad.nodes)
    d2 = basis_matrix(spec, quad.nodes, derivative=2)
    return phi.T @ (quad.weights[:, None] * d2)


def bhe_eigenvalues(m: int) -> np.ndarray:
    """Exact diagonal of A for the Fourier family."""
    return np.array([fourier_second_derivative_eigenvalue(k) for k in range(m)])


def bhe_problem(cfg: BheConfig) -> PdeProblem:
    """Coefficient-space Burgers-Hopf problem with its Gaussian solution."""
    from .training import decayed_ranges

    m = cfg.spec.degree
    mu_bar = cfg.mu_bar
    lam = bhe_eigenvalues(m)
    a_mat = bhe_operator_matrix(cfg.spec)
    # Nonzero covariance entries; the solution is evaluated entry-wise so the
    # per-point cost stays O(#nonzeros).
    nz_i, nz_j = np.nonzero(cfg.cov)
    nz_c = cfg.cov[nz_i, nz_j]
    nz_rate = lam[nz_i] + lam[nz_j]

    def initial(a):
        a = np.asarray(a, dtype=float)
        batch = np.atleast_2d(a)
        quad_part = 0.5 * np.sum(nz_c * batch[:, nz_i] * batch[:, nz_j], axis=1)
        out = -mu_bar * batch[:, 0] + quad_part
        return out if a.ndim > 1 else float(out[0])

    def analytic(a, t):
        a = np.asarray(a, dtype=float)
        batch = np.atleast_2d(a)
        tau = np.broadcast_to(np.asarray(t, dtype=float), batch.shape[:1])
        decay = np.exp(tau[:, None] * nz_rate)
        quad_part = 0.5 * np.sum(nz_c * decay * batch[:, nz_i] * batch[:, nz_j], axis=1)
        out = -mu_bar * batch[:, 0] + quad_part
        return out if a.ndim > 1 else float(out[0])

    def partials(a, t):
        a = np.asarray(a, dtype=float)
        batch = np.atleast_2d(a)
        n = batch.shape[0]
        tau = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        decay = np.exp(tau[:, None] * nz_rate)
        terms = nz_c * decay * batch[:, nz_i] * batch[:, nz_j]
        df_dt = 0.5 * np.sum(terms * nz_rate, axis=1)
        df_da = np.zeros((n, m))
        # d/da_l of 0.5 sum C_ij E_ij a_i a_j = sum_j C_lj E_lj a_j (C symmetric)
        contrib = nz_c * decay * batch[:, nz_j]
        np.add.at(df_da.T, nz_i, contrib.T)
        df_da[:, 0] -= mu_bar
        return df_dt, df_da

    def drift(a):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return -(a @ a_mat)

    def hessian(t):
        h = np.zeros((m, m))
        h[nz_i, nz_j] = nz_c * np.exp(float(t) * nz_rate)
        return h

    return PdeProblem(
        name=f"bhe-{cfg.covariance_kind.value}-deg{m}",
        spec=cfg.spec,
        t_range=(0.0, 0.001),
        a_ranges=decayed_ranges((-0.1, 0.1), m),
        initial=initial,
        analytic=analytic,
        partials=partials,
        drift=drift,
        hessian=hessian,
        constants={"mu_bar": mu_bar, "sigma2": cfg.sigma2},
    )


def analytic_partials(problem: PdeProblem, a, t):
    """Exact (df_dt, df_da) of the problem's closed-form solution."""
    return problem.partials(a, t)
