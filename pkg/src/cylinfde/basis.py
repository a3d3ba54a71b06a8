"""Orthonormal basis families, quadrature, projection, and reconstruction.

Two families are supported: Legendre polynomials orthonormalized on [-1, 1]
and a real Fourier series orthonormal on [-1/2, 1/2].  Everything downstream
(coefficient-space PDEs, functional derivatives) is built on top of these
primitives.

Fourier indexing convention::

    phi_0(x) = 1
    phi_k(x) = sqrt(2) * sin(pi * (k+1) * x)   for odd k
    phi_k(x) = sqrt(2) * cos(pi * k * x)       for nonzero even k

so phi_1, phi_2 are the sin/cos pair of frequency 2*pi, phi_3, phi_4 the
pair of frequency 4*pi, and so on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Absolute slack for domain membership checks; absorbs rescaling rounding.
DOMAIN_SLACK = 1e-12


class BasisFamily(enum.Enum):
    LEGENDRE_ORTHONORMAL = "legendre"
    FOURIER_PERIODIC = "fourier"


_FAMILY_DOMAIN = {
    BasisFamily.LEGENDRE_ORTHONORMAL: (-1.0, 1.0),
    BasisFamily.FOURIER_PERIODIC: (-0.5, 0.5),
}


@dataclass(frozen=True)
class BasisSpec:
    """An orthonormal basis family truncated at ``degree`` functions."""

    family: BasisFamily
    degree: int
    domain: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        expected = _FAMILY_DOMAIN[self.family]
        if self.domain is None:
            object.__setattr__(self, "domain", expected)
        elif tuple(self.domain) != expected:
            raise ValueError(
                f"domain {self.domain} does not match family {self.family.value}; "
                f"expected {expected}"
            )

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def contains(self, x) -> bool:
        lo, hi = self.domain
        x = np.asarray(x)
        return bool(np.all(x >= lo - DOMAIN_SLACK) and np.all(x <= hi + DOMAIN_SLACK))


def legendre_spec(degree: int) -> BasisSpec:
    return BasisSpec(BasisFamily.LEGENDRE_ORTHONORMAL, degree)


def fourier_spec(degree: int) -> BasisSpec:
    return BasisSpec(BasisFamily.FOURIER_PERIODIC, degree)


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights of a quadrature rule on a fixed interval."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple[float, float] = (-1.0, 1.0)

    @property
    def order(self) -> int:
        return len(self.nodes)

    def rescaled(self, lo: float, hi: float) -> "Quadrature":
        """Affine image of the rule on [lo, hi]."""
        a, b = self.domain
        scale = (hi - lo) / (b - a)
        nodes = lo + (self.nodes - a) * scale
        return Quadrature(nodes, self.weights * scale, (lo, hi))


def gauss_legendre(n: int) -> Quadrature:
    """Gauss-Legendre rule on [-1, 1], exact for polynomials of degree <= 2n-1."""
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return Quadrature(nodes, weights)


def default_quadrature(spec: BasisSpec) -> Quadrature:
    """Rule used for inner products when the caller does not supply one.

    Order max(256, 2m) keeps the projection error below the basis
    truncation error across the degrees exercised here (k up to ~500).
    """
    lo, hi = spec.domain
    return gauss_legendre(max(256, 2 * spec.degree)).rescaled(lo, hi)


@dataclass
class CoefficientVector:
    """Truncated spectrum of an input function in a given basis."""

    values: np.ndarray
    spec: BasisSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.degree,):
            raise ValueError(
                f"coefficient vector has shape {self.values.shape}, "
                f"expected ({self.spec.degree},)"
            )

    def truncated(self, degree: int) -> "CoefficientVector":
        """Prefix truncation to a lower degree (bases are nested in m)."""
        if degree > self.spec.degree:
            raise ValueError(f"cannot truncate degree {self.spec.degree} to {degree}")
        spec = BasisSpec(self.spec.family, degree)
        return CoefficientVector(self.values[:degree].copy(), spec)


def _check_index(spec: BasisSpec, k: int) -> None:
    if not 0 <= k < spec.degree:
        raise IndexError(f"basis index {k} out of range for degree {spec.degree}")


def _check_domain(spec: BasisSpec, x) -> None:
    if not spec.contains(x):
        raise ValueError(f"point outside basis domain {spec.domain}")


def _legendre_columns(x: np.ndarray, degree: int, derivative: int = 0) -> np.ndarray:
    """All orthonormal Legendre values (or a derivative) at x, shape (len(x), degree).

    Upward three-term recurrence, numerically stable for |x| <= 1:
        (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}
    differentiated once/twice for the derivative columns.  Column k is
    scaled by sqrt((2k+1)/2) so the plain L^2 inner product on [-1, 1]
    is orthonormal.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    p = np.empty((n, degree))
    p0 = np.ones(n)
    p1 = x.copy()
    if derivative == 0:
        cols = (p0, p1)
    else:
        d0 = np.zeros(n)
        d1 = np.ones(n)
        if derivative == 1:
            cols = (d0, d1)
        else:
            s0 = np.zeros(n)
            s1 = np.zeros(n)
            cols = (s0, s1)
    p[:, 0] = cols[0]
    if degree > 1:
        p[:, 1] = cols[1]
    if derivative >= 1:
        d_prev, d_cur = np.zeros(n), np.ones(n)
    if derivative >= 2:
        s_prev, s_cur = np.zeros(n), np.zeros(n)
    p_prev, p_cur = p0, p1
    for k in range(1, degree - 1):
        a = (2 * k + 1) / (k + 1)
        b = k / (k + 1)
        p_next = a * x * p_cur - b * p_prev
        if derivative >= 1:
            d_next = a * (p_cur + x * d_cur) - b * d_prev
        if derivative >= 2:
            s_next = a * (2 * d_cur + x * s_cur) - b * s_prev
            s_prev, s_cur = s_cur, s_next
            p[:, k + 1] = s_next
        elif derivative == 1:
            p[:, k + 1] = d_next
        else:
            p[:, k + 1] = p_next
        if derivative >= 1:
            d_prev, d_cur = d_cur, d_next
        p_prev, p_cur = p_cur, p_next
    norms = np.sqrt((2 * np.arange(degree) + 1) / 2.0)
    return p * norms


def fourier_frequency(k: int) -> int:
    """Integer q such that phi_k has angular frequency q*pi (q=0 for k=0)."""
    if k == 0:
        return 0
    return k + 1 if k % 2 == 1 else k


def _fourier_columns(x: np.ndarray, degree: int, derivative: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty((x.shape[0], degree))
    for k in range(degree):
        q = fourier_frequency(k)
        w = math.pi * q
        if k == 0:
            col = np.ones_like(x)
        elif k % 2 == 1:
            col = math.sqrt(2.0) * np.sin(w * x)
        else:
            col = math.sqrt(2.0) * np.cos(w * x)
        if derivative == 2:
            col = -(w * w) * col
        elif derivative == 1:
            raise NotImplementedError("first Fourier derivative not needed")
        out[:, k] = col
    return out


def basis_matrix(spec: BasisSpec, x, derivative: int = 0) -> np.ndarray:
    """Matrix of phi_k values (or second derivatives) at points x, shape (len(x), m)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_domain(spec, x)
    if spec.family is BasisFamily.LEGENDRE_ORTHONORMAL:
        return _legendre_columns(x, spec.degree, derivative)
    return _fourier_columns(x, spec.degree, derivative)


def eval_basis(spec: BasisSpec, k: int, x):
    """phi_k(x) for scalar or array x."""
    _check_index(spec, k)
    scalar = np.isscalar(x) or np.ndim(x) == 0
    cols = basis_matrix(BasisSpec(spec.family, k + 1), x)
    out = cols[:, k]
    return float(out[0]) if scalar else out


def eval_basis_second_derivative(spec: BasisSpec, k: int, x):
    """phi_k''(x) for scalar or array x."""
    _check_index(spec, k)
    scalar = np.isscalar(x) or np.ndim(x) == 0
    cols = basis_matrix(BasisSpec(spec.family, k + 1), x, derivative=2)
    out = cols[:, k]
    return float(out[0]) if scalar else out


def fourier_second_derivative_eigenvalue(k: int) -> float:
    """lambda_k with phi_k'' = lambda_k * phi_k (Fourier family only)."""
    q = fourier_frequency(k)
    return -((math.pi * q) ** 2)


def project(
    spec: BasisSpec,
    theta: Callable[[np.ndarray], np.ndarray],
    quad: Quadrature | None = None,
) -> CoefficientVector:
    """Coefficients a_k = (theta, phi_k) by quadrature on the basis domain."""
    if quad is None:
        quad = default_quadrature(spec)
    lo, hi = spec.domain
    qlo, qhi = quad.domain
    if abs(qlo - lo) > DOMAIN_SLACK or abs(qhi - hi) > DOMAIN_SLACK:
        quad = quad.rescaled(lo, hi)
    vals = _eval_on_nodes(theta, quad.nodes)
    bad = ~np.isfinite(vals)
    if bad.any():
        where = quad.nodes[bad][0]
        raise ValueError(f"theta is non-finite at quadrature node x={where!r}")
    phi = basis_matrix(spec, quad.nodes)
    values = phi.T @ (quad.weights * vals)
    return CoefficientVector(values, spec)


def _eval_on_nodes(theta, nodes: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(theta(nodes), dtype=float)
        if vals.shape == nodes.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.asarray([theta(float(xi)) for xi in nodes], dtype=float)


def reconstruct(a: CoefficientVector, x):
    """Sum_k a_k phi_k(x) for scalar or array x."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    phi = basis_matrix(a.spec, x)
    out = phi @ a.values
    return float(out[0]) if scalar else out
