"""Discrete spectral and restricted fractional Laplacians on the unit interval/square.

Grids are uniform and interior-only: node ``i`` of an interval with ``n``
interior nodes sits at ``x_i = (i + 1) h`` with ``h = 1 / (n + 1)``.  Boundary
values are zero by construction, so the trapezoid rule reduces to
``h**d * sum(values)``.

Eigenvectors are stored quadrature-orthonormal, i.e. ``h**d * phi @ phi.T = I``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.special import gamma as gamma_fn


class Geometry(str, enum.Enum):
    INTERVAL = "interval"
    RECTANGLE = "rectangle"


class OperatorKind(str, enum.Enum):
    SFL = "SFL"
    RFL = "RFL"


class CapacityError(ValueError):
    """Requested more eigenpairs than the grid can hold."""


class DomainMismatchError(ValueError):
    pass


class UnsupportedFeatureError(NotImplementedError):
    pass


class EigensolverError(RuntimeError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True)
class DomainSpec:
    geometry: Geometry
    n_interior: int

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError("n_interior must be a positive integer")
        object.__setattr__(self, "n_interior", int(self.n_interior))

    @classmethod
    def interval(cls, n):
        return cls(Geometry.INTERVAL, n)

    @classmethod
    def rectangle(cls, n):
        return cls(Geometry.RECTANGLE, n)

    @property
    def dim(self) -> int:
        return 1 if self.geometry is Geometry.INTERVAL else 2

    @property
    def h(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_interior ** self.dim

    @property
    def weight(self) -> float:
        """Quadrature weight per node."""
        return self.h ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes,)`` in 1D and ``(n_nodes, 2)`` in 2D."""
        if self.dim == 1:
            return self.axis.copy()
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def boundary_distance(self) -> np.ndarray:
        x = self.nodes
        if self.dim == 1:
            return np.minimum(x, 1.0 - x)
        return np.minimum(np.minimum(x[:, 0], 1.0 - x[:, 0]),
                          np.minimum(x[:, 1], 1.0 - x[:, 1]))

    def sample(self, func) -> "GridFunction":
        """Evaluate ``func`` at the nodes (``func(x)`` in 1D, ``func(x, y)`` in 2D)."""
        x = self.nodes
        vals = func(x) if self.dim == 1 else func(x[:, 0], x[:, 1])
        return GridFunction(np.broadcast_to(np.asarray(vals, dtype=float), (self.n_nodes,)), self)

    def zeros(self) -> "GridFunction":
        return GridFunction(np.zeros(self.n_nodes), self)


class GridFunction:
    """Nodal values on the interior grid of a :class:`DomainSpec`.

    Values are copied and frozen on construction.  Arithmetic is nodewise and
    returns new instances.
    """

    __slots__ = ("values", "domain")
    __array_priority__ = 20

    def __init__(self, values, domain: DomainSpec):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size != domain.n_nodes:
            raise DomainMismatchError(
                f"{arr.size} values for a domain with {domain.n_nodes} interior nodes")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "domain", domain)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"GridFunction(n={self.values.size}, domain={self.domain})"

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.domain != self.domain:
                raise DomainMismatchError("grid functions live on different domains")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.values + self._other(other), self.domain)

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._other(other), self.domain)

    def __rsub__(self, other):
        return GridFunction(self._other(other) - self.values, self.domain)

    def __mul__(self, other):
        return GridFunction(self.values * self._other(other), self.domain)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.values / self._other(other), self.domain)

    def __neg__(self):
        return GridFunction(-self.values, self.domain)

    def __pow__(self, p):
        return GridFunction(self.values ** p, self.domain)

    def integral(self) -> float:
        return self.domain.weight * float(np.sum(self.values))

    def inner(self, other) -> float:
        return self.domain.weight * float(np.dot(self.values, self._other(other)))

    def norm(self, p=2.0) -> float:
        if np.isinf(p):
            return float(np.max(np.abs(self.values))) if self.values.size else 0.0
        return (self.domain.weight * float(np.sum(np.abs(self.values) ** p))) ** (1.0 / p)


def values_of(f, domain: DomainSpec) -> np.ndarray:
    """Nodal values of ``f`` checked against ``domain``."""
    if isinstance(f, GridFunction):
        if f.domain != domain:
            raise DomainMismatchError(f"expected a function on {domain}, got one on {f.domain}")
        return f.values
    arr = np.asarray(f, dtype=float).reshape(-1)
    if arr.size != domain.n_nodes:
        raise DomainMismatchError(
            f"{arr.size} values for a domain with {domain.n_nodes} interior nodes")
    return arr


def rfl_constant(s: float) -> float:
    """Normalisation c_{1,s} making the 1D kernel operator the multiplier |xi|^{2s}."""
    return 2.0 ** (2 * s) * s * gamma_fn(s + 0.5) / (math.sqrt(math.pi) * gamma_fn(1.0 - s))


@dataclass(frozen=True)
class OperatorSpec:
    kind: OperatorKind
    s: float
    domain: DomainSpec
    c_norm: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0,1)")
        if self.kind is OperatorKind.RFL:
            if self.domain.geometry is not Geometry.INTERVAL:
                raise UnsupportedFeatureError("the restricted fractional Laplacian is only built on the interval")
            if self.c_norm is None:
                object.__setattr__(self, "c_norm", rfl_constant(self.s))
            elif self.c_norm <= 0:
                raise ValueError("c_norm must be positive")

    @property
    def gamma(self) -> float:
        """Boundary exponent of the first eigenfunction."""
        return 1.0 if self.kind is OperatorKind.SFL else self.s


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Ascending eigenvalues ``mu`` with quadrature-orthonormal eigenvectors.

    ``phi`` has shape ``(K, n_nodes)``.  ``base_mu`` holds the eigenvalues of the
    base energy space used by the interpolation norms, with
    ``mu = base_mu ** order``: the Dirichlet Laplacian for the spectral
    operator (``order = s``) and ``mu**2`` for the restricted one
    (``order = 1/2``).
    """

    mu: np.ndarray
    phi: np.ndarray
    domain: DomainSpec
    base_mu: np.ndarray
    order: float
    gram_tolerance: float = 1e-10
    operator: OperatorSpec | None = None

    def __post_init__(self):
        for name in ("mu", "phi", "base_mu"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.phi.ndim != 2 or self.phi.shape[1] != self.domain.n_nodes:
            raise DomainMismatchError("eigenvectors do not match the domain")
        if self.mu.shape[0] != self.phi.shape[0]:
            raise ValueError("eigenvalue and eigenvector counts differ")
        if np.any(self.mu <= 0) or np.any(np.diff(self.mu) < 0):
            raise ValueError("eigenvalues must be positive and ascending")

    @property
    def size(self) -> int:
        return self.mu.shape[0]

    @property
    def complete(self) -> bool:
        return self.size == self.domain.n_nodes

    @property
    def phi1(self) -> GridFunction:
        return GridFunction(self.phi[0], self.domain)

    def gram(self) -> np.ndarray:
        return self.domain.weight * self.phi @ self.phi.T

    def coeffs(self, f) -> np.ndarray:
        """Quadrature coefficients ``f_k = h^d sum_i f_i phi_k(x_i)``."""
        return self.domain.weight * (self.phi @ values_of(f, self.domain))

    def synthesize(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.phi

    def apply_power(self, f, power: float) -> GridFunction:
        """``sum_k mu_k**power f_k phi_k``."""
        c = self.coeffs(f)
        return GridFunction(self.synthesize(self.mu ** power * c), self.domain)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense nodal matrix of the operator (projected onto the basis span)."""
        w = self.domain.weight
        M = (self.phi.T * self.mu) @ self.phi * w
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        return M

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        w = self.domain.weight
        M = (self.phi.T / self.mu) @ self.phi * w
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        return M


def _check_count(K, domain):
    if K is None:
        return domain.n_nodes
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    if K > domain.n_nodes:
        raise CapacityError(
            f"requested {K} eigenpairs but the grid only has {domain.n_nodes} interior nodes")
    return int(K)


def laplacian_eigenvalues_1d(n: int) -> np.ndarray:
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    return 4.0 / h**2 * np.sin(k * np.pi * h / 2.0) ** 2


def build_sfl_basis(domain: DomainSpec, s: float, K: int | None = None) -> EigenBasis:
    """Spectral fractional Laplacian from the eigenpairs of the discrete Dirichlet Laplacian.

    ``s = 1`` is accepted and gives the discrete Laplacian itself.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0,1)")
    K = _check_count(K, domain)
    n = domain.n_interior
    lam = laplacian_eigenvalues_1d(n)
    x = domain.axis
    k = np.arange(1, n + 1)
    modes = np.sqrt(2.0) * np.sin(np.pi * np.outer(k, x))
    if domain.dim == 1:
        base, phi = lam, modes
    else:
        J, L = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        J, L = J.ravel(), L.ravel()
        vals = lam[J] + lam[L]
        order = np.lexsort((L, J, vals))
        J, L, base = J[order], L[order], vals[order]
        phi = (modes[J][:, :, None] * modes[L][:, None, :]).reshape(len(J), -1)
    base, phi = base[:K], phi[:K]
    # renormalise in the discrete inner product (exact up to rounding already)
    phi = phi / np.sqrt(domain.weight * np.sum(phi**2, axis=1))[:, None]
    op = OperatorSpec(OperatorKind.SFL, s, domain) if s < 1.0 else None
    return EigenBasis(mu=base**s, phi=phi, domain=domain, base_mu=base, order=s, operator=op)


def _power_moment(r0, r1, a):
    """``int_{r0}^{r1} r**(a-1) dr`` stable for ``a`` near zero."""
    lr = np.log(r1 / r0)
    if abs(a) < 1e-12:
        return lr
    return r0**a * np.expm1(a * lr) / a


def build_rfl_matrix(domain: DomainSpec, s: float, c_norm: float | None = None) -> np.ndarray:
    """Dense collocation matrix of the restricted fractional Laplacian on (0, 1).

    Node ``x_i`` splits the line into the near zone ``|y - x_i| < h`` and the
    rest.  In the near zone the three-point quadratic interpolant is used; its
    odd part cancels, leaving ``-u''(x_i) h^{2-2s} / (2-2s)``.  Outside it the
    zero extension of the piecewise-linear interpolant is integrated exactly
    against the kernel (hat-function moments), and the whole exterior tail
    ``u_i int_{|z|>h} |z|^{-1-2s} dz = u_i h^{-2s}/s`` is analytic.
    """
    if domain.geometry is not Geometry.INTERVAL:
        raise UnsupportedFeatureError("the restricted fractional Laplacian is only built on the interval")
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    c = rfl_constant(s) if c_norm is None else float(c_norm)
    n, h = domain.n_interior, domain.h

    # Hat weights as a function of the node offset d = |i - j| >= 1: the far
    # elements are [d-1, d] (only for d >= 2) and [d, d+1], in units of h.
    d = np.arange(1, n, dtype=float)
    p = 2.0 * s
    # rising half of the hat on element [(d-1)h, dh]: weight (r - r0)/h, r0=(d-1)h
    rising = np.zeros_like(d)
    far = d >= 2
    r0, r1 = (d[far] - 1) * h, d[far] * h
    m0 = _power_moment(r0, r1, -p)
    m1 = _power_moment(r0, r1, 1.0 - p)
    rising[far] = (m1 - r0 * m0) / h
    # falling half on element [dh, (d+1)h]: weight (r1 - r)/h
    r0, r1 = d * h, (d + 1) * h
    m0 = _power_moment(r0, r1, -p)
    m1 = _power_moment(r0, r1, 1.0 - p)
    falling = (r1 * m0 - m1) / h
    w = rising + falling

    col = np.empty(n)
    col[0] = h ** (-p) / s + 2.0 * h ** (-p) / (2.0 - p)
    col[1:] = -w
    if n > 1:
        col[1] -= h ** (-p) / (2.0 - p)
    A = c * linalg.toeplitz(col)
    return 0.5 * (A + A.T)


def _sign_normalise(V):
    V = V.copy()
    for k in range(V.shape[1]):
        v = V[:, k]
        if k == 0:
            sgn = 1.0 if v.sum() >= 0 else -1.0
        else:
            sgn = 1.0 if v[np.argmax(np.abs(v))] >= 0 else -1.0
        V[:, k] = sgn * v
    return V


def build_rfl_basis(matrix, K: int | None = None, domain: DomainSpec | None = None,
                    s: float | None = None) -> EigenBasis:
    """``K`` smallest eigenpairs of a symmetric operator matrix (LAPACK ``syevr``)."""
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    if domain is None:
        domain = DomainSpec.interval(n)
    if domain.n_nodes != n:
        raise DomainMismatchError("matrix size does not match the domain")
    K = _check_count(K, domain)
    if np.max(np.abs(A - A.T)) > 1e-12 * np.max(np.abs(A)):
        raise ValueError("operator matrix is not symmetric")
    try:
        vals, vecs = linalg.eigh(A, subset_by_index=[0, K - 1], driver="evr")
    except linalg.LinAlgError as exc:
        raise EigensolverError(f"symmetric eigensolver failed: {exc}", iterations=n) from exc
    if vals[0] <= 0:
        raise EigensolverError("operator matrix is not positive definite", iterations=n)
    phi = _sign_normalise(vecs).T / math.sqrt(domain.weight)
    op = OperatorSpec(OperatorKind.RFL, s, domain) if s is not None else None
    return EigenBasis(mu=vals, phi=phi, domain=domain, base_mu=vals**2, order=0.5, operator=op)


def build_basis(op: OperatorSpec, K: int | None = None) -> EigenBasis:
    if op.kind is OperatorKind.SFL:
        return build_sfl_basis(op.domain, op.s, K)
    return build_rfl_basis(build_rfl_matrix(op.domain, op.s, op.c_norm), K, op.domain, op.s)


def apply(basis: EigenBasis, f) -> GridFunction:
    return basis.apply_power(f, 1.0)


def apply_inverse(basis: EigenBasis, f) -> GridFunction:
    return basis.apply_power(f, -1.0)


def apply_halfpower(basis: EigenBasis, f, sign: int = 1) -> GridFunction:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return basis.apply_power(f, 0.5 * sign)


@dataclass(frozen=True, eq=False)
class GreenKernel:
    entries: np.ndarray
    domain: DomainSpec
    operator: OperatorSpec | None = None

    def integrate(self, f) -> GridFunction:
        """Quadrature of the kernel against ``f``; reproduces the inverse operator."""
        vals = values_of(f, self.domain)
        return GridFunction(self.domain.weight * (self.entries @ vals), self.domain)


def green_kernel(basis: EigenBasis) -> GreenKernel:
    if not basis.complete:
        raise ValueError("the Green kernel needs the complete basis on the grid")
    K = basis.inverse_matrix / basis.domain.weight
    K = np.array(0.5 * (K + K.T))
    K.setflags(write=False)
    return GreenKernel(K, basis.domain, basis.operator)


@dataclass(frozen=True)
class GreenBounds:
    lower_constant: float
    upper_constant: float | None
    gamma: float


def green_bounds(kernel: GreenKernel, basis: EigenBasis, s: float, gamma: float) -> GreenBounds:
    """Empirical constants in ``c0 Phi1(x)Phi1(y) <= K(x,y)`` and the matching upper bound.

    The upper bound ``K <= c1 |x-y|^{2s-d} min(Phi1(x)/|x-y|^g, 1) min(Phi1(y)/|x-y|^g, 1)``
    is only reported when ``d > 2s``.
    """
    p1 = basis.phi[0]
    K = kernel.entries
    lower = float(np.min(K / np.outer(p1, p1)))
    upper = None
    d = basis.domain.dim
    if d > 2 * s:
        x = basis.domain.nodes.reshape(basis.domain.n_nodes, -1)
        dist = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))
        off = ~np.eye(len(p1), dtype=bool)
        r = dist[off]
        a = np.minimum(p1[:, None] / np.where(dist > 0, dist, 1.0) ** gamma, 1.0)[off]
        b = np.minimum(p1[None, :] / np.where(dist > 0, dist, 1.0) ** gamma, 1.0)[off]
        shape = r ** (2 * s - d) * a * b
        upper = float(np.max(K[off] / shape))
    return GreenBounds(lower, upper, gamma)


def phi1_boundary_ratio(basis: EigenBasis, gamma: float) -> tuple[float, float]:
    """Min and max of ``Phi1 / dist(x, boundary)**gamma`` over the nodes."""
    r = basis.phi[0] / basis.domain.boundary_distance() ** gamma
    return float(r.min()), float(r.max())
