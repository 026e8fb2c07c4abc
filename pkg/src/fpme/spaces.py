"""Norms, seminorms and inequality checks on grid functions."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .spectral import DomainSpec, EigenBasis, Geometry, GridFunction, values_of


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    coeffs: np.ndarray
    basis: EigenBasis

    @classmethod
    def of(cls, basis: EigenBasis, f) -> "SpectralCoeffs":
        return cls(basis.coeffs(f), basis)

    def __post_init__(self):
        if len(self.coeffs) > self.basis.size:
            raise ValueError("more coefficients than basis functions")

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))


def h_norm(basis: EigenBasis, f) -> float:
    """``(sum mu_k f_k^2)^{1/2}``; truncated bases drop the tail modes."""
    c = basis.coeffs(f)
    return float(np.sqrt(np.sum(basis.mu * c**2)))


def hstar_norm(basis: EigenBasis, f) -> float:
    c = basis.coeffs(f)
    return float(np.sqrt(np.sum(c**2 / basis.mu)))


def dual_norm_variational(basis: EigenBasis, F) -> float:
    """``max <F, g>`` over ``|g|_H = 1`` evaluated at the maximiser ``g = A^{-1}F / |A^{-1}F|_H``.

    The maximiser comes from a nodal linear solve, independent of the coefficient formula.
    """
    Fv = values_of(F, basis.domain)
    if not np.any(Fv):
        return 0.0
    g = np.linalg.solve(basis.matrix, Fv)
    w = basis.domain.weight
    gh = math.sqrt(w * float(g @ (basis.matrix @ g)))
    return w * float(Fv @ g) / gh


def l1_phi1_constant(basis: EigenBasis) -> float:
    """Constant in ``|u|_{L^1_{Phi1}} <= C |u|_{H*}``: ``(mu_1^2 <Phi1, A^{-1} Phi1>)^{1/2} = mu_1^{1/2}``.

    Sharp: ``u = Phi1`` gives equality.
    """
    p1 = basis.phi[0]
    w = basis.domain.weight
    inner = w * float(p1 @ (basis.inverse_matrix @ p1))
    return math.sqrt(basis.mu[0] ** 2 * inner)


def l1_phi1_norm(basis: EigenBasis, u) -> float:
    return basis.domain.weight * float(np.abs(values_of(u, basis.domain)) @ basis.phi[0])


def _zero_padded(f, domain):
    return np.concatenate([[0.0], f, [0.0]]), np.concatenate([[0.0], domain.axis, [1.0]])


def gagliardo_seminorm(f: GridFunction, s: float) -> float:
    """``[E0 f]_{W^{s,2}(R)}`` for the zero extension of an interval grid function.

    Trapezoid rule on the off-diagonal node pairs of [0,1]^2, a diagonal correction
    for the locally linear behaviour ``|f(x)-f(y)|^2 ~ f'(x)^2 |x-y|^2`` (the
    zeta-function defect of the punctured sum of ``|z|^{1-2s}``), and the exact
    exterior contribution ``2 int f^2 (x^{-2s} + (1-x)^{-2s}) / (2s)``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0,1)")
    if s >= 0.95:
        warnings.warn("Gagliardo quadrature degrades as s approaches 1", RuntimeWarning, stacklevel=2)
    dom = f.domain
    if dom.geometry is not Geometry.INTERVAL:
        raise ValueError("the Gagliardo seminorm is implemented on the interval")
    v = f.values
    if not np.any(v):
        return 0.0
    h = dom.h
    F, x = _zero_padded(v, dom)
    wq = np.full(F.size, h)
    wq[0] = wq[-1] = 0.5 * h
    D = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(D, 1.0)
    K = (F[:, None] - F[None, :]) ** 2 / D ** (1.0 + 2.0 * s)
    np.fill_diagonal(K, 0.0)
    inner = float(wq @ K @ wq)
    fp = np.gradient(F, h)
    diag = -2.0 * float(zeta(2.0 * s - 1.0)) * h ** (2.0 - 2.0 * s) * float(wq @ fp**2)
    xi = dom.axis
    kappa = (xi ** (-2.0 * s) + (1.0 - xi) ** (-2.0 * s)) / (2.0 * s)
    ext = 2.0 * h * float(np.sum(v**2 * kappa))
    return math.sqrt(max(inner + diag + ext, 0.0))


@dataclass(frozen=True)
class InterpolationSpec:
    """Discrete J-method parameters; ``q`` is fixed to 2."""

    theta: float
    Lambda0: float = math.inf
    q: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0,1]")
        if self.q != 2.0:
            raise ValueError("only q = 2 is supported")
        if not self.Lambda0 >= 1.0:
            raise ValueError("Lambda0 must be at least 1")

    @classmethod
    def for_basis(cls, basis: EigenBasis, theta: float) -> "InterpolationSpec":
        spec = cls(theta, max_ratio(basis))
        spec.validate(basis)
        return spec

    def validate(self, basis: EigenBasis):
        r = max_ratio(basis)
        if not np.isfinite(self.Lambda0) or r > self.Lambda0:
            raise ValueError(f"eigenvalue ratio {r:.6g} exceeds Lambda0 = {self.Lambda0}")

    @property
    def Lambda1(self) -> float:
        """Equivalence-constant diagnostic ``Lambda0^theta (log Lambda0)^{1/2}``."""
        L = self.Lambda0
        return L**self.theta * math.sqrt(math.log(L)) if L > 1 else 0.0


def max_ratio(basis: EigenBasis) -> float:
    b = basis.base_mu
    return float(np.max(b[1:] / b[:-1])) if b.size > 1 else 1.0


def discrete_j_norm(basis: EigenBasis, f, spec: InterpolationSpec) -> float:
    """Mode-wise J-method norm of ``f`` between the base energy space X0 and L^2.

    ``u_k = f_k phi_k`` with ``|u_k|_{X0} = base_k^{1/2} |f_k|`` and ``|u_k|_{X1} = |f_k|``;
    the parameter ``t_k = |u_k|_{X0} / |u_k|_{X1}`` balances J(t, u) = max(|u|_X0, t |u|_X1).
    """
    spec.validate(basis)
    c = basis.coeffs(f)
    nz = c != 0
    if not np.any(nz):
        return 0.0
    c, base = np.abs(c[nz]), basis.base_mu[nz]
    x0 = np.sqrt(base) * c
    x1 = c
    t = x0 / x1
    J = np.maximum(x0, t * x1)
    return float(np.sqrt(np.sum((t ** (-spec.theta) * J) ** 2)))


@dataclass
class SobolevReport:
    q: float
    primal_constant: float
    dual_constant: float
    maximizer: GridFunction
    trials: int
    seed: int

    def __post_init__(self):
        if not (self.primal_constant > 0 and self.dual_constant > 0):
            raise ValueError("Sobolev constants must be positive")

    @property
    def relative_gap(self) -> float:
        return abs(self.primal_constant - self.dual_constant) / self.primal_constant


def critical_exponent(d: int, s: float) -> float:
    return 2.0 * d / (d - 2.0 * s) if d > 2 * s else math.inf


def _lq(w, f, q):
    return (w * np.sum(np.abs(f) ** q)) ** (1.0 / q)


def sobolev_constants(basis: EigenBasis, q: float, trials: int = 20, seed: int = 0,
                      max_iter: int = 3000, rtol: float = 1e-13) -> SobolevReport:
    """Best found ``|f|_q / |f|_H`` and ``|g|_{H*} / |g|_{q'}`` by multi-start ascent.

    Primal: normalised gradient ascent for the convex functional ``|f|_q^q`` on the
    unit sphere of H (coordinates ``y = mu^{1/2} f_k``).  Dual: conditional gradient
    on the L^{q'} ball for the convex functional ``|g|_{H*}^2``.  Both are monotone.
    Trial 0 starts from ``Phi1``; the others from seeded Gaussian data.
    """
    if not basis.complete:
        raise ValueError("Sobolev constants need the complete basis")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    s = basis.order if basis.operator is None else basis.operator.s
    d = basis.domain.dim
    qc = critical_exponent(d, s)
    if not (1.0 < q <= qc) or not np.isfinite(q):
        cond = f"q <= 2d/(d-2s) = {qc:.6g} since d > 2s" if d > 2 * s else "q finite since d <= 2s"
        raise ValueError(f"q = {q} is not admissible: need 1 < q and {cond}")
    qp = q / (q - 1.0)
    w = basis.domain.weight
    phi, mu = basis.phi, basis.mu
    rs = np.sqrt(mu)
    rng = np.random.default_rng(seed)
    starts = [phi[0].copy()] + [rng.standard_normal(basis.domain.n_nodes) for _ in range(trials - 1)]

    best_p, best_f = -1.0, None
    for f0 in starts:
        y = rs * (w * phi @ f0)
        y /= np.linalg.norm(y)
        val = 0.0
        for _ in range(max_iter):
            f = (y / rs) @ phi
            g = np.abs(f) ** (q - 2.0) * f
            y_new = (w * phi @ g) / rs
            y_new /= np.linalg.norm(y_new)
            new = _lq(w, (y_new / rs) @ phi, q)
            done = abs(new - val) <= rtol * new
            y, val = y_new, new
            if done:
                break
        if val > best_p:
            best_p, best_f = val, (y / rs) @ phi

    best_d = -1.0
    for g0 in starts:
        g = g0 / _lq(w, g0, qp)
        val = 0.0
        for _ in range(max_iter):
            p = (w * phi @ g) / mu @ phi
            g_new = np.abs(p) ** (q - 1.0) * np.sign(p)
            g_new /= _lq(w, g_new, qp)
            c = w * phi @ g_new
            new = math.sqrt(float(np.sum(c**2 / mu)))
            done = abs(new - val) <= rtol * new
            g, val = g_new, new
            if done:
                break
        best_d = max(best_d, val)

    if best_f is not None and best_f.sum() < 0:
        best_f = -best_f
    fmax = GridFunction(best_f / h_norm(basis, best_f), basis.domain)
    return SobolevReport(q, best_p, best_d, fmax, trials, seed)


def hardy_weight(domain: DomainSpec) -> np.ndarray:
    x = domain.nodes
    if domain.dim == 1:
        return np.sin(np.pi * x)
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def hardy_ratio(basis: EigenBasis, f, s: float) -> float:
    """``|f / phi^s|_{L^2} / |f|_H`` with the smooth distance weight ``phi = sin(pi x)``."""
    if s >= 0.5:
        warnings.warn("for s >= 1/2 the Hardy-type inequality needs the H_0 setting",
                      RuntimeWarning, stacklevel=2)
    v = values_of(f, basis.domain)
    if not np.any(v):
        return 0.0
    num = math.sqrt(basis.domain.weight * float(np.sum((v / hardy_weight(basis.domain) ** s) ** 2)))
    return num / h_norm(basis, v)


def holder_seminorm(f: GridFunction, alpha: float, zero_extend: bool = True) -> float:
    """Brute-force ``max |f(x)-f(y)| / |x-y|^alpha`` over node pairs.

    With ``zero_extend`` the boundary nodes (value 0) take part in the comparison.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0,1]")
    dom = f.domain
    v = f.values
    x = dom.nodes.reshape(dom.n_nodes, -1)
    if zero_extend:
        if dom.dim == 1:
            v = np.concatenate([[0.0], v, [0.0]])
            x = np.array([[0.0]] + x.tolist() + [[1.0]])
        else:
            g = np.linspace(0.0, 1.0, dom.n_interior + 2)
            X, Y = np.meshgrid(g, g, indexing="ij")
            V = np.zeros_like(X)
            V[1:-1, 1:-1] = f.values.reshape(dom.n_interior, dom.n_interior)
            x, v = np.column_stack([X.ravel(), Y.ravel()]), V.ravel()
    best = 0.0
    for i in range(len(v) - 1):
        dist = np.sqrt(np.sum((x[i + 1:] - x[i]) ** 2, axis=1))
        best = max(best, float(np.max(np.abs(v[i + 1:] - v[i]) / dist**alpha)))
    return best


def gn_ratio(f: GridFunction, alpha: float, zero_extend: bool = True) -> float:
    """Scale-invariant ``|f|_inf^{1+a/d} / (|f|_{C^a} |f|_1^{a/d})``."""
    d = f.domain.dim
    sem = holder_seminorm(f, alpha, zero_extend)
    if sem == 0.0:
        raise ValueError("gn_ratio is undefined for functions with zero Hoelder seminorm")
    sup = f.norm(np.inf)
    l1 = f.norm(1)
    return sup ** (1.0 + alpha / d) / (sem * l1 ** (alpha / d))


def inequality_record(name, primal, dual, q, s, grid, seed) -> dict:
    return {"name": name, "constant_primal": primal, "constant_dual": dual,
            "q": q, "s": s, "grid": grid, "seed": seed}
