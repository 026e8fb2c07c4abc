"""Implicit Euler integration of  u_t + A(|u|^{m-1} u) = 0  and of the rescaled flow.

Every step is one resolvent solve  a*u + dt*A phi(u) = f  (``a = 1`` in original
time, ``a = 1 - dt/(m-1)`` in rescaled time) done by damped Newton in ``u``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .spectral import EigenBasis, GridFunction, values_of

log = logging.getLogger(__name__)


class ResolventError(RuntimeError):
    """Inner nonlinear solve did not converge."""

    def __init__(self, message, residual, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


@dataclass(frozen=True)
class NonlinearitySpec:
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("m must be positive")

    def phi(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * np.abs(u) ** self.m

    def eta(self, w):
        w = np.asarray(w, dtype=float)
        return np.sign(w) * np.abs(w) ** (1.0 / self.m)

    def dphi(self, u, floor=0.0):
        a = np.abs(np.asarray(u, dtype=float))
        if self.m < 1.0:
            a = np.maximum(a, floor)
        return self.m * a ** (self.m - 1.0)

    def j(self, u):
        return np.abs(np.asarray(u, dtype=float)) ** (self.m + 1.0) / (self.m + 1.0)


@dataclass(frozen=True)
class EvolutionParams:
    dt: float
    t_end: float
    newton_tol: float = 1e-11
    newton_max_iter: int = 50
    picard_max_iter: int = 200
    rescaled: bool = False
    grid: str = "uniform"
    growth: float = 0.0
    m: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.grid not in ("uniform", "geometric"):
            raise ValueError("grid must be 'uniform' or 'geometric'")
        if self.grid == "geometric" and not self.growth > 0:
            raise ValueError("geometric grids need growth > 0")
        if self.rescaled and self.grid != "uniform":
            raise ValueError("the rescaled flow uses a uniform grid in t")
        if self.rescaled and self.m is not None:
            check_rescaled_dt(self.dt, self.m)

    def times(self) -> np.ndarray:
        if self.grid == "uniform":
            N = int(np.ceil(self.t_end / self.dt - 1e-9))
            return self.dt * np.arange(N + 1)
        t = [0.0, self.dt]
        while t[-1] < self.t_end * (1 - 1e-12):
            t.append(t[-1] * (1.0 + self.growth))
        return np.array(t)


def check_rescaled_dt(dt, m):
    if m <= 1:
        raise ValueError("the rescaled flow needs m > 1")
    if dt > (m - 1.0) / 2.0:
        raise ValueError(f"rescaled dt = {dt} exceeds the stability bound (m-1)/2 = {(m - 1) / 2}")


def geometric_times(tau0, growth, t_end):
    """``0, tau0, tau0(1+r), tau0(1+r)^2, ...`` up to ``t_end``."""
    return EvolutionParams(dt=tau0, t_end=t_end, grid="geometric", growth=growth).times()


def _matrix(op):
    if isinstance(op, EigenBasis):
        return op.matrix
    return np.asarray(op, dtype=float)


@dataclass
class ResolventInfo:
    iterations: int
    residual: float
    method: str


def resolvent_solve(op, nl: NonlinearitySpec, dt: float, f, *, scale: float = 1.0,
                    tol: float = 1e-11, max_iter: int = 50, picard_iter: int = 200,
                    u_init=None, info: list | None = None) -> np.ndarray:
    """Solve ``scale*u + dt*A phi(u) = f`` for ``u``.

    ``tol`` is a max-norm residual tolerance relative to ``max(1, |f|_inf)``.
    Returns nodal values; if ``info`` is a list a :class:`ResolventInfo` is appended.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = _matrix(op)
    f = np.asarray(f.values if isinstance(f, GridFunction) else f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("data must be finite")
    n = f.size
    thresh = tol * max(1.0, float(np.max(np.abs(f))) if n else 0.0)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(f))))
    I = np.eye(n)

    def resid(u):
        return scale * u + dt * (A @ nl.phi(u)) - f

    u = f / scale if u_init is None else np.array(u_init, dtype=float)
    r = resid(u)
    rn = float(np.max(np.abs(r))) if n else 0.0
    it = 0

    def newton(u, r, rn, budget):
        k = 0
        while rn > thresh and k < budget:
            k += 1
            J = scale * I + dt * A * nl.dphi(u, floor)[None, :]
            try:
                du = linalg.solve(J, -r, check_finite=False)
            except linalg.LinAlgError:
                return u, r, rn, k, False
            step, ok = 1.0, False
            for _ in range(40):
                cand = u + step * du
                rc = resid(cand)
                rcn = float(np.max(np.abs(rc)))
                if rcn < rn:
                    ok = True
                    break
                step *= 0.5
            if not ok:
                return u, r, rn, k, False
            u, r, rn = cand, rc, rcn
        return u, r, rn, k, rn <= thresh

    u, r, rn, k, ok = newton(u, r, rn, max_iter)
    it += k
    method = "newton"
    if not ok:
        # frozen-coefficient (Kacanov) iterations: (scale*I + dt*A*D(u_k)) u = f
        method = "picard"
        for _ in range(picard_iter):
            D = np.abs(u) ** (nl.m - 1.0) if nl.m >= 1 else np.maximum(np.abs(u), floor) ** (nl.m - 1.0)
            u = linalg.solve(scale * I + dt * A * D[None, :], f, check_finite=False)
            it += 1
        r = resid(u)
        rn = float(np.max(np.abs(r)))
        u, r, rn, k, ok = newton(u, r, rn, max_iter)
        it += k
        if not ok:
            raise ResolventError(f"resolvent solve failed, residual {rn:.3e}", rn)
    if info is not None:
        info.append(ResolventInfo(it, rn, method))
    return u


@dataclass(eq=False)
class EvolutionTrace:
    times: np.ndarray
    snapshots: np.ndarray
    diagnostics: dict
    basis: EigenBasis = field(repr=False)
    nl: NonlinearitySpec
    rescaled: bool = False

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if self.snapshots.shape[0] != self.times.size:
            raise ValueError("snapshot count differs from time count")

    def __len__(self):
        return self.times.size

    def at(self, k) -> GridFunction:
        return GridFunction(self.snapshots[k], self.basis.domain)

    def index_of(self, t) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def _diagnostics(basis: EigenBasis, nl, U):
    w = basis.domain.weight
    Minv = basis.inverse_matrix
    hstar = np.sqrt(np.maximum(w * np.einsum("ij,jk,ik->i", U, Minv, U), 0.0))
    return {
        "sup_norm": np.max(np.abs(U), axis=1),
        "hstar_norm": hstar,
        "L1_Phi1": w * np.abs(U) @ basis.phi[0],
        "lyapunov": w * np.sum(nl.j(U), axis=1),
    }


def evolve(basis: EigenBasis, nl: NonlinearitySpec, u0, params: EvolutionParams,
           times=None) -> EvolutionTrace:
    """Backward Euler chain of resolvent solves.

    In rescaled mode the flow is ``v_t + A(v^m) = v/(m-1)`` with the source implicit:
    ``(1 - dt/(m-1)) v + dt A phi(v) = v_prev``.
    """
    if params.rescaled:
        check_rescaled_dt(params.dt, nl.m)
    u = np.array(values_of(u0, basis.domain), dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial data must be finite")
    t = params.times() if times is None else np.asarray(times, dtype=float)
    out = np.empty((t.size, u.size))
    out[0] = u
    iters = np.zeros(t.size, dtype=int)
    A = basis.matrix
    for k in range(1, t.size):
        dt = t[k] - t[k - 1]
        scale = 1.0 - dt / (nl.m - 1.0) if params.rescaled else 1.0
        info = []
        try:
            u = resolvent_solve(A, nl, dt, u, scale=scale, tol=params.newton_tol,
                                max_iter=params.newton_max_iter,
                                picard_iter=params.picard_max_iter, info=info)
        except ResolventError as exc:
            raise ResolventError(f"step {k} (t={t[k]:.6g}): {exc}", exc.residual, step=k) from exc
        out[k] = u
        iters[k] = info[0].iterations
    diag = _diagnostics(basis, nl, out)
    diag["newton_iters"] = iters
    return EvolutionTrace(t, out, diag, basis, nl, params.rescaled)


def rescale_trace(trace: EvolutionTrace) -> EvolutionTrace:
    """Map an original-time trace to  v(t) = (1+tau)^{1/(m-1)} u(tau),  t = log(1+tau)."""
    m = trace.nl.m
    if m <= 1:
        raise ValueError("rescaling needs m > 1")
    tau = trace.times
    fac = (1.0 + tau) ** (1.0 / (m - 1.0))
    V = trace.snapshots * fac[:, None]
    diag = _diagnostics(trace.basis, trace.nl, V)
    diag["newton_iters"] = trace.diagnostics["newton_iters"]
    return EvolutionTrace(np.log1p(tau), V, diag, trace.basis, trace.nl, True)


@dataclass
class MonitorReport:
    name: str
    passed: bool
    values: np.ndarray
    first_violation: int | None = None
    worst: float = 0.0


def _check_grids(a: EvolutionTrace, b: EvolutionTrace):
    if a.times.shape != b.times.shape or np.any(a.times != b.times):
        raise ValueError("traces have different time grids")


def contraction_monitor(trace_a, trace_b, basis: EigenBasis, tol=1e-9) -> MonitorReport:
    """H* distance between two traces; flags any per-step increase above ``tol``."""
    _check_grids(trace_a, trace_b)
    D = trace_a.snapshots - trace_b.snapshots
    d = np.sqrt(np.maximum(basis.domain.weight * np.einsum("ij,jk,ik->i", D, basis.inverse_matrix, D), 0))
    inc = np.diff(d)
    bad = np.nonzero(inc > tol)[0]
    return MonitorReport("hstar_contraction", bad.size == 0, d,
                         int(bad[0]) + 1 if bad.size else None,
                         float(inc.max()) if inc.size else 0.0)


def comparison_monitor(trace_a, trace_b, tol=1e-10) -> MonitorReport:
    """If ``a(0) <= b(0)`` nodewise, checks ``a(t) <= b(t) + tol`` at every step."""
    _check_grids(trace_a, trace_b)
    if np.any(trace_a.snapshots[0] > trace_b.snapshots[0]):
        raise ValueError("initial data are not ordered")
    gap = np.max(trace_a.snapshots - trace_b.snapshots, axis=1)
    bad = np.nonzero(gap > tol)[0]
    return MonitorReport("comparison", bad.size == 0, gap,
                         int(bad[0]) if bad.size else None, float(gap.max()))


def positivity_monitor(trace, tol=1e-10) -> MonitorReport:
    low = np.min(trace.snapshots, axis=1)
    bad = np.nonzero(low < -tol)[0]
    return MonitorReport("positivity", bad.size == 0, low,
                         int(bad[0]) if bad.size else None, float(low.min()))


def lyapunov_monitor(trace, tol=1e-10) -> MonitorReport:
    psi = trace.diagnostics["lyapunov"]
    inc = np.diff(psi)
    bad = np.nonzero(inc > tol)[0]
    return MonitorReport("lyapunov", bad.size == 0, psi,
                         int(bad[0]) + 1 if bad.size else None,
                         float(inc.max()) if inc.size else 0.0)


def dissipation_monitor(trace, tol=1e-10) -> MonitorReport:
    """Discrete ``<u_t, A^{-1} u_t>`` per step (must be nonnegative)."""
    dU = np.diff(trace.snapshots, axis=0) / np.diff(trace.times)[:, None]
    w = trace.basis.domain.weight
    q = w * np.einsum("ij,jk,ik->i", dU, trace.basis.inverse_matrix, dU)
    bad = np.nonzero(q < -tol)[0]
    return MonitorReport("dissipation", bad.size == 0, q,
                         int(bad[0]) + 1 if bad.size else None, float(q.min()) if q.size else 0.0)


@dataclass
class SmoothingReport:
    K1: float
    K1_history: np.ndarray
    min_monotonicity: float
    passed: bool


def smoothing_monitor(trace: EvolutionTrace, nl: NonlinearitySpec, tol=1e-8,
                      time_shift: float = 0.0) -> SmoothingReport:
    """Absolute bound ``t^{1/(m-1)} |u(t)|_inf`` and the monotonicity estimate.

    Original time: the estimate ``u_t + u/((m-1) t) >= 0`` is checked in its
    equivalent increment form, ``t^{1/(m-1)} u`` nondecreasing, reported as
    ``(q_{n+1} - q_n) / (dt_n t_{n+1}^{1/(m-1)})`` with ``q = t^{1/(m-1)} u``
    (``t`` shifted by ``time_shift``).  Rescaled traces: min of ``v_t``.
    """
    if nl.m <= 1:
        raise ValueError("the smoothing bounds need m > 1")
    U, t = trace.snapshots, trace.times
    if np.any(U[0] < -tol):
        raise ValueError("smoothing estimates need nonnegative data")
    dt = np.diff(t)
    if trace.rescaled:
        K1h = np.max(np.abs(U), axis=1)
        mono = np.diff(U, axis=0) / dt[:, None]
    else:
        w = (t + time_shift) ** (1.0 / (nl.m - 1.0))
        q = w[:, None] * U
        K1h = np.max(np.abs(q), axis=1)
        mono = np.diff(q, axis=0) / (dt * w[1:])[:, None]
    K1h = K1h[1:]
    mmin = float(mono.min()) if mono.size else 0.0
    return SmoothingReport(float(K1h.max()), K1h, mmin, mmin >= -tol)
