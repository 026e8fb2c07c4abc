"""Friendly giant, sublinear elliptic problem, Harnack bands and decay rates."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .evolution import (EvolutionParams, EvolutionTrace, NonlinearitySpec, check_rescaled_dt,
                        evolve, resolvent_solve)
from .spaces import gn_ratio
from .spectral import EigenBasis, GridFunction, values_of


class UniquenessError(RuntimeError):
    """Two ordered starts of a monotone iteration reached different limits."""


class StabilizationError(RuntimeError):
    def __init__(self, message, increment):
        super().__init__(message)
        self.increment = increment


class GiantRoute(str, enum.Enum):
    FIXED_POINT = "fixed_point"
    EVOLUTION_LIMIT = "evolution_limit"


@dataclass(eq=False)
class GiantProfile:
    S: GridFunction
    residual_sup: float
    route: GiantRoute
    m: float
    c: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.S.values <= 0):
            raise ValueError("giant profile must be positive at interior nodes")


def stationary_residual(basis: EigenBasis, S, m, c=None) -> float:
    """``|A(S^m) - c S|_inf / |c S|_inf`` with ``c = 1/(m-1)`` by default."""
    c = 1.0 / (m - 1.0) if c is None else c
    S = values_of(S, basis.domain)
    return float(np.max(np.abs(basis.matrix @ S**m - c * S)) / np.max(np.abs(c * S)))


def _sup_rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def _monotone_iteration(step, z, tol, max_iter):
    for k in range(1, max_iter + 1):
        zn = step(z)
        if _sup_rel(zn, z) < tol:
            return zn, k
        z = zn
    return z, max_iter


def giant_fixed_point(basis: EigenBasis, m: float, c: float | None = None,
                      tol: float = 1e-14, max_iter: int = 2000,
                      agree_tol: float = 1e-8) -> GiantProfile:
    """Solve ``A(S^m) = c S`` by ``z <- A^{-1}(c z^{1/m})`` on ``z = S^m``.

    Starts from an ordered sub/supersolution pair ``eps Phi1^m`` and ``M A^{-1}(1)``,
    so both sequences are monotone (A^{-1} is order preserving).
    """
    if m <= 1:
        raise ValueError("the friendly giant needs m > 1")
    c = 1.0 / (m - 1.0) if c is None else float(c)
    Ainv = basis.inverse_matrix
    p1 = basis.phi[0]
    if np.any(p1 <= 0):
        raise ValueError("first eigenfunction is not positive on the grid")
    G = Ainv @ np.ones(basis.domain.n_nodes)
    eps = 0.5 * (c / (basis.mu[0] * np.max(p1) ** (m - 1.0))) ** (m / (m - 1.0))
    M = 2.0 * (c * np.max(G) ** (1.0 / m)) ** (m / (m - 1.0))

    def step(z):
        return Ainv @ (c * np.abs(z) ** (1.0 / m))

    lo, k_lo = _monotone_iteration(step, eps * p1**m, tol, max_iter)
    hi, k_hi = _monotone_iteration(step, M * G, tol, max_iter)
    gap = _sup_rel(lo, hi)
    if gap > agree_tol:
        raise UniquenessError(f"giant iterations from below and above differ by {gap:.3e}")
    S = (0.5 * (lo + hi)) ** (1.0 / m)
    res = stationary_residual(basis, S, m, c)
    if res > 1e-8:
        raise RuntimeError(f"giant residual {res:.3e} above 1e-8")
    return GiantProfile(GridFunction(S, basis.domain), res, GiantRoute.FIXED_POINT, m, c,
                        {"iterations": (k_lo, k_hi), "start_gap": gap})


def giant_amplitude_bound(basis: EigenBasis, m: float) -> float:
    """Upper bound ``(|A^{-1} 1|_inf / (m-1))^{1/(m-1)}`` for ``|S|_inf``."""
    G = basis.inverse_matrix @ np.ones(basis.domain.n_nodes)
    return float((np.max(G) / (m - 1.0)) ** (1.0 / (m - 1.0)))


def subsolution_start(basis: EigenBasis, m: float) -> np.ndarray:
    """Small data ``eps (A^{-1} 1)^{1/m}`` that is a strict subsolution of the stationary problem."""
    G = basis.inverse_matrix @ np.ones(basis.domain.n_nodes)
    eps = (0.5 * np.min(G) ** (1.0 / m) / (m - 1.0)) ** (1.0 / (m - 1.0))
    return eps * G ** (1.0 / m)


def _rescaled_until_stable(basis, nl, v, dt, t_end, tol, newton_tol):
    A = basis.matrix
    a = 1.0 - dt / (nl.m - 1.0)
    per_unit = int(round(1.0 / dt))
    t, min_inc, inc = 0.0, np.inf, np.inf
    mark = v.copy()
    k = 0
    while t < t_end - 1e-12:
        new = resolvent_solve(A, nl, dt, v, scale=a, tol=newton_tol)
        min_inc = min(min_inc, float(np.min(new - v)))
        v = new
        k += 1
        t = k * dt
        if k % per_unit == 0:
            inc = float(np.max(np.abs(v - mark)))
            if inc < tol:
                return v, t, inc, min_inc
            mark = v.copy()
    raise StabilizationError(f"rescaled flow not stable by t = {t_end}; last unit increment {inc:.3e}", inc)


def giant_evolution_limit(basis: EigenBasis, m: float, dt: float = 0.05, t_end: float = 200.0,
                          tol: float = 1e-9, newton_tol: float = 1e-12) -> GiantProfile:
    """Long-time limit of the rescaled flow from a large constant and from a small subsolution."""
    if m <= 1:
        raise ValueError("the friendly giant needs m > 1")
    check_rescaled_dt(dt, m)
    if abs(1.0 / dt - round(1.0 / dt)) > 1e-9:
        raise ValueError("dt must divide 1")
    nl = NonlinearitySpec(m)
    n = basis.domain.n_nodes
    amp = 10.0 * giant_amplitude_bound(basis, m)
    hi, t_hi, inc_hi, _ = _rescaled_until_stable(basis, nl, np.full(n, amp), dt, t_end, tol, newton_tol)
    lo, t_lo, inc_lo, min_inc = _rescaled_until_stable(basis, nl, subsolution_start(basis, m), dt,
                                                       t_end, tol, newton_tol)
    res = stationary_residual(basis, hi, m)
    details = {"from_above_t": t_hi, "from_below_t": t_lo, "below": GridFunction(lo, basis.domain),
               "two_sided_gap": _sup_rel(lo, hi), "below_min_increment": min_inc,
               "start_amplitude": amp}
    return GiantProfile(GridFunction(hi, basis.domain), res, GiantRoute.EVOLUTION_LIMIT, m,
                        1.0 / (m - 1.0), details)


def sublinear_solve(basis: EigenBasis, p: float, tol: float = 1e-12, max_iter: int = 5000,
                    agree_tol: float = 1e-8) -> GridFunction:
    """Positive solution of ``A v = v^p`` (0 < p < 1) by ``v <- A^{-1}(v^p)`` from two ordered starts."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0,1)")
    Ainv = basis.inverse_matrix
    p1 = basis.phi[0]
    G = Ainv @ np.ones(basis.domain.n_nodes)
    eps = 0.5 * (np.max(p1) ** (p - 1.0) / basis.mu[0]) ** (1.0 / (1.0 - p))
    M = 2.0 * np.max(G) ** (p / (1.0 - p))

    def step(v):
        return Ainv @ np.abs(v) ** p

    lo, _ = _monotone_iteration(step, eps * p1, tol, max_iter)
    hi, _ = _monotone_iteration(step, M * G, tol, max_iter)
    gap = _sup_rel(lo, hi)
    if gap > agree_tol:
        raise UniquenessError(f"sublinear iterations from below and above differ by {gap:.3e}")
    return GridFunction(0.5 * (lo + hi), basis.domain)


@dataclass
class RateFit:
    window: tuple
    exponent: float
    intercept: float
    r_squared: float
    n_points: int = 0

    def __post_init__(self):
        self.r_squared = min(max(self.r_squared, 0.0), 1.0)


def fit_rate(times, values, window=None) -> RateFit:
    """Least squares of ``log(values)`` against ``times`` on ``window`` (default: last half)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-9:
        raise ValueError(f"window {window} outside the trace [{t[0]}, {t[-1]}]")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12) & (y > 0)
    if sel.sum() < 3:
        raise ValueError("not enough positive samples in the fit window")
    X, Y = t[sel], np.log(y[sel])
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return RateFit((float(lo), float(hi)), float(slope), float(icpt), r2, int(sel.sum()))


def relative_error(trace: EvolutionTrace, giant: GiantProfile) -> np.ndarray:
    """``w = v/S - 1`` per snapshot of a rescaled trace."""
    if not trace.rescaled:
        raise ValueError("relative errors are defined on rescaled traces")
    return trace.snapshots / giant.S.values - 1.0


def to_original_time(trace: EvolutionTrace):
    """``(tau, u)`` with ``tau = e^t - 1`` and ``u = v (1+tau)^{-1/(m-1)}`` for a rescaled trace."""
    if not trace.rescaled:
        return trace.times, trace.snapshots
    tau = np.expm1(trace.times)
    return tau, trace.snapshots * ((1.0 + tau) ** (-1.0 / (trace.nl.m - 1.0)))[:, None]


@dataclass
class EntropyReport:
    times: np.ndarray
    entropy: np.ndarray
    wbar: np.ndarray
    weighted_L2: np.ndarray
    L1_diff: np.ndarray
    sup_w: np.ndarray
    fits: dict

    def rows(self):
        return zip(self.times, self.entropy, self.wbar, self.weighted_L2, self.L1_diff)


def entropy_report(trace: EvolutionTrace, giant: GiantProfile, window=None) -> EntropyReport:
    """Time series of the mean-centred entropy and companion norms, with exponent fits."""
    m = trace.nl.m
    if m <= 1:
        raise ValueError("entropy decay needs m > 1")
    S = giant.S.values
    if np.any(S <= 0):
        raise ZeroDivisionError("giant profile vanishes at a node")
    h = trace.basis.domain.weight
    W = relative_error(trace, giant)
    wt = S ** (1.0 + m)
    wbar = (W @ wt) / wt.sum()
    E = 0.5 * h * ((W - wbar[:, None]) ** 2) @ wt
    D = trace.snapshots - S
    L2 = h * (D**2) @ S ** (m - 1.0)
    L1 = h * np.sum(np.abs(D), axis=1)
    sup = np.max(np.abs(W), axis=1)
    fits = {}
    for name, series in (("entropy", E), ("wbar", np.abs(wbar)), ("weighted_L2", L2),
                         ("L1_diff", L1), ("sup_w", sup)):
        try:
            fits[name] = fit_rate(trace.times, series, window)
        except ValueError:
            fits[name] = None
    return EntropyReport(trace.times.copy(), E, wbar, L2, L1, sup, fits)


def entropy_monotone_check(rep: EntropyReport, smallness=0.1, tol=1e-10):
    """``E(t_{n+1}) <= E(t_n) + tol`` once ``|w|_inf <= smallness``; returns (passed, worst increase, start time)."""
    idx = np.nonzero(rep.sup_w <= smallness)[0]
    if idx.size == 0:
        return False, math.nan, math.nan
    k0 = idx[0]
    # the smallness regime must persist
    inc = np.diff(rep.entropy[k0:])
    worst = float(inc.max()) if inc.size else 0.0
    return worst <= tol, worst, float(rep.times[k0])


def wbar_floor_check(rep: EntropyReport, t1: float, slack: float = 0.05, rate: float = 1.0):
    """``wbar(t) <= e^{-rate (t - t1)} wbar(t1) + slack |e^{-rate (t-t1)} wbar(t1)|`` for ``t >= t1``."""
    k1 = int(np.argmin(np.abs(rep.times - t1)))
    t = rep.times[k1:]
    ref = np.exp(-rate * (t - rep.times[k1])) * rep.wbar[k1]
    margin = ref + slack * np.abs(ref) - rep.wbar[k1:]
    return bool(np.all(margin >= 0)), float(margin.min())


def relative_error_rate(trace: EvolutionTrace, giant: GiantProfile, window, t0: float | None = None) -> RateFit:
    """Exponent of ``|v/S - 1|_inf`` in rescaled time.  ``t0`` is in original time."""
    if t0 is not None and window[0] < math.log1p(t0):
        raise ValueError(f"fit window starts at t = {window[0]} before log(1+t0) = {math.log1p(t0):.4g}")
    sup = np.max(np.abs(relative_error(trace, giant)), axis=1)
    return fit_rate(trace.times, sup, window)


def original_relative_error(trace: EvolutionTrace, giant: GiantProfile, time_shift: float = 0.0):
    """``(tau, |u/U - 1|_inf)`` with ``U(tau) = S (tau + shift)^{-1/(m-1)}``, skipping tau = 0."""
    tau, U = to_original_time(trace)
    m = trace.nl.m
    k = tau + time_shift > 0
    ratio = U[k] * ((tau[k] + time_shift) ** (1.0 / (m - 1.0)))[:, None] / giant.S.values
    return tau[k], np.max(np.abs(ratio - 1.0), axis=1)


def empirical_t0(trace: EvolutionTrace, giant: GiantProfile, t_star: float) -> float:
    """Smallest shift with ``u(tau) >= S (tau + t0)^{-1/(m-1)}`` for all sampled ``tau >= t_star``."""
    tau, U = to_original_time(trace)
    m = trace.nl.m
    sel = tau >= t_star
    if not np.any(sel):
        raise ValueError("no samples after t_star")
    need = np.max((giant.S.values / U[sel]) ** (m - 1.0), axis=1) - tau[sel]
    return float(max(need.max(), 0.0))


@dataclass
class BoundCheck:
    passed: bool
    worst_margin: float
    t0_used: float
    samples: int


def relative_error_bound_check(trace, giant, t0, t_star, inflate=2.0) -> BoundCheck:
    """``|u/U - 1|_inf <= (2/(m-1)) t0/(t0 + tau)`` on samples ``tau >= max(t_star, t0)``."""
    m = trace.nl.m
    t0i = inflate * t0
    tau, err = original_relative_error(trace, giant)
    sel = tau >= max(t_star, t0)
    bound = 2.0 / (m - 1.0) * t0i / (t0i + tau[sel])
    margin = bound - err[sel]
    return BoundCheck(bool(np.all(margin >= 0)), float(margin.min()) if margin.size else math.inf,
                      t0i, int(sel.sum()))


def displaced_giant_error(basis: EigenBasis, giant: GiantProfile, t1: float, tau: float,
                          dt: float = 1e-3) -> tuple[float, float]:
    """Evolve ``u0 = S t1^{-1/(m-1)}`` to ``tau``; return (measured, closed form) relative error to U(tau)."""
    m = giant.m
    nl = NonlinearitySpec(m)
    u0 = giant.S.values * t1 ** (-1.0 / (m - 1.0))
    tr = evolve(basis, nl, u0, EvolutionParams(dt=dt, t_end=tau))
    k = tr.index_of(tau)
    U = giant.S.values * tr.times[k] ** (-1.0 / (m - 1.0))
    measured = float(np.max(np.abs(tr.snapshots[k] / U - 1.0)))
    exact = 1.0 - (tr.times[k] / (tr.times[k] + t1)) ** (1.0 / (m - 1.0))
    return measured, exact


def separable_amplitudes(trace: EvolutionTrace, g0: float) -> np.ndarray:
    """Discrete separable solution ``S g_n`` on the trace's own time grid.

    ``g_{n+1} + dt g_{n+1}^m/(m-1) = g_n`` (original time) or with the rescaled
    prefactor ``1 - dt/(m-1)``; solved per step by bracketing.
    """
    m = trace.nl.m
    g = np.empty(trace.times.size)
    g[0] = g0
    for k in range(1, g.size):
        dt = trace.times[k] - trace.times[k - 1]
        a = 1.0 - dt / (m - 1.0) if trace.rescaled else 1.0
        prev = g[k - 1]
        g[k] = optimize.brentq(lambda x: a * x + dt * x**m / (m - 1.0) - prev, 0.0, prev / a,
                               xtol=1e-15 * max(prev, 1.0), rtol=4 * np.finfo(float).eps)
    return g


def giant_domination(trace: EvolutionTrace, giant: GiantProfile, tol=1e-8):
    """Domination by the separable solution through ``S``.

    Asserted form: ``u_n <= S g_n + tol`` with ``g`` the discrete separable
    amplitude started at ``max(u_0/S)`` (the discrete comparison principle makes
    this exact).  Also returns the continuous excess
    ``max(u(tau) - S tau^{-1/(m-1)})`` in original time, which carries the
    O(dt/tau) lag of backward Euler.
    """
    S = giant.S.values
    g = separable_amplitudes(trace, max(float(np.max(trace.snapshots[0] / S)), 0.0))
    worst = float(np.max(trace.snapshots - g[:, None] * S[None, :]))
    tau, U = to_original_time(trace)
    k = tau > 0
    cont = U[k] - S[None, :] * (tau[k] ** (-1.0 / (trace.nl.m - 1.0)))[:, None]
    return worst <= tol, worst, float(cont.max())


def interpolation_upgrade(trace: EvolutionTrace, giant: GiantProfile, alpha: float, window):
    """Scale-invariant ratio of ``v(t) - S`` on the window; returns (times, ratios)."""
    sel = (trace.times >= window[0]) & (trace.times <= window[1])
    out = []
    for k in np.nonzero(sel)[0]:
        out.append(gn_ratio(trace.at(k) - giant.S, alpha))
    return trace.times[sel], np.array(out)


@dataclass
class GHPReport:
    t_star_empirical: float
    H0_emp: float
    H1_emp: float
    band_ratio_history: np.ndarray
    history_times: np.ndarray
    plateau: float

    def __post_init__(self):
        if not (0 < self.H0_emp <= self.H1_emp):
            raise ValueError("empirical Harnack constants must satisfy 0 < H0 <= H1")
        if self.history_times.size and self.history_times[0] < self.t_star_empirical:
            raise ValueError("history precedes t*")

    def band_ratio_at(self, t) -> float:
        k = int(np.argmin(np.abs(self.history_times - t)))
        return float(self.band_ratio_history[k])


def harnack_quotient(tau, U, phi1, m, time_shift=0.0):
    return U * ((tau + time_shift) ** (1.0 / (m - 1.0)))[:, None] / phi1 ** (1.0 / m)


def ghp_check(trace: EvolutionTrace, nl: NonlinearitySpec, time_shift: float = 0.0) -> GHPReport:
    """Empirical Harnack band for ``r = u t^{1/(m-1)} / Phi1^{1/m}``.

    ``t*`` is the first sample where ``min_x r`` reaches half of its plateau, the
    plateau being the median of ``min_x r`` over the last decade of sampled time.
    """
    if nl.m <= 1:
        raise ValueError("the Harnack band needs m > 1")
    tau, U = to_original_time(trace)
    if not np.any(U):
        raise ValueError("degenerate input: u vanishes identically")
    if np.any(U[0] < 0):
        raise ValueError("the Harnack band needs nonnegative data")
    keep = tau + time_shift > 0
    tau, U = tau[keep], U[keep]
    r = harnack_quotient(tau, U, trace.basis.phi[0], nl.m, time_shift)
    rmin, rmax = r.min(axis=1), r.max(axis=1)
    T = tau[-1] + time_shift
    last = (tau + time_shift) >= T / 10.0
    plateau = float(np.median(rmin[last]))
    hit = np.nonzero(rmin >= 0.5 * plateau)[0]
    if hit.size == 0 or plateau <= 0:
        raise ValueError("Harnack band never stabilises on this trace")
    k = hit[0]
    return GHPReport(float(tau[k]), float(rmin[k:].min()), float(rmax[k:].max()),
                     rmax[k:] / rmin[k:], tau[k:].copy(), plateau)


def ghp_scaling(basis: EigenBasis, nl: NonlinearitySpec, u0, amplitudes, tau0=1e-4,
                growth=0.02, t_end=1e4):
    """Empirical t* for ``a u0`` per amplitude ``a`` on a geometric original-time grid."""
    params = EvolutionParams(dt=tau0, t_end=t_end, grid="geometric", growth=growth)
    u0 = values_of(u0, basis.domain)
    out = {}
    for a in amplitudes:
        tr = evolve(basis, nl, a * u0, params)
        out[a] = ghp_check(tr, nl)
    return out
