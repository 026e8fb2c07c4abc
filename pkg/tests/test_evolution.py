import math

import numpy as np
import pytest

from fpme.asymptotics import giant_fixed_point, separable_amplitudes, subsolution_start
from fpme.evolution import (EvolutionParams, NonlinearitySpec, ResolventError, comparison_monitor,
                            contraction_monitor, dissipation_monitor, evolve, geometric_times,
                            lyapunov_monitor, positivity_monitor, rescale_trace, resolvent_solve,
                            smoothing_monitor)
from fpme.spaces import hstar_norm
from fpme.spectral import DomainSpec, build_sfl_basis
from oracles import bisection_oracle


@pytest.fixture(scope="module")
def b100():
    return build_sfl_basis(DomainSpec.interval(100), 0.5)


def test_nonlinearity_inverse_lattice():
    for m in (0.5, 1.0, 2.0, 3.0):
        nl = NonlinearitySpec(m)
        u = np.linspace(-3, 3, 61)
        np.testing.assert_allclose(nl.eta(nl.phi(u)), u, atol=1e-12)
        np.testing.assert_allclose(nl.phi(-u), -nl.phi(u))
        assert np.all(np.diff(nl.phi(u)) > 0)
        assert nl.j(2.0) == pytest.approx(2.0 ** (m + 1) / (m + 1))
    with pytest.raises(ValueError):
        NonlinearitySpec(0.0)


def test_resolvent_zero_data(b100):
    info = []
    u = resolvent_solve(b100, NonlinearitySpec(2.0), 0.1, np.zeros(100), info=info)
    assert np.all(u == 0) and info[0].iterations == 0


def test_resolvent_linear_mode(b100):
    dt = 0.05
    for k in (0, 4):
        u = resolvent_solve(b100, NonlinearitySpec(1.0), dt, b100.phi[k])
        np.testing.assert_allclose(u, b100.phi[k] / (1 + dt * b100.mu[k]), atol=1e-12)


def test_resolvent_bisection_oracle():
    b = build_sfl_basis(DomainSpec.interval(3), 0.5)
    A = b.matrix
    assert np.all(A - np.diag(np.diag(A)) <= 1e-15)
    u = resolvent_solve(b, NonlinearitySpec(2.0), 0.1, np.ones(3))
    ref = bisection_oracle(A, 0.1, np.ones(3), 2.0)
    np.testing.assert_allclose(u, ref, atol=1e-9)


def test_resolvent_fast_diffusion_and_signed(b100, rng):
    f = rng.standard_normal(100)
    for m in (0.5, 2.0, 3.0):
        u = resolvent_solve(b100, NonlinearitySpec(m), 0.1, f)
        r = u + 0.1 * b100.matrix @ NonlinearitySpec(m).phi(u) - f
        assert np.max(np.abs(r)) <= 1e-11 * max(1, np.max(np.abs(f)))


def test_resolvent_picard_fallback(b100):
    info = []
    f = np.sin(np.pi * b100.domain.axis)
    try:
        u = resolvent_solve(b100, NonlinearitySpec(2.0), 0.1, f, max_iter=0, info=info)
    except ResolventError as exc:
        assert exc.residual > 0
    else:
        assert info[0].method == "picard"
        ref = resolvent_solve(b100, NonlinearitySpec(2.0), 0.1, f)
        np.testing.assert_allclose(u, ref, atol=1e-10)


def test_resolvent_contraction_and_order(b100, rng):
    nl = NonlinearitySpec(2.0)
    for _ in range(10):
        f = rng.random(100)
        g = f + rng.random(100)
        uf, ug = resolvent_solve(b100, nl, 0.2, f), resolvent_solve(b100, nl, 0.2, g)
        assert hstar_norm(b100, uf - ug) <= hstar_norm(b100, f - g) + 1e-9
        assert np.all(uf <= ug + 1e-10)


def test_params_validation():
    with pytest.raises(ValueError):
        EvolutionParams(dt=1.0, t_end=2.0, rescaled=True, m=2.0)
    EvolutionParams(dt=0.5, t_end=2.0, rescaled=True, m=2.0)
    with pytest.raises(ValueError):
        EvolutionParams(dt=-1, t_end=1)
    t = geometric_times(1e-3, 0.1, 1.0)
    assert t[0] == 0 and t[1] == 1e-3 and t[-1] >= 1.0
    np.testing.assert_allclose(t[3] / t[2], 1.1)


def test_evolve_zero_and_linear_modes(b100):
    p = EvolutionParams(dt=0.01, t_end=0.5)
    tr = evolve(b100, NonlinearitySpec(2.0), np.zeros(100), p)
    assert np.all(tr.snapshots == 0)
    c = np.zeros(100)
    c[[0, 3]] = [1.0, 0.5]
    u0 = c @ b100.phi
    tr = evolve(b100, NonlinearitySpec(1.0), u0, p)
    coeff = np.array([b100.coeffs(u) for u in tr.snapshots])
    n = np.arange(tr.times.size)
    for k in (0, 3):
        np.testing.assert_allclose(coeff[:, k], c[k] * (1 + 0.01 * b100.mu[k]) ** (-n.astype(float)), atol=1e-12)


def test_step_halving_and_order():
    b = build_sfl_basis(DomainSpec.interval(200), 0.5)
    nl = NonlinearitySpec(2.0)
    u0 = np.sin(np.pi * b.domain.axis)
    ends = {}
    for dt in (0.04, 0.02, 0.01, 0.005):
        tr = evolve(b, nl, u0, EvolutionParams(dt=dt, t_end=1.0))
        ends[dt] = tr.snapshots[-1]
        if dt == 0.01:
            ut = np.max(np.abs(tr.snapshots[-1] - tr.snapshots[-2])) / dt
    diffs = [np.max(np.abs(ends[a] - ends[a / 2])) for a in (0.04, 0.02, 0.01)]
    assert diffs[2] <= 2 * 0.01 * ut
    orders = [math.log2(diffs[i] / diffs[i + 1]) for i in range(2)]
    assert all(0.8 <= o <= 1.2 for o in orders)


def test_contraction_comparison_monitors(b100, rng):
    nl = NonlinearitySpec(2.0)
    p = EvolutionParams(dt=0.01, t_end=1.0)
    v0 = rng.random(100)
    ta, tb = evolve(b100, nl, 0.5 * v0, p), evolve(b100, nl, v0, p)
    c = contraction_monitor(ta, tb, b100)
    assert c.passed and np.all(np.diff(c.values) <= 1e-9)
    assert comparison_monitor(ta, tb).passed
    assert positivity_monitor(ta).passed
    same = contraction_monitor(ta, ta, b100)
    assert np.all(same.values == 0)
    assert lyapunov_monitor(ta).passed and dissipation_monitor(ta).passed
    with pytest.raises(ValueError):
        comparison_monitor(tb, ta)
    short = evolve(b100, nl, v0, EvolutionParams(dt=0.02, t_end=1.0))
    with pytest.raises(ValueError):
        contraction_monitor(ta, short, b100)


def test_linear_difference_decays_geometrically(b100):
    nl = NonlinearitySpec(1.0)
    p = EvolutionParams(dt=0.01, t_end=0.3)
    ta = evolve(b100, nl, b100.phi[2], p)
    tb = evolve(b100, nl, np.zeros(100), p)
    d = contraction_monitor(ta, tb, b100).values
    np.testing.assert_allclose(d[1:] / d[:-1], 1 / (1 + 0.01 * b100.mu[2]), rtol=1e-10)


def test_separable_solution_exact(b100):
    m = 2.0
    G = giant_fixed_point(b100, m)
    tr = evolve(b100, NonlinearitySpec(m), G.S.values * 2.0,
                EvolutionParams(dt=1e-3, t_end=10, grid="geometric", growth=0.01))
    g = separable_amplitudes(tr, 2.0)
    np.testing.assert_allclose(tr.snapshots, g[:, None] * G.S.values, rtol=1e-9, atol=1e-14)
    # shifted-time profile: t^{1/(m-1)} |u|_inf -> |S|_inf with t + 1/2 as the matching shift
    sm = smoothing_monitor(tr, NonlinearitySpec(m), time_shift=0.5)
    assert abs(sm.K1_history[-1] / G.S.values.max() - 1) < 0.01
    rv = evolve(b100, NonlinearitySpec(m), G.S.values, EvolutionParams(dt=0.05, t_end=5, rescaled=True))
    np.testing.assert_allclose(rv.snapshots, np.broadcast_to(G.S.values, rv.snapshots.shape), rtol=1e-10)


def test_smoothing_large_constant(b100):
    nl = NonlinearitySpec(2.0)
    tr = evolve(b100, nl, 10 * np.ones(100), EvolutionParams(dt=1e-4, t_end=1e3, grid="geometric", growth=0.02))
    sm = smoothing_monitor(tr, nl)
    assert sm.passed and np.isfinite(sm.K1)
    last = tr.times[1:] >= 100
    h = sm.K1_history[last]
    assert (h.max() - h.min()) / h.mean() < 0.05
    with pytest.raises(ValueError):
        smoothing_monitor(tr, NonlinearitySpec(1.0))


def test_rescaled_from_subsolution_is_nondecreasing(b100):
    nl = NonlinearitySpec(2.0)
    v0 = subsolution_start(b100, 2.0)
    tr = evolve(b100, nl, v0, EvolutionParams(dt=0.05, t_end=10, rescaled=True))
    sm = smoothing_monitor(tr, nl)
    assert sm.min_monotonicity >= -1e-8


def test_rescale_trace_roundtrip(b100):
    nl = NonlinearitySpec(2.0)
    tr = evolve(b100, nl, np.sin(np.pi * b100.domain.axis), EvolutionParams(dt=0.01, t_end=1.0))
    rv = rescale_trace(tr)
    assert rv.rescaled
    np.testing.assert_allclose(rv.times, np.log1p(tr.times))
    np.testing.assert_allclose(rv.snapshots[-1], tr.snapshots[-1] * 2.0)
