"""Independent brute-force oracles shared by the test modules."""
import numpy as np


def _bisect(g, lo, hi, tol=1e-15):
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def bisection_oracle(A, dt, f, m):
    """Nested bisection on u + dt A |u|^{m-1} u = f for three unknowns.

    Each equation is increasing in its own unknown once the inner unknowns are
    eliminated (A has nonpositive off-diagonal entries, so the Schur complements
    of the Jacobian keep a positive diagonal).
    """
    phi = lambda u: abs(u) ** (m - 1) * u
    F = lambda i, u: u[i] + dt * sum(A[i, j] * phi(u[j]) for j in range(3)) - f[i]

    def solve1(u2, u3):
        return _bisect(lambda u1: F(0, (u1, u2, u3)), -10, 10)

    def solve2(u3):
        return _bisect(lambda u2: F(1, (solve1(u2, u3), u2, u3)), -10, 10, tol=1e-14)

    u3 = _bisect(lambda u3: F(2, (solve1(solve2(u3), u3), solve2(u3), u3)), -10, 10, tol=1e-13)
    u2 = solve2(u3)
    return np.array([solve1(u2, u3), u2, u3])
