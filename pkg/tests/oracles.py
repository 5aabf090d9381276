"""Independent reference computations shared by the test modules.

None of these go through the closed forms under test: moments come from
adaptive quadrature of the density, Gaussian log-densities from a dense
inverse and determinant.
"""

import math

import numpy as np

from dtnclt.dtn import DtnParams, dtn_pdf
from dtnclt.numerics import adaptive_simpson

QUAD_TOL = 1e-10


def seeded_triples(n=50, seed=2024, mu=(-5.0, 5.0), eta=(0.1, 3.0), rho=(0.05, 10.0)):
    """Random (mu, eta, rho) triples on a dyadic grid.

    Snapping to multiples of 2**-20 keeps ``mu + d`` and ``mu - d`` exact in
    binary for dyadic ``d``, so symmetry checks can demand bit equality.
    """
    rng = np.random.default_rng(seed)
    grid = 2.0 ** -20
    out = []
    for _ in range(n):
        m = round(rng.uniform(*mu) / grid) * grid
        e = max(round(rng.uniform(*eta) / grid) * grid, grid)
        r = max(round(rng.uniform(*rho) / grid) * grid, grid)
        out.append(DtnParams(m, e, r))
    return out


def quad_moments(p: DtnParams, tol=QUAD_TOL):
    """(mass, mean, variance) of a DTN by adaptive Simpson on its support."""
    f = lambda x: float(dtn_pdf(x, p))
    mass = adaptive_simpson(f, p.lower, p.upper, tol)
    mean = adaptive_simpson(lambda x: x * f(x), p.lower, p.upper, tol)
    var = adaptive_simpson(lambda x: (x - p.mu) ** 2 * f(x), p.lower, p.upper, tol)
    return mass, mean, var


def quad_truncated_second_moment(p: DtnParams, threshold, tol=QUAD_TOL):
    """E[(x - mu)^2 ; |x - mu| >= threshold] by quadrature over both tails."""
    half = p.rho * p.eta
    if threshold >= half:
        return 0.0
    f = lambda y: y * y * float(dtn_pdf(p.mu + y, p))
    return (adaptive_simpson(f, threshold, half, tol)
            + adaptive_simpson(f, -half, -threshold, tol))


def dense_mvn_logpdf(x, mean, cov):
    x = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return float(-0.5 * (x.size * math.log(2 * math.pi) + logdet + x @ np.linalg.inv(cov) @ x))
