"""Special functions, small dense linear algebra, Nelder-Mead and KS statistics.

Everything here works on plain floats or numpy arrays. The Normal
functions are thin wrappers over ``scipy.special`` (Cody-style erf,
Cephes ``ndtr``/``ndtri``), which meet the accuracy the truncated-Normal
code needs far into the tails.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special
from scipy.linalg.lapack import dpotrf, dtrtrs

from .errors import DomainError, NotPositiveDefiniteError

LOG_2PI = math.log(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def erf(x):
    """Error function, absolute error below 1e-13 on the whole real line."""
    return special.erf(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_cdf(x):
    """Standard Normal CDF.

    Evaluated through ``erfc`` on the far side of zero so the left tail keeps
    full relative precision (``0.5 * (1 + erf(x / sqrt 2))`` underflows to
    zero around x = -8).
    """
    return special.ndtr(x)


def std_normal_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return special.ndtr(np.negative(x))


def inv_std_normal_cdf(p):
    """Quantile of the standard Normal.

    Raises
    ------
    DomainError
        If any ``p`` is outside the open interval (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("inv_std_normal_cdf needs 0 < p < 1")
    return special.ndtri(p)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def cholesky(matrix) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == matrix``.

    No pivoting and no jitter: a matrix that is not positive definite is
    reported, never repaired.

    Raises
    ------
    DomainError
        If the input is not square or not symmetric to 1e-10 relative.
    NotPositiveDefiniteError
        With the zero-based index of the first non-positive pivot.
    """
    a = np.array(matrix, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"cholesky needs a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > 1e-10 * scale:
        raise DomainError("cholesky needs a symmetric matrix")
    return _cholesky_lower(a)


def _cholesky_lower(a: np.ndarray) -> np.ndarray:
    factor, info = dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(int(info) - 1)
    if info < 0:
        raise DomainError(f"dpotrf rejected argument {-info}")
    return factor


def gaussian_loglik_term(residual, covariance) -> float:
    """Log density of ``N(0, covariance)`` at ``residual``.

    Uses the Cholesky factor for both the log-determinant (twice the sum of
    log diagonal entries) and the quadratic form (one triangular solve).
    Only the lower triangle of ``covariance`` is read.
    """
    r = np.asarray(residual, dtype=float).reshape(-1)
    cov = np.asarray(covariance, dtype=float)
    n = r.shape[0]
    if cov.shape != (n, n):
        raise DomainError(f"covariance shape {cov.shape} does not match residual length {n}")
    if n == 0:
        return 0.0
    chol = _cholesky_lower(cov)
    whitened, info = dtrtrs(chol, r, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(int(info) - 1)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    quad = float(whitened @ whitened)
    return -0.5 * (n * LOG_2PI + log_det + quad)


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------

class Termination(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITER = "max_iter"
    DEGENERATE_SIMPLEX = "degenerate_simplex"


@dataclass(frozen=True)
class NelderMeadOptions:
    """Simplex coefficients and stopping rules.

    The search stops when the simplex diameter (largest infinity-norm
    distance of a vertex from the best one) drops below ``xtol`` or when the
    spread of vertex values drops below ``ftol``.
    """

    initial_step: float = 0.1
    xtol: float = 1e-8
    ftol: float = 1e-10
    max_iter: int = 50_000
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    # smallest/largest singular value of the edge matrix below which the
    # simplex is declared flat
    degeneracy_tol: float = 1e-14


@dataclass(frozen=True)
class OptimizerReport:
    best_point: np.ndarray
    best_value: float
    iterations: int
    converged: bool
    termination: Termination
    n_evals: int = 0
    simplex_diameter: float = 0.0
    value_spread: float = 0.0
    history: tuple = field(default=(), repr=False)


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    options: NelderMeadOptions | None = None,
) -> OptimizerReport:
    """Minimize ``objective`` from ``start`` with the Nelder-Mead simplex.

    Non-finite objective values met during the search count as ``+inf``,
    so such points are never accepted. The method is deterministic given
    ``start`` and ``options``.

    Raises
    ------
    DomainError
        If the objective is not finite at ``start``.
    """
    opts = options or NelderMeadOptions()
    x0 = np.array(start, dtype=float).reshape(-1)
    n = x0.size
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        value = float(objective(x))
        return value if math.isfinite(value) else math.inf

    f0 = f(x0)
    if not math.isfinite(f0):
        raise DomainError("objective is not finite at the starting point")

    simplex = np.empty((n + 1, n))
    values = np.empty(n + 1)
    simplex[0], values[0] = x0, f0
    for i in range(n):
        vertex = x0.copy()
        vertex[i] += opts.initial_step * max(1.0, abs(x0[i]))
        simplex[i + 1] = vertex
        values[i + 1] = f(vertex)

    history = []
    iterations = 0
    termination = Termination.MAX_ITER
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        history.append(float(values[0]))

        diameter = float(np.max(np.abs(simplex[1:] - simplex[0]))) if n else 0.0
        spread = float(values[-1] - values[0]) if math.isfinite(values[-1]) else math.inf
        if diameter < opts.xtol:
            termination = Termination.TOLERANCE_MET
            break
        if iterations >= opts.max_iter:
            termination = Termination.MAX_ITER
            break
        if spread < opts.ftol:
            # equal values can also mean vertices straddling a minimum
            xm = simplex.mean(axis=0)
            fm = f(xm)
            if not fm < values[0] - opts.ftol:
                termination = Termination.TOLERANCE_MET
                break
            iterations += 1
            simplex[-1], values[-1] = xm, fm
            continue
        sv = np.linalg.svd((simplex[1:] - simplex[0]) / diameter, compute_uv=False)
        if sv[-1] <= opts.degeneracy_tol * sv[0]:
            termination = Termination.DEGENERATE_SIMPLEX
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + opts.reflection * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + opts.expansion * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + opts.contraction * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + opts.contraction * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, n + 1):
            simplex[i] = best + opts.shrink * (simplex[i] - best)
            values[i] = f(simplex[i])

    return OptimizerReport(
        best_point=simplex[0].copy(),
        best_value=float(values[0]),
        iterations=iterations,
        converged=termination is Termination.TOLERANCE_MET,
        termination=termination,
        n_evals=n_evals,
        simplex_diameter=diameter,
        value_spread=spread,
        history=tuple(history),
    )


# ---------------------------------------------------------------------------
# Goodness of fit
# ---------------------------------------------------------------------------

def ks_statistic(samples, cdf: Callable) -> float:
    """Kolmogorov-Smirnov distance between the sample ECDF and ``cdf``.

    ``cdf`` must accept a sorted numpy array and return its CDF values.
    """
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise DomainError("ks statistic of an empty sample")
    values = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - values
    lower = values - np.arange(0, n) / n
    return float(max(upper.max(), lower.max(), 0.0))


def ks_statistic_vs_std_normal(samples) -> float:
    """Kolmogorov-Smirnov distance between the sample ECDF and Phi."""
    return ks_statistic(samples, std_normal_cdf)


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise DomainError("ks statistic of an empty sample")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def adaptive_simpson(func: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50,
                     min_depth: int = 4) -> float:
    """Integrate ``func`` over [a, b] by adaptive Simpson with Richardson step.

    Every branch is split at least ``min_depth`` times so that a lucky
    agreement on the coarsest panels cannot end the recursion early.
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(func, b, a, tol, max_depth, min_depth)

    def simpson(fa, fm, fb, h):
        return h / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb = func(a), func(b)
    m = 0.5 * (a + b)
    fm = func(m)
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = func(lm), func(rm)
        left = simpson(flo, flm, fmid, mid - lo)
        right = simpson(fmid, frm, fhi, hi - mid)
        delta = left + right - whole
        if depth >= max_depth or (depth >= min_depth and abs(delta) <= 15.0 * eps):
            total += left + right + delta / 15.0
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return total
