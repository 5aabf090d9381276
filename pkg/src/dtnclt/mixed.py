"""Linear mixed-effects model with sign-constrained random slopes.

Group ``l`` follows ``y = X beta + Z gamma + eps`` with ``eps ~ N(0, sigma2 I)``.
A constrained random column ``i`` tied to coefficient ``j`` draws
``gamma_i ~ DTN(0, varsigma_i^2, rho_i)`` with ``rho_i = |beta_j| / varsigma_i``,
so the realized coefficient ``beta_j + gamma_i`` never changes sign.
Unconstrained random columns are ordinary Normal effects.

Estimation maximizes the Gaussian approximation to the marginal law of
each group, ``N(X beta, Z Lambda Z' + sigma2 I)``, with
``Lambda = diag(varsigma_i^2 * variance_factor(rho_i))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .dtn import quantile_arrays, uniform_open, variance_factor
from .errors import ConfigError, DomainError, NotPositiveDefiniteError
from .numerics import (
    NelderMeadOptions,
    OptimizerReport,
    cholesky,
    gaussian_loglik_term,
    nelder_mead,
)

NONNEGATIVE = "nonnegative"
NONPOSITIVE = "nonpositive"


@dataclass(frozen=True)
class Constraint:
    """Random column ``random_index`` is bounded by coefficient ``coef_index``."""

    random_index: int
    coef_index: int
    sign: str = NONNEGATIVE

    def __post_init__(self):
        if self.sign not in (NONNEGATIVE, NONPOSITIVE):
            raise ConfigError("sign", f"expected {NONNEGATIVE!r} or {NONPOSITIVE!r}, got {self.sign!r}")


def _check_constraints(constraints, k, p):
    constraints = tuple(constraints)
    seen = set()
    signs = {}
    for c in constraints:
        if not 0 <= c.random_index < p:
            raise ConfigError("constraints", f"random index {c.random_index} outside 0..{p - 1}")
        if not 0 <= c.coef_index < k:
            raise ConfigError("constraints", f"coefficient index {c.coef_index} outside 0..{k - 1}")
        if c.random_index in seen:
            raise ConfigError("constraints", f"random column {c.random_index} constrained twice")
        if signs.setdefault(c.coef_index, c.sign) != c.sign:
            raise ConfigError("constraints", f"coefficient {c.coef_index} given both signs")
        seen.add(c.random_index)
    return constraints


@dataclass(frozen=True)
class ModelSpec:
    """Model structure: ``k`` fixed effects, ``p`` random columns, constraints."""

    k: int
    p: int
    constraints: tuple = ()

    def __post_init__(self):
        if self.k < 0 or self.p < 0:
            raise ConfigError("dimensions", "k and p must be nonnegative")
        object.__setattr__(self, "constraints", _check_constraints(self.constraints, self.k, self.p))

    def constraint_for(self, i):
        for c in self.constraints:
            if c.random_index == i:
                return c
        return None


@dataclass(frozen=True)
class ModelParams:
    beta: tuple
    sigma2: float
    varsigma: tuple = ()
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "varsigma", tuple(float(s) for s in self.varsigma))
        object.__setattr__(self, "constraints",
                           _check_constraints(self.constraints, len(self.beta), len(self.varsigma)))
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if any(not (s > 0 and math.isfinite(s)) for s in self.varsigma):
            raise DomainError(f"varsigma must be positive, got {self.varsigma}")
        for c in self.constraints:
            b = self.beta[c.coef_index]
            if (c.sign == NONNEGATIVE and not b > 0) or (c.sign == NONPOSITIVE and not b < 0):
                raise DomainError(f"beta[{c.coef_index}] = {b} violates its {c.sign} constraint")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(len(self.beta), len(self.varsigma), self.constraints)

    @property
    def rho(self) -> np.ndarray:
        """Truncation half-widths ``|beta_j| / varsigma_i``; ``inf`` when unconstrained."""
        out = np.full(len(self.varsigma), math.inf)
        for c in self.constraints:
            out[c.random_index] = abs(self.beta[c.coef_index]) / self.varsigma[c.random_index]
        return out


@dataclass
class Dataset:
    """Rows of (group, y, x_1..x_k, z_1..z_p)."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        m = self.y.size
        self.X = np.asarray(self.X, dtype=float).reshape(m, -1) if m else np.zeros((0, 0))
        self.Z = np.asarray(self.Z, dtype=float).reshape(m, -1) if m else np.zeros((0, 0))
        self.group = np.asarray(self.group)
        if m == 0:
            raise DomainError("dataset has no rows")
        if self.group.shape != (m,):
            raise DomainError(f"group labels: expected {m}, got shape {self.group.shape}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Z))):
            raise DomainError("dataset contains non-finite values")

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @cached_property
    def blocks(self) -> list:
        """(label, y, X, Z) per group, labels in sorted order."""
        labels, inverse = np.unique(self.group, return_inverse=True)
        out = []
        for g, label in enumerate(labels):
            rows = np.flatnonzero(inverse == g)
            out.append((label.item() if hasattr(label, "item") else label,
                        self.y[rows], self.X[rows], self.Z[rows]))
        return out

    @property
    def group_sizes(self) -> dict:
        return {label: yy.size for label, yy, _, _ in self.blocks}


def lambda_matrix(params: ModelParams) -> np.ndarray:
    """Diagonal random-effect covariance under the DTN truncation."""
    varsigma = np.asarray(params.varsigma, dtype=float)
    if np.any(~(varsigma > 0)):
        raise DomainError("varsigma must be positive")
    factor = np.ones_like(varsigma)
    rho = params.rho
    finite = np.isfinite(rho)
    if np.any(finite):
        factor[finite] = variance_factor(rho[finite])
    return np.diag(varsigma ** 2 * factor)


def _check_dims(data: Dataset, params: ModelParams):
    if data.k != len(params.beta) or data.p != len(params.varsigma):
        raise DomainError(f"dataset has k={data.k}, p={data.p}; parameters have "
                          f"k={len(params.beta)}, p={len(params.varsigma)}")


def _loglik(blocks, beta, sigma2, lam_diag) -> float:
    total = 0.0
    if lam_diag.size == 0:
        # covariance is sigma2 I in every group; skip the dense factorizations
        for _, y, X, _ in blocks:
            r = y - X @ beta
            total += -0.5 * (y.size * math.log(2 * math.pi * sigma2) + r @ r / sigma2)
        return total
    for label, y, X, Z in blocks:
        r = y - X @ beta
        cov = (Z * lam_diag) @ Z.T
        cov.flat[:: y.size + 1] += sigma2
        try:
            total += gaussian_loglik_term(r, cov)
        except NotPositiveDefiniteError as err:
            raise NotPositiveDefiniteError(err.pivot, group=label) from None
    return total


def marginal_loglik(data: Dataset, params: ModelParams) -> float:
    """Gaussian-approximation log-likelihood summed over groups in label order."""
    _check_dims(data, params)
    lam = np.diag(lambda_matrix(params))
    return _loglik(data.blocks, np.asarray(params.beta), params.sigma2, lam)


# -- simulation ------------------------------------------------------------------

@dataclass(frozen=True)
class DesignSpec:
    """Generated designs: intercept plus uniform covariates; Z picks columns of X."""

    k: int
    random_columns: tuple = ()
    covariate_range: tuple = (-1.0, 1.0)
    intercept: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k", "need at least one fixed-effect column")
        if any(not 0 <= c < self.k for c in self.random_columns):
            raise ConfigError("random_columns", f"indices must lie in 0..{self.k - 1}")
        lo, hi = self.covariate_range
        if not lo < hi:
            raise ConfigError("covariate_range", "low must be below high")


@dataclass
class Simulation:
    data: Dataset
    gamma: np.ndarray     # (g, p) realized random effects, rows in label order
    labels: list


def simulate_dataset(design: DesignSpec, true_params: ModelParams, group_sizes: Sequence[int],
                     stream: np.random.Generator, X=None, Z=None) -> Simulation:
    """Draw a dataset from the constrained model.

    Groups are labelled ``0..g-1``. Covariates come first (unless ``X`` is
    given), then per group the random effects followed by the noise.
    Constrained effects are clipped to ``[-|beta_j|, |beta_j|]`` so the
    sign guarantee holds exactly despite rounding in ``rho * varsigma``.
    """
    sizes = [int(s) for s in group_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise DomainError("group sizes must be positive")
    m = sum(sizes)
    k, p = len(true_params.beta), len(true_params.varsigma)
    if X is None:
        if design.k != k:
            raise DomainError(f"design has k={design.k} but beta has {k} entries")
        X = np.empty((m, k))
        start = 0
        if design.intercept:
            X[:, 0] = 1.0
            start = 1
        X[:, start:] = stream.uniform(*design.covariate_range, size=(m, k - start))
    X = np.asarray(X, dtype=float)
    if Z is None:
        if len(design.random_columns) != p:
            raise DomainError(f"design picks {len(design.random_columns)} random columns, params have {p}")
        Z = X[:, list(design.random_columns)]
    Z = np.asarray(Z, dtype=float).reshape(m, p)
    if X.shape != (m, k):
        raise DomainError(f"X must be {m} x {k}")

    varsigma = np.asarray(true_params.varsigma)
    rho = true_params.rho
    bound = np.full(p, math.inf)
    for c in true_params.constraints:
        bound[c.random_index] = abs(true_params.beta[c.coef_index])
    beta = np.asarray(true_params.beta)
    sigma = math.sqrt(true_params.sigma2)

    y = np.empty(m)
    group = np.empty(m, dtype=np.int64)
    gamma = np.empty((len(sizes), p))
    start = 0
    for g, size in enumerate(sizes):
        rows = slice(start, start + size)
        u = uniform_open(stream, p)
        gamma[g] = np.clip(quantile_arrays(u, 0.0, varsigma, rho), -bound, bound)
        eps = sigma * stream.standard_normal(size)
        y[rows] = X[rows] @ beta + Z[rows] @ gamma[g] + eps
        group[rows] = g
        start += size
    return Simulation(Dataset(y, X, Z, group), gamma, list(range(len(sizes))))


# -- estimation -------------------------------------------------------------------

@dataclass(frozen=True)
class FitOptions:
    optimizer: NelderMeadOptions = NelderMeadOptions()
    max_params: int = 50
    # Nelder-Mead reruns from the best point until the gain drops below this
    restart_tol: float = 1e-9
    max_restarts: int = 5
    start: ModelParams | None = None


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    loglik: float
    report: OptimizerReport
    initial_loglik: float = math.nan
    stderr_note: None = None    # standard errors are not computed


class _Parameterization:
    """Maps unconstrained vectors to parameters of the sign-normalized model.

    Layout: one entry per coefficient (log for constrained ones), then
    log sigma2, then log varsigma per random column.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.logged = np.zeros(spec.k, dtype=bool)
        for c in spec.constraints:
            self.logged[c.coef_index] = True
        self.link = np.full(spec.p, -1)
        for c in spec.constraints:
            self.link[c.random_index] = c.coef_index

    def unpack(self, theta):
        k, p = self.spec.k, self.spec.p
        with np.errstate(over="ignore"):
            beta = np.where(self.logged, np.exp(theta[:k]), theta[:k])
            sigma2 = math.exp(min(theta[k], 700.0))
            varsigma = np.exp(theta[k + 1:k + 1 + p])
        return beta, sigma2, varsigma

    def pack(self, beta, sigma2, varsigma):
        head = np.where(self.logged, np.log(np.abs(beta)), beta)
        return np.concatenate([head, [math.log(sigma2)], np.log(varsigma)])

    def lam_diag(self, beta, varsigma):
        factor = np.ones_like(varsigma)
        tied = self.link >= 0
        if np.any(tied):
            factor[tied] = variance_factor(beta[self.link[tied]] / varsigma[tied])
        return varsigma ** 2 * factor


def _flip_signs(data: Dataset, spec: ModelSpec):
    """Negate columns of nonpositive constraints so every constraint is nonnegative."""
    xs = np.ones(spec.k)
    zs = np.ones(spec.p)
    for c in spec.constraints:
        if c.sign == NONPOSITIVE:
            xs[c.coef_index] = -1.0
            zs[c.random_index] = -1.0
    flipped = Dataset(data.y, data.X * xs, data.Z * zs, data.group)
    positive = ModelSpec(spec.k, spec.p, tuple(replace(c, sign=NONNEGATIVE) for c in spec.constraints))
    return flipped, positive, xs


def initial_params(data: Dataset, spec: ModelSpec) -> ModelParams:
    """OLS start: constrained coefficients pushed to at least 0.1 sd(y) in
    their allowed direction, half the residual variance, varsigma = |beta|/2."""
    beta, *_ = np.linalg.lstsq(data.X, data.y, rcond=None) if spec.k else (np.zeros(0),)
    resid = data.y - data.X @ beta if spec.k else data.y
    scale = float(np.std(data.y)) or 1.0
    dof = max(data.m - spec.k, 1)
    sigma2 = max(float(resid @ resid) / dof / 2.0, 1e-8 * scale ** 2)
    beta = beta.copy()
    for c in spec.constraints:
        j = c.coef_index
        if c.sign == NONNEGATIVE:
            beta[j] = max(beta[j], 0.1 * scale)
        else:
            beta[j] = min(beta[j], -0.1 * scale)
    varsigma = []
    for i in range(spec.p):
        c = spec.constraint_for(i)
        varsigma.append(0.5 * abs(beta[c.coef_index]) if c else 0.5 * scale)
    return ModelParams(tuple(beta), sigma2, tuple(varsigma), spec.constraints)


def fit_mle(data: Dataset, spec: ModelSpec, options: FitOptions | None = None) -> FitResult:
    """Maximum likelihood under the Gaussian marginal approximation.

    Non-convergence is reported through ``result.report.converged``.
    Points where a group covariance is not positive definite count as
    infeasible during the search.
    """
    opts = options or FitOptions()
    if data.k != spec.k or data.p != spec.p:
        raise DomainError(f"dataset has k={data.k}, p={data.p}; model expects k={spec.k}, p={spec.p}")
    n_free = spec.k + spec.p + 1
    if n_free > opts.max_params:
        raise DomainError(f"{n_free} free parameters exceed the cap of {opts.max_params}")
    if data.m < n_free:
        raise DomainError(f"{data.m} rows cannot identify {n_free} parameters")

    start = opts.start or initial_params(data, spec)
    if start.spec != spec:
        raise DomainError("starting parameters do not match the model structure")
    initial_loglik = marginal_loglik(data, start)   # PD failure here propagates

    flipped, positive, xs = _flip_signs(data, spec)
    param = _Parameterization(positive)
    blocks = flipped.blocks

    def objective(theta):
        beta, sigma2, varsigma = param.unpack(theta)
        if not (sigma2 > 0 and np.all(varsigma > 0) and np.all(np.isfinite(beta))):
            return math.inf
        try:
            return -_loglik(blocks, beta, sigma2, param.lam_diag(beta, varsigma))
        except (NotPositiveDefiniteError, FloatingPointError, ValueError):
            return math.inf

    theta = param.pack(np.asarray(start.beta) * xs, start.sigma2, np.asarray(start.varsigma))
    budget = opts.optimizer.max_iter
    used = evals = 0
    best = None
    for _ in range(opts.max_restarts + 1):
        report = nelder_mead(objective, theta, replace(opts.optimizer, max_iter=budget - used))
        used += report.iterations
        evals += report.n_evals
        gain = math.inf if best is None else best.best_value - report.best_value
        best = report if best is None or report.best_value <= best.best_value else best
        theta = best.best_point
        if gain <= opts.restart_tol or not report.converged or used >= budget:
            break
    report = replace(best, iterations=used, n_evals=evals, converged=report.converged and best.converged)

    beta, sigma2, varsigma = param.unpack(best.best_point)
    params = ModelParams(tuple(beta * xs), sigma2, tuple(varsigma), spec.constraints)
    return FitResult(params, marginal_loglik(data, params), report, initial_loglik)


# -- group-level predictions --------------------------------------------------------

@dataclass
class GroupCoefficients:
    labels: list
    gamma: np.ndarray      # (g, p) posterior-mode random effects after clamping
    overall: np.ndarray    # (g, p) beta_j + gamma_i for tied columns, nan otherwise


def fitted_group_coefficients(data: Dataset, params: ModelParams) -> GroupCoefficients:
    """Posterior-mode random effects under the Gaussian approximation.

    Per group solves ``(Z'Z + sigma2 Lambda^-1) gamma = Z'(y - X beta)``,
    then clamps constrained effects into ``[-|beta_j|, |beta_j|]``.
    """
    _check_dims(data, params)
    lam = np.diag(lambda_matrix(params))
    beta = np.asarray(params.beta)
    p = len(params.varsigma)
    bound = np.full(p, math.inf)
    link = np.full(p, -1)
    for c in params.constraints:
        bound[c.random_index] = abs(beta[c.coef_index])
        link[c.random_index] = c.coef_index
    labels, gammas = [], []
    for label, y, X, Z in data.blocks:
        precision = Z.T @ Z + np.diag(params.sigma2 / lam)
        chol = cholesky(precision)
        rhs = Z.T @ (y - X @ beta)
        g = solve_triangular(chol.T, solve_triangular(chol, rhs, lower=True), lower=False)
        labels.append(label)
        gammas.append(np.clip(g, -bound, bound))
    gamma = np.array(gammas).reshape(len(labels), p)
    overall = np.where(link >= 0, beta[np.maximum(link, 0)] + gamma, np.nan)
    return GroupCoefficients(labels, gamma, overall)
