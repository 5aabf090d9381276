"""Truncated Normal family: densities, CDF/quantile, moments and sampling.

``TnParams`` is the general Normal restricted to [a, b]; ``DtnParams`` is
the symmetric case with bounds ``mu -/+ rho * eta``. Point-wise functions
broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError
from .numerics import erf, std_normal_cdf, std_normal_pdf, std_normal_sf

SQRT1_2 = math.sqrt(0.5)

# below this half-width the closed form loses ~3 digits to cancellation and
# the Taylor series is used instead
_SERIES_RHO = 0.02


@dataclass(frozen=True)
class TnParams:
    """Normal(mu, eta^2) truncated to [a, b]; a and b may be infinite."""

    mu: float
    eta: float
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"eta must be positive and finite, got {self.eta}")
        if not self.a < self.b:
            raise DomainError(f"need a < b, got a={self.a}, b={self.b}")
        if not self.mass > 1e-300:
            raise DomainError("truncation interval carries no probability mass")

    @property
    def a_std(self) -> float:
        return (self.a - self.mu) / self.eta

    @property
    def b_std(self) -> float:
        return (self.b - self.mu) / self.eta

    @property
    def mass(self) -> float:
        """Phi(b') - Phi(a'), taken from whichever tail avoids cancellation."""
        lo, hi = self.a_std, self.b_std
        if lo > 0:
            return float(std_normal_sf(lo) - std_normal_sf(hi))
        return float(std_normal_cdf(hi) - std_normal_cdf(lo))


@dataclass(frozen=True)
class DtnParams:
    """Doubly truncated Normal DTN(mu, eta^2, rho) on [mu - rho eta, mu + rho eta]."""

    mu: float
    eta: float
    rho: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise DomainError(f"eta must be positive and finite, got {self.eta}")
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")

    @property
    def lower(self) -> float:
        return self.mu - self.rho * self.eta

    @property
    def upper(self) -> float:
        return self.mu + self.rho * self.eta

    @property
    def mass(self) -> float:
        # 2 Phi(rho) - 1 straight from erf; no subtraction of tails
        return float(erf(self.rho * SQRT1_2))

    def to_tn(self) -> TnParams:
        return TnParams(self.mu, self.eta, self.lower, self.upper)


def _as_output(values):
    return values[()] if isinstance(values, np.ndarray) and values.ndim == 0 else values


def _x_phi(z):
    """z * phi(z), zero at infinite z."""
    z = np.asarray(z, dtype=float)
    with np.errstate(invalid="ignore"):
        out = z * std_normal_pdf(z)
    return np.where(np.isfinite(z), out, 0.0)


# -- general truncated Normal -------------------------------------------------

def tn_pdf(x, p: TnParams):
    x = np.asarray(x, dtype=float)
    xi = (x - p.mu) / p.eta
    dens = std_normal_pdf(xi) / (p.eta * p.mass)
    return _as_output(np.where((x >= p.a) & (x <= p.b), dens, 0.0))


def tn_mean(p: TnParams) -> float:
    ratio = (std_normal_pdf(p.a_std) - std_normal_pdf(p.b_std)) / p.mass
    return float(p.mu + p.eta * ratio)


def tn_var(p: TnParams) -> float:
    z = p.mass
    ratio = (std_normal_pdf(p.a_std) - std_normal_pdf(p.b_std)) / z
    edge = (_x_phi(p.a_std) - _x_phi(p.b_std)) / z
    return float(p.eta ** 2 * (1.0 + edge - ratio * ratio))


# -- symmetric doubly truncated Normal ------------------------------------------

def dtn_pdf(x, p: DtnParams):
    x = np.asarray(x, dtype=float)
    xi = (x - p.mu) / p.eta
    dens = std_normal_pdf(xi) / (p.eta * p.mass)
    return _as_output(np.where((x >= p.lower) & (x <= p.upper), dens, 0.0))


def dtn_cdf(x, p: DtnParams):
    x = np.asarray(x, dtype=float)
    xi = (x - p.mu) / p.eta
    z = p.mass
    tail_rho = std_normal_sf(p.rho)
    with np.errstate(invalid="ignore"):
        left = (std_normal_cdf(xi) - tail_rho) / z
        right = 1.0 - (std_normal_sf(xi) - tail_rho) / z
    out = np.clip(np.where(xi <= 0, left, right), 0.0, 1.0)
    out = np.where(x <= p.lower, 0.0, np.where(x >= p.upper, 1.0, out))
    return _as_output(out)


def dtn_quantile(q, p: DtnParams):
    """Inverse of :func:`dtn_cdf`.

    Works on the lower half and reflects, so both tails keep the precision
    of the Normal quantile near 0. Output is clamped to the support.
    """
    q = np.asarray(q, dtype=float)
    if np.any(~((q >= 0.0) & (q <= 1.0))):
        raise DomainError("dtn_quantile needs 0 <= q <= 1")
    return _as_output(quantile_arrays(q, p.mu, p.eta, p.rho))


def quantile_arrays(q, mu, eta, rho):
    """Broadcasting DTN quantile over parameter arrays; no argument checks."""
    q = np.asarray(q, dtype=float)
    mu, eta, rho = (np.asarray(v, dtype=float) for v in (mu, eta, rho))
    lower, upper = mu - rho * eta, mu + rho * eta
    t = np.minimum(q, 1.0 - q)
    with np.errstate(divide="ignore"):
        z = ndtri(std_normal_sf(rho) + t * erf(rho * SQRT1_2))
    z = np.where(q <= 0.5, z, -z)
    out = np.clip(mu + eta * z, lower, upper)
    return np.where(q == 0.0, lower, np.where(q == 1.0, upper, out))


def uniform_open(stream: np.random.Generator, size=None):
    """Uniforms on the 2**-53 grid shifted by half a step, so never 0 or 1."""
    k = stream.integers(0, 2 ** 53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0 ** -53


def dtn_mean(p: DtnParams) -> float:
    return p.mu


def truncation_ratio(rho):
    """``g(rho) = 2 rho phi(rho) / (2 Phi(rho) - 1)``, the variance lost to truncation.

    Strictly decreasing from 1 (rho -> 0) to 0 (rho -> inf). Unlike
    ``1 - g`` it keeps full relative precision for large ``rho``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise DomainError("truncation ratio needs rho > 0")
    r2 = rho * rho
    # 1 - series of variance_factor
    series = 1.0 - (r2 / 3.0 - 2.0 * r2 ** 2 / 45.0 + 2.0 * r2 ** 3 / 945.0 + 2.0 * r2 ** 4 / 14175.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = 2.0 * rho * std_normal_pdf(rho) / erf(rho * SQRT1_2)
    return _as_output(np.where(rho < _SERIES_RHO, series, direct))


def variance_factor(rho):
    """Share of eta^2 kept by truncation: ``1 - 2 rho phi(rho) / (2 Phi(rho) - 1)``.

    Lies in (0, 1) and increases strictly with ``rho``; behaves like
    ``rho**2 / 3`` as ``rho -> 0``. In double precision it rounds to exactly
    1.0 once rho exceeds about 8.5; use :func:`truncation_ratio` to compare
    such values.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise DomainError("variance_factor needs rho > 0")
    r2 = rho * rho
    series = r2 / 3.0 - 2.0 * r2 ** 2 / 45.0 + 2.0 * r2 ** 3 / 945.0 + 2.0 * r2 ** 4 / 14175.0
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = 1.0 - 2.0 * rho * std_normal_pdf(rho) / erf(rho * SQRT1_2)
    return _as_output(np.where(rho < _SERIES_RHO, series, direct))


def dtn_var(p: DtnParams) -> float:
    return float(p.eta ** 2 * variance_factor(p.rho))


def dtn_sample(p: DtnParams, stream: np.random.Generator, size=None):
    """Inverse-transform draws; one 53-bit uniform in (0, 1) per variate."""
    return dtn_quantile(uniform_open(stream, size), p)


# -- structural maps -------------------------------------------------------------

def center(p: DtnParams) -> DtnParams:
    """Law of ``x - mu``."""
    return DtnParams(0.0, p.eta, p.rho)


def affine(p: DtnParams, k0: float, k1: float) -> DtnParams:
    """Law of ``k0 + k1 * x`` for a centred ``x``.

    The result keeps ``rho`` and rescales the scale to ``|k1| * eta``.
    Non-centred inputs are rejected; pass them through :func:`center` first.
    """
    if k1 == 0:
        raise DomainError("degenerate transform: k1 must be nonzero")
    if p.mu != 0:
        raise DomainError("affine expects a centred DTN (mu = 0); call center() first")
    return DtnParams(float(k0), abs(float(k1)) * p.eta, p.rho)
