"""Standardized sums of heterogeneous DTN variables and the Lindeberg sum.

A *sequence* is a list of ``(DtnParams, weight)`` pairs. The standardized
sum ``sum_i w_i (x_i - mu_i) / t_n`` with ``t_n**2 = sum_i w_i**2 Var[x_i]``
should look standard Normal for long sequences; :func:`run_clt_experiment`
measures how close it gets and evaluates the Lindeberg sum in closed form.

Random streams are derived from ``(base_seed, n)`` for sequences and
``(base_seed, n, replication)`` for draws, so results do not depend on the
evaluation order or on how many threads are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dtn import DtnParams, quantile_arrays, uniform_open, variance_factor
from .errors import ConfigError, DomainError
from .numerics import erf, ks_statistic_vs_std_normal, std_normal_pdf, std_normal_sf

SQRT1_2 = math.sqrt(0.5)

# spawn-key tags keeping sequence and replication streams apart
_SEQUENCE_TAG = 0
_REPLICATION_TAG = 1

# uniforms per chunk of replications; bounds peak memory
_CHUNK_DRAWS = 2_000_000

_EDGE_ULPS = 8 * 2.0 ** -53


def _check_range(key, bounds, positive=False):
    try:
        lo, hi = (float(v) for v in bounds)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected a pair [low, high]") from None
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(key, "bounds must be finite")
    if lo > hi:
        raise ConfigError(key, f"low {lo} exceeds high {hi}")
    if positive and lo <= 0:
        raise ConfigError(key, "lower bound must be strictly positive")
    return lo, hi


@dataclass(frozen=True)
class SequenceSpec:
    """Ranges from which each term's (mu, eta, rho, |weight|) is drawn uniformly.

    ``signs`` is ``"positive"``, ``"mixed"`` (independent fair signs) or an
    explicit tuple of +1/-1 repeated cyclically along the sequence.
    """

    n: int
    mu_range: tuple = (-1.0, 1.0)
    eta_range: tuple = (0.5, 2.0)
    rho_range: tuple = (0.5, 3.0)
    weight_range: tuple = (1.0, 1.0)
    signs: object = "positive"
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ConfigError("n", f"sequence length must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "mu_range", _check_range("mu_range", self.mu_range))
        object.__setattr__(self, "eta_range", _check_range("eta_range", self.eta_range, positive=True))
        object.__setattr__(self, "rho_range", _check_range("rho_range", self.rho_range, positive=True))
        object.__setattr__(self, "weight_range", _check_range("weight_range", self.weight_range, positive=True))
        signs = self.signs
        if isinstance(signs, str):
            if signs not in ("positive", "mixed"):
                raise ConfigError("signs", f"unknown sign pattern {signs!r}")
        else:
            try:
                signs = tuple(int(s) for s in signs)
            except (TypeError, ValueError):
                raise ConfigError("signs", "expected 'positive', 'mixed' or a list of +1/-1") from None
            if not signs or any(s not in (-1, 1) for s in signs):
                raise ConfigError("signs", "explicit signs must be a nonempty list of +1/-1")
            object.__setattr__(self, "signs", signs)
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError("seed", "seed must be a nonnegative integer")


@dataclass(frozen=True)
class CltConfig:
    spec: SequenceSpec
    n_schedule: tuple
    replications: int
    epsilon: float

    def __post_init__(self):
        schedule = tuple(self.n_schedule)
        if not schedule or any(not isinstance(n, (int, np.integer)) or n < 1 for n in schedule):
            raise ConfigError("n_schedule", "must be a nonempty list of positive integers")
        object.__setattr__(self, "n_schedule", tuple(int(n) for n in schedule))
        if not isinstance(self.replications, (int, np.integer)) or self.replications < 1:
            raise ConfigError("replications", "must be a positive integer")
        if not (isinstance(self.epsilon, (int, float)) and math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError("epsilon", "must be a positive number")


@dataclass(frozen=True)
class CltRow:
    n: int
    ks_distance: float
    sample_mean: float
    sample_var: float
    skewness: float
    excess_kurtosis: float
    lindeberg_sum: float
    t_n: float


@dataclass(frozen=True)
class CltResult:
    config: CltConfig
    rows: tuple = field(default=())

    METRICS = ("ks_distance", "sample_mean", "sample_var", "skewness",
               "excess_kurtosis", "lindeberg_sum", "t_n")


def derive_seed(base_seed: int, *keys: int) -> int:
    """64-bit child seed for ``keys`` under ``base_seed`` (SeedSequence hashing)."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=keys)))


def generate_sequence(spec: SequenceSpec) -> list:
    """Draw ``spec.n`` (DtnParams, weight) pairs from the ranges in ``spec``."""
    rng = _stream(spec.seed, _SEQUENCE_TAG)
    n = int(spec.n)
    mu = rng.uniform(*spec.mu_range, size=n)
    eta = rng.uniform(*spec.eta_range, size=n)
    rho = rng.uniform(*spec.rho_range, size=n)
    weight = rng.uniform(*spec.weight_range, size=n)
    if spec.signs == "mixed":
        weight = np.where(rng.random(n) < 0.5, -weight, weight)
    elif isinstance(spec.signs, tuple):
        weight = weight * np.resize(np.array(spec.signs, dtype=float), n)
    return [(DtnParams(float(m), float(e), float(r)), float(w))
            for m, e, r, w in zip(mu, eta, rho, weight)]


def _columns(pairs):
    if len(pairs) == 0:
        raise DomainError("sequence is empty")
    mu = np.array([p.mu for p, _ in pairs])
    eta = np.array([p.eta for p, _ in pairs])
    rho = np.array([p.rho for p, _ in pairs])
    w = np.array([w for _, w in pairs], dtype=float)
    return mu, eta, rho, w


def t_n_squared(pairs) -> float:
    """``sum_i w_i**2 Var[x_i]``, the variance of the weighted centred sum."""
    _, eta, rho, w = _columns(pairs)
    return float(np.sum(w * w * eta * eta * variance_factor(rho)))


def _draw_sums(mu, eta, rho, w, t_n, streams):
    u = np.stack([uniform_open(s, mu.size) for s in streams])
    x = quantile_arrays(u, mu, eta, rho)
    return ((x - mu) @ w) / t_n


def standardized_sum(pairs, stream: np.random.Generator) -> float:
    """One draw of ``sum_i w_i (x_i - mu_i) / t_n``."""
    mu, eta, rho, w = _columns(pairs)
    t_n = math.sqrt(t_n_squared(pairs))
    return float(_draw_sums(mu, eta, rho, w, t_n, [stream])[0])


def _tail_second_moment(u):
    """``int_u^inf t^2 phi(t) dt = (1 - Phi(u)) + u phi(u)``."""
    return std_normal_sf(u) + u * std_normal_pdf(u)


def lindeberg_sum(pairs, epsilon: float, n_override: int | None = None) -> float:
    """Lindeberg ratio ``sum_i E[y_i^2 ; |y_i| >= eps t_n] / t_n^2`` in closed form.

    ``y_i = w_i (x_i - mu_i)`` is DTN(0, (|w_i| eta_i)^2, rho_i). A term
    vanishes when the threshold ``eps * t_n`` reaches its support edge;
    otherwise its truncated second moment is
    ``2 s^2 / (2 Phi(rho) - 1) * [H(eps t_n / s) - H(rho)]`` with ``s = |w| eta``
    and ``H`` the Normal tail second moment. ``n_override`` restricts the
    evaluation to the first ``n_override`` terms.
    """
    if not (epsilon > 0):
        raise DomainError("epsilon must be positive")
    if n_override is not None:
        if not 1 <= n_override <= len(pairs):
            raise DomainError(f"n_override must lie in [1, {len(pairs)}]")
        pairs = pairs[:n_override]
    _, eta, rho, w = _columns(pairs)
    t2 = t_n_squared(pairs)
    threshold = epsilon * math.sqrt(t2)
    scale = np.abs(w) * eta
    # a threshold within a few ulps of the support edge leaves only rounding
    # noise in the closed form, so such terms count as exactly zero
    active = threshold < rho * scale * (1.0 - _EDGE_ULPS)
    if not np.any(active):
        return 0.0
    s, r = scale[active], rho[active]
    mass = erf(r * SQRT1_2)
    terms = 2.0 * s * s / mass * (_tail_second_moment(threshold / s) - _tail_second_moment(r))
    return float(min(max(np.sum(np.maximum(terms, 0.0)) / t2, 0.0), 1.0))


def replicate_standardized_sums(pairs, replications: int, base_seed: int, n_key: int,
                                threads: int = 1) -> np.ndarray:
    """``replications`` independent standardized sums.

    Replication ``r`` uses its own stream keyed by ``(base_seed, n_key, r)``,
    so the output is identical for any ``threads``.
    """
    mu, eta, rho, w = _columns(pairs)
    t_n = math.sqrt(t_n_squared(pairs))
    chunk = max(1, _CHUNK_DRAWS // mu.size)
    bounds = [(lo, min(lo + chunk, replications)) for lo in range(0, replications, chunk)]
    out = np.empty(replications)

    def work(span):
        lo, hi = span
        streams = [_stream(base_seed, _REPLICATION_TAG, n_key, r) for r in range(lo, hi)]
        out[lo:hi] = _draw_sums(mu, eta, rho, w, t_n, streams)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, bounds))
    else:
        for span in bounds:
            work(span)
    return out


def _moments(z):
    mean = float(z.mean())
    c = z - mean
    m2 = float(np.mean(c * c))
    var = float(c @ c / (z.size - 1)) if z.size > 1 else 0.0
    if m2 == 0.0:
        return mean, var, 0.0, 0.0
    skew = float(np.mean(c ** 3) / m2 ** 1.5)
    kurt = float(np.mean(c ** 4) / m2 ** 2 - 3.0)
    return mean, var, skew, kurt


def run_clt_experiment(config: CltConfig, threads: int = 1) -> CltResult:
    """Evaluate convergence diagnostics for every length in ``config.n_schedule``."""
    base = config.spec.seed
    rows = []
    for n in config.n_schedule:
        spec = replace(config.spec, n=n, seed=derive_seed(base, n))
        pairs = generate_sequence(spec)
        sums = replicate_standardized_sums(pairs, config.replications, base, n, threads)
        mean, var, skew, kurt = _moments(sums)
        rows.append(CltRow(
            n=n,
            ks_distance=ks_statistic_vs_std_normal(sums),
            sample_mean=mean,
            sample_var=var,
            skewness=skew,
            excess_kurtosis=kurt,
            lindeberg_sum=lindeberg_sum(pairs, config.epsilon),
            t_n=math.sqrt(t_n_squared(pairs)),
        ))
    return CltResult(config=config, rows=tuple(rows))


def reference_spec(n: int = 1000, seed: int = 0) -> SequenceSpec:
    """The heterogeneous mixed-sign setting used throughout the experiments."""
    return SequenceSpec(n=n, mu_range=(-1.0, 1.0), eta_range=(0.5, 2.0),
                        rho_range=(0.5, 3.0), weight_range=(0.5, 2.0),
                        signs="mixed", seed=seed)
