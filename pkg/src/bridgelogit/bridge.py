"""Univariate and multivariate bridge distribution.

The bridge law is the unique random-intercept distribution under which a
logistic mixed model marginalizes to another logistic model with all
coefficients multiplied by the attenuation factor ``phi``.  This module
provides the closed-form density, the normal variance mixing distribution
(density and two samplers), multivariate densities and samplers driven by a
single shared mixing scale, and a quadrature-based CDF/quantile pair used by
the Gaussian-copula data generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from scipy.special import kve

__all__ = [
    "BridgeParams",
    "MixingSeriesConfig",
    "SeriesConvergenceError",
    "bridge_log_density",
    "bridge_density",
    "bridge_variance",
    "unit_variance_phi",
    "mixing_mean",
    "mixing_sample",
    "mixing_sample_naive",
    "mixing_log_density",
    "bridge_sample",
    "mvbridge_sample",
    "mvbridge_log_density",
    "bridge_cdf",
    "bridge_quantile",
    "tail_cutoff",
]


class SeriesConvergenceError(RuntimeError):
    """Alternating series failed to converge within the configured term budget."""


@dataclass(frozen=True)
class BridgeParams:
    """Attenuation factor of the bridge law; must lie strictly in (0, 1)."""

    phi: float

    def __post_init__(self):
        if not (0.0 < self.phi < 1.0):
            raise ValueError(f"phi must be in the open interval (0, 1), got {self.phi}")


@dataclass(frozen=True)
class MixingSeriesConfig:
    """Truncation and tolerance knobs for the mixing-distribution machinery.

    k2_terms
        Number of geometric waiting times in the default mixing sampler.
    series_rel_tol
        Relative stopping tolerance for alternating-series evaluation.
    k1_terms
        Term budget: truncation level of the naive sampler and the maximum
        number of series terms before evaluation errors out.
    """

    k2_terms: int = 100
    series_rel_tol: float = 1e-12
    k1_terms: int = 200

    def __post_init__(self):
        if self.k2_terms < 1:
            raise ValueError("k2_terms must be >= 1")
        if self.k1_terms < 1:
            raise ValueError("k1_terms must be >= 1")
        if not (0.0 < self.series_rel_tol < 1.0):
            raise ValueError("series_rel_tol must be in (0, 1)")


DEFAULT_SERIES_CONFIG = MixingSeriesConfig()


def bridge_variance(phi: float) -> float:
    """Variance of the bridge law, pi^2/3 (phi^-2 - 1)."""
    return (math.pi**2 / 3.0) * (1.0 / phi**2 - 1.0)


def unit_variance_phi() -> float:
    """The phi value at which the bridge law has unit variance."""
    return (1.0 + 3.0 / math.pi**2) ** -0.5


def mixing_mean(phi: float) -> float:
    """Mean of the mixing scale; equals the bridge variance."""
    return bridge_variance(phi)


def tail_cutoff(phi: float) -> float:
    """|u| beyond which the bridge density is below 1e-16 (decays like e^{-phi|u|})."""
    return 40.0 / phi


def bridge_log_density(u, params: BridgeParams):
    """Log density of the bridge distribution, stable for |phi*u| >> 700.

    log[ sin(phi*pi) / (2*pi*{cosh(phi*u) + cos(phi*pi)}) ] computed via
    log(cosh(x)+c) = |x| - log 2 + log1p(e^{-2|x|} + 2 c e^{-|x|}).
    """
    phi = params.phi
    x = np.abs(phi * np.asarray(u, dtype=float))
    c = math.cos(phi * math.pi)
    log_denom = x - math.log(2.0) + np.log1p(np.exp(-2.0 * x) + 2.0 * c * np.exp(-x))
    return math.log(math.sin(phi * math.pi)) - math.log(2.0 * math.pi) - log_denom


def bridge_density(u, params: BridgeParams):
    """Density of the bridge distribution."""
    return np.exp(bridge_log_density(u, params))


# ---------------------------------------------------------------------------
# Mixing distribution
# ---------------------------------------------------------------------------

def mixing_sample(params: BridgeParams, cfg: MixingSeriesConfig | None = None,
                  rng: np.random.Generator | None = None, size=None):
    """Draw from the mixing distribution by the geometric waiting-time method.

    Draws ``k2_terms`` independent geometric variables with success
    probability 1 - phi^2, forms their partial sums D_k, and returns
    sum_k E_k * 2 / (phi^2 D_k^2) with E_k standard exponential.  Unlike the
    naive truncation this never returns exactly zero.

    Parameters
    ----------
    size : int or None
        None returns a scalar; an int returns a 1-D array of draws.
    """
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    cfg = cfg or DEFAULT_SERIES_CONFIG
    phi = params.phi
    n = 1 if size is None else int(size)
    out = np.empty(n)
    # chunked so the (draws x k2_terms) intermediates stay modest
    chunk = max(1, min(n, 20_000))
    p_succ = 1.0 - phi * phi
    start = 0
    while start < n:
        stop = min(start + chunk, n)
        m = stop - start
        geo = rng.geometric(p_succ, size=(m, cfg.k2_terms))
        d = np.cumsum(geo, axis=1, dtype=np.float64)
        e = rng.standard_exponential(size=(m, cfg.k2_terms))
        out[start:stop] = (2.0 / phi**2) * np.sum(e / (d * d), axis=1)
        start = stop
    return float(out[0]) if size is None else out


def mixing_sample_naive(params: BridgeParams, cfg: MixingSeriesConfig | None = None,
                        rng: np.random.Generator | None = None, size=None):
    """Naive finite-truncation sampler: 2 phi^-2 sum_{k<=K1} A_k B_k / k^2.

    Kept as a cross-validation oracle for :func:`mixing_sample`; returns
    exactly zero with probability phi^(2 K1).
    """
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    cfg = cfg or DEFAULT_SERIES_CONFIG
    phi = params.phi
    n = 1 if size is None else int(size)
    out = np.empty(n)
    k = np.arange(1, cfg.k1_terms + 1, dtype=float)
    w = 2.0 / (phi**2 * k * k)
    chunk = max(1, min(n, 20_000))
    start = 0
    while start < n:
        stop = min(start + chunk, n)
        m = stop - start
        a = rng.standard_exponential(size=(m, cfg.k1_terms))
        b = rng.random(size=(m, cfg.k1_terms)) < (1.0 - phi * phi)
        out[start:stop] = (a * b) @ w
        start = stop
    return float(out[0]) if size is None else out


def _c_coeffs(n_terms: int, phi: float) -> np.ndarray:
    """C_k(phi) = k - 0.5 + (-1)^k (phi - 0.5) for k = 1..n_terms."""
    k = np.arange(1, n_terms + 1, dtype=float)
    return k - 0.5 + np.where(k % 2 == 0, phi - 0.5, 0.5 - phi)


def _mixing_mode_proxy(phi: float) -> float:
    # stationary point of the dominant first series term lambda^{-3/2} e^{-b/lambda}
    return (math.pi**2) * (1.0 - phi) ** 2 / (3.0 * phi**2)


def mixing_log_density(lam: float, params: BridgeParams,
                       cfg: MixingSeriesConfig | None = None) -> float:
    """Log density of the normal-variance mixing distribution.

    Alternating series with coefficients C_k(phi); terms are summed with
    exactly-rounded accumulation after factoring out the leading exponential.
    Returns -inf for lambda below 1e-6 times the (approximate) mode, where the
    series underflows; MH acceptance treats that as a rejection.

    Raises
    ------
    SeriesConvergenceError
        If the alternating tail has not dropped below ``series_rel_tol``
        relative magnitude within ``k1_terms`` terms.
    """
    cfg = cfg or DEFAULT_SERIES_CONFIG
    phi = params.phi
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    if lam < 1e-6 * _mixing_mode_proxy(phi):
        return -math.inf

    a = math.pi**2 / (2.0 * phi**2 * lam)
    c = _c_coeffs(cfg.k1_terms, phi)
    signs = np.where(np.arange(1, cfg.k1_terms + 1) % 2 == 1, 1.0, -1.0)
    # factor out exp(-a C_1^2): C_1 is the smallest coefficient, so every
    # relative exponent is <= 0 and nothing overflows
    rel_exp = -a * (c * c - c[0] * c[0])
    terms = signs * c * np.exp(rel_exp)

    abs_t = np.abs(terms)
    peak = int(np.argmax(abs_t))
    partial = 0.0
    stop_at = None
    for k in range(cfg.k1_terms):
        partial += terms[k]
        if k > peak and k + 1 < cfg.k1_terms:
            # alternating-series remainder bound: once magnitudes decrease,
            # the tail is bounded by the next term
            if abs_t[k + 1] <= cfg.series_rel_tol * abs(partial):
                stop_at = k
                break
    if stop_at is None:
        tail_ok = cfg.k1_terms > peak + 1 and abs_t[-1] <= cfg.series_rel_tol * max(abs(partial), 1e-300)
        if not tail_ok:
            raise SeriesConvergenceError(
                f"mixing density series did not converge within {cfg.k1_terms} terms "
                f"(lambda={lam!r}, phi={phi!r})")
        stop_at = cfg.k1_terms - 1
    s = math.fsum(terms[:stop_at + 1])
    if s <= 0.0:
        return -math.inf
    return (0.5 * math.log(math.pi / 2.0) - 2.0 * math.log(phi)
            - 1.5 * math.log(lam) - a * c[0] * c[0] + math.log(s))


# ---------------------------------------------------------------------------
# Sampling the bridge law
# ---------------------------------------------------------------------------

def bridge_sample(params: BridgeParams, cfg: MixingSeriesConfig | None = None,
                  n: int = 1, rng: np.random.Generator | None = None) -> np.ndarray:
    """n independent bridge draws: each is sqrt(lambda_i) * z_i with a fresh mixing scale."""
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    lam = mixing_sample(params, cfg, rng, size=n)
    return np.sqrt(lam) * rng.standard_normal(n)


def mvbridge_sample(params: BridgeParams, cfg: MixingSeriesConfig | None = None,
                    corr_chol: np.ndarray | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """One multivariate bridge realization: sqrt(lambda) * L z with a single shared lambda.

    ``corr_chol`` is a lower-triangular factor of a unit-diagonal correlation
    matrix; every coordinate of the output is marginally bridge(phi).
    """
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    if corr_chol is None:
        raise ValueError("corr_chol is required")
    lam = mixing_sample(params, cfg, rng)
    z = rng.standard_normal(corr_chol.shape[0])
    return math.sqrt(lam) * (corr_chol @ z)


# ---------------------------------------------------------------------------
# Multivariate density
# ---------------------------------------------------------------------------

def _mvbridge_series(q_form: float, phi: float, d: int, rel_tol: float) -> float:
    """sum_k (-1)^{k+1} C_k / (pi^2 C_k^2 / phi^2 + Q)^{(d+1)/2}.

    Summed in odd/even pairs C = (x - phi, x + phi) for x = 1, 3, 5, ...; the
    pair sums decay like x^-(d+1), and the remainder after the last pair is
    replaced by its closed-form midpoint integral, which leaves an error orders
    of magnitude below rel_tol.
    """
    c2 = (math.pi / phi) ** 2
    expo = (d + 1) / 2.0

    def h(x):
        return x * (c2 * x * x + q_form) ** -expo

    # antiderivative of h, for the tail correction
    def big_h(x):
        return -((c2 * x * x + q_form) ** (-(d - 1) / 2.0)) / (c2 * (d - 1))

    def partial(n_pairs: int) -> float:
        x = 2.0 * np.arange(1, n_pairs + 1) - 1.0
        s = math.fsum(h(x - phi) - h(x + phi))
        # midpoint rule for the remaining pairs starts at x = 2*n_pairs
        tail = 0.5 * (big_h(x[-1] + 1.0 + phi) - big_h(x[-1] + 1.0 - phi))
        return s + tail

    # the pair terms peak near x ~ sqrt(Q)/c; start beyond it, then double
    # until two successive corrected sums agree (the correction error drops
    # like n^-(d+3), so agreement certifies the finer sum)
    n_pairs = max(2048, int(8.0 * math.sqrt(max(q_form, 1.0)) / math.sqrt(c2)))
    prev = partial(n_pairs)
    for _ in range(8):
        n_pairs *= 2
        cur = partial(n_pairs)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise SeriesConvergenceError(
        f"multivariate bridge series not converged after {n_pairs} pairs")


def _mvbridge_log_density_far(q_form: float, phi: float, d: int, log_det: float) -> float:
    """Dual (Poisson-summed) evaluation for large quadratic forms.

    The mixing density equals (phi/pi) sum_j j (-1)^{j+1} sin(pi j phi)
    e^{-phi^2 j^2 lambda / 2}; integrating termwise against the normal kernel
    yields a Bessel-K series whose terms decay like e^{-j phi sqrt(Q)}, which
    is accurate exactly where the C_k series cancels catastrophically.
    """
    x = phi * math.sqrt(q_form)
    n_terms = max(4, int(math.ceil(60.0 / x)) + 2)
    j = np.arange(1, n_terms + 1, dtype=float)
    sign = np.where(j % 2 == 1, 1.0, -1.0)
    # kve = K_nu(z) e^z; pull the j=1 exponential out front
    bessel = kve(d / 2.0 - 1.0, j * x)
    coeff = sign * np.sin(np.pi * j * phi) * 2.0 * j * (math.sqrt(q_form) / (phi * j)) ** (1.0 - d / 2.0)
    s = float(np.sum(coeff * bessel * np.exp(-(j - 1.0) * x)))
    if s <= 0.0:
        return -math.inf
    return (-0.5 * d * math.log(2.0 * math.pi) - 0.5 * log_det
            + math.log(phi / math.pi) + math.log(s) - x)


def mvbridge_log_density(u: np.ndarray, params: BridgeParams, corr: np.ndarray,
                         cfg: MixingSeriesConfig | None = None) -> float:
    """Log density of the d-dimensional multivariate bridge distribution (d >= 2).

    Requires a positive definite unit-diagonal correlation matrix; depends on
    u only through the quadratic form u' R^-1 u.  Evaluation switches between
    the alternating C_k series (small quadratic form) and its Poisson dual
    (large quadratic form, where the C_k pairs cancel).
    """
    cfg = cfg or DEFAULT_SERIES_CONFIG
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    if d < 2:
        raise ValueError("multivariate bridge density requires dimension >= 2")
    corr = np.asarray(corr, dtype=float)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise ValueError("correlation matrix is not positive definite") from exc
    y = solve_triangular(chol, u, lower=True)
    q_form = float(y @ y)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    phi = params.phi
    if phi * math.sqrt(q_form) > 8.0:
        return _mvbridge_log_density_far(q_form, phi, d, log_det)
    s = _mvbridge_series(q_form, phi, d, cfg.series_rel_tol)
    if s <= 0.0:
        return -math.inf
    return (math.lgamma((d + 1) / 2.0) - 2.0 * math.log(phi)
            - ((d - 1) / 2.0) * math.log(math.pi) - 0.5 * log_det + math.log(s))


# ---------------------------------------------------------------------------
# CDF and quantile (numeric; the paper gives no closed form)
# ---------------------------------------------------------------------------

_N_PANELS = 2048
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


@lru_cache(maxsize=32)
def _cdf_table(phi: float):
    """Cumulative quadrature table for the bridge CDF at a given phi.

    Panel grid concentrated near the origin via a sinh stretch; each panel
    integrated with 15-point Gauss-Legendre, then accumulated.  The density
    below -40/phi carries mass < 1e-16 and is dropped.
    """
    params = BridgeParams(phi)
    big_u = tail_cutoff(phi)
    t = np.linspace(-1.0, 1.0, _N_PANELS + 1)
    stretch = 4.0
    grid = big_u * np.sinh(stretch * t) / math.sinh(stretch)
    mid = 0.5 * (grid[1:] + grid[:-1])
    half = 0.5 * (grid[1:] - grid[:-1])
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    panel = half * (np.exp(bridge_log_density(nodes, params)) @ _GL_WEIGHTS)
    cdf = np.concatenate([[0.0], np.cumsum(panel)])
    # normalize away the ~1e-16 truncation so the table tops out at exactly 1
    cdf /= cdf[-1]
    return grid, cdf


def _cdf_from_table(u: np.ndarray, phi: float) -> np.ndarray:
    grid, cdf = _cdf_table(phi)
    params = BridgeParams(phi)
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    below = u <= grid[0]
    above = u >= grid[-1]
    mid_mask = ~(below | above)
    out[below] = 0.0
    out[above] = 1.0
    if np.any(mid_mask):
        uu = u[mid_mask]
        idx = np.searchsorted(grid, uu, side="right") - 1
        lo = grid[idx]
        half = 0.5 * (uu - lo)
        nodes = lo[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        inc = half * (np.exp(bridge_log_density(nodes, params)) @ _GL_WEIGHTS)
        out[mid_mask] = np.clip(cdf[idx] + inc, 0.0, 1.0)
    return out


def bridge_cdf(u, params: BridgeParams):
    """CDF of the bridge law by quadrature of the closed-form density.

    Scalar input uses adaptive quadrature from the -40/phi tail cutoff (where
    the density is below 1e-16); array input uses a cached panel-quadrature
    table with one local Gauss-Legendre refinement per point.
    """
    phi = params.phi
    if np.ndim(u) == 0:
        x = float(u)
        big_u = tail_cutoff(phi)
        if x <= -big_u:
            return 0.0
        if x >= big_u:
            return 1.0
        val, _ = quad(lambda t: math.exp(bridge_log_density(t, params)),
                      -big_u, x, epsabs=1e-13, epsrel=1e-12, limit=200)
        return min(max(val, 0.0), 1.0)
    return _cdf_from_table(np.asarray(u, dtype=float), phi)


def bridge_quantile(p, params: BridgeParams):
    """Quantile of the bridge law by bracketed inversion of the quadrature CDF.

    Scalar input uses a Brent root-finder on the adaptive-quadrature CDF;
    array input uses the panel table for bracketing plus safeguarded Newton
    refinement.  Satisfies quantile(cdf(u)) = u to 1e-8.
    """
    phi = params.phi
    if np.ndim(p) == 0:
        pp = float(p)
        if not (0.0 < pp < 1.0):
            raise ValueError("quantile requires p strictly inside (0, 1)")
        big_u = tail_cutoff(phi)
        return brentq(lambda x: bridge_cdf(x, params) - pp, -big_u, big_u,
                      xtol=1e-12, rtol=8.9e-16)
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile requires p strictly inside (0, 1)")
    grid, cdf = _cdf_table(phi)
    lo_idx = np.clip(np.searchsorted(cdf, p_arr, side="right") - 1, 0, len(grid) - 2)
    lo = grid[lo_idx].copy()
    hi = grid[lo_idx + 1].copy()
    x = lo + (hi - lo) * np.clip(
        (p_arr - cdf[lo_idx]) / np.maximum(cdf[lo_idx + 1] - cdf[lo_idx], 1e-300), 0.0, 1.0)
    for _ in range(100):
        f = _cdf_from_table(x, phi) - p_arr
        if np.all(np.abs(f) < 1e-14):
            break
        pos = f > 0.0
        hi = np.where(pos, x, hi)
        lo = np.where(pos, lo, x)
        dens = np.exp(bridge_log_density(x, params))
        step = f / np.maximum(dens, 1e-300)
        x_new = x - step
        outside = (x_new <= lo) | (x_new >= hi)
        x = np.where(outside, 0.5 * (lo + hi), x_new)
    return x
