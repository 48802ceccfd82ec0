"""Autocorrelation, integrated autocorrelation time, nESS and the chain-level statistical tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "autocorrelation",
    "autocorrelation_function",
    "integrated_autocorr_time",
    "ness",
    "ness_per_coordinate",
    "percentile_summary",
    "NessRatioReport",
    "ness_ratio_report",
    "MomentTestResult",
    "stationarity_moment_test",
    "FluxTestResult",
    "reversibility_flux_test",
    "default_flux_regions",
    "WINDOW_FACTOR",
]

# Self-consistent Bartlett window: smallest M with M >= WINDOW_FACTOR * tau(M).
WINDOW_FACTOR = 10.0
MIN_WINDOW = 5


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if x.size < 2:
        raise ValueError("series needs at least two values")
    return x


def autocorrelation_function(series, max_lag: int | None = None) -> np.ndarray:
    """``rho(k) = c(k)/c(0)`` for ``k = 0..max_lag`` with ``c(k) = (1/N) sum (X_t - m)(X_{t+k} - m)``."""
    x = _as_series(series)
    n = x.size
    max_lag = n - 1 if max_lag is None else int(max_lag)
    if not 0 <= max_lag < n:
        raise ValueError(f"lag must lie in [0, {n - 1}]")
    d = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:max_lag + 1] / n
    if not acov[0] > 0:
        raise ValueError("zero variance series")
    return acov / acov[0]


def autocorrelation(series, k: int) -> float:
    """Lag-``k`` sample autocorrelation."""
    x = _as_series(series)
    if not 0 <= k < x.size:
        raise ValueError(f"lag must lie in [0, {x.size - 1}]")
    d = x - x.mean()
    c0 = float(d @ d)
    if not c0 > 0:
        raise ValueError("zero variance series")
    return float(d[:x.size - k] @ d[k:]) / c0


def _bartlett_tau(rho: np.ndarray, m: int, onesided: bool) -> float:
    k = np.arange(1, m + 1)
    s = float(np.sum((1.0 - k / m) * rho[1:m + 1]))
    return 1.0 + (s if onesided else 2.0 * s)


def integrated_autocorr_time(series, window_factor: float = WINDOW_FACTOR,
                             onesided: bool = False) -> float:
    """Bartlett-window estimate ``1 + 2 sum_{k=1}^{M} (1 - k/M) rho(k)``.

    ``M`` is the smallest window from 5 upward with ``M >= window_factor *
    tau(M)``, capped at ``N // 10`` (at least 5).  ``onesided=True`` drops
    the factor 2.  Values below 1 indicate negative correlation.
    """
    x = _as_series(series)
    n = x.size
    m_max = max(MIN_WINDOW, n // 10)
    rho = autocorrelation_function(x, min(m_max, n - 1))
    m = min(MIN_WINDOW, n - 1)
    while True:
        tau = _bartlett_tau(rho, m, onesided)
        if m >= window_factor * tau or m >= min(m_max, n - 1):
            return tau
        m += 1


def ness(series, **kwargs) -> float:
    """Normalised effective sample size ``ESS / N = 1 / tau``."""
    return 1.0 / integrated_autocorr_time(series, **kwargs)


def ness_per_coordinate(samples, **kwargs) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be an (N, dim) array")
    return np.array([ness(samples[:, j], **kwargs) for j in range(samples.shape[1])])


def percentile_summary(values, axis: int = 0) -> dict[str, np.ndarray]:
    """P10, P50, P90 by linear interpolation across seeds (``axis``)."""
    v = np.asarray(values, dtype=float)
    if v.shape[axis] == 0:
        raise ValueError("need at least one value per coordinate")
    p = np.percentile(v, [10.0, 50.0, 90.0], axis=axis)
    return {"P10": p[0], "P50": p[1], "P90": p[2]}


@dataclass
class NessRatioReport:
    ratios: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    fraction_greater: float


def ness_ratio_report(ness_a, ness_b, bins: int = 30, range_=None) -> NessRatioReport:
    """Elementwise ``A / B`` with a histogram and the fraction of ratios above 1."""
    a = np.asarray(ness_a, dtype=float)
    b = np.asarray(ness_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"nESS vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("empty nESS vectors")
    if np.any(b <= 0):
        raise ValueError("denominator nESS must be positive")
    r = a / b
    counts, edges = np.histogram(r, bins=bins, range=range_)
    return NessRatioReport(r, counts, edges, float(np.mean(r > 1.0)))


@dataclass
class MomentTestResult:
    passed: bool
    estimates: dict[str, float]
    expected: dict[str, float]
    std_errors: dict[str, float]
    z: dict[str, float]
    threshold: float


def stationarity_moment_test(series: dict[str, np.ndarray], expected: dict[str, float],
                             threshold: float = 4.0, **tau_kwargs) -> MomentTestResult:
    """z-scores of sample means against exact values.

    ``series[name]`` is the per-step value of a test function (``x``, ``x**2``,
    ...).  The standard error is ``sd * sqrt(tau / N)`` with ``tau`` from
    ``integrated_autocorr_time``.  Passes iff every ``|z| < threshold``.
    """
    if not series:
        raise ValueError("no moments to test")
    est, ses, zs = {}, {}, {}
    for name, values in series.items():
        v = np.asarray(values, dtype=float)
        if v.size < 2:
            raise ValueError("chain too short for a moment test")
        tau = max(integrated_autocorr_time(v, **tau_kwargs), 1.0 / v.size)
        se = float(v.std() * np.sqrt(tau / v.size))
        est[name] = float(v.mean())
        ses[name] = se
        zs[name] = (est[name] - expected[name]) / se
    passed = all(abs(z) < threshold for z in zs.values())
    return MomentTestResult(passed, est, dict(expected), ses, zs, threshold)


@dataclass
class FluxTestResult:
    flux: float
    std_error: float
    z: float
    n_batches: int


Region = Callable[[np.ndarray, np.ndarray], np.ndarray]


def default_flux_regions() -> tuple[Region, Region]:
    """``A = {x < 0, p > 0}``, ``B = {x > 0, p > 0}`` on the first coordinate."""
    return (lambda x, p: (x[:, 0] < 0) & (p[:, 0] > 0),
            lambda x, p: (x[:, 0] > 0) & (p[:, 0] > 0))


def reversibility_flux_test(x, p=None, regions: tuple[Region, Region] | None = None,
                            n_batches: int | None = None) -> FluxTestResult:
    """Stationary flux asymmetry ``P(s_k in A, s_{k+1} in B) - P(s_k in B, s_{k+1} in A)``.

    ``x`` and ``p`` are ``(N, dim)`` (or 1-D) arrays of consecutive chain
    states; ``p`` may be omitted for position-only regions.  The standard
    error comes from batch means over ``n_batches`` (default ``sqrt(N)``)
    contiguous batches.
    """
    x = np.asarray(x, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    p = np.zeros_like(x) if p is None else np.asarray(p, dtype=float).reshape(x.shape)
    if x.shape[0] < 4:
        raise ValueError("chain too short for a flux test")
    reg_a, reg_b = default_flux_regions() if regions is None else regions
    in_a = np.asarray(reg_a(x, p), dtype=bool)
    in_b = np.asarray(reg_b(x, p), dtype=bool)
    f = (in_a[:-1] & in_b[1:]).astype(float) - (in_b[:-1] & in_a[1:]).astype(float)
    n = f.size
    nb = int(np.sqrt(n)) if n_batches is None else int(n_batches)
    if nb < 2:
        raise ValueError("need at least two batches")
    size = n // nb
    means = f[:nb * size].reshape(nb, size).mean(axis=1)
    se = float(means.std(ddof=1) / np.sqrt(nb))
    flux = float(f.mean())
    z = flux / se if se > 0 else (0.0 if flux == 0 else np.copysign(np.inf, flux))
    return FluxTestResult(flux, se, float(z), nb)
