"""Error estimation for Monte Carlo time series.

Naive (uncorrelated) error, binning, jackknife, the normalized
autocorrelation function and the integrated autocorrelation time with a
self-consistent summation window (Madras-Sokal). Series are 1-D float arrays
in measurement order; ``tau`` is always in units of measurements.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

WINDOW_C = 6.0
MAX_JACKKNIFE_BLOCKS = 1000


class Method(str, enum.Enum):
    UNCORRELATED = "uncorrelated"
    BINNING = "binning"
    JACKKNIFE = "jackknife"
    SOKAL_MADRAS = "sokal_madras"


class SeriesError(ValueError):
    """Series too short or otherwise unusable for the requested estimator."""


@dataclass
class ErrorEstimate:
    mean: float
    sigma: float
    tau: float
    method: Method
    t_eff: float
    k_max: int | None = None
    block_length: int | None = None
    flags: list[str] = field(default_factory=list)


class TauEstimate(NamedTuple):
    tau: float
    k_max: int
    reliable: bool
    degenerate: bool


def _series(x, min_len: int) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size < min_len:
        raise SeriesError(f"need at least {min_len} measurements, got {a.size}")
    return a


def _t_eff(t: int, tau: float) -> float:
    return t if tau <= 0.5 else t / (2.0 * tau)


def naive_error(series) -> ErrorEstimate:
    """sigma = sqrt((<O^2> - <O>^2) / (T - 1))."""
    x = _series(series, 2)
    t = x.size
    mean = x.mean()
    var = np.mean((x - mean) ** 2)
    return ErrorEstimate(
        mean=float(mean),
        sigma=float(math.sqrt(var / (t - 1))),
        tau=0.5,
        method=Method.UNCORRELATED,
        t_eff=float(t),
    )


def autocorr_function(series, k: int) -> float:
    """Normalized lag-k autocorrelation.

    Mean-subtracted products averaged over the T-k valid pairs, divided by
    the global variance. Returns NaN for a constant series.
    """
    x = _series(series, 1)
    t = x.size
    if not 0 <= k < t:
        raise SeriesError(f"lag {k} outside [0, {t})")
    d = x - x.mean()
    var = np.mean(d * d)
    if var == 0.0:
        return math.nan
    return float(np.mean(d[: t - k] * d[k:]) / var)


def autocorr_fft(series) -> np.ndarray:
    """A(k) for all lags at once, same normalization as ``autocorr_function``."""
    x = _series(series, 1)
    t = x.size
    d = x - x.mean()
    var = np.mean(d * d)
    if var == 0.0:
        return np.full(t, np.nan)
    size = 1 << (2 * t - 1).bit_length()
    f = np.fft.rfft(d, n=size)
    acov = np.fft.irfft(f * np.conj(f), n=size)[:t]
    return acov / np.arange(t, 0, -1) / var


def sokal_madras_tau(series, c: float = WINDOW_C) -> TauEstimate:
    """Integrated autocorrelation time with the self-consistent window.

    Accumulates tau'(k) = 1/2 + sum_{j<=k} A(j) and stops at the first k with
    k > c * tau'(k). If that never happens before T/2, tau'(T/2) is returned
    with ``reliable=False``.
    """
    x = _series(series, 10)
    t = x.size
    a = autocorr_fft(x)
    if np.isnan(a[0]):
        return TauEstimate(0.5, 0, True, True)
    k_last = t // 2
    taus = 0.5 + np.cumsum(a[1 : k_last + 1])
    ks = np.arange(1, k_last + 1)
    closed = np.nonzero(ks > c * taus)[0]
    if closed.size:
        i = int(closed[0])
        return TauEstimate(max(float(taus[i]), 0.0), i + 1, True, False)
    return TauEstimate(max(float(taus[-1]), 0.0), k_last, False, False)


def tau_full(series, k_max: int | None = None) -> float:
    """tau = 1/2 + sum_{k=1}^{k_max} A(k) (1 - k/T).

    Summed over every lag (``k_max = T - 1``) with the mean taken from the
    same series this is identically zero, since the lag products of a
    mean-free series cancel the 1/2 exactly. The default cutoff is therefore
    the self-consistent window of ``sokal_madras_tau``.
    """
    x = _series(series, 10 if k_max is None else 2)
    t = x.size
    a = autocorr_fft(x)
    if np.isnan(a[0]):
        return 0.5
    if k_max is None:
        k_max = sokal_madras_tau(x).k_max
    k_max = min(int(k_max), t - 1)
    k = np.arange(1, k_max + 1)
    return float(0.5 + np.sum(a[1 : k_max + 1] * (1.0 - k / t)))


def corrected_error(series) -> ErrorEstimate:
    """Error of the mean inflated by the integrated autocorrelation time."""
    x = _series(series, 10)
    est = sokal_madras_tau(x)
    t = x.size
    if est.degenerate:
        res = ErrorEstimate(float(x.mean()), 0.0, 0.5, Method.SOKAL_MADRAS, float(t), k_max=0)
        res.flags.append("constant")
        return res
    if est.tau < 0.5:
        res = naive_error(x)
        res.tau = est.tau
        res.k_max = est.k_max
        return res
    mean = x.mean()
    var = np.mean((x - mean) ** 2)
    res = ErrorEstimate(
        mean=float(mean),
        sigma=float(math.sqrt(2.0 * est.tau / t * var)),
        tau=est.tau,
        method=Method.SOKAL_MADRAS,
        t_eff=_t_eff(t, est.tau),
        k_max=est.k_max,
    )
    if not est.reliable:
        res.flags.append("window_not_closed")
    return res


def default_block_lengths(t: int) -> list[int]:
    out = []
    k = 1
    while k <= t // 4:
        out.append(k)
        k *= 2
    return out or [1]


def _block_means(x: np.ndarray, k: int) -> np.ndarray:
    nb = x.size // k
    return x[: nb * k].reshape(nb, k).mean(axis=1)


def binning_sigma(series, k: int) -> float:
    x = _series(series, 2)
    nb = x.size // k
    if nb < 2:
        raise SeriesError(f"block length {k} leaves {nb} block(s); need at least 2")
    b = _block_means(x, k)
    return float(math.sqrt(np.sum((b - b.mean()) ** 2) / (nb * (nb - 1))))


def binning_error(series, block_lengths=None) -> ErrorEstimate:
    """Largest binning error over the candidate block lengths.

    A trailing remainder shorter than a block is dropped.
    """
    x = _series(series, 2)
    t = x.size
    if block_lengths is None:
        block_lengths = default_block_lengths(t)
    usable = [k for k in block_lengths if k >= 1 and t // k >= 2]
    if not usable:
        raise SeriesError(f"no block length in {list(block_lengths)} gives two blocks")
    sigmas = [binning_sigma(x, k) for k in usable]
    i = int(np.argmax(sigmas))
    sigma = sigmas[i]
    naive = naive_error(x).sigma
    tau = 0.5 if naive == 0 else max(0.5, 0.5 * (sigma / naive) ** 2)
    return ErrorEstimate(
        mean=float(x.mean()),
        sigma=sigma,
        tau=tau,
        method=Method.BINNING,
        t_eff=_t_eff(t, tau),
        block_length=usable[i],
    )


def jackknife(data, k: int, estimator: Callable[[np.ndarray], float] | None = None):
    """Leave-one-block-out jackknife.

    ``data`` is a 1-D series or an array whose first axis is Monte Carlo
    time (several observables measured together). ``estimator`` maps such an
    array to a number; the default is the mean of a 1-D series, for which the
    blocks are formed in closed form. Returns ``(value, sigma, n_blocks)``
    where ``value`` is the estimator on the full (truncated) data.
    """
    a = np.asarray(data, dtype=np.float64)
    t = a.shape[0]
    nb = t // k if k >= 1 else 0
    if nb < 2:
        raise SeriesError(f"block length {k} leaves {nb} block(s); need at least 2")
    a = a[: nb * k]
    t = nb * k
    if estimator is None:
        if a.ndim != 1:
            raise SeriesError("default estimator needs a 1-D series")
        total = a.sum()
        blocks = a.reshape(nb, k).mean(axis=1)
        jk = (total - k * blocks) / (t - k)
        value = total / t
    else:
        value = estimator(a)
        jk = np.empty(nb)
        idx = np.arange(t)
        for n in range(nb):
            keep = (idx < n * k) | (idx >= (n + 1) * k)
            jk[n] = estimator(a[keep])
    sigma = math.sqrt((nb - 1) / nb * np.sum((jk - jk.mean()) ** 2))
    return float(value), float(sigma), nb


def jackknife_error(series, k: int, estimator=None) -> ErrorEstimate:
    x = np.asarray(series, dtype=np.float64)
    value, sigma, nb = jackknife(x, k, estimator)
    return ErrorEstimate(
        mean=value,
        sigma=sigma,
        tau=0.5,
        method=Method.JACKKNIFE,
        t_eff=float(nb * k),
        block_length=k,
    )


def variance_estimator(x: np.ndarray) -> float:
    """<x^2> - <x>^2, the estimator behind specific heat and susceptibilities."""
    m = x.mean()
    return float(np.mean(x * x) - m * m)


def jackknife_block_length(series) -> int:
    """Block length for jackknifing a nonlinear estimator: a few tau, 20 to ~1000 blocks."""
    x = np.asarray(series, dtype=np.float64)
    t = x.size
    try:
        tau = sokal_madras_tau(x).tau if t >= 10 else 0.5
    except SeriesError:
        tau = 0.5
    k = max(1, int(math.ceil(4 * tau)), -(-t // MAX_JACKKNIFE_BLOCKS))
    return max(1, min(k, t // 20)) if t >= 40 else max(1, min(k, t // 2))
