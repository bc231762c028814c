"""Matrix-basis functions f_mn of the Moyal plane and quadrature checks.

f_mn(rho, phi) = 2 (-1)^m sqrt(m!/n!) e^{i phi (n-m)} (sqrt(2/theta) rho)^{n-m}
                 e^{-rho^2/theta} L_m^{n-m}(2 rho^2 / theta)       (n >= m)
and f_mn = conj(f_nm) for n < m. The checks integrate over the plane with
Gauss-Legendre in rho and the midpoint rule in phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

DEFAULT_TOL = 1e-5
DECAY_TOL = 1e-8


def eval_fmn(m: int, n: int, theta: float, rho, phi):
    """Closed-form basis function; broadcasts over ``rho`` and ``phi``."""
    if m < 0 or n < 0:
        raise ValueError("mode indices must be >= 0")
    if theta <= 0:
        raise ValueError("theta must be > 0")
    if n < m:
        return np.conj(eval_fmn(n, m, theta, rho, phi))
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    k = n - m
    z = 2.0 * rho ** 2 / theta
    # sqrt(m!/n!) in log space so large indices do not overflow
    log_norm = 0.5 * (gammaln(m + 1) - gammaln(n + 1))
    radial = (
        2.0 * (-1) ** m
        * np.exp(log_norm + k * np.log(np.sqrt(2.0 / theta) * rho + (rho == 0)) - rho ** 2 / theta)
        * eval_genlaguerre(m, k, z)
    )
    if k > 0:
        radial = np.where(rho == 0, 0.0, radial)
    return radial * np.exp(1j * phi * k)


@lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def rho_max_for(max_index: int, theta: float) -> float:
    """Smallest radius (on a doubling ladder from sqrt(2 theta (2M + 6))) where every
    f_mn with m, n <= max_index has decayed below ``DECAY_TOL``."""
    r = math.sqrt(2.0 * theta * (2 * max_index + 6))
    while True:
        worst = max(
            abs(eval_fmn(m, n, theta, r, 0.0))
            for m in range(max_index + 1)
            for n in range(m, max_index + 1)
        )
        if worst < DECAY_TOL * 1e-4:
            return r
        r *= 1.25


@dataclass(frozen=True)
class GridSpec:
    n_rho: int = 200
    n_phi: int = 64
    rho_max: float | None = None

    def refined(self) -> "GridSpec":
        return GridSpec(2 * self.n_rho, 2 * self.n_phi, self.rho_max)


class GridError(ValueError):
    """Quadrature grid does not resolve the integrand."""


@dataclass
class BasisFunctionGrid:
    m: int
    n: int
    theta: float
    rho: np.ndarray
    phi: np.ndarray
    weights: np.ndarray  # rho d rho d phi, same shape as values
    values: np.ndarray
    rho_max: float


def sample(m: int, n: int, theta: float, grid: GridSpec = GridSpec(), max_index: int | None = None) -> BasisFunctionGrid:
    if max_index is None:
        max_index = max(m, n)
    rho_max = grid.rho_max if grid.rho_max is not None else rho_max_for(max_index, theta)
    x, w = _leggauss(grid.n_rho)
    rho = 0.5 * rho_max * (x + 1.0)
    w_rho = 0.5 * rho_max * w * rho
    phi = (np.arange(grid.n_phi) + 0.5) * (2 * math.pi / grid.n_phi)
    w_phi = np.full(grid.n_phi, 2 * math.pi / grid.n_phi)
    rr, pp = np.meshgrid(rho, phi, indexing="ij")
    values = eval_fmn(m, n, theta, rr, pp)
    if not np.all(np.isfinite(values)):
        raise GridError(f"non-finite values for f_{m}{n}")
    edge = abs(eval_fmn(m, n, theta, rho_max, 0.0))
    if edge >= DECAY_TOL:
        raise GridError(f"|f_{m}{n}(rho_max={rho_max:.3g})| = {edge:.2e} >= {DECAY_TOL}")
    return BasisFunctionGrid(m, n, theta, rho, phi, np.outer(w_rho, w_phi), values, rho_max)


def integrate(m: int, n: int, theta: float, grid: GridSpec = GridSpec()) -> complex:
    g = sample(m, n, theta, grid)
    return complex(np.sum(g.weights * g.values))


def check_trace_identity(m: int, n: int, theta: float, grid: GridSpec = GridSpec()) -> float:
    """|integral of f_mn over the plane - 2 pi theta delta_mn|."""
    target = 2 * math.pi * theta if m == n else 0.0
    return abs(integrate(m, n, theta, grid) - target)


def check_orthogonality(m: int, n: int, k: int, l: int, theta: float, grid: GridSpec = GridSpec()) -> float:
    """|integral of f_mn f_kl - 2 pi theta delta_nk delta_ml| (pointwise product)."""
    top = max(m, n, k, l)
    if top > 8:
        raise ValueError("indices above 8 are outside the supported range")
    a = sample(m, n, theta, grid, max_index=top)
    b = sample(k, l, theta, GridSpec(grid.n_rho, grid.n_phi, a.rho_max), max_index=top)
    target = 2 * math.pi * theta if (n == k and m == l) else 0.0
    return abs(complex(np.sum(a.weights * a.values * b.values)) - target)


RESIDUAL_COLUMNS = ("check", "m", "n", "k", "l", "theta", "residual", "n_rho", "n_phi")


def residual_table(max_index: int = 4, thetas=(0.5, 1.0, 2.0), grid: GridSpec = GridSpec()) -> list[list]:
    """Trace and orthogonality residuals for all indices <= max_index.

    Every function is sampled once per theta on a grid whose radius covers
    the largest index, so this is the same quadrature as the single checks.
    """
    rows = []
    idx = range(max_index + 1)
    for theta in thetas:
        rho_max = grid.rho_max if grid.rho_max is not None else rho_max_for(max_index, theta)
        g = GridSpec(grid.n_rho, grid.n_phi, rho_max)
        samples = {(m, n): sample(m, n, theta, g, max_index) for m in idx for n in idx}
        w = samples[0, 0].weights
        for m in idx:
            for n in idx:
                target = 2 * math.pi * theta if m == n else 0.0
                res = abs(complex(np.sum(w * samples[m, n].values)) - target)
                rows.append(["trace", m, n, "", "", theta, res, grid.n_rho, grid.n_phi])
        for m in idx:
            for n in idx:
                for k in idx:
                    for l in idx:
                        target = 2 * math.pi * theta if (n == k and m == l) else 0.0
                        val = complex(np.sum(w * samples[m, n].values * samples[k, l].values))
                        rows.append(["orthogonality", m, n, k, l, theta, abs(val - target), grid.n_rho, grid.n_phi])
    return rows
