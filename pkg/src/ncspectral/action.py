"""Discretized 2D/4D actions: full evaluation and the cached incremental scheme.

``eval_full`` is a literal term-by-term evaluation and doubles as the oracle
for the O(N^2) single-entry update path in ``_kernels``. The incremental path
keeps a stack of intermediate matrices ("slots", see ``SlotLayout``) that a
one-entry change perturbs by a low-rank correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .linalg import anticommutator, commutator, dagger
from .model import DerivedCoeffs, Dim, FieldConfig, ModelParams, derive_coeffs

# 4D cross commutators in the Yang-Mills part: (x kind, x gauge index,
# y kind, y gauge index, sign); kind 0 = Z + Z^dagger, 1 = Z - Z^dagger.
CROSS_TERMS = (
    (0, 0, 1, 2, +1.0),
    (0, 0, 0, 2, -1.0),
    (1, 0, 0, 2, +1.0),
    (1, 0, 1, 2, -1.0),
    (0, 1, 0, 3, -1.0),
    (0, 1, 1, 3, +1.0),
    (1, 1, 0, 3, +1.0),
    (1, 1, 1, 3, -1.0),
)


@dataclass(frozen=True)
class ActionTerms:
    f_term: float
    v0_term: float
    v1_term: float
    d_term: float
    imag_residual: float = 0.0

    @property
    def total(self) -> float:
        return self.f_term + self.v0_term + self.v1_term + self.d_term

    def as_array(self) -> np.ndarray:
        return np.array([self.f_term, self.v0_term, self.v1_term, self.d_term])


def _linear_coeffs(params: ModelParams, coeffs: DerivedCoeffs) -> tuple[complex, complex]:
    """Coefficients of Z and Z^dagger in the linear (sin alpha) piece of the V terms."""
    v = coeffs.v_lin
    if params.hermitian_alpha_convention:
        return v * (1 + 1j), v * (1 - 1j)
    return v * (-1 + 1j), v * (1 + 1j)


def eval_full(
    params: ModelParams, config: FieldConfig, coeffs: DerivedCoeffs | None = None
) -> ActionTerms:
    """Evaluate every term of the action from scratch (O(N^3))."""
    config.check(params)
    if coeffs is None:
        coeffs = derive_coeffs(params)
    psi = config.psi
    psid = dagger(psi)
    z = config.z
    zd = [dagger(m) for m in z]
    mc = coeffs.mu_cos
    s = coeffs.d_prefactor
    cz, czd = _linear_coeffs(params, coeffs)

    # Yang-Mills part
    f = 0.0 + 0.0j
    for k in (0, 1):
        h = commutator(zd[k], z[k])
        f += np.trace(h @ h)
    if params.dim is Dim.FOUR:
        herm = [z[k] + zd[k] for k in range(4)]
        anti = [z[k] - zd[k] for k in range(4)]
        cross = 0.0 + 0.0j
        for kx, ix, ky, iy, sign in CROSS_TERMS:
            x = herm[ix] if kx == 0 else anti[ix]
            y = herm[iy] if ky == 0 else anti[iy]
            c = commutator(x, y)
            cross += sign * np.trace(c @ c)
        f += cross / 4
    f *= coeffs.d_coeff / 2

    # potential parts; group 0 uses psi psi^dagger, group 1 psi^dagger psi
    shift = mc * (psi + psid)
    groups = ((0, 2), (1, 3)) if params.dim is Dim.FOUR else ((0,), (1,))
    v = []
    for g, members in enumerate(groups):
        inner = psi @ psid if g == 0 else psid @ psi
        inner = inner + shift
        for k in members:
            inner = inner + 0.5 * anticommutator(zd[k], z[k])
            inner = inner + cz * z[k] + czd * zd[k]
        v.append(np.trace(inner @ inner))

    # covariant-derivative parts, Tr(L L^dagger)
    d = 0.0 + 0.0j
    for lo, hi in ((0, 1), (2, 3))[: params.dim.n_gauge // 2]:
        for sgn in (1.0, -1.0):
            x_hi = z[hi] + sgn * zd[hi]
            x_lo = z[lo] + sgn * zd[lo]
            cov = s * (mc * (x_hi - x_lo) + psi @ x_hi - x_lo @ psi)
            d += np.trace(cov @ dagger(cov))

    imag = abs((f + v[0] + v[1] + d).imag)
    return ActionTerms(
        f_term=float(f.real),
        v0_term=float(v[0].real),
        v1_term=float(v[1].real),
        d_term=float(d.real),
        imag_residual=float(imag),
    )


def scalar_action(params: ModelParams, psi: complex, z: list[complex]) -> float:
    """Closed form of the action for N = 1 (all commutators vanish)."""
    if params.n != 1:
        raise ValueError("scalar_action needs N = 1")
    coeffs = derive_coeffs(params)
    mc = coeffs.mu_cos
    cz, czd = _linear_coeffs(params, coeffs)
    groups = ((0, 2), (1, 3)) if params.dim is Dim.FOUR else ((0,), (1,))
    total = 0.0
    base = abs(psi) ** 2 + 2 * mc * psi.real
    for members in groups:
        inner = base + sum(abs(z[k]) ** 2 + cz * z[k] + czd * np.conj(z[k]) for k in members)
        total += (inner * inner).real
    # |L|^2 over the A/B pair equals 8 (1 + w^2) |mu cos + psi|^2 |z_hi - z_lo|^2
    for lo, hi in ((0, 1), (2, 3))[: params.dim.n_gauge // 2]:
        total += 4 * coeffs.d_prefactor ** 2 * abs(mc + psi) ** 2 * abs(z[hi] - z[lo]) ** 2
    return float(total)


class SlotLayout:
    """Index map into the stacked cache of intermediate matrices.

    For ``nz`` gauge matrices: Z+Z^dagger, Z-Z^dagger, [Z^dagger, Z],
    {Z^dagger, Z} (``nz`` each), the two V-term inner matrices, the ``nz``
    covariant matrices L_j and, in 4D, the eight cross commutators.
    """

    def __init__(self, dim: Dim):
        nz = dim.n_gauge
        self.nz = nz
        self.herm = nz * 0
        self.anti = nz * 1
        self.comm = nz * 2
        self.acomm = nz * 3
        self.inner = nz * 4
        self.cov = nz * 4 + 2
        self.cross = nz * 5 + 2
        self.n_cross = 8 if dim is Dim.FOUR else 0
        self.n_slots = self.cross + self.n_cross


def build_slots(params: ModelParams, coeffs: DerivedCoeffs, config: FieldConfig) -> np.ndarray:
    layout = SlotLayout(params.dim)
    n = params.n
    nz = layout.nz
    slots = np.zeros((layout.n_slots, n, n), dtype=np.complex128)
    psi = config.psi
    psid = dagger(psi)
    z = config.z
    zd = [dagger(m) for m in z]
    cz, czd = _linear_coeffs(params, coeffs)
    mc = coeffs.mu_cos
    s = coeffs.d_prefactor
    for k in range(nz):
        slots[layout.herm + k] = z[k] + zd[k]
        slots[layout.anti + k] = z[k] - zd[k]
        zdz = zd[k] @ z[k]
        zzd = z[k] @ zd[k]
        slots[layout.comm + k] = zdz - zzd
        slots[layout.acomm + k] = zdz + zzd
    shift = mc * (psi + psid)
    slots[layout.inner + 0] = psi @ psid + shift
    slots[layout.inner + 1] = psid @ psi + shift
    for k in range(nz):
        g = k % 2
        slots[layout.inner + g] += 0.5 * slots[layout.acomm + k] + cz * z[k] + czd * zd[k]
    for j in range(nz):
        pair, kind = divmod(j, 2)
        base = layout.herm if kind == 0 else layout.anti
        x_lo = slots[base + 2 * pair]
        x_hi = slots[base + 2 * pair + 1]
        slots[layout.cov + j] = s * (mc * (x_hi - x_lo) + psi @ x_hi - x_lo @ psi)
    for c, (kx, ix, ky, iy, _sign) in enumerate(CROSS_TERMS[: layout.n_cross]):
        x = slots[(layout.herm if kx == 0 else layout.anti) + ix]
        y = slots[(layout.herm if ky == 0 else layout.anti) + iy]
        slots[layout.cross + c] = x @ y - y @ x
    return slots


def terms_from_slots(params: ModelParams, coeffs: DerivedCoeffs, slots: np.ndarray) -> ActionTerms:
    layout = SlotLayout(params.dim)

    def tr_sq(m):
        return np.sum(m * m.T)

    f = tr_sq(slots[layout.comm]) + tr_sq(slots[layout.comm + 1])
    cross = 0.0
    for c, term in enumerate(CROSS_TERMS[: layout.n_cross]):
        cross += term[4] * tr_sq(slots[layout.cross + c])
    f = coeffs.d_coeff / 2 * (f + cross / 4)
    v0 = tr_sq(slots[layout.inner])
    v1 = tr_sq(slots[layout.inner + 1])
    d = sum(np.vdot(slots[layout.cov + j], slots[layout.cov + j]) for j in range(layout.nz))
    return ActionTerms(
        f_term=float(f.real),
        v0_term=float(v0.real),
        v1_term=float(v1.real),
        d_term=float(np.real(d)),
        imag_residual=float(abs((f + v0 + v1).imag)),
    )


class StaleCacheError(RuntimeError):
    """propose/commit called on a cache that no longer matches its fields."""


class ActionCache:
    """Fields plus the cached intermediates needed for O(N^2) local updates.

    ``fields`` is shared with the owning ``FieldConfig`` and is mutated by
    ``commit``. ``staleness`` counts commits since the last ``refresh``.
    """

    def __init__(self, params: ModelParams, config: FieldConfig, coeffs: DerivedCoeffs | None = None):
        config.check(params)
        self.params = params
        self.coeffs = coeffs if coeffs is not None else derive_coeffs(params)
        self.config = config
        self.layout = SlotLayout(params.dim)
        n = params.n
        self.dslots = np.zeros((self.layout.n_slots, n, n), dtype=np.complex128)
        self.touched = np.zeros(self.layout.n_slots, dtype=np.bool_)
        self.dterms = np.zeros(4)
        self.kernel_params = kernel_params(params, self.coeffs)
        self.pending = None
        self.valid = True
        self.refresh()

    @property
    def fields(self) -> np.ndarray:
        return self.config.fields

    @property
    def total(self) -> float:
        if not self.valid:
            self.refresh()
        return float(self.terms_array.sum())

    @property
    def terms(self) -> ActionTerms:
        if not self.valid:
            self.refresh()
        f, v0, v1, d = self.terms_array
        return ActionTerms(float(f), float(v0), float(v1), float(d), self.imag_residual)

    def refresh(self) -> float:
        """Rebuild all slots and terms from the fields; returns the drift removed."""
        old = getattr(self, "terms_array", None)
        self.slots = build_slots(self.params, self.coeffs, self.config)
        full = terms_from_slots(self.params, self.coeffs, self.slots)
        self.terms_array = full.as_array()
        self.imag_residual = full.imag_residual
        self.staleness = 0
        self.pending = None
        self.valid = True
        if old is None:
            return 0.0
        return abs(old.sum() - full.total) / (1.0 + abs(full.total))


def kernel_params(params: ModelParams, coeffs: DerivedCoeffs) -> np.ndarray:
    """Pack the scalar couplings for the compiled kernels."""
    cz, czd = _linear_coeffs(params, coeffs)
    return np.array(
        [coeffs.d_coeff, coeffs.mu_cos, coeffs.d_prefactor, cz, czd], dtype=np.complex128
    )


def _cache_of(state) -> ActionCache:
    return state if isinstance(state, ActionCache) else state.cache


def propose_delta(state, site: tuple[int, int, int], delta: complex) -> float:
    """Action change if entry ``site = (field, row, col)`` moved by ``delta``.

    Nothing is mutated apart from the scratch buffers; a following ``commit``
    with the same site and delta reuses the work.
    """
    cache = _cache_of(state)
    if not cache.valid:
        raise StaleCacheError("cache must be refreshed before proposing")
    fld, r, c = site
    n = cache.params.n
    if not (0 <= fld < cache.params.dim.n_fields and 0 <= r < n and 0 <= c < n):
        raise IndexError(f"site {site} out of range")
    ds = _kernels.propose(
        cache.fields, cache.slots, cache.dslots, cache.touched, cache.dterms,
        cache.kernel_params, cache.layout.nz, fld, r, c, complex(delta),
    )
    cache.pending = (fld, r, c, complex(delta))
    return float(ds)


def commit(state, site: tuple[int, int, int], delta: complex) -> None:
    """Apply the proposal made by the preceding ``propose_delta``."""
    cache = _cache_of(state)
    key = (site[0], site[1], site[2], complex(delta))
    if cache.pending != key:
        propose_delta(cache, site, delta)
    _kernels.commit(
        cache.fields, cache.slots, cache.dslots, cache.touched, cache.dterms,
        cache.terms_array, site[0], site[1], site[2], complex(delta),
    )
    cache.staleness += 1
    cache.pending = None


def refresh(state) -> float:
    return _cache_of(state).refresh()
