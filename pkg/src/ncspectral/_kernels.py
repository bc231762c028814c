"""Compiled single-entry update kernels.

Slot indices follow ``action.SlotLayout``; ``kp`` packs
``[D, mu cos(alpha), sqrt(2(1+w^2)), c_z, c_zdagger]``. A change of one entry
by ``delta`` perturbs each cached matrix in at most two rows and two columns,
so every routine here is O(N^2) at worst.
"""

import numpy as np
from numba import njit

ACTION_MODEL = 0
ACTION_GAUSSIAN = 1

# (x kind, x index, y kind, y index, sign); must match action.CROSS_TERMS
_CROSS = np.array(
    [
        [0, 0, 1, 2, 1.0],
        [0, 0, 0, 2, -1.0],
        [1, 0, 0, 2, 1.0],
        [1, 0, 1, 2, -1.0],
        [0, 1, 0, 3, -1.0],
        [0, 1, 1, 3, 1.0],
        [1, 1, 0, 3, 1.0],
        [1, 1, 1, 3, -1.0],
    ]
)


@njit(cache=True)
def _dtrsq(m, d):
    # Re[Tr((m + d)^2) - Tr(m^2)]
    n = m.shape[0]
    acc = 0.0 + 0.0j
    for i in range(n):
        for j in range(n):
            acc += (2.0 * m[j, i] + d[j, i]) * d[i, j]
    return acc.real


@njit(cache=True)
def _dnorm(m, d):
    # ||m + d||_F^2 - ||m||_F^2
    n = m.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(n):
            x = d[i, j]
            y = m[i, j]
            acc += 2.0 * (y.real * x.real + y.imag * x.imag) + x.real * x.real + x.imag * x.imag
    return acc


@njit(cache=True)
def _add_left(out, coef, a, b, r, c, y):
    # out += coef * (a E_rc + b E_cr) @ y
    n = y.shape[0]
    for q in range(n):
        out[r, q] += coef * a * y[c, q]
        out[c, q] += coef * b * y[r, q]


@njit(cache=True)
def _add_right(out, coef, a, b, r, c, y):
    # out += coef * y @ (a E_rc + b E_cr)
    n = y.shape[0]
    for q in range(n):
        out[q, c] += coef * a * y[q, r]
        out[q, r] += coef * b * y[q, c]


@njit(cache=True)
def propose(fields, slots, dslots, touched, dterms, kp, nz, fld, r, c, delta):
    n = fields.shape[1]
    herm = 0
    anti = nz
    comm = 2 * nz
    acomm = 3 * nz
    inner = 4 * nz
    cov = 4 * nz + 2
    cross = 5 * nz + 2
    dcoef = kp[0].real
    mc = kp[1].real
    s = kp[2].real
    cz = kp[3]
    czd = kp[4]
    dd = delta
    dc = np.conj(delta)
    a2 = (delta * dc).real
    touched[:] = False
    dterms[:] = 0.0
    psi = fields[0]

    if fld == 0:
        dm0 = dslots[inner]
        dm1 = dslots[inner + 1]
        dm0[:, :] = 0.0
        dm1[:, :] = 0.0
        for q in range(n):
            dm0[r, q] += dd * np.conj(psi[q, c])
            dm0[q, r] += dc * psi[q, c]
            dm1[c, q] += dc * psi[r, q]
            dm1[q, c] += dd * np.conj(psi[r, q])
        dm0[r, r] += a2
        dm1[c, c] += a2
        dm0[r, c] += mc * dd
        dm0[c, r] += mc * dc
        dm1[r, c] += mc * dd
        dm1[c, r] += mc * dc
        touched[inner] = True
        touched[inner + 1] = True
        dterms[1] = _dtrsq(slots[inner], dm0)
        dterms[2] = _dtrsq(slots[inner + 1], dm1)
        sd = s * dd
        for j in range(nz):
            pair = j // 2
            base = herm if j % 2 == 0 else anti
            x_lo = slots[base + 2 * pair]
            x_hi = slots[base + 2 * pair + 1]
            dl = dslots[cov + j]
            dl[:, :] = 0.0
            for q in range(n):
                dl[r, q] += sd * x_hi[c, q]
                dl[q, c] -= sd * x_lo[q, r]
            touched[cov + j] = True
            dterms[3] += _dnorm(slots[cov + j], dl)
        return dterms[0] + dterms[1] + dterms[2] + dterms[3]

    k = fld - 1
    z = fields[fld]
    da = dslots[herm + k]
    db = dslots[anti + k]
    dh = dslots[comm + k]
    dk = dslots[acomm + k]
    da[:, :] = 0.0
    db[:, :] = 0.0
    dh[:, :] = 0.0
    dk[:, :] = 0.0
    da[r, c] += dd
    da[c, r] += dc
    db[r, c] += dd
    db[c, r] -= dc
    for q in range(n):
        t1 = dd * np.conj(z[r, q])
        t2 = dc * z[r, q]
        t3 = dd * np.conj(z[q, c])
        t4 = dc * z[q, c]
        dk[q, c] += t1
        dk[c, q] += t2
        dk[r, q] += t3
        dk[q, r] += t4
        dh[q, c] += t1
        dh[c, q] += t2
        dh[r, q] -= t3
        dh[q, r] -= t4
    dk[c, c] += a2
    dk[r, r] += a2
    dh[c, c] += a2
    dh[r, r] -= a2
    touched[herm + k] = True
    touched[anti + k] = True
    touched[comm + k] = True
    touched[acomm + k] = True

    if k < 2:
        dterms[0] += 0.5 * dcoef * _dtrsq(slots[comm + k], dh)

    g = k % 2
    dm = dslots[inner + g]
    for i in range(n):
        for j in range(n):
            dm[i, j] = 0.5 * dk[i, j]
    dm[r, c] += cz * dd
    dm[c, r] += czd * dc
    touched[inner + g] = True
    dterms[1 + g] = _dtrsq(slots[inner + g], dm)

    pair = k // 2
    hi = k % 2 == 1
    for kind in range(2):
        j = 2 * pair + kind
        b = dc if kind == 0 else -dc
        dl = dslots[cov + j]
        dl[:, :] = 0.0
        sign = 1.0 if hi else -1.0
        dl[r, c] += sign * s * mc * dd
        dl[c, r] += sign * s * mc * b
        if hi:
            _add_right(dl, s, dd, b, r, c, psi)
        else:
            _add_left(dl, -s, dd, b, r, c, psi)
        touched[cov + j] = True
        dterms[3] += _dnorm(slots[cov + j], dl)

    if nz == 4:
        for ci in range(8):
            kx = int(_CROSS[ci, 0])
            ix = int(_CROSS[ci, 1])
            ky = int(_CROSS[ci, 2])
            iy = int(_CROSS[ci, 3])
            sgn = _CROSS[ci, 4]
            if ix != k and iy != k:
                continue
            dcm = dslots[cross + ci]
            dcm[:, :] = 0.0
            if ix == k:
                b = dc if kx == 0 else -dc
                y = slots[(herm if ky == 0 else anti) + iy]
                _add_left(dcm, 1.0, dd, b, r, c, y)
                _add_right(dcm, -1.0, dd, b, r, c, y)
            else:
                b = dc if ky == 0 else -dc
                x = slots[(herm if kx == 0 else anti) + ix]
                _add_right(dcm, 1.0, dd, b, r, c, x)
                _add_left(dcm, -1.0, dd, b, r, c, x)
            touched[cross + ci] = True
            dterms[0] += 0.125 * dcoef * sgn * _dtrsq(slots[cross + ci], dcm)

    return dterms[0] + dterms[1] + dterms[2] + dterms[3]


@njit(cache=True)
def commit(fields, slots, dslots, touched, dterms, terms, fld, r, c, delta):
    fields[fld, r, c] += delta
    for sl in range(slots.shape[0]):
        if touched[sl]:
            slots[sl] += dslots[sl]
    for t in range(4):
        terms[t] += dterms[t]


@njit(cache=True)
def metropolis_accept(ds, u):
    if ds < 0.0:
        return True
    return np.exp(-ds) > u


@njit(cache=True)
def sweep(fields, slots, dslots, touched, dterms, terms, kp, nz, rnd, amplitude, action_kind, cursor):
    """Run ``rnd.shape[0]`` Metropolis steps starting at site ``cursor``.

    ``rnd[i]`` holds the three uniforms of step i: real part, imaginary part,
    acceptance test. Returns the number of accepted steps.
    """
    nf = fields.shape[0]
    n = fields.shape[1]
    n_sites = nf * n * n
    accepted = 0
    site = cursor
    for i in range(rnd.shape[0]):
        fld = site // (n * n)
        rem = site - fld * n * n
        r = rem // n
        c = rem - r * n
        delta = amplitude * (2.0 * rnd[i, 0] - 1.0) + 1j * amplitude * (2.0 * rnd[i, 1] - 1.0)
        if action_kind == ACTION_GAUSSIAN:
            x = fields[fld, r, c]
            y = x + delta
            ds = (y.real * y.real + y.imag * y.imag) - (x.real * x.real + x.imag * x.imag)
            if metropolis_accept(ds, rnd[i, 2]):
                fields[fld, r, c] = y
                accepted += 1
        else:
            ds = propose(fields, slots, dslots, touched, dterms, kp, nz, fld, r, c, delta)
            if metropolis_accept(ds, rnd[i, 2]):
                commit(fields, slots, dslots, touched, dterms, terms, fld, r, c, delta)
                accepted += 1
        site += 1
        if site == n_sites:
            site = 0
    return accepted
