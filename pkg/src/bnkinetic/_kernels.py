"""Compiled inner loops.

Every kernel reads the distribution as a flat row-major array of N^d nodal
values on the cell-centred grid v_i = -V + (i + 1/2) h. Loops over output
points run under ``prange``; each output accumulates in a fixed order, so
results do not depend on the thread count.
"""

from __future__ import annotations

import math

import os

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old on some hosts; OpenMP is always present
if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "omp"

_JIT = dict(cache=True, nogil=True, error_model="numpy")


@njit(**_JIT)
def interp(vals, d, N, V, h, x):
    """Multilinear interpolation with zero extension outside [-V, V]^d."""
    if d == 3:
        return interp3(vals, N, V, h, x[0], x[1], x[2])
    for m in range(d):
        if x[m] < -V or x[m] > V:
            return 0.0
    i0 = np.empty(d, dtype=np.int64)
    t = np.empty(d)
    for m in range(d):
        s = (x[m] + V) / h - 0.5
        i0[m] = int(math.floor(s))
        t[m] = s - i0[m]
    acc = 0.0
    for corner in range(1 << d):
        w = 1.0
        idx = 0
        inside = True
        for m in range(d):
            if (corner >> m) & 1:
                j = i0[m] + 1
                w *= t[m]
            else:
                j = i0[m]
                w *= 1.0 - t[m]
            if j < 0 or j >= N:
                inside = False
                break
            idx = idx * N + j
        if inside and w != 0.0:
            acc += w * vals[idx]
    return acc


@njit(**_JIT)
def interp3(vals, N, V, h, x0, x1, x2):
    if x0 < -V or x0 > V or x1 < -V or x1 > V or x2 < -V or x2 > V:
        return 0.0
    s0 = (x0 + V) / h - 0.5
    s1 = (x1 + V) / h - 0.5
    s2 = (x2 + V) / h - 0.5
    i0 = int(math.floor(s0))
    i1 = int(math.floor(s1))
    i2 = int(math.floor(s2))
    t0 = s0 - i0
    t1 = s1 - i1
    t2 = s2 - i2
    acc = 0.0
    for a in range(2):
        j0 = i0 + a
        if j0 < 0 or j0 >= N:
            continue
        w0 = t0 if a == 1 else 1.0 - t0
        if w0 == 0.0:
            continue
        for b in range(2):
            j1 = i1 + b
            if j1 < 0 or j1 >= N:
                continue
            w1 = w0 * (t1 if b == 1 else 1.0 - t1)
            if w1 == 0.0:
                continue
            row = (j0 * N + j1) * N
            for c in range(2):
                j2 = i2 + c
                if j2 < 0 or j2 >= N:
                    continue
                w2 = w1 * (t2 if c == 1 else 1.0 - t2)
                acc += w2 * vals[row + j2]
    return acc


@njit(**_JIT)
def interp_many(vals, d, N, V, h, pts):
    out = np.empty(pts.shape[0])
    for p in range(pts.shape[0]):
        out[p] = interp(vals, d, N, V, h, pts[p])
    return out


@njit(**_JIT)
def _radial(gn, gamma, trunc):
    r = gn
    if trunc > 0.0 and trunc < r:
        r = trunc
    if gamma == 0.0:
        return 1.0
    return r ** gamma


@njit(**_JIT)
def _lex_positive(g, d):
    for m in range(d):
        if g[m] > 0.0:
            return True
        if g[m] < 0.0:
            return False
    return True


@njit(**_JIT)
def _rotate(ghat, ref, out, d):
    """Isometry R(ghat) mapping e1 to ghat, applied to ``ref``.

    R(-ghat) = -R(ghat) exactly, so the rule attached to the pair (v*, v)
    is the antipodal image of the rule attached to (v, v*).
    """
    if _lex_positive(ghat, d):
        # R = -(I - 2 w w^T / |w|^2), w = e1 + ghat
        uu = 2.0 + 2.0 * ghat[0]
        dot = ref[0] * (1.0 + ghat[0])
        for m in range(1, d):
            dot += ref[m] * ghat[m]
        c = 2.0 * dot / uu
        out[0] = -(ref[0] - c * (1.0 + ghat[0]))
        for m in range(1, d):
            out[m] = -(ref[m] - c * ghat[m])
    else:
        # R = I - 2 w w^T / |w|^2, w = e1 - ghat
        uu = 2.0 - 2.0 * ghat[0]
        dot = ref[0] * (1.0 - ghat[0])
        for m in range(1, d):
            dot -= ref[m] * ghat[m]
        c = 2.0 * dot / uu
        out[0] = ref[0] - c * (1.0 - ghat[0])
        for m in range(1, d):
            out[m] = ref[m] + c * ghat[m]


@njit(parallel=True, **_JIT)
def gain_loss(vals, d, N, V, h, nodes, qpts, fq, sig, wb, c_phi, gamma, trunc):
    """Gain and loss operators at arbitrary query points.

    ``sig`` holds reference sphere nodes with polar axis e1 and ``wb`` the
    weights already multiplied by b(node[0]). For each pair the rule is
    rotated so that its pole points along v - v*, which makes b(cos theta)
    equal to the tabulated factor in ``wb``.
    """
    m_q = qpts.shape[0]
    n_nodes = nodes.shape[0]
    n_sig = sig.shape[0]
    lbq = 0.0
    for s in range(n_sig):
        lbq += wb[s]
    vol = h ** d
    qplus = np.zeros(m_q)
    qminus = np.zeros(m_q)
    for p in prange(m_q):
        v = qpts[p]
        fv = fq[p]
        ghat = np.empty(d)
        c = np.empty(d)
        sg = np.empty(d)
        x1 = np.empty(d)
        x2 = np.empty(d)
        acc_p = 0.0
        acc_m = 0.0
        for j in range(n_nodes):
            fj = vals[j]
            g2 = 0.0
            for m in range(d):
                diff = v[m] - nodes[j, m]
                ghat[m] = diff
                c[m] = 0.5 * (v[m] + nodes[j, m])
                g2 += diff * diff
            gn = math.sqrt(g2)
            if gn == 0.0:
                if gamma > 0.0:
                    continue
                for m in range(d):
                    ghat[m] = 0.0
                ghat[0] = 1.0
            else:
                for m in range(d):
                    ghat[m] /= gn
            phi = c_phi * _radial(gn, gamma, trunc)
            half = 0.5 * gn
            sp = 0.0
            sl = 0.0
            for s in range(n_sig):
                _rotate(ghat, sig[s], sg, d)
                for m in range(d):
                    x1[m] = c[m] + half * sg[m]
                    x2[m] = c[m] - half * sg[m]
                if d == 3:
                    fp = interp3(vals, N, V, h, x1[0], x1[1], x1[2])
                    fs = interp3(vals, N, V, h, x2[0], x2[1], x2[2])
                else:
                    fp = interp(vals, d, N, V, h, x1)
                    fs = interp(vals, d, N, V, h, x2)
                sp += wb[s] * fp * fs
                sl += wb[s] * (fp + fs)
            acc_p += phi * sp * (1.0 + fv + fj)
            acc_m += phi * fj * (lbq + sl)
        qplus[p] = vol * acc_p
        qminus[p] = vol * acc_m
    return qplus, qminus


@njit(**_JIT)
def _psi(kind, par, x, d):
    if kind == 0:
        return 1.0
    if kind == 1:
        return x[int(par)]
    r2 = 0.0
    for m in range(d):
        r2 += x[m] * x[m]
    if kind == 2:
        return r2
    return r2 ** (0.5 * par)


@njit(parallel=True, **_JIT)
def weak_terms(vals, d, N, V, h, nodes, sig, wb, c_phi, gamma, trunc, kinds, pars):
    """Per-node partial sums of the weak form and of its absolute terms."""
    n_nodes = nodes.shape[0]
    n_sig = sig.shape[0]
    n_psi = kinds.shape[0]
    out = np.zeros((n_nodes, n_psi))
    mag = np.zeros((n_nodes, n_psi))
    for i in prange(n_nodes):
        fi = vals[i]
        if fi == 0.0:
            continue
        ghat = np.empty(d)
        c = np.empty(d)
        sg = np.empty(d)
        x1 = np.empty(d)
        x2 = np.empty(d)
        pv = np.empty(n_psi)
        for k in range(n_psi):
            pv[k] = _psi(kinds[k], pars[k], nodes[i], d)
        for j in range(n_nodes):
            fj = vals[j]
            if fj == 0.0:
                continue
            g2 = 0.0
            for m in range(d):
                diff = nodes[i, m] - nodes[j, m]
                ghat[m] = diff
                c[m] = 0.5 * (nodes[i, m] + nodes[j, m])
                g2 += diff * diff
            gn = math.sqrt(g2)
            if gn == 0.0:
                if gamma > 0.0:
                    continue
                for m in range(d):
                    ghat[m] = 0.0
                ghat[0] = 1.0
            else:
                for m in range(d):
                    ghat[m] /= gn
            pref = c_phi * _radial(gn, gamma, trunc) * fi * fj
            half = 0.5 * gn
            for s in range(n_sig):
                _rotate(ghat, sig[s], sg, d)
                for m in range(d):
                    x1[m] = c[m] + half * sg[m]
                    x2[m] = c[m] - half * sg[m]
                fp = interp(vals, d, N, V, h, x1)
                fs = interp(vals, d, N, V, h, x2)
                q = pref * wb[s] * (1.0 + fp + fs)
                for k in range(n_psi):
                    a1 = _psi(kinds[k], pars[k], x1, d)
                    a2 = _psi(kinds[k], pars[k], x2, d)
                    a3 = _psi(kinds[k], pars[k], nodes[j], d)
                    out[i, k] += q * (a2 + a1 - a3 - pv[k])
                    mag[i, k] += abs(q) * (abs(a1) + abs(a2) + abs(a3) + abs(pv[k]))
    return out, mag


@njit(**_JIT)
def _householder_basis(u, d, basis):
    """Rows 0..d-2 of ``basis`` become an orthonormal basis of u^perp."""
    if u[0] >= 0.0:
        w0 = 1.0 + u[0]
        sgn = 1.0
    else:
        w0 = 1.0 - u[0]
        sgn = -1.0
    ww = 2.0 * w0
    # w = e1 + sgn * u ; columns 1..d-1 of I - 2 w w^T / ww
    for col in range(1, d):
        wc = sgn * u[col]
        for m in range(d):
            wm = w0 if m == 0 else sgn * u[m]
            val = -2.0 * wm * wc / ww
            if m == col:
                val += 1.0
            basis[col - 1, m] = val


@njit(parallel=True, **_JIT)
def plane_integrals(vals, d, N, V, h, pts, normals):
    """Midpoint-lattice integral of the interpolant over planes through pts."""
    n_pl = pts.shape[0]
    out = np.zeros(n_pl)
    for p in prange(n_pl):
        v = pts[p]
        u = normals[p]
        basis = np.empty((d - 1, d))
        _householder_basis(u, d, basis)
        vu = 0.0
        for m in range(d):
            vu += v[m] * u[m]
        rho2 = d * V * V - vu * vu
        if rho2 <= 0.0:
            continue
        rho = math.sqrt(rho2)
        lo = np.empty(d - 1, dtype=np.int64)
        cnt = np.empty(d - 1, dtype=np.int64)
        total = 1
        for m in range(d - 1):
            cm = 0.0
            for k in range(d):
                cm -= v[k] * basis[m, k]
            lo[m] = int(math.ceil((cm - rho) / h))
            hi = int(math.floor((cm + rho) / h))
            cnt[m] = max(0, hi - lo[m] + 1)
            total *= cnt[m]
        x = np.empty(d)
        acc = 0.0
        for flat in range(total):
            rem = flat
            for k in range(d):
                x[k] = v[k]
            for m in range(d - 1):
                km = lo[m] + rem % cnt[m]
                rem //= cnt[m]
                for k in range(d):
                    x[k] += h * km * basis[m, k]
            acc += interp(vals, d, N, V, h, x)
        out[p] = acc * h ** (d - 1)
    return out


@njit(**_JIT)
def _btab(x, bx, by):
    if by.shape[0] == 2 and by[0] == by[1]:
        return by[0]
    return np.interp(x, bx, by)


@njit(parallel=True, **_JIT)
def carleman_gain(vals, d, N, V, h, qpts, fq, bx, by, c_phi, gamma, trunc):
    """Gain term through the hyperplane representation.

    Outer sum over the lattice v' = v + h k (k != 0), inner sum over the
    lattice v'* = v + h p on the plane through v orthogonal to v' - v.
    """
    m_q = qpts.shape[0]
    out = np.zeros(m_q)
    for q in prange(m_q):
        v = qpts[q]
        fv = fq[q]
        lo = np.empty(d, dtype=np.int64)
        cnt = np.empty(d, dtype=np.int64)
        total = 1
        for m in range(d):
            lo[m] = int(math.ceil((-V - v[m]) / h))
            hi = int(math.floor((V - v[m]) / h))
            cnt[m] = max(0, hi - lo[m] + 1)
            total *= cnt[m]
        a = np.empty(d)
        u = np.empty(d)
        x1 = np.empty(d)
        x2 = np.empty(d)
        x3 = np.empty(d)
        basis = np.empty((d - 1, d))
        plo = np.empty(d - 1, dtype=np.int64)
        pcnt = np.empty(d - 1, dtype=np.int64)
        acc = 0.0
        for flat in range(total):
            rem = flat
            zero = True
            ra2 = 0.0
            for m in range(d):
                km = lo[m] + rem % cnt[m]
                rem //= cnt[m]
                if km != 0:
                    zero = False
                a[m] = h * km
                x1[m] = v[m] + a[m]
                ra2 += a[m] * a[m]
            if zero:
                continue
            fp = interp(vals, d, N, V, h, x1)
            if fp == 0.0:
                continue
            ra = math.sqrt(ra2)
            for m in range(d):
                u[m] = a[m] / ra
            _householder_basis(u, d, basis)
            vu = 0.0
            for m in range(d):
                vu += v[m] * u[m]
            rho2 = d * V * V - vu * vu
            if rho2 <= 0.0:
                continue
            rho = math.sqrt(rho2)
            ptotal = 1
            for m in range(d - 1):
                cm = 0.0
                for k in range(d):
                    cm -= v[k] * basis[m, k]
                plo[m] = int(math.ceil((cm - rho) / h))
                hi = int(math.floor((cm + rho) / h))
                pcnt[m] = max(0, hi - plo[m] + 1)
                ptotal *= pcnt[m]
            inner = 0.0
            for pf in range(ptotal):
                prem = pf
                for k in range(d):
                    x2[k] = v[k]
                for m in range(d - 1):
                    pm = plo[m] + prem % pcnt[m]
                    prem //= pcnt[m]
                    for k in range(d):
                        x2[k] += h * pm * basis[m, k]
                fs = interp(vals, d, N, V, h, x2)
                if fs == 0.0:
                    continue
                rb2 = 0.0
                for k in range(d):
                    x3[k] = x1[k] + x2[k] - v[k]
                    rb2 += (x2[k] - v[k]) * (x2[k] - v[k])
                fst = interp(vals, d, N, V, h, x3)
                rn2 = ra2 + rb2
                rn = math.sqrt(rn2)
                cos_t = (rb2 - ra2) / rn2
                kern = c_phi * _radial(rn, gamma, trunc) * _btab(cos_t, bx, by)
                if d > 3:
                    kern /= rn ** (d - 2)
                else:
                    kern /= rn
                inner += kern * fs * (1.0 + fv + fst)
            acc += fp / ra * inner
        out[q] = acc * h ** (2 * d - 1) * 2.0 ** (d - 1)
    return out


N_BLOCKS = 8


@njit(inline="always", **_JIT)
def _tri_idx(vals, N, a0, a1, a2, t0, t1, t2):
    """Trilinear combination whose lower corner has integer index (a0, a1, a2)."""
    if a0 >= 0 and a1 >= 0 and a2 >= 0 and a0 < N - 1 and a1 < N - 1 and a2 < N - 1:
        base = (a0 * N + a1) * N + a2
        u0 = 1.0 - t0
        u1 = 1.0 - t1
        u2 = 1.0 - t2
        c00 = u2 * vals[base] + t2 * vals[base + 1]
        c01 = u2 * vals[base + N] + t2 * vals[base + N + 1]
        b2 = base + N * N
        c10 = u2 * vals[b2] + t2 * vals[b2 + 1]
        c11 = u2 * vals[b2 + N] + t2 * vals[b2 + N + 1]
        return u0 * (u1 * c00 + t1 * c01) + t0 * (u1 * c10 + t1 * c11)
    acc = 0.0
    for a in range(2):
        j0 = a0 + a
        if j0 < 0 or j0 >= N:
            continue
        w0 = t0 if a == 1 else 1.0 - t0
        for b in range(2):
            j1 = a1 + b
            if j1 < 0 or j1 >= N:
                continue
            w1 = w0 * (t1 if b == 1 else 1.0 - t1)
            for c in range(2):
                j2 = a2 + c
                if j2 < 0 or j2 >= N:
                    continue
                acc += w1 * (t2 if c == 1 else 1.0 - t2) * vals[(j0 * N + j1) * N + j2]
    return acc


@njit(parallel=True, **_JIT)
def collide_grid3(vals, N, V, h, sig, wb, c_phi, gamma, trunc, want_weak):
    """Gain, loss and weak-form sums on the full d = 3 grid.

    Each unordered node pair (i, j) with offset k = i - j lexicographically
    positive is visited once. For a fixed offset the post-collision
    displacements from v_i, in units of h, do not depend on i; they are
    computed once per offset and reused along the whole admissible i-box.

    Weak sums use the test functions 1, v_1, v_2, v_3, |v|^2 and are
    returned with their absolute-term magnitudes.
    """
    n_sig = sig.shape[0]
    nn = N * N * N
    lbq = 0.0
    for s in range(n_sig):
        lbq += wb[s]
    span = 2 * N - 1
    n_off = span * span * span
    acc_p = np.zeros((N_BLOCKS, nn))
    acc_m = np.zeros((N_BLOCKS, nn))
    weak = np.zeros((N_BLOCKS, 5))
    wmag = np.zeros((N_BLOCKS, 5))
    axis = np.empty(N)
    for i in range(N):
        axis[i] = -V + (i + 0.5) * h
    for blk in prange(N_BLOCKS):
        ghat = np.empty(3)
        sg = np.empty(3)
        dd = np.empty((n_sig, 6))
        ff = np.empty((n_sig, 6), dtype=np.int64)
        tt = np.empty((n_sig, 6))
        for o in range(blk, n_off, N_BLOCKS):
            k0 = o // (span * span) - (N - 1)
            k1 = (o // span) % span - (N - 1)
            k2 = o % span - (N - 1)
            if k0 < 0 or (k0 == 0 and (k1 < 0 or (k1 == 0 and k2 <= 0))):
                continue
            kn = math.sqrt(float(k0 * k0 + k1 * k1 + k2 * k2))
            gn = h * kn
            phi = c_phi * _radial(gn, gamma, trunc)
            ghat[0] = k0 / kn
            ghat[1] = k1 / kn
            ghat[2] = k2 / kn
            for s in range(n_sig):
                _rotate(ghat, sig[s], sg, 3)
                dd[s, 0] = -0.5 * k0 + 0.5 * kn * sg[0]
                dd[s, 1] = -0.5 * k1 + 0.5 * kn * sg[1]
                dd[s, 2] = -0.5 * k2 + 0.5 * kn * sg[2]
                dd[s, 3] = -0.5 * k0 - 0.5 * kn * sg[0]
                dd[s, 4] = -0.5 * k1 - 0.5 * kn * sg[1]
                dd[s, 5] = -0.5 * k2 - 0.5 * kn * sg[2]
                for m in range(6):
                    fl = math.floor(dd[s, m])
                    ff[s, m] = int(fl)
                    tt[s, m] = dd[s, m] - fl
            lo0 = max(0, k0)
            hi0 = N - 1 + min(0, k0)
            lo1 = max(0, k1)
            hi1 = N - 1 + min(0, k1)
            lo2 = max(0, k2)
            hi2 = N - 1 + min(0, k2)
            top = N - 0.5
            for i0 in range(lo0, hi0 + 1):
                for i1 in range(lo1, hi1 + 1):
                    row_i = (i0 * N + i1) * N
                    row_j = ((i0 - k0) * N + (i1 - k1)) * N - k2
                    for i2 in range(lo2, hi2 + 1):
                        ii = row_i + i2
                        jj = row_j + i2
                        fi = vals[ii]
                        fj = vals[jj]
                        sp = 0.0
                        sl = 0.0
                        w1 = 0.0
                        w2 = 0.0
                        w3 = 0.0
                        w4 = 0.0
                        m1 = 0.0
                        m2 = 0.0
                        m3 = 0.0
                        m4 = 0.0
                        do_weak = want_weak and fi * fj != 0.0
                        for s in range(n_sig):
                            x0 = i0 + dd[s, 0]
                            x1 = i1 + dd[s, 1]
                            x2 = i2 + dd[s, 2]
                            y0 = i0 + dd[s, 3]
                            y1 = i1 + dd[s, 4]
                            y2 = i2 + dd[s, 5]
                            fp = 0.0
                            fs = 0.0
                            if x0 >= -0.5 and x0 <= top and x1 >= -0.5 and x1 <= top and x2 >= -0.5 and x2 <= top:
                                fp = _tri_idx(vals, N, i0 + ff[s, 0], i1 + ff[s, 1], i2 + ff[s, 2],
                                              tt[s, 0], tt[s, 1], tt[s, 2])
                            if y0 >= -0.5 and y0 <= top and y1 >= -0.5 and y1 <= top and y2 >= -0.5 and y2 <= top:
                                fs = _tri_idx(vals, N, i0 + ff[s, 3], i1 + ff[s, 4], i2 + ff[s, 5],
                                              tt[s, 3], tt[s, 4], tt[s, 5])
                            sp += wb[s] * fp * fs
                            sl += wb[s] * (fp + fs)
                            if do_weak:
                                q = wb[s] * (1.0 + fp + fs)
                                a0 = axis[i0]
                                a1 = axis[i1]
                                a2 = axis[i2]
                                b0 = a0 - h * k0
                                b1 = a1 - h * k1
                                b2 = a2 - h * k2
                                p0 = a0 + h * dd[s, 0]
                                p1 = a1 + h * dd[s, 1]
                                p2 = a2 + h * dd[s, 2]
                                r0 = a0 + h * dd[s, 3]
                                r1 = a1 + h * dd[s, 4]
                                r2 = a2 + h * dd[s, 5]
                                w1 += q * (p0 + r0 - a0 - b0)
                                m1 += q * (abs(p0) + abs(r0) + abs(a0) + abs(b0))
                                w2 += q * (p1 + r1 - a1 - b1)
                                m2 += q * (abs(p1) + abs(r1) + abs(a1) + abs(b1))
                                w3 += q * (p2 + r2 - a2 - b2)
                                m3 += q * (abs(p2) + abs(r2) + abs(a2) + abs(b2))
                                ep = p0 * p0 + p1 * p1 + p2 * p2
                                er = r0 * r0 + r1 * r1 + r2 * r2
                                ea = a0 * a0 + a1 * a1 + a2 * a2
                                eb = b0 * b0 + b1 * b1 + b2 * b2
                                w4 += q * (ep + er - ea - eb)
                                m4 += q * (ep + er + ea + eb)
                        gain = phi * sp * (1.0 + fi + fj)
                        loss = phi * (lbq + sl)
                        acc_p[blk, ii] += gain
                        acc_p[blk, jj] += gain
                        acc_m[blk, ii] += loss * fj
                        acc_m[blk, jj] += loss * fi
                        if do_weak:
                            pre = phi * fi * fj
                            wmag[blk, 0] += 4.0 * pre * (lbq + sl)
                            weak[blk, 1] += pre * w1
                            wmag[blk, 1] += pre * m1
                            weak[blk, 2] += pre * w2
                            wmag[blk, 2] += pre * m2
                            weak[blk, 3] += pre * w3
                            wmag[blk, 3] += pre * m3
                            weak[blk, 4] += pre * w4
                            wmag[blk, 4] += pre * m4
    qplus = np.zeros(nn)
    qminus = np.zeros(nn)
    for blk in range(N_BLOCKS):
        for i in range(nn):
            qplus[i] += acc_p[blk, i]
            qminus[i] += acc_m[blk, i]
    if gamma == 0.0:
        # diagonal pairs: v' = v'* = v
        for i in range(nn):
            fi = vals[i]
            qplus[i] += c_phi * lbq * fi * fi * (1.0 + 2.0 * fi)
            qminus[i] += c_phi * lbq * fi * (1.0 + 2.0 * fi)
    vol = h * h * h
    for i in range(nn):
        qplus[i] *= vol
        qminus[i] *= vol
    wsum = np.zeros(5)
    msum = np.zeros(5)
    for blk in range(N_BLOCKS):
        for k in range(5):
            wsum[k] += weak[blk, k]
            msum[k] += wmag[blk, k]
    scale = vol * vol
    for k in range(5):
        wsum[k] *= scale
        msum[k] *= scale
    return qplus, qminus, wsum, msum
