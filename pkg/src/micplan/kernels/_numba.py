"""Numba-compiled twins of the interior-point cone kernels.

Hot loops of the conic solver: NT scalings, scaled matrix-vector products,
normal-matrix assembly from CSR rows, cone line searches and Jordan-algebra
products. Signatures match ``_numpy`` exactly; no fastmath so both paths
stay numerically interchangeable.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def lin_scaling(s, z):
    w2 = np.empty_like(s)
    lam = np.empty_like(s)
    for i in range(s.shape[0]):
        w2[i] = s[i] / z[i]
        lam[i] = np.sqrt(s[i] * z[i])
    return w2, lam


@njit(cache=True)
def soc_scaling(s, z, starts, sizes):
    eta = np.zeros(starts.shape[0])
    wbar = np.zeros_like(s)
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        sn1 = 0.0
        zn1 = 0.0
        dot = 0.0
        for i in range(st + 1, st + sz):
            sn1 += s[i] * s[i]
            zn1 += z[i] * z[i]
        sn1 = np.sqrt(sn1)
        zn1 = np.sqrt(zn1)
        # factored residues avoid the cancellation of s0^2 - |s1|^2
        snorm = np.sqrt((s[st] - sn1) * (s[st] + sn1))
        znorm = np.sqrt((z[st] - zn1) * (z[st] + zn1))
        for i in range(st, st + sz):
            dot += (s[i] / snorm) * (z[i] / znorm)
        gamma = np.sqrt((1.0 + dot) / 2.0)
        wbar[st] = (s[st] / snorm + z[st] / znorm) / (2.0 * gamma)
        for i in range(st + 1, st + sz):
            wbar[i] = (s[i] / snorm - z[i] / znorm) / (2.0 * gamma)
        eta[k] = np.sqrt(snorm / znorm)
    return eta, wbar


@njit(cache=True)
def soc_mult_w(eta, wbar, u, starts, sizes, out, invert=False):
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        w0 = wbar[st]
        sgn = -1.0 if invert else 1.0
        dot = 0.0
        for i in range(st + 1, st + sz):
            dot += wbar[i] * u[i]
        scale = 1.0 / eta[k] if invert else eta[k]
        u0 = u[st]
        out[st] = scale * (w0 * u0 + sgn * dot)
        for i in range(st + 1, st + sz):
            out[i] = scale * (sgn * wbar[i] * u0 + u[i]
                              + (dot / (1.0 + w0)) * wbar[i])
    return out


@njit(cache=True)
def assemble_normal(n, indptr, indices, data, m_lin, dinv_lin, eta, wbar,
                    starts, sizes, out):
    out[:, :] = 0.0
    # orthant rows: rank-one updates d_r * g_r g_r^T on the row support
    for r in range(m_lin):
        d = dinv_lin[r]
        for a in range(indptr[r], indptr[r + 1]):
            ia = indices[a]
            va = d * data[a]
            for b in range(indptr[r], indptr[r + 1]):
                out[ia, indices[b]] += va * data[b]
    # SOC blocks: Gram of B = W^{-1} G_b over the block's column support;
    # assembling B^T B keeps the update positive semidefinite
    colmap = np.full(n, -1, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        nt = 0
        for r in range(st, st + sz):
            for a in range(indptr[r], indptr[r + 1]):
                col = indices[a]
                if colmap[col] < 0:
                    colmap[col] = nt
                    cols[nt] = col
                    nt += 1
        B = np.zeros((sz, nt))
        for r in range(st, st + sz):
            for a in range(indptr[r], indptr[r + 1]):
                B[r - st, colmap[indices[a]]] = data[a]
        w0 = wbar[st]
        einv = 1.0 / eta[k]
        for j in range(nt):
            dot = 0.0
            for r in range(1, sz):
                dot += wbar[st + r] * B[r, j]
            fac = dot / (1.0 + w0)
            u0 = B[0, j]
            B[0, j] = einv * (w0 * u0 - dot)
            for r in range(1, sz):
                B[r, j] = einv * (B[r, j] - wbar[st + r] * u0
                                  + fac * wbar[st + r])
        gram = np.dot(np.ascontiguousarray(B.T), B)
        for i in range(nt):
            ci = cols[i]
            for j in range(nt):
                out[ci, cols[j]] += gram[i, j]
        for i in range(nt):
            colmap[cols[i]] = -1
    return out


@njit(cache=True)
def max_step_lin(v, dv):
    alpha = np.inf
    for i in range(v.shape[0]):
        if dv[i] < 0.0:
            r = -v[i] / dv[i]
            if r < alpha:
                alpha = r
    return alpha


@njit(cache=True)
def max_step_soc(v, dv, starts, sizes):
    alpha = np.inf
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        a = dv[st] * dv[st]
        b = v[st] * dv[st]
        c = v[st] * v[st]
        for i in range(st + 1, st + sz):
            a -= dv[i] * dv[i]
            b -= v[i] * dv[i]
            c -= v[i] * v[i]
        best = np.inf
        disc = b * b - a * c
        if abs(a) > 1e-14:
            if disc >= 0.0:
                r = np.sqrt(disc)
                r1 = (-b + r) / a
                r2 = (-b - r) / a
                if r1 > 0.0 and r1 < best:
                    best = r1
                if r2 > 0.0 and r2 < best:
                    best = r2
        elif b < 0.0:
            best = -c / (2.0 * b)
        if dv[st] < 0.0:
            r3 = -v[st] / dv[st]
            if r3 < best:
                best = r3
        if best < alpha:
            alpha = best
    return alpha


@njit(cache=True)
def jordan_mul_soc(u, v, starts, sizes, out):
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        dot = 0.0
        for i in range(st, st + sz):
            dot += u[i] * v[i]
        u0 = u[st]
        v0 = v[st]
        out[st] = dot
        for i in range(st + 1, st + sz):
            out[i] = u0 * v[i] + v0 * u[i]
    return out


@njit(cache=True)
def jordan_div_soc(lam, d, starts, sizes, out):
    for k in range(starts.shape[0]):
        st = starts[k]
        sz = sizes[k]
        l0 = lam[st]
        det = l0 * l0
        num = l0 * d[st]
        for i in range(st + 1, st + sz):
            det -= lam[i] * lam[i]
            num -= lam[i] * d[i]
        v0 = num / det
        out[st] = v0
        for i in range(st + 1, st + sz):
            out[i] = (d[i] - v0 * lam[i]) / l0
    return out
