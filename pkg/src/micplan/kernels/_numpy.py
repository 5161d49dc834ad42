"""Pure-numpy implementations of the interior-point cone kernels.

Same signatures as the numba twins in ``_numba``; selected when the
``MICPLAN_KERNELS=numpy`` environment flag is set or numba is unavailable.
Second-order-cone blocks are described by absolute ``starts``/``sizes``
index arrays into the flat slack/dual vectors; rows before ``starts[0]``
belong to the nonnegative orthant.
"""

import numpy as np
import scipy.sparse as sp

NAME = "numpy"


def lin_scaling(s, z):
    """Nesterov-Todd scaling for the nonnegative orthant.

    Returns (w2, lam) with w2 = s/z (diagonal of W^2) and lam = sqrt(s*z).
    """
    w2 = s / z
    lam = np.sqrt(s * z)
    return w2, lam


def soc_scaling(s, z, starts, sizes):
    """NT scaling point per second-order cone block.

    Returns (eta, wbar) where W = eta * M(wbar) and wbar is J-unit
    (wbar0^2 - |wbar1|^2 = 1), stored flat alongside s/z.
    """
    eta = np.zeros(len(starts))
    wbar = np.zeros_like(s)
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        sb = s[st:st + sz]
        zb = z[st:st + sz]
        # factored residues avoid the cancellation of s0^2 - |s1|^2
        sn1 = np.linalg.norm(sb[1:])
        zn1 = np.linalg.norm(zb[1:])
        snorm = np.sqrt((sb[0] - sn1) * (sb[0] + sn1))
        znorm = np.sqrt((zb[0] - zn1) * (zb[0] + zn1))
        sh = sb / snorm
        zh = zb / znorm
        gamma = np.sqrt((1.0 + sh @ zh) / 2.0)
        wb = wbar[st:st + sz]
        wb[0] = (sh[0] + zh[0]) / (2.0 * gamma)
        wb[1:] = (sh[1:] - zh[1:]) / (2.0 * gamma)
        eta[k] = np.sqrt(snorm / znorm)
    return eta, wbar


def soc_mult_w(eta, wbar, u, starts, sizes, out, invert=False):
    """out = W u per SOC block, or W^{-1} u when invert is set."""
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        w0 = wbar[st]
        w1 = wbar[st + 1:st + sz]
        u0 = u[st]
        u1 = u[st + 1:st + sz]
        sgn = -1.0 if invert else 1.0
        dot = w1 @ u1
        c0 = w0 * u0 + sgn * dot
        c1 = sgn * w1 * u0 + u1 + (dot / (1.0 + w0)) * w1
        scale = 1.0 / eta[k] if invert else eta[k]
        out[st] = scale * c0
        out[st + 1:st + sz] = scale * c1
    return out


def assemble_normal(n, indptr, indices, data, m_lin, dinv_lin, eta, wbar,
                    starts, sizes, out):
    """Dense normal matrix out = G^T W^{-2} G for the current scaling.

    G is CSR with the m_lin orthant rows first, then the SOC blocks.
    Each block contributes the Gram matrix of W^{-1} G_b, assembled in
    that form (never as a difference of rank-one terms) so the result
    stays positive semidefinite in floating point.
    """
    G = sp.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, n))
    Glin = G[:m_lin]
    M = (Glin.T @ sp.diags(dinv_lin) @ Glin).toarray()
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        block = G[st:st + sz]
        cols = np.unique(block.indices)   # CSR indices are columns
        B = block[:, cols].toarray()
        w0 = wbar[st]
        w1 = wbar[st + 1:st + sz]
        dot = w1 @ B[1:]
        top = (w0 * B[0] - dot) / eta[k]
        B[1:] = (B[1:] - np.outer(w1, B[0])
                 + np.outer(w1, dot) / (1.0 + w0)) / eta[k]
        B[0] = top
        M[np.ix_(cols, cols)] += B.T @ B
    out[:, :] = M
    return out


def max_step_lin(v, dv):
    """sup alpha >= 0 with v + alpha*dv >= 0 (v > 0); inf if unbounded."""
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _soc_block_step(v0, v1, d0, d1):
    # largest alpha with (v + alpha d) in the cone; v strictly interior
    a = d0 * d0 - d1 @ d1
    b = v0 * d0 - v1 @ d1
    c = v0 * v0 - v1 @ v1
    cands = []
    disc = b * b - a * c
    if abs(a) > 1e-14:
        if disc >= 0.0:
            r = np.sqrt(disc)
            for root in ((-b + r) / a, (-b - r) / a):
                if root > 0.0:
                    cands.append(root)
    elif b < 0.0:
        cands.append(-c / (2.0 * b))
    if d0 < 0.0:
        cands.append(-v0 / d0)
    return min(cands) if cands else np.inf


def max_step_soc(v, dv, starts, sizes):
    """sup alpha >= 0 keeping every SOC block inside its cone."""
    alpha = np.inf
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        alpha = min(alpha, _soc_block_step(v[st], v[st + 1:st + sz],
                                           dv[st], dv[st + 1:st + sz]))
    return float(alpha)


def jordan_mul_soc(u, v, starts, sizes, out):
    """Jordan product u o v per SOC block: (u.v, u0 v1 + v0 u1)."""
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        ub = u[st:st + sz]
        vb = v[st:st + sz]
        out[st] = ub @ vb
        out[st + 1:st + sz] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def jordan_div_soc(lam, d, starts, sizes, out):
    """Solve lam o v = d per SOC block (arrowhead system, closed form)."""
    for k in range(len(starts)):
        st, sz = starts[k], sizes[k]
        l0 = lam[st]
        l1 = lam[st + 1:st + sz]
        det = l0 * l0 - l1 @ l1
        v0 = (l0 * d[st] - l1 @ d[st + 1:st + sz]) / det
        out[st] = v0
        out[st + 1:st + sz] = (d[st + 1:st + sz] - v0 * l1) / l0
    return out
