"""Compile a continuous problem into standard conic form.

Target form:  min c.x  s.t.  A x = b,  G x + s = h,  s in K,
with K a product of a nonnegative orthant (first m_lin rows of G) and
second-order cones. Scalar epigraphs u >= w^2 become 3-row SOC blocks
through the rotated-cone identity (u + 1/2, u - 1/2, sqrt(2) w) in SOC;
the quadratic objective becomes one epigraph variable bounding the
stacked weighted residual vector the same way.

A few passes of Ruiz equilibration tame the mixed scales that big-M rows
introduce; row factors are shared across each SOC block so the cone
geometry survives the scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BuildError
from .micp import EQ, GE, LE, MicpProblem


@dataclass
class ConicData:
    n: int                    # free variables (original + epigraph)
    n_orig: int               # original problem variables
    c: np.ndarray
    obj_const: float
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    m_lin: int
    soc_starts: np.ndarray    # absolute row offsets into G/h
    soc_sizes: np.ndarray
    col_scale: np.ndarray     # x_orig = col_scale * x_scaled
    free_idx: np.ndarray      # original index per solver column (first
                              # n_free entries; epigraph column excluded)
    fixed_val: np.ndarray     # (n_orig,) pinned values, 0 for free vars

    @property
    def degree(self) -> int:
        return self.m_lin + len(self.soc_starts)

    def expand(self, x_solver: np.ndarray) -> np.ndarray:
        """Scatter an (unscaled) solver solution over original vars."""
        out = self.fixed_val.copy()
        out[self.free_idx] = x_solver[:len(self.free_idx)]
        return out


def compile_conic(problem: MicpProblem, equilibrate: bool = True,
                  ruiz_iters: int = 8) -> ConicData:
    """Lower a continuous MicpProblem (no binaries, implications already
    expanded) to standard conic form."""
    if problem.binary_mask.any():
        raise BuildError("conic compile expects a continuous problem; "
                         "call relax() first")
    if problem.implications:
        raise BuildError("conic compile expects expanded implications")
    n0 = problem.n_vars
    lo, hi = problem.lo, problem.hi
    if np.any(lo > hi):
        raise BuildError("empty variable domain")
    fixed = lo == hi
    fixed_val = np.where(fixed, lo, 0.0)
    free_idx = np.flatnonzero(~fixed)
    col_of = np.full(n0 + 1, -1, dtype=np.int64)
    col_of[free_idx] = np.arange(len(free_idx))
    has_obj_soc = len(problem.obj_quad) > 0
    n = len(free_idx) + (1 if has_obj_soc else 0)
    t_obj = n - 1 if has_obj_soc else -1
    col_of[n0] = t_obj   # sentinel column for the objective epigraph

    obj_const = problem.obj_const
    c = np.zeros(n)
    for i, cv in problem.obj_lin.items():
        if fixed[i]:
            obj_const += cv * fixed_val[i]
        else:
            c[col_of[i]] += cv
    if has_obj_soc:
        c[t_obj] = 1.0

    a_rows, b_vals = [], []
    g_rows, h_vals = [], []

    def reduce_row(idx, coef, rhs):
        # substitute pinned variables into the rhs, remap the rest
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        on_fixed = fixed[idx]
        if on_fixed.any():
            rhs = rhs - coef[on_fixed] @ fixed_val[idx[on_fixed]]
            idx, coef = idx[~on_fixed], coef[~on_fixed]
        keep = np.abs(coef) > 1e-14
        return col_of[idx[keep]], coef[keep], float(rhs)

    def add_a(idx, coef, rhs):
        idx, coef, rhs = reduce_row(idx, coef, rhs)
        if len(idx) == 0:
            if abs(rhs) > 1e-9:
                raise BuildError("pinned variables contradict an equality")
            return
        a_rows.append((idx, coef))
        b_vals.append(rhs)

    def add_g(idx, coef, rhs, raw=False):
        if not raw:
            idx, coef, rhs = reduce_row(idx, coef, rhs)
            if len(idx) == 0:
                if rhs < -1e-9:
                    raise BuildError(
                        "pinned variables violate an inequality")
                # keep the row so cone bookkeeping stays aligned
        g_rows.append((np.asarray(idx, dtype=np.int64),
                       np.asarray(coef, dtype=float)))
        h_vals.append(float(rhs))

    for con in problem.constraints:
        if con.sense == EQ:
            add_a(con.idx, con.coef, con.rhs)
        elif con.sense == LE:
            add_g(con.idx, con.coef, con.rhs)
        else:
            add_g(con.idx, -con.coef, -con.rhs)

    for i in free_idx:
        if np.isfinite(hi[i]):
            add_g([col_of[i]], [1.0], float(hi[i]), raw=True)
        if np.isfinite(lo[i]):
            add_g([col_of[i]], [-1.0], -float(lo[i]), raw=True)

    m_lin = len(g_rows)
    soc_starts, soc_sizes = [], []

    for qb in problem.quad_bounds:
        soc_starts.append(len(g_rows))
        soc_sizes.append(3)
        uidx, ucoef, uoff = reduce_row([qb.u], [1.0], 0.0)
        widx, wcoef, woff = reduce_row(qb.idx, qb.coef, -qb.const)
        # s = (u + 1/2, u - 1/2, sqrt(2) w); offsets fold into h
        add_g(uidx, -ucoef, 0.5 - uoff, raw=True)
        add_g(uidx, -ucoef, -0.5 - uoff, raw=True)
        add_g(widx, -np.sqrt(2.0) * wcoef, -np.sqrt(2.0) * woff, raw=True)

    if has_obj_soc:
        soc_starts.append(len(g_rows))
        soc_sizes.append(2 + len(problem.obj_quad))
        add_g([t_obj], [-1.0], 0.5, raw=True)
        add_g([t_obj], [-1.0], -0.5, raw=True)
        for w, idx, coef, const in problem.obj_quad:
            f = np.sqrt(2.0 * w)
            widx, wcoef, woff = reduce_row(idx, coef, -const)
            add_g(widx, -f * wcoef, -f * woff, raw=True)

    A = _build_csr(a_rows, len(a_rows), n)
    G = _build_csr(g_rows, len(g_rows), n)
    data = ConicData(n=n, n_orig=n0, c=c, obj_const=obj_const,
                     A=A, b=np.asarray(b_vals), G=G,
                     h=np.asarray(h_vals), m_lin=m_lin,
                     soc_starts=np.asarray(soc_starts, dtype=np.int64),
                     soc_sizes=np.asarray(soc_sizes, dtype=np.int64),
                     col_scale=np.ones(n), free_idx=free_idx,
                     fixed_val=fixed_val)
    if equilibrate:
        _ruiz(data, ruiz_iters)
    return data


def _build_csr(rows, m, n) -> sp.csr_matrix:
    indptr = np.zeros(m + 1, dtype=np.int64)
    for r, (idx, _) in enumerate(rows):
        indptr[r + 1] = indptr[r] + len(idx)
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1], dtype=float)
    for r, (idx, coef) in enumerate(rows):
        order = np.argsort(idx, kind="stable")
        indices[indptr[r]:indptr[r + 1]] = idx[order]
        data[indptr[r]:indptr[r + 1]] = coef[order]
    return sp.csr_matrix((data, indices, indptr), shape=(m, n))


def _ruiz(data: ConicData, iters: int):
    """In-place Ruiz equilibration of [A; G] with block-shared SOC rows."""
    meq, m = data.A.shape[0], data.G.shape[0]
    dr_a = np.ones(meq)
    dr_g = np.ones(m)
    dc = np.ones(data.n)
    A = data.A.tocsc(copy=True)
    G = data.G.tocsc(copy=True)
    b = data.b.copy()
    h = data.h.copy()

    for _ in range(iters):
        # column pass over the stacked matrix
        cn = np.sqrt(np.maximum(_col_inf(A), _col_inf(G)))
        cn[cn == 0.0] = 1.0
        sc = 1.0 / cn
        A = A @ sp.diags(sc)
        G = G @ sp.diags(sc)
        dc *= sc
        # row pass including the rhs column; SOC blocks share one factor
        ra = np.sqrt(np.maximum(_row_inf(A), np.abs(b)))
        ra[ra == 0.0] = 1.0
        rg = np.maximum(_row_inf(G), np.abs(h))
        for st, sz in zip(data.soc_starts, data.soc_sizes):
            rg[st:st + sz] = max(rg[st:st + sz].max(), 1e-300)
        rg = np.sqrt(rg)
        rg[rg == 0.0] = 1.0
        A = sp.diags(1.0 / ra) @ A
        G = sp.diags(1.0 / rg) @ G
        b /= ra
        h /= rg
        dr_a /= ra
        dr_g /= rg

    data.A = A.tocsr()
    data.G = G.tocsr()
    data.b = b
    data.h = h
    data.c = data.c * dc
    data.col_scale = dc


def _segment_inf(data, indptr, count) -> np.ndarray:
    out = np.zeros(count)
    if data.size == 0:
        return out
    nz = np.diff(indptr) > 0
    starts = indptr[:-1][nz]
    out[nz] = np.maximum.reduceat(np.abs(data), starts)
    return out


def _col_inf(M) -> np.ndarray:
    Mc = M.tocsc()
    return _segment_inf(Mc.data, Mc.indptr, M.shape[1])


def _row_inf(M) -> np.ndarray:
    Mr = M.tocsr()
    return _segment_inf(Mr.data, Mr.indptr, M.shape[0])
