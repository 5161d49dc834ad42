"""Homogeneous self-dual interior-point solver.

Solves  min c.x  s.t.  A x = b, G x + s = h, s in K  (orthant x SOCs)
together with its dual in one self-dual embedding, so infeasibility and
unboundedness fall out as certificates instead of needing a phase-I
solve. Search directions use Nesterov-Todd scaling with a Mehrotra
predictor-corrector; the per-iteration linear algebra reduces to a dense
quasi-definite system

    [ G'W^-2G + dI   A' ] [dx]   [r1]
    [ A             -dI ] [dy] = [r2]

factored by LU with static regularization and iterative refinement
against the unregularized operator. All cone-wise operations go through
the kernel backend (numba or numpy twins).

The iterate path is fully deterministic: fixed ordering, no randomized
or time-dependent heuristics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels as kernel_dispatch
from .conic import ConicData

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max-iter"

_STEP_BACK = 0.99
_DELTA_REG = 1e-10
_MIN_STEP = 1e-9


@dataclass
class ConvexSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    res_primal: float
    res_dual: float
    rel_gap: float
    certificate_norm: float = np.inf
    mu_path: list = field(default_factory=list)

    @property
    def kkt_residual(self) -> float:
        """Worst scaled KKT measure at the reported point."""
        return max(self.res_primal, self.res_dual, self.rel_gap)


class _Cones:
    """Vector ops over the product cone, dispatched to a kernel module."""

    def __init__(self, m: int, m_lin: int, starts, sizes, kern):
        self.m = m
        self.m_lin = m_lin
        self.starts = np.asarray(starts, dtype=np.int64)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.kern = kern

    def unit(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[:self.m_lin] = 1.0
        e[self.starts] = 1.0
        return e

    def margin(self, v) -> float:
        vals = [np.inf]
        if self.m_lin:
            vals.append(float(v[:self.m_lin].min()))
        for st, sz in zip(self.starts, self.sizes):
            vals.append(float(v[st] - np.linalg.norm(v[st + 1:st + sz])))
        return min(vals)

    def scale(self, s, z):
        ml = self.m_lin
        w2, lam_lin = self.kern.lin_scaling(s[:ml], z[:ml])
        eta, wbar = self.kern.soc_scaling(s, z, self.starts, self.sizes)
        lam = np.zeros(self.m)
        lam[:ml] = lam_lin
        self.kern.soc_mult_w(eta, wbar, z, self.starts, self.sizes, lam)
        return w2, eta, wbar, lam

    def mult_w(self, w2, eta, wbar, u, invert=False):
        out = np.zeros(self.m)
        ml = self.m_lin
        w = np.sqrt(w2)
        out[:ml] = u[:ml] / w if invert else u[:ml] * w
        self.kern.soc_mult_w(eta, wbar, u, self.starts, self.sizes, out,
                             invert)
        return out

    def mult_w2(self, w2, eta, wbar, u, invert=False):
        # composed as W(Wu) rather than the closed 2ww^T - J form: the
        # composition never subtracts large rank-one terms
        out = self.mult_w(w2, eta, wbar, u, invert)
        out = self.mult_w(w2, eta, wbar, out, invert)
        ml = self.m_lin
        out[:ml] = u[:ml] / w2 if invert else u[:ml] * w2
        return out

    def jordan_mul(self, u, v):
        out = np.zeros(self.m)
        ml = self.m_lin
        out[:ml] = u[:ml] * v[:ml]
        self.kern.jordan_mul_soc(u, v, self.starts, self.sizes, out)
        return out

    def jordan_div(self, lam, d):
        out = np.zeros(self.m)
        ml = self.m_lin
        out[:ml] = d[:ml] / lam[:ml]
        self.kern.jordan_div_soc(lam, d, self.starts, self.sizes, out)
        return out

    def max_step(self, v, dv) -> float:
        a = self.kern.max_step_lin(v[:self.m_lin], dv[:self.m_lin])
        b = self.kern.max_step_soc(v, dv, self.starts, self.sizes)
        return float(min(a, b))


class _Kkt:
    """Factorization of the reduced saddle system for one scaling."""

    def __init__(self, n, A_dense, G, cones, delta=_DELTA_REG):
        self.n = n
        self.meq = A_dense.shape[0]
        self.A = A_dense
        self.G = G
        self.cones = cones
        self.delta = delta
        dim = n + self.meq
        self.K = np.zeros((dim, dim))
        if self.meq:
            self.K[:n, n:] = A_dense.T
            self.K[n:, :n] = A_dense

    def refactor(self, M, scaling):
        self.M = M
        self.scaling = scaling
        n = self.n
        idx = np.arange(n)
        delta = self.delta
        for attempt in range(5):
            self.K[:n, :n] = M
            self.K[idx, idx] += delta
            if self.meq:
                jdx = np.arange(n, n + self.meq)
                self.K[jdx, jdx] = -delta
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    self.lu = sla.lu_factor(self.K, check_finite=False)
            except np.linalg.LinAlgError:
                delta *= 1e4
                continue
            self.K[idx, idx] -= delta
            piv = np.abs(np.diag(self.lu[0]))
            if piv.min() == 0.0 or not np.isfinite(piv.max()):
                delta *= 1e4
                continue
            return
        raise np.linalg.LinAlgError("KKT factorization failed")

    def _reduced(self, r1, r2, refine=3):
        rhs = np.concatenate([r1, r2])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        n = self.n
        for _ in range(refine):
            u1, u2 = sol[:n], sol[n:]
            res1 = r1 - self.M @ u1
            if self.meq:
                res1 -= self.A.T @ u2
                res2 = r2 - self.A @ u1
            else:
                res2 = r2
            err = max(np.abs(res1).max(initial=0.0),
                      np.abs(res2).max(initial=0.0))
            if err < 1e-13 * (1.0 + np.abs(rhs).max(initial=0.0)):
                break
            sol += sla.lu_solve(self.lu, np.concatenate([res1, res2]),
                                check_finite=False)
        return sol[:n], sol[n:]

    def _solve_once(self, bx, by, bz):
        w2, eta, wbar, _ = self.scaling
        t = self.cones.mult_w2(w2, eta, wbar, bz, invert=True)
        r1 = bx + self.G.T @ t
        dx, dy = self._reduced(r1, by)
        dz = self.cones.mult_w2(w2, eta, wbar, self.G @ dx - bz, invert=True)
        return dx, dy, dz

    def solve(self, bx, by, bz, refine=4):
        """Solve [[0 A' G'],[A 0 0],[G 0 -W^2]] (dx,dy,dz) = (bx,by,bz).

        Refinement runs on the full 3x3 system; the W^-2 backsubstitution
        amplifies reduced-system error into dz, so correcting only the
        reduced equations is not enough near convergence.
        """
        w2, eta, wbar, _ = self.scaling
        dx, dy, dz = self._solve_once(bx, by, bz)
        scale = 1.0 + max(np.abs(bx).max(initial=0.0),
                          np.abs(by).max(initial=0.0),
                          np.abs(bz).max(initial=0.0))
        for _ in range(refine):
            r1 = bx - self.G.T @ dz
            if self.meq:
                r1 = r1 - self.A.T @ dy
                r2 = by - self.A @ dx
            else:
                r2 = by
            r3 = bz - self.G @ dx + self.cones.mult_w2(w2, eta, wbar, dz)
            err = max(np.abs(r1).max(initial=0.0),
                      np.abs(r2).max(initial=0.0),
                      np.abs(r3).max(initial=0.0))
            if err <= 1e-14 * scale:
                break
            cx, cy, cz = self._solve_once(r1, r2, r3)
            dx = dx + cx
            dy = dy + cy
            dz = dz + cz
        return dx, dy, dz


def solve_conic(data: ConicData, kern=None, tol=1e-9, accept_tol=1e-8,
                max_iter=200, warm_x=None):
    """Run the HSD interior-point iteration on compiled conic data.

    Iterates toward ``tol`` on (primal, dual, relative-gap) measures; if
    numerics floor out first, the best iterate is accepted as optimal
    when it meets ``accept_tol``. Returns (x, info) with x unscaled and
    scattered back over the original variables (None unless optimal);
    ``info`` carries status, residuals, certificate norms and the
    per-iteration mu path.
    """
    kern = kern or kernel_dispatch.active
    n, meq, m = data.n, len(data.b), len(data.h)
    A, G, b, h, c = data.A, data.G, data.b, data.h, data.c
    cones = _Cones(m, data.m_lin, data.soc_starts, data.soc_sizes, kern)
    A_dense = A.toarray() if meq else np.zeros((0, n))
    kkt = _Kkt(n, A_dense, G, cones)
    e = cones.unit()
    degree = data.degree

    norm_b = max(1.0, np.linalg.norm(b)) if meq else 1.0
    norm_h = max(1.0, np.linalg.norm(h)) if m else 1.0
    norm_c = max(1.0, np.linalg.norm(c))

    # -- initial point ---------------------------------------------------
    ident = (np.ones(data.m_lin), np.ones(len(data.soc_starts)),
             _ident_wbar(data), None)
    M0 = _normal_matrix(data, cones, np.ones(data.m_lin),
                        np.ones(len(data.soc_starts)), ident[2], kern)
    kkt.refactor(M0, ident)
    if warm_x is not None and len(warm_x) >= data.n_orig:
        x = np.zeros(n)
        nf = len(data.free_idx)
        x[:nf] = np.asarray(warm_x)[data.free_idx] / data.col_scale[:nf]
    else:
        x, _, _ = kkt.solve(np.zeros(n), b, h)
    s_hat = h - G @ x
    marg = cones.margin(s_hat) if m else 1.0
    s = s_hat if marg > 1e-8 else s_hat + (1.0 - marg) * e
    _, y, z_hat = kkt.solve(-c, np.zeros(meq), np.zeros(m))
    marg = cones.margin(z_hat) if m else 1.0
    z = z_hat if marg > 1e-8 else z_hat + (1.0 - marg) * e
    tau, kappa = 1.0, 1.0

    status = MAX_ITER
    info = {"mu_path": [], "cert_norm": np.inf}
    best = None
    it = 0

    err_state = np.errstate(over="ignore", invalid="ignore",
                            divide="ignore")
    err_state.__enter__()
    for it in range(1, max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau if meq else G.T @ z + c * tau
        ry = A @ x - b * tau if meq else np.zeros(0)
        rz = G @ x + s - h * tau
        rtau = float(c @ x + (b @ y if meq else 0.0) + h @ z + kappa)

        sz = float(s @ z)
        mu = (sz + tau * kappa) / (degree + 1)
        info["mu_path"].append(mu)
        if not np.isfinite(mu) or tau <= 0.0 or kappa <= 0.0 or \
                (m and min(cones.margin(s), cones.margin(z)) <= 0.0):
            break  # numerical floor reached; fall back to best iterate

        pcost = float(c @ x) / tau
        dcost = -((b @ y if meq else 0.0) + h @ z) / tau
        pres = max(np.linalg.norm(ry) / norm_b if meq else 0.0,
                   np.linalg.norm(rz) / norm_h) / tau
        dres = np.linalg.norm(rx) / norm_c / tau
        gap_abs = sz / tau ** 2
        relgap = gap_abs / max(1.0, abs(pcost))
        metrics = (pres, dres, relgap, pcost)
        if best is None or max(pres, dres, relgap) < max(best[1][:3]):
            best = ((x / tau, y / tau, z / tau, s / tau), metrics, it)

        if pres <= tol and dres <= tol and relgap <= tol:
            status = OPTIMAL
            break
        # once the best iterate is acceptable, deterioration means the
        # numerical floor is reached: stop burning factorizations
        if best is not None and best[2] != it:
            bbest = max(best[1][:3])
            if bbest <= accept_tol and max(pres, dres, relgap) > 4 * bbest:
                break

        # Farkas certificates: scale-free ratios, with a floor on the
        # certificate's own magnitude so roundoff cannot fake one
        by_hz = float((b @ y if meq else 0.0) + h @ z)
        zy_scale = max(1.0, np.linalg.norm(z),
                       np.linalg.norm(y) if meq else 0.0)
        if by_hz < -1e-8 * zy_scale:
            cert = np.linalg.norm(A.T @ y + G.T @ z if meq
                                  else G.T @ z) / (-by_hz)
            if cert <= tol:
                status = INFEASIBLE
                info["cert_norm"] = cert
                break
        cx = float(c @ x)
        xs_scale = max(1.0, np.linalg.norm(x), np.linalg.norm(s))
        if cx < -1e-8 * xs_scale:
            cert = max(np.linalg.norm(A @ x) / norm_b if meq else 0.0,
                       np.linalg.norm(G @ x + s) / norm_h) / (-cx)
            if cert <= tol:
                status = UNBOUNDED
                info["cert_norm"] = cert
                break

        try:
            scaling = cones.scale(s, z)
        except (ZeroDivisionError, FloatingPointError):
            break
        w2, eta, wbar, lam = scaling
        if not (np.isfinite(lam).all() and np.isfinite(w2).all()
                and np.isfinite(eta).all()):
            break
        try:
            M = _normal_matrix(data, cones, w2, eta, wbar, kern)
            if not np.isfinite(M).all():
                break
            kkt.refactor(M, scaling)
            v2 = kkt.solve(-c, b, h)
            lam_sq = cones.jordan_mul(lam, lam)
        except (ZeroDivisionError, np.linalg.LinAlgError):
            break

        # complementarity pairs that have collapsed far below mu are
        # done; asking Newton to re-center them (target sigma*mu over a
        # denormal lambda) would blow up the direction for everyone
        dead = np.zeros(m, dtype=bool)
        ml = data.m_lin
        dead[:ml] = lam_sq[:ml] <= 1e-12 * mu
        for st, szb in zip(data.soc_starts, data.soc_sizes):
            if lam_sq[st] <= 1e-12 * mu:
                dead[st:st + szb] = True
        lam_safe = lam.copy()
        if dead.any():
            lam_safe[dead] = 0.0
            lam_safe[:ml][dead[:ml]] = 1.0
            for st, szb in zip(data.soc_starts, data.soc_sizes):
                if dead[st]:
                    lam_safe[st] = 1.0

        def direction(sigma, corr, corr_tau):
            f = 1.0 - sigma
            ds_t = sigma * mu * e - lam_sq - corr
            ds_t[dead] = 0.0
            dk_t = sigma * mu - tau * kappa - corr_tau
            dtld = cones.jordan_div(lam_safe, ds_t)
            bz = -f * rz - cones.mult_w(w2, eta, wbar, dtld)
            v1 = kkt.solve(-f * rx, -f * ry, bz)
            num = (-f * rtau - dk_t / tau
                   - float(c @ v1[0] + (b @ v1[1] if meq else 0.0)
                           + h @ v1[2]))
            den = (float(c @ v2[0] + (b @ v2[1] if meq else 0.0)
                         + h @ v2[2]) - kappa / tau)
            dtau = num / den
            dx = v1[0] + dtau * v2[0]
            dy = v1[1] + dtau * v2[1]
            dz = v1[2] + dtau * v2[2]
            ds = cones.mult_w(w2, eta, wbar,
                              dtld - cones.mult_w(w2, eta, wbar, dz))
            dkappa = (dk_t - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        # predictor
        try:
            aff = direction(0.0, np.zeros(m), 0.0)
            a_aff = _boundary_step(cones, s, z, tau, kappa, aff)
            a_aff = min(1.0, a_aff)
            mu_aff = (float((s + a_aff * aff[3]) @ (z + a_aff * aff[2]))
                      + (tau + a_aff * aff[4]) * (kappa + a_aff * aff[5])) \
                / (degree + 1)
            sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

            # corrector
            corr = cones.jordan_mul(
                cones.mult_w(w2, eta, wbar, aff[3], invert=True),
                cones.mult_w(w2, eta, wbar, aff[2]))
            step = direction(sigma, corr, aff[4] * aff[5])
        except (ZeroDivisionError, FloatingPointError):
            break
        # push closer to the boundary once nearly converged: the final
        # iterations gain two orders of mu per step this way
        back = _STEP_BACK if mu > 1e-6 else (0.999 if mu > 1e-8
                                             else 0.9999)
        alpha = back * _boundary_step(cones, s, z, tau, kappa, step)
        alpha = min(1.0, alpha)
        if alpha < _MIN_STEP or not np.isfinite(alpha):
            break

        dx, dy, dz, ds, dtau, dkappa = step
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        # the embedding is homogeneous: renormalize once tau drifts so
        # residual scaling (everything divides by tau) stays conditioned
        if tau < 0.5 or tau > 2.0:
            fct = 1.0 / tau
            x *= fct
            y *= fct
            z *= fct
            s *= fct
            kappa *= fct
            tau = 1.0

    err_state.__exit__(None, None, None)
    if status == MAX_ITER and best is not None:
        # accept a slightly looser point rather than reporting failure
        (bx, by_, bz_, bs_), (bp, bd, bg, bpc), bit = best
        if max(bp, bd, bg) <= max(accept_tol, 10 * tol):
            status = OPTIMAL
            x, y, z, s, tau = bx, by_, bz_, bs_, 1.0
            pres, dres, relgap, pcost = bp, bd, bg, bpc

    if status == OPTIMAL:
        x_solver = x / tau * data.col_scale
        info.update(status=status, iterations=it, res_primal=pres,
                    res_dual=dres, rel_gap=relgap,
                    objective=float(data.c @ (x / tau)) + data.obj_const)
        return data.expand(x_solver), info
    info.update(status=status, iterations=it,
                res_primal=np.inf if status != MAX_ITER else pres,
                res_dual=np.inf if status != MAX_ITER else dres,
                rel_gap=np.inf if status != MAX_ITER else relgap,
                objective=np.nan)
    return None, info


def _ident_wbar(data: ConicData) -> np.ndarray:
    wbar = np.zeros(len(data.h))
    wbar[data.soc_starts] = 1.0
    return wbar


def _normal_matrix(data: ConicData, cones, w2, eta, wbar, kern):
    G = data.G
    out = np.zeros((data.n, data.n))
    dinv = 1.0 / w2 if len(w2) else w2
    kern.assemble_normal(data.n, G.indptr.astype(np.int64),
                         G.indices.astype(np.int64), G.data,
                         data.m_lin, dinv, eta, wbar,
                         data.soc_starts, data.soc_sizes, out)
    return out


def _boundary_step(cones, s, z, tau, kappa, step) -> float:
    dx, dy, dz, ds, dtau, dkappa = step
    alpha = min(cones.max_step(s, ds), cones.max_step(z, dz))
    if dtau < 0.0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0.0:
        alpha = min(alpha, -kappa / dkappa)
    return float(alpha)
