"""Convex-solver backends and the registry that selects them.

``reference`` is the bundled interior-point solver and the only backend
used by branch-and-bound in production. ``slsqp`` wraps
scipy.optimize.minimize as an independent cross-check for small test
problems; it shares no algorithmic code with the reference path.
"""

from __future__ import annotations

import numpy as np

from . import ipm
from .conic import compile_conic
from .errors import BuildError
from .ipm import ConvexSolution
from .micp import EQ, GE, LE, MicpProblem

_BACKENDS: dict[str, object] = {}


def backend_register(name: str, solver) -> None:
    if name in _BACKENDS:
        raise BuildError(f"backend {name!r} already registered")
    _BACKENDS[name] = solver


def backend_names() -> list[str]:
    return sorted(_BACKENDS)


def backend_get(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise BuildError(f"unknown backend {name!r}; available: "
                         f"{', '.join(backend_names())}") from None


def solve_convex(problem: MicpProblem, warm_start=None,
                 backend="reference", **opts) -> ConvexSolution:
    """Solve a continuous problem with the named backend."""
    if problem.binary_mask.any():
        raise BuildError("solve_convex expects a continuous problem "
                         "(relax or fix binaries first)")
    return backend_get(backend)(problem, warm_start=warm_start, **opts)


class ReferenceBackend:
    """Bundled homogeneous self-dual interior-point solver."""

    def __init__(self, kern=None):
        self.kern = kern

    def __call__(self, problem: MicpProblem, warm_start=None, tol=1e-9,
                 accept_tol=1e-8, max_iter=200, kern=None
                 ) -> ConvexSolution:
        data = compile_conic(problem)
        x, info = ipm.solve_conic(data, kern=kern or self.kern, tol=tol,
                                  accept_tol=accept_tol,
                                  max_iter=max_iter, warm_x=warm_start)
        if info["status"] == ipm.OPTIMAL:
            obj = problem.eval_objective(x)
            return ConvexSolution(
                x=x, objective=obj, status=ipm.OPTIMAL,
                iterations=info["iterations"],
                res_primal=info["res_primal"], res_dual=info["res_dual"],
                rel_gap=info["rel_gap"], mu_path=info["mu_path"])
        return ConvexSolution(
            x=np.full(problem.n_vars, np.nan), objective=np.nan,
            status=info["status"], iterations=info["iterations"],
            res_primal=info["res_primal"], res_dual=info["res_dual"],
            rel_gap=info["rel_gap"], certificate_norm=info["cert_norm"],
            mu_path=info["mu_path"])


class SlsqpBackend:
    """scipy SLSQP cross-check backend (small problems only)."""

    def __call__(self, problem: MicpProblem, warm_start=None, tol=1e-12,
                 max_iter=500) -> ConvexSolution:
        from scipy.optimize import minimize

        n = problem.n_vars
        lo, hi = problem.lo, problem.hi
        x0 = warm_start if warm_start is not None else np.clip(
            np.zeros(n), lo, hi)
        x0 = np.where(np.isfinite(x0), x0, 0.0)

        cons = []
        for con in problem.constraints:
            a = np.zeros(n)
            a[con.idx] = con.coef
            if con.sense == EQ:
                cons.append({"type": "eq",
                             "fun": (lambda x, a=a, r=con.rhs: a @ x - r),
                             "jac": (lambda x, a=a: a)})
            elif con.sense == LE:
                cons.append({"type": "ineq",
                             "fun": (lambda x, a=a, r=con.rhs: r - a @ x),
                             "jac": (lambda x, a=a: -a)})
            else:
                cons.append({"type": "ineq",
                             "fun": (lambda x, a=a, r=con.rhs: a @ x - r),
                             "jac": (lambda x, a=a: a)})
        for qb in problem.quad_bounds:
            a = np.zeros(n)
            a[qb.idx] = qb.coef

            def fun(x, a=a, d=qb.const, u=qb.u):
                return x[u] - (a @ x + d) ** 2

            def jac(x, a=a, d=qb.const, u=qb.u):
                g = -2.0 * (a @ x + d) * a
                g[u] += 1.0
                return g

            cons.append({"type": "ineq", "fun": fun, "jac": jac})

        def objective(x):
            return problem.eval_objective(x)

        def gradient(x):
            g = np.zeros(n)
            for w, idx, coef, const in problem.obj_quad:
                g[idx] += 2.0 * w * (coef @ x[idx] + const) * coef
            for i, cv in problem.obj_lin.items():
                g[i] += cv
            return g

        bounds = [(None if not np.isfinite(l) else l,
                   None if not np.isfinite(u) else u)
                  for l, u in zip(lo, hi)]
        res = minimize(objective, x0, jac=gradient, bounds=bounds,
                       constraints=cons, method="SLSQP",
                       options={"maxiter": max_iter, "ftol": tol})
        status = "optimal" if res.success else "max-iter"
        viol = problem.eval_violation(res.x) if res.success else np.inf
        return ConvexSolution(x=res.x, objective=float(res.fun),
                              status=status, iterations=res.nit,
                              res_primal=max(0.0, viol), res_dual=np.nan,
                              rel_gap=np.nan)


backend_register("reference", ReferenceBackend())
backend_register("slsqp", SlsqpBackend())
