import numpy as np
import pytest

from micplan.backends import (backend_get, backend_names, backend_register,
                              solve_convex)
from micplan.conic import compile_conic
from micplan.errors import BuildError
from micplan.ipm import solve_conic
from micplan.kernels import _numba, _numpy
from micplan.micp import EQ, GE, LE, MicpProblem


def random_qcqp(rng, n=None, with_soc=True):
    n = n or int(rng.integers(2, 8))
    p = MicpProblem()
    xs = p.add_vars("x", n, -3, 3)
    for _ in range(int(rng.integers(1, 4))):
        p.obj_add_square(float(rng.uniform(0.1, 2.0)),
                         (xs, rng.normal(size=n)),
                         const=float(rng.normal()))
    p.obj_add_linear((xs, 0.3 * rng.normal(size=n)))
    m = int(rng.integers(1, 5))
    A = rng.normal(size=(m, n))
    x_feas = rng.uniform(-1, 1, n)
    for r in range(m):
        p.add_linear((xs, A[r]), LE,
                     float(A[r] @ x_feas + rng.uniform(0.05, 1.0)))
    if with_soc:
        u = p.add_var("u", 0, 50)
        p.add_quadratic_bound(u, (xs, rng.normal(size=n)))
        p.add_linear({u: 1.0}, LE, float(rng.uniform(0.5, 5.0)))
    return p.finalize()


class TestReferenceSolver:
    def test_active_bound_qp(self):
        p = MicpProblem()
        x = p.add_var("x", -100, 100)
        p.add_linear({x: 1.0}, GE, 3.0)
        p.obj_add_square(1.0, {x: 1.0})
        sol = solve_convex(p.finalize().relax())
        assert sol.status == "optimal"
        assert sol.x[x] == pytest.approx(3.0, abs=1e-7)
        assert sol.objective == pytest.approx(9.0, rel=1e-7)
        assert sol.kkt_residual <= 1e-8

    def test_infeasible_detected(self):
        p = MicpProblem()
        x = p.add_var("x", -10, 10)
        p.add_linear({x: 1.0}, GE, 1.0)
        p.add_linear({x: 1.0}, LE, 0.0)
        p.obj_add_square(1.0, {x: 1.0})
        sol = solve_convex(p.finalize().relax())
        assert sol.status == "infeasible"
        assert sol.certificate_norm <= 1e-8

    def test_epigraph_tight_at_optimum(self):
        p = MicpProblem()
        a = p.add_var("a", -10, 10)
        b = p.add_var("b", -10, 10)
        u = p.add_var("u", 0, 1000)
        p.add_quadratic_bound(u, {a: 1.0, b: 1.0})
        p.add_linear({a: 1.0, b: 1.0}, EQ, 2.0)
        p.obj_add_linear({u: 1.0})
        sol = solve_convex(p.finalize().relax())
        assert sol.status == "optimal"
        assert sol.x[u] == pytest.approx(4.0, rel=1e-7)

    def test_unbounded_detected(self):
        p = MicpProblem()
        x = p.add_var("x")
        p.add_linear({x: 1.0}, GE, 0.0)
        p.obj_add_linear({x: -1.0})
        sol = solve_convex(p.finalize().relax())
        assert sol.status == "unbounded"

    def test_kkt_residuals_battery(self):
        rng = np.random.default_rng(21)
        for _ in range(15):
            sol = solve_convex(random_qcqp(rng).relax())
            assert sol.status == "optimal"
            assert sol.kkt_residual <= 1e-8

    def test_deterministic_iterate_path(self):
        rng = np.random.default_rng(9)
        p = random_qcqp(rng)
        s1 = solve_convex(p.relax())
        s2 = solve_convex(p.relax())
        assert s1.mu_path == s2.mu_path
        assert np.array_equal(s1.x, s2.x)

    def test_warm_start_accepted(self):
        rng = np.random.default_rng(13)
        p = random_qcqp(rng)
        cold = solve_convex(p.relax())
        warm = solve_convex(p.relax(), warm_start=cold.x)
        assert warm.status == "optimal"
        assert warm.objective == pytest.approx(cold.objective, rel=1e-7)


class TestBackendRegistry:
    def test_duplicate_name_rejected(self):
        with pytest.raises(BuildError, match="already"):
            backend_register("reference", object())

    def test_unknown_backend_lists_available(self):
        with pytest.raises(BuildError, match="reference"):
            backend_get("nope")

    def test_names_include_bundled(self):
        assert {"reference", "slsqp"} <= set(backend_names())

    def test_cross_backend_agreement(self):
        # independent implementations agree on random feasible QCQPs
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_qcqp(rng)
            ref = solve_convex(p.relax(), backend="reference")
            chk = solve_convex(p.relax(), backend="slsqp")
            assert ref.status == "optimal"
            if chk.status == "optimal":
                assert ref.objective == pytest.approx(
                    chk.objective, rel=1e-6, abs=1e-6)


class TestKernelTwins:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.m_lin = 40
        self.sizes = np.array([3, 3, 5, 9], dtype=np.int64)
        self.starts = self.m_lin + np.concatenate(
            [[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.m = self.m_lin + int(self.sizes.sum())
        self.rng = rng

    def interior(self):
        v = self.rng.normal(size=self.m)
        v[:self.m_lin] = np.abs(v[:self.m_lin]) + 0.5
        for st, sz in zip(self.starts, self.sizes):
            v[st] = np.linalg.norm(v[st + 1:st + sz]) \
                + self.rng.uniform(0.3, 2.0)
        return v

    def test_all_kernels_agree(self):
        s, z = self.interior(), self.interior()
        w2a, la = _numpy.lin_scaling(s[:self.m_lin], z[:self.m_lin])
        w2b, lb = _numba.lin_scaling(s[:self.m_lin], z[:self.m_lin])
        assert np.allclose(w2a, w2b, rtol=1e-14)
        assert np.allclose(la, lb, rtol=1e-14)
        ea, wa = _numpy.soc_scaling(s, z, self.starts, self.sizes)
        eb, wb = _numba.soc_scaling(s, z, self.starts, self.sizes)
        assert np.allclose(ea, eb, rtol=1e-13)
        assert np.allclose(wa, wb, rtol=1e-13)
        u = self.rng.normal(size=self.m)
        for invert in (False, True):
            oa, ob = np.zeros(self.m), np.zeros(self.m)
            _numpy.soc_mult_w(ea, wa, u, self.starts, self.sizes, oa,
                              invert)
            _numba.soc_mult_w(eb, wb, u, self.starts, self.sizes, ob,
                              invert)
            assert np.allclose(oa, ob, atol=1e-13)
        dv = self.rng.normal(size=self.m)
        assert _numpy.max_step_lin(s[:self.m_lin], dv[:self.m_lin]) == \
            pytest.approx(_numba.max_step_lin(s[:self.m_lin],
                                              dv[:self.m_lin]))
        assert _numpy.max_step_soc(s, dv, self.starts, self.sizes) == \
            pytest.approx(_numba.max_step_soc(s, dv, self.starts,
                                              self.sizes))
        oa, ob = np.zeros(self.m), np.zeros(self.m)
        _numpy.jordan_mul_soc(s, z, self.starts, self.sizes, oa)
        _numba.jordan_mul_soc(s, z, self.starts, self.sizes, ob)
        assert np.allclose(oa, ob, rtol=1e-14)
        lam = self.interior()
        d = self.rng.normal(size=self.m)
        oa, ob = np.zeros(self.m), np.zeros(self.m)
        _numpy.jordan_div_soc(lam, d, self.starts, self.sizes, oa)
        _numba.jordan_div_soc(lam, d, self.starts, self.sizes, ob)
        assert np.allclose(oa, ob, atol=1e-12)

    def test_assemble_normal_agrees_and_matches_reference(self):
        import scipy.sparse as sp
        s, z = self.interior(), self.interior()
        n = 30
        G = sp.random(self.m, n, density=0.3, random_state=5,
                      format="csr")
        dinv = np.abs(self.rng.normal(size=self.m_lin)) + 0.1
        ea, wa = _numpy.soc_scaling(s, z, self.starts, self.sizes)
        Ma, Mb = np.zeros((n, n)), np.zeros((n, n))
        args = (n, G.indptr.astype(np.int64), G.indices.astype(np.int64),
                G.data, self.m_lin, dinv, ea, wa, self.starts, self.sizes)
        _numpy.assemble_normal(*args, Ma)
        _numba.assemble_normal(*args, Mb)
        assert np.allclose(Ma, Mb, atol=1e-12 * max(1, abs(Ma).max()))
        # dense reference: G^T W^-2 G with W^-2 applied blockwise
        Winv2 = np.zeros((self.m, self.m))
        Winv2[:self.m_lin, :self.m_lin] = np.diag(dinv)
        for k, (st, sz) in enumerate(zip(self.starts, self.sizes)):
            J = np.diag([1.0] + [-1.0] * (sz - 1))
            wt = wa[st:st + sz].copy()
            wt[1:] *= -1
            Winv2[st:st + sz, st:st + sz] = \
                (2 * np.outer(wt, wt) - J) / ea[k] ** 2
        Mref = G.toarray().T @ Winv2 @ G.toarray()
        assert np.allclose(Ma, Mref, atol=1e-9 * max(1, abs(Mref).max()))

    def test_solver_agreement_across_kernels(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            p = random_qcqp(rng)
            data = compile_conic(p.relax())
            x1, i1 = solve_conic(data, kern=_numpy)
            x2, i2 = solve_conic(data, kern=_numba)
            assert i1["status"] == i2["status"] == "optimal"
            assert i1["objective"] == pytest.approx(i2["objective"],
                                                    rel=1e-7, abs=1e-7)
