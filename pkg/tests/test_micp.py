import numpy as np
import pytest

from micplan.errors import BuildError
from micplan.micp import EQ, GE, LE, MicpProblem


class TestImplications:
    def test_bigm_from_bounds(self):
        # b => x <= 1 with x in [0, 10] expands with M = 10 - 1 = 9
        p = MicpProblem()
        x = p.add_var("x", 0, 10)
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, LE, 1.0)
        rel = p.relax()
        con = rel.constraints[-1]
        terms = dict(zip(con.idx, con.coef))
        assert terms[x] == 1.0
        assert terms[b] == pytest.approx(9.0)   # x + 9 b <= 10
        assert con.rhs == pytest.approx(10.0)

    def test_equality_splits_into_pair(self):
        # b => x = 0 with x in [-5, 5] becomes two one-sided rows
        p = MicpProblem()
        x = p.add_var("x", -5, 5)
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, EQ, 0.0)
        rel = p.relax()
        senses = [c.sense for c in rel.constraints]
        assert senses == [LE, GE]
        for con in rel.constraints:
            terms = dict(zip(con.idx, con.coef))
            assert abs(terms[b]) == pytest.approx(5.0)

    def test_unbounded_without_m_fails(self):
        p = MicpProblem()
        x = p.add_var("x", 0)     # unbounded above
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, LE, 1.0)
        with pytest.raises(BuildError, match="big-M"):
            p.relax()

    def test_explicit_m_used(self):
        p = MicpProblem()
        x = p.add_var("x", 0)
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, LE, 1.0, big_m=50.0)
        rel = p.relax()
        con = rel.constraints[-1]
        assert dict(zip(con.idx, con.coef))[b] == pytest.approx(50.0)

    def test_forced_gate_emits_hard_row(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 10)
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, LE, 1.0)
        lo, hi = p.lo.copy(), p.hi.copy()
        lo[b] = hi[b] = 1.0
        rel = p.relax(lo, hi)
        con = rel.constraints[-1]
        assert list(con.idx) == [x]
        assert con.rhs == 1.0

    def test_inactive_gate_drops_row(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 10)
        b = p.add_var("b", binary=True)
        p.add_implication(b, {x: 1.0}, LE, 1.0)
        lo, hi = p.lo.copy(), p.hi.copy()
        lo[b] = hi[b] = 0.0
        assert len(p.relax(lo, hi).constraints) == 0

    def test_bigm_soundness_interval_check(self):
        # with the gate on, any box point satisfies the expanded row
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = MicpProblem()
            n = int(rng.integers(2, 5))
            xs = p.add_vars("x", n, -3, 7)
            b = p.add_var("b", binary=True)
            coef = rng.normal(size=n)
            rhs = float(rng.normal())
            p.add_implication(b, (xs, coef), LE, rhs)
            rel = p.relax()
            con = rel.constraints[-1]
            for _ in range(20):
                x = np.zeros(p.n_vars)
                x[xs] = rng.uniform(-3, 7, n)
                x[b] = 0.0
                lhs = con.coef @ x[con.idx]
                assert lhs <= con.rhs + 1e-9
                x[b] = 1.0
                lhs = con.coef @ x[con.idx]
                want = coef @ x[xs] <= rhs + 1e-9
                assert (lhs <= con.rhs + 1e-9) == want or want


class TestQuadraticBounds:
    def test_registration_and_eval(self):
        p = MicpProblem()
        a = p.add_var("a", -2, 2)
        b = p.add_var("b", -2, 2)
        u = p.add_var("u", -1, 100)
        p.add_quadratic_bound(u, {a: 1.0, b: 1.0})
        assert p.lo[u] == 0.0    # epigraph forced nonnegative
        x = np.zeros(p.n_vars)
        x[a] = x[b] = 1.0
        x[u] = 3.9
        assert p.eval_violation(x) == pytest.approx(0.1)
        x[u] = 4.0
        assert p.eval_violation(x) <= 1e-12


class TestRelax:
    def test_binaries_become_continuous(self):
        p = MicpProblem()
        p.add_vars("b", 3, binary=True)
        rel = p.relax()
        assert not rel.binary_mask.any()
        assert np.all(rel.lo == 0.0)
        assert np.all(rel.hi == 1.0)

    def test_pure_convex_identity(self):
        p = MicpProblem()
        x = p.add_var("x", -1, 1)
        p.add_linear({x: 1.0}, LE, 0.5)
        p.obj_add_square(2.0, {x: 1.0}, const=0.3)
        rel = p.relax()
        assert len(rel.constraints) == len(p.constraints)
        pt = np.array([0.1])
        assert rel.eval_objective(pt) == p.eval_objective(pt)


class TestDebugListing:
    def test_lists_every_constraint(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 2)
        b = p.add_var("b", binary=True)
        u = p.add_var("u", 0, 9)
        p.add_linear({x: 2.0}, LE, 1.0, name="cap")
        p.add_implication(b, {x: 1.0}, GE, 0.5, name="floor")
        p.add_quadratic_bound(u, {x: 1.0}, name="sq")
        text = p.debug_listing()
        assert "cap" in text and "floor" in text and "sq" in text
        assert text.count("\n") >= 6


class TestObjective:
    def test_negative_weight_rejected(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 1)
        with pytest.raises(BuildError):
            p.obj_add_square(-1.0, {x: 1.0})

    def test_eval_objective(self):
        p = MicpProblem()
        x = p.add_var("x", -5, 5)
        y = p.add_var("y", -5, 5)
        p.obj_add_square(2.0, {x: 1.0, y: -1.0}, const=1.0)
        p.obj_add_linear({y: 3.0})
        p.obj_add_const(-0.5)
        pt = np.array([2.0, 1.0])
        assert p.eval_objective(pt) == pytest.approx(2 * 4.0 + 3.0 - 0.5)
