import numpy as np
import pytest

from micplan.bnb import (SolveOptions, enumerate_bruteforce, propagate,
                         seed_incumbent, solve)
from micplan.errors import BuildError
from micplan.micp import EQ, GE, LE, MicpProblem


def random_miqp(rng, n_cont=4, n_bin=6, one_hot=3):
    p = MicpProblem()
    xs = p.add_vars("x", n_cont, -2, 2)
    bs = p.add_vars("b", n_bin, binary=True)
    if one_hot:
        p.annotate_one_hot(bs[:one_hot])
        p.add_linear((bs[:one_hot], np.ones(one_hot)), EQ, 1.0)
    for _ in range(3):
        p.obj_add_square(float(rng.uniform(0.2, 1.5)),
                         (xs, rng.normal(size=n_cont)),
                         const=float(rng.normal()))
    p.obj_add_linear((bs, rng.normal(size=n_bin)))
    for k in range(min(3, n_bin)):
        p.add_implication(int(bs[k]), (xs, rng.normal(size=n_cont)), LE,
                          float(rng.uniform(0.5, 2.0)))
    A = rng.normal(size=(2, n_cont))
    x_feas = rng.uniform(-1, 1, n_cont)
    for r in range(2):
        p.add_linear((xs, A[r]), LE,
                     float(A[r] @ x_feas + rng.uniform(0.2, 1.0)))
    return p.finalize()


class TestSolve:
    def test_symmetric_tie_breaks_low(self):
        # both values give 0.25; the earlier-explored branch value wins
        p = MicpProblem()
        x = p.add_var("x", binary=True)
        p.obj_add_square(1.0, {x: 1.0}, const=-0.5)
        sol = solve(p.finalize())
        assert sol.status == "optimal"
        assert sol.x[x] == 0.0
        assert sol.objective == pytest.approx(0.25, rel=1e-9)

    def test_no_binaries_single_node(self):
        p = MicpProblem()
        v = p.add_var("v", -5, 5)
        p.add_linear({v: 1.0}, GE, 2.0)
        p.obj_add_square(1.0, {v: 1.0})
        sol = solve(p.finalize())
        assert sol.status == "optimal"
        assert sol.nodes == 1
        assert sol.objective == pytest.approx(4.0, rel=1e-7)

    def test_matches_bruteforce_battery(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            p = random_miqp(rng)
            sb = solve(p, SolveOptions(gap_tol=1e-7))
            se = enumerate_bruteforce(p)
            assert sb.status == se.status
            if sb.status == "optimal":
                assert sb.objective == pytest.approx(se.objective,
                                                     rel=1e-6, abs=1e-6)

    def test_bound_sandwich_and_gap(self):
        rng = np.random.default_rng(17)
        p = random_miqp(rng, n_bin=8, one_hot=4)
        sol = solve(p, SolveOptions(gap_tol=1e-7))
        assert sol.lower_bound <= sol.objective + 1e-9
        assert sol.gap <= 1e-7 + 1e-12

    def test_infeasible_root(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 1)
        b = p.add_var("b", binary=True)
        p.add_linear({x: 1.0}, GE, 2.0)
        p.obj_add_linear({b: 1.0})
        sol = solve(p.finalize())
        assert sol.status == "infeasible"

    def test_node_limit_reports_gap(self):
        rng = np.random.default_rng(23)
        p = random_miqp(rng, n_bin=10, one_hot=0)
        sol = solve(p, SolveOptions(gap_tol=1e-12, node_limit=3))
        assert sol.status in ("node-limit", "optimal")
        if sol.status == "node-limit":
            assert sol.nodes <= 4

    def test_deterministic_node_sequence(self):
        rng = np.random.default_rng(31)
        p = random_miqp(rng)
        logs1, logs2 = [], []
        s1 = solve(p, SolveOptions(gap_tol=1e-7, log=logs1.append))
        s2 = solve(p, SolveOptions(gap_tol=1e-7, log=logs2.append))
        assert logs1 == logs2
        assert np.array_equal(s1.x, s2.x)

    def test_monotone_incumbent(self):
        rng = np.random.default_rng(41)
        p = random_miqp(rng, n_bin=8, one_hot=4)
        incs = []
        def watch(msg):
            if "incumbent" in msg or "heuristic" in msg:
                incs.append(float(msg.split("obj=")[1].split()[0]))
        solve(p, SolveOptions(gap_tol=1e-7, log=watch))
        assert incs == sorted(incs, reverse=True)

    def test_relaxation_bounds_integral_optimum(self):
        # relaxed optimum is a valid lower bound (enumeration oracle)
        from micplan.backends import solve_convex
        rng = np.random.default_rng(2)
        for _ in range(20):
            p = random_miqp(rng, n_bin=4, one_hot=2)
            rel = solve_convex(p.relax())
            se = enumerate_bruteforce(p)
            if rel.status == "optimal" and se.status == "optimal":
                assert rel.objective <= se.objective + 1e-6


class TestEnumerate:
    def test_one_hot_short_circuit(self):
        p = MicpProblem()
        b0 = p.add_var("b0", binary=True)
        b1 = p.add_var("b1", binary=True)
        y = p.add_var("y", -1, 1)
        p.annotate_one_hot([b0, b1])
        p.add_linear({b0: 1.0, b1: 1.0}, EQ, 1.0)
        p.obj_add_square(1.0, {y: 1.0, b0: 0.3})
        se = enumerate_bruteforce(p.finalize())
        assert se.nodes == 2

    def test_all_infeasible(self):
        p = MicpProblem()
        x = p.add_var("x", 0, 1)
        b = p.add_var("b", binary=True)
        p.add_linear({x: 1.0}, GE, 3.0)
        p.obj_add_linear({b: 1.0})
        se = enumerate_bruteforce(p.finalize())
        assert se.status == "infeasible"

    def test_binary_cap(self):
        p = MicpProblem()
        p.add_vars("b", 25, binary=True)
        with pytest.raises(BuildError, match="enumeration"):
            enumerate_bruteforce(p.finalize(), max_binaries=20)


class TestSeeding:
    def build(self, seed=9, n_bin=8):
        rng = np.random.default_rng(seed)
        return random_miqp(rng, n_bin=n_bin, one_hot=4)

    def test_seed_equal_to_optimum_prunes(self):
        p = self.build()
        base = solve(p, SolveOptions(gap_tol=1e-7))
        seed = {int(b): float(np.round(base.x[b]))
                for b in p.binary_indices}
        seeded = solve(p, SolveOptions(gap_tol=1e-7,
                                       seed_assignment=seed))
        assert seeded.objective == pytest.approx(base.objective, rel=1e-6)
        assert seeded.nodes <= base.nodes

    def test_seed_violating_one_hot_rejected(self):
        p = self.build()
        group = p.one_hot_groups[0]
        bad = {int(group[0]): 1.0, int(group[1]): 1.0}
        assert seed_incumbent(p, bad) is None

    def test_empty_seed_behaves_unseeded(self):
        p = self.build()
        s1 = solve(p, SolveOptions(gap_tol=1e-7))
        s2 = solve(p, SolveOptions(gap_tol=1e-7, seed_assignment={}))
        assert s1.objective == pytest.approx(s2.objective, rel=1e-9)


class TestPropagation:
    def test_one_hot_fixes_others(self):
        p = MicpProblem()
        bs = p.add_vars("b", 3, binary=True)
        p.annotate_one_hot(bs)
        lo, hi = p.lo.copy(), p.hi.copy()
        lo[bs[1]] = 1.0
        assert propagate(p, lo, hi)
        assert hi[bs[0]] == 0.0 and hi[bs[2]] == 0.0

    def test_and_triple_rules(self):
        p = MicpProblem()
        z, a, b = (p.add_var(n, binary=True) for n in "zab")
        p.annotate_and(z, a, b)
        lo, hi = p.lo.copy(), p.hi.copy()
        lo[a] = lo[b] = 1.0
        assert propagate(p, lo, hi)
        assert lo[z] == 1.0
        lo, hi = p.lo.copy(), p.hi.copy()
        hi[a] = 0.0
        assert propagate(p, lo, hi)
        assert hi[z] == 0.0

    def test_precedence_windows(self):
        p = MicpProblem()
        t0 = p.add_vars("t0", 3, binary=True)
        t1 = p.add_vars("t1", 3, binary=True)
        slots = np.array([1.0, 2.0, 3.0])
        p.annotate_one_hot(t0)
        p.annotate_one_hot(t1)
        p.annotate_precedence([(t0, slots), (t1, slots)])
        lo, hi = p.lo.copy(), p.hi.copy()
        # group 0 must leave room for group 1 afterwards
        assert propagate(p, lo, hi)
        assert hi[t0[2]] == 0.0      # slot 3 would leave none
        assert hi[t1[0]] == 0.0      # slot 1 leaves no predecessor
        lo[t0[1]] = 1.0              # pin group 0 to slot 2
        assert propagate(p, lo, hi)
        assert lo[t1[2]] == 1.0      # slot 3 forced

    def test_conflict_detected(self):
        p = MicpProblem()
        bs = p.add_vars("b", 2, binary=True)
        p.annotate_one_hot(bs)
        lo, hi = p.lo.copy(), p.hi.copy()
        hi[bs] = 0.0
        assert not propagate(p, lo, hi)
