"""Branch-and-bound over the binary variables.

Best-first search on node lower bounds, with periodic depth-first dives
so incumbents arrive early. Before any convex solve, each node's box is
tightened by combinatorial propagation over the problem's annotations
(exactly-one groups, AND triples, precedence chains); infeasible boxes
are discarded without touching the convex solver. Relaxations are built
node-locally so the big-M expansion sees the tightened box.

Relaxation solutions that are already integral are re-solved with the
binaries pinned exactly, so every incumbent is integral-feasible to
machine precision rather than to the solver tolerance.

A brute-force enumerator over the one-hot structure doubles as the test
oracle for global optimality.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends import solve_convex
from .errors import BuildError
from .micp import MicpProblem, MicpSolution

INT_TOL = 1e-6


def _round_half_down(v: float) -> float:
    """Rounding with ties (within solver noise of .5) broken downward."""
    return float(np.floor(v + 0.5 - 1e-5))


@dataclass
class SolveOptions:
    gap_tol: float = 1e-4
    node_limit: int = 200_000
    time_limit: float | None = None
    workers: int = 1
    dive_period: int = 7
    backend: str = "reference"
    convex_tol: float = 1e-8
    convex_accept: float = 1e-6
    max_iter: int = 80
    seed_assignment: dict | None = None
    log: object = None   # callable(str) or None

    def emit(self, msg: str):
        if self.log is not None:
            self.log(msg)


@dataclass
class _Node:
    nid: int
    depth: int
    bound: float
    lo: np.ndarray
    hi: np.ndarray


# ---------------------------------------------------------------------------
# combinatorial propagation
# ---------------------------------------------------------------------------

def propagate(problem: MicpProblem, lo, hi) -> bool:
    """Tighten binary bounds in place; False when the box is infeasible."""
    changed = True
    while changed:
        changed = False
        for group in problem.one_hot_groups:
            ones = [i for i in group if lo[i] > 0.5]
            if len(ones) > 1:
                return False
            if len(ones) == 1:
                for i in group:
                    if i != ones[0] and hi[i] > 0.5:
                        hi[i] = 0.0
                        changed = True
                continue
            cand = [i for i in group if hi[i] > 0.5]
            if not cand:
                return False
            if len(cand) == 1 and lo[cand[0]] < 0.5:
                lo[cand[0]] = 1.0
                changed = True
        for z, a, b in problem.and_triples:
            if lo[a] > 0.5 and lo[b] > 0.5 and lo[z] < 0.5:
                if hi[z] < 0.5:
                    return False
                lo[z] = 1.0
                changed = True
            if (hi[a] < 0.5 or hi[b] < 0.5) and hi[z] > 0.5:
                if lo[z] > 0.5:
                    return False
                hi[z] = 0.0
                changed = True
            if lo[z] > 0.5:
                for v in (a, b):
                    if hi[v] < 0.5:
                        return False
                    if lo[v] < 0.5:
                        lo[v] = 1.0
                        changed = True
        for chain in problem.precedence_chains:
            if not _propagate_chain(chain, lo, hi):
                return False
    return True


def _propagate_chain(chain, lo, hi) -> bool:
    # forward/backward window tightening over slot-valued one-hot groups
    mins, maxs = [], []
    for ids, vals in chain:
        alive = [v for i, v in zip(ids, vals) if hi[i] > 0.5]
        if not alive:
            return False
        mins.append(min(alive))
        maxs.append(max(alive))
    for k in range(1, len(chain)):
        mins[k] = max(mins[k], mins[k - 1] + 1)
    for k in range(len(chain) - 2, -1, -1):
        maxs[k] = min(maxs[k], maxs[k + 1] - 1)
    for k, (ids, vals) in enumerate(chain):
        if mins[k] > maxs[k]:
            return False
        for i, v in zip(ids, vals):
            if (v < mins[k] or v > maxs[k]) and hi[i] > 0.5:
                if lo[i] > 0.5:
                    return False
                hi[i] = 0.0
    return True


# ---------------------------------------------------------------------------
# helpers shared by solve / enumerate / seeding
# ---------------------------------------------------------------------------

def _fractionality(problem, x, group_rank=None):
    """Most fractional binary, preferring early-annotated one-hot groups.

    Structural selectors (gait, region) are annotated before derived
    binaries; branching them first moves the bound, while AND binaries
    are implied and barely worth a node.
    """
    bins = problem.binary_indices
    if not len(bins):
        return None, 0.0
    vals = x[bins]
    dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
    if not np.any(dist > INT_TOL):
        k = int(np.argmax(dist))
        return int(bins[k]), float(dist[k])
    best = None
    for k in range(len(bins)):
        if dist[k] <= INT_TOL:
            continue
        rank = group_rank.get(int(bins[k]), len(problem.one_hot_groups)) \
            if group_rank is not None else 0
        key = (rank, -dist[k], int(bins[k]))
        if best is None or key < best[0]:
            best = (key, int(bins[k]), float(dist[k]))
    return best[1], best[2]


def _exact_fix_solve(problem, lo, hi, x_rel, opts, group_round=False):
    """Re-solve with every binary pinned.

    With group_round, one-hot groups pin their largest member instead of
    rounding elementwise; that turns a centered fractional relaxation
    into a valid selection, which makes this double as the rounding
    heuristic for incumbents.
    """
    lo2, hi2 = lo.copy(), hi.copy()
    done = set()
    if group_round:
        for group in problem.one_hot_groups:
            alive = [int(i) for i in group if hi2[i] > 0.5]
            if not alive:
                return None
            pick = alive[int(np.argmax(x_rel[alive]))]
            for i in group:
                v = 1.0 if int(i) == pick else 0.0
                if lo2[i] > v or hi2[i] < v:
                    if int(i) == pick:
                        return None
                lo2[i], hi2[i] = v, v
                done.add(int(i))
    for b in problem.binary_indices:
        if int(b) in done:
            continue
        v = _round_half_down(float(np.clip(x_rel[b], lo2[b], hi2[b])))
        lo2[b] = hi2[b] = v
    if not propagate(problem, lo2, hi2):
        return None
    sol = solve_convex(problem.relax(lo2, hi2), backend=opts.backend,
                       tol=opts.convex_tol, accept_tol=opts.convex_accept,
                       max_iter=opts.max_iter)
    if sol.status != "optimal":
        return None
    x = sol.x.copy()
    x[problem.binary_indices] = np.round(
        np.clip(x[problem.binary_indices], 0.0, 1.0))
    return x, problem.eval_objective(x)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

def solve(problem: MicpProblem, opts: SolveOptions | None = None
          ) -> MicpSolution:
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    lo0, hi0 = problem.lo.copy(), problem.hi.copy()

    inc_x, inc_obj = None, np.inf
    nodes_solved = 0

    if opts.seed_assignment:
        seeded = seed_incumbent(problem, opts.seed_assignment, opts)
        if seeded is None:
            opts.emit("seed rejected")
        else:
            inc_x, inc_obj = seeded
            opts.emit(f"seed accepted incumbent={inc_obj:.9g}")

    if not propagate(problem, lo0, hi0):
        return MicpSolution(x=np.full(problem.n_vars, np.nan),
                            objective=np.inf, lower_bound=np.inf,
                            status="infeasible", nodes=0,
                            wall_time=time.perf_counter() - t0)

    open_nodes: list[_Node] = [_Node(0, 0, -np.inf, lo0, hi0)]
    next_id = 1
    status = "optimal"
    group_map = {}
    group_rank = {}
    for rank, g in enumerate(problem.one_hot_groups):
        for i in g:
            group_map[int(i)] = g
            group_rank[int(i)] = rank
    tried_roundings: set = set()
    pool = (ThreadPoolExecutor(max_workers=opts.workers)
            if opts.workers > 1 else None)

    def tol_abs():
        return opts.gap_tol * max(1.0, abs(inc_obj)) if np.isfinite(inc_obj) \
            else np.inf

    def certified_gap():
        lb = min((nd.bound for nd in open_nodes), default=np.inf)
        lb = min(lb, inc_obj)
        if not np.isfinite(inc_obj):
            return np.inf, lb
        return max(0.0, (inc_obj - lb) / max(1.0, abs(inc_obj))), lb

    pops = 0
    try:
        while open_nodes:
            if opts.time_limit is not None and \
                    time.perf_counter() - t0 > opts.time_limit:
                status = "gap-limit"
                break
            if nodes_solved >= opts.node_limit:
                status = "node-limit"
                break
            gap, lb = certified_gap()
            if gap <= opts.gap_tol:
                break

            wave = []
            for _ in range(max(1, opts.workers)):
                if not open_nodes:
                    break
                pops += 1
                # dive straight down until an incumbent exists (nothing
                # can be pruned before that), then mostly best-first
                diving = inc_x is None or (
                    opts.dive_period and pops % opts.dive_period == 0)
                if diving:
                    node = min(open_nodes,
                               key=lambda nd: (-nd.depth, nd.bound, nd.nid))
                else:
                    node = min(open_nodes,
                               key=lambda nd: (nd.bound, nd.nid))
                open_nodes.remove(node)
                if node.bound >= inc_obj - tol_abs():
                    opts.emit(f"node={node.nid} depth={node.depth} "
                              f"action=pruned bound={node.bound:.9g}")
                    continue
                wave.append(node)
            if not wave:
                continue

            def _run(nd):
                return solve_convex(problem.relax(nd.lo, nd.hi),
                                    backend=opts.backend,
                                    tol=opts.convex_tol,
                                    accept_tol=opts.convex_accept,
                                    max_iter=opts.max_iter)

            results = list(pool.map(_run, wave)) if pool else \
                [_run(nd) for nd in wave]

            for node, rel in zip(wave, results):
                nodes_solved += 1
                if rel.status == "infeasible":
                    opts.emit(f"node={node.nid} depth={node.depth} "
                              f"action=infeasible")
                    continue
                if rel.status == "unbounded":
                    if node.nid == 0:
                        return MicpSolution(
                            x=np.full(problem.n_vars, np.nan),
                            objective=-np.inf, lower_bound=-np.inf,
                            status="unbounded", nodes=nodes_solved,
                            wall_time=time.perf_counter() - t0)
                    continue
                if rel.status != "optimal":
                    # numerical trouble: keep the node's parent bound and
                    # branch anyway on the most ambiguous binary
                    opts.emit(f"node={node.nid} action=numerical")
                bound = max(node.bound, rel.objective) \
                    if rel.status == "optimal" else node.bound
                if bound >= inc_obj - tol_abs():
                    opts.emit(f"node={node.nid} depth={node.depth} "
                              f"action=pruned bound={bound:.9g}")
                    continue
                branch_var, frac = (
                    _fractionality(problem, rel.x, group_rank)
                    if rel.status == "optimal"
                    else _ambiguous(problem, node))
                if branch_var is None or frac <= INT_TOL:
                    fixed = _exact_fix_solve(problem, node.lo, node.hi,
                                             rel.x, opts) \
                        if rel.status == "optimal" else None
                    if fixed is not None and fixed[1] < inc_obj - 1e-12:
                        inc_x, inc_obj = fixed
                        g, _ = certified_gap()
                        opts.emit(f"node={node.nid} depth={node.depth} "
                                  f"action=incumbent obj={inc_obj:.9g} "
                                  f"gap={g:.3g}")
                    continue
                if rel.status == "optimal":
                    # group-aware rounding heuristic; the cache skips
                    # completions already tried at other nodes
                    key = _rounding_key(problem, node, rel.x)
                    if key not in tried_roundings:
                        tried_roundings.add(key)
                        fixed = _exact_fix_solve(problem, node.lo,
                                                 node.hi, rel.x, opts,
                                                 group_round=True)
                        if fixed is not None and \
                                fixed[1] < inc_obj - 1e-12:
                            inc_x, inc_obj = fixed
                            opts.emit(f"node={node.nid} action=heuristic "
                                      f"obj={inc_obj:.9g}")
                group = group_map.get(branch_var)
                if group is not None:
                    # n-ary branch: one child per selectable group member,
                    # most promising first so dives follow the relaxation
                    alive = [int(i) for i in group if node.hi[i] > 0.5
                             and node.lo[i] < 0.5]
                    if rel.status == "optimal":
                        alive.sort(key=lambda i: (-rel.x[i], i))
                    for pick in alive:
                        clo, chi = node.lo.copy(), node.hi.copy()
                        ok = True
                        for i in group:
                            v = 1.0 if int(i) == pick else 0.0
                            if clo[i] > v or chi[i] < v:
                                ok = False
                                break
                            clo[i] = chi[i] = v
                        if ok and propagate(problem, clo, chi):
                            open_nodes.append(_Node(next_id,
                                                    node.depth + 1,
                                                    bound, clo, chi))
                            next_id += 1
                else:
                    first = int(_round_half_down(rel.x[branch_var])) \
                        if rel.status == "optimal" else 0
                    for val in (first, 1 - first):
                        clo, chi = node.lo.copy(), node.hi.copy()
                        clo[branch_var] = chi[branch_var] = float(val)
                        if not propagate(problem, clo, chi):
                            continue
                        open_nodes.append(_Node(next_id, node.depth + 1,
                                                bound, clo, chi))
                        next_id += 1
                opts.emit(f"node={node.nid} depth={node.depth} "
                          f"action=branch var={problem.names[branch_var]} "
                          f"frac={frac:.3g} bound={bound:.9g}")
    finally:
        if pool:
            pool.shutdown(wait=False)

    gap, lb = certified_gap()
    wall = time.perf_counter() - t0
    if inc_x is None:
        final_status = "infeasible" if status == "optimal" else status
        return MicpSolution(x=np.full(problem.n_vars, np.nan),
                            objective=np.inf, lower_bound=lb,
                            status=final_status, nodes=nodes_solved,
                            wall_time=wall)
    if status == "optimal" and gap > opts.gap_tol:
        status = "gap-limit"
    opts.emit(f"done status={status} obj={inc_obj:.9g} gap={gap:.3g} "
              f"nodes={nodes_solved}")
    return MicpSolution(x=inc_x, objective=inc_obj,
                        lower_bound=min(lb, inc_obj), status=status,
                        nodes=nodes_solved, wall_time=wall)


def _rounding_key(problem, node, x_rel) -> bytes:
    picks = []
    for group in problem.one_hot_groups:
        alive = [int(i) for i in group if node.hi[i] > 0.5]
        picks.append(alive[int(np.argmax(x_rel[alive]))] if alive else -1)
    grouped = {int(i) for g in problem.one_hot_groups for i in g}
    for b in problem.binary_indices:
        if int(b) not in grouped:
            picks.append(int(_round_half_down(
                float(np.clip(x_rel[b], node.lo[b], node.hi[b])))))
    return np.asarray(picks, dtype=np.int64).tobytes()


def _ambiguous(problem, node):
    for b in problem.binary_indices:
        if node.hi[b] - node.lo[b] > 0.5:
            return int(b), 0.5
    return None, 0.0


# ---------------------------------------------------------------------------
# brute-force enumeration oracle
# ---------------------------------------------------------------------------

def enumerate_bruteforce(problem: MicpProblem, max_binaries: int = 20,
                         opts: SolveOptions | None = None) -> MicpSolution:
    """Exhaustively solve every combinatorially consistent assignment.

    One-hot groups are enumerated as single choices and assignments that
    propagation rejects are skipped before any convex solve, so the count
    of subproblems matches the true combinatorial space.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    bins = list(map(int, problem.binary_indices))
    if len(bins) > max_binaries:
        raise BuildError(f"{len(bins)} binaries exceed the enumeration "
                         f"limit {max_binaries}")
    grouped: set[int] = set()
    for g in problem.one_hot_groups:
        grouped.update(int(i) for i in g)
    derived = {int(z) for z, _, _ in problem.and_triples}
    free = [b for b in bins if b not in grouped and b not in derived]

    best_x, best_obj = None, np.inf
    solves = 0

    def assignments():
        def rec_groups(k, fixes):
            if k == len(problem.one_hot_groups):
                yield from rec_free(0, fixes)
                return
            group = problem.one_hot_groups[k]
            for pick in group:
                yield from rec_groups(
                    k + 1, fixes + [(int(i), 1.0 if i == pick else 0.0)
                                    for i in group])

        def rec_free(k, fixes):
            if k == len(free):
                yield fixes
                return
            for v in (0.0, 1.0):
                yield from rec_free(k + 1, fixes + [(free[k], v)])

        yield from rec_groups(0, [])

    for fixes in assignments():
        lo, hi = problem.lo.copy(), problem.hi.copy()
        for i, v in fixes:
            lo[i] = hi[i] = v
        if not propagate(problem, lo, hi):
            continue
        if np.any(hi[bins] - lo[bins] > 0.5):
            # AND targets the propagation could not pin (parents split
            # across groups never enumerated together) cannot happen with
            # well-formed annotations; guard anyway
            continue
        sol = solve_convex(problem.relax(lo, hi), backend=opts.backend,
                           tol=opts.convex_tol,
                           accept_tol=opts.convex_accept,
                           max_iter=opts.max_iter)
        solves += 1
        if sol.status == "optimal" and sol.objective < best_obj - 1e-12:
            x = sol.x.copy()
            x[problem.binary_indices] = np.round(
                np.clip(x[problem.binary_indices], 0.0, 1.0))
            best_x, best_obj = x, problem.eval_objective(x)

    wall = time.perf_counter() - t0
    if best_x is None:
        return MicpSolution(x=np.full(problem.n_vars, np.nan),
                            objective=np.inf, lower_bound=np.inf,
                            status="infeasible", nodes=solves,
                            wall_time=wall)
    return MicpSolution(x=best_x, objective=best_obj, lower_bound=best_obj,
                        status="optimal", nodes=solves, wall_time=wall)


# ---------------------------------------------------------------------------
# incumbent seeding
# ---------------------------------------------------------------------------

def seed_incumbent(problem: MicpProblem, partial_assignment: dict,
                   opts: SolveOptions | None = None):
    """Complete a partial binary assignment into an incumbent.

    Fixes the given binaries, then dives (solve, round the most
    fractional, propagate) until integral. Returns (x, objective) or
    None when the seed cannot be completed feasibly.
    """
    opts = opts or SolveOptions()
    lo, hi = problem.lo.copy(), problem.hi.copy()
    for var, val in partial_assignment.items():
        var = int(var)
        if not problem.binary_mask[var]:
            raise BuildError(f"seed fixes non-binary {problem.names[var]}")
        lo[var] = hi[var] = float(np.round(val))
    if not propagate(problem, lo, hi):
        return None
    for _ in range(len(problem.binary_indices) + 1):
        rel = solve_convex(problem.relax(lo, hi), backend=opts.backend,
                           tol=opts.convex_tol,
                           accept_tol=opts.convex_accept,
                           max_iter=opts.max_iter)
        if rel.status != "optimal":
            return None
        var, frac = _fractionality(problem, rel.x)
        if var is None or frac <= INT_TOL:
            fixed = _exact_fix_solve(problem, lo, hi, rel.x, opts)
            return None if fixed is None else fixed
        lo[var] = hi[var] = float(np.round(rel.x[var]))
        if not propagate(problem, lo, hi):
            return None
    return None
