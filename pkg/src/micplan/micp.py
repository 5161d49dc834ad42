"""Generic mixed-integer convex program container.

Holds continuous/binary variables with bounds, linear constraints, scalar
quadratic epigraph bounds u >= (affine)^2, a positive-semidefinite
quadratic objective built from weighted squares, and symbolic implication
records that are expanded to big-M rows only when a relaxation is built.
Expanding late lets branch-and-bound derive the tightest bound-based M
for each node's box.

Combinatorial structure (exactly-one groups, AND triples, precedence
chains over slot-valued groups) is carried as annotations next to the
algebra so that solvers can propagate and enumerate without re-deriving
it from the rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BuildError

LE, GE, EQ = "<=", ">=", "="

_SENSES = (LE, GE, EQ)


@dataclass
class LinCon:
    """Sparse linear constraint sum(coef * x[idx]) sense rhs."""
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    name: str = ""


@dataclass
class QuadBound:
    """u >= (sum(coef * x[idx]) + const)^2 with a single epigraph var."""
    u: int
    idx: np.ndarray
    coef: np.ndarray
    const: float
    name: str = ""


@dataclass
class Implication:
    """gate(x) == 0  =>  con; gate is a nonnegative integral affine form.

    A binary activation b => con is stored with gate = 1 - b. The big-M
    expansion emits con relaxed by M * gate(x); M is derived from the
    variable box at expansion time unless pinned explicitly.
    """
    gate_idx: np.ndarray
    gate_coef: np.ndarray
    gate_const: float
    con: LinCon
    big_m: float | None = None
    name: str = ""


def _as_sparse(terms) -> tuple[np.ndarray, np.ndarray]:
    """Accept dict {var: coef} or (idx, coef) pair; merge duplicates."""
    if isinstance(terms, dict):
        idx = np.fromiter(terms.keys(), dtype=np.int64, count=len(terms))
        coef = np.fromiter(terms.values(), dtype=float, count=len(terms))
    else:
        idx = np.asarray(terms[0], dtype=np.int64)
        coef = np.asarray(terms[1], dtype=float)
    if len(idx) != len(coef):
        raise BuildError("index/coefficient length mismatch")
    if len(np.unique(idx)) != len(idx):
        order = np.argsort(idx, kind="stable")
        idx, coef = idx[order], coef[order]
        uniq, start = np.unique(idx, return_index=True)
        coef = np.add.reduceat(coef, start)
        idx = uniq
    return idx, coef


@dataclass
class MicpSolution:
    x: np.ndarray
    objective: float
    lower_bound: float
    status: str                       # optimal|gap-limit|infeasible|...
    nodes: int = 0
    wall_time: float = 0.0

    @property
    def gap(self) -> float:
        if not np.isfinite(self.objective) or not np.isfinite(
                self.lower_bound):
            return np.inf
        return max(0.0, (self.objective - self.lower_bound)
                   / max(1.0, abs(self.objective)))


class MicpProblem:
    """Mutable builder; finalize() freezes it for solving."""

    def __init__(self):
        self.names: list[str] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._binary: list[bool] = []
        self.constraints: list[LinCon] = []
        self.quad_bounds: list[QuadBound] = []
        self.implications: list[Implication] = []
        self.obj_quad: list[tuple[float, np.ndarray, np.ndarray, float]] = []
        self.obj_lin: dict[int, float] = {}
        self.obj_const: float = 0.0
        self.one_hot_groups: list[np.ndarray] = []
        self.and_triples: list[tuple[int, int, int]] = []
        self.precedence_chains: list[list[tuple[np.ndarray, np.ndarray]]] = []
        self._final = False

    # ------------------------------------------------------------------
    # variables
    # ------------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self._lo)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self._hi)

    @property
    def binary_mask(self) -> np.ndarray:
        return np.asarray(self._binary)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary_mask)

    def add_var(self, name: str, lo=-np.inf, hi=np.inf,
                binary=False) -> int:
        self._assert_open()
        if binary:
            lo, hi = 0.0, 1.0
        if lo > hi:
            raise BuildError(f"{name}: lower bound above upper bound")
        self.names.append(name)
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._binary.append(bool(binary))
        return len(self.names) - 1

    def add_vars(self, name: str, count: int, lo=-np.inf, hi=np.inf,
                 binary=False) -> np.ndarray:
        return np.array([self.add_var(f"{name}[{k}]", lo, hi, binary)
                         for k in range(count)], dtype=np.int64)

    def set_bounds(self, i: int, lo: float, hi: float):
        if lo > hi:
            raise BuildError(f"{self.names[i]}: empty bound interval")
        self._lo[i] = float(lo)
        self._hi[i] = float(hi)

    def fix_var(self, i: int, value: float):
        self.set_bounds(i, value, value)

    # ------------------------------------------------------------------
    # constraints and objective
    # ------------------------------------------------------------------

    def add_linear(self, terms, sense: str, rhs: float, name="") -> int:
        self._assert_open()
        if sense not in _SENSES:
            raise BuildError(f"unknown sense {sense!r}")
        idx, coef = _as_sparse(terms)
        self._check_idx(idx)
        self.constraints.append(LinCon(idx, coef, sense, float(rhs), name))
        return len(self.constraints) - 1

    def add_implication(self, b: int, terms, sense: str, rhs: float,
                        big_m: float | None = None, name="") -> int:
        """b == 1  =>  (terms sense rhs), expanded as big-M at relax time."""
        self._assert_open()
        if not self._binary[b]:
            raise BuildError(f"activator {self.names[b]} is not binary")
        return self.add_gated({b: -1.0}, terms, sense, rhs, gate_const=1.0,
                              big_m=big_m, name=name)

    def add_gated(self, gate_terms, terms, sense: str, rhs: float,
                  gate_const=0.0, big_m: float | None = None,
                  name="") -> int:
        """gate(x) == 0  =>  (terms sense rhs); gate must stay >= 0."""
        self._assert_open()
        if sense not in _SENSES:
            raise BuildError(f"unknown sense {sense!r}")
        gidx, gcoef = _as_sparse(gate_terms)
        idx, coef = _as_sparse(terms)
        self._check_idx(gidx)
        self._check_idx(idx)
        con = LinCon(idx, coef, sense, float(rhs), name)
        self.implications.append(Implication(gidx, gcoef, float(gate_const),
                                             con, big_m, name))
        return len(self.implications) - 1

    def add_quadratic_bound(self, u: int, terms, const=0.0, name="") -> int:
        self._assert_open()
        idx, coef = _as_sparse(terms)
        self._check_idx(idx)
        self._check_idx(np.array([u]))
        if self._lo[u] < 0.0:
            self._lo[u] = 0.0  # epigraph of a square is nonnegative
        self.quad_bounds.append(QuadBound(int(u), idx, coef, float(const),
                                          name))
        return len(self.quad_bounds) - 1

    def obj_add_square(self, weight: float, terms, const=0.0):
        self._assert_open()
        if weight < 0.0:
            raise BuildError(f"square weight must be >= 0, got {weight}")
        if weight == 0.0:
            return
        idx, coef = _as_sparse(terms)
        self._check_idx(idx)
        self.obj_quad.append((float(weight), idx, coef, float(const)))

    def obj_add_linear(self, terms):
        self._assert_open()
        idx, coef = _as_sparse(terms)
        self._check_idx(idx)
        for i, cval in zip(idx, coef):
            self.obj_lin[int(i)] = self.obj_lin.get(int(i), 0.0) + cval

    def obj_add_const(self, value: float):
        self._assert_open()
        self.obj_const += float(value)

    # ------------------------------------------------------------------
    # combinatorial annotations
    # ------------------------------------------------------------------

    def annotate_one_hot(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        self._check_idx(ids)
        if not all(self._binary[i] for i in ids):
            raise BuildError("one-hot group must contain binaries only")
        self.one_hot_groups.append(ids)

    def annotate_and(self, z: int, a: int, b: int):
        for v in (z, a, b):
            if not self._binary[v]:
                raise BuildError("AND annotation needs binary variables")
        self.and_triples.append((z, a, b))

    def annotate_precedence(self, chain):
        """chain = [(binary_ids, slot_values), ...]; slot values must be
        strictly increasing by >= 1 from one group to the next."""
        norm = []
        for ids, vals in chain:
            ids = np.asarray(ids, dtype=np.int64)
            vals = np.asarray(vals, dtype=float)
            self._check_idx(ids)
            norm.append((ids, vals))
        self.precedence_chains.append(norm)

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def finalize(self):
        self._final = True
        return self

    def _assert_open(self):
        if self._final:
            raise BuildError("problem is finalized")

    def _check_idx(self, idx):
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise BuildError(f"variable index out of range: {idx}")

    # ------------------------------------------------------------------
    # evaluation helpers
    # ------------------------------------------------------------------

    def eval_objective(self, x) -> float:
        val = self.obj_const
        for w, idx, coef, const in self.obj_quad:
            val += w * (coef @ x[idx] + const) ** 2
        for i, cval in self.obj_lin.items():
            val += cval * x[i]
        return float(val)

    def eval_violation(self, x, include_implications=True) -> float:
        """Worst violation of rows, bounds, epigraphs and implications."""
        worst = 0.0
        worst = max(worst, float(np.max(self.lo - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.hi, initial=0.0)))
        for con in self.constraints:
            worst = max(worst, _con_violation(con, x))
        for qb in self.quad_bounds:
            expr = qb.coef @ x[qb.idx] + qb.const
            worst = max(worst, expr * expr - x[qb.u])
        if include_implications:
            for imp in self.implications:
                gate = imp.gate_coef @ x[imp.gate_idx] + imp.gate_const
                if gate <= 1e-6:
                    worst = max(worst, _con_violation(imp.con, x))
        return worst

    # ------------------------------------------------------------------
    # relaxation
    # ------------------------------------------------------------------

    def derive_big_m(self, imp: Implication, lo, hi) -> tuple[float, float]:
        """Bound-derived (M_le, M_ge) for one implication under a box."""
        con = imp.con
        blo, bhi = lo[con.idx], hi[con.idx]
        up = np.where(con.coef >= 0, con.coef * bhi, con.coef * blo)
        dn = np.where(con.coef >= 0, con.coef * blo, con.coef * bhi)
        if con.sense in (LE, EQ):
            if not np.all(np.isfinite(up)):
                raise BuildError(
                    f"cannot derive big-M for {con.name or 'constraint'}: "
                    "unbounded variable")
            m_le = max(0.0, float(up.sum()) - con.rhs)
        else:
            m_le = 0.0
        if con.sense in (GE, EQ):
            if not np.all(np.isfinite(dn)):
                raise BuildError(
                    f"cannot derive big-M for {con.name or 'constraint'}: "
                    "unbounded variable")
            m_ge = max(0.0, con.rhs - float(dn.sum()))
        else:
            m_ge = 0.0
        return m_le, m_ge

    def relax(self, lo=None, hi=None) -> "MicpProblem":
        """Continuous relaxation with implications expanded to big-M rows.

        Optional lo/hi boxes override the stored bounds (branch-and-bound
        node boxes); tighter boxes yield tighter derived Ms. Implications
        whose gate is forced to zero by the box become hard rows; gates
        forced >= 1 drop their row entirely.
        """
        lo = self.lo if lo is None else np.asarray(lo, dtype=float)
        hi = self.hi if hi is None else np.asarray(hi, dtype=float)
        out = MicpProblem()
        out.names = list(self.names)
        out._lo = [float(v) for v in lo]
        out._hi = [float(v) for v in hi]
        out._binary = [False] * self.n_vars
        out.constraints = [LinCon(c.idx, c.coef, c.sense, c.rhs, c.name)
                           for c in self.constraints]
        out.quad_bounds = list(self.quad_bounds)
        out.obj_quad = list(self.obj_quad)
        out.obj_lin = dict(self.obj_lin)
        out.obj_const = self.obj_const

        for imp in self.implications:
            glo, ghi = _interval(imp.gate_idx, imp.gate_coef,
                                 imp.gate_const, lo, hi)
            if glo < -1e-9:
                raise BuildError(
                    f"gate of {imp.name or 'implication'} can go negative "
                    f"({glo:.3e}); gates must stay >= 0")
            if glo >= 0.5:
                continue  # gate can never vanish: implication inert
            con = imp.con
            if ghi <= 0.5:
                out.constraints.append(
                    LinCon(con.idx, con.coef, con.sense, con.rhs, con.name))
                continue
            m_le, m_ge = (self.derive_big_m(imp, lo, hi)
                          if imp.big_m is None else (imp.big_m, imp.big_m))
            if con.sense in (LE, EQ) and m_le > 0.0:
                idx, coef = _merge(con.idx, con.coef,
                                   imp.gate_idx, -m_le * imp.gate_coef)
                out.constraints.append(LinCon(
                    idx, coef, LE, con.rhs + m_le * imp.gate_const, con.name))
            elif con.sense in (LE, EQ):
                out.constraints.append(
                    LinCon(con.idx, con.coef, LE, con.rhs, con.name))
            if con.sense in (GE, EQ) and m_ge > 0.0:
                idx, coef = _merge(con.idx, con.coef,
                                   imp.gate_idx, m_ge * imp.gate_coef)
                out.constraints.append(LinCon(
                    idx, coef, GE, con.rhs - m_ge * imp.gate_const, con.name))
            elif con.sense in (GE, EQ):
                out.constraints.append(
                    LinCon(con.idx, con.coef, GE, con.rhs, con.name))
        return out.finalize()

    # ------------------------------------------------------------------
    # debug export
    # ------------------------------------------------------------------

    def debug_listing(self) -> str:
        """One constraint per line, human-readable, stable ordering."""
        lines = [f"vars {self.n_vars} "
                 f"binaries {int(self.binary_mask.sum())}"]
        for i, name in enumerate(self.names):
            kind = "bin" if self._binary[i] else "cont"
            lines.append(f"var {name} {kind} [{self._lo[i]:g}, "
                         f"{self._hi[i]:g}]")
        for con in self.constraints:
            lines.append(f"lin {con.name or '-'}: "
                         f"{_expr_str(self, con.idx, con.coef)} "
                         f"{con.sense} {con.rhs:g}")
        for qb in self.quad_bounds:
            lines.append(f"quad {qb.name or '-'}: {self.names[qb.u]} >= "
                         f"({_expr_str(self, qb.idx, qb.coef, qb.const)})^2")
        for imp in self.implications:
            gate = _expr_str(self, imp.gate_idx, imp.gate_coef,
                             imp.gate_const)
            body = (f"{_expr_str(self, imp.con.idx, imp.con.coef)} "
                    f"{imp.con.sense} {imp.con.rhs:g}")
            lines.append(f"imp {imp.name or '-'}: [{gate} == 0] => {body}")
        return "\n".join(lines) + "\n"


def _con_violation(con: LinCon, x) -> float:
    lhs = con.coef @ x[con.idx]
    if con.sense == LE:
        return lhs - con.rhs
    if con.sense == GE:
        return con.rhs - lhs
    return abs(lhs - con.rhs)


def _interval(idx, coef, const, lo, hi) -> tuple[float, float]:
    blo, bhi = lo[idx], hi[idx]
    up = np.where(coef >= 0, coef * bhi, coef * blo)
    dn = np.where(coef >= 0, coef * blo, coef * bhi)
    return const + float(dn.sum()), const + float(up.sum())


def _merge(idx_a, coef_a, idx_b, coef_b):
    idx = np.concatenate([idx_a, idx_b])
    coef = np.concatenate([coef_a, coef_b])
    order = np.argsort(idx, kind="stable")
    idx, coef = idx[order], coef[order]
    uniq, start = np.unique(idx, return_index=True)
    return uniq, np.add.reduceat(coef, start)


def _expr_str(problem, idx, coef, const=0.0) -> str:
    parts = [f"{c:+g}*{problem.names[i]}" for i, c in zip(idx, coef)]
    if const:
        parts.append(f"{const:+g}")
    return " ".join(parts) if parts else "0"
