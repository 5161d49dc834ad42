"""Encode contact-and-motion planning as a mixed-integer convex program.

Decision layout for a plan with n_l legs, N_f planned contacts, N_t
time-slots of N_k knots each (N = N_t*N_k knots of dt seconds):

* centroidal states per knot: CoM position r, CoM velocity, angular
  momentum; per leg-knot: foot position, contact force, friction margin;
* per planned contact i: landing point f_i (x, y, z), trunk yaw theta_i
  with its piecewise-linear sin/cos values, assigned time-slot value t_i;
* binaries: transition matrix T (contact x slot), region assignment H
  (contact x region), sin/cos segment selectors S and C, and the AND
  binaries z = T_ij & H_ir that condition the stance-cone rows.

The bilinear torque terms (p - r) x force are made convex by the
difference-of-squares split: each product a*b is replaced by
(u+ - u-)/4 with epigraphs u+ >= (a+b)^2, u- >= (a-b)^2, and the
epigraph magnitudes are penalized to keep the substitution tight.

Contact i belongs to leg i mod n_l; contacts of one leg are reached in
index order (slot values strictly increase along the leg's chain). Knot
indices are 0-based; slot j covers knots j*N_k .. (j+1)*N_k-1 and its
last knot is the touchdown knot. Swing knots of a slot are all but the
last one.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BuildError, SchemaError
from .micp import EQ, GE, LE, MicpProblem
from .robot import RobotModel, TrigTable, build_trig_table
from .terrain import TerrainScene

# product index -> (component of p - r, component of force); the torque
# components are (P0-P1, P2-P3, P4-P5)/4 in u-substituted form
_CROSS_PRODUCTS = ((1, 2), (2, 1), (2, 0), (0, 2), (0, 1), (1, 0))


@dataclass(frozen=True)
class PlanDims:
    n_legs: int
    n_contacts: int      # planned contacts, whole multiples of n_legs
    n_slots: int
    knots_per_slot: int
    n_regions: int
    n_segments: int = 5
    dt: float = 0.1

    @property
    def n_knots(self) -> int:
        return self.n_slots * self.knots_per_slot

    @property
    def n_cycles(self) -> int:
        return self.n_contacts // self.n_legs

    def validate(self):
        if min(self.n_legs, self.n_contacts, self.n_slots,
               self.knots_per_slot, self.n_regions, self.n_segments) < 1:
            raise BuildError("all plan dimensions must be positive")
        if self.dt <= 0.0:
            raise BuildError(f"dt must be positive, got {self.dt}")
        if self.n_contacts % self.n_legs:
            raise BuildError(
                f"contacts ({self.n_contacts}) must be a whole number of "
                f"cycles of {self.n_legs} legs")
        if self.n_slots < self.n_cycles:
            warnings.warn(
                f"{self.n_slots} slots cannot order {self.n_cycles} "
                "cycles; the ordering rows will be infeasible",
                RuntimeWarning, stacklevel=2)

    def slot_of(self, knot: int) -> int:
        return knot // self.knots_per_slot

    def touchdown_knot(self, slot: int) -> int:
        return slot * self.knots_per_slot + self.knots_per_slot - 1

    def swing_knots(self, slot: int) -> range:
        base = slot * self.knots_per_slot
        return range(base, base + self.knots_per_slot - 1)


@dataclass(frozen=True)
class Weights:
    com_accel: np.ndarray     # 3, squared-norm weight on CoM acceleration
    force: np.ndarray         # 3, squared-norm weight on contact forces
    decomposition: float      # linear penalty on u+ + u-
    time: float               # linear penalty on the slot-value vector
    margin: float             # linear reward on the friction margin
    goal: np.ndarray          # 3, terminal squared distance to the goal
    momentum_rate: np.ndarray  # 3, squared-norm weight on dk/dt

    @staticmethod
    def from_dict(doc: dict | None) -> "Weights":
        doc = doc or {}

        def vec3(key, default):
            v = doc.get(key, default)
            v = np.full(3, float(v)) if np.isscalar(v) \
                else np.asarray(v, dtype=float)
            if v.shape != (3,) or np.any(v < 0):
                raise SchemaError(f"weight {key} must be scalar or "
                                  "3-vector, nonnegative")
            return v

        def pos(key, default):
            v = float(doc.get(key, default))
            if v < 0:
                raise SchemaError(f"weight {key} must be >= 0")
            return v

        return Weights(com_accel=vec3("Qv", 0.5),
                       force=vec3("QF", 1e-4),
                       decomposition=pos("qu", 1e-4),
                       time=pos("qt", 0.5),
                       margin=pos("qalpha", 0.01),
                       goal=vec3("Qg", 100.0),
                       momentum_rate=vec3("Qk", 0.1))


@dataclass
class TaskSpec:
    goal: np.ndarray
    dims: PlanDims
    weights: Weights
    gait: object = "free"               # "free" | "walk" | "trot" | [[i,j]]
    yaw_range: tuple = (-np.pi / 2, np.pi / 2)
    angular_dynamics: bool = True
    v_max: float = 3.0
    f_max: float | None = None          # default 3 * m * |g|
    v_init: np.ndarray = field(default_factory=lambda: np.zeros(3))
    apex_height: float = 0.08


def load_task(document, robot: RobotModel | None = None,
              scene: TerrainScene | None = None) -> TaskSpec:
    """Parse a task document; leg/region counts come from the robot and
    scene unless the document pins them explicitly."""
    doc = _as_dict(document)
    try:
        goal = np.asarray(doc["goal"], dtype=float)
        dd = doc["dims"]
        n_legs = int(dd["n_legs"]) if "n_legs" in dd else \
            (robot.n_legs if robot is not None else None)
        n_regions = int(dd["N_r"]) if "N_r" in dd else \
            (len(scene.regions) if scene is not None else None)
        if n_legs is None or n_regions is None:
            raise SchemaError("dims need n_legs/N_r or a robot and scene "
                              "to take them from")
        dims = PlanDims(n_legs=n_legs,
                        n_contacts=int(dd["N_f"]),
                        n_slots=int(dd["N_t"]),
                        knots_per_slot=int(dd["N_k"]),
                        n_regions=n_regions,
                        n_segments=int(dd.get("N_s", 5)),
                        dt=float(dd.get("dt", 0.1)))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"task document missing field: {exc}") from exc
    if goal.shape != (3,):
        raise SchemaError("goal must be a 3-vector")
    dims.validate()
    opts = doc.get("options", {})
    return TaskSpec(goal=goal, dims=dims,
                    weights=Weights.from_dict(doc.get("weights")),
                    gait=doc.get("gait", "free"),
                    yaw_range=tuple(doc.get("yaw_range",
                                            (-np.pi / 2, np.pi / 2))),
                    angular_dynamics=bool(opts.get("angular", True)),
                    v_max=float(opts.get("v_max", 3.0)),
                    f_max=(float(opts["f_max"]) if "f_max" in opts
                           else None),
                    v_init=np.asarray(opts.get("v_init", (0, 0, 0)),
                                      dtype=float),
                    apex_height=float(opts.get("apex_height", 0.08)))


def _as_dict(document):
    if isinstance(document, dict):
        return document
    if isinstance(document, Path):
        text = document.read_text()
    elif isinstance(document, str):
        text = document if document.lstrip().startswith("{") \
            else Path(document).read_text()
    else:
        raise SchemaError(f"cannot parse document of type {type(document)}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc


@dataclass
class VariableMap:
    """Index arrays from model symbols into the flat variable vector.

    Force-like variables (force, margin, edge_weight) are expressed in
    units of body weight m*|g|; ``force_scale`` converts back to
    Newtons. The decomposition epigraphs u bound squares of
    (p - r) +- force/force_scale, i.e. meters plus weight units.
    """
    force_scale: float
    com: np.ndarray            # (N, 3)
    com_vel: np.ndarray        # (N, 3)
    ang_mom: np.ndarray        # (N, 3) or empty when angular is off
    foot: np.ndarray           # (n_l, N, 3)
    force: np.ndarray          # (n_l, N, 3)
    margin: np.ndarray         # (n_l, N)
    u_plus: np.ndarray         # (n_l, N, 6) or empty
    u_minus: np.ndarray
    contact_pos: np.ndarray    # (N_f, 3)
    contact_yaw: np.ndarray    # (N_f,)
    sin_val: np.ndarray        # (N_f,)
    cos_val: np.ndarray
    slot_value: np.ndarray     # (N_f,)
    trans: np.ndarray          # (N_f, N_t) binary
    region: np.ndarray         # (N_f, N_r) binary
    seg_sin: np.ndarray        # (N_f, N_s) binary
    seg_cos: np.ndarray
    stance_and: np.ndarray     # (N_f, N_t, N_r) binary
    edge_weight: np.ndarray    # (N_f, N_e)


class Formulation:
    """Builds the full MICP for one scene / robot / task triple."""

    def __init__(self, scene: TerrainScene, robot: RobotModel,
                 task: TaskSpec, trig: TrigTable | None = None):
        dims = task.dims
        if dims.n_legs != robot.n_legs:
            raise BuildError(f"task has {dims.n_legs} legs but robot has "
                             f"{robot.n_legs}")
        if dims.n_regions != len(scene.regions):
            raise BuildError(f"task expects {dims.n_regions} regions, "
                             f"scene has {len(scene.regions)}")
        for reg in scene.regions:
            if reg.cone_facets is None:
                raise BuildError(
                    f"region {reg.id} is frictionless; the planner needs "
                    "mu > 0")
        self.scene = scene
        self.robot = robot
        self.task = task
        self.dims = dims
        self.trig = trig or build_trig_table(dims.n_segments,
                                             task.yaw_range)
        self.g_norm = float(np.linalg.norm(scene.gravity))
        # forces are modeled in units of body weight so every variable
        # stays O(1); the map records the scale for extraction
        self.force_scale = robot.mass * self.g_norm
        self.f_max = task.f_max if task.f_max is not None \
            else 3.0 * robot.mass * self.g_norm
        self.problem = MicpProblem()
        self.family_census: dict[str, int] = {}
        self._pos_lo, self._pos_hi = self._position_box()
        self._alloc_states()
        self._run_family("gait", self.add_gait_constraints)
        self._run_family("region_reach", self.add_region_and_reach)
        self._run_family("swing_box", self.add_swing_and_box)
        self._run_family("dynamics", self.add_dynamics)
        self._run_family("contact_forces", self.add_contact_forces)
        self._run_family("objective", self.add_objective)
        self._apply_gait_pattern()
        self.problem.finalize()

    # ------------------------------------------------------------------

    def _run_family(self, name, fn):
        before = int(self.problem.binary_mask.sum())
        fn()
        self.family_census[name] = int(self.problem.binary_mask.sum()) \
            - before

    def _position_box(self):
        lo, hi = self.scene.bbox()
        pts = np.vstack([lo, hi, self.robot.initial_feet,
                         self.robot.initial_com, self.task.goal])
        pad = 1.0 + 2.0 * self.robot.reach
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        hi[2] += 1.0
        return lo, hi

    def _alloc_states(self):
        p, dims, robot = self.problem, self.dims, self.robot
        N, n_l = dims.n_knots, dims.n_legs
        lo, hi = self._pos_lo, self._pos_hi
        vmax = self.task.v_max
        span = float(np.max(hi - lo))
        f_units = self.f_max / self.force_scale
        u_hi = 1.05 * (span + f_units) ** 2
        l_max = robot.mass * vmax * max(1.0, span)

        def grid(name, shape, lov, hiv):
            arr = np.empty(shape, dtype=np.int64)
            for idx in np.ndindex(*shape):
                tag = ",".join(str(i) for i in idx)
                arr[idx] = p.add_var(f"{name}[{tag}]",
                                     lov[idx[-1]] if np.ndim(lov) else lov,
                                     hiv[idx[-1]] if np.ndim(hiv) else hiv)
            return arr

        com = grid("r", (N, 3), lo, hi)
        com_vel = grid("rdot", (N, 3), -vmax, vmax)
        foot = grid("p", (n_l, N, 3), lo, hi)
        force = grid("lam", (n_l, N, 3), -f_units, f_units)
        margin = grid("alpha", (n_l, N), 0.0, 2.0 * f_units)
        if self.task.angular_dynamics:
            ang = grid("k", (N, 3), -l_max, l_max)
            u_plus = grid("uplus", (n_l, N, 6), 0.0, u_hi)
            u_minus = grid("uminus", (n_l, N, 6), 0.0, u_hi)
        else:
            ang = np.empty((0, 3), dtype=np.int64)
            u_plus = np.empty((0,), dtype=np.int64)
            u_minus = np.empty((0,), dtype=np.int64)
        self.vmap = VariableMap(
            force_scale=self.force_scale,
            com=com, com_vel=com_vel, ang_mom=ang, foot=foot, force=force,
            margin=margin, u_plus=u_plus, u_minus=u_minus,
            contact_pos=None, contact_yaw=None, sin_val=None, cos_val=None,
            slot_value=None, trans=None, region=None, seg_sin=None,
            seg_cos=None, stance_and=None, edge_weight=None)

    # ------------------------------------------------------------------
    # constraint families
    # ------------------------------------------------------------------

    def add_gait_constraints(self):
        """Transition one-hots, slot values, and leg-chain ordering."""
        p, dims = self.problem, self.dims
        nf, nt = dims.n_contacts, dims.n_slots
        T = np.empty((nf, nt), dtype=np.int64)
        for i in range(nf):
            for j in range(nt):
                T[i, j] = p.add_var(f"T[{i},{j}]", binary=True)
        tvals = p.add_vars("tslot", nf, 1.0, float(nt))
        slots = np.arange(1, nt + 1, dtype=float)
        for i in range(nf):
            p.add_linear((T[i], np.ones(nt)), EQ, 1.0, name=f"T_onehot[{i}]")
            p.annotate_one_hot(T[i])
            terms = {int(tvals[i]): 1.0}
            for j in range(nt):
                terms[int(T[i, j])] = -slots[j]
            p.add_linear(terms, EQ, 0.0, name=f"tdef[{i}]")
        for i in range(dims.n_legs, nf):
            p.add_linear({int(tvals[i]): 1.0, int(tvals[i - dims.n_legs]):
                          -1.0}, GE, 1.0, name=f"order[{i}]")
        for leg in range(dims.n_legs):
            chain = [(T[i], slots) for i in range(leg, nf, dims.n_legs)]
            if len(chain) > 1:
                p.annotate_precedence(chain)
        self.vmap.trans = T
        self.vmap.slot_value = tvals

    def add_region_and_reach(self):
        """Region assignment, landing-point membership, piecewise-linear
        yaw trigonometry, and the reach square around each hip."""
        p, dims, robot = self.problem, self.dims, self.robot
        nf, nr, ns = dims.n_contacts, dims.n_regions, dims.n_segments
        lo, hi = self._pos_lo, self._pos_hi
        f = np.empty((nf, 3), dtype=np.int64)
        for i in range(nf):
            for a, ax in enumerate("xyz"):
                f[i, a] = p.add_var(f"f{ax}[{i}]", lo[a], hi[a])
        yaw = p.add_vars("theta", nf, self.trig.lo, self.trig.hi)
        sin_v = p.add_vars("s", nf, -1.0, 1.0)
        cos_v = p.add_vars("c", nf, -1.0, 1.0)
        H = np.empty((nf, nr), dtype=np.int64)
        S = np.empty((nf, ns), dtype=np.int64)
        C = np.empty((nf, ns), dtype=np.int64)
        for i in range(nf):
            for r in range(nr):
                H[i, r] = p.add_var(f"H[{i},{r}]", binary=True)
            for s in range(ns):
                S[i, s] = p.add_var(f"S[{i},{s}]", binary=True)
            for s in range(ns):
                C[i, s] = p.add_var(f"C[{i},{s}]", binary=True)

        for i in range(nf):
            p.add_linear((H[i], np.ones(nr)), EQ, 1.0, name=f"H_onehot[{i}]")
            p.annotate_one_hot(H[i])
            p.add_linear((S[i], np.ones(ns)), EQ, 1.0, name=f"S_onehot[{i}]")
            p.annotate_one_hot(S[i])
            p.add_linear((C[i], np.ones(ns)), EQ, 1.0, name=f"C_onehot[{i}]")
            p.annotate_one_hot(C[i])
            for r, reg in enumerate(self.scene.regions):
                for row in range(reg.halfspaces_A.shape[0]):
                    p.add_implication(
                        int(H[i, r]), (f[i], reg.halfspaces_A[row]), LE,
                        float(reg.halfspaces_b[row]),
                        name=f"region[{i},{r},{row}]")
            tt = self.trig
            for s in range(ns):
                self._segment_rows(S[i, s], yaw[i], sin_v[i],
                                   tt.sin_bounds[s], tt.sin_bounds[s + 1],
                                   tt.sin_slope[s], tt.sin_icept[s],
                                   f"sin[{i},{s}]")
                self._segment_rows(C[i, s], yaw[i], cos_v[i],
                                   tt.cos_bounds[s], tt.cos_bounds[s + 1],
                                   tt.cos_slope[s], tt.cos_icept[s],
                                   f"cos[{i},{s}]")
            # aggregated segment bounds and the convex hull of the
            # piecewise graph: redundant for integral selections but they
            # keep the continuous relaxation from mixing segments freely
            terms = {int(yaw[i]): 1.0}
            for s in range(ns):
                terms[int(S[i, s])] = -float(tt.sin_bounds[s + 1])
            p.add_linear(dict(terms), LE, 0.0, name=f"segub[{i}]")
            terms = {int(yaw[i]): 1.0}
            for s in range(ns):
                terms[int(S[i, s])] = -float(tt.sin_bounds[s])
            p.add_linear(dict(terms), GE, 0.0, name=f"seglb[{i}]")
            nodes_s = np.column_stack([tt.sin_bounds,
                                       np.sin(tt.sin_bounds)])
            nodes_c = np.column_stack([tt.cos_bounds,
                                       np.cos(tt.cos_bounds)])
            self._hull_rows(yaw[i], sin_v[i], nodes_s, f"sinhull[{i}]")
            self._hull_rows(yaw[i], cos_v[i], nodes_c, f"coshull[{i}]")

        # reach square: landing point within d_lim (inf-norm) of the hip
        # at the post-transition CoM and yaw
        for i in range(nf):
            leg = i % dims.n_legs
            L = robot.leg_radius[leg]
            cphi = float(np.cos(robot.leg_angle[leg]))
            sphi = float(np.sin(robot.leg_angle[leg]))
            for j in range(dims.n_slots):
                td = dims.touchdown_knot(j)
                rx, ry = self.vmap.com[td, 0], self.vmap.com[td, 1]
                # hip x = rx + L*(c*cphi - s*sphi); y = ry + L*(s*cphi + c*sphi)
                for sgn in (1.0, -1.0):
                    p.add_implication(
                        int(self.vmap.trans[i, j]),
                        {int(f[i, 0]): sgn, int(rx): -sgn,
                         int(cos_v[i]): -sgn * L * cphi,
                         int(sin_v[i]): sgn * L * sphi},
                        LE, robot.reach, name=f"reachx[{i},{j}]")
                    p.add_implication(
                        int(self.vmap.trans[i, j]),
                        {int(f[i, 1]): sgn, int(ry): -sgn,
                         int(sin_v[i]): -sgn * L * cphi,
                         int(cos_v[i]): -sgn * L * sphi},
                        LE, robot.reach, name=f"reachy[{i},{j}]")
        self.vmap.contact_pos = f
        self.vmap.contact_yaw = yaw
        self.vmap.sin_val = sin_v
        self.vmap.cos_val = cos_v
        self.vmap.region = H
        self.vmap.seg_sin = S
        self.vmap.seg_cos = C

    def _hull_rows(self, theta, value, nodes, tag):
        """Upper/lower hull of the interpolation nodes as hard rows."""
        p = self.problem
        for chain, sense in ((_hull_chain(nodes, upper=True), LE),
                             (_hull_chain(nodes, upper=False), GE)):
            for (x0, y0), (x1, y1) in zip(chain[:-1], chain[1:]):
                slope = (y1 - y0) / (x1 - x0)
                p.add_linear({int(value): 1.0, int(theta): -slope},
                             sense, y0 - slope * x0, name=tag)

    def _segment_rows(self, sel, theta, value, blo, bhi, slope, icept, tag):
        p = self.problem
        p.add_implication(int(sel), {int(theta): 1.0}, LE, float(bhi),
                          name=f"{tag}.hi")
        p.add_implication(int(sel), {int(theta): 1.0}, GE, float(blo),
                          name=f"{tag}.lo")
        p.add_implication(int(sel), {int(value): 1.0, int(theta):
                                     -float(slope)}, EQ, float(icept),
                          name=f"{tag}.val")

    def add_swing_and_box(self):
        """Touchdown placement, stationarity off transitions, CoM box."""
        p, dims = self.problem, self.dims
        vm = self.vmap
        nf, nl, nk = dims.n_contacts, dims.n_legs, dims.knots_per_slot
        for i in range(nf):
            leg = i % nl
            for j in range(dims.n_slots):
                td = dims.touchdown_knot(j)
                for a in range(3):
                    p.add_implication(
                        int(vm.trans[i, j]),
                        {int(vm.foot[leg, td, a]): 1.0,
                         int(vm.contact_pos[i, a]): -1.0},
                        EQ, 0.0, name=f"touchdown[{i},{j}]")
        # a leg without a transition in slot j holds its position through
        # the slot and across the slot boundary
        for leg in range(nl):
            contacts = list(range(leg, nf, nl))
            for j in range(dims.n_slots):
                gate = {int(vm.trans[i, j]): 1.0 for i in contacts}
                base = j * nk
                for t in range(1, nk):
                    for a in range(3):
                        p.add_gated(gate,
                                    {int(vm.foot[leg, base + t, a]): 1.0,
                                     int(vm.foot[leg, base, a]): -1.0},
                                    EQ, 0.0, name=f"hold[{leg},{j},{t}]")
                for a in range(3):
                    if j == 0:
                        p.add_gated(gate, {int(vm.foot[leg, 0, a]): 1.0},
                                    EQ, float(self.robot.initial_feet[leg,
                                                                      a]),
                                    name=f"hold0[{leg}]")
                    else:
                        p.add_gated(gate,
                                    {int(vm.foot[leg, base, a]): 1.0,
                                     int(vm.foot[leg, base - 1, a]): -1.0},
                                    EQ, 0.0, name=f"carry[{leg},{j}]")
        # CoM bounding box relative to the foot centroid
        blo, bhi = self.robot.com_box_lo, self.robot.com_box_hi
        for k in range(dims.n_knots):
            for a in range(3):
                terms = {int(vm.com[k, a]): 1.0}
                for leg in range(nl):
                    terms[int(vm.foot[leg, k, a])] = -1.0 / nl
                p.add_linear(dict(terms), LE, float(bhi[a]),
                             name=f"box_hi[{k},{a}]")
                p.add_linear(dict(terms), GE, float(blo[a]),
                             name=f"box_lo[{k},{a}]")

    def add_dynamics(self):
        """Backward-Euler centroidal dynamics; bilinear torque terms are
        replaced by their difference-of-squares epigraph split."""
        p, dims, vm = self.problem, self.dims, self.vmap
        dt = dims.dt
        g = self.scene.gravity
        gn = self.g_norm
        fs = self.force_scale
        r0 = self.robot.initial_com
        v0 = self.task.v_init
        for k in range(dims.n_knots):
            for a in range(3):
                # r_k - r_{k-1} = dt * v_k
                terms = {int(vm.com[k, a]): 1.0, int(vm.com_vel[k, a]): -dt}
                rhs = 0.0
                if k == 0:
                    rhs = float(r0[a])
                else:
                    terms[int(vm.com[k - 1, a])] = -1.0
                p.add_linear(terms, EQ, rhs, name=f"integ[{k},{a}]")
                # (v_k - v_{k-1}) = dt (g + |g| * sum weight-unit forces)
                terms = {int(vm.com_vel[k, a]): 1.0}
                rhs = dt * float(g[a])
                if k == 0:
                    rhs += float(v0[a])
                else:
                    terms[int(vm.com_vel[k - 1, a])] = -1.0
                for leg in range(dims.n_legs):
                    terms[int(vm.force[leg, k, a])] = -dt * gn
                p.add_linear(terms, EQ, rhs, name=f"momentum[{k},{a}]")
        if not self.task.angular_dynamics:
            return
        for k in range(dims.n_knots):
            for a in range(3):
                # angular momentum rate equals the u-substituted torque,
                # forces unscaled back to Newtons through fs
                terms = {int(vm.ang_mom[k, a]): 1.0}
                if k > 0:
                    terms[int(vm.ang_mom[k - 1, a])] = -1.0
                for leg in range(dims.n_legs):
                    qpos, qneg = 2 * a, 2 * a + 1
                    terms[int(vm.u_plus[leg, k, qpos])] = -dt * fs / 4.0
                    terms[int(vm.u_minus[leg, k, qpos])] = dt * fs / 4.0
                    terms[int(vm.u_plus[leg, k, qneg])] = dt * fs / 4.0
                    terms[int(vm.u_minus[leg, k, qneg])] = -dt * fs / 4.0
                p.add_linear(terms, EQ, 0.0, name=f"angmom[{k},{a}]")
        for leg in range(dims.n_legs):
            for k in range(dims.n_knots):
                for q, (ca, cb) in enumerate(_CROSS_PRODUCTS):
                    # a = (p - r)[ca], b = force[cb]
                    base = {int(vm.foot[leg, k, ca]): 1.0,
                            int(vm.com[k, ca]): -1.0}
                    plus = dict(base)
                    plus[int(vm.force[leg, k, cb])] = 1.0
                    minus = dict(base)
                    minus[int(vm.force[leg, k, cb])] = -1.0
                    p.add_quadratic_bound(int(vm.u_plus[leg, k, q]), plus,
                                          name=f"uplus[{leg},{k},{q}]")
                    p.add_quadratic_bound(int(vm.u_minus[leg, k, q]), minus,
                                          name=f"uminus[{leg},{k},{q}]")

    def add_contact_forces(self):
        """Swing-knot force zeroing, stance friction pyramids with margin
        pullback, cone persistence while a leg stays planted, and the
        quasi-static torque caps."""
        p, dims, vm = self.problem, self.dims, self.vmap
        nf, nl, nk = dims.n_contacts, dims.n_legs, dims.knots_per_slot
        scene, robot = self.scene, self.robot
        n_e = scene.regions[0].cone_edges.shape[0]
        for reg in scene.regions:
            if reg.cone_edges.shape[0] != n_e:
                raise BuildError("regions must share the cone edge count")
        rho_hi = 2.0 * (self.f_max / self.force_scale) * float(
            max(np.sqrt(1.0 + r.friction_coeff ** 2)
                for r in scene.regions))
        rho = np.empty((nf, n_e), dtype=np.int64)
        for i in range(nf):
            for e in range(n_e):
                rho[i, e] = p.add_var(f"rho[{i},{e}]", 0.0, rho_hi)
        zand = np.empty((nf, dims.n_slots, dims.n_regions), dtype=np.int64)
        for i in range(nf):
            for j in range(dims.n_slots):
                for r in range(dims.n_regions):
                    zand[i, j, r] = p.add_var(f"z[{i},{j},{r}]", binary=True)

        # force-free and margin-free swing knots
        for i in range(nf):
            leg = i % nl
            for j in range(dims.n_slots):
                Tij = int(vm.trans[i, j])
                for k in dims.swing_knots(j):
                    for a in range(3):
                        p.add_implication(Tij,
                                          {int(vm.force[leg, k, a]): 1.0},
                                          EQ, 0.0,
                                          name=f"swing0[{i},{j},{k},{a}]")
                    p.add_implication(Tij, {int(vm.margin[leg, k]): 1.0},
                                      LE, 0.0, name=f"alpha0[{i},{j},{k}]")

        # stance cones conditioned on z = T & H
        for i in range(nf):
            leg = i % nl
            for j in range(dims.n_slots):
                td = dims.touchdown_knot(j)
                for r, reg in enumerate(scene.regions):
                    z = int(zand[i, j, r])
                    Tij, Hir = int(vm.trans[i, j]), int(vm.region[i, r])
                    p.add_linear({z: 1.0, Tij: -1.0}, LE, 0.0,
                                 name=f"and_a[{i},{j},{r}]")
                    p.add_linear({z: 1.0, Hir: -1.0}, LE, 0.0,
                                 name=f"and_b[{i},{j},{r}]")
                    p.add_linear({z: 1.0, Tij: -1.0, Hir: -1.0}, GE, -1.0,
                                 name=f"and_c[{i},{j},{r}]")
                    p.annotate_and(z, Tij, Hir)
                    # force lies on the pyramid edges at touchdown
                    for a in range(3):
                        terms = {int(vm.force[leg, td, a]): 1.0}
                        for e in range(n_e):
                            terms[int(rho[i, e])] = -float(
                                reg.cone_edges[e, a])
                        p.add_implication(z, terms, EQ, 0.0,
                                          name=f"edges[{i},{j},{r},{a}]")
                    self._margin_rows(leg, td, reg, {z: -1.0}, 1.0,
                                      f"cone[{i},{j},{r}]")
                    # persistence: same cone while the leg stays planted
                    for k in range((j + 1) * nk, dims.n_knots):
                        gate = {z: -1.0}
                        for jj in range(j + 1, dims.slot_of(k) + 1):
                            for i2 in range(leg, nf, nl):
                                gate[int(vm.trans[i2, jj])] = \
                                    gate.get(int(vm.trans[i2, jj]), 0.0) \
                                    + 1.0
                        self._margin_rows(leg, k, reg, gate, 1.0,
                                          f"persist[{i},{j},{r},{k}]")

        # initial stance: cone of the region under each starting foot
        for leg in range(nl):
            reg = scene.region_containing(robot.initial_feet[leg])
            if reg is None:
                raise BuildError(
                    f"initial foot {leg} lies on no safe region")
            for k in range(dims.n_knots):
                gate = {}
                for jj in range(dims.slot_of(k) + 1):
                    for i2 in range(leg, nf, nl):
                        gate[int(vm.trans[i2, jj])] = 1.0
                self._margin_rows(leg, k, reg, gate, 0.0,
                                  f"cone0[{leg},{k}]")

        # the pullback along any region normal never exceeds the normal
        # force component; a valid cap that keeps the relaxation tight
        nz_min = min(float(r.normal[2]) for r in scene.regions)
        if nz_min <= 0.0:
            raise BuildError("regions must face upward")
        for leg in range(nl):
            for k in range(dims.n_knots):
                p.add_linear({int(vm.margin[leg, k]): 1.0,
                              int(vm.force[leg, k, 2]): -1.0 / nz_min},
                             LE, 0.0, name=f"margin_cap[{leg},{k}]")

        # quasi-static torque caps through the nominal Jacobians; rows in
        # weight units to match the force variables
        fs = self.force_scale
        for leg in range(nl):
            jt = robot.nominal_jacobian[leg].T
            tmax = robot.torque_limit[leg] / fs
            for k in range(dims.n_knots):
                lam = vm.force[leg, k]
                for row in range(3):
                    p.add_linear((lam, jt[row]), LE, float(tmax[row]),
                                 name=f"torque_hi[{leg},{k},{row}]")
                    p.add_linear((lam, -jt[row]), LE, float(tmax[row]),
                                 name=f"torque_lo[{leg},{k},{row}]")
        self.vmap.stance_and = zand
        self.vmap.edge_weight = rho

    def _margin_rows(self, leg, knot, reg, gate_terms, gate_const, tag):
        """Facet rows D (force - margin * normal) <= 0 under a gate."""
        p, vm = self.problem, self.vmap
        D = reg.cone_facets
        dn = D @ reg.normal
        for row in range(D.shape[0]):
            terms = {int(vm.force[leg, knot, a]): float(D[row, a])
                     for a in range(3)}
            terms[int(vm.margin[leg, knot])] = -float(dn[row])
            p.add_gated(dict(gate_terms), terms, LE, 0.0,
                        gate_const=gate_const, name=f"{tag}.{row}")

    def add_objective(self):
        """Running cost on accelerations, forces, decomposition magnitude,
        slot values and (negatively) margins; terminal goal cost."""
        p, dims, vm = self.problem, self.dims, self.vmap
        w = self.task.weights
        dt = dims.dt
        fs = self.force_scale
        for k in range(dims.n_knots):
            for a in range(3):
                if w.com_accel[a] > 0:
                    terms = {int(vm.com_vel[k, a]): 1.0 / dt}
                    if k > 0:
                        terms[int(vm.com_vel[k - 1, a])] = -1.0 / dt
                    const = 0.0 if k else -float(self.task.v_init[a]) / dt
                    p.obj_add_square(float(w.com_accel[a]), terms, const)
                for leg in range(dims.n_legs):
                    if w.force[a] > 0:
                        # weight applies to the physical force in Newtons
                        p.obj_add_square(float(w.force[a]) * fs * fs,
                                         {int(vm.force[leg, k, a]): 1.0})
                if self.task.angular_dynamics and w.momentum_rate[a] > 0:
                    terms = {int(vm.ang_mom[k, a]): 1.0 / dt}
                    if k > 0:
                        terms[int(vm.ang_mom[k - 1, a])] = -1.0 / dt
                    p.obj_add_square(float(w.momentum_rate[a]), terms)
        if self.task.angular_dynamics and w.decomposition > 0:
            ulin = {}
            for arr in (vm.u_plus.ravel(), vm.u_minus.ravel()):
                for v in arr:
                    ulin[int(v)] = w.decomposition * fs
            p.obj_add_linear(ulin)
        if w.time > 0:
            p.obj_add_linear({int(t): w.time for t in vm.slot_value})
        if w.margin > 0:
            # margin reward on the physical pullback in Newtons
            p.obj_add_linear({int(a): -w.margin * fs
                              for a in vm.margin.ravel()})
        for a in range(3):
            if w.goal[a] > 0:
                p.obj_add_square(float(w.goal[a]),
                                 {int(vm.com[dims.n_knots - 1, a]): 1.0},
                                 const=-float(self.task.goal[a]))

    # ------------------------------------------------------------------

    def _apply_gait_pattern(self):
        fixings = gait_fixings(self.dims, self.task.gait)
        for i, j in np.ndindex(*self.vmap.trans.shape):
            var = int(self.vmap.trans[i, j])
            if (i, j) in fixings:
                self.problem.fix_var(var, 1.0)
            elif fixings:
                self.problem.fix_var(var, 0.0)

    def binary_census(self) -> dict:
        """Closed-form binary counts by family."""
        d = self.dims
        return {
            "gait": d.n_contacts * d.n_slots,
            "region_reach": d.n_contacts * (d.n_regions
                                            + 2 * d.n_segments),
            "contact_forces": d.n_contacts * d.n_slots * d.n_regions,
            "total": d.n_contacts * (d.n_slots + d.n_regions
                                     + 2 * d.n_segments)
            + d.n_contacts * d.n_slots * d.n_regions,
        }


def _hull_chain(nodes, upper: bool):
    """Monotone-chain hull (upper or lower) of x-sorted 2D nodes."""
    pts = [tuple(pt) for pt in nodes]
    chain = []
    sign = -1.0 if upper else 1.0
    for pt in pts:
        while len(chain) >= 2:
            (x0, y0), (x1, y1) = chain[-2], chain[-1]
            cross = (x1 - x0) * (pt[1] - y0) - (y1 - y0) * (pt[0] - x0)
            if sign * cross <= 0.0:
                chain.pop()
            else:
                break
        chain.append(pt)
    return chain


def gait_fixings(dims: PlanDims, gait) -> set:
    """Set of (contact, slot) pairs forced to 1 by a fixed gait pattern.

    An empty set means the gait is free. Walk sends one leg per slot in
    contact order; trot pairs diagonal legs (quadrupeds only, leg order
    LF RF LH RH: pairs (0,3) and (1,2)).
    """
    if gait in (None, "free"):
        return set()
    if isinstance(gait, str) and gait == "walk":
        if dims.n_slots < dims.n_contacts:
            raise BuildError("walk needs at least one slot per contact")
        return {(i, i) for i in range(dims.n_contacts)}
    if isinstance(gait, str) and gait == "trot":
        if dims.n_legs != 4:
            raise BuildError("trot pattern is defined for quadrupeds")
        pairs = {0: 0, 3: 0, 1: 1, 2: 1}
        out = set()
        for i in range(dims.n_contacts):
            cyc, leg = divmod(i, 4)
            slot = 2 * cyc + pairs[leg]
            if slot >= dims.n_slots:
                raise BuildError("trot needs two slots per cycle")
            out.add((i, slot))
        return out
    if isinstance(gait, str):
        raise SchemaError(f"unknown gait {gait!r}")
    out = set()
    for entry in gait:
        i, j = int(entry[0]), int(entry[1])
        if not (0 <= i < dims.n_contacts and 0 <= j < dims.n_slots):
            raise SchemaError(f"gait entry {entry} out of range")
        out.add((i, j))
    if len({i for i, _ in out}) != dims.n_contacts:
        raise SchemaError("explicit gait must place every contact once")
    return out
