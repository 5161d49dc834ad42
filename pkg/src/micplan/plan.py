"""Locomotion plans: extraction, validation, classification, export.

The validator re-implements every constraint family from the model
definition rather than reusing the formulation's constraint emitters, so
a plan that passes here has been checked through an independent code
path. Friction margins are compared against the exact polyhedral margin
from the terrain module.

Knot k carries time (k+1)*dt; the state before the first knot is the
initial stance from the robot file. Forces and margins are stored in
Newtons; the bilinear-decomposition tensors u+ / u- stay in the
optimizer's units, i.e. they bound squares of (p - r) +- force/W where
W = force_scale is the robot weight (recorded in the plan).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .formulation import _CROSS_PRODUCTS, PlanDims, VariableMap
from .robot import RobotModel, build_trig_table
from .terrain import TerrainScene, exact_margin

PLAN_VERSION = 1
INT_TOL = 1e-6


@dataclass
class ContactEvent:
    contact: int
    leg: int
    slot: int
    region: int
    position: np.ndarray
    yaw: float
    sin_val: float
    cos_val: float


@dataclass
class SwingPath:
    contact: int
    leg: int
    t_liftoff: float
    t_touchdown: float
    samples: np.ndarray   # (n, 4): time, x, y, z


@dataclass
class LocomotionPlan:
    dims: dict
    dt: float
    n_legs: int
    force_scale: float
    times: np.ndarray            # (N,)
    com: np.ndarray              # (N, 3)
    com_vel: np.ndarray
    ang_mom: np.ndarray | None
    foot: np.ndarray             # (n_legs, N, 3)
    force: np.ndarray            # (n_legs, N, 3), Newtons
    margin: np.ndarray           # (n_legs, N), Newtons
    u_plus: np.ndarray | None    # (n_legs, N, 6)
    u_minus: np.ndarray | None
    edge_weight: np.ndarray      # (N_f, N_e), Newtons
    schedule: list[ContactEvent]
    slot_values: np.ndarray      # (N_f,)
    gait_labels: list[str]
    initial_com: np.ndarray
    initial_feet: np.ndarray
    v_init: np.ndarray
    goal: np.ndarray
    yaw_range: tuple
    objective: float = np.nan
    gap: float = np.nan
    status: str = ""
    joint_torque: np.ndarray | None = None   # (n_legs, N, 3), N*m
    swing_paths: list[SwingPath] = field(default_factory=list)

    @property
    def n_knots(self) -> int:
        return len(self.times)

    def normalized_margin(self) -> np.ndarray:
        """alpha / |force| per leg-knot with 0/0 -> 0."""
        mag = np.linalg.norm(self.force, axis=2)
        out = np.zeros_like(self.margin)
        nz = mag > 1e-12
        out[nz] = self.margin[nz] / mag[nz]
        return out

    def stance_region(self, scene: TerrainScene) -> np.ndarray:
        """Region id per (leg, knot); -1 marks swing knots."""
        nl, N = self.foot.shape[0], self.n_knots
        nk = self.dims["N_k"]
        out = np.full((nl, N), -2, dtype=int)
        for leg in range(nl):
            init = scene.region_containing(self.initial_feet[leg])
            events = sorted((ev for ev in self.schedule if ev.leg == leg),
                            key=lambda ev: ev.slot)
            for k in range(N):
                j = k // nk
                reg = init.id if init is not None else -2
                for ev in events:
                    if ev.slot < j or (ev.slot == j and k == j * nk
                                       + nk - 1):
                        reg = ev.region
                    elif ev.slot == j:
                        reg = -1   # swing knot of the transition slot
                out[leg, k] = reg
        return out


def extract(solution, vmap: VariableMap, dims: PlanDims,
            robot: RobotModel | None = None, task=None) -> LocomotionPlan:
    """Decode a solver assignment into a time-indexed plan."""
    x = solution.x if hasattr(solution, "x") else np.asarray(solution)
    nf, nt = dims.n_contacts, dims.n_slots
    fs = vmap.force_scale

    trans = x[vmap.trans]
    region = x[vmap.region]
    for name, arr in (("transition", trans), ("region", region)):
        frac = np.abs(arr - np.round(arr))
        if frac.max() > INT_TOL:
            raise SchemaError(
                f"{name} matrix entry {arr.ravel()[int(np.argmax(frac))]:.4f}"
                " is not integral")
    trans = np.round(trans).astype(int)
    region = np.round(region).astype(int)

    schedule = []
    for i in range(nf):
        slots = np.flatnonzero(trans[i])
        regs = np.flatnonzero(region[i])
        if len(slots) != 1 or len(regs) != 1:
            raise SchemaError(f"contact {i} must pick exactly one slot "
                              "and region")
        schedule.append(ContactEvent(
            contact=i, leg=i % dims.n_legs, slot=int(slots[0]),
            region=int(regs[0]), position=x[vmap.contact_pos[i]].copy(),
            yaw=float(x[vmap.contact_yaw[i]]),
            sin_val=float(x[vmap.sin_val[i]]),
            cos_val=float(x[vmap.cos_val[i]])))

    N = dims.n_knots
    times = dims.dt * np.arange(1, N + 1)
    has_ang = vmap.ang_mom.size > 0
    plan = LocomotionPlan(
        dims={"n_legs": dims.n_legs, "N_f": nf, "N_t": nt,
              "N_k": dims.knots_per_slot, "N_r": dims.n_regions,
              "N_s": dims.n_segments, "dt": dims.dt},
        dt=dims.dt, n_legs=dims.n_legs, force_scale=fs, times=times,
        com=x[vmap.com], com_vel=x[vmap.com_vel],
        ang_mom=x[vmap.ang_mom] if has_ang else None,
        foot=x[vmap.foot], force=fs * x[vmap.force],
        margin=fs * x[vmap.margin],
        u_plus=x[vmap.u_plus] if has_ang else None,
        u_minus=x[vmap.u_minus] if has_ang else None,
        edge_weight=fs * x[vmap.edge_weight],
        schedule=schedule, slot_values=x[vmap.slot_value].copy(),
        gait_labels=classify_gait(schedule, dims),
        initial_com=(robot.initial_com.copy() if robot is not None
                     else np.zeros(3)),
        initial_feet=(robot.initial_feet.copy() if robot is not None
                      else np.zeros((dims.n_legs, 3))),
        v_init=(np.asarray(task.v_init, float) if task is not None
                else np.zeros(3)),
        goal=(np.asarray(task.goal, float) if task is not None
              else np.zeros(3)),
        yaw_range=(tuple(task.yaw_range) if task is not None
                   else (-np.pi / 2, np.pi / 2)),
        objective=getattr(solution, "objective", np.nan),
        gap=getattr(solution, "gap", np.nan),
        status=getattr(solution, "status", ""))
    if robot is not None:
        tq = np.einsum("lab,lka->lkb", robot.nominal_jacobian, plan.force)
        plan.joint_torque = tq
    return plan


def classify_gait(schedule, dims: PlanDims) -> list[str]:
    """Per-slot gait labels derived from each cycle's slot pattern.

    A cycle is a walk when its transitions occupy n_legs distinct slots,
    a trot when diagonal leg pairs (LF+RH, RF+LH) share slots, anything
    else is other.
    """
    nl = dims.n_legs
    labels = ["other"] * dims.n_slots
    slot_of = {ev.contact: ev.slot for ev in schedule}
    spans = []
    for cyc in range(dims.n_cycles):
        contacts = list(range(cyc * nl, (cyc + 1) * nl))
        slots = [slot_of[i] for i in contacts]
        if len(set(slots)) == nl:
            label = "walk"
        elif nl == 4 and slot_of[contacts[0]] == slot_of[contacts[3]] \
                and slot_of[contacts[1]] == slot_of[contacts[2]] \
                and len(set(slots)) == 2:
            label = "trot"
        else:
            label = "other"
        spans.append((min(slots), max(slots), label))
    current = spans[0][2] if spans else "other"
    for j in range(dims.n_slots):
        for lo, hi, lab in spans:
            if lo <= j <= hi:
                current = lab
                break
        labels[j] = current
    return labels


# ---------------------------------------------------------------------------
# swing interpolation
# ---------------------------------------------------------------------------

def interpolate_swings(plan: LocomotionPlan, apex_height: float = 0.08,
                       samples: int = 21) -> LocomotionPlan:
    """Attach dense swing arcs between liftoff and touchdown.

    The arc is a single smooth polynomial segment: horizontal components
    follow a quintic ease with zero end velocities, the vertical one
    adds a quartic bump peaking apex_height above the chord midpoint.
    Knot-level tensors are left untouched, so validation reports are
    identical before and after interpolation.
    """
    if apex_height < 0:
        raise ValueError(f"apex height must be >= 0, got {apex_height}")
    nk = plan.dims["N_k"]
    dt = plan.dt
    paths = []
    last_pos = {leg: plan.initial_feet[leg].copy()
                for leg in range(plan.n_legs)}
    for ev in sorted(plan.schedule, key=lambda e: e.slot):
        p0 = last_pos[ev.leg]
        p1 = ev.position
        t0 = ev.slot * nk * dt
        t1 = (ev.slot + 1) * nk * dt
        tt = np.linspace(0.0, 1.0, samples)
        ease = 10 * tt ** 3 - 15 * tt ** 4 + 6 * tt ** 5
        bump = 16.0 * tt ** 2 * (1.0 - tt) ** 2
        pts = p0[None, :] + ease[:, None] * (p1 - p0)[None, :]
        pts[:, 2] += apex_height * bump
        out = np.column_stack([t0 + (t1 - t0) * tt, pts])
        paths.append(SwingPath(contact=ev.contact, leg=ev.leg,
                               t_liftoff=t0, t_touchdown=t1, samples=out))
        last_pos[ev.leg] = p1
    plan.swing_paths = paths
    return plan


# ---------------------------------------------------------------------------
# independent validation
# ---------------------------------------------------------------------------

DEFAULT_TOL = 1e-6


@dataclass
class FamilyReport:
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


@dataclass
class ValidationReport:
    families: dict
    info: dict

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families.values())

    def worst(self):
        return max(self.families.items(), key=lambda kv: kv[1].residual
                   / max(kv[1].tolerance, 1e-300))

    def summary(self) -> str:
        lines = []
        for name in sorted(self.families):
            fam = self.families[name]
            mark = "ok " if fam.passed else "FAIL"
            lines.append(f"  [{mark}] {name:18s} residual {fam.residual:.3e}"
                         f" (tol {fam.tolerance:g}) {fam.detail}")
        return "\n".join(lines)


def validate(plan: LocomotionPlan, scene: TerrainScene, robot: RobotModel,
             tolerances: dict | None = None) -> ValidationReport:
    """Re-check every model constraint family from the plan tensors."""
    tol = dict(tolerances or {})

    def T(name):
        return tol.get(name, tol.get("default", DEFAULT_TOL))

    fam: dict[str, FamilyReport] = {}
    info: dict = {}
    dims = plan.dims
    nl, N, nk = plan.n_legs, plan.n_knots, dims["N_k"]
    nt = dims["N_t"]
    dt = plan.dt
    fs = plan.force_scale
    g = scene.gravity
    gn = float(np.linalg.norm(g))

    r, v = plan.com, plan.com_vel
    feet, force = plan.foot, plan.force
    r_prev = np.vstack([plan.initial_com, r[:-1]])
    v_prev = np.vstack([plan.v_init, v[:-1]])

    # CoM integration and linear momentum (per-axis worst residual)
    res = np.abs(r - r_prev - dt * v)
    fam["integration"] = FamilyReport(float(res.max()), T("integration"))
    accel = (v - v_prev) / dt
    res = np.abs(accel - g[None, :] - force.sum(axis=0) / robot.mass)
    fam["linear_momentum"] = FamilyReport(float(res.max()),
                                          T("linear_momentum"))

    # angular momentum through the decomposition substitution
    if plan.ang_mom is not None:
        L = plan.ang_mom
        L_prev = np.vstack([np.zeros(3), L[:-1]])
        worst = 0.0
        cross_gap = 0.0
        neg = 0.0
        tightness = np.zeros(N)
        for k in range(N):
            subst = np.zeros(3)
            exact = np.zeros(3)
            for leg in range(nl):
                prod = (plan.u_plus[leg, k] - plan.u_minus[leg, k]) / 4.0
                subst += fs * np.array([prod[0] - prod[1],
                                        prod[2] - prod[3],
                                        prod[4] - prod[5]])
                a = feet[leg, k] - r[k]
                exact += np.cross(a, force[leg, k])
                b = force[leg, k] / fs
                for q, (ca, cb) in enumerate(_CROSS_PRODUCTS):
                    sp = plan.u_plus[leg, k, q] - (a[ca] + b[cb]) ** 2
                    sm = plan.u_minus[leg, k, q] - (a[ca] - b[cb]) ** 2
                    neg = min(neg, sp, sm)
                    tightness[k] = max(tightness[k], sp, sm)
            worst = max(worst, np.abs((L[k] - L_prev[k]) / dt
                                      - subst).max())
            cross_gap = max(cross_gap, np.abs((L[k] - L_prev[k]) / dt
                                              - exact).max())
        fam["angular_momentum"] = FamilyReport(worst,
                                               T("angular_momentum"))
        fam["decomposition"] = FamilyReport(max(0.0, -neg),
                                            T("decomposition"),
                                            "epigraph undershoot")
        info["torque_substitution_gap"] = cross_gap
        info["tightness_by_knot"] = tightness

    # schedule sanity: each contact once, ordering along leg chains
    slot_of = {ev.contact: ev.slot for ev in plan.schedule}
    res = 0.0
    if sorted(slot_of) != list(range(dims["N_f"])):
        res = 1.0
    for i in range(nl, dims["N_f"]):
        if slot_of[i] <= slot_of[i - nl]:
            res = max(res, 1.0)
    fam["gait_order"] = FamilyReport(res, 0.5, "schedule one-hot/order")

    # touchdown placement and stationarity
    td_res = 0.0
    for ev in plan.schedule:
        td = ev.slot * nk + nk - 1
        td_res = max(td_res, float(np.abs(feet[ev.leg, td]
                                          - ev.position).max()))
    fam["touchdown"] = FamilyReport(td_res, T("touchdown"))
    hold = 0.0
    for leg in range(nl):
        slots = {ev.slot for ev in plan.schedule if ev.leg == leg}
        prev = plan.initial_feet[leg]
        for j in range(nt):
            base = j * nk
            if j not in slots:
                for k in range(base, base + nk):
                    hold = max(hold, float(np.abs(feet[leg, k]
                                                  - prev).max()))
            prev = feet[leg, base + nk - 1]
    fam["stationarity"] = FamilyReport(hold, T("stationarity"))

    # landing points inside their regions
    res = 0.0
    for ev in plan.schedule:
        reg = scene.region(ev.region)
        res = max(res, float(np.max(reg.halfspaces_A @ ev.position
                                    - reg.halfspaces_b)))
    fam["region"] = FamilyReport(res, T("region"))

    # reach square with the validator's own trig table
    table = build_trig_table(dims["N_s"], plan.yaw_range)
    res = 0.0
    trig_res = 0.0
    for ev in plan.schedule:
        trig_res = max(trig_res,
                       abs(ev.sin_val - table.sin_value(ev.yaw)),
                       abs(ev.cos_val - table.cos_value(ev.yaw)))
        td = ev.slot * nk + nk - 1
        hip = r[td, :2] + robot.hip_offset_xy(ev.leg, ev.cos_val,
                                              ev.sin_val)
        res = max(res, float(np.abs(ev.position[:2] - hip).max()
                             - robot.reach))
    fam["trig_values"] = FamilyReport(trig_res, T("trig_values"))
    fam["reach"] = FamilyReport(max(0.0, res), T("reach"))

    # CoM bounding box
    centroid = feet.mean(axis=0)
    res = np.maximum(robot.com_box_lo[None, :] - (r - centroid),
                     (r - centroid) - robot.com_box_hi[None, :])
    fam["com_box"] = FamilyReport(float(res.max()), T("com_box"))

    # swing knots force-free; stance knots inside their cones with the
    # claimed pullback; planner margin below the exact oracle margin
    regions = plan.stance_region(scene)
    swing_res = 0.0
    cone_res = 0.0
    margin_gap = 0.0
    for leg in range(nl):
        for k in range(N):
            lam = force[leg, k]
            if regions[leg, k] == -1:
                swing_res = max(swing_res, float(np.abs(lam).max()) / fs)
                continue
            if regions[leg, k] < 0:
                continue
            reg = scene.region(regions[leg, k])
            pull = lam - plan.margin[leg, k] * reg.normal
            cone_res = max(cone_res,
                           float(np.max(reg.cone_facets @ pull)) / fs)
            margin_gap = max(margin_gap,
                             (plan.margin[leg, k]
                              - exact_margin(lam, reg)) / fs)
    fam["swing_force"] = FamilyReport(swing_res, T("swing_force"))
    fam["cones"] = FamilyReport(max(0.0, cone_res), T("cones"),
                                "pullback facet rows, weight units")
    fam["margin_vs_exact"] = FamilyReport(max(0.0, margin_gap),
                                          T("margin_vs_exact"))

    # quasi-static torque caps, in weight units
    res = 0.0
    for leg in range(nl):
        tq = force[leg] @ robot.nominal_jacobian[leg]
        res = max(res, float((np.abs(tq)
                              - robot.torque_limit[leg]).max()) / fs)
    fam["torque"] = FamilyReport(max(0.0, res), T("torque"))

    return ValidationReport(families=fam, info=info)


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def export(plan: LocomotionPlan, directory) -> list[Path]:
    """Write the plan document and per-signal CSV tables."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    doc = {
        "version": PLAN_VERSION,
        "dims": plan.dims,
        "force_scale": plan.force_scale,
        "objective": plan.objective,
        "gap": plan.gap,
        "status": plan.status,
        "goal": plan.goal.tolist(),
        "yaw_range": list(plan.yaw_range),
        "initial_com": plan.initial_com.tolist(),
        "initial_feet": plan.initial_feet.tolist(),
        "v_init": plan.v_init.tolist(),
        "times": plan.times.tolist(),
        "com": plan.com.tolist(),
        "com_vel": plan.com_vel.tolist(),
        "ang_mom": None if plan.ang_mom is None else plan.ang_mom.tolist(),
        "foot": plan.foot.tolist(),
        "force": plan.force.tolist(),
        "margin": plan.margin.tolist(),
        "u_plus": None if plan.u_plus is None else plan.u_plus.tolist(),
        "u_minus": None if plan.u_minus is None else plan.u_minus.tolist(),
        "edge_weight": plan.edge_weight.tolist(),
        "slot_values": plan.slot_values.tolist(),
        "gait_labels": plan.gait_labels,
        "schedule": [{
            "contact": ev.contact, "leg": ev.leg, "slot": ev.slot,
            "region": ev.region, "position": ev.position.tolist(),
            "yaw": ev.yaw, "sin": ev.sin_val, "cos": ev.cos_val,
        } for ev in plan.schedule],
    }
    plan_path = directory / "plan.json"
    plan_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    written.append(plan_path)

    def table(name, header, rows):
        path = directory / name
        lines = [header] + [",".join(f"{val:.12g}" for val in row)
                            for row in rows]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    legs = range(plan.n_legs)
    norm = plan.normalized_margin()
    table("com.csv",
          "time,x,y,z,vx,vy,vz",
          [np.concatenate([[t], plan.com[k], plan.com_vel[k]])
           for k, t in enumerate(plan.times)])
    table("forces.csv",
          "time," + ",".join(f"f{l}_{ax}" for l in legs for ax in "xyz"),
          [np.concatenate([[t], plan.force[:, k].ravel()])
           for k, t in enumerate(plan.times)])
    table("alpha.csv",
          "time," + ",".join(f"alpha{l}" for l in legs) + ","
          + ",".join(f"alpha{l}_norm" for l in legs),
          [np.concatenate([[t], plan.margin[:, k], norm[:, k]])
           for k, t in enumerate(plan.times)])
    if plan.joint_torque is not None:
        table("torque.csv",
              "time," + ",".join(f"tau{l}_{j}" for l in legs
                                 for j in range(3)),
              [np.concatenate([[t], plan.joint_torque[:, k].ravel()])
               for k, t in enumerate(plan.times)])
    return written


def load_plan(document) -> LocomotionPlan:
    """Round-trip import of an exported plan document."""
    if isinstance(document, (str, Path)):
        text = Path(document).read_text() \
            if not str(document).lstrip().startswith("{") else str(document)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid plan JSON: {exc}") from exc
    else:
        doc = document
    version = doc.get("version")
    if version != PLAN_VERSION:
        raise SchemaError(f"unknown plan version {version!r} "
                          f"(expected {PLAN_VERSION})")
    schedule = [ContactEvent(contact=e["contact"], leg=e["leg"],
                             slot=e["slot"], region=e["region"],
                             position=np.asarray(e["position"]),
                             yaw=e["yaw"], sin_val=e["sin"],
                             cos_val=e["cos"])
                for e in doc["schedule"]]

    def arr(key):
        return None if doc[key] is None else np.asarray(doc[key])

    return LocomotionPlan(
        dims=doc["dims"], dt=doc["dims"]["dt"],
        n_legs=doc["dims"]["n_legs"], force_scale=doc["force_scale"],
        times=np.asarray(doc["times"]), com=np.asarray(doc["com"]),
        com_vel=np.asarray(doc["com_vel"]), ang_mom=arr("ang_mom"),
        foot=np.asarray(doc["foot"]), force=np.asarray(doc["force"]),
        margin=np.asarray(doc["margin"]), u_plus=arr("u_plus"),
        u_minus=arr("u_minus"), edge_weight=np.asarray(doc["edge_weight"]),
        schedule=schedule, slot_values=np.asarray(doc["slot_values"]),
        gait_labels=list(doc["gait_labels"]),
        initial_com=np.asarray(doc["initial_com"]),
        initial_feet=np.asarray(doc["initial_feet"]),
        v_init=np.asarray(doc["v_init"]), goal=np.asarray(doc["goal"]),
        yaw_range=tuple(doc["yaw_range"]), objective=doc["objective"],
        gap=doc["gap"], status=doc["status"])
