"""Robot parameters and piecewise-linear trigonometry tables.

The planner never runs kinematics; everything it needs from the robot is
collected here: mass, trunk-to-hip polar offsets, the reach square
half-side, the CoM bounding box relative to the foot centroid, nominal
operational-space foot Jacobians for the quasi-static torque rows, torque
limits, and the initial stance. Leg order is the file order; for
quadrupeds the convention is LF, RF, LH, RH.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

DEFAULT_YAW_RANGE = (-np.pi / 2.0, np.pi / 2.0)
DEFAULT_TRIG_SEGMENTS = 5


@dataclass(frozen=True)
class RobotModel:
    mass: float
    n_legs: int
    leg_names: list[str]
    leg_radius: np.ndarray        # (n_legs,) trunk-to-hip distance L_i
    leg_angle: np.ndarray         # (n_legs,) hip bearing phi_i in trunk frame
    reach: float                  # half-side of the inscribed reach square
    com_box_lo: np.ndarray        # (3,) lower offset of CoM - foot centroid
    com_box_hi: np.ndarray
    nominal_jacobian: np.ndarray  # (n_legs, 3, 3)
    torque_limit: np.ndarray      # (n_legs, 3)
    initial_feet: np.ndarray      # (n_legs, 3)
    initial_com: np.ndarray       # (3,)

    def hip_offset_xy(self, leg: int, cos_yaw: float, sin_yaw: float):
        """Horizontal trunk-to-hip offset at a given trunk yaw."""
        L = self.leg_radius[leg]
        phi = self.leg_angle[leg]
        c = cos_yaw * np.cos(phi) - sin_yaw * np.sin(phi)
        s = sin_yaw * np.cos(phi) + cos_yaw * np.sin(phi)
        return np.array([L * c, L * s])


def load_robot(document) -> RobotModel:
    """Parse and validate a robot document (dict, JSON text, or path)."""
    doc = _as_dict(document)
    try:
        mass = float(doc["mass"])
        legs = doc["legs"]
        reach = float(doc["d_lim"])
        box = doc["com_box"]
        feet = np.asarray(doc["initial_feet"], dtype=float)
        com = np.asarray(doc["initial_com"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"robot document missing field: {exc}") from exc
    if mass <= 0.0:
        raise SchemaError(f"mass must be positive, got {mass}")
    if reach <= 0.0:
        raise SchemaError(f"d_lim must be positive, got {reach}")
    if not legs:
        raise SchemaError("robot needs at least one leg")

    names, radius, angle, jac, tau = [], [], [], [], []
    for k, leg in enumerate(legs):
        try:
            names.append(str(leg.get("name", f"leg{k}")))
            radius.append(float(leg["L"]))
            angle.append(float(leg["phi"]))
            jac.append(np.asarray(leg["J_nominal"], dtype=float))
            tau.append(np.asarray(leg["tau_max"], dtype=float))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"leg {k} missing field: {exc}") from exc
        if jac[-1].shape != (3, 3):
            raise SchemaError(f"leg {k}: J_nominal must be 3x3")
        if abs(np.linalg.det(jac[-1])) <= 1e-12:
            raise SchemaError(f"leg {k}: nominal Jacobian is singular")
        if tau[-1].shape != (3,) or np.any(tau[-1] <= 0.0):
            raise SchemaError(f"leg {k}: tau_max must be 3 positive entries")

    lo = np.asarray(box["min"], dtype=float)
    hi = np.asarray(box["max"], dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
        raise SchemaError("com_box min must be componentwise below max")
    n_legs = len(legs)
    if feet.shape != (n_legs, 3):
        raise SchemaError(f"initial_feet must be {n_legs} 3D points")
    if com.shape != (3,):
        raise SchemaError("initial_com must be a 3-vector")

    model = RobotModel(mass=mass, n_legs=n_legs, leg_names=names,
                       leg_radius=np.asarray(radius),
                       leg_angle=np.asarray(angle), reach=reach,
                       com_box_lo=lo, com_box_hi=hi,
                       nominal_jacobian=np.asarray(jac),
                       torque_limit=np.asarray(tau),
                       initial_feet=feet, initial_com=com)
    for arr in (model.leg_radius, model.leg_angle, model.com_box_lo,
                model.com_box_hi, model.nominal_jacobian,
                model.torque_limit, model.initial_feet, model.initial_com):
        arr.setflags(write=False)
    return model


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


@dataclass(frozen=True)
class TrigTable:
    """Chord interpolants of sin and cos over an equal-width segment grid.

    Each segment's line interpolates the true function at both segment
    endpoints, so adjacent pieces agree at the shared boundary and the
    worst-case error is bounded by h^2/8 for segment width h.
    """

    n_segments: int
    sin_bounds: np.ndarray     # (n_segments + 1,)
    cos_bounds: np.ndarray
    sin_slope: np.ndarray      # (n_segments,)
    sin_icept: np.ndarray
    cos_slope: np.ndarray
    cos_icept: np.ndarray

    @property
    def lo(self) -> float:
        return float(self.sin_bounds[0])

    @property
    def hi(self) -> float:
        return float(self.sin_bounds[-1])

    def segment_of(self, theta: float) -> int:
        """Index of the segment containing theta.

        Intervals are half-open [b_k, b_{k+1}) with the last one closed,
        mirroring the one-hot segment selection in the planner.
        """
        b = self.sin_bounds
        if theta < b[0] or theta > b[-1]:
            raise ValueError(
                f"theta={theta:.6g} outside table range [{b[0]:.6g}, "
                f"{b[-1]:.6g}]")
        k = int(np.searchsorted(b, theta, side="right") - 1)
        return min(k, self.n_segments - 1)

    def sin_value(self, theta: float) -> float:
        k = self.segment_of(theta)
        return float(self.sin_slope[k] * theta + self.sin_icept[k])

    def cos_value(self, theta: float) -> float:
        k = self.segment_of(theta)
        return float(self.cos_slope[k] * theta + self.cos_icept[k])


def build_trig_table(n_segments: int = DEFAULT_TRIG_SEGMENTS,
                     yaw_range=DEFAULT_YAW_RANGE) -> TrigTable:
    """Equal-width chord tables for sin and cos over yaw_range."""
    lo, hi = float(yaw_range[0]), float(yaw_range[1])
    if n_segments < 1:
        raise ValueError(f"need at least one segment, got {n_segments}")
    if not lo < hi:
        raise ValueError(f"empty yaw range [{lo}, {hi}]")
    bounds = np.linspace(lo, hi, n_segments + 1)
    sv = np.sin(bounds)
    cv = np.cos(bounds)
    h = np.diff(bounds)
    sin_slope = np.diff(sv) / h
    cos_slope = np.diff(cv) / h
    sin_icept = sv[:-1] - sin_slope * bounds[:-1]
    cos_icept = cv[:-1] - cos_slope * bounds[:-1]
    table = TrigTable(n_segments=n_segments, sin_bounds=bounds,
                      cos_bounds=bounds.copy(), sin_slope=sin_slope,
                      sin_icept=sin_icept, cos_slope=cos_slope,
                      cos_icept=cos_icept)
    _check_table(table)
    return table


def _check_table(t: TrigTable):
    b = t.sin_bounds
    if np.any(np.diff(b) <= 0):
        raise ValueError("segment boundaries must be strictly increasing")
    # interpolation nodes sit on the true curves
    for k in range(t.n_segments):
        for th, f, slope, icept in ((b[k], np.sin, t.sin_slope, t.sin_icept),
                                    (b[k + 1], np.sin, t.sin_slope,
                                     t.sin_icept),
                                    (b[k], np.cos, t.cos_slope, t.cos_icept),
                                    (b[k + 1], np.cos, t.cos_slope,
                                     t.cos_icept)):
            if abs(slope[k] * th + icept[k] - f(th)) > 1e-12:
                raise ValueError("trig table does not interpolate its nodes")
