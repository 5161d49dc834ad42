"""Shared instance builders for the test suite."""

import numpy as np

from micplan.formulation import Formulation, PlanDims, TaskSpec, Weights
from micplan.robot import load_robot
from micplan.terrain import load_terrain


def biped_robot(mass=30.0, reach=0.3, z0=0.35):
    J = [[0.25, 0.0, 0.02], [0.0, 0.25, -0.02], [0.03, 0.0, 0.3]]
    doc = {
        "mass": mass,
        "d_lim": reach,
        "legs": [
            {"name": "L", "L": 0.12, "phi": np.pi / 2, "J_nominal": J,
             "tau_max": [90.0, 90.0, 90.0]},
            {"name": "R", "L": 0.12, "phi": -np.pi / 2, "J_nominal": J,
             "tau_max": [90.0, 90.0, 90.0]},
        ],
        "com_box": {"min": [-0.25, -0.25, 0.15], "max": [0.25, 0.25, 0.6]},
        "initial_feet": [[0.0, 0.12, 0.0], [0.0, -0.12, 0.0]],
        "initial_com": [0.0, 0.0, z0],
    }
    return load_robot(doc)


def two_region_terrain(step_z=0.0, mu=0.6, seam=0.42, n_edges=4):
    doc = {
        "gravity": [0.0, 0.0, -9.81],
        "regions": [
            {"id": 0, "mu": mu, "n_edges": n_edges,
             "vertices": [[-0.6, -0.5, 0.0], [seam - 0.02, -0.5, 0.0],
                          [seam - 0.02, 0.5, 0.0], [-0.6, 0.5, 0.0]]},
            {"id": 1, "mu": mu, "n_edges": n_edges,
             "vertices": [[seam, -0.5, step_z], [1.4, -0.5, step_z],
                          [1.4, 0.5, step_z], [seam, 0.5, step_z]]},
        ],
    }
    return load_terrain(doc)


def tiny_task(goal_x=0.15, seed=None, angular=True, weights=None,
              gait="free"):
    """The smallest sensible biped instance: 2 contacts, 2 slots of 2
    knots, 2 regions, 1 trig segment."""
    rng = np.random.default_rng(seed)
    w = {"Qv": 0.5, "QF": 1e-4, "qu": 1e-4, "qt": 0.5, "qalpha": 0.01,
         "Qg": 100.0, "Qk": 0.1}
    if weights:
        w.update(weights)
    if seed is not None:
        for key, lo, hi in (("Qv", 0.2, 1.0), ("qt", 0.1, 1.0),
                            ("qalpha", 0.003, 0.03)):
            w[key] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    dims = PlanDims(n_legs=2, n_contacts=2, n_slots=2, knots_per_slot=2,
                    n_regions=2, n_segments=1, dt=0.1)
    return TaskSpec(goal=np.array([goal_x, 0.0, 0.35]), dims=dims,
                    weights=Weights.from_dict(w), gait=gait,
                    yaw_range=(-0.3, 0.3), angular_dynamics=angular)


def tiny_instance(seed=None, goal_x=None, step_z=None, **task_kw):
    rng = np.random.default_rng(seed)
    gx = goal_x if goal_x is not None else \
        (0.15 if seed is None else float(rng.uniform(0.05, 0.3)))
    sz = step_z if step_z is not None else \
        (0.0 if seed is None else float(rng.uniform(0.0, 0.04)))
    mu = 0.6 if seed is None else float(rng.uniform(0.45, 0.9))
    scene = two_region_terrain(step_z=sz, mu=mu)
    robot = biped_robot()
    task = tiny_task(goal_x=gx, seed=seed, **task_kw)
    return scene, robot, Formulation(scene, robot, task)
