"""micplan: mixed-integer convex contact and motion planning.

Plans contact locations, gait transitions and centroidal motion for
multi-legged robots over convex terrain segmentations, solves the
resulting mixed-integer QCQP to certified global optimality with a
bundled branch-and-bound / interior-point stack, validates the plans
against an independent re-implementation of every constraint, and ships
a companion whole-body tracking QP.
"""

__version__ = "0.1.0"

from .errors import BuildError, SchemaError, SolveError  # noqa: F401
