"""Exception types shared across the package."""


class SchemaError(ValueError):
    """An input document (terrain, robot, task, plan) violates its schema."""


class BuildError(ValueError):
    """A model could not be assembled (bad dimensions, missing bounds, ...)."""


class SolveError(RuntimeError):
    """A solver failed in a way that is not expressible as a status code."""
