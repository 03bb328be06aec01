"""Exception types shared across the package."""


class ModelError(ValueError):
    """Invalid input: malformed documents, bad ids, inconsistent sizes."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (mechanism, non-convergence, infeasibility)."""
