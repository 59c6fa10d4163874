"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class OutOfDomainError(ValueError):
    """A point lies outside the computational box."""


class IndefiniteOperatorError(RuntimeError):
    """An operator expected to be (semi)definite turned out not to be."""


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class InvalidDensityError(ValueError):
    """A density field violates nonnegativity / normalization requirements."""


class MissingHintsError(ValueError):
    """A splitting strategy needs coarse eigenvalue hints that were not given."""
