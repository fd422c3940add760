"""Exception types raised by the solvers."""


class BBHError(Exception):
    """Base class for solver failures."""


class DomainError(BBHError, ValueError):
    """Input outside the feasible domain or parameter range."""


class SingularDerivative(DomainError):
    """Entropy derivative requested on the pure-state boundary (beta = 1/2)."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class BracketError(BBHError):
    """No sign change could be bracketed within the allowed range."""


class NoSolution(BBHError):
    """The requested branch has no solution for these parameters."""


class NonConvergence(BBHError):
    """An iteration or root search did not reach its tolerance."""


class BranchInfeasible(BBHError):
    """A closed-form branch left its domain of validity."""


class NuBracketFailure(BBHError):
    """No nu <= 0 satisfies the normal-phase density equation."""
