"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class BracketError(RuntimeError):
    """A Bessel zero could not be bracketed; points to an evaluator bug."""

    def __init__(self, nu, k, message=None):
        self.nu = nu
        self.k = k
        super().__init__(message or f"failed to bracket zero k={k} of J_nu, nu={nu}")


class CriticalPotentialError(ValueError):
    """Operation needs mu < mu_crit(alpha) but got the critical value."""


class DuplicateExponent(ValueError):
    """Two exponents are closer than the admissible relative gap."""


class IllConditioned(RuntimeError):
    """Biorthogonal family residual exceeds the requested tolerance."""

    def __init__(self, residual, condition_estimate, tol):
        self.residual = residual
        self.condition_estimate = condition_estimate
        self.tol = tol
        super().__init__(
            f"biorthogonality residual {residual:.3e} exceeds tol {tol:.1e} "
            f"(Gram condition ~{condition_estimate:.2e}); retry with "
            f"precision='extended' or a smaller N"
        )
