"""Exception types raised by the solver library."""


class VortexError(Exception):
    """Base class for all library errors."""


class DomainError(VortexError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConfigurationError(VortexError, ValueError):
    """Invalid geometry, grid or vortex data."""


class SingularityError(VortexError, ValueError):
    """Evaluation requested exactly at a logarithmic singularity."""


class ContractError(VortexError, RuntimeError):
    """A numerical contract (monotonicity, sign, convergence state) was broken."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ScanError(VortexError, RuntimeError):
    """Critical-coupling bracketing failed."""

    def __init__(self, message, probes=None):
        super().__init__(message)
        self.probes = list(probes or [])
