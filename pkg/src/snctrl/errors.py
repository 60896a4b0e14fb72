"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """A caller violated an operation's precondition (shape/mode/finiteness)."""


class NumericError(RuntimeError):
    """An iterative numeric routine failed to converge or a solver broke down.

    Carries whatever partial result is available in ``detail``.
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class NormalizationError(ValueError):
    """Spectral normalization cannot be applied (e.g. zero weight matrix)."""


class Infeasible(Exception):
    """The LMI system admits no certificate; distinct from solver failure."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class CertificateRejected(Exception):
    """Independent verification found a violated certificate inequality."""

    def __init__(self, message, constraint=None, eigenvalue=None):
        super().__init__(message)
        self.constraint = constraint
        self.eigenvalue = eigenvalue
