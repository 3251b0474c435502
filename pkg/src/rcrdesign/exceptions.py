"""Exception types raised by rcrdesign."""


class RCRError(ValueError):
    """Base class for invalid inputs to the two-group RCR routines."""


class DegenerateDesignError(RCRError):
    def __init__(self, msg="degenerate design: group has no individuals"):
        super().__init__(msg)


class BoundaryError(RCRError):
    def __init__(self, msg="criterion diverges at boundary"):
        super().__init__(msg)


class DegenerateDeterminantError(RCRError):
    def __init__(self, msg="determinant degenerate in fixed-effects limit"):
        super().__init__(msg)


class ClosedFormUnavailableError(RCRError):
    def __init__(self, msg="closed form requires equal error variances; use numeric minimizer"):
        super().__init__(msg)


class OracleError(RCRError):
    """The Henderson system cannot be formed or solved."""
