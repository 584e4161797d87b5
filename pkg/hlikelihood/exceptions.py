"""
Typed failures raised by the toolkit.

Every error carries a short machine-readable `reason` and the process exit code
the CLI maps it to: 2 for configuration problems, 3 for numeric failures.
"""


class HlikError(Exception):
    reason = "error"
    exit_code = 3

    def __init__(self, message="", **context):
        super().__init__(message or self.reason)
        self.context = context


class ConfigError(HlikError):
    reason = "config"
    exit_code = 2


class NonConvergent(HlikError):
    reason = "non-convergent"


class NonFinite(HlikError):
    reason = "non-finite"


class OutOfSupport(HlikError):
    reason = "out-of-support"


class NoInteriorMode(HlikError):
    reason = "no-interior-mode"


class HessianNotNegDef(HlikError):
    reason = "hessian-not-negative-definite"


class HessianNotPD(HlikError):
    reason = "hessian-not-positive-definite"


class Diverged(HlikError):
    reason = "diverged"


class MaxIterations(HlikError):
    reason = "max-iterations"


class NotApplicable(HlikError):
    reason = "not-applicable"


class EmptyCatalogResult(HlikError):
    reason = "empty-catalog-result"


class ImproperPosterior(HlikError):
    reason = "improper-posterior"


class Unsupported(HlikError):
    reason = "unsupported"
