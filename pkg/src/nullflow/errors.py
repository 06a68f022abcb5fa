"""Exception hierarchy shared by the nullflow modules."""


class NullFlowError(Exception):
    """Base class; ``category`` is surfaced by the CLI as the error type."""

    category = "error"


class ShapeError(NullFlowError, ValueError):
    category = "shape"


class DefinitenessError(NullFlowError, ValueError):
    category = "geometry"


class DomainError(NullFlowError, ValueError):
    category = "domain"


class ExitedDomain(NullFlowError):
    """A graph left the parameter range of the background foliation."""

    category = "exited-domain"

    def __init__(self, nodes, message=None):
        self.nodes = [tuple(int(i) for i in n) for n in nodes]
        if message is None:
            message = f"graph left the background range at {len(self.nodes)} node(s)"
        super().__init__(message)


class FocalPointReached(NullFlowError):
    """Raychaudhuri integration blew up before the end of the grid."""

    category = "focal-point"

    def __init__(self, lam_star, last_valid_index, partial=None):
        self.lam_star = float(lam_star)
        self.last_valid_index = int(last_valid_index)
        self.partial = partial
        super().__init__(f"trace of the null second fundamental form diverges near lambda={lam_star:.6g}")


class NotANullCone(NullFlowError, ValueError):
    category = "not-a-null-cone"


class ReparametrizationError(NullFlowError):
    category = "reparametrization"


class CapabilityError(NullFlowError):
    """Requested quantity needs background data that is not available."""

    category = "capability"


class StiffnessError(NullFlowError):
    category = "stiffness"


class PreconditionError(NullFlowError, ValueError):
    category = "precondition"

    def __init__(self, message, nodes=()):
        self.nodes = [tuple(int(i) for i in n) for n in nodes]
        super().__init__(message)


class ResolutionError(NullFlowError, ValueError):
    category = "resolution"


class ConfigError(NullFlowError, ValueError):
    """Aggregated configuration validation failure."""

    category = "config"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))
