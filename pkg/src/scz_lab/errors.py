"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all lab errors."""


class EmptyBall(LabError):
    pass


class NegativeWeight(LabError):
    pass


class UnresolvedAnnulus(LabError):
    pass


class NonPositiveRho(LabError):
    pass


class NoFit(LabError):
    """No lattice point satisfied the fitted inequality.

    ``witness`` holds the worst offending sample and ``best`` the lattice
    point that came closest.
    """

    def __init__(self, message, witness=None, best=None):
        super().__init__(message)
        self.witness = witness
        self.best = best


class NoBracket(LabError):
    pass


class Disconnected(LabError):
    pass


class CannotCertify(LabError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SingularityUnresolved(LabError):
    pass


class PreconditionError(LabError):
    pass


class ZeroWeightNode(LabError):
    pass


class EmptyFamily(LabError):
    pass


class DomainTooSmall(LabError):
    pass


class ParameterRelationViolated(LabError):
    pass


class NormEstimateZero(LabError):
    pass


class WeightOutOfRange(LabError):
    pass


class CoincidentPoints(LabError):
    pass


class NonpositiveTime(LabError):
    pass


class QuadratureFailure(LabError):
    def __init__(self, message, remainder=None):
        super().__init__(message)
        self.remainder = remainder


class ViolationWitness(LabError):
    def __init__(self, message, witness=None, fit=None):
        super().__init__(message)
        self.witness = witness
        self.fit = fit


class NoEta(LabError):
    pass


class ConfigError(LabError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
