"""Exception hierarchy shared by all camsearch modules."""


class CamsearchError(Exception):
    """Base class for every error raised by this package."""


# kinematics
class Unreachable(CamsearchError):
    pass


class SingularWristAxis(CamsearchError):
    pass


# workspace
class NonPositiveRadius(CamsearchError):
    pass


class DomainError(CamsearchError):
    pass


class EmptyInterval(CamsearchError):
    pass


class NoIntersection(CamsearchError):
    pass


class EmptySpace(CamsearchError):
    pass


# actuation
class NearDegenerateTimeConstants(CamsearchError):
    pass


class StepTooCoarse(CamsearchError):
    pass


# imaging
class FrameTooSmall(CamsearchError):
    pass


class DimensionMismatch(CamsearchError):
    pass


class EmptyList(CamsearchError):
    pass


class BadKernel(CamsearchError):
    pass


# search
class SpaceTooSmall(CamsearchError):
    pass


class EmptyExploredSet(CamsearchError):
    pass


class SafetyViolation(CamsearchError):
    pass


class InsufficientInitialEnergy(CamsearchError):
    pass


class NoNewNodes(CamsearchError):
    pass


# scenario files
class ScenarioError(CamsearchError):
    """Raised for scenario files that cannot be used; exit code 1 in the CLI."""


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass
