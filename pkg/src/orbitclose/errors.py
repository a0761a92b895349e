"""Exception hierarchy shared by every module."""


class OrbitCloseError(Exception):
    """Base class for all package errors."""


# --- expression language ---

class ParseError(OrbitCloseError):
    """Malformed source text. Carries the byte offset and what was expected."""

    def __init__(self, message, position, expected=()):
        super().__init__(f"{message} (offset {position})")
        self.position = position
        self.expected = tuple(expected)


class ArityError(OrbitCloseError):
    """Component count does not match the declared dimension."""


class UnknownSymbolError(OrbitCloseError):
    """Free variable that is not a coordinate, t, or a declared parameter."""


class DomainError(OrbitCloseError):
    """Evaluation left the expression's domain (log of <=0, division by zero, ...)."""


class OrderUnsupported(OrbitCloseError):
    """Requested derivative order exceeds the configured r_max."""


class DimensionMismatch(OrbitCloseError):
    """Fields or vectors of incompatible dimension were combined."""


# --- geometry ---

class ChartDomainError(OrbitCloseError):
    """Point (or trajectory) left the validity box of every chart."""


class ToleranceFailure(OrbitCloseError):
    """An adaptive solve could not meet its tolerance."""


class GeodesicAmbiguous(OrbitCloseError):
    """Points too far apart for a unique minimal geodesic."""


# --- flow ---

class BlowUp(OrbitCloseError):
    """Trajectory norm exceeded the configured bound."""


class NoCrossing(OrbitCloseError):
    """Trajectory never crossed the section within the horizon."""


class TangentialCrossing(OrbitCloseError):
    """Section crossing too tangential for a well-posed return time."""


# --- closing ---

class AlphaTooLarge(OrbitCloseError):
    """Return gap exceeds the geodesic-uniqueness radius."""


class WindowTooSmall(OrbitCloseError):
    """Hermite overshoot: window residual exceeds the measured-constant budget."""


class ZeroSpeed(OrbitCloseError):
    """Orbit speed reached zero; arc-length machinery does not apply."""


class RadiusTooLarge(OrbitCloseError):
    """Requested tube radius violates the curvature bound."""


# --- perturbation ---

class OverlapPresent(OrbitCloseError):
    """Nonautonomous mode requires an overlap-free flow box."""


class TooManyBranches(OrbitCloseError):
    """More than two projection feet in an overlap region."""


class NotSlowEnough(OrbitCloseError):
    """Candidate freeze point is not below the slow-speed threshold."""


class BranchConstructionFailure(OrbitCloseError):
    """Homoclinic branch or reparametrization constraints could not be met."""


# --- hyperbolicity ---

class NotPeriodic(OrbitCloseError):
    """Point does not return to the section; not on a periodic orbit."""


class TangentialSection(OrbitCloseError):
    """Field nearly tangent to the cross-section."""


class EigenvalueNotSimple(OrbitCloseError):
    """Adjuster target must be a simple real eigenvalue."""


class WindowTooWide(OrbitCloseError):
    """Target multiplier outside the admissible (1-delta_win, 1) window."""


class InsufficientFamily(OrbitCloseError):
    """Splitting continuity needs at least 3 orbits."""


# --- cli ---

class SchemaError(OrbitCloseError):
    """Scenario file failed schema validation."""
