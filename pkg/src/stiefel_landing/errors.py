"""Exception types shared across the library."""


class StiefelLandingError(Exception):
    """Base class for library errors."""


class SingularBaseError(StiefelLandingError):
    """The Gram matrix of the base point is (numerically) singular."""


class NotInSafeRegionError(StiefelLandingError):
    """An operation required an iterate inside the safe region and got one outside."""


class MaxIterationsError(StiefelLandingError):
    """An iteration budget was exhausted before the requested tolerance."""


class ContractViolationError(StiefelLandingError):
    """A vector argument violated its tangency/normality contract."""


class RankDeficiencyError(StiefelLandingError):
    """Input data does not have the rank required by the operation."""


class ConfigError(StiefelLandingError):
    """Invalid run configuration (bad value, unknown key, inconsistent fields)."""
