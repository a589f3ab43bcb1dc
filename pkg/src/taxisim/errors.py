"""Exception hierarchy for the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class MapBoundsError(SimulationError):
    """Geographic input cannot be projected invertibly (bad coordinates,
    polar anchor, or antimeridian-spanning extent)."""


class ConfigError(SimulationError):
    """Invalid configuration or world setup (bad grid dims, no sinks,
    missing crash road, ...)."""


class NoRouteError(SimulationError):
    """Destination is unreachable from the origin."""


class DispatchError(SimulationError):
    """No taxi can reach the crash location; the run is invalid."""


class TimeoutError(SimulationError):
    """Simulated time exceeded the safety cap before the run finished.

    Shadows the builtin on purpose: this is the simulator's own timeout,
    carrying the partial arrival log.
    """

    def __init__(self, message, arrival_log=None):
        super().__init__(message)
        self.arrival_log = list(arrival_log) if arrival_log else []


class IoError(SimulationError):
    """Output path is unwritable."""
