class SteamMapfError(Exception):
    pass


# map parsing
class MapFormatError(SteamMapfError, ValueError):
    pass


class MalformedHeader(MapFormatError):
    pass


class DimensionMismatch(MapFormatError):
    pass


class UnknownCell(MapFormatError):
    pass


# scenario validation
class ScenarioError(SteamMapfError, ValueError):
    def __init__(self, agent, message=""):
        self.agent = agent
        super().__init__(f"{type(self).__name__}({agent})" + (f": {message}" if message else ""))


class StartOnObstacle(ScenarioError):
    pass


class DuplicateStart(ScenarioError):
    pass


class DuplicateGoal(ScenarioError):
    pass


class GoalUnreachable(ScenarioError):
    pass


class LengthMismatch(SteamMapfError, ValueError):
    pass


# cost fields
class TargetBlocked(SteamMapfError, ValueError):
    pass


class Unreachable(SteamMapfError):
    def __init__(self, message="", agent=None):
        self.agent = agent
        super().__init__(message)


class CenterUnreachable(SteamMapfError, ValueError):
    pass


class NoConflict(SteamMapfError, LookupError):
    pass


# external policy process
class PolicyError(SteamMapfError):
    """Infrastructure failure of an external policy, not a MAPF failure."""


class ProtocolViolation(PolicyError):
    pass


class PolicyTimeout(PolicyError):
    pass


class ProcessExited(PolicyError):
    pass


# metrics / reports
class SingleAgent(SteamMapfError, ValueError):
    pass


class EmptyInput(SteamMapfError, ValueError):
    pass


class MixedConfig(SteamMapfError, ValueError):
    pass


class Infeasible(SteamMapfError):
    pass
