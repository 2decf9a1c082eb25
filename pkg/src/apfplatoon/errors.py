"""Exception hierarchy shared by the package."""


class PlatoonError(Exception):
    pass


class InvalidInputError(PlatoonError, ValueError):
    pass


class DomainError(PlatoonError, ValueError):
    """Argument outside the domain of a barrier function (non-positive gap)."""


class CollisionError(PlatoonError):
    def __init__(self, message, pair=None, gap=None):
        super().__init__(message)
        self.pair = pair
        self.gap = gap


class ConfigError(PlatoonError, ValueError):
    pass


class GateError(ConfigError):
    """The damping gain does not dominate the model's Lipschitz-like constant."""


class DivergenceError(PlatoonError):
    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class StiffnessError(PlatoonError):
    def __init__(self, message, agent=None, gap=None):
        super().__init__(message)
        self.agent = agent
        self.gap = gap
