class FcapaError(Exception):
    """Base class for every error raised by the solver stack"""


class InvalidConfigurationError(FcapaError):
    """Settings, grid sizes or lengths outside their admissible range"""


class OutOfDomainError(FcapaError):
    """Query point outside the aperture parameter rectangle"""


class ShapeMismatchError(FcapaError):
    """Array length or grid shape does not match its counterpart"""


class ChannelSingularityError(FcapaError):
    """Green's function evaluated at (or inside) the radiating surface"""


class DegenerateStateError(FcapaError):
    """Auxiliary variables or currents collapsed to zero"""


class NumericalConditioningError(FcapaError):
    """Linear system too ill-conditioned to solve reliably"""


class RankDeficiencyError(FcapaError):
    """Channel matrix without full column rank"""


class NumericalError(FcapaError):
    """Non-finite value produced inside the outer loop"""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class ResultsIOError(FcapaError):
    """Result files could not be read or written"""

    def __init__(self, message: str, path):
        super().__init__(f"{message}: {path}")
        self.path = path
