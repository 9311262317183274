"""Exception hierarchy shared by every module of the package."""


class LandscapeError(Exception):
    """Base class for all errors raised by gmm_landscape."""


class InvalidArgumentError(LandscapeError, ValueError):
    """Bad shapes, non-finite inputs or violated preconditions."""


class UnsupportedConfigurationError(LandscapeError):
    """The requested engine configuration cannot be honoured (e.g. quadrature for d > 3)."""


class DegenerateComponentError(LandscapeError):
    """A fitted component carries (numerically) zero association mass."""

    def __init__(self, component: int, mass: float):
        self.component = component
        self.mass = mass
        super().__init__(
            f"fitted component {component} has E_*[Psi] = {mass:.3e}; EM update undefined"
        )


class EngineAccuracyError(LandscapeError):
    """Expectation engine is too coarse for the requested computation."""


class ConfigError(LandscapeError):
    """Malformed experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
