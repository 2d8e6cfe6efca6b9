# spde/errors.py


class SpdeError(Exception):
    """Root of every error raised by the laboratory."""


class ValidationError(SpdeError):
    """A parameter or configuration value lies outside its domain."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class HurstRangeError(ValidationError):
    pass


class GridError(ValidationError):
    pass


class RefusalError(SpdeError):
    """An estimator refuses to produce a number that would be meaningless."""


class NumericalError(SpdeError):
    pass


class EmbeddingError(NumericalError):
    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"circulant embedding has a negative eigenvalue {min_eigenvalue:.3e}")
        self.min_eigenvalue = min_eigenvalue


class QuadratureError(NumericalError):
    pass


class InstabilityError(NumericalError):
    def __init__(self, step: int, detail: str = "non-finite values"):
        super().__init__(f"solver became unstable at step {step}: {detail}")
        self.step = step
