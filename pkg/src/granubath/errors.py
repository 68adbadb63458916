"""Exception types shared across the package."""


class NumericsError(RuntimeError):
    """A numerical procedure failed to reach its required accuracy.

    Raised by quadrature that does not converge, root brackets that do
    not change sign, and NaN detection in the particle solver.  Carries
    whatever diagnostic the failing routine could assemble.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid configuration key, value, or violated config invariant."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
