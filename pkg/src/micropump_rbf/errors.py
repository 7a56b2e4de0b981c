class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class CalibrationError(ValueError):
    """Fitting a scaler or correction table from data failed."""


class PlantConfigError(ValueError):
    """Synthetic plant parameters violate the plant's invariants."""


class ModelFileError(ValueError):
    """A serialized model could not be loaded."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
