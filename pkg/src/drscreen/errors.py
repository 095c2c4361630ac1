"""Exception types shared across the screening pipeline."""


class DrScreenError(Exception):
    """Base class for all pipeline errors."""


class DecodeError(DrScreenError):
    """Raised when an image payload cannot be decoded."""


class InvalidInputError(DrScreenError):
    """Raised when an argument violates a documented precondition."""


class FieldDetectionError(DrScreenError):
    """Raised when no circular information field can be found."""


class DiscNotFoundError(DrScreenError):
    """Raised when no optic-disc candidate survives filtering."""


class DegenerateAgreementError(DrScreenError):
    """Raised when kappa is undefined (all mass on a single grade)."""


class PhantomSpecError(DrScreenError):
    """Raised when a synthetic-image spec cannot be realized."""


class StoreError(DrScreenError):
    """Raised when a case record cannot be read or written."""
