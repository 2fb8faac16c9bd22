"""Exception types shared across the package."""


class DualPreintError(Exception):
    """Base class for all package errors."""


class NearPiRotation(DualPreintError):
    """Rotation angle too close to pi for a well-defined principal log."""


class OutOfDomain(DualPreintError):
    """Argument outside the valid domain of an operator."""


class EmptySampleSet(DualPreintError):
    """Preintegration requested over zero IMU samples."""


class WindowMismatch(DualPreintError):
    """Leader/follower preintegrations do not cover the same interval."""


class BehindCamera(DualPreintError):
    """Point has non-positive depth in the camera frame."""


class SingularNormalEquations(DualPreintError):
    """Normal equations rank-deficient beyond regularization."""


class UnsupportedCase(DualPreintError):
    """Requested special-motion case is not one of the supported ones."""
