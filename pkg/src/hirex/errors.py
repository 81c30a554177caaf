"""Exception hierarchy. Every error the engine raises derives from HirexError
so the CLI can map failures to stable exit codes."""


class HirexError(Exception):
    """Base class for all engine errors."""


class ValidationError(HirexError):
    """A value violates a documented precondition or config invariant."""


class GeometryError(HirexError):
    """Window/plan/dimension arithmetic is inconsistent."""


class ShapeError(GeometryError):
    """Tensor shapes do not match the operation contract."""


class ProtocolError(HirexError):
    """Malformed frame, bad magic, truncation, or version mismatch."""


class BackendError(HirexError):
    """A noise-predictor backend failed; carries the request id when known."""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(message)
        self.request_id = request_id


class RemoteError(BackendError):
    """Connection, timeout, or server-reported failure on the wire."""
