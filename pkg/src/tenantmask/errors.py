"""Exception taxonomy shared by every layer.

Every error carries a stable machine-readable ``code`` that the HTTP layer
and the CLI surface verbatim.
"""


class TenantMaskError(Exception):
    code = "error"


class ParseError(TenantMaskError, ValueError):
    code = "parse_error"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(TenantMaskError, ValueError):
    code = "empty_dataset"


class InvalidPartitionError(TenantMaskError, ValueError):
    code = "invalid_partition"


class UnsplittableClassError(TenantMaskError, ValueError):
    code = "unsplittable_class"

    def __init__(self, labels):
        self.labels = sorted(labels)
        super().__init__(
            "classes with fewer than 2 examples cannot be split: "
            + ", ".join(self.labels)
        )


class ValidationError(TenantMaskError, ValueError):
    code = "invalid_request"


class ConflictError(TenantMaskError, ValueError):
    code = "conflict"


class NotFoundError(TenantMaskError, LookupError):
    code = "not_found"


class UnknownTenantError(NotFoundError):
    code = "unknown_tenant"


class EmptyInputError(TenantMaskError, ValueError):
    code = "empty_input"


class ShapeError(TenantMaskError, ValueError):
    code = "shape_mismatch"


class InvalidMaskError(TenantMaskError, ValueError):
    code = "invalid_mask"


class FormatError(TenantMaskError, ValueError):
    code = "bad_format"


class CorruptionError(FormatError):
    code = "corrupt_file"


class EmptyEvaluationError(TenantMaskError, ValueError):
    code = "empty_evaluation"


class RequestTooLargeError(TenantMaskError):
    code = "request_too_large"


class ServiceUnavailableError(TenantMaskError):
    code = "unavailable"


class HarnessError(TenantMaskError):
    code = "harness_step_failed"

    def __init__(self, step, cause):
        super().__init__(f"step {step!r} failed: {cause}")
        self.step = step


class StartupError(TenantMaskError):
    code = "startup_failed"
