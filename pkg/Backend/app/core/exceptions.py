from typing import Optional

INPUT_ERROR = 2
NOT_CONVERGED = 3


class ElastishapeException(Exception):
    """Base exception for Elastishape"""
    def __init__(self, exit_code: int, detail: str):
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail


class InputError(ElastishapeException):
    """Bad input data or parameters"""
    def __init__(self, detail: str):
        super().__init__(exit_code=INPUT_ERROR, detail=detail)


class NumericalError(ElastishapeException):
    """A numerical procedure did not converge"""
    def __init__(self, detail: str):
        super().__init__(exit_code=NOT_CONVERGED, detail=detail)


class TooFewPoints(InputError):
    def __init__(self, count: int, minimum: int):
        super().__init__(f"contour has {count} distinct points, at least {minimum} required")


class DegenerateContour(InputError):
    def __init__(self, reason: str):
        super().__init__(f"degenerate contour: {reason}")


class InvalidWarp(InputError):
    def __init__(self, reason: str):
        super().__init__(f"invalid warp: {reason}")


class InvalidDistanceMatrix(InputError):
    def __init__(self, reason: str):
        super().__init__(f"invalid distance matrix: {reason}")


class InvalidCounts(InputError):
    def __init__(self, y1: int, n1: int, y2: int, n2: int):
        super().__init__(f"invalid counts y1={y1}, n1={n1}, y2={y2}, n2={n2}")


class GroupTooSmall(InputError):
    def __init__(self, sizes: tuple[int, int]):
        super().__init__(f"each group needs at least 2 shapes, got sizes {sizes}")


class NonBinaryCovariate(InputError):
    def __init__(self, name: str):
        super().__init__(f"covariate '{name}' cannot be coded as 0/1")


class NonTangentPerturbation(InputError):
    def __init__(self, residual: float):
        super().__init__(f"angle perturbation is not tangent to the unit circle (max |<theta, dtheta>| = {residual:.3e})")


class AntipodalPair(InputError):
    def __init__(self, inner: float):
        super().__init__(f"shapes are antipodal (inner product {inner:.12f}); inverse exponential undefined")


class InvalidParameter(InputError):
    def __init__(self, name: str, reason: str):
        super().__init__(f"invalid {name}: {reason}")


class ManifestError(InputError):
    """Manifest entry could not be loaded"""
    def __init__(self, shape_id: Optional[str], reason: str):
        prefix = f"shape '{shape_id}'" if shape_id is not None else "manifest"
        super().__init__(f"{prefix}: {reason}")
        self.shape_id = shape_id


class ProjectionDiverged(NumericalError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"closure projection failed after {iterations} iterations (residual {residual:.3e})")


class GeodesicNotConverged(NumericalError):
    def __init__(self, iterations: int, length: float):
        super().__init__(f"path straightening did not converge in {iterations} iterations (length {length:.6f})")


class MeanNotConverged(NumericalError):
    def __init__(self, iterations: int, update_norm: float):
        super().__init__(f"Karcher mean did not converge in {iterations} iterations (|update| = {update_norm:.3e})")


class IncompleteResult(ElastishapeException):
    """Some items of a batch failed; the aggregate cannot be built"""
    def __init__(self, what: str, failing_ids: list[str], exit_code: int):
        super().__init__(exit_code=exit_code, detail=f"{what} incomplete; failing ids: {', '.join(failing_ids)}")
        self.failing_ids = failing_ids
