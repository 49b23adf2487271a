import logging
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.config import AnalysisConfig, settings
from app.core.exceptions import DegenerateContour, InvalidParameter, NonTangentPerturbation, TooFewPoints
from app.models.contour import Contour, CurveSpeedAngle, SpeedAnglePerturbation, Srvf
from app.services import preshape
from app.services.quadrature import (
    central_difference,
    cumulative_trapezoid,
    inner,
    periodic_interp,
    pointwise_norm,
)

logger = logging.getLogger(__name__)

MIN_POINTS = 8
MIN_RESAMPLE = 32
MIN_SPEED = 1e-12
# Relative area below which a polygon is treated as collinear.
AREA_TOLERANCE = 1e-12
TANGENCY_TOLERANCE = 1e-8


def validate_and_normalize(raw_points: ArrayLike, shape_id: str = "") -> Contour:
    """Drops repeated points, checks size and area, and forces CCW order."""
    points = np.asarray(raw_points, dtype=float)
    if points.size == 0:
        points = points.reshape(0, 2)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DegenerateContour(f"expected an (n, 2) point array, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DegenerateContour("non-finite coordinates")

    # Compare each point with its cyclic predecessor; this also removes a
    # closing point that repeats the first one.
    if len(points):
        keep = np.any(points != np.roll(points, 1, axis=0), axis=1)
        points = points[keep]
    if len(points) < MIN_POINTS:
        raise TooFewPoints(len(points), MIN_POINTS)

    contour = Contour(points=points, id=shape_id)
    area = contour.signed_area
    if abs(area) <= AREA_TOLERANCE * contour.perimeter ** 2:
        raise DegenerateContour("zero enclosed area (collinear points)")

    if area < 0:
        logger.debug(f"Contour '{shape_id}' is clockwise; reversing point order.")
        # Reverse but keep the first point as the seed.
        contour = Contour(points=np.roll(points[::-1], 1, axis=0), id=shape_id)
    return contour


def resample_arclength(c: Contour, m: int) -> Contour:
    """m points equally spaced by arc length along the closed polyline."""
    if m < MIN_RESAMPLE:
        raise InvalidParameter("m", f"resampling needs m >= {MIN_RESAMPLE}, got {m}")
    closed = np.vstack([c.points, c.points[:1]])
    seg_len = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    arc = np.concatenate(([0.0], np.cumsum(seg_len)))
    target = np.arange(m) * (arc[-1] / m)
    sampled = np.column_stack([np.interp(target, arc, closed[:, 0]), np.interp(target, arc, closed[:, 1])])
    return Contour(points=sampled, id=c.id)


def sample_parameter(c: Contour, m: int) -> NDArray:
    """Points at m uniform parameter values, interpolating the contour's own parameterization."""
    if c.size == m:
        return np.array(c.points)
    return periodic_interp(c.points, np.arange(m) * (c.size / m))


def to_srvf(c: Contour, m: Optional[int] = None, config: Optional[AnalysisConfig] = None) -> Srvf:
    config = config or settings
    m = m or config.m
    length = c.perimeter
    beta = sample_parameter(c, m) / length
    velocity = central_difference(beta)
    speed = pointwise_norm(velocity)
    if speed.min() < MIN_SPEED:
        raise DegenerateContour(f"vanishing derivative (min speed {speed.min():.3e}) in '{c.id}'")
    q = velocity / np.sqrt(speed)[:, None]
    projected = preshape.project_closure(q, config=config)
    return Srvf(samples=projected.samples, scale=length, id=c.id)


def from_srvf(q: Srvf, base_point: Sequence[float] = (0.0, 0.0), scaled: bool = False) -> tuple[Contour, float]:
    """Integrates q|q| from base_point; returns the curve and its endpoint gap."""
    samples = np.asarray(q.samples)
    positions = cumulative_trapezoid(samples * pointwise_norm(samples)[:, None])
    gap = float(np.linalg.norm(positions[-1] - positions[0]))
    points = positions[:-1]
    if scaled:
        points = points * q.scale
    if gap > 1e-6:
        logger.debug(f"Reconstructed curve '{q.id}' has endpoint gap {gap:.3e}")
    return Contour(points=points + np.asarray(base_point, dtype=float), id=q.id), gap


def speed_angle(c: Contour) -> CurveSpeedAngle:
    velocity = central_difference(c.points)
    speed = pointwise_norm(velocity)
    if speed.min() < MIN_SPEED:
        raise DegenerateContour(f"vanishing derivative in '{c.id}'")
    return CurveSpeedAngle(speed=speed, angle=velocity / speed[:, None])


def srvf_perturbation(base: CurveSpeedAngle, pert: SpeedAnglePerturbation) -> NDArray:
    """Chain rule for q = sqrt(p) theta: dq = dp / (2 sqrt(p)) theta + sqrt(p) dtheta."""
    root = np.sqrt(base.speed)[:, None]
    return pert.d_speed[:, None] / (2.0 * root) * base.angle + root * pert.d_angle


def _check_tangent(base: CurveSpeedAngle, pert: SpeedAnglePerturbation) -> None:
    residual = np.abs(np.sum(base.angle * pert.d_angle, axis=1)).max(initial=0.0)
    scale = max(1.0, float(np.abs(pert.d_angle).max(initial=0.0)))
    if residual > TANGENCY_TOLERANCE * scale:
        raise NonTangentPerturbation(float(residual))


def elastic_metric_check(
    base: CurveSpeedAngle,
    pert1: SpeedAnglePerturbation,
    pert2: SpeedAnglePerturbation,
    a: float = 0.25,
    b: float = 1.0,
) -> tuple[float, float]:
    """Elastic inner product of two perturbations and the L2 product of their SRVF images."""
    _check_tangent(base, pert1)
    _check_tangent(base, pert2)
    p = base.speed
    stretch = np.mean(pert1.d_speed * pert2.d_speed / p)
    bend = np.mean(np.sum(pert1.d_angle * pert2.d_angle, axis=1) * p)
    elastic_value = a * stretch + b * bend
    l2_value = inner(srvf_perturbation(base, pert1), srvf_perturbation(base, pert2))
    return float(elastic_value), float(l2_value)
