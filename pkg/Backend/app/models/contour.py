from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


def frozen_array(array: NDArray) -> NDArray:
    out = np.array(array, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Contour:
    """Closed planar polyline; the first point is not repeated at the end."""
    points: NDArray
    id: str = ""
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "points", frozen_array(self.points))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def perimeter(self) -> float:
        edges = np.roll(self.points, -1, axis=0) - self.points
        return float(np.linalg.norm(edges, axis=1).sum())

    @property
    def signed_area(self) -> float:
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Srvf:
    """Square-root velocity function sampled at t_j = j/m on the periodic grid."""
    samples: NDArray
    scale: float = 1.0
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", frozen_array(self.samples))

    @property
    def m(self) -> int:
        return len(self.samples)

    def with_samples(self, samples: NDArray) -> "Srvf":
        return Srvf(samples=samples, scale=self.scale, id=self.id)


@dataclass(frozen=True)
class CurveSpeedAngle:
    speed: NDArray
    angle: NDArray

    def __post_init__(self):
        object.__setattr__(self, "speed", frozen_array(self.speed))
        object.__setattr__(self, "angle", frozen_array(self.angle))


@dataclass(frozen=True)
class SpeedAnglePerturbation:
    """Tangent pair (dp, dtheta) at a CurveSpeedAngle."""
    d_speed: NDArray
    d_angle: NDArray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "d_speed", frozen_array(self.d_speed))
        d_angle = self.d_angle if self.d_angle is not None else np.zeros((len(self.d_speed), 2))
        object.__setattr__(self, "d_angle", frozen_array(d_angle))
