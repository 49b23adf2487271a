from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.models.contour import Srvf, frozen_array


@dataclass(frozen=True)
class TangentVector:
    samples: NDArray
    base_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", frozen_array(self.samples))

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples ** 2) / len(self.samples)))

    @classmethod
    def zeros(cls, m: int, base_id: str = "") -> "TangentVector":
        return cls(samples=np.zeros((m, 2)), base_id=base_id)


@dataclass(frozen=True)
class GeodesicPath:
    waypoints: NDArray  # (k, m, 2)
    length: float
    converged: bool
    iterations: int
    energies: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "waypoints", frozen_array(self.waypoints))

    @property
    def k(self) -> int:
        return len(self.waypoints)

    def srvfs(self) -> list[Srvf]:
        return [Srvf(samples=w, id=f"tau={j / (self.k - 1):.4f}") for j, w in enumerate(self.waypoints)]
