from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.models.contour import Srvf, frozen_array
from app.models.ensemble import ShapeEnsemble
from app.models.registration import Registration


@dataclass(frozen=True)
class KarcherMean:
    mean: Srvf
    registered: ShapeEnsemble
    shooting_vectors: NDArray  # (n, m, 2), tangent at mean
    registrations: tuple[Registration, ...]
    distances: NDArray
    iterations: int
    converged: bool
    variance_history: tuple[float, ...]
    mode: str = "elastic"
    medoid_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shooting_vectors", frozen_array(self.shooting_vectors))
        object.__setattr__(self, "distances", frozen_array(self.distances))
        object.__setattr__(self, "registrations", tuple(self.registrations))
        object.__setattr__(self, "variance_history", tuple(float(v) for v in self.variance_history))

    @property
    def variance(self) -> float:
        """Sum of squared shape distances to the mean."""
        return float(np.sum(self.distances ** 2))

    @property
    def update_norm(self) -> float:
        m = self.shooting_vectors.shape[1]
        mean_v = self.shooting_vectors.mean(axis=0)
        return float(np.sqrt(np.sum(mean_v ** 2) / m))
