from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.models.contour import Srvf, frozen_array


@dataclass(frozen=True)
class SpcaModel:
    """Karcher mean plus the eigen-decomposition of the tangent covariance.

    eigenvectors are tangent fields of shape (r, m, 2), orthonormal in L2;
    coefficients[i, j] = <<v_i, u_j>>.
    """
    mean: Srvf
    shooting_vectors: NDArray  # (n, m, 2)
    ids: tuple[str, ...]
    eigenvalues: NDArray
    eigenvectors: NDArray
    coefficients: NDArray
    total_variance: float
    scales: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "shooting_vectors", frozen_array(self.shooting_vectors))
        object.__setattr__(self, "eigenvalues", frozen_array(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", frozen_array(self.eigenvectors))
        object.__setattr__(self, "coefficients", frozen_array(self.coefficients))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "scales", tuple(self.scales))

    @property
    def n(self) -> int:
        return len(self.shooting_vectors)

    @property
    def m(self) -> int:
        return self.mean.m

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def cumulative_variance(self) -> NDArray:
        if self.total_variance <= 0 or self.rank == 0:
            return np.zeros(self.rank)
        return np.cumsum(self.eigenvalues) / self.total_variance


@dataclass(frozen=True)
class ReconstructionReport:
    ids: tuple[str, ...]
    per_shape_error: NDArray
    mean: float
    std: float
    median: float
    median_absolute_deviation: float
    basis_size: int
    mode: str = "elastic"
    reconstructions: tuple = ()  # (true Srvf, reconstructed Srvf) per shape

    def __post_init__(self):
        object.__setattr__(self, "per_shape_error", frozen_array(self.per_shape_error))
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def fraction_of_max(self) -> NDArray:
        return self.per_shape_error / (np.pi / 2) ** 2

    def order_statistics(self) -> dict[str, int]:
        """Indices of the min, median and max error shapes."""
        order = np.argsort(self.per_shape_error, kind="stable")
        return {"min": int(order[0]), "median": int(order[(len(order) - 1) // 2]), "max": int(order[-1])}
