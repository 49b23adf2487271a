from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.models.contour import Srvf
from app.models.spca import SpcaModel
from app.schemas.arrays import FloatList, Matrix, Tensor3
from app.schemas.shape import SrvfOut


class SpcaModelOut(BaseModel):
    config_digest: str = ""
    mode: str = "elastic"
    mean: SrvfOut
    ids: list[str]
    eigenvalues: FloatList
    eigenvectors: Tensor3
    coefficients: Matrix
    total_variance: float
    scales: FloatList = []
    cumulative_variance: FloatList = []
    mean_converged: Optional[bool] = None
    mean_iterations: Optional[int] = None
    variance_history: FloatList = []

    model_config = ConfigDict(from_attributes=True)

    def to_model(self) -> SpcaModel:
        """Rebuilds the numerical model; shooting vectors follow from the coefficients."""
        m = len(self.mean.samples)
        eigenvectors = np.asarray(self.eigenvectors, dtype=float).reshape(-1, m, 2)
        coefficients = np.asarray(self.coefficients, dtype=float).reshape(len(self.ids), len(self.eigenvalues))
        shooting = np.tensordot(coefficients, eigenvectors, axes=1) if len(self.eigenvalues) else np.zeros((len(self.ids), m, 2))
        return SpcaModel(
            mean=Srvf(samples=np.asarray(self.mean.samples), scale=self.mean.scale, id=self.mean.id),
            shooting_vectors=shooting,
            ids=self.ids,
            eigenvalues=np.asarray(self.eigenvalues, dtype=float),
            eigenvectors=eigenvectors,
            coefficients=coefficients,
            total_variance=self.total_variance,
            scales=self.scales,
        )


class ReconstructionReportOut(BaseModel):
    config_digest: str = ""
    mode: str
    ids: list[str]
    per_shape_error: FloatList
    fraction_of_max: FloatList
    mean: float
    std: float
    median: float
    median_absolute_deviation: float
    basis_size: int
    order_statistics: dict[str, str] = {}

