from typing import Optional

from pydantic import BaseModel, ConfigDict

from app.schemas.arrays import FloatList, Matrix, Tensor3


class SrvfOut(BaseModel):
    id: str
    scale: float
    samples: Matrix

    model_config = ConfigDict(from_attributes=True)


class RegistrationOut(BaseModel):
    rotation: Matrix
    seed_shift: int
    warp: FloatList
    distance: float
    objective: float
    rounds: int
    elastic: bool
    geodesic_converged: bool

    model_config = ConfigDict(from_attributes=True)


class GeodesicPathOut(BaseModel):
    waypoints: Tensor3
    length: float
    converged: bool
    iterations: int
    energies: FloatList

    model_config = ConfigDict(from_attributes=True)


class GeodesicReport(BaseModel):
    config_digest: str
    id1: str
    id2: str
    mode: str
    distance: float
    nonelastic_distance: Optional[float] = None
    registration: RegistrationOut
    path: GeodesicPathOut


class DistanceMatrixMeta(BaseModel):
    config_digest: str
    mode: str
    m: int
    seed_stride: int
    ids: list[str]
    max_asymmetry: float
    max_distance: float
    unconverged_pairs: list[list[str]] = []
