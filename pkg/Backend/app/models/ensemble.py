from dataclasses import dataclass, field
from typing import Union

from app.models.contour import Srvf

CovariateValue = Union[float, int, str, bool]


@dataclass(frozen=True)
class ShapeEnsemble:
    """Named SRVFs sharing one grid, with optional per-shape covariates."""
    shapes: tuple[Srvf, ...]
    covariates: dict[str, dict[str, CovariateValue]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if not self.shapes:
            raise ValueError("an ensemble needs at least one shape")
        ids = [q.id for q in self.shapes]
        if len(set(ids)) != len(ids):
            raise ValueError("shape ids must be unique")
        sizes = {q.m for q in self.shapes}
        if len(sizes) != 1:
            raise ValueError(f"all shapes must share m, got {sorted(sizes)}")

    @property
    def n(self) -> int:
        return len(self.shapes)

    @property
    def m(self) -> int:
        return self.shapes[0].m

    @property
    def ids(self) -> list[str]:
        return [q.id for q in self.shapes]

    def index(self, shape_id: str) -> int:
        return self.ids.index(shape_id)

    def subset(self, indices) -> "ShapeEnsemble":
        picked = tuple(self.shapes[i] for i in indices)
        return ShapeEnsemble(
            shapes=picked,
            covariates={q.id: self.covariates[q.id] for q in picked if q.id in self.covariates},
        )

    def covariate(self, name: str) -> list[CovariateValue | None]:
        return [self.covariates.get(q.id, {}).get(name) for q in self.shapes]
