import enum
from dataclasses import dataclass
from typing import Optional

from numpy.typing import NDArray

from app.models.contour import frozen_array


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    k: int
    merge_heights: NDArray
    linkage: str = "complete"
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "merge_heights", frozen_array(self.merge_heights))

    def members(self, label: int) -> list[int]:
        return [i for i, v in enumerate(self.labels) if v == label]


@dataclass(frozen=True)
class MdsEmbedding:
    coordinates: NDArray
    eigenvalues: NDArray
    negative_mass: float  # sum of |negative eigenvalues| / sum of |eigenvalues|

    def __post_init__(self):
        object.__setattr__(self, "coordinates", frozen_array(self.coordinates))
        object.__setattr__(self, "eigenvalues", frozen_array(self.eigenvalues))


@dataclass(frozen=True)
class PermutationTestResult:
    observed_statistic: float
    permutation_statistics: NDArray
    p_value: float
    B: int
    rng_seed: int
    group_sizes: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "permutation_statistics", frozen_array(self.permutation_statistics))


@dataclass(frozen=True)
class EnrichmentResult:
    probability: float
    y1: int
    n1: int
    y2: int
    n2: int
    draws: int
    rng_seed: int

    @property
    def standard_error(self) -> float:
        p = self.probability
        return (p * (1.0 - p) / self.draws) ** 0.5


class EnrichmentFlag(str, enum.Enum):
    NONE = "none"
    CLUSTER_1 = "enriched in cluster 1"
    CLUSTER_2 = "enriched in cluster 2"


@dataclass(frozen=True)
class CovariateEnrichment:
    name: str
    result: EnrichmentResult
    flag: EnrichmentFlag
    level: Optional[str] = None


@dataclass(frozen=True)
class ClusterSummary:
    """Per-cluster size and survival covariate summary."""
    label: int
    size: int
    observed: int
    mean: Optional[float]
    median: Optional[float]


@dataclass(frozen=True)
class CutoffTest:
    covariate: str
    cutoff: float
    result: PermutationTestResult
