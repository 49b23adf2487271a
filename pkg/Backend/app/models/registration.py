from dataclasses import dataclass

from numpy.typing import NDArray

from app.models.contour import Srvf, frozen_array


@dataclass(frozen=True)
class Registration:
    """Optimal (rotation, seed, warp) taking the second curve onto the first.

    The warp holds m + 1 samples of gamma on the closed grid j/m so both
    endpoints (0 and 1) are explicit.
    """
    rotation: NDArray
    seed_shift: int
    warp: NDArray
    registered_srvf: Srvf
    distance: float
    objective: float
    rounds: int = 0
    dp_cost: float = float("nan")
    elastic: bool = True
    geodesic_converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rotation", frozen_array(self.rotation))
        object.__setattr__(self, "warp", frozen_array(self.warp))

    def with_distance(self, distance: float, geodesic_converged: bool = True) -> "Registration":
        return Registration(
            rotation=self.rotation,
            seed_shift=self.seed_shift,
            warp=self.warp,
            registered_srvf=self.registered_srvf,
            distance=distance,
            objective=self.objective,
            rounds=self.rounds,
            dp_cost=self.dp_cost,
            elastic=self.elastic,
            geodesic_converged=geodesic_converged,
        )


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetrized pairwise shape distances with registration diagnostics."""
    values: NDArray
    ids: tuple[str, ...]
    mode: str
    max_asymmetry: float
    unconverged_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", frozen_array(self.values))
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "unconverged_pairs", tuple(tuple(p) for p in self.unconverged_pairs))

    @property
    def n(self) -> int:
        return len(self.ids)
