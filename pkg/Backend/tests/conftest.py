import numpy as np
import pytest

from app.core.config import AnalysisConfig
from app.models.ensemble import ShapeEnsemble
from tests.curves import blob, srvf_of


@pytest.fixture
def config() -> AnalysisConfig:
    return AnalysisConfig(m=64, geodesic_max_iter=150, mean_max_iter=30, draws=20_000, permutations=99, _env_file=None)


@pytest.fixture
def fine_config() -> AnalysisConfig:
    return AnalysisConfig(m=256, _env_file=None)


@pytest.fixture
def shapes(config):
    """Four distinct smooth shapes on the config grid."""
    specs = {
        "round": [0.05, 0.0],
        "oval": [0.25, 0.0],
        "trefoil": [0.0, 0.2],
        "peanut": [0.3, 0.05],
    }
    return {name: srvf_of(blob(c), config, name) for name, c in specs.items()}


@pytest.fixture
def ensemble(shapes) -> ShapeEnsemble:
    return ShapeEnsemble(shapes=tuple(shapes.values()))


@pytest.fixture
def two_families(config) -> ShapeEnsemble:
    """Three two-lobed and three three-lobed shapes with a 0/1 covariate."""
    rng = np.random.default_rng(7)
    shapes, covariates = [], {}
    for group, base in enumerate(([0.3, 0.0], [0.0, 0.25])):
        for i in range(3):
            shape_id = f"g{group}_{i}"
            coefficients = np.array(base) + 0.02 * rng.standard_normal(2)
            shapes.append(srvf_of(blob(coefficients), config, shape_id))
            covariates[shape_id] = {"group": group, "survival": float(10 + 10 * group + i)}
    return ShapeEnsemble(shapes=tuple(shapes), covariates=covariates)
