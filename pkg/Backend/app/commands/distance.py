import logging

from app.commands.common import (
    ConfigOption,
    ManifestOption,
    ModeOption,
    OutOption,
    SeedOption,
    WorkersOption,
    build_config,
    require_converged,
)
from app.schemas.shape import DistanceMatrixMeta
from app.services.ensemble_io import load_ensemble, write_distance_matrix, write_json
from app.services.registration import pairwise_distance_matrix
from app.services.run_service import RunService

logger = logging.getLogger(__name__)


def run(
    manifest: ManifestOption,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    workers: WorkersOption = None,
):
    """Pairwise shape distance matrix of every shape in the manifest."""
    config = build_config(config_path, out, seed, mode, workers)
    with RunService("distance", config, parameters={"manifest": str(manifest)}) as run_:
        ensemble = load_ensemble(manifest, config)
        matrix = pairwise_distance_matrix(ensemble, config.mode, config)

        write_distance_matrix(run_.output("distances.csv"), matrix, run_.digest)
        meta = DistanceMatrixMeta(
            config_digest=run_.digest,
            mode=matrix.mode,
            m=config.m,
            seed_stride=config.effective_seed_stride,
            ids=list(matrix.ids),
            max_asymmetry=matrix.max_asymmetry,
            max_distance=float(matrix.values.max()),
            unconverged_pairs=[list(p) for p in matrix.unconverged_pairs],
        )
        write_json(run_.output("distances.json"), meta)
        logger.info(f"Wrote {matrix.n}x{matrix.n} {matrix.mode} distance matrix to '{run_.out_dir}'")
        require_converged(run_, "distance matrix", sorted({i for pair in matrix.unconverged_pairs for i in pair}))
