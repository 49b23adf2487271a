import logging

import numpy as np

from app.commands.common import (
    ConfigOption,
    ManifestOption,
    ModeOption,
    OutOption,
    SeedOption,
    WorkersOption,
    build_config,
    curve_points,
)
from app.core.exceptions import MeanNotConverged
from app.models.karcher import KarcherMean
from app.models.spca import SpcaModel
from app.schemas.shape import SrvfOut
from app.schemas.spca import SpcaModelOut
from app.services import svg
from app.services.ensemble_io import load_ensemble, write_json, write_points, write_table
from app.services.run_service import RunService
from app.services.shapestats import fit_spca, pointwise_deformation, principal_direction_path

logger = logging.getLogger(__name__)


def spca_payload(karcher: KarcherMean, model: SpcaModel, digest: str) -> SpcaModelOut:
    return SpcaModelOut(
        config_digest=digest,
        mode=karcher.mode,
        mean=SrvfOut.model_validate(model.mean),
        ids=list(model.ids),
        eigenvalues=model.eigenvalues,
        eigenvectors=model.eigenvectors,
        coefficients=model.coefficients,
        total_variance=model.total_variance,
        scales=list(model.scales),
        cumulative_variance=model.cumulative_variance(),
        mean_converged=karcher.converged,
        mean_iterations=karcher.iterations,
        variance_history=list(karcher.variance_history),
    )


def write_coefficients(path, model: SpcaModel, digest: str) -> None:
    header = ["id", "scale", *[f"PC{j + 1}" for j in range(model.rank)]]
    rows = [[shape_id, model.scales[i] if model.scales else None, *model.coefficients[i]] for i, shape_id in enumerate(model.ids)]
    write_table(path, header, rows, digest)


def run(
    manifest: ManifestOption,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    workers: WorkersOption = None,
):
    """Karcher mean, shape PCA, principal coefficients and principal-direction renders."""
    config = build_config(config_path, out, seed, mode, workers)
    with RunService("mean-pca", config, parameters={"manifest": str(manifest)}) as run_:
        ensemble = load_ensemble(manifest, config)
        karcher, model = fit_spca(ensemble, config.mode, config)

        write_json(run_.output("spca.json"), spca_payload(karcher, model, run_.digest))
        write_coefficients(run_.output("coefficients.csv"), model, run_.digest)
        mean_points = curve_points(model.mean)
        write_points(run_.output("mean.csv"), mean_points)
        svg.curve_rows([("Karcher mean", [mean_points])]).save(run_.output("mean.svg"))

        steps = sorted({float(t) for t in config.direction_steps} | {-float(t) for t in config.direction_steps})
        zero = steps.index(0.0) if 0.0 in steps else None
        for j in range(1, min(config.render_directions, model.rank) + 1):
            shapes = principal_direction_path(model, j, steps, config)
            share = model.eigenvalues[j - 1] / model.total_variance
            row = [(f"PC{j} ({share:.1%})", [curve_points(q) for q in shapes])]
            svg.curve_rows(row, captions=[f"t={t:g}" for t in steps], highlight=zero).save(run_.output(f"pc{j}_path.svg"))
            magnitude = pointwise_deformation(model, j)
            svg.deformation_curve(mean_points, magnitude, label=f"PC{j} |deformation| max {np.max(magnitude):.3f}").save(
                run_.output(f"pc{j}_deformation.svg")
            )
        logger.info(f"sPCA: {model.rank} directions, total variance {model.total_variance:.6e}")
        if not karcher.converged:
            raise MeanNotConverged(karcher.iterations, karcher.update_norm)
