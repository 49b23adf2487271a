import logging

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
from app.schemas.spca import ReconstructionReportOut
from app.services import svg
from app.services.ensemble_io import load_ensemble, write_json, write_table
from app.services.run_service import RunService
from app.services.shapestats import loo_reconstruction

logger = logging.getLogger(__name__)


def run(
    manifest: ManifestOption,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    workers: WorkersOption = None,
):
    """Leave-one-out reconstruction error with min/median/max overlays."""
    config = build_config(config_path, out, seed, mode, workers)
    with RunService("loo", config, parameters={"manifest": str(manifest)}) as run_:
        ensemble = load_ensemble(manifest, config)
        report = loo_reconstruction(ensemble, config.mode, config)
        order = report.order_statistics()

        payload = ReconstructionReportOut(
            config_digest=run_.digest,
            mode=report.mode,
            ids=list(report.ids),
            per_shape_error=report.per_shape_error,
            fraction_of_max=report.fraction_of_max,
            mean=report.mean,
            std=report.std,
            median=report.median,
            median_absolute_deviation=report.median_absolute_deviation,
            basis_size=report.basis_size,
            order_statistics={name: report.ids[i] for name, i in order.items()},
        )
        write_json(run_.output("loo.json"), payload)
        write_table(
            run_.output("loo.csv"),
            ["id", "error", "fraction_of_max"],
            zip(report.ids, report.per_shape_error, report.fraction_of_max),
            run_.digest,
        )
        for name, i in order.items():
            truth, rebuilt = report.reconstructions[i]
            label = f"{report.ids[i]} E={report.per_shape_error[i]:.4g}"
            svg.overlays([(label, curve_points(truth), curve_points(rebuilt))]).save(run_.output(f"loo_{name}.svg"))
        logger.info(f"LOO median error {report.median:.6e} ({report.mode})")
