import logging
from typing import Annotated

import typer

from app.commands.common import (
    ConfigOption,
    ManifestOption,
    ModeOption,
    OutOption,
    SeedOption,
    build_config,
    curve_points,
    find_shape,
    require_converged,
)
from app.schemas.shape import GeodesicPathOut, GeodesicReport, RegistrationOut
from app.services import preshape, svg
from app.services.ensemble_io import load_ensemble, write_json
from app.services.registration import register_geodesic
from app.services.run_service import RunService

logger = logging.getLogger(__name__)


def run(
    id1: Annotated[str, typer.Option("--id1", help="First shape id.")],
    id2: Annotated[str, typer.Option("--id2", help="Second shape id.")],
    manifest: ManifestOption,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
):
    """Geodesic between two shapes, rendered with its elastic and nonelastic versions."""
    config = build_config(config_path, out, seed, mode)
    with RunService("geodesic", config, parameters={"manifest": str(manifest), "id1": id1, "id2": id2}) as run_:
        ensemble = load_ensemble(manifest, config)
        q1, q2 = find_shape(ensemble, id1), find_shape(ensemble, id2)

        rows, results = [], {}
        for row_mode in ("elastic", "nonelastic"):
            reg, _ = register_geodesic(q1, q2, row_mode, config)
            path = preshape.geodesic(q1, reg.registered_srvf, k=config.render_points, config=config)
            results[row_mode] = (reg, path)
            rows.append((f"{row_mode} d={reg.distance:.4f}", [curve_points(q) for q in path.srvfs()]))

        reg, path = results[config.mode]
        report = GeodesicReport(
            config_digest=run_.digest,
            id1=id1,
            id2=id2,
            mode=config.mode,
            distance=reg.distance,
            nonelastic_distance=results["nonelastic"][0].distance,
            registration=RegistrationOut.model_validate(reg),
            path=GeodesicPathOut.model_validate(path),
        )
        write_json(run_.output("geodesic.json"), report)
        captions = [f"tau={j / (config.render_points - 1):.2f}" for j in range(config.render_points)]
        svg.curve_rows(rows, captions=captions).save(run_.output("geodesic.svg"))
        logger.info(f"d({id1}, {id2}) = {reg.distance:.6f} ({config.mode})")
        require_converged(run_, "geodesic", [id2] if not (reg.geodesic_converged and path.converged) else [])
