import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.commands.common import ConfigOption, OutOption, SeedOption, build_config, curve_points
from app.schemas.manifest import Manifest, ManifestEntry
from app.schemas.spca import SpcaModelOut
from app.services.ensemble_io import read_json, write_json, write_points
from app.services.run_service import RunService
from app.services.shapestats import random_shapes

logger = logging.getLogger(__name__)


def run(
    model_path: Annotated[Path, typer.Option("--model", help="spca.json written by mean-pca.")],
    count: Annotated[int, typer.Option("--count", min=0, help="Number of shapes to draw.")],
    kappa: Annotated[Optional[int], typer.Option("--kappa", help="Principal directions used; default all.")] = None,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
):
    """Random shapes from the wrapped normal model around the mean."""
    config = build_config(config_path, out, seed)
    with RunService("simulate", config, parameters={"model": str(model_path), "count": count, "kappa": kappa}) as run_:
        model = read_json(model_path, SpcaModelOut).to_model()
        kappa = model.rank if kappa is None else kappa
        shapes = random_shapes(model, count, config.rng_seed, kappa, config)
        entries = []
        for shape in shapes:
            name = f"{shape.id}.csv"
            write_points(run_.output(name), curve_points(shape))
            entries.append(ManifestEntry(id=shape.id, path=name))
        if entries:
            write_json(run_.output("manifest.json"), Manifest(entries))
        logger.info(f"Drew {count} shapes with kappa={kappa} (seed {config.rng_seed})")
