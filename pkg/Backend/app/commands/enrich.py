import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.commands.common import ConfigOption, OutOption, SeedOption, build_config
from app.core.exceptions import ManifestError
from app.models.ensemble import CovariateValue
from app.models.inference import ClusterAssignment
from app.schemas.inference import EnrichmentRowOut
from app.services import svg
from app.services.ensemble_io import load_manifest, read_table, write_json, write_table
from app.services.inference import enrichment_screen
from app.services.run_service import RunService

logger = logging.getLogger(__name__)


def parse_cell(text: str) -> Optional[CovariateValue]:
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def read_assignment(path: Path) -> ClusterAssignment:
    header, rows = read_table(path)
    if header[:2] != ["id", "cluster"]:
        raise ManifestError(None, f"'{path}' must have columns id,cluster")
    try:
        labels = [int(row[1]) for row in rows]
    except (ValueError, IndexError) as e:
        raise ManifestError(None, f"bad cluster label in '{path}': {e}") from e
    return ClusterAssignment(labels=labels, k=len(set(labels)), merge_heights=[], ids=[row[0] for row in rows])


def read_covariates(path: Path) -> dict[str, dict[str, Optional[CovariateValue]]]:
    header, rows = read_table(path)
    if not header or header[0] != "id":
        raise ManifestError(None, f"'{path}' must start with an id column")
    return {row[0]: {name: parse_cell(cell) for name, cell in zip(header[1:], row[1:])} for row in rows}


def run(
    labels: Annotated[Path, typer.Option("--labels", help="labels.csv written by the cluster command.")],
    manifest: Annotated[Optional[Path], typer.Option("--manifest", help="Manifest whose covariates are screened.")] = None,
    covariates: Annotated[Optional[Path], typer.Option("--covariates", help="CSV with an id column and one column per covariate.")] = None,
    draws: Annotated[Optional[int], typer.Option("--draws", help="Monte Carlo draws per covariate.")] = None,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
):
    """Bayesian enrichment of binary covariates across two clusters."""
    config = build_config(config_path, out, seed, draws=draws)
    parameters = {"labels": str(labels), "manifest": str(manifest) if manifest else None, "covariates": str(covariates) if covariates else None}
    with RunService("enrich", config, parameters=parameters) as run_:
        assignment = read_assignment(labels)
        if covariates is not None:
            table = read_covariates(covariates)
        elif manifest is not None:
            table = {entry.id: dict(entry.covariates) for entry in load_manifest(manifest).shapes}
        else:
            raise ManifestError(None, "either --covariates or --manifest is required")

        rows = enrichment_screen(assignment, table, draws=config.draws, rng_seed=config.rng_seed, config=config)
        out_rows = [
            EnrichmentRowOut(
                name=row.name, level=row.level, probability=row.result.probability,
                y1=row.result.y1, n1=row.result.n1, y2=row.result.y2, n2=row.result.n2,
                draws=row.result.draws, flag=row.flag,
            )
            for row in rows
        ]
        write_table(
            run_.output("enrichment.csv"),
            ["covariate", "probability", "y1", "n1", "y2", "n2", "flag"],
            [[r.name, r.probability, r.y1, r.n1, r.y2, r.n2, r.flag.value] for r in out_rows],
            run_.digest,
        )
        write_json(run_.output("enrichment.json"), {"config_digest": run_.digest, "rows": [r.model_dump(mode="json") for r in out_rows]})
        svg.enrichment_plot([r.name for r in out_rows], [r.probability for r in out_rows]).save(run_.output("enrichment.svg"))
        logger.info(f"Screened {len(out_rows)} covariates")
