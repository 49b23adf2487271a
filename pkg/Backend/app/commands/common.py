"""Options and helpers shared by every command."""
from pathlib import Path
from typing import Annotated, Optional

import typer

from app.core.config import AnalysisConfig
from app.core.exceptions import IncompleteResult, ManifestError, NOT_CONVERGED
from app.models.contour import Srvf
from app.models.ensemble import ShapeEnsemble
from app.services.contour import from_srvf
from app.services.run_service import RunService

ManifestOption = Annotated[Path, typer.Option("--manifest", help="JSON manifest listing shape ids, contour files and covariates.")]
ConfigOption = Annotated[Optional[Path], typer.Option("--config", help="Flat JSON config file; flags override it.")]
OutOption = Annotated[Optional[Path], typer.Option("--out", help="Output directory.")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="RNG seed.")]
ModeOption = Annotated[Optional[str], typer.Option("--mode", help="Registration mode: elastic or nonelastic.")]
WorkersOption = Annotated[Optional[int], typer.Option("--workers", help="Worker threads for per-pair and per-shape work.")]


def build_config(
    config_path: Optional[Path] = None,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    workers: Optional[int] = None,
    **overrides,
) -> AnalysisConfig:
    """JSON config merged with flags; flags left unset keep the file or default value."""
    return AnalysisConfig.load(
        config_path,
        output_dir=str(out) if out is not None else None,
        rng_seed=seed,
        mode=mode,
        workers=workers,
        **overrides,
    )


def find_shape(ensemble: ShapeEnsemble, shape_id: str) -> Srvf:
    if shape_id not in ensemble.ids:
        raise ManifestError(shape_id, "id not found in manifest")
    return ensemble.shapes[ensemble.index(shape_id)]


def curve_points(q: Srvf):
    contour, _ = from_srvf(q)
    return contour.points


def require_converged(run_: RunService, what: str, unconverged_ids: list[str]) -> None:
    """Raises after outputs are written when some computation did not converge."""
    if unconverged_ids:
        run_.warn(f"{what} did not converge for: {', '.join(unconverged_ids)}")
        raise IncompleteResult(f"{what} (not converged)", unconverged_ids, NOT_CONVERGED)

