import logging
from typing import Annotated, Optional

import typer

from app.commands.common import (
    ConfigOption,
    ManifestOption,
    ModeOption,
    OutOption,
    SeedOption,
    WorkersOption,
    build_config,
)
from app.core.exceptions import InvalidParameter
from app.schemas.inference import PermutationRowOut
from app.services.ensemble_io import load_ensemble, write_json, write_table
from app.services.inference import permutation_test_mean_shape, permutation_tests_by_cutoff
from app.services.run_service import RunService

logger = logging.getLogger(__name__)


def run(
    manifest: ManifestOption,
    covariate: Annotated[str, typer.Option("--covariate", help="Covariate giving the groups (0/1, or numeric with --cutoff).")],
    cutoffs: Annotated[Optional[list[float]], typer.Option("--cutoff", help="Dichotomize at value <= cutoff vs > cutoff; repeatable.")] = None,
    permutations: Annotated[Optional[int], typer.Option("--permutations", help="Number of label permutations B.")] = None,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    workers: WorkersOption = None,
):
    """Permutation test for a difference in mean shape between two groups."""
    config = build_config(config_path, out, seed, mode, workers, permutations=permutations)
    parameters = {"manifest": str(manifest), "covariate": covariate, "cutoffs": list(cutoffs or [])}
    with RunService("permtest", config, parameters=parameters) as run_:
        ensemble = load_ensemble(manifest, config)
        rows: list[PermutationRowOut] = []
        if cutoffs:
            for test in permutation_tests_by_cutoff(ensemble, covariate, cutoffs, config.permutations, config.rng_seed, config.mode, config):
                rows.append(PermutationRowOut(covariate=covariate, cutoff=test.cutoff, **_fields(test.result)))
        else:
            values = ensemble.covariate(covariate)
            present = [i for i, v in enumerate(values) if v is not None]
            if not present:
                raise InvalidParameter("covariate", f"no shape has a value for '{covariate}'")
            result = permutation_test_mean_shape(
                ensemble.subset(present), [values[i] for i in present], config.permutations, config.rng_seed, config.mode, config
            )
            rows.append(PermutationRowOut(covariate=covariate, **_fields(result)))

        write_table(
            run_.output("permtest.csv"),
            ["covariate", "cutoff", "group_1", "group_0", "observed", "p_value", "B"],
            [[r.covariate, r.cutoff, r.group_sizes[0], r.group_sizes[1], r.observed_statistic, r.p_value, r.B] for r in rows],
            run_.digest,
        )
        write_json(run_.output("permtest.json"), {"config_digest": run_.digest, "mode": config.mode, "rows": [r.model_dump(mode="json") for r in rows]})
        for r in rows:
            logger.info(f"{covariate} cutoff={r.cutoff}: observed {r.observed_statistic:.6f}, p = {r.p_value:.4f}")


def _fields(result) -> dict:
    return {
        "observed_statistic": result.observed_statistic,
        "p_value": result.p_value,
        "B": result.B,
        "rng_seed": result.rng_seed,
        "group_sizes": list(result.group_sizes),
    }
