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
from app.schemas.inference import ClusterReport
from app.services import svg
from app.services.ensemble_io import load_ensemble, write_distance_matrix, write_json, write_table
from app.services.inference import classical_mds, hierarchical_cluster, survival_summary
from app.services.registration import pairwise_distance_matrix
from app.services.run_service import RunService
from app.services.shapestats import fit_spca

logger = logging.getLogger(__name__)


def run(
    manifest: ManifestOption,
    config_path: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    workers: WorkersOption = None,
):
    """Complete-linkage clusters, MDS plot, cluster-wise sPCA and survival summaries."""
    config = build_config(config_path, out, seed, mode, workers)
    with RunService("cluster", config, parameters={"manifest": str(manifest)}) as run_:
        ensemble = load_ensemble(manifest, config)
        if ensemble.n == 1:
            matrix_values, ids = [[0.0]], ensemble.ids
        else:
            matrix = pairwise_distance_matrix(ensemble, config.mode, config)
            write_distance_matrix(run_.output("distances.csv"), matrix, run_.digest)
            matrix_values, ids = matrix.values, list(matrix.ids)

        assignment = hierarchical_cluster(matrix_values, min(config.k_clusters, ensemble.n), ids=ids)
        embedding = classical_mds(matrix_values, config.mds_dims)
        write_table(run_.output("labels.csv"), ["id", "cluster"], zip(ids, assignment.labels), run_.digest)
        write_table(
            run_.output("mds.csv"),
            ["id", *[f"dim{d + 1}" for d in range(config.mds_dims)]],
            [[shape_id, *embedding.coordinates[i]] for i, shape_id in enumerate(ids)],
            run_.digest,
        )
        write_json(run_.output("cluster.json"), ClusterReport(
            config_digest=run_.digest,
            k=assignment.k,
            linkage=assignment.linkage,
            ids=ids,
            labels=list(assignment.labels),
            merge_heights=assignment.merge_heights,
            mds_coordinates=embedding.coordinates,
            mds_eigenvalues=embedding.eigenvalues,
            mds_negative_mass=embedding.negative_mass,
        ))
        svg.scatter(embedding.coordinates, assignment.labels, ids).save(run_.output("mds.svg"))

        # Cluster-wise sPCA: cumulative variance per number of directions.
        variance_rows, unconverged = [], []
        for label in range(1, assignment.k + 1):
            members = assignment.members(label)
            karcher, model = fit_spca(ensemble.subset(members), config.mode, config)
            if not karcher.converged:
                unconverged.extend(ensemble.ids[i] for i in members)
            for r, (eigenvalue, cumulative) in enumerate(zip(model.eigenvalues, model.cumulative_variance()), start=1):
                variance_rows.append([label, len(members), r, eigenvalue, cumulative])
            logger.info(f"Cluster {label}: {len(members)} shapes, total variance {model.total_variance:.6e}")
        write_table(run_.output("cluster_variance.csv"), ["cluster", "size", "r", "eigenvalue", "cumulative_variance"], variance_rows, run_.digest)

        survival = ensemble.covariate(config.survival_covariate)
        if any(v is not None for v in survival):
            summaries = survival_summary(assignment, survival)
            write_table(
                run_.output("survival.csv"),
                ["cluster", "size", "observed", "mean", "median"],
                [[s.label, s.size, s.observed, s.mean, s.median] for s in summaries],
                run_.digest,
            )
        require_converged(run_, "cluster-wise Karcher mean", unconverged)
