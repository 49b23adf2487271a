import logging
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import squareform

from app.core.config import AnalysisConfig, RegistrationMode, settings
from app.core.exceptions import (
    GroupTooSmall,
    IncompleteResult,
    InvalidCounts,
    InvalidDistanceMatrix,
    InvalidParameter,
    NonBinaryCovariate,
)
from app.models.contour import Srvf
from app.models.ensemble import CovariateValue, ShapeEnsemble
from app.models.inference import (
    ClusterAssignment,
    ClusterSummary,
    CovariateEnrichment,
    CutoffTest,
    EnrichmentFlag,
    EnrichmentResult,
    MdsEmbedding,
    PermutationTestResult,
)
from app.models.karcher import KarcherMean
from app.services.parallel import failures, map_ordered
from app.services.registration import register
from app.services.shapestats import karcher_mean

logger = logging.getLogger(__name__)

# --- Enrichment ---
ENRICHED_ABOVE = 0.75
ENRICHED_BELOW = 0.25
MIN_DRAWS = 10_000

MIN_GROUP_SIZE = 2
MIN_PERMUTATIONS = 99
# Permuted statistics within this of the observed one count as ties.
TIE_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-8


def validate_distance_matrix(D: ArrayLike) -> NDArray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidDistanceMatrix(f"expected a square matrix, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InvalidDistanceMatrix("non-finite entries")
    if np.any(D < 0):
        raise InvalidDistanceMatrix("negative entries")
    if np.abs(np.diag(D)).max(initial=0.0) > SYMMETRY_TOLERANCE:
        raise InvalidDistanceMatrix("non-zero diagonal")
    if np.abs(D - D.T).max(initial=0.0) > SYMMETRY_TOLERANCE:
        raise InvalidDistanceMatrix("not symmetric")
    return D


def _first_appearance(labels: NDArray) -> NDArray:
    """Renames cluster labels to 1..k in order of first appearance."""
    mapping: dict[int, int] = {}
    for label in labels:
        mapping.setdefault(int(label), len(mapping) + 1)
    return np.array([mapping[int(label)] for label in labels])


def hierarchical_cluster(D: ArrayLike, k: int, ids: Sequence[str] = ()) -> ClusterAssignment:
    """Complete-linkage agglomeration cut into exactly k clusters."""
    D = validate_distance_matrix(D)
    n = len(D)
    if not 1 <= k <= n:
        raise InvalidParameter("k", f"needs 1 <= k <= n={n}, got {k}")
    if n == 1:
        return ClusterAssignment(labels=(1,), k=1, merge_heights=np.zeros(0), ids=ids)
    Z = linkage(squareform(D, checks=False), method="complete")
    labels = _first_appearance(cut_tree(Z, n_clusters=k).ravel())
    logger.debug(f"Complete linkage on {n} shapes; top merge height {Z[-1, 2]:.4f}")
    return ClusterAssignment(labels=labels, k=k, merge_heights=Z[:, 2], ids=ids)


def classical_mds(D: ArrayLike, dims: int) -> MdsEmbedding:
    """Torgerson scaling: B = -1/2 J D^2 J, top eigenpairs, negative ones dropped."""
    D = validate_distance_matrix(D)
    if dims < 1:
        raise InvalidParameter("dims", f"must be >= 1, got {dims}")
    n = len(D)
    H = np.eye(n) - np.ones((n, n)) / n
    B = -H @ (D ** 2) @ H / 2.0
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    total = np.abs(evals).sum()
    negative_mass = float(np.abs(evals[evals < 0]).sum() / total) if total > 0 else 0.0
    kept = np.clip(evals[:dims], 0.0, None)
    coordinates = evecs[:, :dims] * np.sqrt(kept)
    if coordinates.shape[1] < dims:
        coordinates = np.hstack([coordinates, np.zeros((n, dims - coordinates.shape[1]))])
        kept = np.concatenate([kept, np.zeros(dims - len(kept))])
    # Fix each axis' sign so the largest-magnitude coordinate is positive.
    for j in range(dims):
        pivot = np.argmax(np.abs(coordinates[:, j]))
        if coordinates[pivot, j] < 0:
            coordinates[:, j] *= -1.0
    if negative_mass > 0:
        logger.debug(f"MDS: {negative_mass:.2%} of eigenvalue mass is negative")
    return MdsEmbedding(coordinates=coordinates, eigenvalues=kept, negative_mass=negative_mass)


def _binary_labels(labels: ArrayLike) -> NDArray:
    labels = np.asarray(labels)
    try:
        as_int = labels.astype(int)
        exact = np.array_equal(as_int, labels.astype(float))
    except (TypeError, ValueError):
        exact = False
    if not exact or labels.ndim != 1 or not np.all(np.isin(as_int, (0, 1))):
        raise InvalidParameter("labels", "group labels must be 0/1")
    return as_int


def _group_mean(ensemble: ShapeEnsemble, mask: NDArray, start: Srvf, mode: RegistrationMode, config: AnalysisConfig) -> Srvf:
    """Karcher mean of one group, warm-started at the global mean."""
    return karcher_mean(ensemble.subset(np.flatnonzero(mask)), mode, config, initial=start).mean


def _mean_distance(ensemble: ShapeEnsemble, start: Srvf, labels: NDArray, mode: RegistrationMode, config: AnalysisConfig) -> float:
    mask = labels == 1
    first = _group_mean(ensemble, mask, start, mode, config)
    second = _group_mean(ensemble, ~mask, start, mode, config)
    return register(first, second, mode, config)[0]


def _check_groups(labels: ArrayLike, B: int) -> tuple[NDArray, tuple[int, int]]:
    labels = _binary_labels(labels)
    sizes = (int(np.sum(labels == 1)), int(np.sum(labels == 0)))
    if min(sizes) < MIN_GROUP_SIZE:
        raise GroupTooSmall(sizes)
    if B < MIN_PERMUTATIONS:
        raise InvalidParameter("B", f"at least {MIN_PERMUTATIONS} permutations required, got {B}")
    return labels, sizes


def permutation_test(
    statistic: Callable[[NDArray], float],
    labels: ArrayLike,
    B: int,
    rng_seed: int,
    workers: int = 1,
) -> PermutationTestResult:
    """Two-group permutation test of any statistic of the 0/1 labels.

    p = (1 + #{permuted >= observed}) / (B + 1). Permutation b draws from its own
    child of SeedSequence(rng_seed), so results do not depend on worker count.
    """
    labels, sizes = _check_groups(labels, B)
    observed = float(statistic(labels))
    logger.info(f"STEP 1: Observed statistic {observed:.6f} (groups {sizes}); running {B} permutations")

    children = np.random.SeedSequence(rng_seed).spawn(B)
    outcomes = map_ordered(lambda child: statistic(np.random.default_rng(child).permutation(labels)), children, workers)
    failed = failures(outcomes)
    if failed:
        raise IncompleteResult("permutation test", [f"permutation {i}" for i, _ in failed], max(e.exit_code for _, e in failed))

    permuted = np.array(outcomes, dtype=float)
    p_value = (1 + int(np.sum(permuted >= observed - TIE_TOLERANCE))) / (B + 1)
    logger.info(f"STEP 2: p = {p_value:.4f}")
    return PermutationTestResult(
        observed_statistic=observed, permutation_statistics=permuted, p_value=p_value,
        B=B, rng_seed=rng_seed, group_sizes=sizes,
    )


def permutation_test_mean_shape(
    ensemble: ShapeEnsemble,
    labels: ArrayLike,
    B: Optional[int] = None,
    rng_seed: Optional[int] = None,
    mode: Optional[RegistrationMode] = None,
    config: Optional[AnalysisConfig] = None,
    global_mean: Optional[KarcherMean] = None,
) -> PermutationTestResult:
    """Shape distance between the two group Karcher means, against B label permutations.

    Every group mean, observed or permuted, re-registers its members until the
    Karcher update falls below mean_tol, starting from the global mean.
    """
    config = config or settings
    mode = mode or config.mode
    B = B if B is not None else config.permutations
    rng_seed = config.rng_seed if rng_seed is None else rng_seed
    if len(labels) != ensemble.n:
        raise InvalidParameter("labels", f"{len(labels)} labels for {ensemble.n} shapes")
    labels, _ = _check_groups(labels, B)

    if global_mean is None:
        global_mean = karcher_mean(ensemble, mode, config)
    start = global_mean.mean
    return permutation_test(lambda perm: _mean_distance(ensemble, start, perm, mode, config), labels, B, rng_seed, config.workers)


def dichotomize(values: Sequence[Optional[float]], cutoff: float) -> tuple[list[int], NDArray]:
    """Indices with a value, and labels 1 for value > cutoff, 0 otherwise."""
    present = [i for i, v in enumerate(values) if v is not None]
    labels = np.array([1 if float(values[i]) > cutoff else 0 for i in present], dtype=int)
    return present, labels


def permutation_tests_by_cutoff(
    ensemble: ShapeEnsemble,
    covariate: str,
    cutoffs: Iterable[float],
    B: Optional[int] = None,
    rng_seed: Optional[int] = None,
    mode: Optional[RegistrationMode] = None,
    config: Optional[AnalysisConfig] = None,
) -> list[CutoffTest]:
    """One permutation test per cutoff of a numeric covariate, sharing one global mean."""
    config = config or settings
    mode = mode or config.mode
    present = [i for i, v in enumerate(ensemble.covariate(covariate)) if v is not None]
    if not present:
        raise InvalidParameter("covariate", f"no shape has a value for '{covariate}'")
    subset = ensemble.subset(present)
    values = subset.covariate(covariate)
    global_mean = karcher_mean(subset, mode, config)
    rows = []
    for cutoff in cutoffs:
        _, labels = dichotomize(values, cutoff)
        result = permutation_test_mean_shape(subset, labels, B, rng_seed, mode, config, global_mean=global_mean)
        rows.append(CutoffTest(covariate=covariate, cutoff=float(cutoff), result=result))
    return rows


def _check_counts(y1: int, n1: int, y2: int, n2: int, allow_empty: bool) -> None:
    least = 0 if allow_empty else 1
    if not (0 <= y1 <= n1 and 0 <= y2 <= n2 and n1 >= least and n2 >= least):
        raise InvalidCounts(y1, n1, y2, n2)


def _beta_comparison(y1: int, n1: int, y2: int, n2: int, draws: int, rng: np.random.Generator) -> float:
    """Monte Carlo P(theta1 > theta2) under independent Beta(y + 1, n - y + 1) posteriors."""
    theta1 = rng.beta(y1 + 1, n1 - y1 + 1, size=draws)
    theta2 = rng.beta(y2 + 1, n2 - y2 + 1, size=draws)
    return float(np.mean(theta1 > theta2))


def enrichment_probability(
    y1: int, n1: int, y2: int, n2: int,
    draws: Optional[int] = None,
    rng_seed: Optional[int] = None,
    config: Optional[AnalysisConfig] = None,
) -> EnrichmentResult:
    config = config or settings
    draws = draws if draws is not None else config.draws
    rng_seed = config.rng_seed if rng_seed is None else rng_seed
    _check_counts(y1, n1, y2, n2, allow_empty=False)
    if draws < MIN_DRAWS:
        raise InvalidParameter("draws", f"at least {MIN_DRAWS} draws required, got {draws}")
    probability = _beta_comparison(y1, n1, y2, n2, draws, np.random.default_rng(rng_seed))
    return EnrichmentResult(probability=probability, y1=y1, n1=n1, y2=y2, n2=n2, draws=draws, rng_seed=rng_seed)


def flag_for(probability: float) -> EnrichmentFlag:
    if probability > ENRICHED_ABOVE:
        return EnrichmentFlag.CLUSTER_1
    if probability < ENRICHED_BELOW:
        return EnrichmentFlag.CLUSTER_2
    return EnrichmentFlag.NONE


def _is_binary_number(value: Any) -> bool:
    return isinstance(value, (bool, int, float, np.integer, np.floating)) and float(value) in (0.0, 1.0)


def code_covariate(name: str, values: Sequence[Optional[CovariateValue]]) -> list[tuple[str, Optional[str], list[Optional[int]]]]:
    """0/1 codings of one covariate: (coded name, level, codes with None for missing).

    Numeric 0/1 and booleans code as themselves; a categorical covariate codes
    one indicator per level (one-vs-rest), a two-level one only its second level.
    """
    present = [v for v in values if v is not None]
    if not present:
        raise NonBinaryCovariate(name)
    if all(_is_binary_number(v) for v in present):
        return [(name, None, [None if v is None else int(float(v)) for v in values])]
    if all(isinstance(v, str) for v in present):
        levels = sorted(set(present))
        chosen = levels[1:] if len(levels) == 2 else levels
        return [
            (f"{name}={level}", level, [None if v is None else int(v == level) for v in values])
            for level in chosen
        ]
    raise NonBinaryCovariate(name)


def _enrichment_counts(codes: Sequence[Optional[int]], labels: Sequence[int]) -> tuple[int, int, int, int]:
    """y1 = 1s in cluster 1, n1 = all 1s, y2 = 0s in cluster 1, n2 = all 0s."""
    pairs = [(c, lab) for c, lab in zip(codes, labels) if c is not None]
    y1 = sum(1 for c, lab in pairs if c == 1 and lab == 1)
    n1 = sum(1 for c, _ in pairs if c == 1)
    y2 = sum(1 for c, lab in pairs if c == 0 and lab == 1)
    n2 = sum(1 for c, _ in pairs if c == 0)
    return y1, n1, y2, n2


def enrichment_screen(
    assignment: ClusterAssignment,
    covariates: Mapping[str, Mapping[str, CovariateValue]],
    names: Optional[Sequence[str]] = None,
    draws: Optional[int] = None,
    rng_seed: Optional[int] = None,
    config: Optional[AnalysisConfig] = None,
) -> list[CovariateEnrichment]:
    """Enrichment probability for every binary-codable covariate of a 2-cluster split."""
    config = config or settings
    draws = draws if draws is not None else config.draws
    rng_seed = config.rng_seed if rng_seed is None else rng_seed
    if assignment.k != 2:
        raise InvalidParameter("k", f"enrichment needs a 2-cluster assignment, got k={assignment.k}")
    if draws < MIN_DRAWS:
        raise InvalidParameter("draws", f"at least {MIN_DRAWS} draws required, got {draws}")
    ids = assignment.ids
    if len(ids) != len(assignment.labels):
        raise InvalidParameter("assignment", "cluster labels need shape ids")
    if names is None:
        names = sorted({name for row in covariates.values() for name in row})

    coded = []
    for name in names:
        values = [covariates.get(shape_id, {}).get(name) for shape_id in ids]
        try:
            coded.extend(code_covariate(name, values))
        except NonBinaryCovariate as e:
            logger.warning(f"Skipping covariate '{name}': {e.detail}")

    children = np.random.SeedSequence(rng_seed).spawn(len(coded))

    def screen_one(item: tuple[int, tuple[str, Optional[str], list[Optional[int]]]]) -> CovariateEnrichment:
        index, (coded_name, level, codes) = item
        y1, n1, y2, n2 = _enrichment_counts(codes, assignment.labels)
        _check_counts(y1, n1, y2, n2, allow_empty=True)
        probability = _beta_comparison(y1, n1, y2, n2, draws, np.random.default_rng(children[index]))
        result = EnrichmentResult(probability=probability, y1=y1, n1=n1, y2=y2, n2=n2, draws=draws, rng_seed=rng_seed)
        return CovariateEnrichment(name=coded_name, result=result, flag=flag_for(probability), level=level)

    logger.info(f"STEP 1: Enrichment screen over {len(coded)} coded covariates ({draws} draws each)")
    outcomes = map_ordered(screen_one, list(enumerate(coded)), config.workers)
    failed = failures(outcomes)
    if failed:
        raise IncompleteResult("enrichment screen", [coded[i][0] for i, _ in failed], max(e.exit_code for _, e in failed))
    flagged = sum(1 for row in outcomes if row.flag != EnrichmentFlag.NONE)
    logger.info(f"STEP 2: {flagged} of {len(outcomes)} covariates flagged")
    return outcomes


def survival_summary(assignment: ClusterAssignment, values: Sequence[Optional[float]]) -> list[ClusterSummary]:
    """Per cluster: size, number with a value, mean and median of the value."""
    summaries = []
    for label in range(1, assignment.k + 1):
        members = assignment.members(label)
        observed = np.array([float(values[i]) for i in members if values[i] is not None])
        summaries.append(ClusterSummary(
            label=label,
            size=len(members),
            observed=len(observed),
            mean=float(observed.mean()) if len(observed) else None,
            median=float(np.median(observed)) if len(observed) else None,
        ))
    return summaries
