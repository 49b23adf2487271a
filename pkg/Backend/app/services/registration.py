import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.ndimage import gaussian_filter1d

from app.core.config import AnalysisConfig, RegistrationMode, settings
from app.core.exceptions import IncompleteResult, InvalidParameter, InvalidWarp
from app.models.contour import Srvf
from app.models.ensemble import ShapeEnsemble
from app.models.preshape import GeodesicPath
from app.models.registration import DistanceMatrix, Registration
from app.services import preshape
from app.services.parallel import failures, map_ordered
from app.services.quadrature import inner, periodic_interp

logger = logging.getLogger(__name__)

# --- DP lattice ---
# Neighbour offsets (d_i, d_j), ordered by |log slope| so ties keep the
# slope closest to 1.
SLOPE_OFFSETS: tuple[tuple[int, int], ...] = tuple(
    sorted([(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)], key=lambda o: abs(np.log(o[1] / o[0])))
)

SLOPE_RANGE = (min(dj / di for di, dj in SLOPE_OFFSETS), max(dj / di for di, dj in SLOPE_OFFSETS))
SLOPE_SLACK = 1e-9

# --- Sub-grid refinement ---
# Candidates on each side of a node, starting spacing in grid cells, passes
# per spacing and the relative gain a pass must bring.
SUBGRID_STEPS = 4
SUBGRID_START = 0.5
SUBGRID_PASSES = 3
SUBGRID_GAIN = 1e-9
# Objectives below this are already an exact match.
EXACT_MATCH = 1e-14

RANK_TOLERANCE = 1e-14
WARP_ENDPOINT_TOLERANCE = 1e-12
MIN_SLOPE = 1e-8
# Registered distances above this are reported; d_S is bounded by pi/2.
DISTANCE_BOUND = np.pi / 2 + 1e-3


@dataclass
class _Alignment:
    rotation: NDArray
    warp: NDArray
    objective: float
    rounds: int = 0
    dp_cost: float = float("nan")
    converged: bool = True


def identity_warp(m: int) -> NDArray:
    return np.arange(m + 1) / m


def shift_samples(samples: NDArray, seed: int) -> NDArray:
    """Moves the starting point to sample index seed."""
    return np.roll(samples, -seed, axis=-2)


def rotate(samples: NDArray, rotation: NDArray) -> NDArray:
    return samples @ np.asarray(rotation).T


def _squared_distance(a: NDArray, b: NDArray) -> float:
    diff = a - b
    return float(inner(diff, diff))


def _rotation(a: NDArray, b: NDArray) -> tuple[NDArray, bool]:
    A = a.T @ b / len(a)
    U, S, Vt = np.linalg.svd(A)
    if S[0] < RANK_TOLERANCE:
        return np.eye(2), False
    d = 1.0 if np.linalg.det(U) * np.linalg.det(Vt) > 0 else -1.0
    return U @ np.diag([1.0, d]) @ Vt, True


def optimal_rotation(q1: Srvf, q2: Srvf) -> NDArray:
    """Rotation O in SO(2) minimizing ||q1 - O q2||; never a reflection."""
    a, b = np.asarray(q1.samples), np.asarray(q2.samples)
    if a.shape != b.shape:
        raise InvalidParameter("srvf pair", f"grid mismatch {a.shape} vs {b.shape}")
    rotation, full_rank = _rotation(a, b)
    if not full_rank:
        logger.warning(f"Cross-covariance of '{q1.id}' and '{q2.id}' is numerically zero; using the identity rotation.")
    return rotation


def _validate_warp(warp: ArrayLike, m: int) -> NDArray:
    warp = np.asarray(warp, dtype=float)
    if warp.shape != (m + 1,):
        raise InvalidWarp(f"expected {m + 1} samples, got shape {warp.shape}")
    if not np.all(np.isfinite(warp)):
        raise InvalidWarp("non-finite values")
    if np.any(np.diff(warp) <= 0):
        raise InvalidWarp("not strictly increasing")
    if not 0.0 <= warp[0] < 1.0:
        raise InvalidWarp(f"start {warp[0]} outside [0, 1)")
    if abs(warp[-1] - warp[0] - 1.0) > WARP_ENDPOINT_TOLERANCE:
        raise InvalidWarp(f"span {warp[-1] - warp[0]} is not one period")
    return warp


def apply_warp(samples: NDArray, warp: NDArray) -> NDArray:
    """(q o gamma) sqrt(gamma') on the grid, gamma' by forward differences."""
    m = len(samples)
    slopes = np.diff(warp) * m
    return periodic_interp(samples, warp[:-1] * m) * np.sqrt(slopes)[:, None]


def reparam_action(q: Srvf, warp: ArrayLike) -> Srvf:
    """Acts on q by a warp given as m + 1 samples on the closed grid.

    A warp starting at s/m with unit slope is a pure seed shift by s samples.
    """
    warp = _validate_warp(warp, q.m)
    return q.with_samples(apply_warp(np.asarray(q.samples), warp))


def _edge_costs(a: NDArray, b: NDArray) -> list[NDArray]:
    """Per offset, the L2 matching cost of the segment leaving lattice node (k, l)."""
    m = len(a)
    nodes = np.arange(m + 1)
    tables = []
    for di, dj in SLOPE_OFFSETS:
        slope = dj / di
        cost = np.zeros((m + 1, m + 1))
        for t in range(di):
            rows = a[np.mod(nodes + t, m)]
            cols = np.sqrt(slope) * periodic_interp(b, nodes + slope * t)
            cost += np.sum((rows[:, None, :] - cols[None, :, :]) ** 2, axis=-1)
        cost /= m
        cost[nodes + di > m, :] = np.inf
        cost[:, nodes + dj > m] = np.inf
        tables.append(cost)
    return tables


def dp_warp(a: NDArray, b: NDArray) -> tuple[NDArray, float]:
    """Piecewise-linear warp of b onto a minimizing the discretized L2 cost.

    Lattice paths run from (0, 0) to (m, m) through the slope offsets; returns
    the m + 1 warp samples and the optimal path cost.
    """
    m = len(a)
    tables = _edge_costs(a, b)
    energy = np.full((m + 1, m + 1), np.inf)
    energy[0, 0] = 0.0
    choice = np.full((m + 1, m + 1), -1, dtype=np.int8)
    for i in range(1, m + 1):
        for o, (di, dj) in enumerate(SLOPE_OFFSETS):
            if di > i:
                continue
            k = i - di
            candidate = np.full(m + 1, np.inf)
            candidate[dj:] = energy[k, :m + 1 - dj] + tables[o][k, :m + 1 - dj]
            better = candidate < energy[i]
            energy[i, better] = candidate[better]
            choice[i, better] = o

    i = j = m
    rows, cols = [m], [m]
    while i > 0 or j > 0:
        di, dj = SLOPE_OFFSETS[choice[i, j]]
        i, j = i - di, j - dj
        rows.append(i)
        cols.append(j)
    warp = np.interp(np.arange(m + 1), rows[::-1], cols[::-1]) / m
    warp[0], warp[-1] = 0.0, 1.0
    return warp, float(energy[m, m])


def smooth_warp(warp: NDArray, sigma: float) -> NDArray:
    """Gaussian smoothing of the warp slopes, re-integrated to keep both endpoints."""
    m = len(warp) - 1
    slopes = gaussian_filter1d(np.diff(warp) * m, sigma, mode="wrap")
    slopes = np.maximum(slopes, MIN_SLOPE)
    slopes *= m / slopes.sum()
    smoothed = np.concatenate(([0.0], np.cumsum(slopes) / m))
    smoothed[-1] = 1.0
    return smoothed


def _align_at_seed(a: NDArray, b: NDArray, config: AnalysisConfig, elastic: bool) -> _Alignment:
    """Alternates rotation and DP warp for one seed until the objective stalls."""
    rotation, _ = _rotation(a, b)
    best = _Alignment(rotation=rotation, warp=identity_warp(len(a)), objective=_squared_distance(a, rotate(b, rotation)))
    if not elastic:
        return best

    for round_ in range(1, config.rotation_rounds + 1):
        warp, dp_cost = dp_warp(a, rotate(b, best.rotation))
        warped = apply_warp(b, warp)
        rotation, _ = _rotation(a, warped)
        objective = _squared_distance(a, rotate(warped, rotation))
        if objective >= best.objective:
            break
        gain = (best.objective - objective) / max(best.objective, RANK_TOLERANCE)
        best = _Alignment(rotation=rotation, warp=warp, objective=objective, rounds=round_, dp_cost=dp_cost)
        if gain < config.rotation_tol:
            break
    else:
        best.converged = False
    return best


def _refine_smoothing(a: NDArray, b: NDArray, best: _Alignment, sigma: float) -> _Alignment:
    if sigma <= 0 or np.allclose(best.warp, identity_warp(len(a)), atol=WARP_ENDPOINT_TOLERANCE):
        return best
    warp = smooth_warp(best.warp, sigma)
    warped = apply_warp(b, warp)
    rotation, _ = _rotation(a, warped)
    objective = _squared_distance(a, rotate(warped, rotation))
    if objective < best.objective:
        return _Alignment(rotation, warp, objective, best.rounds, best.dp_cost, best.converged)
    return best


def subgrid_warp(a: NDArray, b: NDArray, warp: NDArray, spacing: float) -> tuple[NDArray, float]:
    """One DP pass over warp node positions near the current warp.

    Node i may move by up to SUBGRID_STEPS * spacing grid cells while both
    endpoints stay fixed and every slope stays inside the lattice slope range.
    Edge costs are the forward-difference L2 cost of apply_warp, so the current
    warp is one of the candidate paths and the cost never rises.
    """
    m = len(a)
    offsets = spacing * np.arange(-SUBGRID_STEPS, SUBGRID_STEPS + 1)
    width = len(offsets)
    centre = SUBGRID_STEPS
    positions = warp[:, None] * m + offsets[None, :]
    positions[0], positions[m] = 0.0, float(m)

    values = periodic_interp(b, positions[:-1].ravel()).reshape(m, width, 2)
    slopes = positions[1:, None, :] - positions[:-1, :, None]
    current = np.diff(warp) * m
    low = min(SLOPE_RANGE[0], float(current.min())) - SLOPE_SLACK
    high = max(SLOPE_RANGE[1], float(current.max())) + SLOPE_SLACK
    feasible = (slopes >= low) & (slopes <= high)
    roots = np.sqrt(np.where(feasible, slopes, 1.0))
    cost = np.sum((a[:, None, None, :] - roots[..., None] * values[:, :, None, :]) ** 2, axis=-1) / m
    cost[~feasible] = np.inf

    energy = np.full(width, np.inf)
    energy[centre] = 0.0
    back = np.zeros((m, width), dtype=int)
    columns = np.arange(width)
    for i in range(m):
        total = energy[:, None] + cost[i]
        back[i] = np.argmin(total, axis=0)
        energy = total[back[i], columns]

    if not np.isfinite(energy.min()):
        return warp, float("inf")
    path = np.empty(m + 1, dtype=int)
    path[m] = int(np.argmin(energy))
    for i in range(m - 1, -1, -1):
        path[i] = back[i, path[i + 1]]
    refined = positions[np.arange(m + 1), path] / m
    refined[0], refined[-1] = 0.0, 1.0
    return refined, float(energy[path[m]])


def _refine_subgrid(a: NDArray, b: NDArray, best: _Alignment, finest: float) -> _Alignment:
    """Sub-grid DP passes at halving node spacings, each followed by a rotation update."""
    if finest <= 0 or best.objective < EXACT_MATCH:
        return best
    spacing = SUBGRID_START
    passes = 0
    while spacing >= finest:
        for _ in range(SUBGRID_PASSES):
            warp, _ = subgrid_warp(a, rotate(b, best.rotation), best.warp, spacing)
            warped = apply_warp(b, warp)
            rotation, _ = _rotation(a, warped)
            objective = _squared_distance(a, rotate(warped, rotation))
            if not np.isfinite(objective) or objective >= best.objective * (1.0 - SUBGRID_GAIN):
                break
            best = _Alignment(rotation, warp, objective, best.rounds, best.dp_cost, best.converged)
            passes += 1
        spacing *= 0.5
    logger.debug(f"Sub-grid refinement: {passes} accepted passes, objective {best.objective:.3e}")
    return best


def _nonelastic_objectives(a: NDArray, b: NDArray) -> tuple[NDArray, NDArray]:
    """Optimal rotation and objective for every seed shift at once."""
    m = len(a)
    shifted = np.stack([shift_samples(b, s) for s in range(m)])
    A = np.einsum("nk,snl->skl", a, shifted) / m
    U, S, Vt = np.linalg.svd(A)
    signs = np.where(np.linalg.det(U) * np.linalg.det(Vt) > 0, 1.0, -1.0)
    U = U.copy()
    U[:, :, 1] *= signs[:, None]
    rotations = U @ Vt
    rotations[S[:, 0] < RANK_TOLERANCE] = np.eye(2)
    objectives = float(inner(a, a)) + float(inner(b, b)) - 2.0 * np.einsum("skl,skl->s", rotations, A)
    return rotations, objectives


def nonelastic_sphere_distance(q1: Srvf, q2: Srvf) -> float:
    """Great-circle distance after the best seed and rotation; no closure projection."""
    _check_pair(q1, q2)
    _, objectives = _nonelastic_objectives(np.asarray(q1.samples), np.asarray(q2.samples))
    cosine = 1.0 - 0.5 * float(objectives.min())
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


def _package(q2: Srvf, seed: int, alignment: _Alignment, config: AnalysisConfig, elastic: bool) -> Registration:
    b = shift_samples(np.asarray(q2.samples), seed)
    registered = rotate(apply_warp(b, alignment.warp), alignment.rotation)
    registered = preshape.project_closure_array(registered, config.projection_tol, config.projection_max_iter)
    return Registration(
        rotation=alignment.rotation,
        seed_shift=seed,
        warp=alignment.warp,
        registered_srvf=q2.with_samples(registered),
        distance=float("nan"),
        objective=alignment.objective,
        rounds=alignment.rounds,
        dp_cost=alignment.dp_cost,
        elastic=elastic,
    )


def _with_sphere_distance(q1: Srvf, reg: Registration) -> Registration:
    return reg.with_distance(preshape.sphere_distance(q1, reg.registered_srvf))


def _check_pair(q1: Srvf, q2: Srvf) -> None:
    if q1.m != q2.m:
        raise InvalidParameter("srvf pair", f"'{q1.id}' has m={q1.m} but '{q2.id}' has m={q2.m}")


def register_nonelastic(q1: Srvf, q2: Srvf, config: Optional[AnalysisConfig] = None) -> Registration:
    """Seed and rotation only; every seed is tried."""
    config = config or settings
    _check_pair(q1, q2)
    a, b = np.asarray(q1.samples), np.asarray(q2.samples)
    rotations, objectives = _nonelastic_objectives(a, b)
    seed = int(np.argmin(objectives))
    alignment = _Alignment(rotation=rotations[seed], warp=identity_warp(q1.m), objective=float(objectives[seed]))
    return _with_sphere_distance(q1, _package(q2, seed, alignment, config, elastic=False))


def optimal_reparam_dp(
    q1: Srvf, q2: Srvf, seed_stride: Optional[int] = None, config: Optional[AnalysisConfig] = None
) -> Registration:
    """Seed search with rotation/DP alternation at each candidate seed.

    Coarse seeds every seed_stride samples plus the best nonelastic seed are
    tried, then the winner is walked to neighbouring seeds while that helps.
    """
    config = config or settings
    _check_pair(q1, q2)
    m = q1.m
    stride = seed_stride or config.effective_seed_stride
    if stride < 1 or m % stride != 0:
        raise InvalidParameter("seed_stride", f"{stride} does not divide m={m}")
    a, b = np.asarray(q1.samples), np.asarray(q2.samples)

    _, ne_objectives = _nonelastic_objectives(a, b)
    seeds = sorted(set(range(0, m, stride)) | {int(np.argmin(ne_objectives))})
    results: dict[int, _Alignment] = {}

    def evaluate(seed: int) -> _Alignment:
        if seed not in results:
            results[seed] = _align_at_seed(a, shift_samples(b, seed), config, elastic=True)
        return results[seed]

    for seed in seeds:
        evaluate(seed)
    best_seed = min(results, key=lambda s: (results[s].objective, s))
    for _ in range(stride):
        neighbours = [best_seed, (best_seed - 1) % m, (best_seed + 1) % m]
        step = min(neighbours, key=lambda s: (evaluate(s).objective, s))
        if step == best_seed:
            break
        best_seed = step

    shifted = shift_samples(b, best_seed)
    alignment = _refine_smoothing(a, shifted, results[best_seed], config.warp_smoothing)
    alignment = _refine_subgrid(a, shifted, alignment, config.subgrid_spacing)
    if not alignment.converged:
        logger.debug(f"Rotation/warp alternation for '{q2.id}' hit {config.rotation_rounds} rounds.")
    return _with_sphere_distance(q1, _package(q2, best_seed, alignment, config, elastic=True))


def _identity_registration(q1: Srvf, q2: Srvf) -> Registration:
    reg = Registration(
        rotation=np.eye(2),
        seed_shift=0,
        warp=identity_warp(q2.m),
        registered_srvf=q2,
        distance=float("nan"),
        objective=_squared_distance(np.asarray(q1.samples), np.asarray(q2.samples)),
        elastic=False,
    )
    return _with_sphere_distance(q1, reg)


def _closest(q1: Srvf, candidates: list[Registration], config: AnalysisConfig) -> tuple[Registration, GeodesicPath]:
    """Geodesic distance to the nearest candidate, skipping those whose sphere bound cannot win."""
    best: Optional[Registration] = None
    best_path: Optional[GeodesicPath] = None
    for reg in sorted(candidates, key=lambda r: r.distance):
        if best is not None and reg.distance >= best.distance:
            continue
        path = preshape.geodesic(q1, reg.registered_srvf, config=config)
        if best is None or path.length < best.distance:
            best, best_path = reg.with_distance(path.length, path.converged), path
    if best.distance > DISTANCE_BOUND:
        logger.warning(f"Shape distance {best.distance:.6f} between '{q1.id}' and '{best.registered_srvf.id}' exceeds pi/2.")
    return best, best_path


def register_geodesic(
    q1: Srvf, q2: Srvf, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None
) -> tuple[Registration, GeodesicPath]:
    """Registers q2 to q1 and returns the geodesic from q1 to the registered copy.

    Elastic candidates include every nonelastic one, so the elastic distance
    never exceeds the nonelastic one.
    """
    config = config or settings
    mode = mode or config.mode
    _check_pair(q1, q2)
    candidates = [_identity_registration(q1, q2), register_nonelastic(q1, q2, config)]
    if mode == "elastic":
        candidates.insert(0, optimal_reparam_dp(q1, q2, config=config))
    return _closest(q1, candidates, config)


def register(
    q1: Srvf, q2: Srvf, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None
) -> tuple[float, Registration]:
    reg, _ = register_geodesic(q1, q2, mode, config)
    return reg.distance, reg


def distance_shape(q1: Srvf, q2: Srvf, config: Optional[AnalysisConfig] = None) -> tuple[float, Registration]:
    return register(q1, q2, "elastic", config)


def distance_nonelastic(q1: Srvf, q2: Srvf, config: Optional[AnalysisConfig] = None) -> float:
    return register(q1, q2, "nonelastic", config)[0]


def pairwise_distance_matrix(
    ensemble: ShapeEnsemble, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None
) -> DistanceMatrix:
    """Registers every ordered pair, then symmetrizes as (D + D^T) / 2."""
    config = config or settings
    mode = mode or config.mode
    n = ensemble.n
    if n < 2:
        raise InvalidParameter("ensemble", f"a distance matrix needs at least 2 shapes, got {n}")
    shapes = ensemble.shapes
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    logger.info(f"STEP 1: Registering {len(pairs)} ordered pairs ({mode}, m={ensemble.m}, workers={config.workers})")
    outcomes = map_ordered(lambda p: register(shapes[p[0]], shapes[p[1]], mode, config)[1], pairs, config.workers)

    failed = failures(outcomes)
    if failed:
        for index, error in failed:
            i, j = pairs[index]
            logger.error(f"Pair '{shapes[i].id}' / '{shapes[j].id}' failed: {error.detail}")
        failing_ids = sorted({shapes[k].id for index, _ in failed for k in pairs[index]})
        raise IncompleteResult("distance matrix", failing_ids, max(e.exit_code for _, e in failed))

    raw = np.zeros((n, n))
    unconverged = []
    for (i, j), reg in zip(pairs, outcomes):
        raw[i, j] = reg.distance
        if not reg.geodesic_converged:
            unconverged.append((shapes[i].id, shapes[j].id))
    asymmetry = float(np.abs(raw - raw.T).max())
    values = (raw + raw.T) / 2.0
    logger.info(f"STEP 2: Symmetrized distances (max asymmetry {asymmetry:.3e}, max distance {values.max():.4f})")
    if unconverged:
        logger.warning(f"{len(unconverged)} pair geodesics did not converge.")
    return DistanceMatrix(values=values, ids=ensemble.ids, mode=mode, max_asymmetry=asymmetry, unconverged_pairs=unconverged)
