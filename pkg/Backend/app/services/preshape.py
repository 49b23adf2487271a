import logging
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.config import AnalysisConfig, settings
from app.core.exceptions import AntipodalPair, GeodesicNotConverged, InvalidParameter, ProjectionDiverged
from app.models.contour import Srvf
from app.models.preshape import GeodesicPath, TangentVector
from app.services.quadrature import closure_residual, inner, norm, pointwise_norm

logger = logging.getLogger(__name__)

# --- Pre-shape geometry constants ---
ANTIPODAL_THRESHOLD = -1.0 + 1e-9
# Pairs closer than this in L2 are treated as the same point.
IDENTICAL_TOLERANCE = 1e-12
MIN_NORM = 1e-12
MIN_STEP = 1e-6
PROJECTION_HALVINGS = 12
SHOOTING_HALVINGS = 6


def _closure_gradients(q: NDArray) -> NDArray:
    """L2 gradients of both components of G(q); shape (..., 2, m, 2)."""
    r = pointwise_norm(q)[..., None]
    safe = np.maximum(r, MIN_NORM)
    grads = []
    for i in range(2):
        unit = np.zeros(2)
        unit[i] = 1.0
        grads.append(r * unit + q[..., i:i + 1] * q / safe)
    return np.stack(grads, axis=-3)


def project_closure_array(q_raw: ArrayLike, tol: float, max_iter: int) -> NDArray:
    """Batch closure projection of arrays shaped (..., m, 2)."""
    q = np.array(q_raw, dtype=float, copy=True)
    shape = q.shape
    m = shape[-2]
    q = q.reshape(-1, m, 2)
    nrm = norm(q)
    if np.any(nrm < MIN_NORM):
        raise ProjectionDiverged(0, float("nan"))
    q = q / nrm[:, None, None]

    residual = np.abs(closure_residual(q)).max(axis=-1)
    for iteration in range(max_iter):
        active = residual >= tol
        if not active.any():
            return q.reshape(shape)
        G = closure_residual(q)
        grads = _closure_gradients(q)
        J = np.einsum("bimk,bjmk->bij", grads, grads) / m
        coeffs = -np.einsum("bij,bj->bi", np.linalg.pinv(J), G)
        step = np.einsum("bi,bimk->bmk", coeffs, grads)

        # Damped Newton: halve the step until the residual drops.
        scale = np.ones(len(q))
        pending = active.copy()
        new_q = q.copy()
        new_res = residual.copy()
        for _ in range(PROJECTION_HALVINGS):
            trial = q + scale[:, None, None] * step
            trial = trial / norm(trial)[:, None, None]
            trial_res = np.abs(closure_residual(trial)).max(axis=-1)
            accept = pending & (trial_res < residual)
            new_q[accept] = trial[accept]
            new_res[accept] = trial_res[accept]
            pending &= ~accept
            if not pending.any():
                break
            scale[pending] *= 0.5
        if pending.any():
            break
        q, residual = new_q, new_res

    raise ProjectionDiverged(max_iter, float(residual.max()))


def project_closure(q_raw: ArrayLike, config: Optional[AnalysisConfig] = None, shape_id: str = "") -> Srvf:
    """Nearest unit-norm closed SRVF to q_raw (local Gauss-Newton on G(q) = 0)."""
    config = config or settings
    samples = project_closure_array(q_raw, tol=config.projection_tol, max_iter=config.projection_max_iter)
    return Srvf(samples=samples, id=shape_id)


def tangent_projection(q: NDArray, w: NDArray) -> NDArray:
    """Removes from w its components along q and the closure normals at q."""
    basis = [q] + [g for g in np.moveaxis(_closure_gradients(q), -3, 0)]
    ortho: list[NDArray] = []
    for b in basis:
        for e in ortho:
            b = b - inner(b, e)[..., None, None] * e
        n = norm(b)
        ortho.append(b / np.maximum(n, MIN_NORM)[..., None, None])
    out = np.array(w, dtype=float, copy=True)
    # Two passes keep the result orthogonal to rounding level.
    for _ in range(2):
        for e in ortho:
            out = out - inner(out, e)[..., None, None] * e
    return out


def project_tangent(q: Srvf, w: ArrayLike) -> TangentVector:
    return TangentVector(samples=tangent_projection(q.samples, np.asarray(w, dtype=float)), base_id=q.id)


def _exp_array(a: NDArray, velocity: NDArray, config: AnalysisConfig) -> NDArray:
    """Sphere exponential followed by closure projection, in exp_substeps pieces.

    Between pieces the velocity is carried along the great circle and
    projected back onto the tangent space, keeping its length.
    """
    speed = float(norm(velocity))
    if speed == 0.0:
        return a
    current = np.array(a)
    substeps = config.exp_substeps
    for step in range(substeps):
        angle = speed / substeps
        direction = velocity / speed
        moved = np.cos(angle) * current + np.sin(angle) * direction
        moved = project_closure_array(moved, config.projection_tol, config.projection_max_iter)
        if step < substeps - 1:
            carried = -np.sin(angle) * current + np.cos(angle) * direction
            carried = tangent_projection(moved, carried)
            carried_norm = norm(carried)
            if carried_norm < MIN_NORM:
                break
            velocity = carried * (speed / carried_norm)
        current = moved
    return current


def exp_map(q: Srvf, v: TangentVector, config: Optional[AnalysisConfig] = None) -> Srvf:
    config = config or settings
    if v.norm == 0.0:
        return q
    return q.with_samples(_exp_array(np.asarray(q.samples), np.array(v.samples), config))


def _shooting_correction(a: NDArray, v: NDArray, error: NDArray) -> NDArray:
    """Change of v that moves exp(v) by error, from the sphere exponential's differential at v."""
    theta = float(norm(v))
    if theta < MIN_NORM:
        return tangent_projection(a, error)
    u = v / theta
    radial = -np.sin(theta) * a + np.cos(theta) * u
    lateral = tangent_projection(a, error)
    lateral = lateral - inner(lateral, u) * u
    return inner(error, radial) * u + lateral / np.sinc(theta / np.pi)


def refine_shooting(a: NDArray, target: NDArray, v: NDArray, config: AnalysisConfig) -> tuple[NDArray, float]:
    """Corrects v until exp(a, v) lands on target; returns the best v and its miss."""
    miss = float(norm(target - _exp_array(a, v, config)))
    for _ in range(config.log_max_iter):
        if miss < config.log_tol:
            break
        error = target - _exp_array(a, v, config)
        correction = _shooting_correction(a, v, error)
        for _ in range(SHOOTING_HALVINGS):
            trial = tangent_projection(a, v + correction)
            trial_miss = float(norm(target - _exp_array(a, trial, config)))
            if trial_miss < miss:
                break
            correction = 0.5 * correction
        else:
            break
        v, miss = trial, trial_miss
    return v, miss


def _path_energy(path: NDArray) -> float:
    steps = path[1:] - path[:-1]
    return float((len(path) - 1) * np.sum(inner(steps, steps)))


def _path_length(path: NDArray) -> float:
    chords = norm(path[1:] - path[:-1])
    return float(np.sum(2.0 * np.arcsin(np.clip(chords / 2.0, 0.0, 1.0))))


def great_circle_path(a: NDArray, b: NDArray, k: int) -> NDArray:
    theta = float(np.arccos(np.clip(inner(a, b), -1.0, 1.0)))
    taus = np.linspace(0.0, 1.0, k)
    if theta < IDENTICAL_TOLERANCE:
        return np.stack([a] * k)
    weights_a = np.sin((1.0 - taus) * theta) / np.sin(theta)
    weights_b = np.sin(taus * theta) / np.sin(theta)
    return weights_a[:, None, None] * a + weights_b[:, None, None] * b


def _check_pair(a: NDArray, b: NDArray) -> None:
    if a.shape != b.shape:
        raise InvalidParameter("srvf pair", f"grid mismatch {a.shape} vs {b.shape}")
    c = float(inner(a, b))
    if c < ANTIPODAL_THRESHOLD:
        raise AntipodalPair(c)


def geodesic(q1: Srvf, q2: Srvf, k: Optional[int] = None, config: Optional[AnalysisConfig] = None) -> GeodesicPath:
    """Path straightening between two points of the pre-shape space.

    The projected great-circle path is relaxed by projected gradient descent on
    the discrete path energy, with a halving line search that never lets the
    energy increase.
    """
    config = config or settings
    k = k or config.geodesic_points
    if k < 5:
        raise InvalidParameter("k", f"geodesic needs at least 5 waypoints, got {k}")
    a, b = np.asarray(q1.samples), np.asarray(q2.samples)
    _check_pair(a, b)
    if float(norm(a - b)) < IDENTICAL_TOLERANCE:
        return GeodesicPath(waypoints=np.stack([a] * k), length=0.0, converged=True, iterations=0, energies=(0.0,))

    path = great_circle_path(a, b, k)
    path[1:-1] = project_closure_array(path[1:-1], config.projection_tol, config.projection_max_iter)
    path[0], path[-1] = a, b
    energy = _path_energy(path)
    energies = [energy]
    converged = False
    iteration = 0
    for iteration in range(1, config.geodesic_max_iter + 1):
        interior = path[1:-1]
        direction = tangent_projection(interior, 0.5 * (path[:-2] + path[2:]) - interior)
        if float(norm(direction).max()) < IDENTICAL_TOLERANCE:
            converged = True
            break

        step = 1.0
        accepted = None
        while step >= MIN_STEP:
            trial = path.copy()
            trial[1:-1] = project_closure_array(interior + step * direction, config.projection_tol, config.projection_max_iter)
            trial_energy = _path_energy(trial)
            if trial_energy <= energy:
                accepted = trial
                break
            step *= 0.5
        if accepted is None:
            # No descent left at the smallest step: the path is stationary.
            converged = True
            break

        decrease = (energy - trial_energy) / max(energy, IDENTICAL_TOLERANCE)
        path, energy = accepted, trial_energy
        energies.append(energy)
        if decrease < config.geodesic_tol:
            converged = True
            break

    length = _path_length(path)
    if not converged:
        logger.warning(f"Geodesic {q1.id!r} -> {q2.id!r} not converged after {iteration} iterations (length {length:.6f}).")
    return GeodesicPath(waypoints=path, length=length, converged=converged, iterations=iteration, energies=tuple(energies))


def inverse_exp(q1: Srvf, q2: Srvf, config: Optional[AnalysisConfig] = None) -> TangentVector:
    """Shooting vector v at q1 with exp_map(q1, v) = q2.

    Started from the first-segment velocity of the geodesic and corrected by
    shooting until the miss drops below log_tol.
    """
    config = config or settings
    a, b = np.asarray(q1.samples), np.asarray(q2.samples)
    _check_pair(a, b)
    if float(norm(a - b)) < IDENTICAL_TOLERANCE:
        return TangentVector.zeros(len(a), base_id=q1.id)
    path = geodesic(q1, q2, config=config)
    if not path.converged:
        raise GeodesicNotConverged(path.iterations, path.length)
    return shooting_vector(q1, path, config)


def shooting_vector(base: Srvf, path: GeodesicPath, config: Optional[AnalysisConfig] = None) -> TangentVector:
    """Tangent vector at base whose exp_map reaches the end of path."""
    config = config or settings
    a = np.asarray(base.samples)
    direction = tangent_projection(a, path.waypoints[1] - a)
    size = float(norm(direction))
    if size < MIN_NORM or path.length == 0.0:
        return TangentVector.zeros(len(a), base_id=base.id)
    v, miss = refine_shooting(a, np.asarray(path.waypoints[-1]), direction * (path.length / size), config)
    if miss >= config.log_tol:
        logger.debug(f"Shooting from '{base.id}' ends {miss:.3e} from the target.")
    return TangentVector(samples=v, base_id=base.id)


def distance_preshape(q1: Srvf, q2: Srvf, config: Optional[AnalysisConfig] = None) -> float:
    return geodesic(q1, q2, config=config).length


def sphere_distance(q1: Srvf, q2: Srvf) -> float:
    """Great-circle distance on the Hilbert sphere; a lower bound of d_C."""
    if float(norm(np.asarray(q1.samples) - np.asarray(q2.samples))) < IDENTICAL_TOLERANCE:
        return 0.0
    return float(np.arccos(np.clip(inner(np.asarray(q1.samples), np.asarray(q2.samples)), -1.0, 1.0)))
