import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from app.core.config import AnalysisConfig, RegistrationMode, settings
from app.core.exceptions import IncompleteResult, InvalidParameter
from app.models.contour import Srvf
from app.models.ensemble import ShapeEnsemble
from app.models.karcher import KarcherMean
from app.models.preshape import TangentVector
from app.models.registration import Registration
from app.models.spca import ReconstructionReport, SpcaModel
from app.services import preshape
from app.services.parallel import failures, map_ordered
from app.services.quadrature import inner, norm, pointwise_norm
from app.services.registration import (
    identity_warp,
    nonelastic_sphere_distance,
    register_geodesic,
    register_nonelastic,
    rotate,
    shift_samples,
)

logger = logging.getLogger(__name__)

# --- Karcher mean ---
MEAN_ID = "karcher_mean"
MIN_MEAN_STEP = 1.0 / 64
VARIANCE_SLACK = 1e-6

TangentInput = Union[NDArray, Sequence[TangentVector]]


def _register_all(
    mean: Srvf, ensemble: ShapeEnsemble, mode: RegistrationMode, config: AnalysisConfig
) -> tuple[list[Registration], NDArray, NDArray]:
    """Registers every shape to mean; returns registrations, shooting vectors and distances."""
    outcomes = map_ordered(lambda q: register_geodesic(mean, q, mode, config), ensemble.shapes, config.workers)
    failed = failures(outcomes)
    if failed:
        for index, error in failed:
            logger.error(f"Registration of '{ensemble.shapes[index].id}' to the mean failed: {error.detail}")
        raise IncompleteResult("Karcher mean", [ensemble.shapes[i].id for i, _ in failed], max(e.exit_code for _, e in failed))
    registrations = [reg for reg, _ in outcomes]
    shooting = np.stack([preshape.shooting_vector(mean, path, config).samples for _, path in outcomes])
    distances = np.array([reg.distance for reg in registrations])
    return registrations, shooting, distances


def karcher_variance(candidate: Srvf, ensemble: ShapeEnsemble, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None) -> float:
    config = config or settings
    _, _, distances = _register_all(candidate, ensemble, mode or config.mode, config)
    return float(np.sum(distances ** 2))


def medoid_index(ensemble: ShapeEnsemble) -> int:
    """Shape with the smallest sum of squared registered great-circle distances to the others."""
    n = ensemble.n
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = nonelastic_sphere_distance(ensemble.shapes[i], ensemble.shapes[j])
    return int(np.argmin(np.sum(D ** 2, axis=1)))


def karcher_mean(
    ensemble: ShapeEnsemble,
    mode: Optional[RegistrationMode] = None,
    config: Optional[AnalysisConfig] = None,
    initial: Optional[Srvf] = None,
) -> KarcherMean:
    """Gradient descent for the mean shape, started at the medoid or at initial.

    Each step moves along the average shooting vector; a step that would raise
    the Karcher variance is halved. Started from the medoid, the converged mean
    is aligned to the medoid's rotation and seed and every shape is registered
    to it once more. A given initial shape keeps its own frame.
    """
    config = config or settings
    mode = mode or config.mode
    n, m = ensemble.n, ensemble.m

    if n == 1:
        only = ensemble.shapes[0]
        reg = Registration(
            rotation=np.eye(2), seed_shift=0, warp=identity_warp(m), registered_srvf=only,
            distance=0.0, objective=0.0, elastic=mode == "elastic",
        )
        return KarcherMean(
            mean=Srvf(samples=only.samples, id=MEAN_ID), registered=ensemble, shooting_vectors=np.zeros((1, m, 2)),
            registrations=(reg,), distances=np.zeros(1), iterations=0, converged=True,
            variance_history=(0.0,), mode=mode, medoid_id=only.id,
        )

    if initial is None:
        medoid_shape = ensemble.shapes[medoid_index(ensemble)]
        logger.info(f"STEP 1: Karcher mean of {n} shapes ({mode}); medoid '{medoid_shape.id}'")
        current = Srvf(samples=medoid_shape.samples, id=MEAN_ID)
    else:
        if initial.m != m:
            raise InvalidParameter("initial", f"mean start has m={initial.m}, ensemble has m={m}")
        medoid_shape = None
        logger.debug(f"Karcher mean of {n} shapes ({mode}) started at '{initial.id}'")
        current = Srvf(samples=initial.samples, id=MEAN_ID)
    registrations, shooting, distances = _register_all(current, ensemble, mode, config)
    variance = float(np.sum(distances ** 2))
    history = [variance]

    converged = False
    iteration = 0
    for iteration in range(1, config.mean_max_iter + 1):
        mean_v = shooting.mean(axis=0)
        update_norm = config.mean_step * float(norm(mean_v))
        logger.debug(f"Karcher iteration {iteration}: variance {variance:.6e}, |update| {update_norm:.3e}")
        if update_norm < config.mean_tol:
            converged = True
            break

        step = config.mean_step
        accepted = False
        while step >= MIN_MEAN_STEP:
            candidate = preshape.exp_map(current, TangentVector(samples=step * mean_v), config)
            c_regs, c_shooting, c_distances = _register_all(candidate, ensemble, mode, config)
            c_variance = float(np.sum(c_distances ** 2))
            if c_variance <= variance + VARIANCE_SLACK:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.info(f"Karcher variance cannot be lowered further at iteration {iteration}; stopping.")
            converged = True
            break
        current, registrations, shooting, distances, variance = candidate, c_regs, c_shooting, c_distances, c_variance
        history.append(variance)

    if not converged:
        logger.warning(f"Karcher mean not converged after {iteration} iterations (variance {variance:.6e}).")

    if medoid_shape is not None:
        # Fix the representative: medoid's rotation and seed.
        frame = register_nonelastic(medoid_shape, current, config)
        if frame.seed_shift != 0 or not np.allclose(frame.rotation, np.eye(2), atol=1e-12):
            aligned = rotate(shift_samples(np.asarray(current.samples), frame.seed_shift), frame.rotation)
            current = current.with_samples(aligned)
            registrations, shooting, distances = _register_all(current, ensemble, mode, config)
    log = logger.info if medoid_shape is not None else logger.debug
    log(f"STEP 2: Karcher mean done after {iteration} iterations (variance {np.sum(distances ** 2):.6e})")

    registered = ShapeEnsemble(shapes=tuple(reg.registered_srvf for reg in registrations), covariates=ensemble.covariates)
    return KarcherMean(
        mean=current, registered=registered, shooting_vectors=shooting, registrations=tuple(registrations),
        distances=distances, iterations=iteration, converged=converged, variance_history=tuple(history),
        mode=mode, medoid_id=medoid_shape.id if medoid_shape is not None else "",
    )


def _stack_tangents(shooting: TangentInput) -> NDArray:
    if isinstance(shooting, np.ndarray):
        return np.asarray(shooting, dtype=float)
    return np.stack([np.asarray(v.samples) for v in shooting])


def covariance_and_spca(
    mean: Srvf,
    shooting: TangentInput,
    ids: Sequence[str] = (),
    scales: Sequence[float] = (),
    config: Optional[AnalysisConfig] = None,
) -> SpcaModel:
    """Eigen-decomposition of K = V V^T / (n - 1) through the SVD of V.

    Rows of V are shooting vectors scaled by 1/sqrt(m), so Euclidean products
    equal the L2 quadrature. A single shape gives a model with no directions.
    """
    config = config or settings
    V = _stack_tangents(shooting)
    n, m = V.shape[0], V.shape[1]
    ids = tuple(ids) or tuple(f"shape_{i}" for i in range(n))
    if n < 2:
        return SpcaModel(
            mean=mean, shooting_vectors=V, ids=ids, eigenvalues=np.zeros(0), eigenvectors=np.zeros((0, m, 2)),
            coefficients=np.zeros((n, 0)), total_variance=0.0, scales=scales,
        )
    flat = V.reshape(n, 2 * m) / np.sqrt(m)
    _, S, Wt = np.linalg.svd(flat, full_matrices=False)
    eigenvalues = S ** 2 / (n - 1)
    total = float(np.sum(flat ** 2) / (n - 1))
    keep = eigenvalues > config.rank_tol * eigenvalues[0] if eigenvalues[0] > 0 else np.zeros(len(S), dtype=bool)
    basis = Wt[keep]
    return SpcaModel(
        mean=mean,
        shooting_vectors=V,
        ids=ids,
        eigenvalues=eigenvalues[keep],
        eigenvectors=(basis * np.sqrt(m)).reshape(-1, m, 2),
        coefficients=flat @ basis.T,
        total_variance=total,
        scales=scales,
    )


def fit_spca(
    ensemble: ShapeEnsemble, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None
) -> tuple[KarcherMean, SpcaModel]:
    karcher = karcher_mean(ensemble, mode, config)
    model = covariance_and_spca(
        karcher.mean, karcher.shooting_vectors, ids=ensemble.ids, scales=[q.scale for q in ensemble.shapes], config=config
    )
    return karcher, model


def reconstruct_tangent(model: SpcaModel, v: TangentVector, r: int) -> TangentVector:
    """Orthogonal projection of v onto the first r principal directions."""
    if not 0 <= r <= model.rank:
        raise InvalidParameter("r", f"needs 0 <= r <= {model.rank}, got {r}")
    basis = model.eigenvectors[:r]
    coefficients = inner(basis, np.asarray(v.samples)[None])
    return TangentVector(samples=np.tensordot(coefficients, basis, axes=1), base_id=v.base_id)


def loo_reconstruction(
    ensemble: ShapeEnsemble, mode: Optional[RegistrationMode] = None, config: Optional[AnalysisConfig] = None
) -> ReconstructionReport:
    """Leave-one-out error ||v - v_hat||^2 with an n - 2 direction basis from the other shapes."""
    config = config or settings
    mode = mode or config.mode
    n = ensemble.n
    if n < 3:
        raise InvalidParameter("ensemble", f"leave-one-out needs at least 3 shapes, got {n}")

    def held_out(i: int) -> tuple[float, int, Srvf, Srvf]:
        others = [k for k in range(n) if k != i]
        _, model = fit_spca(ensemble.subset(others), mode, config)
        shape = ensemble.shapes[i]
        reg, path = register_geodesic(model.mean, shape, mode, config)
        v = preshape.shooting_vector(model.mean, path, config)
        r = min(n - 2, model.rank)
        v_hat = reconstruct_tangent(model, v, r)
        error = float(inner(np.asarray(v.samples) - v_hat.samples, np.asarray(v.samples) - v_hat.samples))
        rebuilt = preshape.exp_map(model.mean, v_hat, config)
        logger.debug(f"LOO '{shape.id}': E = {error:.6e} with {r} directions")
        return error, r, reg.registered_srvf, Srvf(samples=rebuilt.samples, scale=shape.scale, id=shape.id)

    logger.info(f"STEP 1: Leave-one-out reconstruction over {n} shapes ({mode})")
    outcomes = map_ordered(held_out, range(n), workers=1)
    failed = failures(outcomes)
    if failed:
        raise IncompleteResult("reconstruction report", [ensemble.shapes[i].id for i, _ in failed], max(e.exit_code for _, e in failed))

    errors = np.array([o[0] for o in outcomes])
    median = float(np.median(errors))
    logger.info(f"STEP 2: Median reconstruction error {median:.6e}")
    return ReconstructionReport(
        ids=ensemble.ids,
        per_shape_error=errors,
        mean=float(errors.mean()),
        std=float(errors.std(ddof=1)),
        median=median,
        median_absolute_deviation=float(np.median(np.abs(errors - median))),
        basis_size=min(o[1] for o in outcomes),
        mode=mode,
        reconstructions=tuple((o[2], o[3]) for o in outcomes),
    )


def _check_kappa(model: SpcaModel, kappa: int) -> None:
    if not 0 <= kappa <= model.rank:
        raise InvalidParameter("kappa", f"needs 0 <= kappa <= {model.rank}, got {kappa}")


def sample_tangent(model: SpcaModel, rng: np.random.Generator, kappa: int) -> tuple[NDArray, TangentVector]:
    """Wrapped-normal tangent draw s = sum sqrt(sigma_i) Z_i u_i; returns Z and s."""
    _check_kappa(model, kappa)
    z = rng.standard_normal(kappa)
    weights = np.sqrt(model.eigenvalues[:kappa]) * z
    samples = np.tensordot(weights, model.eigenvectors[:kappa], axes=1) if kappa else np.zeros((model.m, 2))
    return z, TangentVector(samples=samples, base_id=model.mean.id)


def random_shape(model: SpcaModel, rng_seed: int, kappa: int, config: Optional[AnalysisConfig] = None, shape_id: str = "") -> Srvf:
    _, s = sample_tangent(model, np.random.default_rng(rng_seed), kappa)
    shape = preshape.exp_map(model.mean, s, config)
    return Srvf(samples=shape.samples, id=shape_id or f"random_{rng_seed}")


def random_shapes(model: SpcaModel, count: int, rng_seed: int, kappa: int, config: Optional[AnalysisConfig] = None) -> list[Srvf]:
    """count draws, each from its own child of SeedSequence(rng_seed)."""
    children = np.random.SeedSequence(rng_seed).spawn(count)
    shapes = []
    for i, child in enumerate(children):
        _, s = sample_tangent(model, np.random.default_rng(child), kappa)
        shape = preshape.exp_map(model.mean, s, config)
        shapes.append(Srvf(samples=shape.samples, id=f"sim_{i:04d}"))
    return shapes


def _check_direction(model: SpcaModel, j: int) -> None:
    if not 1 <= j <= model.rank:
        raise InvalidParameter("direction", f"needs 1 <= j <= {model.rank}, got {j}")


def principal_direction_path(
    model: SpcaModel, j: int, t_values: Sequence[float], config: Optional[AnalysisConfig] = None
) -> list[Srvf]:
    """exp(mean, t sqrt(sigma_j) u_j) for each t; j counts from 1."""
    _check_direction(model, j)
    direction = np.sqrt(model.eigenvalues[j - 1]) * model.eigenvectors[j - 1]
    shapes = []
    for t in t_values:
        shape = preshape.exp_map(model.mean, TangentVector(samples=t * direction, base_id=model.mean.id), config)
        shapes.append(Srvf(samples=shape.samples, id=f"PC{j} t={t:g}"))
    return shapes


def pointwise_deformation(model: SpcaModel, j: int) -> NDArray:
    """|sqrt(sigma_j) u_j(t)| at each grid point of the mean."""
    _check_direction(model, j)
    return np.sqrt(model.eigenvalues[j - 1]) * pointwise_norm(model.eigenvectors[j - 1])
