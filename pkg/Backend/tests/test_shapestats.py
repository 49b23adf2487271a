import numpy as np
import pytest

from app.core.config import AnalysisConfig
from app.core.exceptions import InvalidParameter
from app.models.contour import Srvf
from app.models.ensemble import ShapeEnsemble
from app.models.preshape import TangentVector
from app.services.preshape import geodesic, project_tangent
from app.services.quadrature import closure_residual, grid, inner, norm
from app.services.registration import distance_nonelastic, distance_shape
from app.services.shapestats import (
    MEAN_ID,
    covariance_and_spca,
    fit_spca,
    karcher_mean,
    karcher_variance,
    loo_reconstruction,
    medoid_index,
    pointwise_deformation,
    principal_direction_path,
    random_shape,
    random_shapes,
    reconstruct_tangent,
    sample_tangent,
)
from tests.curves import blob, srvf_of


def orthonormal_tangents(q: Srvf, count: int, seed: int = 0) -> np.ndarray:
    """Gram-Schmidt on projected low-frequency fields at q."""
    rng = np.random.default_rng(seed)
    t = 2 * np.pi * grid(q.m)
    modes = np.stack([np.cos(k * t) for k in range(1, 5)] + [np.sin(k * t) for k in range(1, 5)], axis=1)
    basis = []
    for _ in range(count):
        u = project_tangent(q, modes @ rng.standard_normal((8, 2))).samples
        for e in basis:
            u = u - inner(u, e) * e
        basis.append(u / norm(u))
    return np.stack(basis)


def noisy_copies(config, count: int, noise: float) -> ShapeEnsemble:
    rng = np.random.default_rng(11)
    base = blob([0.2, 0.1])
    return ShapeEnsemble(shapes=tuple(
        srvf_of(base + noise * rng.standard_normal(base.shape), config, f"copy_{i}") for i in range(count)
    ))


class TestKarcherMean:
    def test_single_shape(self, shapes, config):
        ensemble = ShapeEnsemble(shapes=(shapes["oval"],))
        result = karcher_mean(ensemble, "nonelastic", config)
        np.testing.assert_array_equal(result.mean.samples, shapes["oval"].samples)
        assert result.converged
        assert result.mean.id == MEAN_ID
        assert result.variance == 0.0

    def test_geodesic_midpoint(self, shapes, config):
        path = geodesic(shapes["round"], shapes["peanut"], k=5, config=config)
        waypoints = [Srvf(samples=path.waypoints[j], id=f"w{j}") for j in (0, 2, 4)]
        result = karcher_mean(ShapeEnsemble(shapes=tuple(waypoints)), "nonelastic", config)
        assert distance_nonelastic(result.mean, waypoints[1], config) < 2e-2

    def test_variance_never_increases(self, ensemble, config):
        result = karcher_mean(ensemble, "nonelastic", config)
        assert np.all(np.diff(result.variance_history) <= 1e-6)
        assert result.registered.ids == ensemble.ids
        assert result.shooting_vectors.shape == (ensemble.n, ensemble.m, 2)
        assert norm(result.mean.samples) == pytest.approx(1.0, abs=1e-8)
        assert np.abs(closure_residual(result.mean.samples)).max() < 1e-6

    def test_mean_beats_every_member(self, ensemble, config):
        result = karcher_mean(ensemble, "nonelastic", config)
        at_mean = karcher_variance(result.mean, ensemble, "nonelastic", config)
        for q in ensemble.shapes:
            assert at_mean <= karcher_variance(q, ensemble, "nonelastic", config) + 1e-6

    def test_geodesic_midpoint_elastic(self, shapes, config):
        path = geodesic(shapes["round"], shapes["peanut"], k=5, config=config)
        waypoints = [Srvf(samples=path.waypoints[j], id=f"w{j}") for j in (0, 2, 4)]
        result = karcher_mean(ShapeEnsemble(shapes=tuple(waypoints)), "elastic", config)
        assert distance_shape(result.mean, waypoints[1], config)[0] < 2e-2

    @pytest.mark.slow
    def test_mean_beats_every_member_elastic(self, shapes, config):
        ensemble = ShapeEnsemble(shapes=(shapes["round"], shapes["oval"], shapes["trefoil"]))
        result = karcher_mean(ensemble, "elastic", config)
        at_mean = karcher_variance(result.mean, ensemble, "elastic", config)
        for q in ensemble.shapes:
            assert at_mean <= karcher_variance(q, ensemble, "elastic", config) + 1e-6

    def test_initial_mean_keeps_its_frame(self, ensemble, config):
        reference = karcher_mean(ensemble, "nonelastic", config)
        restarted = karcher_mean(ensemble, "nonelastic", config, initial=reference.mean)
        assert restarted.medoid_id == ""
        assert distance_nonelastic(restarted.mean, reference.mean, config) < 1e-2
        assert restarted.variance <= reference.variance + 1e-6

    def test_initial_mean_grid_mismatch(self, ensemble, config):
        with pytest.raises(InvalidParameter):
            karcher_mean(ensemble, "nonelastic", config, initial=Srvf(samples=np.ones((32, 2)) / np.sqrt(2)))

    def test_medoid(self, shapes):
        ensemble = ShapeEnsemble(shapes=(shapes["round"], shapes["oval"], shapes["peanut"]))
        assert medoid_index(ensemble) == 1


class TestCovarianceAndSpca:
    def test_decomposition_invariants(self, shapes, config):
        q = shapes["round"]
        V = np.random.default_rng(0).standard_normal((6, 3)) @ orthonormal_tangents(q, 3).reshape(3, -1)
        V = V.reshape(6, q.m, 2)
        model = covariance_and_spca(q, V, config=config)

        assert model.rank == 3
        assert np.all(np.diff(model.eigenvalues) <= 0) and np.all(model.eigenvalues >= 0)
        expected_total = sum(float(inner(v, v)) for v in V) / 5
        assert model.eigenvalues.sum() == pytest.approx(expected_total, rel=1e-8)
        assert model.total_variance == pytest.approx(expected_total, rel=1e-8)
        gram = np.array([[inner(a, b) for b in model.eigenvectors] for a in model.eigenvectors])
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-8)
        rebuilt = np.tensordot(model.coefficients, model.eigenvectors, axes=1)
        np.testing.assert_allclose(rebuilt, V, atol=1e-8)
        assert model.cumulative_variance()[-1] == pytest.approx(1.0, rel=1e-8)

    def test_recovers_generating_variances(self, shapes, config):
        q = shapes["oval"]
        sigmas = np.array([0.04, 0.01, 0.0025])
        basis = orthonormal_tangents(q, 3, seed=5)
        z = np.random.default_rng(9).standard_normal((2000, 3))
        V = np.tensordot(z * np.sqrt(sigmas), basis, axes=1)
        model = covariance_and_spca(q, V, config=config)
        np.testing.assert_allclose(model.eigenvalues[:3], sigmas, rtol=0.15)

    def test_tangent_vector_input_and_single_shape(self, shapes, config):
        q = shapes["round"]
        model = covariance_and_spca(q, [TangentVector.zeros(q.m)], ids=["only"], config=config)
        assert model.rank == 0
        assert model.coefficients.shape == (1, 0)
        assert model.ids == ("only",)


class TestReconstruction:
    def build_model(self, q, config):
        V = np.random.default_rng(2).standard_normal((5, 4)) @ orthonormal_tangents(q, 4).reshape(4, -1)
        return covariance_and_spca(q, V.reshape(5, q.m, 2), config=config)

    def test_full_rank_reproduces_span(self, shapes, config):
        q = shapes["trefoil"]
        model = self.build_model(q, config)
        v = TangentVector(samples=0.3 * model.eigenvectors[0] - 0.2 * model.eigenvectors[3])
        np.testing.assert_allclose(reconstruct_tangent(model, v, model.rank).samples, v.samples, atol=1e-8)

    def test_projection_shrinks(self, shapes, config):
        q = shapes["trefoil"]
        model = self.build_model(q, config)
        v = project_tangent(q, np.random.default_rng(4).standard_normal((q.m, 2)))
        for r in range(model.rank + 1):
            assert reconstruct_tangent(model, v, r).norm <= v.norm + 1e-10
        assert reconstruct_tangent(model, v, 0).norm == 0.0
        with pytest.raises(InvalidParameter):
            reconstruct_tangent(model, v, model.rank + 1)

    def test_loo_on_near_copies(self, config):
        report = loo_reconstruction(noisy_copies(config, 4, 1e-3), "nonelastic", config)
        assert len(report.per_shape_error) == 4
        assert np.all(report.per_shape_error >= 0)
        assert np.all(report.per_shape_error < 1e-3)
        assert report.basis_size <= 2
        assert set(report.order_statistics()) == {"min", "median", "max"}

    @pytest.mark.slow
    def test_loo_on_near_copies_elastic(self, config):
        report = loo_reconstruction(noisy_copies(config, 4, 1e-3), "elastic", config)
        assert np.all(report.per_shape_error >= 0)
        assert np.all(report.per_shape_error < 1e-3)

    def test_loo_needs_three_shapes(self, shapes, config):
        with pytest.raises(InvalidParameter):
            loo_reconstruction(ShapeEnsemble(shapes=(shapes["round"], shapes["oval"])), "nonelastic", config)

    @pytest.mark.slow
    def test_loo_error_bounds(self, two_families, config):
        report = loo_reconstruction(two_families, "nonelastic", config)
        assert np.all(report.per_shape_error <= (np.pi / 2) ** 2 + 1e-6)
        assert np.all(report.fraction_of_max <= 1.0)
        assert report.std >= 0 and report.median_absolute_deviation >= 0


@pytest.fixture(scope="module")
def model():
    config = AnalysisConfig(m=64, geodesic_max_iter=150, mean_max_iter=30, _env_file=None)
    ensemble = ShapeEnsemble(shapes=tuple(
        srvf_of(blob(c), config, name) for name, c in (("a", [0.1, 0.0]), ("b", [0.2, 0.05]), ("c", [0.05, 0.15]), ("d", [0.25, 0.1]))
    ))
    _, model = fit_spca(ensemble, "nonelastic", config)
    return model


class TestSampling:
    def test_fit(self, model):
        assert model.ids == ("a", "b", "c", "d")
        assert 1 <= model.rank <= 4
        assert len(model.scales) == 4

    def test_random_shapes_reproducible(self, model, config):
        first = random_shapes(model, 3, rng_seed=42, kappa=model.rank, config=config)
        second = random_shapes(model, 3, rng_seed=42, kappa=model.rank, config=config)
        assert [q.id for q in first] == ["sim_0000", "sim_0001", "sim_0002"]
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.samples, b.samples)
            assert np.abs(closure_residual(a.samples)).max() < 1e-6

    def test_kappa_zero_gives_mean(self, model, config):
        for q in random_shapes(model, 2, rng_seed=1, kappa=0, config=config):
            np.testing.assert_array_equal(q.samples, model.mean.samples)
        assert random_shapes(model, 0, rng_seed=1, kappa=0, config=config) == []

    def test_single_draw_is_bit_identical(self, model, config):
        first = random_shape(model, 7, model.rank, config)
        second = random_shape(model, 7, model.rank, config)
        np.testing.assert_array_equal(first.samples, second.samples)
        np.testing.assert_array_equal(random_shape(model, 7, 0, config).samples, model.mean.samples)

    def test_kappa_above_rank(self, model, config):
        with pytest.raises(InvalidParameter):
            random_shapes(model, 1, rng_seed=1, kappa=model.rank + 1, config=config)

    def test_principal_direction_path(self, model, config):
        path = principal_direction_path(model, 1, [-1.0, 0.0, 1.0], config)
        assert [q.id for q in path] == ["PC1 t=-1", "PC1 t=0", "PC1 t=1"]
        np.testing.assert_array_equal(path[1].samples, model.mean.samples)
        with pytest.raises(InvalidParameter):
            principal_direction_path(model, 0, [0.0], config)

    def test_pointwise_deformation(self, model):
        magnitude = pointwise_deformation(model, 1)
        assert magnitude.shape == (model.m,)
        assert np.all(magnitude >= 0)
        assert magnitude.max() > 0


def registration_free_basis(q: Srvf, count: int, seed: int = 0) -> np.ndarray:
    """Orthonormal tangents at q that are also orthogonal to rotating q and shifting its seed."""
    samples = np.asarray(q.samples)
    turn = project_tangent(q, samples @ np.array([[0.0, -1.0], [1.0, 0.0]]).T).samples
    slide = project_tangent(q, (np.roll(samples, -1, axis=0) - np.roll(samples, 1, axis=0)) * q.m / 2).samples
    basis = []
    for u in [turn, slide] + list(orthonormal_tangents(q, count + 2, seed=seed)):
        for e in basis:
            u = u - inner(u, e) * e
        basis.append(u / norm(u))
    return np.stack(basis[2:2 + count])


@pytest.mark.slow
class TestGenerateThenFit:
    SIGMAS = np.array([0.02, 0.008, 0.003])

    @pytest.fixture(scope="class")
    def generated(self):
        config = AnalysisConfig(m=64, geodesic_max_iter=150, mean_max_iter=30, _env_file=None)
        q = srvf_of(blob([0.2, 0.1]), config, "base")
        basis = registration_free_basis(q, 3, seed=8)
        truth = covariance_and_spca(q, np.sqrt(2 * self.SIGMAS)[:, None, None] * basis, config=config)
        draws = random_shapes(truth, 200, rng_seed=21, kappa=3, config=config)
        children = np.random.SeedSequence(21).spawn(200)
        tangents = np.stack([sample_tangent(truth, np.random.default_rng(c), 3)[1].samples for c in children])
        return config, truth, ShapeEnsemble(shapes=tuple(draws)), covariance_and_spca(q, tangents, config=config)

    def test_truth_model(self, generated):
        _, truth, _, _ = generated
        np.testing.assert_allclose(truth.eigenvalues, self.SIGMAS, rtol=1e-8)

    def test_eigenvalues_recovered(self, generated):
        config, _, ensemble, drawn = generated
        _, fitted = fit_spca(ensemble, "nonelastic", config)
        assert fitted.rank >= 3
        np.testing.assert_allclose(fitted.eigenvalues[:3], drawn.eigenvalues[:3], rtol=0.15)

    def test_loo_median(self, generated):
        config, _, ensemble, _ = generated
        report = loo_reconstruction(ensemble.subset(range(20)), "nonelastic", config)
        assert report.median < 0.05 * (np.pi / 2) ** 2
