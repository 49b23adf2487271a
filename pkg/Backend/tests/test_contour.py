import numpy as np
import pytest

from app.core.exceptions import DegenerateContour, InvalidParameter, NonTangentPerturbation, TooFewPoints
from app.models.contour import Contour, SpeedAnglePerturbation
from app.services.contour import (
    elastic_metric_check,
    from_srvf,
    resample_arclength,
    speed_angle,
    to_srvf,
    validate_and_normalize,
)
from app.services.quadrature import closure_residual, norm
from tests.curves import blob, circle, ellipse, srvf_of


def chord_lengths(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)


class TestValidateAndNormalize:
    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            validate_and_normalize(circle(5))

    @pytest.mark.parametrize("raw", [[], np.empty((0, 2))])
    def test_empty_contour(self, raw):
        with pytest.raises(TooFewPoints):
            validate_and_normalize(raw)

    def test_wrong_width(self):
        with pytest.raises(DegenerateContour):
            validate_and_normalize(np.ones((10, 3)))

    def test_repeated_points_are_dropped_before_counting(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        doubled = np.repeat(square, 3, axis=0)
        with pytest.raises(TooFewPoints):
            validate_and_normalize(doubled)

    def test_collinear_points(self):
        line = np.column_stack([np.linspace(0, 1, 20), np.linspace(0, 2, 20)])
        with pytest.raises(DegenerateContour):
            validate_and_normalize(line)

    def test_non_finite(self):
        points = circle(20)
        points[3, 0] = np.nan
        with pytest.raises(DegenerateContour):
            validate_and_normalize(points)

    def test_clockwise_is_reversed_keeping_first_point(self):
        points = circle(50)[::-1].copy()
        contour = validate_and_normalize(points, shape_id="cw")
        assert contour.signed_area > 0
        np.testing.assert_allclose(contour.points[0], points[0])
        assert contour.id == "cw"

    def test_closing_duplicate_removed(self):
        points = circle(20)
        closed = np.vstack([points, points[:1]])
        assert validate_and_normalize(closed).size == 20


class TestResampleArclength:
    def test_circle_chords_equal(self):
        resampled = resample_arclength(Contour(points=circle(1000)), 128)
        chords = chord_lengths(resampled.points)
        assert resampled.size == 128
        assert np.ptp(chords) / chords.mean() < 1e-5

    def test_rectangle_gaps(self):
        rectangle = Contour(points=np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]))
        resampled = resample_arclength(rectangle, 60)
        np.testing.assert_allclose(chord_lengths(resampled.points), 0.1, atol=1e-9)

    def test_star_polygon_matches_dense_inversion(self):
        rng = np.random.default_rng(3)
        angles = np.sort(rng.uniform(0, 2 * np.pi, 40))
        radii = rng.uniform(0.5, 1.5, 40)
        star = Contour(points=np.column_stack([radii * np.cos(angles), radii * np.sin(angles)]))
        resampled = resample_arclength(star, 256)

        closed = np.vstack([star.points, star.points[:1]])
        dense = np.concatenate([np.linspace(a, b, 2000, endpoint=False) for a, b in zip(closed[:-1], closed[1:])])
        dense_arc = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))))
        targets = np.arange(256) * star.perimeter / 256
        nearest = dense[np.searchsorted(dense_arc, targets).clip(max=len(dense) - 1)]
        step = np.linalg.norm(np.diff(closed, axis=0), axis=1).max() / 2000
        assert np.abs(resampled.points - nearest).max() < 2 * step

    def test_perimeter_preserved_and_idempotent(self):
        rectangle = Contour(points=np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]))
        once = resample_arclength(rectangle, 60)
        twice = resample_arclength(once, 60)
        assert once.perimeter == pytest.approx(6.0, rel=1e-9)
        np.testing.assert_allclose(twice.points, once.points, atol=1e-9)

    def test_small_m_rejected(self):
        with pytest.raises(InvalidParameter):
            resample_arclength(Contour(points=circle(100)), 8)


class TestToSrvf:
    def test_unit_circle(self, config):
        q = srvf_of(circle(1000, radius=1.0 / (2 * np.pi)), config.model_copy(update={"m": 128}))
        assert norm(q.samples) == pytest.approx(1.0, abs=1e-6)
        assert np.abs(closure_residual(q.samples)).max() < 1e-6
        np.testing.assert_allclose(np.linalg.norm(q.samples, axis=1), 1.0, atol=1e-3)

    def test_ellipse_matches_analytic_tangent(self, fine_config):
        contour = resample_arclength(validate_and_normalize(ellipse(points=4000)), 256)
        q = to_srvf(contour, 256, fine_config)
        assert norm(q.samples) == pytest.approx(1.0, abs=1e-8)
        assert np.abs(closure_residual(q.samples)).max() < 1e-6

        x, y = contour.points[:, 0], contour.points[:, 1]
        phi = np.arctan2(y / 1.0, x / 2.0)
        tangent = np.column_stack([-2.0 * np.sin(phi), np.cos(phi)])
        tangent /= np.linalg.norm(tangent, axis=1)[:, None]
        assert norm(q.samples - tangent) < 2e-3

    def test_scale_is_perimeter(self, config):
        contour = resample_arclength(validate_and_normalize(5.0 * blob([0.2, 0.1])), config.m)
        q = to_srvf(contour, config.m, config)
        assert q.scale == pytest.approx(contour.perimeter, rel=1e-9)

    def test_scale_invariance(self, config):
        small = srvf_of(blob([0.2, 0.1]), config)
        large = srvf_of(7.0 * blob([0.2, 0.1]), config)
        np.testing.assert_allclose(small.samples, large.samples, atol=1e-9)

    def test_vanishing_derivative(self, config):
        points = circle(64)
        points[11] = points[9]
        with pytest.raises(DegenerateContour):
            to_srvf(Contour(points=points), 64, config)


class TestFromSrvf:
    def test_circle(self, config):
        q = srvf_of(circle(1000, radius=1.0 / (2 * np.pi)), config)
        curve, gap = from_srvf(q)
        assert gap < 1e-6
        radii = np.linalg.norm(curve.points - curve.points.mean(axis=0), axis=1)
        assert np.ptp(radii) / radii.mean() < 1e-3

    def test_round_trip(self, fine_config):
        q = srvf_of(blob([0.1, 0.05], points=2000), fine_config)
        curve, _ = from_srvf(q)
        again = to_srvf(curve, 256, fine_config)
        assert norm(again.samples - q.samples) < 1e-3

    def test_scaled_and_base_point(self, config):
        q = srvf_of(3.0 * circle(500), config)
        curve, _ = from_srvf(q, base_point=(1.0, 2.0), scaled=True)
        np.testing.assert_allclose(curve.points[0], [1.0, 2.0])
        assert curve.perimeter == pytest.approx(q.scale, rel=1e-2)


class TestElasticMetric:
    def base(self):
        contour = resample_arclength(validate_and_normalize(blob([0.2, 0.1], points=3000)), 256)
        return speed_angle(Contour(points=contour.points / contour.perimeter))

    def test_arclength_speed_is_constant(self):
        np.testing.assert_allclose(self.base().speed, 1.0, atol=2e-3)

    def test_agrees_with_srvf_inner_product(self):
        base = self.base()
        t = np.arange(256) / 256
        normal = base.angle @ np.array([[0.0, 1.0], [-1.0, 0.0]])
        pert1 = SpeedAnglePerturbation(d_speed=np.cos(2 * np.pi * t), d_angle=np.sin(4 * np.pi * t)[:, None] * normal)
        pert2 = SpeedAnglePerturbation(d_speed=np.sin(2 * np.pi * t), d_angle=np.cos(6 * np.pi * t)[:, None] * normal)
        for a, b in ((pert1, pert1), (pert1, pert2)):
            elastic_value, l2_value = elastic_metric_check(base, a, b)
            assert elastic_value == pytest.approx(l2_value, rel=1e-4, abs=1e-12)
        same, _ = elastic_metric_check(base, pert1, pert1)
        assert same > 0

    @pytest.mark.parametrize("seed", range(20))
    def test_agrees_on_random_triples(self, seed):
        rng = np.random.default_rng(seed)
        points = blob(rng.uniform(-0.08, 0.08, 3), points=3000, phase=rng.uniform(0, 2 * np.pi))
        contour = resample_arclength(validate_and_normalize(points), 256)
        base = speed_angle(Contour(points=contour.points / contour.perimeter))
        t = np.arange(256) / 256
        normal = base.angle @ np.array([[0.0, 1.0], [-1.0, 0.0]])

        def waves():
            k = np.arange(1, 5)[:, None]
            return (rng.normal(size=(4, 1)) * np.cos(2 * np.pi * k * t + rng.uniform(0, 2 * np.pi, (4, 1)))).sum(axis=0)

        def perturbation():
            return SpeedAnglePerturbation(d_speed=waves(), d_angle=waves()[:, None] * normal)

        pert1, pert2 = perturbation(), perturbation()
        scale = np.sqrt(elastic_metric_check(base, pert1, pert1)[0] * elastic_metric_check(base, pert2, pert2)[0])
        for a, b in ((pert1, pert1), (pert2, pert2), (pert1, pert2)):
            elastic_value, l2_value = elastic_metric_check(base, a, b)
            assert abs(elastic_value - l2_value) <= 1e-4 * scale

    def test_non_tangent_angle_perturbation(self):
        base = self.base()
        pert = SpeedAnglePerturbation(d_speed=np.zeros(256), d_angle=base.angle)
        with pytest.raises(NonTangentPerturbation):
            elastic_metric_check(base, pert, pert)
