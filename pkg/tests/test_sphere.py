import math

import numpy as np
import pytest

from spheregaze.sphere import (
    PatchGrid,
    SphereCoord,
    angular_error_deg,
    angular_errors_deg,
    area_weight,
    grid_area_weights,
    normalized_to_sphere,
    patch_center_to_sphere,
    real_sh_basis,
    real_sh_matrix,
)

LARGE_GRID = PatchGrid(rows=16, cols=32, patch_px=16)


class TestPatchMapping:
    def test_center_row_first_column(self):
        c = patch_center_to_sphere(8, 0, LARGE_GRID)
        assert (c.theta, c.phi) == (0.0, 0.0)

    def test_top_row(self):
        assert patch_center_to_sphere(0, 0, LARGE_GRID).phi == pytest.approx(-math.pi / 2)

    def test_full_azimuth_half_way_column(self):
        assert patch_center_to_sphere(8, 16, LARGE_GRID, azimuth_full=True).theta == pytest.approx(math.pi)

    def test_default_azimuth_spans_half_circle(self):
        assert patch_center_to_sphere(8, 31, LARGE_GRID).theta == pytest.approx(31 * math.pi / 32)

    def test_out_of_grid(self):
        with pytest.raises(IndexError):
            patch_center_to_sphere(16, 0, LARGE_GRID)

    def test_coord_validation(self):
        with pytest.raises(ValueError):
            SphereCoord(theta=0.0, phi=2.0)


class TestSphericalHarmonics:
    def test_constant_harmonic(self):
        basis = real_sh_basis(SphereCoord(1.2, 0.3), 4)
        assert basis.shape == (25,)
        assert basis[0] == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi)))

    def test_north_pole_kills_azimuthal_terms(self):
        basis = real_sh_basis(SphereCoord(0.7, math.pi / 2), 4)
        for l in range(5):
            for m in range(-l, l + 1):
                if m != 0:
                    assert abs(basis[l * l + l + m]) < 1e-12

    def test_orthonormal_under_quadrature(self):
        # 64 latitude nodes (Gauss-Legendre in sin(latitude), i.e. cos-weighted) x 128 azimuths
        x, w_lat = np.polynomial.legendre.leggauss(64)
        theta = 2.0 * math.pi * np.arange(128) / 128
        phi_grid, theta_grid = np.meshgrid(np.arcsin(x), theta, indexing="ij")
        weights = np.outer(w_lat, np.full(128, 2.0 * math.pi / 128)).reshape(-1)
        y = real_sh_matrix(theta_grid.reshape(-1), phi_grid.reshape(-1), 4)
        gram = (y * weights[:, None]).T @ y
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() < 1e-3
        np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-3)

    def test_negative_degree_rejected(self):
        with pytest.raises(ValueError):
            real_sh_matrix(np.zeros(1), np.zeros(1), -1)


class TestAreaWeights:
    def test_equator_and_poles(self):
        assert area_weight(0.0) == 1.0
        assert area_weight(math.pi / 2) == pytest.approx(0.0, abs=1e-15)
        assert area_weight(-math.pi / 2) == pytest.approx(0.0, abs=1e-15)

    def test_row_four_of_large_grid(self):
        phi = patch_center_to_sphere(4, 0, LARGE_GRID).phi
        assert area_weight(phi) == pytest.approx(math.sqrt(0.5))

    def test_grid_weights_mean_one_and_symmetric(self):
        w = grid_area_weights(LARGE_GRID).reshape(16, 32)
        assert w.mean() == pytest.approx(1.0)
        raw = np.array([math.cos((i - 8) * math.pi / 16) for i in range(16)])
        assert w[8, 0] == pytest.approx(1.0 / raw.mean())
        np.testing.assert_allclose(w[4], w[12])

    def test_weight_falls_with_distance_from_equator(self):
        phis = np.linspace(0.0, math.pi / 2, 181)
        weights = [area_weight(phi) for phi in phis]
        assert all(a > b for a, b in zip(weights, weights[1:]))
        for phi, w in zip(phis, weights):
            assert area_weight(-phi) == w


class TestGazeGeometry:
    @pytest.mark.parametrize(
        "point, expected",
        [((0.5, 0.5), (0.0, 0.0)), ((0.0, 0.5), (-math.pi, 0.0)), ((0.75, 0.25), (math.pi / 2, math.pi / 4))],
    )
    def test_normalized_to_sphere(self, point, expected):
        assert normalized_to_sphere(*point) == pytest.approx(expected)

    def test_angular_error_examples(self):
        assert angular_error_deg((0.3, 0.6), (0.3, 0.6)) == 0.0
        assert angular_error_deg((0.25, 0.5), (0.75, 0.5)) == pytest.approx(180.0, abs=1e-9)
        assert angular_error_deg((0.5, 0.5), (0.5, 0.25)) == pytest.approx(45.0, abs=1e-9)

    def test_metric_axioms_on_random_triples(self, rng):
        a, b, c = (rng.uniform(size=(1000, 2)) for _ in range(3))
        ab, ba = angular_errors_deg(a, b), angular_errors_deg(b, a)
        bc, ac = angular_errors_deg(b, c), angular_errors_deg(a, c)
        np.testing.assert_allclose(ab, ba, atol=1e-12)
        assert np.all(ab >= 0.0) and np.all(ab <= 180.0 + 1e-9)
        assert np.all(ac <= ab + bc + 1e-7)

    def test_matches_vector_reference(self, rng):
        pred = rng.uniform(size=(1000, 2))
        gt = rng.uniform(size=(1000, 2))

        def unit(p):
            lon, lat = 2 * np.pi * (p[:, 0] - 0.5), np.pi * (0.5 - p[:, 1])
            return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=1)

        u, v = unit(pred), unit(gt)
        # atan2 form stays accurate for both tiny and near-antipodal separations
        reference = np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), (u * v).sum(axis=1)))
        np.testing.assert_allclose(angular_errors_deg(pred, gt), reference, atol=1e-9)

    def test_scalar_and_vector_forms_agree(self, rng):
        pred, gt = rng.uniform(size=(5, 2)), rng.uniform(size=(5, 2))
        vec = angular_errors_deg(pred, gt)
        for k in range(5):
            assert vec[k] == pytest.approx(angular_error_deg(tuple(pred[k]), tuple(gt[k])), abs=1e-12)

    def test_out_of_range_point(self):
        with pytest.raises(ValueError):
            normalized_to_sphere(1.5, 0.5)
