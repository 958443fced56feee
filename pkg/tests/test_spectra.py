import math

import numpy as np
import pytest

from sectors.spectra import (
    SpectraError,
    count_above_bound,
    eigenplane_projection,
    explainable_variation,
    histogram_json,
    svd,
    wishart_bounds,
    write_eigenplane_csv,
    write_spectrum_csv,
)


class TestSvd:
    def test_diagonal(self):
        spec = svd(np.diag([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(spec.singular_values, [3, 2, 1])

    def test_all_zeros(self):
        spec = svd(np.zeros((4, 3)))
        np.testing.assert_array_equal(spec.singular_values, np.zeros(3))

    def test_antidiagonal_2x2(self):
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        spec = svd(m)
        np.testing.assert_allclose(spec.singular_values, [1.0, 1.0])
        np.testing.assert_allclose(spec.reconstruct(), m, atol=1e-12)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(0)
        spec = svd(rng.normal(size=(30, 8)))
        np.testing.assert_allclose(
            spec.left_vectors.T @ spec.left_vectors, np.eye(8), atol=1e-8
        )
        np.testing.assert_allclose(
            spec.right_vectors.T @ spec.right_vectors, np.eye(8), atol=1e-8
        )

    def test_reconstruction_full_rank(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(20, 12))
        spec = svd(m)
        err = np.linalg.norm(spec.reconstruct() - m) / np.linalg.norm(m)
        assert err < 1e-6

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(15, 6))
        a, b = svd(m), svd(m)
        assert np.array_equal(a.left_vectors, b.left_vectors)
        assert np.array_equal(a.right_vectors, b.right_vectors)
        # pivot component of every right vector is positive
        pivots = np.argmax(np.abs(a.right_vectors), axis=0)
        assert np.all(a.right_vectors[pivots, np.arange(6)] > 0)

    def test_norm_identity(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(25, 10))
        spec = svd(m)
        total = np.sum(m**2)
        assert abs(np.sum(spec.singular_values**2) - total) < 1e-6 * total

    def test_non_finite_rejected(self):
        m = np.ones((3, 3))
        m[1, 1] = np.nan
        with pytest.raises(SpectraError):
            svd(m)

    def test_truncated(self):
        spec = svd(np.diag([3.0, 2.0, 1.0]), k=2)
        np.testing.assert_allclose(spec.singular_values, [3, 2])
        assert spec.left_vectors.shape == (3, 2)


class TestWishart:
    def test_large_panel_shape(self):
        b = wishart_bounds(5000, 705)
        # sqrt(5000) +/- sqrt(705), evaluated independently
        assert b.upper == pytest.approx(97.26252, abs=1e-5)
        assert b.lower == pytest.approx(44.15884, abs=1e-5)

    def test_square(self):
        assert wishart_bounds(9, 9).lower == 0.0

    def test_exact_integers(self):
        b = wishart_bounds(4, 1)
        assert (b.lower, b.upper) == (1.0, 3.0)

    def test_swaps_internally(self):
        assert wishart_bounds(100, 500).upper == wishart_bounds(500, 100).upper

    def test_rejects_nonpositive(self):
        with pytest.raises(SpectraError):
            wishart_bounds(0, 5)


class TestCountAboveBound:
    def _spec(self, values):
        values = np.asarray(values, dtype=float)
        k = len(values)
        return svd(np.diag(values)) if k else None

    def test_excluding_market(self):
        from sectors.spectra import WishartBound

        spec = self._spec([100.0, 50.0, 10.0])
        bound = WishartBound(lower=0.0, upper=44.157, alpha=5000, beta=705)
        assert count_above_bound(spec, bound, exclude_market=True) == 1

    def test_all_below(self):
        spec = self._spec([10.0, 5.0])
        assert count_above_bound(spec, wishart_bounds(5000, 705)) == 0

    def test_monte_carlo_noise_stays_below(self):
        # the top value fluctuates around the asymptotic edge, so it is
        # skipped as the market mode; nothing else crosses
        bound = wishart_bounds(500, 100)
        hits = 0
        for seed in range(100):
            m = np.random.default_rng(seed).standard_normal((500, 100))
            spec = svd(m, k=5)
            if count_above_bound(spec, bound, exclude_market=True) == 0:
                hits += 1
        assert hits >= 95

    def test_bulk_within_soft_edges(self):
        # noise singular values stay inside [lower-2, upper+2] almost surely
        bound = wishart_bounds(200, 80)
        inside = total = 0
        for seed in range(20):
            m = np.random.default_rng(1000 + seed).standard_normal((200, 80))
            s = np.linalg.svd(m, compute_uv=False)
            inside += np.sum((s > bound.lower - 2) & (s < bound.upper + 2))
            total += len(s)
        assert inside / total >= 0.99


class TestExplainableVariation:
    def test_full_spectrum_is_one(self):
        spec = svd(np.diag([3.0, 2.0, 1.0]))
        assert explainable_variation(spec, 3, 14.0) == pytest.approx(1.0)

    def test_market_excluded(self):
        spec = svd(np.diag([3.0, 2.0, 1.0]))
        got = explainable_variation(spec, 2, 14.0, exclude_market=True)
        assert got == pytest.approx(5.0 / 14.0)

    def test_k_too_large(self):
        spec = svd(np.diag([3.0, 2.0]))
        with pytest.raises(SpectraError):
            explainable_variation(spec, 3, 13.0)


class TestEigenplaneProjection:
    def test_self_projection(self):
        rng = np.random.default_rng(4)
        basis = rng.normal(size=(40, 3))
        spec = svd(basis)
        coords = eigenplane_projection(basis, basis)
        expected = np.diag(spec.singular_values) @ spec.right_vectors.T
        np.testing.assert_allclose(coords, expected, atol=1e-8)

    def test_orthogonal_data_is_zero(self):
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.normal(size=(20, 6)))
        basis = q[:, :3]
        data = q[:, 3:]
        coords = eigenplane_projection(basis, data)
        assert np.max(np.abs(coords)) < 1e-10

    def test_projector_properties(self):
        rng = np.random.default_rng(6)
        basis = rng.normal(size=(50, 3))
        data = rng.normal(size=(50, 10))
        coords = eigenplane_projection(basis, data)
        X = svd(basis).left_vectors
        assert np.linalg.norm(X @ coords) <= np.linalg.norm(data)
        residual = data - X @ coords
        assert np.max(np.abs(X.T @ residual)) < 1e-8

    def test_contractive(self):
        rng = np.random.default_rng(7)
        basis = rng.normal(size=(30, 4))
        data = rng.normal(size=(30, 12))
        coords = eigenplane_projection(basis, data)
        assert np.linalg.norm(coords) <= np.linalg.norm(data) + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(SpectraError):
            eigenplane_projection(np.ones((5, 2)), np.ones((6, 3)))


class TestExports:
    def test_spectrum_csv(self, tmp_path):
        spec = svd(np.diag([100.0, 10.0]))
        bound = wishart_bounds(500, 100)
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(spec, bound, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "index,singular_value,above_bound"
        assert lines[1].startswith("0,100") and lines[1].endswith(",1")
        assert lines[2].endswith(",0")

    def test_histogram_json(self):
        spec = svd(np.diag(np.linspace(1, 10, 6)))
        bound = wishart_bounds(50, 6)
        h = histogram_json(spec, bound, bins=5)
        assert sum(h["counts"]) == 6
        assert h["wishart_upper"] == bound.upper

    def test_eigenplane_csv(self, tmp_path):
        coords = np.array([[1.0, 2.0], [3.0, 4.0]])
        path = tmp_path / "planes.csv"
        write_eigenplane_csv(coords, ["A", "B"], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "ticker,coord_1,coord_2"
        assert lines[1] == "A,1,3"
