import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdobs.linops import (CGNotConverged, DESIGN_KINDS, HaarTransform, MRIOperator, MatrixOperator,
                          SamplingMask, adjoint_mismatch, as_object_vector, conjugate_gradient,
                          design_counts, make_design, make_haar_transform, make_mri_operator)


def _rand_mask(rng, n):
    flags = rng.random(n) < 0.5
    flags[rng.integers(n)] = True
    return SamplingMask(flags)


class TestObjectVector:
    def test_accepts_square_images(self):
        v = as_object_vector(np.ones((4, 4)))
        assert v.shape == (16,)

    @pytest.mark.parametrize("bad", [np.ones(15), [1.0, np.nan, 0.0, 1.0]])
    def test_rejects_bad_vectors(self, bad):
        with pytest.raises(ValueError):
            as_object_vector(bad)


class TestMRIOperator:
    def test_full_mask_is_unitary(self):
        rng = np.random.default_rng(0)
        H = make_mri_operator(make_design("FS", 16), 16)
        f = rng.standard_normal(256)
        np.testing.assert_allclose(H.apply_adjoint(H.apply(f)), f, atol=1e-10)
        assert np.isclose(np.linalg.norm(H.apply(f)), np.linalg.norm(f), rtol=1e-12)

    @pytest.mark.parametrize("kind", DESIGN_KINDS)
    def test_adjoint_identity_designs(self, kind):
        H = make_mri_operator(make_design(kind, 32, seed=4), 32)
        assert adjoint_mismatch(H, np.random.default_rng(1), probes=100) <= 1e-10

    def test_adjoint_identity_random_masks(self):
        rng = np.random.default_rng(2)
        for n in (8, 16, 32):
            H = MRIOperator(_rand_mask(rng, n), n)
            assert adjoint_mismatch(H, rng, probes=100) <= 1e-10

    def test_range_dim(self):
        mask = make_design("UH", 32)
        H = make_mri_operator(mask, 32)
        assert H.range_dim == 2 * 32 * mask.sampled_count
        assert H.domain_dim == 32 * 32

    @pytest.mark.parametrize("with_dc", [True, False])
    def test_constant_image_energy_on_dc_line(self, with_dc):
        n = 16
        flags = np.zeros(n, dtype=bool)
        flags[: n // 2] = True
        flags[n // 2] = with_dc
        H = MRIOperator(SamplingMask(flags), n)
        f = np.full(n * n, 0.7)
        g = H.apply(f)
        expected = f @ f if with_dc else 0.0
        assert np.isclose(g @ g, expected, atol=1e-10)
        if with_dc:
            k = H.to_complex(g)
            row = list(H.mask.lines).index(n // 2)
            nz = np.flatnonzero(np.abs(k) > 1e-12)
            np.testing.assert_array_equal(np.unique(nz // n), [row])

    def test_batched_matches_columns(self):
        rng = np.random.default_rng(3)
        H = make_mri_operator(make_design("RH", 16, seed=1), 16)
        X = rng.standard_normal((256, 3))
        np.testing.assert_allclose(H.apply(X), np.stack([H.apply(x) for x in X.T], axis=1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            make_mri_operator(make_design("FS", 16), 32)

    def test_non_power_of_two(self):
        with pytest.raises(ValueError):
            make_mri_operator(SamplingMask(np.ones(12, dtype=bool)), 12)

    def test_matrix_operator_adjoint(self):
        rng = np.random.default_rng(5)
        A = MatrixOperator(rng.standard_normal((7, 4)))
        assert adjoint_mismatch(A, rng) <= 1e-12


class TestHaar:
    def test_constant_2x2(self):
        B = make_haar_transform(2, levels=1)
        np.testing.assert_allclose(B.apply(np.full(4, 4.0)), [8.0, 0, 0, 0], atol=1e-14)

    @pytest.mark.parametrize("n,levels", [(16, 4), (32, 4), (32, 2), (64, 4)])
    def test_orthonormal(self, n, levels):
        rng = np.random.default_rng(n + levels)
        B = HaarTransform(n, levels)
        for _ in range(20):
            x = rng.standard_normal(n * n)
            assert abs(np.linalg.norm(B.apply(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
            assert np.linalg.norm(B.apply_adjoint(B.apply(x)) - x) <= 1e-12 * np.linalg.norm(x)
            w = rng.standard_normal(n * n)
            assert np.linalg.norm(B.apply(B.apply_adjoint(w)) - w) <= 1e-12 * np.linalg.norm(w)

    def test_dense_matrix_is_orthogonal(self):
        M = HaarTransform(8, 3).to_dense()
        np.testing.assert_allclose(M @ M.T, np.eye(64), atol=1e-12)
        np.testing.assert_allclose(M.T @ M, np.eye(64), atol=1e-12)

    def test_adjoint_identity(self):
        assert adjoint_mismatch(HaarTransform(32, 4), np.random.default_rng(0), probes=100) <= 1e-10

    def test_indivisible(self):
        with pytest.raises(ValueError):
            make_haar_transform(8, levels=4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
    def test_parseval_property(self, levels, seed):
        x = np.random.default_rng(seed).standard_normal(256)
        B = HaarTransform(16, levels)
        assert abs(np.linalg.norm(B.apply(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)


class TestDesigns:
    def test_counts_at_256(self):
        assert make_design("FS", 256).sampled_count == 256
        for kind in ("UH", "RH", "LH"):
            assert make_design(kind, 256, seed=0).sampled_count == 144
        assert design_counts(256) == (144, 72)

    @pytest.mark.parametrize("kind", ["UH", "RH"])
    def test_low_frequency_block(self, kind):
        lines = set(make_design(kind, 256, seed=3).lines)
        block = set(range(128 - 36, 128 + 36))
        assert block <= lines
        assert len(lines - block) == 72

    def test_lh_contiguous_centered(self):
        lines = make_design("LH", 256).lines
        np.testing.assert_array_equal(lines, np.arange(128 - 72, 128 + 72))
        assert 128 in lines

    def test_uh_evenly_spread(self):
        mask = make_design("UH", 256)
        rest = np.setdiff1d(mask.lines, np.arange(92, 164))
        gaps = np.diff(rest[rest < 92])
        assert gaps.max() - gaps.min() <= 1

    def test_deterministic(self):
        for kind in DESIGN_KINDS:
            a = make_design(kind, 64, seed=9)
            b = make_design(kind, 64, seed=9)
            np.testing.assert_array_equal(a.line_flags, b.line_flags)

    def test_rh_seeds_differ_only_outside_block(self):
        a = make_design("RH", 64, seed=1).line_flags
        b = make_design("RH", 64, seed=2).line_flags
        _, low = design_counts(64)
        block = np.arange(32 - low // 2, 32 - low // 2 + low)
        assert a[block].all() and b[block].all()
        assert not np.array_equal(a, b)

    def test_proportional_counts(self):
        for n in (8, 16, 32, 64, 128):
            half, low = design_counts(n)
            assert make_design("UH", n).sampled_count == half
            assert make_design("LH", n).sampled_count == half
            assert 1 <= low < half <= n

    def test_errors(self):
        with pytest.raises(ValueError):
            make_design("XX", 32)
        with pytest.raises(ValueError):
            make_design("UH", 4)

    def test_mask_invariants(self):
        with pytest.raises(ValueError):
            SamplingMask(np.zeros(8, dtype=bool))
        m = SamplingMask([True, False, True, False])
        assert m.sampled_count == 2 and m.n == 4


class TestConjugateGradient:
    def test_identity_one_iteration(self):
        b = np.array([3.0, -1.0, 2.0])
        res = conjugate_gradient(lambda v: v, b)
        np.testing.assert_allclose(res.x, b)
        assert res.iterations == 1

    def test_two_by_two(self):
        A = np.array([[4.0, 1.0], [1.0, 3.0]])
        res = conjugate_gradient(lambda v: A @ v, np.array([1.0, 2.0]))
        np.testing.assert_allclose(res.x, np.linalg.solve(A, [1.0, 2.0]), rtol=1e-8)
        np.testing.assert_allclose(res.x, [1 / 11, 7 / 11], rtol=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1e-6, 1e-8, 1e-10]))
    def test_residual_contract(self, seed, tol):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((50, 50))
        A = M @ M.T + 50 * np.eye(50)
        b = rng.standard_normal(50)
        res = conjugate_gradient(lambda v: A @ v, b, tol=tol)
        recomputed = np.linalg.norm(A @ res.x - b) / np.linalg.norm(b)
        assert recomputed <= tol
        assert abs(res.residual - recomputed) <= 1e-14

    def test_zero_rhs(self):
        res = conjugate_gradient(lambda v: 2 * v, np.zeros(4))
        np.testing.assert_array_equal(res.x, 0.0)
        assert res.converged

    def test_non_convergence_is_reported(self):
        rng = np.random.default_rng(0)
        d = np.logspace(0, 8, 200)
        with pytest.raises(CGNotConverged) as info:
            conjugate_gradient(lambda v: d * v, rng.standard_normal(200), tol=1e-12, max_iter=5)
        assert info.value.iterations == 5
        assert info.value.residual > 1e-12
        res = conjugate_gradient(lambda v: d * v, np.ones(200), tol=1e-12, max_iter=5,
                                 raise_on_fail=False)
        assert not res.converged

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            conjugate_gradient(lambda v: v, np.ones(2), tol=0.0)
