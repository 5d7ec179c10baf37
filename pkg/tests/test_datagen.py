"""Synthetic generators: low-rank AR sequences, block supports, motion."""

import numpy as np
import pytest

from reprocs.datagen import (
    BlockSupportConfig,
    LowRankConfig,
    MotionBlockConfig,
    build_motion_scenario,
    build_table_scenario,
    default_variance_profile,
    gaussian_operator,
    lowrank_ar_sequence,
    motion_foreground,
    moving_block_sparse,
    overlay,
)
from reprocs.linalg import basis_by_energy


class TestLowRank:
    def test_zero_variances(self):
        cfg = LowRankConfig(
            n=10, r0=3, t_train=5, t_total=20, variances=np.zeros(3), seed=1
        )
        data = lowrank_ar_sequence(cfg)
        np.testing.assert_array_equal(data.frames, np.zeros((10, 20)))

    def test_iid_unit_variance(self):
        cfg = LowRankConfig(
            n=4,
            r0=1,
            t_train=10,
            t_total=10_000,
            ar_coeff=0.0,
            variances=np.array([1.0]),
            seed=2,
        )
        data = lowrank_ar_sequence(cfg)
        coeffs = data.basis0.T @ data.frames  # 1 x T coefficient track
        var = float(np.var(coeffs))
        assert abs(var - 1.0) <= 0.1  # Monte-Carlo moment check

    def test_training_rank(self):
        cfg = LowRankConfig(
            n=100, r0=20, c_new=2, t_train=2000, t_total=2080, t_change=2005, seed=3
        )
        data = lowrank_ar_sequence(cfg)
        basis, _ = basis_by_energy(data.frames[:, :2000], 99.99)
        assert basis.shape[1] == 20

    def test_reproducible(self):
        cfg = LowRankConfig(n=20, r0=4, t_train=10, t_total=50, seed=11)
        a = lowrank_ar_sequence(cfg)
        b = lowrank_ar_sequence(cfg)
        np.testing.assert_array_equal(a.frames, b.frames)
        np.testing.assert_array_equal(a.basis0, b.basis0)

    def test_new_directions_appear_at_change(self):
        cfg = LowRankConfig(
            n=30, r0=4, c_new=2, t_train=40, t_total=200, t_change=50, seed=5
        )
        data = lowrank_ar_sequence(cfg)
        before = data.basis_new.T @ data.frames[:, :50]
        after = data.basis_new.T @ data.frames[:, 50:]
        # pre-change energy along the new directions is numerical noise only
        assert np.max(np.abs(before)) <= 1e-10
        assert np.max(np.abs(after)) > 1.0

    def test_variance_decay_hits_removal(self):
        cfg = LowRankConfig(
            n=30, r0=4, c_new=1, t_train=10, t_total=400, t_change=20,
            variances=np.array([100.0, 50.0, 1.0, 2.0]), seed=6,
        )
        data = lowrank_ar_sequence(cfg)
        # the two smallest-variance directions decay and are eventually removed
        assert data.variances[2, -1] == 0.0
        assert data.variances[3, -1] == 0.0
        assert data.variances[0, -1] == 100.0

    def test_bad_configs(self):
        with pytest.raises(ValueError):
            LowRankConfig(n=5, r0=4, c_new=2, t_train=5, t_total=10)
        with pytest.raises(ValueError):
            LowRankConfig(n=10, r0=2, t_train=5, t_total=10, t_change=3)


class TestMovingBlock:
    def test_static(self):
        cfg = BlockSupportConfig(
            n=20, block_len=5, magnitude=10.0, start=3,
            p_static=1.0, p_up=0.0, p_down=0.0, seed=0,
        )
        supports, sparse = moving_block_sparse(cfg, 25)
        for s in supports:
            np.testing.assert_array_equal(s, np.arange(3, 8))
        assert np.all(sparse[3:8, :] == 10.0)

    def test_move_frequency(self):
        cfg = BlockSupportConfig(n=100, block_len=9, magnitude=1.0, start=50, seed=7)
        supports, _ = moving_block_sparse(cfg, 10_000)
        moves = sum(
            int(supports[t][0] != supports[t - 1][0]) for t in range(1, 10_000)
        )
        assert abs(moves / 9999 - 0.2) <= 0.02

    def test_sparsity_fraction(self):
        cfg = BlockSupportConfig(n=100, block_len=9, magnitude=100.0, seed=1)
        supports, sparse = moving_block_sparse(cfg, 200)
        for t, s in enumerate(supports):
            assert s.size / 100 == pytest.approx(0.09)
            assert np.count_nonzero(sparse[:, t]) == 9

    def test_support_change_bounded(self):
        cfg = BlockSupportConfig(n=50, block_len=9, magnitude=1.0, seed=3)
        supports, _ = moving_block_sparse(cfg, 500)
        for t in range(1, 500):
            added = np.setdiff1d(supports[t], supports[t - 1]).size
            removed = np.setdiff1d(supports[t - 1], supports[t]).size
            assert added + removed <= 2

    def test_stays_in_range(self):
        cfg = BlockSupportConfig(n=12, block_len=9, magnitude=1.0, start=0, seed=9)
        supports, _ = moving_block_sparse(cfg, 2000)
        for s in supports:
            assert s[0] >= 0 and s[-1] < 12

    def test_bad_probs(self):
        with pytest.raises(ValueError):
            BlockSupportConfig(n=10, block_len=3, magnitude=1.0, p_static=0.5)


class TestMotionForeground:
    def test_static_block(self):
        cfg = MotionBlockConfig(block_shape=(3, 3), pos0=10.0, vel0=0.0,
                                accel_var=0.0, seed=0)
        fg, supports = motion_foreground(cfg, (8, 20), 6)
        for s in supports:
            np.testing.assert_array_equal(s, supports[0])

    def test_unit_velocity(self):
        cfg = MotionBlockConfig(block_shape=(3, 3), pos0=5.0, vel0=1.0,
                                accel_var=0.0, seed=0)
        _, supports = motion_foreground(cfg, (8, 30), 10)
        centers = [int(np.median(s)) % 30 for s in supports]
        diffs = np.diff(centers)
        np.testing.assert_array_equal(diffs, np.ones(9))

    def test_truncation_respected(self):
        from reprocs.datagen import _truncated_gaussian

        rng = np.random.default_rng(0)
        std = np.sqrt(0.02)
        draws = np.array([_truncated_gaussian(rng, std) for _ in range(100_000)])
        assert np.all(np.abs(draws) < 2 * std)

    def test_intensities_in_range(self):
        cfg = MotionBlockConfig(block_shape=(4, 5), seed=2)
        fg, supports = motion_foreground(cfg, (10, 40), 8)
        for t, s in enumerate(supports):
            vals = fg[s, t]
            assert np.all((vals >= 170.0) & (vals <= 230.0))

    def test_reflects_at_boundary(self):
        cfg = MotionBlockConfig(block_shape=(3, 5), pos0=36.0, vel0=1.0,
                                accel_var=0.0, seed=0)
        _, supports = motion_foreground(cfg, (8, 40), 20)
        first_cols = [s[0] % 40 for s in supports]
        assert max(first_cols) <= 40 - 5
        assert min(first_cols) >= 0
        assert len(set(first_cols)) > 1  # bounced back, still moving

    def test_block_too_large(self):
        with pytest.raises(ValueError):
            motion_foreground(MotionBlockConfig(block_shape=(50, 5)), (20, 20), 3)


class TestOverlay:
    def test_empty_supports(self):
        rng = np.random.default_rng(0)
        bg = rng.standard_normal((6, 4))
        fg = np.zeros_like(bg)
        supports = [np.empty(0, np.int64)] * 4
        composite, sparse, _ = overlay(bg, fg, supports)
        np.testing.assert_array_equal(composite, bg)
        np.testing.assert_array_equal(sparse, np.zeros_like(bg))

    def test_foreground_equals_background(self):
        rng = np.random.default_rng(1)
        bg = rng.standard_normal((6, 3))
        supports = [np.array([1, 2], np.int64)] * 3
        composite, sparse, _ = overlay(bg, bg.copy(), supports)
        np.testing.assert_array_equal(sparse, np.zeros_like(bg))
        for s in supports:
            assert s.size > 0

    def test_single_pixel(self):
        bg = np.zeros((8, 1))
        fg = np.zeros((8, 1))
        bg[5, 0], fg[5, 0] = 3.0, 10.0
        composite, sparse, _ = overlay(bg, fg, [np.array([5], np.int64)])
        assert composite[5, 0] == 10.0
        assert sparse[5, 0] == 7.0

    def test_training_mean(self):
        bg = np.column_stack([np.full(4, 2.0), np.full(4, 4.0), np.full(4, 100.0)])
        _, _, mean = overlay(bg, bg * 0, [np.empty(0, np.int64)] * 3, t_train=2)
        np.testing.assert_allclose(mean, np.full(4, 3.0))


class TestGaussianOperator:
    def test_deterministic(self):
        a = gaussian_operator(7, 10, seed=5)
        b = gaussian_operator(7, 10, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_column_norm_concentration(self):
        mat = gaussian_operator(70, 100, seed=0)
        mean_sq = float(np.mean(np.sum(mat**2, axis=0)))
        assert abs(mean_sq - 1.0) <= 0.1

    def test_orthonormal_zero_order_one_ric(self):
        mat = gaussian_operator(8, 8, seed=1, orthonormalize=True)
        col_norms = np.sum(mat**2, axis=0)
        assert np.max(np.abs(col_norms - 1.0)) <= 1e-10

    def test_orthonormalize_needs_tall(self):
        with pytest.raises(ValueError):
            gaussian_operator(4, 8, orthonormalize=True)


class TestScenarios:
    def test_table_scenario_consistency(self):
        data = build_table_scenario("9-large", seed=0, t_train=100, post_frames=20)
        assert data.measurements.shape == (100, 120)
        np.testing.assert_array_equal(
            data.measurements, data.lowrank + data.sparse
        )
        # training frames carry no sparse component
        assert np.all(data.sparse[:, :100] == 0)
        for t in range(100, 120):
            assert data.supports[t].size == 9
            np.testing.assert_array_equal(
                np.flatnonzero(data.sparse[:, t]), data.supports[t]
            )
        assert data.q == 1.0

    def test_case_parameters(self):
        small = build_table_scenario("27-small", seed=1, t_train=60, post_frames=10)
        assert small.q == 0.25
        post = small.sparse[:, 60:]
        assert np.max(np.abs(post)) == 10.0
        assert small.supports[-1].size == 27

    def test_unknown_case(self):
        with pytest.raises(ValueError, match="unknown case"):
            build_table_scenario("50-huge")

    def test_motion_scenario_shapes(self):
        data = build_motion_scenario(
            seed=0,
            dims=(12, 20),
            r0=3,
            t_train=30,
            post_frames=5,
            foreground=MotionBlockConfig(block_shape=(5, 4), pos0=8.0),
        )
        assert data.measurements.shape == (240, 35)
        assert data.t_train == 30
        assert data.supports[-1].size > 0
        assert data.config["case"] == "lake-like-motion"

    def test_variance_profile(self):
        prof = default_variance_profile(20)
        assert prof[0] == pytest.approx(1e4)
        assert prof[-1] == pytest.approx(14.13, abs=0.03)
