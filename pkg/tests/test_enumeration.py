"""Tests for quantized convex profile counting and achievable-key
enumeration."""

import itertools
import math

import numpy as np
import pytest

import polybracket.enumeration as enum
from polybracket.errors import DomainError


def brute_profile_count(n_steps: int, levels: int) -> int:
    """Independent oracle: enumerate integer sequences of length
    n_steps + 1 with entries in [-levels, levels] and non-decreasing
    differences."""
    rng = range(-levels, levels + 1)
    count = 0
    for seq in itertools.product(rng, repeat=n_steps + 1):
        diffs = [seq[i + 1] - seq[i] for i in range(n_steps)]
        if all(diffs[i + 1] >= diffs[i] for i in range(n_steps - 1)):
            count += 1
    return count


class TestProfileCountDP:
    @pytest.mark.parametrize("n_steps,levels", [
        (0, 1), (0, 3), (1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2),
        (4, 1),
    ])
    def test_matches_brute_force(self, n_steps, levels):
        expected = brute_profile_count(n_steps, levels)
        got = enum.log_convex_profile_count(n_steps, levels)
        assert got == pytest.approx(math.log(expected), rel=1e-12)

    def test_two_step_hand_count(self):
        # v0,v1,v2 in {-1,0,1}, v0 + v2 >= 2 v1: 9 + 6 + 1 = 16.
        assert enum.log_convex_profile_count(2, 1) == pytest.approx(
            math.log(16.0), rel=1e-12)

    def test_zero_steps_counts_levels(self):
        assert enum.log_convex_profile_count(0, 5) == pytest.approx(
            math.log(11.0), rel=1e-12)

    def test_large_instance_no_overflow(self):
        # Far beyond float64 linear range; the rescaling path must engage.
        val = enum.log_convex_profile_count(256, 256)
        assert np.isfinite(val)
        assert val > 100.0

    def test_validation(self):
        with pytest.raises(DomainError):
            enum.log_convex_profile_count(-1, 3)
        with pytest.raises(DomainError):
            enum.log_convex_profile_count(2, -1)

    def test_zero_levels_single_profile(self):
        assert enum.log_convex_profile_count(3, 0) == pytest.approx(0.0,
                                                                    abs=0.0)


class TestProfileCountForEps:
    def test_frozen_values(self):
        # Regression pins for the deterministic DP at b=1.
        assert enum.profile_count_for_eps(0.25) == pytest.approx(
            21.6260, abs=5e-4)
        assert enum.profile_count_for_eps(0.125) == pytest.approx(
            33.5869, abs=5e-4)
        assert enum.profile_count_for_eps(0.0625) == pytest.approx(
            50.4246, abs=5e-4)

    def test_monotone_in_eps(self):
        vals = [enum.profile_count_for_eps(e) for e in (0.5, 0.25, 0.125)]
        assert vals[0] < vals[1] < vals[2]

    def test_quick_slope_window(self):
        # Full-range slope is checked in the acceptance suite; this is a
        # fast smoke over the first four scales.
        eps = [2.0 ** -i for i in range(2, 6)]
        logs = enum.profile_count_sweep(eps)
        x = np.log(1.0 / np.asarray(eps))
        y = np.log(np.asarray(logs))
        slope = np.polyfit(x, y, 1)[0]
        assert 0.40 <= slope <= 0.75

    def test_validation(self):
        with pytest.raises(DomainError):
            enum.profile_count_for_eps(0.0)
        with pytest.raises(DomainError):
            enum.profile_count_for_eps(1.5)
        with pytest.raises(DomainError):
            enum.profile_count_for_eps(0.25, b=-1.0)


class TestAchievableKeys:
    def test_single_node_counts_cells(self):
        # q = 1/2, b = 1: cells [-1,-.5),[-.5,0),[0,.5),[.5,1),[1,1.5)
        # with y = 1 landing in the top cell. Five keys.
        n = enum.count_achievable_keys(np.array([0.0]), q=0.5, b=1.0)
        assert n == 5

    def test_two_nodes_interval_oracle(self):
        # Two nodes, |y1 - y0| <= gamma * h; convexity is vacuous, so a
        # key pair is achievable iff the step cap lets the two value cells
        # meet. Count directly by interval arithmetic.
        q, b, gamma, h = 0.5, 1.0, 1.0, 1.0
        keys = range(-2, 3)

        def cell(k):
            lo = max(-b, k * q)
            hi = min(b, (k + 1) * q)
            return lo, hi

        expected = 0
        for k0, k1 in itertools.product(keys, repeat=2):
            lo0, hi0 = cell(k0)
            lo1, hi1 = cell(k1)
            # feasible iff exists y0 in [lo0, hi0'], y1 in [lo1, hi1'] with
            # |y1 - y0| <= gamma h, where hi' is open unless the cell tops
            # out at b.
            hi0_eff = hi0 if hi0 == b else hi0 - enum.CELL_TOP_MARGIN
            hi1_eff = hi1 if hi1 == b else hi1 - enum.CELL_TOP_MARGIN
            if max(lo0 - gamma * h, lo1) <= min(hi0_eff + gamma * h, hi1_eff):
                expected += 1

        got = enum.count_achievable_keys(
            np.array([0.0, 1.0]), q=q, b=b, gammas=(gamma,))
        assert got == expected

    def test_general_matches_fast_path(self):
        # Identical instance through both LP formulations.
        nodes = np.linspace(0.0, 1.0, 4)
        a = enum.count_achievable_keys(nodes, q=0.25, b=1.0, gammas=(1.0,))
        b = enum.count_achievable_keys(nodes, q=0.25, b=1.0, gammas=(1.0,),
                                       method="general")
        assert a == b
        assert a is not None and a > 0

    def test_monotone_profiles_are_achievable(self):
        # Every integer profile with non-decreasing differences whose cells
        # stay in range is realized by the piecewise-linear interpolant of
        # q*k, so the DP count is a lower bound for the unconstrained
        # achievable count on a matched grid.
        q, b = 0.5, 1.0
        r = int(round(b / q))
        nodes = np.linspace(0.0, 1.0, 3)
        dp = brute_profile_count(n_steps=2, levels=r)
        achievable = enum.count_achievable_keys(nodes, q=q, b=b, gammas=None)
        assert achievable is not None
        assert dp <= achievable
        assert achievable <= (2 * r + 1) ** 3

    def test_slope_cap_reduces_count(self):
        nodes = np.linspace(0.0, 1.0, 3)
        loose = enum.count_achievable_keys(nodes, q=0.25, b=1.0)
        tight = enum.count_achievable_keys(nodes, q=0.25, b=1.0,
                                           gammas=(0.25,))
        assert loose is not None and tight is not None
        assert tight < loose

    def test_budget_exhaustion_returns_none(self):
        nodes = np.linspace(0.0, 1.0, 5)
        assert enum.count_achievable_keys(nodes, q=0.25, b=1.0,
                                          budget=3) is None

    def test_2d_grid_deterministic_and_bounded(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        n1 = enum.count_achievable_keys(nodes, q=0.5, b=1.0,
                                        gammas=(1.0, 1.0), budget=10_000)
        n2 = enum.count_achievable_keys(nodes, q=0.5, b=1.0,
                                        gammas=(1.0, 1.0), budget=10_000)
        assert n1 is not None
        assert n1 == n2
        assert 5 <= n1 <= 5 ** 4

    def test_2d_sample_keys_are_enumerated(self):
        # Random Lipschitz convex samples can only hit keys the enumerator
        # found; check the lower-bound semantics on a tiny grid.
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        q, b = 0.5, 1.0
        total = enum.count_achievable_keys(nodes, q=q, b=b,
                                           gammas=(1.0, 1.0), budget=10_000)
        rng = np.random.Generator(np.random.Philox(7))
        seen = set()
        for _ in range(400):
            g = rng.uniform(-1.0, 1.0, size=(3, 2))
            c = rng.uniform(-0.5, 0.5, size=3)
            vals = (nodes @ g.T + c).max(axis=1)
            if np.abs(vals).max() > b:
                continue
            key = tuple(np.floor(vals / q).astype(int))
            key = tuple(min(k, int(math.floor(b / q))) for k in key)
            seen.add(key)
        assert len(seen) <= total

    def test_validation(self):
        with pytest.raises(DomainError):
            enum.count_achievable_keys(np.array([0.0]), q=0.0, b=1.0)
        with pytest.raises(DomainError):
            enum.count_achievable_keys(np.array([0.0]), q=0.5, b=-1.0)
        with pytest.raises(DomainError):
            enum.count_achievable_keys(np.array([0.0]), q=0.5, b=1.0,
                                       method="fast")
