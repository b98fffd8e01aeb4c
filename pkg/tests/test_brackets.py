"""Tests for bracket families: grids, canonical maps, L_p sizes, the
epigraph Hausdorff bridge, partition assembly, and the closed-form count
and size certificates."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import polybracket.brackets as br
import polybracket.enumeration as enum
import polybracket.geometry as geo
import polybracket.partition as part
import polybracket.schedule as sched
from polybracket.errors import (ConstructionBugError, DegenerateInputError,
                                DomainError, NoCertificateError)


def unit_interval_family(eps=0.5, enumerate_count=False):
    return br.lipschitz_bracket_family(
        (np.array([0.0]), np.array([1.0])), 1.0, [1.0], eps,
        enumerate_count=enumerate_count)


def random_lipschitz_fn(rng, d, gammas, b, m=4, c_scale=0.2):
    """Max-affine function with per-axis slopes inside gammas and values
    kept inside [-b, b] on the unit box by construction."""
    slopes = rng.uniform(-np.asarray(gammas), np.asarray(gammas), (m, d))
    c = rng.uniform(-c_scale, c_scale, m)
    # max over the unit box of each piece, then shift so max f <= b - margin
    piece_max = np.sum(np.maximum(slopes, 0.0), axis=1) + c
    shift = max(0.0, float(piece_max.max()) - (b - 0.05))
    return br.ConvexFn(slopes, c - shift, b)


class TestConvexFn:
    def test_max_affine_by_hand(self):
        f = br.ConvexFn([[1.0, 0.0], [0.0, 2.0]], [0.0, -0.5], 5.0)
        assert f.raw(np.array([0.3, 0.1])) == pytest.approx(0.3)
        assert f.raw(np.array([0.1, 0.8])) == pytest.approx(1.1)
        vals = f.raw(np.array([[0.3, 0.1], [0.1, 0.8]]))
        assert np.allclose(vals, [0.3, 1.1])

    def test_cap_flag_sticks(self):
        f = br.ConvexFn([[1.0]], [0.0], 0.5)
        assert f(np.array([0.2])) == pytest.approx(0.2)
        assert not f.cap_hit
        assert f(np.array([0.9])) == pytest.approx(0.5)
        assert f.cap_hit

    def test_lower_clip(self):
        f = br.ConvexFn([[0.0]], [-3.0], 1.0)
        assert f(np.array([0.0])) == -1.0

    def test_verify_bound(self):
        f = br.ConvexFn([[1.0]], [0.0], 1.0)
        pts = np.linspace(0, 1, 50)[:, None]
        assert f.verify_bound(pts)
        assert not f.verify_bound(np.array([[1.5]]))

    def test_slope_bounds(self):
        f = br.ConvexFn([[1.0, -2.0], [0.5, 0.25]], [0.0, 0.0], 5.0)
        assert np.allclose(f.slope_bounds(), [1.0, 2.0])
        diag = np.array([[1.0, 1.0]]) / math.sqrt(2)
        assert f.slope_bounds(diag)[0] == pytest.approx(math.sqrt(2) / 2)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            br.ConvexFn(np.zeros((0, 2)), [], 1.0)
        with pytest.raises(DomainError):
            br.ConvexFn([[1.0]], [0.0, 0.0], 1.0)
        with pytest.raises(DomainError):
            br.ConvexFn([[1.0]], [0.0], 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
    def test_convexity_along_segments(self, seed, lam):
        rng = np.random.Generator(np.random.Philox(seed))
        f = br.ConvexFn(rng.normal(size=(3, 2)), rng.normal(size=3), 50.0)
        x, y = rng.uniform(-1, 1, (2, 2))
        mid = lam * x + (1 - lam) * y
        assert f.raw(mid) <= lam * f.raw(x) + (1 - lam) * f.raw(y) + 1e-9


class TestRectangle:
    def test_axis_aligned_roundtrip(self):
        r = br.Rectangle.axis_aligned([0.0, -1.0], [2.0, 3.0])
        pts = np.array([[0.5, 0.0], [2.0, 3.0]])
        assert np.allclose(r.to_ambient(r.to_local(pts)), pts)
        assert r.volume() == pytest.approx(8.0)

    def test_rotated_frame(self):
        c, s = math.cos(0.3), math.sin(0.3)
        basis = np.array([[c, s], [-s, c]])
        r = br.Rectangle(basis, [0.0, 0.0], [1.0, 2.0], origin=[1.0, 1.0])
        t = np.array([[0.5, 1.5]])
        x = r.to_ambient(t)
        assert np.allclose(r.to_local(x), t)
        assert r.volume() == pytest.approx(2.0)

    def test_bad_basis_raises(self):
        with pytest.raises(DegenerateInputError):
            br.Rectangle(np.array([[1.0, 1.0]]), [0.0], [1.0])

    def test_hi_below_lo_raises(self):
        with pytest.raises(DomainError):
            br.Rectangle.axis_aligned([0.0], [-1.0])

    def test_rect_for_cell_contains_closure(self):
        p = geo.unit_box(2)
        u = sched.compute_u(p, 2.0, mode="empirical")
        schedules = {k: sched.build_schedule(0.25, 2.0, u, k) for k in (1, 2)}
        cells = part.build_cells(p, schedules)
        for cell in cells[:10]:
            rect = br.rect_for_cell(cell)
            local = cell.closure.vertices() @ cell.basis.e.T
            assert np.all(local >= rect.lo[None, :] - 1e-9)
            assert np.all(local <= rect.hi[None, :] + 1e-9)


class TestProjection:
    def test_inside_points_unchanged(self):
        sq = geo.unit_box(2)
        pts = np.array([[0.5, 0.5], [0.1, 0.9]])
        out = br._project_batch(sq.normals, sq.offsets, pts,
                                np.ones(2), np.array([0.5, 0.5]))
        assert np.allclose(out, pts)

    def test_unweighted_square(self):
        sq = geo.unit_box(2)
        pts = np.array([[2.0, 0.5], [2.0, 2.0], [-1.0, 0.3]])
        out = br._project_batch(sq.normals, sq.offsets, pts,
                                np.ones(2), np.array([0.5, 0.5]))
        assert np.allclose(out, [[1.0, 0.5], [1.0, 1.0], [0.0, 0.3]],
                           atol=1e-8)

    def test_weighted_triangle_by_hand(self):
        # minimize 4(x-1)^2 + (y-1)^2 over x+y <= 1, x,y >= 0: the KKT
        # point on the hypotenuse is (4/5, 1/5).
        tri = geo.standard_triangle()
        out = br._project_batch(tri.normals, tri.offsets,
                                np.array([[1.0, 1.0]]),
                                np.array([4.0, 1.0]),
                                np.array([0.25, 0.25]))
        assert np.allclose(out[0], [0.8, 0.2], atol=1e-8)

    def test_result_satisfies_constraints_exactly(self):
        tri = geo.standard_triangle()
        rng = np.random.Generator(np.random.Philox(3))
        pts = rng.uniform(-1, 2, (200, 2))
        out = br._project_batch(tri.normals, tri.offsets, pts,
                                np.array([2.0, 0.5]),
                                np.array([0.25, 0.25]))
        slack = out @ tri.normals.T - tri.offsets[None, :]
        assert np.all(slack >= -1e-15)


class TestFamilyGrid:
    def test_unit_interval_oracle(self):
        # eps = 1/2, Gamma = 1, d = 1: pitch eps/(4*1*1) = 1/8, quantum 1/8,
        # nine nodes on [0, 1].
        fam = unit_interval_family()
        assert fam.pitch[0] == pytest.approx(0.125)
        assert fam.quantum == pytest.approx(0.125)
        assert fam.shape == (9,)

    def test_zero_fn_bracket(self):
        fam = unit_interval_family()
        b0 = fam.canonical_map(br.ConvexFn([[0.0]], [0.0], 1.0))
        xs = np.linspace(0, 1, 33)[:, None]
        assert np.allclose(b0.lower(xs), -0.25)
        assert np.allclose(b0.upper(xs), 0.25)
        assert set(b0.key) == {0}

    def test_affine_inside_bracket(self):
        fam = unit_interval_family()
        f = br.ConvexFn([[1.0]], [0.0], 1.0)
        bx = fam.canonical_map(f)
        probes = np.linspace(0, 1, 1000)[:, None]
        assert bx.covers(f, probes)

    def test_spacing_below_pitch(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.array([1.0, 0.7])), 1.0, [1.0, 3.0], 0.3)
        assert np.all(fam.spacing <= fam.pitch + 1e-12)

    def test_zero_gamma_axis_collapses(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), 1.0, [1.0, 0.0], 0.5)
        assert fam.shape[1] == 1
        f = br.ConvexFn([[1.0, 0.0]], [0.0], 1.0)
        bx = fam.canonical_map(f)
        rng = np.random.Generator(np.random.Philox(0))
        probes = rng.uniform(0, 1, (500, 2))
        assert bx.covers(f, probes)

    def test_bad_family_inputs(self):
        box = (np.zeros(1), np.ones(1))
        with pytest.raises(DomainError):
            br.lipschitz_bracket_family(box, 1.0, [1.0], 0.0)
        with pytest.raises(DomainError):
            br.lipschitz_bracket_family(box, -1.0, [1.0], 0.5)
        with pytest.raises(DomainError):
            br.lipschitz_bracket_family(box, 1.0, [-1.0], 0.5)
        with pytest.raises(DomainError):
            br.lipschitz_bracket_family(box, 1.0, [1.0, 1.0], 0.5)

    def test_lazy_and_materialized_keys_agree(self):
        fam = unit_interval_family()
        f = br.ConvexFn([[0.7]], [-0.2], 1.0)
        lazy = fam.canonical_map(f)
        # touch a probe first so the per-node cache path is exercised
        lazy.lower(np.array([[0.4]]))
        fresh = fam.canonical_map(f)
        assert lazy.key == fresh.key
        assert lazy.key_digest() == fresh.key_digest()

    def test_digests_separate_functions(self):
        fam = unit_interval_family()
        b0 = fam.canonical_map(br.ConvexFn([[0.0]], [0.0], 1.0))
        b1 = fam.canonical_map(br.ConvexFn([[1.0]], [0.0], 1.0))
        assert b0.key_digest() != b1.key_digest()

    def test_huge_grid_refuses_key_tuple(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), 1.0, [1.0, 1.0], 1e-3)
        assert fam.n_nodes > br.KEY_MATERIALIZE_LIMIT
        bx = fam.canonical_map(br.ConvexFn([[0.0, 0.0]], [0.0], 1.0))
        with pytest.raises(DomainError):
            _ = bx.key
        with pytest.raises(DomainError):
            bx.key_digest()
        # explicit node indices still work
        assert len(bx.key_digest(np.arange(64))) == 32

    def test_count_gates(self):
        # more than 12 nodes per axis
        fam = unit_interval_family(eps=0.25)
        assert fam.shape[0] > br.ENUMERABLE_NODES_PER_AXIS
        assert fam.enumerated_count() is None
        # dimension 3
        fam3 = br.lipschitz_bracket_family(
            (np.zeros(3), np.ones(3)), 1.0, [0.1] * 3, 0.5)
        assert fam3.enumerated_count() is None
        # quantum below the enumeration margin
        famq = br.lipschitz_bracket_family(
            (np.zeros(1), 1e-4 * np.ones(1)), 1.0, [1.0], 3e-5)
        assert famq.enumerated_count() is None


class TestFamilyCounts:
    def test_half_interval_count_frozen(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(1), 0.5 * np.ones(1)), 1.0, [1.0], 0.5,
            enumerate_count=True)
        assert fam.count_bound == 671

    def test_short_interval_slope(self):
        # Exact key counts on [0, 1/8], Gamma = 1, b = 1.  The fitted
        # log-log slope sits near the d/2 = 1/2 rate.
        expected = {0.5: 49, 0.25: 253, 0.125: 2879}
        box = (np.zeros(1), np.array([0.125]))
        logs = []
        for eps, want in expected.items():
            fam = br.lipschitz_bracket_family(box, 1.0, [1.0], eps,
                                              enumerate_count=True)
            assert fam.count_bound == want
            logs.append((math.log(1 / eps), math.log(math.log(want))))
        x, y = np.array(logs).T
        slope = np.polyfit(x, y, 1)[0]
        assert 0.35 <= slope <= 0.65

    def test_count_monotone_in_eps(self):
        box = (np.zeros(1), np.array([0.125]))
        counts = [br.lipschitz_bracket_family(box, 1.0, [1.0], e,
                                              enumerate_count=True)
                  .count_bound for e in (0.5, 0.25)]
        assert counts[0] < counts[1]


class TestBracketInvariants:
    def test_seeded_lipschitz_functions_covered(self):
        # 1000 seeded Gamma-Lipschitz convex functions on the unit square,
        # each checked against its canonical bracket at shared probes.
        gammas = np.array([1.0, 1.0])
        b = 3.0
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), b, gammas, 0.3)
        rng = np.random.Generator(np.random.Philox(42))
        probes = rng.uniform(0, 1, (10_000, 2))
        bad = 0
        for _ in range(1000):
            f = random_lipschitz_fn(rng, 2, gammas, b)
            if not fam.canonical_map(f).covers(f, probes):
                bad += 1
        assert bad == 0

    def test_sup_size_equals_eps(self):
        fam = unit_interval_family()
        f = br.ConvexFn([[0.5]], [0.1], 1.0)
        assert br.lp_size(fam.canonical_map(f), math.inf) == \
            pytest.approx(0.5)

    def test_explicit_bracket_needs_order(self):
        fam = unit_interval_family()
        with pytest.raises(DomainError):
            br.Bracket.from_node_values(fam, np.ones(9), np.zeros(9))


class TestLpSize:
    @staticmethod
    def square_family():
        return br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), 1.0, [1.0, 1.0], 0.5, p=1.0)

    def test_gap_x1_p1(self):
        # u - l = x_1 on [0,1]^2: integral 1/2 exactly.
        fam = self.square_family()
        x1 = fam.node_points(None)[:, 0]
        bo = br.Bracket.from_node_values(fam, np.zeros(fam.n_nodes), x1)
        assert br.lp_size(bo, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_gap_x1_p2(self):
        fam = self.square_family()
        x1 = fam.node_points(None)[:, 0]
        bo = br.Bracket.from_node_values(fam, np.zeros(fam.n_nodes), x1)
        assert br.lp_size(bo, 2.0) == pytest.approx(math.sqrt(1 / 3),
                                                    abs=1e-12)

    def test_constant_gap_all_p(self):
        fam = self.square_family()
        c = br.Bracket.from_node_values(fam, np.zeros(fam.n_nodes),
                                        0.7 * np.ones(fam.n_nodes))
        for p in (1.0, 2.0, 3.0, math.inf):
            assert br.lp_size(c, p) == pytest.approx(0.7, abs=1e-12)

    def test_fractional_p_quadrature(self):
        # int_0^1 x^2.5 dx = 1/3.5; the degree-5 rule is within 1e-6 of the
        # non-polynomial integrand.
        fam = self.square_family()
        x1 = fam.node_points(None)[:, 0]
        bo = br.Bracket.from_node_values(fam, np.zeros(fam.n_nodes), x1)
        want = (1 / 3.5) ** (1 / 2.5)
        assert br.lp_size(bo, 2.5) == pytest.approx(want, abs=1e-6)

    def test_canonical_fast_path_matches_explicit(self):
        fam = unit_interval_family()
        f0 = br.ConvexFn([[0.0]], [0.0], 1.0)
        lazy = br.lp_size(fam.canonical_map(f0), 2.0)
        explicit = br.Bracket.from_node_values(
            fam, -0.25 * np.ones(9), 0.25 * np.ones(9))
        assert lazy == pytest.approx(br.lp_size(explicit, 2.0), abs=1e-12)

    def test_single_node_axis_volume_counts(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.array([1.0, 0.5])), 1.0, [1.0, 0.0], 0.4)
        f0 = br.ConvexFn([[0.0, 0.0]], [0.0], 1.0)
        # gap = 0.4 over volume 0.5
        assert br.lp_size(fam.canonical_map(f0), 1.0) == \
            pytest.approx(0.2, abs=1e-12)

    def test_bad_p_and_domain(self):
        fam = unit_interval_family()
        b0 = fam.canonical_map(br.ConvexFn([[0.0]], [0.0], 1.0))
        with pytest.raises(DomainError):
            br.lp_size(b0, 0.5)
        with pytest.raises(DomainError):
            br.lp_size(b0, 2.0, domain=br.Rectangle.axis_aligned([0.], [1.]))
        assert br.lp_size(b0, 2.0, domain=fam.rect) == pytest.approx(0.5)

    def test_gm_rule_properties(self):
        for n, s in ((1, 2), (2, 1), (2, 2), (3, 1)):
            pts, wts = br._gm_rule(n, s)
            assert wts.sum() == pytest.approx(1 / math.factorial(n),
                                              abs=1e-12)
            # monomial exactness up to degree 2s+1 in the first coordinate:
            # int over the standard simplex of x^a is a! / (a + n)!.
            for a in range(1, 2 * s + 2):
                got = float(wts @ pts[:, 1] ** a)
                want = math.factorial(a) / math.factorial(a + n)
                assert got == pytest.approx(want, rel=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_hoelder_between_p1_and_p2(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        fam = self.square_family()
        gap = rng.uniform(0, 1, fam.n_nodes)
        bk = br.Bracket.from_node_values(fam, np.zeros(fam.n_nodes), gap)
        vol = fam.rect.volume()
        assert br.lp_size(bk, 1.0) <= \
            br.lp_size(bk, 2.0) * math.sqrt(vol) + 1e-9


class TestEpigraphBound:
    @staticmethod
    def interval_domain():
        return geo.Polytope(np.array([[1.0], [-1.0]]),
                            np.array([0.0, -1.0]))

    def test_d1_oracle(self):
        dom = self.interval_domain()
        f = br.ConvexFn([[0.0]], [0.0], 1.0, domain=dom)
        g = br.ConvexFn([[1.0]], [-0.5], 1.0, domain=dom)
        lhs, rhs, ok = br.epigraph_hausdorff_bound(f, g, 1.0, [1.0])
        assert lhs == pytest.approx(0.5, abs=1e-12)
        assert rhs == pytest.approx(0.5 * math.sqrt(2.0), abs=1e-9)
        assert ok

    def test_constant_gap_equality(self):
        dom = self.interval_domain()
        f = br.ConvexFn([[0.0]], [0.0], 1.0, domain=dom)
        g = br.ConvexFn([[0.0]], [0.3], 1.0, domain=dom)
        lhs, rhs, ok = br.epigraph_hausdorff_bound(f, g, 1.0, [0.0])
        assert lhs == pytest.approx(0.3, abs=1e-9)
        assert rhs == pytest.approx(0.3, abs=1e-9)
        assert ok

    def test_identical_functions(self):
        dom = self.interval_domain()
        f = br.ConvexFn([[0.2]], [0.1], 1.0, domain=dom)
        lhs, rhs, ok = br.epigraph_hausdorff_bound(f, f, 1.0, [1.0])
        assert lhs == 0.0
        assert rhs == pytest.approx(0.0, abs=1e-9)
        assert ok

    def test_missing_domain_raises(self):
        f = br.ConvexFn([[0.0]], [0.0], 1.0)
        with pytest.raises(DomainError):
            br.epigraph_hausdorff_bound(f, f, 1.0, [1.0])

    def test_mismatched_domains_raise(self):
        dom = self.interval_domain()
        other = geo.Polytope(np.array([[1.0], [-1.0]]),
                             np.array([0.0, -2.0]))
        f = br.ConvexFn([[0.0]], [0.0], 1.0, domain=dom)
        g = br.ConvexFn([[0.0]], [0.0], 1.0, domain=other)
        with pytest.raises(DomainError):
            br.epigraph_hausdorff_bound(f, g, 1.0, [1.0])

    def test_uncertified_slope_raises(self):
        dom = self.interval_domain()
        f = br.ConvexFn([[2.0]], [-1.0], 2.0, domain=dom)
        g = br.ConvexFn([[0.0]], [0.0], 2.0, domain=dom)
        with pytest.raises(NoCertificateError):
            br.epigraph_hausdorff_bound(f, g, 2.0, [1.0])

    def test_value_beyond_b_raises(self):
        dom = self.interval_domain()
        f = br.ConvexFn([[1.0]], [0.5], 2.0, domain=dom)
        g = br.ConvexFn([[0.0]], [0.0], 2.0, domain=dom)
        with pytest.raises(DomainError):
            br.epigraph_hausdorff_bound(f, g, 1.0, [1.0])

    def test_random_pairs_on_square(self):
        # The inequality at work on the shapes the acceptance run uses,
        # smaller batch here.
        sq = geo.unit_box(2)
        rng = np.random.Generator(np.random.Philox(11))
        gammas = np.array([1.0, 1.0])
        checked = 0
        while checked < 50:
            f = random_lipschitz_fn(rng, 2, gammas, 1.0, m=3, c_scale=0.3)
            g = random_lipschitz_fn(rng, 2, gammas, 1.0, m=3, c_scale=0.3)
            f.domain = sq
            g.domain = sq
            lhs, rhs, ok = br.epigraph_hausdorff_bound(f, g, 1.0, gammas,
                                                       n_grid=900)
            assert ok, f"violated at pair {checked}: {lhs} > {rhs}"
            checked += 1


class TestCombine:
    @staticmethod
    def box_cell(lo, hi, half_open=()):
        return br.BoxCell(br.Rectangle.axis_aligned(lo, hi),
                          half_open=half_open)

    def test_single_cell(self):
        cell = self.box_cell([0.0, 0.0], [1.0, 1.0])
        fam = br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), 1.0, [1.0, 1.0], 0.5)
        gf = br.combine_families([cell], [fam], [0.5], 2.0, audit_n=0)
        assert gf.size_bound == pytest.approx(0.5)
        f = br.ConvexFn([[0.3, -0.2]], [0.1], 1.0)
        gb = gf.canonical_map(f)
        pts = np.array([[0.2, 0.8], [0.7, 0.1]])
        direct = fam.canonical_map(f)
        assert np.allclose(gb.lower(pts), direct.lower(pts))
        assert gb.key == (direct.key,)

    def test_two_cells_p1_size(self):
        # [0,1] split at 0.5; left family size 0.2, right trivial 2b = 2.
        left = self.box_cell([0.0], [0.5], half_open=(0,))
        right = self.box_cell([0.5], [1.0])
        fam = br.lipschitz_bracket_family(
            (np.array([0.0]), np.array([0.5])), 1.0, [1.0], 0.2)
        gf = br.combine_families([left, right], [fam, None], [0.2, 2.0],
                                 1.0, b=1.0, audit_n=0)
        assert gf.size_bound == pytest.approx(0.2 * 0.5 + 2.0 * 0.5)
        f = br.ConvexFn([[0.0]], [0.0], 1.0)
        gb = gf.canonical_map(f)
        assert gb.lower(np.array([0.75])) == -1.0
        assert gb.upper(np.array([0.75])) == 1.0
        assert abs(gb.upper(np.array([0.25]))) <= 0.1 + 1e-12
        # boundary point goes to the closed right cell
        assert gf.locate(np.array([[0.5]]))[0] == 1

    def test_nine_cell_square_exact_size(self):
        # 3x3 grid of cells with distinct per-cell eps; the combined L_2
        # budget must match the direct integral of the piecewise-constant
        # gap to 1e-9.
        edges = [0.0, 1 / 3, 2 / 3, 1.0]
        cells, fams, weights = [], [], []
        eps_vals = []
        k = 0
        for i in range(3):
            for j in range(3):
                lo = [edges[i], edges[j]]
                hi = [edges[i + 1], edges[j + 1]]
                half = tuple(a for a, is_last in
                             ((0, i == 2), (1, j == 2)) if not is_last)
                cells.append(self.box_cell(lo, hi, half_open=half))
                eps = 0.1 + 0.05 * k
                eps_vals.append(eps)
                fams.append(br.lipschitz_bracket_family(
                    (np.array(lo), np.array(hi)), 1.0, [1.0, 1.0], eps))
                weights.append(eps)
                k += 1
        gf = br.combine_families(cells, fams, weights, 2.0, audit_n=0)
        direct = math.fsum(e ** 2 * (1 / 9) for e in eps_vals) ** 0.5
        assert abs(gf.size_bound - direct) <= 1e-9
        # per-cell gap is the cell's eps wherever the point lands
        f = br.ConvexFn([[0.1, 0.1]], [0.0], 1.0)
        gb = gf.canonical_map(f)
        rng = np.random.Generator(np.random.Philox(5))
        pts = rng.uniform(0, 1, (200, 2))
        where = gf.locate(pts)
        gap = gb.upper(pts) - gb.lower(pts)
        assert np.allclose(gap, np.array(eps_vals)[where], atol=1e-9)

    def test_mismatched_inputs(self):
        cell = self.box_cell([0.0], [1.0])
        with pytest.raises(DomainError):
            br.combine_families([cell], [], [1.0], 2.0)
        with pytest.raises(DomainError):
            br.combine_families([], [], [], 2.0)
        with pytest.raises(DomainError):
            br.combine_families([cell], [None], [0.0], 2.0)

    def test_audit_catches_gap(self):
        # cells cover only the left half of the declared domain
        cell = self.box_cell([0.0, 0.0], [0.5, 1.0])
        with pytest.raises(ConstructionBugError):
            br.combine_families([cell], [None], [2.0], 2.0,
                                domain=geo.unit_box(2), audit_n=256)

    def test_outside_point_raises(self):
        cell = self.box_cell([0.0], [1.0])
        gf = br.combine_families([cell], [None], [2.0], 2.0, audit_n=0)
        gb = gf.canonical_map(br.ConvexFn([[0.0]], [0.0], 1.0))
        with pytest.raises(DomainError):
            gb.lower(np.array([2.0]))


class TestGlobalFamily:
    @staticmethod
    def sample_fn(rng, b=1.0):
        slopes = rng.normal(0, 0.3, (5, 2))
        c = rng.normal(0, 0.1, 5)
        return slopes, c

    def build(self, poly, eps=0.25, pnorm=2.0, b=1.0):
        return br.build_global_family(poly, b, eps, pnorm, audit_n=512)

    def test_square_structure(self):
        gf = self.build(geo.unit_box(2))
        assert gf.n_cells > 0
        # trivial cells are exactly the band-0 cells
        for cell, fam in zip(gf.cells, gf.families):
            trivial = cell.k > 0 and 0 in cell.i_tuple
            assert (fam is None) == trivial
        # the interior cell carries the full eps budget
        inner = next(i for i, c in enumerate(gf.cells) if c.k == 0)
        assert gf.weights[inner] == pytest.approx(0.25)
        assert gf.families[inner].eps == pytest.approx(0.25)

    def test_trivial_weight_is_2b(self):
        gf = br.build_global_family(geo.unit_box(2), 2.0, 0.25, 2.0,
                                    audit_n=128)
        for cell, fam, w in zip(gf.cells, gf.families, gf.weights):
            if fam is None:
                assert w == pytest.approx(4.0)

    def test_band_budgets_match_schedule(self):
        gf = self.build(geo.unit_box(2))
        sk = gf.schedules
        for cell, w in zip(gf.cells, gf.weights):
            if cell.k > 0 and 0 not in cell.i_tuple:
                want = math.exp(sum(sk[cell.k].log_a[i - 1]
                                    for i in cell.i_tuple))
                assert w == pytest.approx(want, rel=1e-12)

    def test_size_bound_recompute(self):
        gf = self.build(geo.unit_box(2))
        direct = math.fsum(
            w ** 2 * c.volume() for w, c in zip(gf.weights, gf.cells))
        assert gf.size_bound == pytest.approx(direct ** 0.5, rel=1e-12)

    def test_coverage_on_seeded_functions(self):
        for poly in (geo.unit_box(2), geo.standard_triangle()):
            gf = self.build(poly)
            rng = np.random.Generator(np.random.Philox(17))
            probes = br._rejection_sample(poly, 2000, 23)
            verts = poly.vertices()
            for _ in range(20):
                slopes, c = self.sample_fn(rng)
                sup = float(np.max(verts @ slopes.T + c[None, :]))
                f = br.ConvexFn(slopes, c - max(0.0, sup - 0.9), 1.0,
                                domain=poly)
                gb = gf.canonical_map(f)
                assert gb.covers(probes)

    def test_clipped_nodes_stay_in_closure(self):
        gf = self.build(geo.standard_triangle())
        smallest = min((f for f in gf.families if f is not None),
                       key=lambda f: f.n_nodes)
        idx = gf.families.index(smallest)
        pts = smallest.node_points(None)
        assert np.all(gf.cells[idx].closure.contains(pts, tol=1e-9))

    def test_global_key_shape(self):
        gf = self.build(geo.unit_box(2))
        rng = np.random.Generator(np.random.Philox(29))
        slopes, c = self.sample_fn(rng)
        verts = geo.unit_box(2).vertices()
        sup = float(np.max(verts @ slopes.T + c[None, :]))
        f = br.ConvexFn(slopes, c - max(0.0, sup - 0.9), 1.0)
        key = gf.canonical_map(f).key
        assert len(key) == gf.n_cells
        for cell_key, fam in zip(key, gf.families):
            if fam is None:
                assert cell_key == 0
            else:
                assert isinstance(cell_key, tuple)


class TestTheoreticalCount:
    def test_c_dk_oracle(self):
        # d = 2, k = 1: (2d)^{d-k} Gamma(3/2) / sqrt(pi) = 4 * (1/2) = 2.
        assert br._c_dk(2, 1) == pytest.approx(2.0, abs=1e-12)

    def test_homogeneity_exact(self):
        for poly in (geo.unit_box(2), geo.standard_triangle()):
            r1 = br.theoretical_count(poly, 1.0, 0.125, 2.0)
            r2 = br.theoretical_count(poly, 1.0, 0.25, 2.0)
            d = poly.dim
            ratio = r1["log_count_bound"] / r2["log_count_bound"]
            assert ratio == pytest.approx(2.0 ** (d / 2.0), rel=1e-12)

    def test_size_certificate_two_ways(self):
        for poly in (geo.unit_box(2), geo.standard_triangle(),
                     geo.regular_polygon(5)):
            for pnorm in (1.0, 2.0):
                rep = br.theoretical_count(poly, 1.0, 0.125, pnorm)
                a, c = rep["size_certificate"], \
                    rep["size_certificate_percell"]
                assert abs(a - c) <= 1e-9 * max(1.0, abs(a))

    def test_per_face_terms_sum(self):
        rep = br.theoretical_count(geo.unit_box(2), 1.0, 0.25, 2.0)
        total = math.fsum(row["log_count_term"] for row in rep["per_face"])
        assert total == pytest.approx(rep["log_count_bound"], rel=1e-12)
        assert rep["c_d"] == 1.0
        assert "non-constructive" in rep["c_d_flag"]

    def test_bound_monotone_in_eps(self):
        r_fine = br.theoretical_count(geo.unit_box(2), 1.0, 0.0625, 2.0)
        r_coarse = br.theoretical_count(geo.unit_box(2), 1.0, 0.25, 2.0)
        assert r_fine["log_count_bound"] > r_coarse["log_count_bound"]

    def test_b_normalization(self):
        # eps scales with b: the count for (b, eps) matches (1, eps/b).
        r_b = br.theoretical_count(geo.unit_box(2), 2.0, 0.5, 2.0)
        r_1 = br.theoretical_count(geo.unit_box(2), 1.0, 0.25, 2.0)
        assert r_b["log_count_bound"] == pytest.approx(
            r_1["log_count_bound"], rel=1e-12)
        assert r_b["size_certificate"] == pytest.approx(
            2.0 * r_1["size_certificate"], rel=1e-12)

    def test_eps_out_of_range(self):
        with pytest.raises(DomainError):
            br.theoretical_count(geo.unit_box(2), 1.0, 1.5, 2.0)


class TestRescale:
    def test_value_identity(self):
        rng = np.random.Generator(np.random.Philox(31))
        f = br.ConvexFn(rng.normal(size=(3, 2)), rng.normal(size=3), 3.0)
        box_from = (np.zeros(2), 2.0 * np.ones(2))
        box_to = (np.zeros(2), np.ones(2))
        g = br.rescale_class(f, box_from, box_to, 3.0, 1.0)
        t = rng.uniform(0, 1, (50, 2))
        x = 2.0 * t
        assert np.allclose(g.raw(t), f.raw(x) / 3.0, atol=1e-12)

    def test_documented_lp_factor(self):
        # b = 3 on [0,2]^2 versus b = 1 on [0,1]^2, p = 1: matched
        # canonical brackets differ in L_1 size by 3 * 4 = 12.
        fam_a = br.lipschitz_bracket_family(
            (np.zeros(2), 2.0 * np.ones(2)), 3.0, [1.5, 1.5], 0.75)
        fam_b = br.lipschitz_bracket_family(
            (np.zeros(2), np.ones(2)), 1.0, [1.0, 1.0], 0.25)
        fa = br.ConvexFn([[0.0, 0.0]], [0.0], 3.0)
        fb = br.ConvexFn([[0.0, 0.0]], [0.0], 1.0)
        ratio = br.lp_size(fam_a.canonical_map(fa), 1.0) / \
            br.lp_size(fam_b.canonical_map(fb), 1.0)
        assert ratio == pytest.approx(12.0, rel=1e-12)

    def test_count_invariance(self):
        # the same normalized instance at two scales: [0,1/8] with b=1
        # against [0,1/4] with b=2 (values and box doubled)
        fam_a = br.lipschitz_bracket_family(
            (np.zeros(1), 0.125 * np.ones(1)), 1.0, [1.0], 0.25,
            enumerate_count=True)
        fam_b = br.lipschitz_bracket_family(
            (np.zeros(1), 0.25 * np.ones(1)), 2.0, [1.0], 0.5,
            enumerate_count=True)
        assert fam_a.count_bound == fam_b.count_bound == 253

    def test_domain_transform(self):
        sq2 = geo.Polytope(np.array([[1.0, 0], [0, 1.0],
                                     [-1.0, 0], [0, -1.0]]),
                           np.array([0.0, 0.0, -2.0, -2.0]))
        f = br.ConvexFn([[1.0, 0.0]], [0.0], 3.0, domain=sq2)
        g = br.rescale_class(f, (np.zeros(2), 2 * np.ones(2)),
                             (np.zeros(2), np.ones(2)), 3.0, 1.0)
        assert g.domain is not None
        assert np.allclose(sorted(g.domain.bbox().ravel()),
                           [0, 0, 1, 1])

    def test_bad_boxes(self):
        f = br.ConvexFn([[1.0]], [0.0], 1.0)
        with pytest.raises(DomainError):
            br.rescale_class(f, (np.ones(1), np.ones(1)),
                             (np.zeros(1), np.ones(1)), 1.0, 1.0)
        with pytest.raises(DomainError):
            br.rescale_class(f, (np.zeros(1), np.ones(1)),
                             (np.zeros(1), np.ones(1)), 1.0, -1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        f = br.ConvexFn(rng.normal(size=(2, 2)), rng.normal(size=2), 2.0)
        a = (np.array([-1.0, 0.0]), np.array([1.0, 3.0]))
        c = (np.zeros(2), np.ones(2))
        back = br.rescale_class(
            br.rescale_class(f, a, c, 2.0, 1.0), c, a, 1.0, 2.0)
        assert np.allclose(back.slopes, f.slopes, atol=1e-12)
        assert np.allclose(back.intercepts, f.intercepts, atol=1e-12)


class TestManifestsAndDumps:
    def test_family_manifest_json(self):
        fam = br.lipschitz_bracket_family(
            (np.zeros(1), 0.5 * np.ones(1)), 1.0, [1.0], 0.5,
            enumerate_count=True)
        blob = json.dumps(br.family_manifest(fam))
        back = json.loads(blob)
        assert back["quantum"] == pytest.approx(0.125)
        assert back["shape"] == [5]
        assert back["count_bound"] == 671
        assert back["clipped"] is False

    def test_global_manifest_json(self):
        gf = br.build_global_family(geo.unit_box(2), 1.0, 0.25, 2.0,
                                    audit_n=128)
        back = json.loads(json.dumps(br.global_manifest(gf)))
        assert back["n_cells"] == gf.n_cells
        assert back["n_trivial"] == \
            sum(1 for f in gf.families if f is None)
        assert len(back["cells"]) == gf.n_cells

    def test_dump_round_trip_explicit(self):
        fam = unit_interval_family()
        lower = np.linspace(-0.5, 0.0, 9)
        upper = np.linspace(0.0, 0.5, 9)
        bk = br.Bracket.from_node_values(fam, lower, upper)
        lo, hi = br.bracket_load(br.bracket_dump(bk), fam.shape)
        assert np.array_equal(lo, lower)
        assert np.array_equal(hi, upper)

    def test_dump_round_trip_canonical(self):
        fam = unit_interval_family()
        f = br.ConvexFn([[0.7]], [-0.1], 1.0)
        bk = fam.canonical_map(f)
        lo, hi = br.bracket_load(br.bracket_dump(bk), fam.shape)
        xs = fam.node_points(None)
        assert np.allclose(hi - lo, 0.5)
        assert np.all(lo.ravel() <= f(xs) + 1e-12)
        assert np.all(f(xs) <= hi.ravel() + 1e-12)

    def test_dump_length_check(self):
        with pytest.raises(DomainError):
            br.bracket_load(b"\x00" * 24, (9,))
