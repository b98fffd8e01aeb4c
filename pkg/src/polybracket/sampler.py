"""Seeded generators for convex test functions and random simple polytopes.

All draws go through a counter-based generator (Philox) keyed by
(seed, index), so sample i is the same whether it is drawn first, last, or
on another thread; parallel workers partition the index range.  Max-of-affine
functions are used throughout because their epigraphs are polytopes, which
keeps the Hausdorff-distance checks exact.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .brackets import ConvexFn
from .errors import (BoundednessError, DegenerateInputError, DomainError,
                     SamplingError)

RETRY_BUDGET = 100

# Jitter scale for de-degenerating non-simple draws; applied outward so the
# inscribed ball survives.
OFFSET_JITTER = 1e-3


def _rng(seed: int, index: int) -> np.random.Generator:
    """Stateless stream: Philox keyed by seed, counter block per index."""
    if not 0 <= seed < 2 ** 64:
        raise DomainError("seed must be a 64-bit unsigned integer")
    if index < 0:
        raise DomainError("index must be nonnegative")
    counter = np.array([0, 0, index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters of one function-sampling stream.

    gammas, when set, switches the stream to the Lipschitz class: per-axis
    slope components are kept within the bounds (zeros pin the component
    exactly, since rejection cannot hit a measure-zero set).
    """

    seed: int
    domain: geo.Polytope
    n_pieces: int = 4
    slope_scale: float = 1.0
    b: float = 1.0
    gammas: tuple = None

    def __post_init__(self):
        if self.n_pieces < 1:
            raise DomainError("n_pieces must be at least 1")
        if not self.slope_scale > 0:
            raise DomainError("slope_scale must be positive")
        if not self.b > 0:
            raise DomainError("b must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.gammas is not None:
            g = np.asarray(self.gammas, dtype=float)
            if g.shape != (self.domain.dim,) or np.any(g < 0) or \
                    not np.all(np.isfinite(g)):
                raise DomainError("gammas must be finite nonnegative, one "
                                  "per axis")
            object.__setattr__(self, "gammas", tuple(float(x) for x in g))


def _calibrated_intercepts(verts, slopes, c_raw, b):
    """Shift intercepts upward so min over the domain stays >= -b.

    Linear pieces attain their domain extrema at vertices, so each piece's
    exact minimum is c_j + min_v <g_j, v>; the max-of-affine dominates every
    piece, and raising all intercepts by the worst deficit certifies the
    lower bound.
    """
    piece_min = np.min(verts @ slopes.T, axis=0) + c_raw
    deficit = -b - float(piece_min.max())
    return c_raw + max(0.0, deficit)


def _bounded_above(verts, slopes, intercepts, b):
    # max-of-affine attains its maximum at a vertex, so the vertex probe
    # grid is an exact upper-bound check
    return float(np.max(verts @ slopes.T + intercepts[None, :])) <= b


def sample_convex_fn(cfg: SamplerConfig, index: int = 0) -> ConvexFn:
    """One member of the bounded convex class on cfg.domain.

    Slopes are Gaussian with scale cfg.slope_scale, intercepts Gaussian
    then calibrated so the domain minimum is >= -b; draws whose maximum
    exceeds b (checked exactly at the vertices) are resampled.

    Raises:
        SamplingError: no admissible draw within the retry budget.
    """
    d = cfg.domain.dim
    verts = cfg.domain.vertices()
    rng = _rng(cfg.seed, index)
    for _ in range(RETRY_BUDGET):
        slopes = rng.normal(0.0, cfg.slope_scale, (cfg.n_pieces, d))
        if cfg.gammas is not None:
            slopes = _filter_slopes(rng, slopes, cfg)
            if slopes is None:
                continue
        c_raw = rng.normal(0.0, cfg.slope_scale, cfg.n_pieces)
        c = _calibrated_intercepts(verts, slopes, c_raw, cfg.b)
        if _bounded_above(verts, slopes, c, cfg.b):
            return ConvexFn(slopes, c, cfg.b, domain=cfg.domain)
    raise SamplingError(
        f"no draw satisfied |f| <= {cfg.b} within {RETRY_BUDGET} attempts; "
        f"slope_scale {cfg.slope_scale} is likely too large for the domain")


def _filter_slopes(rng, slopes, cfg):
    """Redraw slope rows until every axis component fits its bound."""
    g = np.asarray(cfg.gammas)
    free = g > 0
    slopes = slopes.copy()
    slopes[:, ~free] = 0.0
    for _ in range(RETRY_BUDGET):
        bad = np.any(np.abs(slopes[:, free]) > g[free][None, :], axis=1)
        if not np.any(bad):
            return slopes
        redraw = rng.normal(0.0, cfg.slope_scale,
                            (int(bad.sum()), slopes.shape[1]))
        redraw[:, ~free] = 0.0
        slopes[bad] = redraw
    return None


def sample_lipschitz_convex(cfg: SamplerConfig, index: int = 0) -> ConvexFn:
    """One member of the Lipschitz convex class: axis slope components
    rejection-filtered to |g_{j,i}| <= gammas_i, then bounded like
    sample_convex_fn.

    Raises:
        DomainError: cfg has no gammas.
        SamplingError: retry budget exhausted.
    """
    if cfg.gammas is None:
        raise DomainError("sample_lipschitz_convex needs cfg.gammas")
    return sample_convex_fn(cfg, index)


def finite_difference_certificate(fn: ConvexFn, gammas, n_probes: int = 256,
                                  seed: int = 0, h: float = 1e-4,
                                  tol: float = 1e-12) -> bool:
    """Check |f(x + h e_i) - f(x)| <= (gammas_i + tol) h at probe points
    whose steps stay inside the domain."""
    dom = fn.domain
    if dom is None:
        raise DomainError("certificate needs a polytopal domain")
    g = np.asarray(gammas, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    box = dom.bbox()
    pts = rng.uniform(box[:, 0], box[:, 1], (8 * n_probes, dom.dim))
    pts = pts[dom.contains(pts)][:n_probes]
    for i in range(dom.dim):
        stepped = pts.copy()
        stepped[:, i] += h
        ok = dom.contains(stepped)
        if not np.any(ok):
            continue
        diff = np.abs(fn.raw(stepped[ok]) - fn.raw(pts[ok])) / h
        if np.any(diff > g[i] + tol + 1e-9 * g[i]):
            return False
    return True


def sample_simple_polytope(seed: int, d: int, n_facets: int,
                           min_normal_angle: float = 0.0) -> geo.Polytope:
    """Random simple polytope with the unit ball inscribed.

    Unit normals are Gaussian draws; offsets put every facet at distance
    1 + U(0,1) from the origin.  Non-simple or unbounded draws are retried;
    a draw that is merely non-simple is first nudged by jittering offsets
    outward.  min_normal_angle (radians), when positive, additionally
    requires every pair of facets meeting at a vertex to subtend an angle
    in [min_normal_angle, pi - min_normal_angle]; the width-bound suites
    use this to stay inside the regime where the factorial gap bounds
    hold.  For d=2 the conditioned draw is built directly in angle space
    (offset rejection on Gaussian normals is hopeless there); for d=3 it
    filters unconditioned draws.

    Raises:
        DomainError: d not in {2, 3} or too few facets.
        SamplingError: retry budget exhausted.
    """
    if d not in (2, 3):
        raise DomainError("sample_simple_polytope supports d in {2, 3}")
    if n_facets < d + 1:
        raise DomainError(f"need at least {d + 1} facets, got {n_facets}")
    if min_normal_angle > 0 and d == 2:
        return _sample_conditioned_polygon(seed, n_facets, min_normal_angle)
    rng = _rng(seed, 0)
    for _ in range(RETRY_BUDGET):
        raw = rng.normal(size=(n_facets, d))
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms < 1e-9):
            continue
        normals = raw / norms[:, None]
        offsets = -(1.0 + rng.uniform(0.0, 1.0, n_facets))
        try:
            p = geo.Polytope(normals, offsets)
        except BoundednessError:
            continue
        except DegenerateInputError:
            continue
        p = _ensure_simple(p, rng)
        if p is None:
            continue
        if min_normal_angle > 0 and \
                not _corner_angles_ok(p, min_normal_angle):
            continue
        return p
    raise SamplingError(f"no admissible polytope in {RETRY_BUDGET} draws "
                        f"(seed {seed}, d={d}, n_facets={n_facets})")


def _sample_conditioned_polygon(seed: int, n_facets: int,
                                min_angle: float) -> geo.Polytope:
    """Polygon whose adjacent facet normals subtend angles inside
    [min_angle, pi - min_angle], built directly in angle space.

    Gaps between consecutive normal directions are drawn inside the window
    and rescaled to close the circle; draws that the rescale pushes out of
    the window, or where facet redundancy merges gaps past it, are retried.
    Only reachable for windows that admit n_facets gaps summing to 2 pi.
    """
    lo, hi = min_angle, math.pi - min_angle
    if not n_facets * lo <= 2 * math.pi <= n_facets * hi:
        raise DomainError(f"no {n_facets}-gon has all normal gaps in "
                          f"[{lo:.3f}, {hi:.3f}]")
    rng = _rng(seed, 0)
    for _ in range(RETRY_BUDGET):
        gaps = rng.uniform(lo, hi, n_facets)
        gaps *= 2 * math.pi / gaps.sum()
        if np.any(gaps < lo) or np.any(gaps > hi):
            continue
        angles = rng.uniform(0.0, 2 * math.pi) + np.cumsum(gaps)
        normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        offsets = -(1.0 + rng.uniform(0.0, 1.0, n_facets))
        try:
            p = geo.Polytope(normals, offsets)
        except (BoundednessError, DegenerateInputError):
            continue
        p = _ensure_simple(p, rng)
        if p is None or not _corner_angles_ok(p, min_angle):
            continue
        return p
    raise SamplingError(f"no conditioned polygon in {RETRY_BUDGET} draws "
                        f"(seed {seed}, n_facets={n_facets})")


def _ensure_simple(p: geo.Polytope, rng, retries: int = 20):
    """Return a simple polytope obtained from p by outward offset jitter,
    or None if the jitter never separates the degenerate facets."""
    for _ in range(retries):
        if geo.check_simple(p)[0]:
            return p
        jitter = np.abs(rng.normal(0.0, OFFSET_JITTER, p.n_facets))
        try:
            p = geo.Polytope(p.normals, p.offsets - jitter)
        except (BoundednessError, DegenerateInputError):
            return None
    return None


def _corner_angles_ok(p: geo.Polytope, min_angle: float) -> bool:
    lo, hi = math.cos(math.pi - min_angle), math.cos(min_angle)
    for face in geo.enumerate_faces(p, p.dim):
        rows = p.normals[list(face.j_tuple)]
        gram = rows @ rows.T
        cosines = gram[np.triu_indices(len(rows), k=1)]
        if np.any(cosines < lo - 1e-12) or np.any(cosines > hi + 1e-12):
            return False
    return True


def sample_manifest(cfg: SamplerConfig, n_samples: int,
                    kind: str = "convex") -> dict:
    """JSON-ready record of a sampling run, stored next to experiment
    outputs so any sample can be regenerated from (seed, index)."""
    return {
        "kind": kind,
        "rng": "philox4x64",
        "seed": int(cfg.seed),
        "n_samples": int(n_samples),
        "n_pieces": int(cfg.n_pieces),
        "slope_scale": float(cfg.slope_scale),
        "b": float(cfg.b),
        "gammas": None if cfg.gammas is None else list(cfg.gammas),
        "domain": geo.to_json(cfg.domain),
    }
