"""Constructive epsilon-brackets for bounded convex functions.

Builds Lipschitz-grid bracket families on rectangles (floor-quantized node
values, piecewise-linear interpolation over the Kuhn triangulation), the
epigraph Hausdorff bridge that converts set distance into sup-norm distance,
the product assembly of per-cell families over a band partition, and the
closed-form count / size certificates for the assembled family.
"""

import hashlib
import itertools
import math

import numpy as np

from . import enumeration as enum
from . import geometry as geo
from . import partition as part
from . import schedule as sched
from .errors import (ConstructionBugError, DegenerateInputError, DomainError,
                     NoCertificateError)

# Grids larger than this are never materialized as explicit key tuples;
# callers use digests or per-node lookups instead.
KEY_MATERIALIZE_LIMIT = 200_000

# Enumeration of the exact key count is attempted only on tiny grids.
ENUMERABLE_NODES_PER_AXIS = 12
ENUMERABLE_DIM = 2

_SLOPE_TOL = 1e-9


# ---------------------------------------------------------------------------
# Convex test functions


class ConvexFn:
    """Max-of-affine function f(x) = max_j (<g_j, x> + c_j), clipped to
    [-b, b] at evaluation.

    The lower clip max(f, -b) preserves convexity; the upper cap min(f, b)
    does not, so cap_hit records whether any evaluation ever exceeded b.
    Class experiments use functions whose raw maximum stays below b, which
    verify_bound certifies on a probe set.
    """

    def __init__(self, slopes, intercepts, b, domain=None):
        slopes = np.asarray(slopes, dtype=float)
        if slopes.ndim == 1:
            slopes = slopes[None, :]
        intercepts = np.asarray(intercepts, dtype=float).ravel()
        if slopes.ndim != 2 or slopes.shape[0] != intercepts.shape[0]:
            raise DomainError("pieces: slopes (m, d) and intercepts (m,) "
                              "must align")
        if slopes.shape[0] == 0:
            raise DomainError("a ConvexFn needs at least one affine piece")
        if not b > 0:
            raise DomainError(f"bound b must be positive, got {b}")
        self.slopes = slopes
        self.intercepts = intercepts
        self.b = float(b)
        self.domain = domain
        self.cap_hit = False

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.slopes.shape[0]

    def raw(self, x):
        """Unclipped max-affine values; (n, d) -> (n,), (d,) -> float."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        vals = np.max(pts @ self.slopes.T + self.intercepts[None, :], axis=1)
        return float(vals[0]) if single else vals

    def __call__(self, x):
        vals = self.raw(x)
        if np.any(np.asarray(vals) > self.b + 1e-12):
            self.cap_hit = True
        return np.clip(vals, -self.b, self.b)

    def verify_bound(self, points, tol: float = 1e-9) -> bool:
        """|raw(x)| <= b + tol at every probe point."""
        vals = self.raw(np.atleast_2d(points))
        return bool(np.all(np.abs(vals) <= self.b + tol))

    def slope_bounds(self, directions=None) -> np.ndarray:
        """max_j |<g_j, e>| per direction (rows of directions; default axes).

        An upper Lipschitz certificate: |f(x) - f(y)| <= sum_i bound_i
        |<x - y, e_i>| whenever the e_i are orthonormal.
        """
        e = np.eye(self.dim) if directions is None else \
            np.atleast_2d(np.asarray(directions, dtype=float))
        return np.max(np.abs(self.slopes @ e.T), axis=0)

    def __repr__(self):
        return f"ConvexFn(m={self.n_pieces}, d={self.dim}, b={self.b:g})"


# ---------------------------------------------------------------------------
# Rectangles in a rotated orthonormal frame


class Rectangle:
    """Box {origin + sum_a t_a e_a : lo <= t <= hi} with orthonormal rows e."""

    def __init__(self, basis, lo, hi, origin=None):
        self.basis = np.atleast_2d(np.asarray(basis, dtype=float))
        self.lo = np.asarray(lo, dtype=float).ravel()
        self.hi = np.asarray(hi, dtype=float).ravel()
        d_loc, d_amb = self.basis.shape
        self.origin = (np.zeros(d_amb) if origin is None
                       else np.asarray(origin, dtype=float))
        if self.lo.shape != (d_loc,) or self.hi.shape != (d_loc,):
            raise DomainError("lo/hi must have one entry per basis row")
        if np.any(self.hi < self.lo - 1e-12):
            raise DomainError("rectangle has hi < lo")
        gram = self.basis @ self.basis.T
        if not np.allclose(gram, np.eye(d_loc), atol=1e-9):
            raise DegenerateInputError("rectangle basis is not orthonormal")

    @classmethod
    def axis_aligned(cls, lo, hi):
        lo = np.asarray(lo, dtype=float).ravel()
        return cls(np.eye(lo.shape[0]), lo, hi)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.extent))

    def to_local(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.origin[None, :]) @ self.basis.T

    def to_ambient(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return self.origin[None, :] + t @ self.basis

    def __repr__(self):
        return f"Rectangle(d={self.dim}, extent={np.round(self.extent, 6)})"


def rect_for_cell(cell: part.Cell) -> Rectangle:
    """Tight bounding rectangle of a cell's closure in its basis frame."""
    local = cell.closure.vertices() @ cell.basis.e.T
    return Rectangle(cell.basis.e, local.min(axis=0), local.max(axis=0))


# ---------------------------------------------------------------------------
# Batched weighted projection (for grid nodes that fall outside their cell)


def _project_batch(normals, offsets, pts, weights, center):
    """Project points onto {t : normals @ t >= offsets} in the diagonally
    weighted norm sum_a w_a (t_a - x_a)^2, vectorized over points.

    Enumerates candidate KKT active sets (size 1..d) and keeps the nearest
    feasible candidate per point, like geometry.project_onto but batched.
    center must be strictly interior; projections are finally mixed a hair
    toward it so every returned point satisfies the constraints exactly.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n, d = pts.shape
    s = np.sqrt(np.asarray(weights, dtype=float))
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise DegenerateInputError("projection weights must be finite "
                                   "and positive")
    a_z = normals / s[None, :]
    row_norms = np.linalg.norm(a_z, axis=1)
    a_z = a_z / row_norms[:, None]
    b_z = offsets / row_norms
    z = pts * s[None, :]
    c_z = np.asarray(center, dtype=float) * s
    slack_c = float(np.min(a_z @ c_z - b_z))
    if slack_c <= 0:
        raise DegenerateInputError("projection center is not interior")

    best = np.array(z)
    best_d2 = np.full(n, np.inf)
    inside = np.all(z @ a_z.T - b_z[None, :] >= -1e-12, axis=1)
    best_d2[inside] = 0.0

    todo = ~inside
    if np.any(todo):
        zt = z[todo]
        bt_d2 = np.full(zt.shape[0], np.inf)
        bt = np.array(zt)
        m = a_z.shape[0]
        for r in range(1, d + 1):
            for idx in itertools.combinations(range(m), r):
                a = a_z[list(idx)]
                gram = a @ a.T
                if abs(np.linalg.det(gram)) < 1e-12:
                    continue
                rhs = a @ zt.T - b_z[list(idx), None]
                lam = np.linalg.solve(gram, rhs)
                y = zt - lam.T @ a
                feas = np.all(y @ a_z.T - b_z[None, :] >= -1e-11, axis=1)
                d2 = np.sum((zt - y) ** 2, axis=1)
                better = feas & (d2 < bt_d2)
                bt[better] = y[better]
                bt_d2[better] = d2[better]
        unsolved = ~np.isfinite(bt_d2)
        if np.any(unsolved):
            # Conditioning fallback: exact single-point projection.
            poly = geo.Polytope(normals, offsets, validate=False)
            for i in np.nonzero(todo)[0][unsolved]:
                y, _ = geo.project_onto(poly, pts[i], weights=weights)
                best[i] = y * s
            solved = ~unsolved
            rows = np.nonzero(todo)[0][solved]
            best[rows] = bt[solved]
        else:
            best[todo] = bt

    # Pull any residual constraint violation inside via the interior point.
    viol = np.maximum(0.0, -(np.min(best @ a_z.T - b_z[None, :], axis=1)))
    mix = np.where(viol > 0, viol / (viol + slack_c) * (1 + 1e-9), 0.0)
    best = best * (1 - mix)[:, None] + np.outer(mix, c_z)
    return best / s[None, :]


# ---------------------------------------------------------------------------
# Bracket families on rectangles


def _grid_axes(rect: Rectangle, gammas, pitch):
    """Per-axis node coordinates with spacing <= pitch; a zero-Lipschitz or
    zero-extent axis collapses to a single midpoint node."""
    axes = []
    for a in range(rect.dim):
        ext = rect.extent[a]
        if gammas[a] == 0.0 or ext == 0.0:
            axes.append(np.array([(rect.lo[a] + rect.hi[a]) / 2.0]))
            continue
        n = max(2, int(math.ceil(ext / pitch[a] - 1e-12)) + 1)
        axes.append(np.linspace(rect.lo[a], rect.hi[a], n))
    return axes


class BracketFamily:
    """Generator of eps-brackets for Gamma-Lipschitz functions on a rectangle.

    Grid pitch eps / (4 Gamma_a d) per axis and value quantum eps / 4; the
    canonical map floor-quantizes node values and interpolates linearly over
    the Kuhn triangulation, and [interp - eps/2, interp + eps/2] brackets
    every admissible function.  Node values are looked up lazily so huge
    grids cost only what is actually probed.

    When clip is given (a polytope in ambient coordinates, e.g. a partition
    cell's closure), grid nodes outside it are evaluated at their weighted
    projection onto it instead; the weights are the squared Lipschitz bounds,
    which keeps the projection 1-Lipschitz in the metric the interpolation
    error argument uses.
    """

    def __init__(self, rect: Rectangle, b: float, gammas, eps: float,
                 p: float, clip=None, enumerate_count: bool = False):
        if eps <= 0:
            raise DomainError(f"eps must be positive, got {eps}")
        if not b > 0:
            raise DomainError(f"bound b must be positive, got {b}")
        gammas = np.asarray(gammas, dtype=float).ravel()
        if gammas.shape != (rect.dim,):
            raise DomainError("one Lipschitz bound per rectangle axis")
        if np.any(gammas < 0) or not np.all(np.isfinite(gammas)):
            raise DomainError("Lipschitz bounds must be finite and >= 0")
        self.rect = rect
        self.b = float(b)
        self.gammas = gammas
        self.eps = float(eps)
        self.p = float(p)
        self.quantum = self.eps / 4.0
        d = rect.dim
        with np.errstate(divide="ignore"):
            self.pitch = np.where(gammas > 0, self.eps / (4.0 * gammas * d),
                                  np.inf)
        self.axes = _grid_axes(rect, gammas, self.pitch)
        self.shape = tuple(len(ax) for ax in self.axes)
        self.n_nodes = int(np.prod([len(ax) for ax in self.axes]))
        self.spacing = np.array([ax[1] - ax[0] if len(ax) > 1 else 0.0
                                 for ax in self.axes])
        # Row-major strides for flat node indexing.
        self._strides = np.array(
            [int(np.prod(self.shape[a + 1:])) for a in range(d)],
            dtype=np.int64)
        self.clip = clip
        self._clip_center = None
        if clip is not None:
            if np.any(gammas == 0.0):
                raise DomainError("clipping requires positive Lipschitz "
                                  "bounds on every axis")
            c, r = clip.chebyshev()
            if r <= 0:
                raise DegenerateInputError("clip polytope has empty interior")
            self._clip_center = rect.to_local(c)[0]
            # Constraint rows in local coordinates (basis rows are
            # orthonormal, so row norms are preserved).
            self._clip_normals = clip.normals @ rect.basis.T
            self._clip_offsets = clip.offsets - clip.normals @ rect.origin
        self._point_cache = {}
        self._all_points = None
        self._count_done = False
        self.count_bound = None
        if enumerate_count:
            self.enumerated_count()

    # -- node geometry ----------------------------------------------------

    def node_local(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        multi = np.unravel_index(flat, self.shape)
        cols = [self.axes[a][multi[a]] for a in range(self.rect.dim)]
        return np.stack(cols, axis=-1)

    def _clip_points(self, local) -> np.ndarray:
        if self.clip is None:
            return local
        slack = local @ self._clip_normals.T - self._clip_offsets[None, :]
        outside = np.any(slack < -1e-12, axis=1)
        if np.any(outside):
            local = np.array(local)
            local[outside] = _project_batch(
                self._clip_normals, self._clip_offsets, local[outside],
                self.gammas ** 2, self._clip_center)
        return local

    def node_points(self, flat=None) -> np.ndarray:
        """Ambient evaluation points for the given flat node indices (all
        nodes when flat is None), clipped into the cell when applicable."""
        if flat is None:
            if self._all_points is None:
                if self.n_nodes > 20_000_000:
                    raise DomainError("grid too large to materialize; pass "
                                      "explicit node indices")
                local = self._clip_points(
                    self.node_local(np.arange(self.n_nodes)))
                self._all_points = self.rect.to_ambient(local)
            return self._all_points
        flat = np.asarray(flat, dtype=np.int64).ravel()
        if self._all_points is not None:
            return self._all_points[flat]
        missing = [i for i in flat.tolist() if i not in self._point_cache]
        if missing:
            idx = np.array(missing, dtype=np.int64)
            pts = self.rect.to_ambient(self._clip_points(self.node_local(idx)))
            for i, row in zip(missing, pts):
                self._point_cache[i] = row
        return np.stack([self._point_cache[i] for i in flat.tolist()])

    # -- interpolation ----------------------------------------------------

    def _locate(self, x):
        """Box indices and fractional coordinates for ambient points."""
        t = self.rect.to_local(x)
        t = np.clip(t, self.rect.lo[None, :], self.rect.hi[None, :])
        n, d = t.shape
        ix = np.zeros((n, d), dtype=np.int64)
        theta = np.zeros((n, d))
        for a in range(d):
            if self.shape[a] == 1:
                continue
            rel = (t[:, a] - self.rect.lo[a]) / self.spacing[a]
            ia = np.clip(np.floor(rel).astype(np.int64), 0,
                         self.shape[a] - 2)
            ix[:, a] = ia
            theta[:, a] = np.clip(rel - ia, 0.0, 1.0)
        return ix, theta

    def simplex_decomposition(self, x):
        """Kuhn-simplex vertices and weights for ambient points.

        Returns (flat, lam), both (n, d+1): node indices and barycentric
        weights such that the PL interpolant at x is sum lam * values[flat].
        Axes are sorted by descending fractional coordinate, which walks the
        vertices of the Kuhn simplex containing each point.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ix, theta = self._locate(x)
        n, d = theta.shape
        order = np.argsort(-theta, axis=1, kind="stable")
        th = np.take_along_axis(theta, order, axis=1)
        lam = np.empty((n, d + 1))
        lam[:, 0] = 1.0 - th[:, 0]
        if d > 1:
            lam[:, 1:d] = th[:, :d - 1] - th[:, 1:]
        lam[:, d] = th[:, d - 1]
        base = ix @ self._strides
        # A step on a single-node axis would leave the grid; its barycentric
        # weight is exactly zero, so clamp the stride to stay in range.
        shp = np.asarray(self.shape, dtype=np.int64)[order]
        ixo = np.take_along_axis(ix, order, axis=1)
        inc = np.where(ixo + 1 <= shp - 1, self._strides[order], 0)
        flat = np.empty((n, d + 1), dtype=np.int64)
        flat[:, 0] = base
        flat[:, 1:] = base[:, None] + np.cumsum(inc, axis=1)
        return flat, lam

    def interpolate(self, lookup, x) -> np.ndarray:
        """Piecewise-linear interpolation over the Kuhn triangulation.

        lookup maps flat node indices to node values; x is ambient (n, d).
        """
        flat, lam = self.simplex_decomposition(x)
        n = flat.shape[0]
        vals = np.asarray(lookup(flat.ravel()), dtype=float).reshape(n, -1)
        return np.einsum("nj,nj->n", lam, vals)

    # -- canonical assignment ----------------------------------------------

    def quantize(self, values) -> np.ndarray:
        return np.floor(np.asarray(values, dtype=float)
                        / self.quantum).astype(np.int64)

    def canonical_map(self, fn) -> "Bracket":
        """The bracket assigned to fn: floor-quantized node values,
        interpolated, widened by eps/2 on both sides."""
        return Bracket(self, fn=fn)

    def enumerated_count(self):
        """Exact number of canonical keys, for tiny grids only (at most
        ENUMERABLE_NODES_PER_AXIS nodes per axis, dimension at most
        ENUMERABLE_DIM); None means not enumerated.  Cached; the DFS cost
        grows with the count itself, so this is never run implicitly."""
        if self._count_done:
            return self.count_bound
        self._count_done = True
        d = self.rect.dim
        enumerable = (d <= ENUMERABLE_DIM
                      and all(s <= ENUMERABLE_NODES_PER_AXIS
                              for s in self.shape)
                      and self.quantum > 10 * enum.CELL_TOP_MARGIN)
        if enumerable:
            local = self._clip_points(
                self.node_local(np.arange(self.n_nodes)))
            self.count_bound = enum.count_achievable_keys(
                local, self.quantum, self.b, gammas=self.gammas)
        return self.count_bound

    def __repr__(self):
        return (f"BracketFamily(eps={self.eps:g}, q={self.quantum:g}, "
                f"shape={self.shape})")


class Bracket:
    """A lower/upper pair of piecewise-linear functions on a family's grid.

    Canonical brackets (built from a function) hold quantized node values
    lazily; explicit brackets carry full node-value arrays.  lower <= upper
    holds at every node by construction.
    """

    def __init__(self, family: BracketFamily, fn=None):
        self.family = family
        self.fn = fn
        self._keys = None          # materialized full key array
        self._key_cache = {}       # flat index -> quantized int
        self._lower_values = None  # explicit mode
        self._upper_values = None
        self.explicit_key = None

    @classmethod
    def from_node_values(cls, family: BracketFamily, lower, upper, key=()):
        lower = np.asarray(lower, dtype=float).reshape(family.shape)
        upper = np.asarray(upper, dtype=float).reshape(family.shape)
        if np.any(lower > upper + 1e-12):
            raise DomainError("bracket needs lower <= upper at every node")
        b = cls(family, fn=None)
        b._lower_values = lower.ravel()
        b._upper_values = upper.ravel()
        b.explicit_key = tuple(key)
        return b

    @property
    def is_explicit(self) -> bool:
        return self._lower_values is not None

    # -- node values --------------------------------------------------------

    def _quantized(self, flat) -> np.ndarray:
        """Quantized keys at flat node indices (canonical mode)."""
        fam = self.family
        flat = np.asarray(flat, dtype=np.int64).ravel()
        if self._keys is not None:
            return self._keys[flat]
        if fam.n_nodes <= KEY_MATERIALIZE_LIMIT and not self._key_cache:
            vals = self.fn(fam.node_points(None))
            self._keys = fam.quantize(vals)
            return self._keys[flat]
        missing = [i for i in flat.tolist() if i not in self._key_cache]
        if missing:
            idx = np.array(missing, dtype=np.int64)
            keys = fam.quantize(self.fn(fam.node_points(idx)))
            self._key_cache.update(zip(missing, keys.tolist()))
        return np.array([self._key_cache[i] for i in flat.tolist()],
                        dtype=np.int64)

    def node_gap(self) -> np.ndarray:
        """upper - lower at every node (materializes canonical grids)."""
        if self.is_explicit:
            return self._upper_values - self._lower_values
        return np.full(self.family.n_nodes, self.family.eps)

    # -- evaluation ----------------------------------------------------------

    def _interp_mid(self, x):
        q = self.family.quantum
        return self.family.interpolate(
            lambda flat: self._quantized(flat) * q, x)

    def lower(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if self.is_explicit:
            out = self.family.interpolate(
                lambda flat: self._lower_values[np.asarray(flat)], x)
        else:
            out = self._interp_mid(x) - self.family.eps / 2.0
        return float(out[0]) if single else out

    def upper(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if self.is_explicit:
            out = self.family.interpolate(
                lambda flat: self._upper_values[np.asarray(flat)], x)
        else:
            out = self._interp_mid(x) + self.family.eps / 2.0
        return float(out[0]) if single else out

    def covers(self, fn, probes, tol: float = 1e-9) -> bool:
        probes = np.atleast_2d(probes)
        vals = fn(probes)
        return bool(np.all(self.lower(probes) <= vals + tol)
                    and np.all(vals <= self.upper(probes) + tol))

    # -- identity -------------------------------------------------------------

    @property
    def key(self) -> tuple:
        """Canonical integer tuple; DomainError on oversized grids."""
        if self.is_explicit:
            return self.explicit_key
        if self.family.n_nodes > KEY_MATERIALIZE_LIMIT:
            raise DomainError("grid too large for a key tuple; use "
                              "key_digest")
        return tuple(self._quantized(np.arange(self.family.n_nodes)).tolist())

    def key_digest(self, flat=None) -> str:
        """Stable hash of the quantized values at the given node indices."""
        if flat is None:
            if self.family.n_nodes > KEY_MATERIALIZE_LIMIT:
                raise DomainError("pass explicit node indices on large grids")
            flat = np.arange(self.family.n_nodes)
        keys = self._quantized(flat)
        return hashlib.blake2b(keys.astype("<i8").tobytes(),
                               digest_size=16).hexdigest()

    def __repr__(self):
        mode = "explicit" if self.is_explicit else "canonical"
        return f"Bracket({mode}, shape={self.family.shape})"


def lipschitz_bracket_family(rect, b: float, gammas, eps: float,
                             p: float = 2.0, clip=None,
                             enumerate_count: bool = False) -> BracketFamily:
    """Bracket family for the Gamma-Lipschitz convex class on a rectangle.

    Grid pitch eps/(4 Gamma_a d) per axis, value quantum eps/4.  For any f
    that is Gamma-Lipschitz along the rectangle axes with |f| <= b, the
    canonical bracket contains f, and every bracket has sup-norm size eps:
    within one grid box the weighted distance to a node is at most
    eps/(4 sqrt(d)), so the interpolation error is at most eps/4, and floor
    quantization adds at most eps/4 more.

    Args:
        rect: a Rectangle, or a (lo, hi) pair for an axis-aligned box.
        b: value bound.
        gammas: per-axis Lipschitz bounds (0 collapses the axis to one node).
        eps: target sup-norm bracket size.
        p: the norm the family is budgeted for (stored; sizes in L_inf).
        clip: optional polytope; nodes outside it are evaluated at their
            weighted projection onto it.
        enumerate_count: run the exact key enumeration up front (tiny grids
            only; see BracketFamily.enumerated_count).

    Raises:
        DomainError: eps <= 0, b <= 0, or malformed gammas.
    """
    if not isinstance(rect, Rectangle):
        lo, hi = rect
        rect = Rectangle.axis_aligned(lo, hi)
    return BracketFamily(rect, b, gammas, eps, p, clip=clip,
                         enumerate_count=enumerate_count)


# ---------------------------------------------------------------------------
# L_p size of a bracket


def _compositions(total, parts):
    """Nonnegative integer vectors of the given length summing to total."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _gm_rule(n: int, s: int):
    """Grundmann-Moller quadrature of degree 2s+1 on the standard n-simplex.

    Returns barycentric points (m, n+1) and weights summing to 1/n! (the
    volume of the standard simplex).
    """
    deg = 2 * s + 1
    pts, wts = [], []
    for i in range(s + 1):
        coef = ((-1) ** i * 2.0 ** (-2 * s)
                * float(deg + n - 2 * i) ** deg
                / (math.factorial(i) * math.factorial(deg + n - i)))
        for beta in _compositions(s - i, n + 1):
            pts.append((2.0 * np.array(beta) + 1.0) / (deg + n - 2 * i))
            wts.append(coef)
    return np.array(pts), np.array(wts)


def _h_complete(vertex_values, p: int):
    """Complete homogeneous symmetric polynomial h_p over vertex value
    arrays, via the with-repetition DP."""
    h = [np.ones_like(vertex_values[0])] + \
        [np.zeros_like(vertex_values[0]) for _ in range(p)]
    for v in vertex_values:
        for j in range(1, p + 1):
            h[j] = h[j] + v * h[j - 1]
    return h[p]


def _integrate_power(family: BracketFamily, gap: np.ndarray, p: float):
    """Integral of gap^p over the family's rectangle, gap piecewise linear
    on the Kuhn triangulation.  Exact for integer p."""
    eff = [a for a in range(family.rect.dim) if family.shape[a] > 1]
    singles = [a for a in range(family.rect.dim) if family.shape[a] == 1]
    factor = float(np.prod([family.rect.extent[a] for a in singles])) \
        if singles else 1.0
    g = gap.reshape(family.shape)
    g = g.reshape([family.shape[a] for a in eff]) if eff else g.ravel()
    n = len(eff)
    if n == 0:
        return float(g.ravel()[0]) ** p * factor

    box_vol = float(np.prod([family.spacing[a] for a in eff]))
    exact = float(p).is_integer()
    if not exact:
        qpts, qwts = _gm_rule(n, max(0, math.ceil(p - 0.5)))
    total = 0.0
    base = tuple(slice(0, g.shape[i] - 1) for i in range(n))
    for perm in itertools.permutations(range(n)):
        cur = list(base)
        verts = [g[tuple(cur)]]
        for ax in perm:
            cur[ax] = slice(1, g.shape[ax])
            verts.append(g[tuple(cur)])
        if exact:
            pi = int(p)
            coef = box_vol / math.factorial(n) \
                * math.factorial(pi) * math.factorial(n) \
                / math.factorial(pi + n)
            total += coef * float(np.sum(_h_complete(verts, pi)))
        else:
            stacked = np.stack([v.ravel() for v in verts])  # (n+1, boxes)
            vals = np.maximum(qpts @ stacked, 0.0)           # (m, boxes)
            total += box_vol * float(qwts @ np.sum(vals ** p, axis=1))
    return total * factor


def lp_size(b: Bracket, p: float, domain=None) -> float:
    """L_p norm of (upper - lower) over the bracket's rectangle.

    Exact simplex-wise integration for integer p, Grundmann-Moller
    quadrature of degree >= 2p otherwise; p = inf returns the largest node
    gap.  domain, when given, must be the bracket's own rectangle (brackets
    are only defined on their grid).

    Raises:
        DomainError: p < 1, or a foreign domain.
    """
    if domain is not None and domain is not b.family.rect:
        raise DomainError("lp_size integrates over the bracket's own "
                          "rectangle; pass that rectangle or None")
    if p != math.inf and p < 1:
        raise DomainError(f"p must be >= 1 or inf, got {p}")
    if p == math.inf:
        return float(np.max(b.node_gap()))
    if not b.is_explicit:
        # Canonical brackets have constant gap eps.
        vol = b.family.rect.volume()
        return b.family.eps * vol ** (1.0 / p)
    total = _integrate_power(b.family, b.node_gap(), p)
    return total ** (1.0 / p)


# ---------------------------------------------------------------------------
# Epigraph Hausdorff bridge


def epigraph_polytope(f: ConvexFn, b: float) -> geo.Polytope:
    """V_b(f) = {(x, t) : x in domain, f(x) <= t <= b} as a polytope in
    dimension d+1."""
    if f.domain is None:
        raise DomainError("epigraph needs a polytopal domain")
    dom = f.domain
    d = dom.dim
    rows = np.zeros((dom.n_facets + f.n_pieces + 1, d + 1))
    offs = np.zeros(dom.n_facets + f.n_pieces + 1)
    rows[:dom.n_facets, :d] = dom.normals
    offs[:dom.n_facets] = dom.offsets
    # t >= <g_j, x> + c_j  <=>  <-g_j, x> + t >= c_j
    rows[dom.n_facets:dom.n_facets + f.n_pieces, :d] = -f.slopes
    rows[dom.n_facets:dom.n_facets + f.n_pieces, d] = 1.0
    offs[dom.n_facets:dom.n_facets + f.n_pieces] = f.intercepts
    rows[-1, d] = -1.0
    offs[-1] = -b
    return geo.Polytope(rows, offs)


def _dense_domain_grid(dom: geo.Polytope, n_target: int = 4000):
    box = dom.bbox()
    d = dom.dim
    per_axis = max(2, int(round(n_target ** (1.0 / d))))
    axes = [np.linspace(box[a, 0], box[a, 1], per_axis) for a in range(d)]
    pts = np.stack([c.ravel() for c in np.meshgrid(*axes, indexing="ij")],
                   axis=-1)
    return pts[dom.contains(pts, tol=1e-9)]


def epigraph_hausdorff_bound(f: ConvexFn, g: ConvexFn, b: float, gammas,
                             n_grid: int = 4000):
    """Check sup|f - g| <= l_H(V_b(f), V_b(g)) sqrt(1 + sum Gamma_i^2).

    The left side is the sup-norm gap on a dense grid over the common
    domain (a lower bound on the true sup, which is the safe direction for
    the inequality); the right side uses the exact polytope Hausdorff
    distance between the two epigraphs.

    Returns:
        (lhs, rhs, ok) with ok = lhs <= rhs + 1e-7.

    Raises:
        NoCertificateError: a slope of f or g exceeds its Gamma bound.
        DomainError: missing or mismatched domains, or values beyond b.
    """
    if f.domain is None or g.domain is None:
        raise DomainError("both functions need polytopal domains")
    dom = f.domain
    if g.domain is not dom and not (
            np.array_equal(g.domain.normals, dom.normals)
            and np.array_equal(g.domain.offsets, dom.offsets)):
        raise DomainError("f and g must share a domain")
    gammas = np.asarray(gammas, dtype=float).ravel()
    for fn, name in ((f, "f"), (g, "g")):
        excess = fn.slope_bounds() - gammas
        if np.any(excess > _SLOPE_TOL):
            raise NoCertificateError(
                f"{name} has slope bounds {fn.slope_bounds()} beyond "
                f"Gamma={gammas}")
    pts = _dense_domain_grid(dom, n_grid)
    fv, gv = f.raw(pts), g.raw(pts)
    if max(np.max(np.abs(fv)), np.max(np.abs(gv))) > b + 1e-9:
        raise DomainError("functions must satisfy |f| <= b on the domain")
    lhs = float(np.max(np.abs(fv - gv)))
    l_h = geo.hausdorff(epigraph_polytope(f, b), epigraph_polytope(g, b))
    rhs = l_h * math.sqrt(1.0 + float(np.sum(gammas ** 2)))
    return lhs, rhs, bool(lhs <= rhs + 1e-7)


# ---------------------------------------------------------------------------
# Assembly over a cell partition


class BoxCell:
    """A rectangle acting as a partition cell (volume + membership), for
    assembling families over hand-made rectangular partitions."""

    def __init__(self, rect: Rectangle, half_open=None):
        self.rect = rect
        # Axes listed in half_open exclude their upper boundary, so abutting
        # boxes tile without double counting.
        self.half_open = set() if half_open is None else set(half_open)

    def volume(self) -> float:
        return self.rect.volume()

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        t = self.rect.to_local(np.atleast_2d(x))
        ok = np.ones(t.shape[0], dtype=bool)
        for a in range(self.rect.dim):
            ok &= t[:, a] >= self.rect.lo[a] - tol
            if a in self.half_open:
                ok &= t[:, a] < self.rect.hi[a]
            else:
                ok &= t[:, a] <= self.rect.hi[a] + tol
        return ok


class GlobalBracket:
    """Bracket for one function over an assembled family: per-cell canonical
    brackets on the non-trivial cells, [-b, b] on the trivial ones."""

    def __init__(self, parent: "GlobalBracketFamily", fn):
        self.parent = parent
        self.fn = fn
        self._cell_brackets = {}

    def _bracket_for(self, ci: int) -> Bracket:
        if ci not in self._cell_brackets:
            fam = self.parent.families[ci]
            self._cell_brackets[ci] = fam.canonical_map(self.fn)
        return self._cell_brackets[ci]

    def _eval(self, x, side: str):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        where = self.parent.locate(pts)
        if np.any(where < 0):
            raise DomainError("point outside every cell of the partition")
        out = np.empty(pts.shape[0])
        for ci in np.unique(where):
            mask = where == ci
            if self.parent.families[ci] is None:
                out[mask] = -self.parent.b if side == "lower" else \
                    self.parent.b
            else:
                br = self._bracket_for(ci)
                vals = br.lower(pts[mask]) if side == "lower" else \
                    br.upper(pts[mask])
                out[mask] = vals
        return float(out[0]) if single else out

    def lower(self, x):
        return self._eval(x, "lower")

    def upper(self, x):
        return self._eval(x, "upper")

    def covers(self, probes, tol: float = 1e-9) -> bool:
        probes = np.atleast_2d(probes)
        vals = self.fn(probes)
        return bool(np.all(self.lower(probes) <= vals + tol)
                    and np.all(vals <= self.upper(probes) + tol))

    @property
    def key(self) -> tuple:
        """Tuple of per-cell keys; trivial cells contribute 0."""
        out = []
        for ci, fam in enumerate(self.parent.families):
            out.append(0 if fam is None else self._bracket_for(ci).key)
        return tuple(out)


class GlobalBracketFamily:
    """Per-cell bracket families combined over a partition of the domain.

    size_bound is (sum_cells weight^p vol(cell))^{1/p}; with the weights set
    to each cell's actual sup-norm gap this equals the exact L_p size of
    every assembled bracket, since per-cell gaps are constant.
    """

    def __init__(self, cells, families, weights, p: float, b: float,
                 size_bound: float, log_count_bound):
        self.cells = list(cells)
        self.families = list(families)
        self.weights = np.asarray(weights, dtype=float)
        self.p = float(p)
        self.b = float(b)
        self.size_bound = float(size_bound)
        self.log_count_bound = log_count_bound
        self._band_index = None
        if all(isinstance(c, part.Cell) for c in self.cells) and self.cells:
            self._band_index = {
                c.band_key().tobytes(): i for i, c in enumerate(self.cells)}
            ref = self.cells[0]
            self._parent = ref.parent
            self._delta, self._u = ref.delta, ref.u

    def locate(self, x) -> np.ndarray:
        """Cell index per point; -1 when no cell matches."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        if self._band_index is not None:
            bands = part.classify_points(self._parent, self._delta, self._u,
                                         pts)
            for r in range(pts.shape[0]):
                out[r] = self._band_index.get(bands[r].tobytes(), -1)
            return out
        for i, c in enumerate(self.cells):
            mask = (out < 0) & c.contains(pts)
            out[mask] = i
        return out

    def canonical_map(self, fn) -> GlobalBracket:
        return GlobalBracket(self, fn)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def __repr__(self):
        return (f"GlobalBracketFamily(cells={self.n_cells}, "
                f"size_bound={self.size_bound:.4g})")


def combine_families(cells, families, weights, p: float, b: float = 1.0,
                     audit_n: int = 2048, audit_seed: int = 0,
                     domain=None) -> GlobalBracketFamily:
    """Assemble per-cell families into a family on the whole domain.

    families[i] is a BracketFamily, or None for a trivial [-b, b] cell.
    weights[i] is the per-cell sup-norm bracket size used in the L_p budget
    (the family's eps for grid cells, 2b for trivial cells).  The global
    canonical key is the tuple of per-cell keys and the global log-count is
    the sum of per-cell log counts when every cell was enumerated.

    A point audit samples the domain (the polytope of the first partition
    cell, or the explicit domain argument) and requires every sample to land
    in some cell.

    Raises:
        ConstructionBugError: the audit found an uncovered point.
        DomainError: mismatched lists or nonpositive weights.
    """
    cells = list(cells)
    families = list(families)
    weights = np.asarray(weights, dtype=float).ravel()
    if not (len(cells) == len(families) == weights.shape[0]):
        raise DomainError("cells, families, and weights must align")
    if len(cells) == 0:
        raise DomainError("no cells to combine")
    if np.any(weights <= 0):
        raise DomainError("weights must be positive")

    vols = np.array([c.volume() for c in cells])
    size_bound = float(math.fsum(
        w ** p * v for w, v in zip(weights, vols))) ** (1.0 / p)

    # Sum of per-cell log counts, available only when every grid cell was
    # small enough to enumerate (trivial cells contribute a single bracket).
    log_count = 0.0
    for fam in families:
        if fam is None:
            continue
        if fam.count_bound is None:
            log_count = None
            break
        log_count += math.log(fam.count_bound)

    gf = GlobalBracketFamily(cells, families, weights, p, b, size_bound,
                             log_count)

    if domain is None and isinstance(cells[0], part.Cell):
        domain = cells[0].parent
    if domain is not None and audit_n > 0:
        pts = _rejection_sample(domain, audit_n, audit_seed)
        where = gf.locate(pts)
        if np.any(where < 0):
            miss = pts[where < 0][:3]
            raise ConstructionBugError(
                f"assembled family leaves domain points uncovered, e.g. "
                f"{miss.tolist()}")
    return gf


def _rejection_sample(p: geo.Polytope, n: int, seed: int) -> np.ndarray:
    box = p.bbox()
    rng = np.random.Generator(np.random.Philox(seed))
    out = []
    got = 0
    while got < n:
        cand = rng.uniform(box[:, 0], box[:, 1], size=(4 * n, p.dim))
        keep = cand[p.contains(cand, tol=0.0)]
        out.append(keep[:n - got])
        got += out[-1].shape[0]
    return np.vstack(out)


def cell_budget(cell: part.Cell, schedule_k, eps: float) -> float:
    """The b=1 normalized sup-norm bracket budget a_{i,k} for one cell: the
    product of per-band budgets over active facets, eps itself for the
    interior cell, and 1 for trivial (band-0) cells."""
    if cell.k == 0:
        return eps
    if any(i == 0 for i in cell.i_tuple):
        return 1.0
    log_a = float(sum(schedule_k.log_a[i - 1] for i in cell.i_tuple))
    return math.exp(log_a)


def build_global_family(p: geo.Polytope, b: float, eps: float, pnorm: float,
                        u=None, u_mode: str = "empirical",
                        audit_n: int = 2048, audit_seed: int = 0,
                        schedules=None, cells=None) -> GlobalBracketFamily:
    """The full construction: band partition, per-cell Lipschitz families
    with the proof's per-cell budgets, trivial brackets on band-0 cells,
    combined into one family.

    eps is the b=1 normalized budget parameter (per-cell sup sizes are
    b * a_{i,k}); it must lie in (0, 1).  Prebuilt schedules or cells may
    be passed to skip those stages (they must match p, eps, pnorm, u).
    """
    d = p.dim
    if u is None:
        u = sched.compute_u(p, pnorm, u_mode)
    if schedules is None:
        schedules = {k: sched.build_schedule(eps, pnorm, u, k)
                     for k in range(1, d + 1)}
    if cells is None:
        cells = part.build_cells(p, schedules, b=b)
    families, weights = [], []
    for cell in cells:
        sk = schedules.get(cell.k)
        if cell.k > 0 and any(i == 0 for i in cell.i_tuple):
            families.append(None)
            weights.append(2.0 * b)
            continue
        eps_cell = b * cell_budget(cell, sk, eps)
        fam = BracketFamily(rect_for_cell(cell), b, cell.lipschitz,
                            eps_cell, pnorm, clip=cell.closure)
        families.append(fam)
        weights.append(eps_cell)
    gf = combine_families(cells, families, weights, pnorm, b=b,
                          audit_n=audit_n, audit_seed=audit_seed, domain=p)
    gf.u = u
    gf.schedules = schedules
    gf.eps = eps
    return gf


# ---------------------------------------------------------------------------
# Theoretical count and size certificates


def _c_dk(d: int, k: int) -> float:
    """John ellipsoid volume-vs-width constant for a (d-k)-face."""
    return ((2.0 * d) ** (d - k) * math.gamma((d - k) / 2.0 + 1.0)
            / math.pi ** ((d - k) / 2.0))


def theoretical_count(p: geo.Polytope, b: float, eps: float, pnorm: float,
                      u=None, u_mode: str = "empirical",
                      c_d: float = 1.0) -> dict:
    """Evaluate the closed-form log-count bound and size certificate.

    The log-count bound sums, over face codimensions k and faces j,

        eps^{-d/2} ctilde_d (vol_{d-k}(G_j) L_{k,1}^{d-k} / u^{d-k})^{d/2}
            u^{k d / (2 (p+1)^2)}

    with ctilde_d = c_d (d!)^{d/2} 2^{kd/2} (8^{d-k} C_dk)^{d/2} 2^k, where
    the leading c_d is non-constructive and reported as 1 (flagged).  The
    size certificate eps (sum_k (2 L_{k,1})^{d-k} S_k A_u^k)^{1/p} is
    computed both in closed form and by brute enumeration over band
    multi-indices; the two agree to float precision because the per-band
    budgets satisfy sum_i a_i^p delta_{i+1} = eps^{p/k} A_u exactly.

    eps is interpreted for the b-normalized class (brackets of original
    size b*eps); the returned sizes are in original units.
    """
    d = p.dim
    eps_n = eps / b
    if not 0 < eps_n < 1:
        raise DomainError("eps/b must lie in (0, 1)")
    if u is None:
        u = sched.compute_u(p, pnorm, u_mode)
    s1 = sched.build_schedule(eps_n, pnorm, u, 1)
    au = sched.au_value(s1)   # zeta ratios are k-free

    count = 0.0
    per_face = []
    formula_terms = []
    percell_terms = []
    for k in range(0, d + 1):
        faces = geo.enumerate_faces(p, k)
        lcs = [sched.compute_L_constants(p, f) for f in faces]
        vols = [geo.face_volume(p, f) for f in faces]
        cdk = _c_dk(d, k)
        ctilde = (c_d * math.factorial(d) ** (d / 2.0)
                  * 2.0 ** (k * d / 2.0)
                  * (8.0 ** (d - k) * cdk) ** (d / 2.0)
                  * 2.0 ** k)
        for f, lc, vol in zip(faces, lcs, vols):
            term = (eps_n ** (-d / 2.0) * ctilde
                    * (vol * lc.L_k1 ** (d - k) / u ** (d - k)) ** (d / 2.0)
                    * u ** (k * d / (2.0 * (pnorm + 1.0) ** 2)))
            count += term
            per_face.append({"k": k, "j_tuple": tuple(int(j) for j in
                                                      f.j_tuple),
                             "vol": vol, "L_k1": lc.L_k1, "L_j3": lc.L_j3,
                             "log_count_term": term})
        l_k1_max = max((lc.L_k1 for lc in lcs), default=1.0)
        s_k = math.fsum(vol * lc.L_j3 ** k for vol, lc in zip(vols, lcs))
        formula_terms.append((2.0 * l_k1_max) ** (d - k) * s_k * au ** k
                             * eps_n ** pnorm)
        if k == 0:
            percell_terms.append((2.0 * l_k1_max) ** d * s_k
                                 * eps_n ** pnorm)
        else:
            sk_sched = sched.build_schedule(eps_n, pnorm, u, k)
            band = [math.exp(pnorm * sk_sched.log_a0
                             + sk_sched.log_delta[1])]
            for i in range(sk_sched.A):
                band.append(math.exp(pnorm * sk_sched.log_a[i]
                                     + sk_sched.log_delta[i + 2]))
            isum = math.fsum(
                math.prod(band[i] for i in multi)
                for multi in itertools.product(range(len(band)), repeat=k))
            percell_terms.append((2.0 * l_k1_max) ** (d - k) * s_k * isum)

    size_formula = b * math.fsum(formula_terms) ** (1.0 / pnorm)
    size_percell = b * math.fsum(percell_terms) ** (1.0 / pnorm)
    return {
        "log_count_bound": count,
        "c_d": c_d,
        "c_d_flag": "leading constant is non-constructive; reported at "
                    "face value",
        "size_certificate": size_formula,
        "size_certificate_percell": size_percell,
        "u": u,
        "A_u": au,
        "eps": eps,
        "p": pnorm,
        "b": b,
        "per_face": per_face,
    }


# ---------------------------------------------------------------------------
# Class rescaling


def rescale_class(f: ConvexFn, box_from, box_to, b_from: float,
                  b_to: float) -> ConvexFn:
    """Affine substitution mapping f on box_from with bound b_from to the
    equivalent function on box_to with bound b_to.

    ftilde(t) = (b_to / b_from) f(x(t)) with x affine from box_to onto
    box_from; slopes pick up the per-axis length ratios, values the bound
    ratio.  L_p sizes transform by (b_from/b_to) (prod length ratios)^{1/p},
    so bracket counts are invariant under the substitution.

    Raises:
        DomainError: a degenerate box or nonpositive bounds.
    """
    lo_f, hi_f = (np.asarray(v, dtype=float).ravel() for v in box_from)
    lo_t, hi_t = (np.asarray(v, dtype=float).ravel() for v in box_to)
    if np.any(hi_f <= lo_f) or np.any(hi_t <= lo_t):
        raise DomainError("boxes must have positive extent on every axis")
    if b_from <= 0 or b_to <= 0:
        raise DomainError("bounds must be positive")
    scale = (hi_f - lo_f) / (hi_t - lo_t)
    s = b_to / b_from
    new_slopes = s * f.slopes * scale[None, :]
    shift = lo_f - scale * lo_t
    new_intercepts = s * (f.intercepts + f.slopes @ shift)
    new_domain = None
    if f.domain is not None:
        dom = f.domain
        new_domain = geo.Polytope(dom.normals * scale[None, :],
                                  dom.offsets - dom.normals @ shift)
    return ConvexFn(new_slopes, new_intercepts, b_to, domain=new_domain)


# ---------------------------------------------------------------------------
# Manifests and binary dumps


def family_manifest(fam: BracketFamily) -> dict:
    """JSON-ready description of one family's generator parameters."""
    return {
        "eps": fam.eps,
        "p": fam.p,
        "b": fam.b,
        "quantum": fam.quantum,
        "pitch": [None if math.isinf(h) else float(h) for h in fam.pitch],
        "spacing": fam.spacing.tolist(),
        "shape": [int(s) for s in fam.shape],
        "n_nodes": fam.n_nodes,
        "count_bound": fam.count_bound,
        "clipped": fam.clip is not None,
        "rect": {
            "lo": fam.rect.lo.tolist(),
            "hi": fam.rect.hi.tolist(),
            "basis": fam.rect.basis.tolist(),
            "origin": fam.rect.origin.tolist(),
        },
    }


def global_manifest(gf: GlobalBracketFamily) -> dict:
    cells = []
    for c, fam, w in zip(gf.cells, gf.families, gf.weights):
        entry = {"weight": float(w), "trivial": fam is None}
        if isinstance(c, part.Cell):
            entry["j_tuple"] = [int(j) for j in c.j_tuple]
            entry["i_tuple"] = [int(i) for i in c.i_tuple]
        if fam is not None:
            entry["eps"] = fam.eps
            entry["shape"] = [int(s) for s in fam.shape]
            entry["count_bound"] = fam.count_bound
        cells.append(entry)
    return {
        "n_cells": gf.n_cells,
        "n_trivial": sum(1 for f in gf.families if f is None),
        "p": gf.p,
        "b": gf.b,
        "size_bound": gf.size_bound,
        "log_count_bound": gf.log_count_bound,
        "cells": cells,
    }


def bracket_dump(b: Bracket) -> bytes:
    """Node values of (lower, upper), little-endian float64, row-major over
    the grid; lower first."""
    if b.is_explicit:
        lower, upper = b._lower_values, b._upper_values
    else:
        mid = b._quantized(np.arange(b.family.n_nodes)) * b.family.quantum
        lower, upper = mid - b.family.eps / 2, mid + b.family.eps / 2
    return (np.ascontiguousarray(lower, dtype="<f8").tobytes()
            + np.ascontiguousarray(upper, dtype="<f8").tobytes())


def bracket_load(data: bytes, shape):
    """Inverse of bracket_dump: (lower, upper) arrays with the given shape."""
    n = int(np.prod(shape))
    vals = np.frombuffer(data, dtype="<f8")
    if vals.shape[0] != 2 * n:
        raise DomainError(f"expected {2 * n} float64 values, got "
                          f"{vals.shape[0]}")
    return vals[:n].reshape(shape), vals[n:].reshape(shape)
