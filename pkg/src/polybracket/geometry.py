"""Convex polytopes in halfspace representation and exact queries on them.

A polytope is stored as ``{x : <v_j, x> >= p_j, j = 1..N}`` with unit inner
normals ``v_j``.  All the operations this package needs downstream are
collected here: support functions and widths (linear programs over the
halfspace system), exact vertex enumeration by facet d-tuples, Hausdorff
distance between polytopes (exact projections via active-set enumeration),
face lattice enumeration for simple polytopes, a deterministic pulling
triangulation, and exact volumes.

Scale expectations: these routines are written for desk-scale instances
(dimension <= 3-4, tens of facets).  Vertex enumeration is O(N^d) and the
projection used by the Hausdorff distance enumerates active sets, both of
which are exact and fast at that scale but are not meant for large N.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy.optimize import linprog

from .errors import (
    BoundednessError,
    DegenerateInputError,
    DomainError,
)

# Absolute tolerance for membership / tightness tests on unit-normal
# halfspace systems.  Offsets are O(1) at desk scale, so an absolute
# tolerance is appropriate.
ABS_TOL = 1e-9

# Tolerance used when deciding whether a candidate face has nonempty
# relative interior (Chebyshev radius in the tangent coordinates).
FACE_INTERIOR_TOL = 1e-9

# Rounding grid used to deduplicate enumerated vertices.
_VERTEX_DECIMALS = 9


def _lp(c, a_ub, b_ub):
    """Solve min c.x s.t. a_ub x <= b_ub with free variables.

    Returns the scipy result object.  Raises on solver breakdown but not on
    infeasible/unbounded statuses, which callers interpret.
    """
    n = len(c)
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * n,
                  method="highs")
    if res.status not in (0, 2, 3):
        from .errors import SolverFailureError
        raise SolverFailureError(f"linprog status {res.status}: {res.message}")
    return res


class Polytope:
    """Bounded convex polytope {x : normals @ x >= offsets}.

    Attributes:
        dim: ambient dimension d.
        normals: (N, d) array of unit inner normals (normalized on
            construction; offsets are rescaled accordingly).
        offsets: (N,) array.

    The constructor optionally validates that the polytope has nonempty
    interior and is bounded; construction-time validation is skipped by
    internal callers that build possibly-empty cells.
    """

    def __init__(self, normals, offsets, validate=True):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float).ravel()
        if normals.ndim != 2 or normals.shape[0] != offsets.shape[0]:
            raise DegenerateInputError("normals/offsets shape mismatch")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms < 1e-14):
            raise DegenerateInputError("zero normal vector in halfspace system")
        self.normals = normals / norms[:, None]
        self.offsets = offsets / norms
        self.dim = normals.shape[1]
        self.n_facets = normals.shape[0]
        self._vertices = None
        self._bbox = None
        self._chebyshev = None
        if validate:
            c, r = self.chebyshev()
            if r <= 0:
                raise DegenerateInputError(
                    f"polytope has empty interior (Chebyshev radius {r:.3g})")
            _ = self.bbox()  # raises BoundednessError if unbounded

    def chebyshev(self):
        """Chebyshev center and radius: the deepest point of the polytope.

        Returns (center, radius).  radius <= 0 means empty interior.
        """
        if self._chebyshev is None:
            d = self.dim
            # maximize r  s.t.  <v_j, x> - r >= p_j
            c = np.zeros(d + 1)
            c[-1] = -1.0
            a_ub = np.hstack([-self.normals, np.ones((self.n_facets, 1))])
            res = _lp(c, a_ub, -self.offsets)
            if res.status == 3:
                raise BoundednessError("Chebyshev LP unbounded: polytope "
                                       "contains balls of every radius")
            if res.status != 0:
                raise DegenerateInputError("Chebyshev LP infeasible")
            self._chebyshev = (res.x[:d].copy(), -res.fun)
        return self._chebyshev

    def bbox(self):
        """Axis-aligned bounding box, shape (d, 2)."""
        if self._bbox is None:
            lo = np.empty(self.dim)
            hi = np.empty(self.dim)
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = 1.0
                hi[i] = support(self, e)
                lo[i] = -support(self, -e)
            self._bbox = np.stack([lo, hi], axis=1)
        return self._bbox

    def contains(self, x, tol=ABS_TOL):
        """Membership test, vectorized over rows of x."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        ok = np.all(pts @ self.normals.T - self.offsets >= -tol, axis=1)
        return bool(ok[0]) if single else ok

    def vertices(self):
        """All vertices, enumerated from facet d-tuples, deduplicated and
        sorted lexicographically.  Exact up to linear-solve roundoff."""
        if self._vertices is None:
            d = self.dim
            found = []
            for idx in itertools.combinations(range(self.n_facets), d):
                a = self.normals[list(idx)]
                if abs(np.linalg.det(a)) < 1e-12:
                    continue
                x = np.linalg.solve(a, self.offsets[list(idx)])
                if self.contains(x, tol=1e-8):
                    found.append(x)
            if not found:
                raise DegenerateInputError("polytope has no vertices")
            arr = np.array(found)
            rounded = np.round(arr, _VERTEX_DECIMALS)
            _, keep = np.unique(rounded, axis=0, return_index=True)
            arr = arr[sorted(keep)]
            order = np.lexsort(arr.T[::-1])
            self._vertices = arr[order]
        return self._vertices

    def __repr__(self):
        return f"Polytope(dim={self.dim}, n_facets={self.n_facets})"


class Face:
    """A (d-k)-dimensional face of a simple polytope.

    Attributes:
        j_tuple: indices of the k facets whose intersection carries the face.
        k: codimension.
        affine_point: a relative-interior point (Chebyshev center of the face).
        tangent_basis: ((d-k), d) orthonormal rows spanning the tangent space,
            with a deterministic sign convention (first nonzero coordinate of
            each row is positive).
    """

    def __init__(self, j_tuple, k, affine_point, tangent_basis):
        self.j_tuple = tuple(int(j) for j in j_tuple)
        self.k = int(k)
        self.affine_point = np.asarray(affine_point, dtype=float)
        self.tangent_basis = np.asarray(tangent_basis, dtype=float)
        self._polytope = None

    @property
    def dim(self):
        return self.tangent_basis.shape[0]

    def __repr__(self):
        return f"Face(j={self.j_tuple}, k={self.k}, dim={self.dim})"


def _fix_signs(rows):
    """Flip each row so its first coordinate of magnitude > 1e-12 is positive."""
    rows = np.array(rows, dtype=float)
    for i, row in enumerate(rows):
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            rows[i] = -row
    return rows


def nullspace_basis(a):
    """Orthonormal basis (rows) of the null space of a, deterministic signs."""
    a = np.atleast_2d(a)
    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 1.0)))
    return _fix_signs(vt[rank:])


def support(p: Polytope, x) -> float:
    """Support function h(P, x) = sup_{y in P} <x, y>.

    Solved as a linear program over the halfspace system.

    Raises:
        DomainError: the polytope is empty.
        BoundednessError: the LP is unbounded in direction x.
    """
    x = np.asarray(x, dtype=float)
    res = _lp(-x, -p.normals, -p.offsets)
    if res.status == 2:
        raise DomainError("support of an empty polytope")
    if res.status == 3:
        raise BoundednessError(f"polytope unbounded along {x}")
    return float(-res.fun)


def width(p: Polytope, u) -> float:
    """Directional width w(P, u) = h(P, u) + h(P, -u)."""
    return support(p, u) + support(p, np.negative(u))


def max_width(p: Polytope):
    """Maximal width (diameter) and a maximizing unit direction.

    Exact via vertex-pair enumeration: the diameter of a polytope is attained
    at a pair of vertices.

    Returns:
        (value, direction) with direction a unit vector.
    """
    v = p.vertices()
    if len(v) == 1:
        raise DegenerateInputError("max_width of a single point")
    diff = v[None, :, :] - v[:, None, :]
    d2 = np.sum(diff * diff, axis=2)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    direction = v[j] - v[i]
    val = float(np.linalg.norm(direction))
    return val, direction / val


def directional_distance(p: Polytope, x, e) -> float:
    """Exit distance d+(x, boundary(P), e) = sup{t >= 0 : x + t e in P}.

    Args:
        p: the polytope.
        x: a point of P (DomainError otherwise).
        e: direction (not necessarily unit; the distance is measured in
           multiples of |e| times the unit direction, i.e. e is normalized).

    Returns +inf when P is unbounded along e.
    """
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if not p.contains(x, tol=1e-7):
        raise DomainError("directional_distance: x is not in P")
    slack = p.normals @ x - p.offsets
    rate = p.normals @ e
    blocking = rate < -1e-14
    if not np.any(blocking):
        return math.inf
    t = slack[blocking] / (-rate[blocking])
    return float(max(np.min(t), 0.0))


def project_onto(p: Polytope, x, weights=None):
    """Exact projection of x onto P, optionally in a diagonally weighted norm.

    Minimizes sum_i w_i (y_i - x_i)^2 over y in P by enumerating candidate
    active sets of size 0..d and keeping the best feasible KKT point.  Exact
    for polytopes at desk scale (the true projection's active set is among
    the enumerated subsets).

    Args:
        p: target polytope.
        x: point to project.
        weights: optional positive weights per coordinate (default all-ones).

    Returns:
        (point, distance) where distance is in the weighted norm.
    """
    x = np.asarray(x, dtype=float)
    if weights is None:
        sq = np.ones(p.dim)
    else:
        sq = np.sqrt(np.asarray(weights, dtype=float))
        if np.any(sq <= 0):
            raise DegenerateInputError("projection weights must be positive")
    # Rescale coordinates so the problem is Euclidean: z = sq * y.
    normals_z = p.normals / sq[None, :]
    row_norms = np.linalg.norm(normals_z, axis=1)
    normals_z = normals_z / row_norms[:, None]
    offsets_z = p.offsets / row_norms
    xz = sq * x

    if np.all(normals_z @ xz - offsets_z >= -ABS_TOL):
        return x.copy(), 0.0

    d = p.dim
    best = None
    best_dist = math.inf
    for r in range(1, d + 1):
        for idx in itertools.combinations(range(p.n_facets), r):
            a = normals_z[list(idx)]
            b = offsets_z[list(idx)]
            gram = a @ a.T
            try:
                lam = np.linalg.solve(gram, a @ xz - b)
            except np.linalg.LinAlgError:
                continue
            y = xz - a.T @ lam
            if np.all(normals_z @ y - offsets_z >= -1e-8):
                dist = float(np.linalg.norm(xz - y))
                if dist < best_dist - 1e-15:
                    best_dist = dist
                    best = y
    if best is None:
        raise DegenerateInputError("projection failed: polytope empty?")
    return best / sq, best_dist


def _dist_to(p: Polytope, x):
    return project_onto(p, x)[1]


def hausdorff(p: Polytope, q: Polytope) -> float:
    """Hausdorff distance between two bounded polytopes (exact).

    sup-inf distances are attained at vertices of the outer polytope, and the
    inner distance-to-polytope is an exact projection.
    """
    d1 = max(_dist_to(q, v) for v in p.vertices())
    d2 = max(_dist_to(p, w) for w in q.vertices())
    return max(d1, d2)


def enumerate_faces(p: Polytope, k: int):
    """All (d-k)-dimensional faces J_k of the polytope, as Face objects.

    A j-tuple qualifies when the intersection of its k facet hyperplanes
    meets P in a set of dimension exactly d-k (nonempty relative interior in
    the tangent coordinates).  k = 0 returns the polytope itself as a single
    face with an empty j_tuple.

    Results are sorted by j_tuple for determinism.
    """
    d = p.dim
    if not 0 <= k <= d:
        raise DomainError(f"face codimension k={k} out of range 0..{d}")
    if k == 0:
        center, _ = p.chebyshev()
        return [Face((), 0, center, np.eye(d))]
    faces = []
    for idx in itertools.combinations(range(p.n_facets), k):
        a = p.normals[list(idx)]
        b = p.offsets[list(idx)]
        # Need the k normals independent for a (d-k)-dimensional intersection.
        if np.linalg.matrix_rank(a, tol=1e-10) < k:
            continue
        x0, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.linalg.norm(a @ x0 - b) > 1e-8:
            continue
        t = nullspace_basis(a)
        if k == d:
            if p.contains(x0, tol=ABS_TOL):
                faces.append(Face(idx, k, x0, t.reshape(0, d)))
            continue
        # Constraints from the other facets, in tangent coordinates.
        rest = [j for j in range(p.n_facets) if j not in idx]
        an = p.normals[rest] @ t.T
        bn = p.offsets[rest] - p.normals[rest] @ x0
        # Chebyshev LP in the tangent space; radius > 0 <=> the face has
        # nonempty relative interior of dimension d-k.
        m = d - k
        c = np.zeros(m + 1)
        c[-1] = -1.0
        row_norms = np.linalg.norm(an, axis=1)
        scale = np.maximum(row_norms, 1.0)
        a_ub = np.hstack([-an / scale[:, None],
                          (row_norms / scale)[:, None] * 0 + 1.0])
        res = _lp(c, a_ub, -bn / scale)
        if res.status == 3:
            raise BoundednessError("face Chebyshev LP unbounded; is P bounded?")
        if res.status != 0 or -res.fun <= FACE_INTERIOR_TOL:
            continue
        z = res.x[:m]
        faces.append(Face(idx, k, x0 + t.T @ z, t))
    faces.sort(key=lambda f: f.j_tuple)
    return faces


def face_polytope(p: Polytope, face: Face) -> Polytope:
    """The face as a full-dimensional polytope in its tangent coordinates.

    Coordinates are z with points x = affine_point + tangent_basis.T @ z.
    Constraints induced by facets parallel to the face (zero projected
    normal) are dropped after checking they are satisfied at the face point.
    """
    if face.k == p.dim:
        raise DegenerateInputError("0-dimensional face has no tangent polytope")
    if face._polytope is not None:
        return face._polytope
    t = face.tangent_basis
    x0 = face.affine_point
    rest = [j for j in range(p.n_facets) if j not in face.j_tuple]
    an = p.normals[rest] @ t.T
    bn = p.offsets[rest] - p.normals[rest] @ x0
    keep = np.linalg.norm(an, axis=1) > 1e-12
    dropped_ok = bn[~keep] <= ABS_TOL
    if not np.all(dropped_ok):
        raise DegenerateInputError("face constraints inconsistent")
    face._polytope = Polytope(an[keep], bn[keep], validate=False)
    return face._polytope


def check_simple(p: Polytope):
    """Check that P is a simple polytope.

    Every (d-k)-face must have exactly k tight facets at a relative-interior
    point.  Returns (is_simple, violations) where violations is a list of
    (j_tuple, n_tight) pairs.
    """
    violations = []
    for k in range(1, p.dim + 1):
        for face in enumerate_faces(p, k):
            slack = p.normals @ face.affine_point - p.offsets
            n_tight = int(np.sum(np.abs(slack) <= 1e-7))
            if n_tight != k:
                violations.append((face.j_tuple, n_tight))
    return len(violations) == 0, violations


def _lex_min_index(v):
    return int(np.lexsort(v.T[::-1])[0])


def _facet_vertex_sets(vertices, normals, offsets, tol=1e-8):
    """Vertex index sets tight on each halfspace, with duplicates and
    non-facets (fewer than dim vertices) left to the caller to filter."""
    tight = np.abs(vertices @ normals.T - offsets) <= tol
    return [np.nonzero(tight[:, j])[0] for j in range(normals.shape[0])]


def _triangulate_rec(vertices, normals, offsets):
    """Pulling triangulation of conv(vertices) in m dimensions.

    vertices: (n, m) array, normals/offsets: halfspace system of the same
    polytope.  Returns a list of (m+1, m) vertex arrays.  Deterministic:
    the apex is the lexicographically least vertex at every level.
    """
    n, m = vertices.shape
    if m == 1:
        lo = vertices.min()
        hi = vertices.max()
        return [np.array([[lo], [hi]])]
    apex_i = _lex_min_index(vertices)
    apex = vertices[apex_i]
    simplices = []
    seen = set()
    for j, vs in enumerate(_facet_vertex_sets(vertices, normals, offsets)):
        if len(vs) < m or apex_i in vs:
            continue
        key = tuple(sorted(vs))
        if key in seen:
            continue
        seen.add(key)
        fverts = vertices[vs]
        origin = fverts[_lex_min_index(fverts)]
        basis = _fix_signs(np.linalg.svd(fverts - origin)[2][:m - 1])
        sub_verts = (fverts - origin) @ basis.T
        sub_an = normals @ basis.T
        sub_bn = offsets - normals @ origin
        keep = np.linalg.norm(sub_an, axis=1) > 1e-10
        for sub in _triangulate_rec(sub_verts, sub_an[keep], sub_bn[keep]):
            lifted = origin + sub @ basis
            simplices.append(np.vstack([apex[None, :], lifted]))
    return simplices


def _simplex_polytope(verts):
    """Halfspace representation of a d-simplex given its d+1 vertices."""
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    normals = []
    offsets = []
    for i in range(d + 1):
        others = np.delete(verts, i, axis=0)
        base = others[0]
        n = nullspace_basis(others[1:] - base)
        if n.shape[0] != 1:
            raise DegenerateInputError("degenerate simplex")
        n = n[0]
        if np.dot(n, verts[i] - base) < 0:
            n = -n
        normals.append(n)
        offsets.append(np.dot(n, base))
    return Polytope(normals, offsets, validate=False)


def triangulate(p: Polytope):
    """Deterministic pulling triangulation into simplices.

    The apex is the lexicographically least vertex; facets not containing it
    are triangulated recursively and coned.  Returns a list of Polytope
    simplices whose interiors are pairwise disjoint and whose union is P.

    Raises:
        DegenerateInputError: P is lower-dimensional.
    """
    v = p.vertices()
    if np.linalg.matrix_rank(v - v[0], tol=1e-10) < p.dim:
        raise DegenerateInputError("triangulate: polytope is lower-dimensional")
    sims = _triangulate_rec(v, p.normals, p.offsets)
    return [_simplex_polytope(s) for s in sims]


def simplex_vertices(p: Polytope):
    """Vertex arrays of the pulling triangulation (no Polytope wrapping)."""
    v = p.vertices()
    if np.linalg.matrix_rank(v - v[0], tol=1e-10) < p.dim:
        raise DegenerateInputError("triangulate: polytope is lower-dimensional")
    return _triangulate_rec(v, p.normals, p.offsets)


def volume(p: Polytope) -> float:
    """Exact volume via the pulling triangulation (sum of simplex volumes)."""
    if p.dim == 0:
        return 1.0
    total = 0.0
    for s in simplex_vertices(p):
        total += abs(np.linalg.det(s[1:] - s[0])) / math.factorial(p.dim)
    return total


def face_volume(p: Polytope, face: Face) -> float:
    """(d-k)-dimensional volume of a face; vol_0 of a vertex is 1 by
    convention."""
    if face.k == p.dim:
        return 1.0
    return volume(face_polytope(p, face))


def monte_carlo_volume(p: Polytope, n: int, seed: int) -> float:
    """Seeded Monte Carlo volume estimate (bounding-box rejection)."""
    box = p.bbox()
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.uniform(box[:, 0], box[:, 1], size=(int(n), p.dim))
    frac = float(np.mean(p.contains(pts)))
    return frac * float(np.prod(box[:, 1] - box[:, 0]))


def to_json(p: Polytope) -> str:
    """Serialize a polytope (normals are already unit)."""
    return json.dumps({
        "dim": p.dim,
        "normals": p.normals.tolist(),
        "offsets": p.offsets.tolist(),
    }, indent=2)


def from_json(text: str) -> Polytope:
    """Load a polytope from JSON; normals are re-normalized on load."""
    data = json.loads(text)
    return Polytope(np.array(data["normals"]), np.array(data["offsets"]))


def unit_box(d: int) -> Polytope:
    """[0, 1]^d."""
    eye = np.eye(d)
    return Polytope(np.vstack([eye, -eye]),
                    np.concatenate([np.zeros(d), -np.ones(d)]))


def standard_triangle() -> Polytope:
    """Triangle with vertices (0,0), (1,0), (0,1)."""
    return Polytope(np.array([[0.0, 1.0], [1.0, 0.0], [-1.0, -1.0]]),
                    np.array([0.0, 0.0, -1.0]))


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> Polytope:
    """Regular n-gon with the first edge normal pointing in -x direction...

    Edge midpoint normals at angles 2*pi*i/n; inner normals point to center.
    """
    center = np.asarray(center, dtype=float)
    angles = 2 * np.pi * np.arange(n) / n
    apothem = radius * math.cos(math.pi / n)
    normals = -np.stack([np.cos(angles), np.sin(angles)], axis=1)
    offsets = normals @ center - apothem
    return Polytope(normals, offsets)
