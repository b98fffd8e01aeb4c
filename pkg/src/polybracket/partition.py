"""Distance-band cells over a simple polytope.

A cell is indexed by a face tuple j (the facets closer than u) and a band
tuple i (which distance band [delta_i, delta_{i+1}) each active facet falls
in).  Each cell carries a Gram-Schmidt basis ordered by increasing band
distance, per-direction Lipschitz constants 2B/delta, and a bounding
rectangle whose tangential half-lengths are alpha! times the band gaps and
whose lateral half-lengths are 2 L_{k,1} times the face widths.
"""

import itertools
import math

import numpy as np

from . import geometry as geo
from . import john
from . import schedule as sched
from .errors import (AssumptionError, DegenerateInputError, DomainError,
                     NoCertificateError, PolybracketError)

# Emptiness threshold for cell closures; legitimate thin slabs at desk
# scale stay far above this.
_EMPTY_RADIUS = 1e-12
_ORTHO_TOL = 1e-12


class CellBasis:
    """Orthonormal basis adapted to a cell.

    Rows e[0..k-1] come from Gram-Schmidt over the active facet normals in
    increasing-band order; rows e[k..d-1] span the orthogonal complement
    (the face's tangent space), aligned with the face's John-ellipsoid axes.
    order[a] is the position within j_tuple of the a-th nearest facet.
    """

    def __init__(self, e: np.ndarray, order: tuple, k: int):
        self.e = np.asarray(e, dtype=float)
        self.order = tuple(int(x) for x in order)
        self.k = int(k)

    @property
    def dim(self) -> int:
        return self.e.shape[0]

    def __repr__(self):
        return f"CellBasis(k={self.k}, order={self.order})"


def _face_completion_axes(p: geo.Polytope, face: geo.Face) -> np.ndarray:
    """Ambient directions of the face's John-ellipsoid axes, longest first.

    Empty (0, d) array for a vertex face.
    """
    d = p.dim
    k = face.k
    if k == d:
        return np.zeros((0, d))
    if k == 0:
        return john.john_ellipsoid(p).axes
    fp = geo.face_polytope(p, face)
    ell = john.john_ellipsoid(fp)
    return ell.axes @ face.tangent_basis


def cell_basis(p: geo.Polytope, face: geo.Face, delta_order,
               completion: np.ndarray = None) -> CellBasis:
    """Gram-Schmidt basis over the active normals in the given order.

    Args:
        p: the ambient polytope.
        face: the cell's face (j tuple of codimension k).
        delta_order: permutation of range(k) sorting active facets by
            increasing band distance, ties by facet index.
        completion: optional precomputed ambient John axes of the face
            (rows); computed on demand when omitted.

    Raises:
        DegenerateInputError: active normals are linearly dependent.
    """
    d = p.dim
    k = face.k
    order = tuple(int(x) for x in delta_order)
    if sorted(order) != list(range(k)):
        raise DomainError(f"delta_order must permute range({k})")

    rows = []
    if k:
        v_sorted = p.normals[[face.j_tuple[a] for a in order]]
        # QR of the transposed normal stack is exactly Gram-Schmidt in
        # column order; positive R diagonal gives <e_a, v_a> > 0.
        qmat, rmat = np.linalg.qr(v_sorted.T)
        diag = np.diag(rmat)
        if np.min(np.abs(diag)) < 1e-10:
            raise DegenerateInputError(
                f"dependent normals at face {face.j_tuple}")
        qmat = qmat * np.sign(diag)[None, :]
        rows.append(qmat.T)

    if k < d:
        axes = completion if completion is not None \
            else _face_completion_axes(p, face)
        if k:
            e_active = rows[0]
            axes = axes - (axes @ e_active.T) @ e_active
        qc, rc = np.linalg.qr(axes.T)
        qc = qc * np.sign(np.diag(rc))[None, :]
        rows.append(qc.T)

    e = np.vstack(rows) if rows else np.zeros((0, d))
    gram_err = np.max(np.abs(e @ e.T - np.eye(d)))
    if gram_err > _ORTHO_TOL:
        raise DegenerateInputError(f"basis lost orthonormality: {gram_err}")
    return CellBasis(e, order, k)


class Cell:
    """One distance-band cell with its basis, Lipschitz vector, and
    bounding-rectangle data.

    i_tuple is aligned with j_tuple positions (unsorted); basis, lipschitz,
    rectangle, and rho follow the sorted (increasing band) axis order.
    """

    def __init__(self, p, face, i_tuple, basis, lipschitz, rectangle, rho,
                 b, delta, u, closure, lcs):
        self.parent = p
        self.face = face
        self.j_tuple = face.j_tuple
        self.i_tuple = tuple(int(i) for i in i_tuple)
        self.k = face.k
        self.basis = basis
        self.lipschitz = np.asarray(lipschitz, dtype=float)
        self.rectangle = np.asarray(rectangle, dtype=float)
        self.rho = np.asarray(rho, dtype=float)
        self.b = float(b)
        self.delta = np.asarray(delta, dtype=float)
        self.u = float(u)
        self.closure = closure
        self.lcs = lcs
        self._volume = None

    @property
    def n_bands(self) -> int:
        """Bands 0..A; index A+1 marks inactive facets."""
        return len(self.delta) - 2

    def band_key(self) -> np.ndarray:
        """Per-facet band index vector; A+1 for facets at distance >= u."""
        key = np.full(self.parent.n_facets, self.n_bands, dtype=np.int64)
        for pos, j in enumerate(self.j_tuple):
            key[j] = self.i_tuple[pos]
        return key

    def sorted_gaps(self) -> np.ndarray:
        """Band gaps delta_{i+1} - delta_i in basis (increasing-band) order."""
        idx = [self.i_tuple[a] for a in self.basis.order]
        return np.array([self.delta[i + 1] - self.delta[i] for i in idx])

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Half-open band membership for points x (m, d) or (d,)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        slack = x @ self.parent.normals.T - self.parent.offsets[None, :]
        ok = np.all(slack >= -tol, axis=1)
        active = set(self.j_tuple)
        for j in range(self.parent.n_facets):
            s = slack[:, j]
            if j in active:
                i = self.i_tuple[self.j_tuple.index(j)]
                ok &= (s >= self.delta[i] - tol) & (s < self.delta[i + 1])
            else:
                ok &= s >= self.u - tol
        return ok

    def volume(self) -> float:
        if self._volume is None:
            self._volume = geo.volume(self.closure)
        return self._volume

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """n points inside the closure: Dirichlet mixtures of its vertices.

        Not uniform; used to probe inequalities that must hold pointwise.
        """
        verts = self.closure.vertices()
        rng = np.random.Generator(np.random.Philox(seed))
        w = rng.dirichlet(np.ones(len(verts)), size=n)
        return w @ verts

    def __repr__(self):
        return (f"Cell(j={self.j_tuple}, i={self.i_tuple}, k={self.k}, "
                f"u={self.u:.3g})")


def _closure_polytope(p: geo.Polytope, j_tuple, i_tuple, delta, u):
    """Closed version of the cell as a halfspace intersection, or None if
    empty.  Active facet j with band i contributes slack(j) in
    [delta_i, delta_{i+1}]; every other facet contributes slack >= u.
    Slack is <v_j, x> - p_j in the inner-normal convention."""
    base_offs = p.offsets.copy()
    active = dict(zip(j_tuple, i_tuple))
    extra_rows = []
    extra_offs = []
    for j in range(p.n_facets):
        band = active.get(j)
        if band is None:
            base_offs[j] = p.offsets[j] + u
            continue
        lo, hi = delta[band], delta[band + 1]
        base_offs[j] = p.offsets[j] + lo
        if np.isfinite(hi):
            # slack <= hi  <=>  <-v_j, x> >= -(p_j + hi)
            extra_rows.append(-p.normals[j])
            extra_offs.append(-(p.offsets[j] + hi))
    rows = np.vstack([p.normals] + extra_rows) if extra_rows \
        else p.normals.copy()
    offsets = np.concatenate([base_offs, extra_offs]) if extra_offs \
        else base_offs
    try:
        poly = geo.Polytope(rows, offsets, validate=False)
        _, radius = poly.chebyshev()
    except PolybracketError:
        return None
    if radius <= _EMPTY_RADIUS:
        return None
    return poly


def _face_widths(p: geo.Polytope, face: geo.Face, e: np.ndarray):
    """Widths of the face along each basis row (zero along normals)."""
    if face.k == p.dim:
        verts = np.asarray([face.affine_point])
    elif face.k == 0:
        verts = p.vertices()
    else:
        fp = geo.face_polytope(p, face)
        verts = face.affine_point + fp.vertices() @ face.tangent_basis
    proj = verts @ e.T
    return proj.max(axis=0) - proj.min(axis=0)


def build_cells(p: geo.Polytope, schedules, b: float = 1.0):
    """All nonempty cells of the band partition, sorted by (j, i).

    Args:
        p: simple polytope.
        schedules: a DeltaSchedule, or a mapping codimension -> DeltaSchedule
            for k = 1..d.  All entries must share the same band edges and u
            (the edges depend only on eps and p, not on k).
        b: the uniform function bound used for Lipschitz constants.

    Raises:
        AssumptionError: p is not simple.
        DomainError: inconsistent schedules.
    """
    ok, violations = geo.check_simple(p)
    if not ok:
        raise AssumptionError(
            f"polytope is not simple: {violations[:3]} "
            f"({len(violations)} violations)")

    d = p.dim
    if isinstance(schedules, sched.DeltaSchedule):
        by_k = {k: schedules for k in range(1, d + 1)}
    else:
        by_k = dict(schedules)
    ref = next(iter(by_k.values()))
    delta, u = ref.delta, ref.u
    for s in by_k.values():
        if len(s.delta) != len(delta) or not np.allclose(
                s.delta[:-1], delta[:-1]) or s.u != u:
            raise DomainError("schedules disagree on band edges")
    n_bands = ref.band_count()

    cells = []
    for k in range(0, d + 1):
        if k > 0 and k not in by_k:
            raise DomainError(f"no schedule supplied for codimension {k}")
        for face in geo.enumerate_faces(p, k):
            completion = _face_completion_axes(p, face)
            lcs = sched.compute_L_constants(p, face)
            for i_tuple in itertools.product(range(n_bands), repeat=k):
                closure = _closure_polytope(p, face.j_tuple, i_tuple,
                                            delta, u)
                if closure is None:
                    continue
                order = tuple(sorted(
                    range(k),
                    key=lambda a: (i_tuple[a], face.j_tuple[a])))
                basis = cell_basis(p, face, order, completion=completion)
                gaps = np.array([
                    delta[i_tuple[a] + 1] - delta[i_tuple[a]]
                    for a in order])
                lo_edges = np.array([delta[i_tuple[a]] for a in order])
                lip = np.empty(d)
                with np.errstate(divide="ignore"):
                    lip[:k] = np.where(lo_edges > 0.0,
                                       2.0 * b / lo_edges, np.inf)
                lip[k:] = 2.0 * b / u
                rho = _face_widths(p, face, basis.e)
                rho[:k] = 0.0
                rect = np.empty(d)
                rect[:k] = np.array(
                    [math.factorial(a + 1) for a in range(k)]) * gaps
                rect[k:] = 2.0 * lcs.L_k1 * rho[k:]
                cells.append(Cell(p, face, i_tuple, basis, lip, rect, rho,
                                  b, delta, u, closure, lcs))
    cells.sort(key=lambda c: (c.j_tuple, c.i_tuple))
    return cells


def lipschitz_certificate(cell: Cell, b: float = None) -> np.ndarray:
    """Per-direction Lipschitz constants 2B/delta_{i_a} (sorted axis order).

    Raises:
        NoCertificateError: some active facet sits in band 0 (distance can
            vanish, so no slope control; such cells take the trivial
            [-B, B] bracket downstream).
    """
    if any(i == 0 for i in cell.i_tuple):
        raise NoCertificateError(
            f"cell {cell.j_tuple}/{cell.i_tuple} touches a facet")
    if b is None or b == cell.b:
        return cell.lipschitz.copy()
    return cell.lipschitz * (float(b) / cell.b)


def lipschitz_violations(cell: Cell, fn, n: int = 200, seed: int = 0,
                         step_frac: float = 0.25) -> np.ndarray:
    """Max |finite difference| of fn along each basis direction inside the
    cell, for comparison against the certificate."""
    d = cell.parent.dim
    pts = cell.sample(n, seed=seed)
    out = np.zeros(d)
    base = np.asarray(fn(pts), dtype=float)
    for a in range(d):
        h = step_frac * max(cell.rectangle[a], 1e-9)
        shifted = pts + h * cell.basis.e[a]
        inside = cell.contains(shifted)
        if not np.any(inside):
            continue
        diff = np.abs(np.asarray(fn(shifted[inside])) - base[inside]) / h
        out[a] = float(diff.max())
    return out


def parallelotope_vertex_rep(v_list, d_list) -> np.ndarray:
    """Edge vectors f_b with P = sum_b [0, f_b] for the slab parallelotope
    {x in span(v): 0 <= <x, v_b> <= d_b}.

    f_b = d_b * ftilde_b / <ftilde_b, v_b> where ftilde_b is the unit dual
    direction orthogonal to the other normals.

    Raises:
        DegenerateInputError: dependent normals.
        DomainError: nonpositive widths.
    """
    v = np.atleast_2d(np.asarray(v_list, dtype=float))
    dvals = np.asarray(d_list, dtype=float)
    if np.any(dvals <= 0):
        raise DomainError("slab widths must be positive")
    j, m = v.shape
    if j > m:
        raise DegenerateInputError("more normals than ambient dimensions")
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateInputError("zero normal vector")
    v = v / norms[:, None]
    gram = v @ v.T
    det = np.linalg.det(gram)
    if abs(det) < 1e-12:
        raise DegenerateInputError("dependent normal vectors")
    coeff = np.linalg.solve(gram, np.eye(j))
    duals = coeff @ v
    pair = np.einsum("ij,ij->i", duals, v)
    return duals * (dvals / pair)[:, None]


def parallelotope_width(v_list, d_list, direction, check: bool = True):
    """Width of the slab parallelotope along a direction, plus the
    j! max d bound.

    The width of the edge set sum_b [0, f_b] along unit e is
    sum_b |<f_b, e>|.  The bound can fail when normals meet at sharp
    angles; with check=True a violation raises.

    Returns:
        (width, bound)

    Raises:
        AssumptionError: check is on and width exceeds the bound.
    """
    f = parallelotope_vertex_rep(v_list, d_list)
    e = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(e)
    if nrm < 1e-12:
        raise DomainError("zero direction")
    e = e / nrm
    width = float(np.sum(np.abs(f @ e)))
    bound = math.factorial(f.shape[0]) * float(np.max(d_list))
    if check and width > bound + 1e-9:
        raise AssumptionError(
            f"width {width:.6g} exceeds factorial bound {bound:.6g}; "
            "normals meet too sharply")
    return width, bound


def parallelotope_max_width(v_list, d_list):
    """Exact maximum width (= diameter) over all directions, with the
    maximizing unit direction.

    The diameter of sum_b [0, f_b] is max over sign patterns of
    ||sum_b s_b f_b||.
    """
    f = parallelotope_vertex_rep(v_list, d_list)
    j = f.shape[0]
    best, best_dir = -1.0, None
    for signs in itertools.product((-1.0, 1.0), repeat=j - 1):
        s = np.array((1.0,) + signs)
        vec = s @ f
        nrm = float(np.linalg.norm(vec))
        if nrm > best:
            best, best_dir = nrm, vec / nrm if nrm > 0 else vec
    return best, best_dir


def cell_rectangle(cell: Cell, rho=None, l_k1: float = None) -> np.ndarray:
    """Half-lengths of the bounding rectangle in basis order: tangential
    alpha! * band gap, lateral 2 L_{k,1} * face width."""
    k = cell.k
    d = cell.parent.dim
    rho = cell.rho if rho is None else np.asarray(rho, dtype=float)
    l_k1 = cell.lcs.L_k1 if l_k1 is None else float(l_k1)
    gaps = cell.sorted_gaps()
    rect = np.empty(d)
    rect[:k] = np.array([math.factorial(a + 1) for a in range(k)]) * gaps
    rect[k:] = 2.0 * l_k1 * rho[k:]
    return rect


def cell_widths(cell: Cell) -> np.ndarray:
    """Exact widths of the cell closure along its basis directions."""
    verts = cell.closure.vertices()
    proj = verts @ cell.basis.e.T
    return proj.max(axis=0) - proj.min(axis=0)


def verify_width_bounds(cell: Cell) -> dict:
    """Check the cell's width inequalities exactly (via closure vertices).

    Tangential (a <= k): width <= a! * (delta_{i_a+1} - delta_{i_a});
    lateral (a > k): width <= 2 L_{k,1} * face width.  Both right sides are
    the rectangle half-lengths.

    The tangential (factorial) bound is a reporter, not an invariant: it
    can fail when active facet normals meet at angles outside roughly
    [53.13, 126.87] degrees, e.g. at a right triangle's hypotenuse corners,
    where the true width reaches (1 + sqrt 2)/2 times the bound.
    """
    w = cell_widths(cell)
    rhs = cell.rectangle
    k = cell.k
    return {
        "widths": w,
        "bounds": rhs.copy(),
        "tangential_ok": bool(np.all(w[:k] <= rhs[:k] + 1e-9)),
        "lateral_ok": bool(np.all(w[k:] <= rhs[k:] + 1e-9)),
        "ok": bool(np.all(w <= rhs + 1e-9)),
    }


def verify_rectangle(cell: Cell, n: int = 10_000, seed: int = 0) -> dict:
    """Sampled check of the rectangle containment: for point pairs x, y in
    the cell, every basis coordinate of y - x stays within the half-length."""
    xs = cell.sample(n, seed=seed)
    ys = cell.sample(n, seed=seed + 1)
    coords = np.abs((ys - xs) @ cell.basis.e.T)
    excess = coords - cell.rectangle[None, :]
    return {
        "max_excess": float(excess.max()),
        "ok": bool(excess.max() <= 1e-9),
    }


def verify_volume_bound(cell: Cell, slack: float = 1e-3):
    """Volume inequality for a k >= 1 cell:

    vol_d(cell) <= (2 L_{k,1})^{d-k} vol_{d-k}(face)
                   * prod_a gap_a / <ftilde_a, v_{j_a}>.

    Returns:
        (lhs, rhs, ok) with ok = lhs <= rhs * (1 + slack).

    Raises:
        DomainError: interior cell (k = 0).
    """
    k = cell.k
    if k < 1:
        raise DomainError("volume bound applies to cells with k >= 1")
    p = cell.parent
    d = p.dim
    lhs = cell.volume()
    face_vol = geo.face_volume(p, cell.face)
    ft = cell.lcs.f_tilde
    va = p.normals[list(cell.j_tuple)]
    pair = np.einsum("ij,ij->i", ft, va)
    gaps = np.array([cell.delta[i + 1] - cell.delta[i]
                     for i in cell.i_tuple])
    rhs = (2.0 * cell.lcs.L_k1) ** (d - k) * face_vol * float(
        np.prod(gaps / pair))
    return lhs, rhs, bool(lhs <= rhs * (1.0 + slack))


def classify_points(p: geo.Polytope, delta, u: float,
                    x: np.ndarray) -> np.ndarray:
    """Band-index key for each point: per-facet band, A+1 when the facet is
    at distance >= u, -1 when the point is outside the facet's halfspace."""
    delta = np.asarray(delta, dtype=float)
    n_bands = len(delta) - 2
    x = np.atleast_2d(np.asarray(x, dtype=float))
    slack = x @ p.normals.T - p.offsets[None, :]
    keys = np.searchsorted(delta, slack, side="right") - 1
    keys = np.minimum(keys, n_bands)
    keys[slack < 0] = -1
    return keys.astype(np.int64)


def partition_audit(p: geo.Polytope, cells, n: int = 1_000_000,
                    seed: int = 0) -> dict:
    """Membership and volume audit of a built partition.

    Samples n uniform points in p, classifies each by its band key, and
    counts points whose key is not an emitted cell (each key matches at
    most one cell by construction, so "exactly one" reduces to "emitted").
    Also compares the exact cell volume sum against vol(p).
    """
    if not cells:
        raise DomainError("no cells supplied")
    delta, u = cells[0].delta, cells[0].u
    key_rows = np.stack([c.band_key() for c in cells])
    emitted = {row.tobytes() for row in key_rows}

    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = p.bbox()
    pts = np.empty((0, p.dim))
    while len(pts) < n:
        cand = rng.uniform(lo, hi, size=(max(n, 4 * (n - len(pts))), p.dim))
        cand = cand[p.contains(cand)]
        pts = np.vstack([pts, cand]) if len(pts) else cand
    pts = pts[:n]

    misses = 0
    examples = []
    for start in range(0, n, 200_000):
        block = pts[start:start + 200_000]
        keys = classify_points(p, delta, u, block)
        for row, pt in zip(keys, block):
            if row.tobytes() not in emitted:
                misses += 1
                if len(examples) < 10:
                    examples.append((pt.copy(), tuple(row)))

    vol_sum = float(sum(c.volume() for c in cells))
    vol_dom = geo.volume(p)
    rel_err = abs(vol_sum - vol_dom) / vol_dom
    return {
        "n": int(n),
        "misses": int(misses),
        "miss_examples": examples,
        "ok_points": misses < 10,
        "vol_sum": vol_sum,
        "vol_domain": vol_dom,
        "vol_rel_err": rel_err,
        "ok_volume": rel_err <= 1e-6,
        "ok": misses < 10 and rel_err <= 1e-6,
    }


def partition_dump(cells) -> list:
    """JSON-serializable summary of a cell list."""
    out = []
    for c in cells:
        out.append({
            "j_tuple": list(c.j_tuple),
            "i_tuple": list(c.i_tuple),
            "k": c.k,
            "basis": c.basis.e.tolist(),
            "order": list(c.basis.order),
            "lipschitz": [x if np.isfinite(x) else None
                          for x in c.lipschitz],
            "rectangle": c.rectangle.tolist(),
            "rho": c.rho.tolist(),
            "volume": c.volume(),
        })
    return out
