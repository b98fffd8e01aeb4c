"""Maximum-volume inscribed ellipsoids and the factor-d outer containment.

For a bounded polytope P = {x : <v_i, x> >= p_i} the maximum-volume inscribed
ellipsoid E = {c + B u : |u| <= 1} (B symmetric PSD) solves

    maximize log det B   subject to   |B v_i| <= <v_i, c> - p_i  for all i,

a convex program.  The classical containment then gives

    E  subset  P  subset  c + d (E - c),

so every vertex w of P satisfies |B^{-1}(w - c)| <= d, and the half-width of
P from c along each principal axis is at most d times the corresponding
semi-axis.  Those two consequences are what the partition construction
consumes, and verify_* routines below check them directly on instances.

The d-dimensional solve uses cvxpy; 1-dimensional instances are analytic.
"""

from __future__ import annotations

import math

import cvxpy as cp
import numpy as np

from . import geometry as geo
from .errors import DegenerateInputError, SolverFailureError

# Acceptable relative slack when checking ellipsoid/polytope containments.
CONTAINMENT_TOL = 1e-6

_SOLVERS = ("CLARABEL", "SCS")

# High-accuracy settings: the factor-d containment check downstream runs at
# 1e-7, so the conic solve must land well inside that.
_SOLVER_OPTS = {
    "CLARABEL": {"tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12,
                 "tol_feas": 1e-12},
    "SCS": {"eps": 1e-11, "max_iters": 200_000},
}


class JohnEllipsoid:
    """Inscribed ellipsoid {center + B u : |u| <= 1}.

    Attributes:
        center: (d,) array.
        radii: (d,) semi-axis lengths, sorted descending.
        axes: (d, d) orthonormal rows, axes[a] is the direction of radii[a].
    """

    def __init__(self, center, radii, axes):
        self.center = np.asarray(center, dtype=float)
        self.radii = np.asarray(radii, dtype=float)
        self.axes = np.asarray(axes, dtype=float)
        self.dim = self.center.size

    @property
    def matrix(self):
        """The shape matrix B = axes.T @ diag(radii) @ axes."""
        return self.axes.T @ (self.radii[:, None] * self.axes)

    def gauge(self, x):
        """|B^{-1}(x - center)|: <= 1 inside E, vectorized over rows."""
        x = np.asarray(x, dtype=float)
        diff = np.atleast_2d(x) - self.center
        z = (diff @ self.axes.T) / self.radii
        out = np.linalg.norm(z, axis=1)
        return float(out[0]) if x.ndim == 1 else out

    def volume(self):
        d = self.dim
        unit_ball = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        return unit_ball * float(np.prod(self.radii))

    def __repr__(self):
        return f"JohnEllipsoid(dim={self.dim}, radii={self.radii})"


def _vech(b):
    return b[np.triu_indices(b.shape[0])]


def _unvech(v, d):
    b = np.zeros((d, d))
    b[np.triu_indices(d)] = v
    return b + np.triu(b, 1).T


def _kkt_polish(normals, offsets, c0, b0, iters=8):
    """Newton refinement of the inscribed-ellipsoid KKT system.

    The stationarity conditions at the optimum (active facets A, contact
    directions u_i = B v_i / |B v_i|) are

        |B v_i| = <v_i, c> - p_i          (i in A)
        B^{-1}  = sum_i lam_i (v_i u_i^T + u_i v_i^T) / 2
        sum_i lam_i v_i = 0,

    a square system in (vech(B), c, lam).  Newton iteration from the conic
    solve's answer reaches machine precision; the result is accepted only if
    it is feasible, has nonnegative multipliers and does not decrease
    log det B.  Returns (c, B) or None when any guard fails.
    """
    d = len(c0)
    slack0 = normals @ c0 - offsets
    gauge0 = np.linalg.norm(b0 @ normals.T, axis=0)
    active = np.nonzero(gauge0 >= (1.0 - 1e-5) * slack0)[0]
    if len(active) < d + 1:
        return None
    va = normals[active]
    pa = offsets[active]
    ma = len(active)
    nb = d * (d + 1) // 2

    def residual(z):
        b = _unvech(z[:nb], d)
        c = z[nb:nb + d]
        lam = z[nb + d:]
        bv = (b @ va.T).T
        norms = np.linalg.norm(bv, axis=1)
        if np.any(norms < 1e-300):
            return None
        try:
            binv = np.linalg.inv(b)
        except np.linalg.LinAlgError:
            return None
        u = bv / norms[:, None]
        s = np.zeros((d, d))
        for i in range(ma):
            s += lam[i] * 0.5 * (np.outer(va[i], u[i]) + np.outer(u[i], va[i]))
        return np.concatenate([norms - (va @ c - pa),
                               _vech(binv - s),
                               va.T @ lam])

    u0 = (b0 @ va.T).T
    u0 = u0 / np.linalg.norm(u0, axis=1, keepdims=True)
    cols = [_vech(0.5 * (np.outer(va[i], u0[i]) + np.outer(u0[i], va[i])))
            for i in range(ma)]
    a0 = np.vstack([np.array(cols).T, va.T])
    rhs0 = np.concatenate([_vech(np.linalg.inv(b0)), np.zeros(d)])
    lam0, *_ = np.linalg.lstsq(a0, rhs0, rcond=None)

    z = np.concatenate([_vech(b0), c0, lam0])
    n = len(z)
    h = 1e-7
    for _ in range(iters):
        f = residual(z)
        if f is None:
            return None
        if np.linalg.norm(f) < 1e-13:
            break
        jac = np.zeros((len(f), n))
        for k in range(n):
            zp = z.copy()
            zp[k] += h
            zm = z.copy()
            zm[k] -= h
            fp = residual(zp)
            fm = residual(zm)
            if fp is None or fm is None:
                return None
            jac[:, k] = (fp - fm) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        z = z + step

    b = _unvech(z[:nb], d)
    c = z[nb:nb + d]
    lam = z[nb + d:]
    if np.any(lam < -1e-8):
        return None
    slack = normals @ c - offsets
    if np.any(slack <= 0):
        return None
    if np.max(np.linalg.norm(b @ normals.T, axis=0) - slack) > 1e-9:
        return None
    sign, logdet = np.linalg.slogdet(b)
    sign0, logdet0 = np.linalg.slogdet(b0)
    if sign <= 0 or (sign0 > 0 and logdet < logdet0 - 1e-9):
        return None
    return c, b


def _solve_logdet(normals, offsets):
    """One log-det maximization pass.  Returns (center, shape matrix)."""
    import warnings

    d = normals.shape[1]
    b_var = cp.Variable((d, d), PSD=True)
    c_var = cp.Variable(d)
    constraints = [
        cp.norm(b_var @ normals[i]) <= normals[i] @ c_var - offsets[i]
        for i in range(len(offsets))
    ]
    problem = cp.Problem(cp.Maximize(cp.log_det(b_var)), constraints)
    for solver in _SOLVERS:
        if solver not in cp.installed_solvers():
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                problem.solve(solver=solver, **_SOLVER_OPTS[solver])
        except cp.error.SolverError:
            continue
        if problem.status in ("optimal", "optimal_inaccurate") and \
                b_var.value is not None:
            b = np.asarray(b_var.value, dtype=float)
            return np.asarray(c_var.value, dtype=float), 0.5 * (b + b.T)
    raise SolverFailureError(
        f"inscribed-ellipsoid solve failed (status {problem.status})")


def _eigendecompose(b):
    """Sorted (descending) eigen pairs of a symmetric PSD matrix with a
    deterministic sign convention on the eigenvectors."""
    b = 0.5 * (b + b.T)
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(-vals)
    vals = vals[order]
    rows = vecs.T[order]
    for i, row in enumerate(rows):
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            rows[i] = -row
    return vals, rows


def john_ellipsoid(p: geo.Polytope) -> JohnEllipsoid:
    """Maximum-volume inscribed ellipsoid of a bounded polytope.

    The returned ellipsoid is post-scaled (never enlarged) so that the
    inscription constraints hold with a small numerical margin regardless of
    solver slack.

    Raises:
        SolverFailureError: no installed conic solver produced a solution.
        DegenerateInputError: the polytope has empty interior.
    """
    d = p.dim
    if d == 1:
        v = np.sort(p.vertices().ravel())
        lo, hi = float(v[0]), float(v[-1])
        if hi - lo <= 0:
            raise DegenerateInputError("interval of zero length")
        return JohnEllipsoid(np.array([0.5 * (lo + hi)]),
                             np.array([0.5 * (hi - lo)]),
                             np.eye(1))

    # Stage 1 finds the ellipsoid; stage 2 re-solves in coordinates where
    # stage 1's ellipsoid is the unit ball.  The second solve is then
    # perfectly conditioned, which is what pushes the containment residuals
    # below the 1e-7 verification tolerance even for thin inputs.
    c1, b1 = _solve_logdet(p.normals, p.offsets)
    n2 = p.normals @ b1
    o2 = p.offsets - p.normals @ c1
    rn = np.linalg.norm(n2, axis=1)
    if np.any(rn < 1e-300):
        raise SolverFailureError("inscribed ellipsoid collapsed to zero")
    c2, b2 = _solve_logdet(n2 / rn[:, None], o2 / rn)
    center = c1 + b1 @ c2
    a = b1 @ b2
    # a need not be symmetric; the ellipsoid {a u : |u| <= 1} has shape
    # matrix (a a^T)^{1/2}.
    vals, vecs = np.linalg.eigh(a @ a.T)
    b = vecs @ (np.sqrt(np.maximum(vals, 0.0))[:, None] * vecs.T)

    polished = _kkt_polish(p.normals, p.offsets, center, b)
    if polished is not None:
        center, b = polished

    # Shrink so that |B v_i| <= <v_i, c> - p_i holds exactly (up to roundoff).
    slack = p.normals @ center - p.offsets
    norms = np.linalg.norm(b @ p.normals.T, axis=0)
    if np.any(slack <= 0):
        raise SolverFailureError("inscribed-ellipsoid center left the polytope")
    with np.errstate(divide="ignore"):
        ratios = np.where(norms > 0, slack / np.maximum(norms, 1e-300), np.inf)
    scale = min(1.0, float(np.min(ratios)))
    if scale <= 0:
        raise SolverFailureError("inscribed ellipsoid collapsed to zero")
    radii, axes = _eigendecompose(scale * b)
    if radii[-1] <= 0:
        raise DegenerateInputError("polytope has empty interior")
    return JohnEllipsoid(center, radii, axes)


def face_john(p: geo.Polytope, face: geo.Face):
    """Inscribed ellipsoid of a face, together with its ambient center.

    The ellipsoid lives in the face's tangent coordinates.  Vertices (k = d)
    have no ellipsoid; the ambient center is the vertex itself.

    Returns:
        (ambient_center, ellipsoid_or_None)
    """
    if face.k == p.dim:
        return face.affine_point.copy(), None
    fp = geo.face_polytope(p, face)
    ell = john_ellipsoid(fp)
    ambient = face.affine_point + face.tangent_basis.T @ ell.center
    return ambient, ell


def outer_ratio(p: geo.Polytope, ell: JohnEllipsoid) -> float:
    """max_w |B^{-1}(w - c)| over vertices w of P: the outer containment
    factor.  At most d for the true maximal ellipsoid."""
    return float(np.max(ell.gauge(p.vertices())))


def inner_violation(p: geo.Polytope, ell: JohnEllipsoid) -> float:
    """max_i (|B v_i| - (<v_i, c> - p_i)): positive means E is not inscribed."""
    norms = np.linalg.norm(ell.matrix @ p.normals.T, axis=0)
    slack = p.normals @ ell.center - p.offsets
    return float(np.max(norms - slack))


def axis_halfwidths(p: geo.Polytope, ell: JohnEllipsoid):
    """One-sided reach of P from the ellipsoid center along each principal
    axis: rho_a = max(h(P, u_a) - <u_a, c>, h(P, -u_a) + <u_a, c>)."""
    out = np.empty(ell.dim)
    for a in range(ell.dim):
        u = ell.axes[a]
        plus = geo.support(p, u) - float(u @ ell.center)
        minus = geo.support(p, -u) + float(u @ ell.center)
        out[a] = max(plus, minus)
    return out


def verify_john(p: geo.Polytope, ell: JohnEllipsoid | None = None,
                tol: float = CONTAINMENT_TOL) -> dict:
    """Check the two containments and the axis half-width bound on P.

    Returns a report dict with keys:
        inner_violation: max facet violation of E subset P (<= tol required)
        outer_ratio: max vertex gauge (<= d + tol required)
        axis_ratio: max_a rho_a / radius_a (<= d + tol required)
        ok: all three checks passed
    """
    if ell is None:
        ell = john_ellipsoid(p)
    d = p.dim
    inner = inner_violation(p, ell)
    outer = outer_ratio(p, ell)
    rho = axis_halfwidths(p, ell)
    axis_ratio = float(np.max(rho / ell.radii))
    ok = (inner <= tol) and (outer <= d + tol) and (axis_ratio <= d + tol)
    return {
        "dim": d,
        "inner_violation": inner,
        "outer_ratio": outer,
        "axis_ratio": axis_ratio,
        "ok": bool(ok),
    }


def verify_john_all_faces(p: geo.Polytope, tol: float = CONTAINMENT_TOL):
    """Run verify_john on P and on every face of dimension >= 1.

    Returns a list of (codim, j_tuple, report) triples, one per face checked.
    """
    results = [(0, (), verify_john(p, tol=tol))]
    for k in range(1, p.dim):
        for face in geo.enumerate_faces(p, k):
            fp = geo.face_polytope(p, face)
            results.append((k, face.j_tuple, verify_john(fp, tol=tol)))
    return results
