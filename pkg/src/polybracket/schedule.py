"""Partition constants and the band schedule.

The boundary-band partition of a polytope D is controlled by one scalar u
(how far from the boundary the "interior" starts), per-face constants
L_{k,1}, L_{k,2}, L_{j,3} (how the face geometry distorts widths), and a
geometric band schedule

    delta_i = exp(p ((p+1)/(p+2))^(i-1) log eps),   i = 1..A,

with delta_0 = 0, delta_{A+1} = u, delta_{A+2} = infinity, where A is the
largest index with delta_A < u.  Each band [delta_i, delta_{i+1}) gets a
per-band bracket budget a_i and a normalized width ratio zeta_i; the whole
construction is engineered so that sum_i zeta_i^gamma stays bounded by
2 u^{gamma/(2(p+1)^2)} whenever u is below the cap 2^{-2(p+1)^2(p+2)}.

Two u modes are supported.  The theoretical mode evaluates the exact
defining minimum (with the tiny cap), which is what the inequality checks
exercise.  The empirical mode replaces the cap by 1/4 so that the partition
driving the counting experiments has a usable interior at desk-scale eps:
the rate experiments test the exponent in eps, not the constant in u.

Values spanning hundreds of orders of magnitude are kept in log space
alongside their linear versions; the inequality checks run entirely in log
space.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from . import geometry as geo
from . import john
from .errors import AssumptionError, BoundednessError, DomainError

# Cap for the empirical u mode.
EMPIRICAL_U_CAP = 0.25

# Largest band count we are willing to build; the schedule grows only
# logarithmically in log(u)/log(eps), so hitting this indicates bad input.
_MAX_BANDS = 100_000


def theoretical_u_cap(p: float) -> float:
    """The cap 2^{-2(p+1)^2(p+2)}; underflows to 0.0 for p >= 7 (the log2
    version below stays exact)."""
    return 2.0 ** theoretical_u_cap_log2(p)


def theoretical_u_cap_log2(p: float) -> float:
    return -2.0 * (p + 1.0) ** 2 * (p + 2.0)


def f_tilde_vectors(p: geo.Polytope, face: geo.Face):
    """Dual unit vectors of the face's active normals.

    For active normals v_1..v_k (rows), f_tilde[a] is the unit vector in
    span{v_1..v_k} orthogonal to every v_g with g != a and with
    <f_tilde[a], v_a> > 0.  Solving the Gram system V V^T c = e_a and setting
    w = V^T c gives <w, v_g> = delta_{ag}, so w normalized is f_tilde[a].

    Raises:
        AssumptionError: the active normals are linearly dependent, which
            contradicts simplicity of the polytope at this face.
    """
    idx = list(face.j_tuple)
    if not idx:
        return np.zeros((0, p.dim))
    v = p.normals[idx]
    gram = v @ v.T
    try:
        coeff = np.linalg.solve(gram, np.eye(len(idx)))
    except np.linalg.LinAlgError:
        raise AssumptionError(
            f"dependent normals at face {face.j_tuple}") from None
    w = coeff @ v
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms < 1e-12):
        raise AssumptionError(f"degenerate dual vector at face {face.j_tuple}")
    return w / norms[:, None]


class LConstants:
    """Per-face distortion constants, all floored at 1."""

    def __init__(self, face, l_k1, l_k2, l_j3, f_tilde):
        self.face = face
        self.L_k1 = float(l_k1)
        self.L_k2 = float(l_k2)
        self.L_j3 = float(l_j3)
        self.f_tilde = f_tilde

    def __repr__(self):
        return (f"LConstants(j={self.face.j_tuple}, L_k1={self.L_k1:.6g}, "
                f"L_k2={self.L_k2:.6g}, L_j3={self.L_j3:.6g})")


def compute_L_constants(p: geo.Polytope, face: geo.Face,
                        complement_basis=None) -> LConstants:
    """L_{k,1}, L_{k,2}, L_{j,3} for one face.

    L_{k,2} = 1 v max over non-active facets b of
              sum_a <f_tilde_a, v_b> / <f_tilde_a, v_a>   (negative terms kept)
    L_{k,1} = 1 v max over non-active facets b of
              1 / |proj_T v_b|, T the face tangent space; b skipped when the
              projection vanishes
    L_{j,3} = 1 v max_a 1 / <f_tilde_a, v_a>

    complement_basis optionally supplies rows spanning T (any orthonormal
    basis of the tangent space gives the same projection norm); by default
    the face's own tangent_basis is used.

    Raises:
        BoundednessError: the face has tangent directions but every
            non-active normal projects to zero on them (the face would be
            unbounded, impossible for a bounded polytope).
    """
    k = face.k
    idx = set(face.j_tuple)
    rest = [j for j in range(p.n_facets) if j not in idx]
    ft = f_tilde_vectors(p, face)
    va = p.normals[list(face.j_tuple)] if k else np.zeros((0, p.dim))
    diag = np.einsum("ij,ij->i", ft, va) if k else np.zeros(0)

    if k == 0:
        return LConstants(face, 1.0, 1.0, 1.0, ft)

    l_j3 = max(1.0, float(np.max(1.0 / diag)))

    l_k2 = 1.0
    for b in rest:
        s = float(np.sum((ft @ p.normals[b]) / diag))
        l_k2 = max(l_k2, s)

    t = face.tangent_basis if complement_basis is None else complement_basis
    l_k1 = 1.0
    if t.shape[0] > 0 and rest:
        proj = np.linalg.norm(p.normals[rest] @ t.T, axis=1)
        nonzero = proj > 1e-12
        if not np.any(nonzero):
            raise BoundednessError(
                f"face {face.j_tuple}: no facet bounds its tangent space")
        l_k1 = max(1.0, float(np.max(1.0 / proj[nonzero])))

    return LConstants(face, l_k1, l_k2, l_j3, ft)


def _require_simple(p: geo.Polytope):
    ok, violations = geo.check_simple(p)
    if not ok:
        raise AssumptionError(
            f"polytope is not simple: {violations[:3]} "
            f"({len(violations)} violations)")


def compute_u(p: geo.Polytope, pnorm: float, mode: str = "empirical",
              check: bool = True) -> float:
    """The boundary-band scale u.

    theoretical: min of the cap 2^{-2(p+1)^2(p+2)} and, over faces of
        codimension 1..d-1, (minimal exit distance from the face's inscribed-
        ellipsoid center to the face's relative boundary) / L_{k,2}.  The
        minimum over ray directions inside the face equals the minimal
        perpendicular slack of the face polytope at that center.
    empirical: same face minimum but with the face's Chebyshev (inradius)
        center and the cap replaced by 1/4.

    Args:
        p: the domain polytope (must be simple).
        pnorm: the L_p exponent p >= 1.
        mode: "theoretical" or "empirical".
        check: verify simplicity first (AssumptionError if violated).
    """
    if mode not in ("theoretical", "empirical"):
        raise DomainError(f"unknown u mode {mode!r}")
    if check:
        _require_simple(p)
    if mode == "theoretical":
        best = theoretical_u_cap(pnorm)
    else:
        best = EMPIRICAL_U_CAP
    for k in range(1, p.dim):
        for face in geo.enumerate_faces(p, k):
            fp = geo.face_polytope(p, face)
            lk2 = compute_L_constants(p, face).L_k2
            if mode == "theoretical":
                ell = john.john_ellipsoid(fp)
                center = ell.center
            else:
                center, _ = fp.chebyshev()
            slack = float(np.min(fp.normals @ center - fp.offsets))
            best = min(best, slack / lk2)
    if p.dim == 1:
        # no positive-dimensional proper faces; the interval itself bounds u
        best = min(best, geo.width(p, np.array([1.0])) / 4.0)
    if best <= 0:
        raise DomainError("computed u is nonpositive; degenerate input")
    return best


def constants_report(p: geo.Polytope, pnorm: float) -> dict:
    """Per-face L constants plus both u values, JSON-ready."""
    _require_simple(p)
    faces = []
    for k in range(1, p.dim + 1):
        for face in geo.enumerate_faces(p, k):
            lc = compute_L_constants(p, face)
            faces.append({
                "k": k,
                "j_tuple": list(face.j_tuple),
                "L_k1": lc.L_k1,
                "L_k2": lc.L_k2,
                "L_j3": lc.L_j3,
            })
    return {
        "p": pnorm,
        "cap_log2": theoretical_u_cap_log2(pnorm),
        "u_theoretical": compute_u(p, pnorm, "theoretical", check=False),
        "u_empirical": compute_u(p, pnorm, "empirical", check=False),
        "faces": faces,
    }


class DeltaSchedule:
    """Band edges delta_0..delta_{A+2}, budgets a_i, and ratios zeta_i.

    Linear values are accompanied by natural-log versions (log_delta etc.)
    for inequality checks that must survive extreme magnitudes.  Conventions:
    log_delta[0] = -inf (delta_0 = 0) and log_delta[A+2] = +inf.
    """

    def __init__(self, eps, p, u, k, mode, log_delta, log_a, log_a0,
                 log_zeta):
        self.eps = float(eps)
        self.p = float(p)
        self.u = float(u)
        self.k = int(k)
        self.mode = mode
        self.A = len(log_zeta)
        self.log_delta = np.asarray(log_delta, dtype=float)
        self.log_a = np.asarray(log_a, dtype=float)
        self.log_a0 = float(log_a0)
        self.log_zeta = np.asarray(log_zeta, dtype=float)
        self.delta = np.exp(self.log_delta)
        self.a_weights = np.exp(self.log_a)
        self.a0 = math.exp(log_a0)
        self.zeta = np.exp(self.log_zeta)

    def band_count(self):
        """Number of distance bands: i = 0..A plus the interior marker."""
        return self.A + 1

    def __repr__(self):
        return (f"DeltaSchedule(eps={self.eps}, p={self.p}, u={self.u:.3g}, "
                f"k={self.k}, A={self.A})")


def build_schedule(eps: float, p: float, u: float, k: int,
                   mode: str = "empirical") -> DeltaSchedule:
    """Construct the band schedule for given (eps, p, u, k).

    delta_i follows the closed form for i = 1..A with A the largest index
    with delta_i < u; the list is then [0, delta_1..delta_A, u, inf].
    Budgets: a_i = eps^{1/k} delta_i^{-1/(p+1)} for i = 1..A and
    a_0 = eps^{1/k} delta_1'^{-1/p} where delta_1' is the next edge after 0
    (so a_0^p delta_1' = eps^{p/k} exactly).  Ratios:
    zeta_i = sqrt(eps^{1/k} delta_{i+1} / (delta_i a_i)), the i = A term
    using the overridden edge delta_{A+1} = u.

    Raises:
        DomainError: eps outside (0,1), p < 1, u outside (0,1), or k < 1.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must be in (0,1), got {eps}")
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must be in (0,1), got {u}")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")

    log_eps = math.log(eps)
    log_u = math.log(u)
    r = (p + 1.0) / (p + 2.0)

    log_deltas = []
    i = 1
    while True:
        ld = p * r ** (i - 1) * log_eps
        if ld >= log_u:
            break
        log_deltas.append(ld)
        i += 1
        if i > _MAX_BANDS:
            raise DomainError("band schedule did not terminate; "
                              "check eps and u")
    a_count = len(log_deltas)

    log_delta = np.concatenate([[-math.inf], log_deltas, [log_u], [math.inf]])

    log_a = np.array([log_eps / k - ld / (p + 1.0) for ld in log_deltas])
    log_a0 = log_eps / k - log_delta[1] / p

    log_zeta = np.array([
        0.5 * (log_eps / k + log_delta[i + 2] - log_delta[i + 1] - log_a[i])
        for i in range(a_count)
    ])

    return DeltaSchedule(eps, p, u, k, mode, log_delta, log_a, log_a0,
                         log_zeta)


def zetasum_check(s: DeltaSchedule, gamma: float):
    """Band-ratio sum bound: sum_i zeta_i^gamma <= 2 u^{gamma/(2(p+1)^2)}.

    Evaluated in log space.  Returns (lhs, rhs, ok) with linear lhs/rhs
    (0.0 when the log value underflows).
    """
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    if s.A == 0:
        rhs_log = math.log(2.0) + gamma * math.log(s.u) / (2 * (s.p + 1) ** 2)
        return 0.0, math.exp(rhs_log), True
    lhs_log = float(logsumexp(gamma * s.log_zeta))
    rhs_log = math.log(2.0) + gamma * math.log(s.u) / (2 * (s.p + 1) ** 2)
    ok = lhs_log <= rhs_log + 1e-12
    return math.exp(lhs_log), math.exp(rhs_log), bool(ok)


def au_value(s: DeltaSchedule) -> float:
    """A_u = 1 + sum_i zeta_i^2."""
    if s.A == 0:
        return 1.0
    return 1.0 + float(np.exp(logsumexp(2.0 * s.log_zeta)))


def au_check(s: DeltaSchedule):
    """A_u <= 1 + 2 u^{1/(p+1)^2}: returns (lhs, rhs, ok)."""
    lhs = au_value(s)
    rhs = 1.0 + 2.0 * math.exp(math.log(s.u) / (s.p + 1.0) ** 2)
    return lhs, rhs, bool(lhs <= rhs + 1e-12)


def size_identity(s: DeltaSchedule):
    """The budget identity sum_{i=0}^{A} a_i^p delta_{i+1} = eps^{p/k} A_u.

    Both sides are computed independently (the left from the stored a and
    delta values, the right from eps and the zeta sum) and returned as
    natural logs: (log_lhs, log_rhs).  Agreement is exact up to float
    roundoff and certifies that the per-band budgets add up to the global
    one.
    """
    terms = [s.p * s.log_a0 + s.log_delta[1]]
    for i in range(s.A):
        terms.append(s.p * s.log_a[i] + s.log_delta[i + 2])
    log_lhs = float(logsumexp(np.array(terms)))
    log_rhs = (s.p / s.k) * math.log(s.eps) + math.log(au_value(s))
    return log_lhs, log_rhs
