"""Exact counting of quantized convex profiles.

Two counters with different reach:

* log_convex_profile_count: a dynamic program that counts integer sequences
  with non-decreasing differences (discrete convexity) and values in
  [-R, R].  This is the large-scale counter behind the d=1 rate check: with
  R = 4B/eps and ~4/eps grid steps its log-count grows like eps^{-1/2}, and
  it handles R in the hundreds in seconds.  Counts overflow float64 around
  e^700, so the DP rescales and returns the log directly.

* count_achievable_keys: the exact number of canonical keys (floor-quantized
  node-value profiles) realizable by convex Lipschitz-capped functions, via
  depth-first search with feasibility pruning.  A key is achievable iff the
  interpolation system (values in the floor cells, subgradient inequalities,
  slope caps) is feasible, so the count is exact.  On uniform 1-d grids the
  feasible (last value, last step) pairs of a prefix form a convex polygon
  that updates in closed form, so no solver is involved; general node sets
  go through one linear program per prefix.  Worst-case exponential; a work
  budget turns oversized instances into "not enumerated" (None) instead of
  hanging.

The two counters answer different questions: the DP counts the clean
combinatorial class (a profile per monotone-difference sequence), while the
achievable-key count is the exact size of the bracket family actually
needed, including profiles whose quantized differences wiggle by one level
because of the floor.  Empirical distinct-key counts are compared against
the latter.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError

# Keep the DP state below roughly this magnitude; rescale otherwise.
_RESCALE_AT = 1e280

# Strict-inequality margin for the top of a floor cell: keys are counted as
# achievable when a function exists with f(node) <= q(k+1) - this margin.
# Half-open cell [qk, q(k+1)) realized as [qk, q(k+1) - margin].  The
# margin must sit well above the LP feasibility tolerance, or keys that
# touch only the open endpoint get miscounted as achievable.
CELL_TOP_MARGIN = 1e-6
_LP_OPTS = {"primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9}


def log_convex_profile_count(n_steps: int, levels: int) -> float:
    """log of the number of integer sequences v_0..v_{n_steps} with
    v in [-levels, levels] and non-decreasing differences.

    DP state: (last difference t, current value v); a new difference
    t' >= t appends value v + t'.  The sentinel initial difference -2*levels
    admits every first step.
    """
    if n_steps < 0 or levels < 0:
        raise DomainError("n_steps and levels must be nonnegative")
    r = levels
    nv = 2 * r + 1
    nt = 4 * r + 1
    if n_steps == 0:
        return math.log(nv)
    cur = np.zeros((nt, nv))
    cur[0, :] = 1.0
    log_scale = 0.0
    for _ in range(n_steps):
        csum = np.cumsum(cur, axis=0)
        new = np.zeros_like(cur)
        for j in range(nt):
            tp = j - 2 * r
            lo = max(0, -tp)
            hi = min(nv, nv - tp)
            if lo < hi:
                new[j, lo + tp:hi + tp] = csum[j, lo:hi]
        peak = new.max()
        if peak > _RESCALE_AT:
            new /= peak
            log_scale += math.log(peak)
        cur = new
    return log_scale + math.log(cur.sum())


def profile_count_for_eps(eps: float, b: float = 1.0) -> float:
    """log-count of convex quantized profiles on [0,1] at scale eps.

    Grid pitch eps/4 (so ceil(4/eps) steps) and value quantum eps/4 (so
    integer levels up to R = round(4 b / eps)).
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps must be in (0,1), got {eps}")
    r = int(round(4.0 * b / eps))
    n_steps = int(math.ceil(4.0 / eps))
    return log_convex_profile_count(n_steps, r)


def profile_count_sweep(eps_list, b: float = 1.0):
    """log-counts for an eps sweep, as a list aligned with eps_list."""
    return [profile_count_for_eps(e, b) for e in eps_list]


# Polygon clipping keeps points this far into the infeasible side, mirroring
# the LP primal feasibility tolerance.
_CLIP_TOL = 1e-12


def _hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (counterclockwise, collinear points dropped) by the
    monotone chain; degenerate inputs yield their extreme points."""
    pts = np.unique(np.round(points, 15), axis=0)
    if pts.shape[0] <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                v = p - out[-2]
                if u[0] * v[1] - u[1] * v[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    return np.array(hull) if hull else pts[:1]


def _clip_halfplane(poly: np.ndarray, a, bound: float) -> np.ndarray:
    """Clip a convex polygon (vertex array) to {x : <a, x> <= bound}."""
    if poly.shape[0] == 0:
        return poly
    a = np.asarray(a, dtype=float)
    vals = poly @ a
    if np.all(vals <= bound + _CLIP_TOL):
        return poly
    out = []
    m = poly.shape[0]
    for i in range(m):
        p, vp = poly[i], vals[i]
        if m == 1:
            break
        r = (i + 1) % m
        q_, vq = poly[r], vals[r]
        if vp <= bound + _CLIP_TOL:
            out.append(p)
            if vq > bound + _CLIP_TOL:
                t = (bound - vp) / (vq - vp)
                out.append(p + t * (q_ - p))
        elif vq <= bound + _CLIP_TOL:
            t = (bound - vp) / (vq - vp)
            out.append(p + t * (q_ - p))
    return np.array(out) if out else np.empty((0, 2))


class _KeyEnumerator:
    """DFS over per-node key assignments with feasibility pruning.

    Uniform 1-d grids use an exact polygon state: after fixing the keys of
    a prefix, the achievable (last value, last step) pairs form a convex
    polygon, and appending a node maps it through a Minkowski sum with a
    vertical segment (step may only grow), a shear, and box clips.  General
    node sets fall back to one LP per prefix."""

    def __init__(self, nodes, q, b, gammas, budget, method="auto"):
        self.nodes = np.asarray(nodes, dtype=float)
        self.n, self.d = self.nodes.shape
        self.q = float(q)
        self.b = float(b)
        self.gammas = None if gammas is None else np.asarray(gammas, float)
        self.budget = int(budget)
        self.lp_calls = 0
        self.count = 0
        self.exhausted = False
        k_hi = math.floor(self.b / self.q + 1e-12)
        k_lo = -k_hi - 1
        # bottom cell [k_lo q, (k_lo+1) q) must intersect [-b, b]
        if (k_lo + 1) * self.q <= -self.b:
            k_lo += 1
        self.key_range = range(k_lo, k_hi + 1)
        self.uniform_1d = method != "general" and self.d == 1 and \
            self.n >= 2 and np.allclose(
                np.diff(np.diff(self.nodes.ravel())), 0.0, atol=1e-12)

    def _bounds(self, keys):
        lo = np.maximum(-self.b, self.q * np.asarray(keys, float))
        hi = np.minimum(
            self.b,
            self.q * (np.asarray(keys, float) + 1.0) - CELL_TOP_MARGIN)
        # f == b exactly is admissible in the top cell even though the
        # margin pushed hi below b
        top = self.q * (np.asarray(keys, float) + 1.0) > self.b
        hi[top] = self.b
        return lo, hi

    def _feasible_general(self, keys):
        """Subgradient-interpolation feasibility for a key prefix.

        Variables y_v, g_v; constraints y_w >= y_v + <g_v, x_w - x_v>,
        per-axis |g_v . e_a| <= Gamma_a, y_v in its floor cell.
        """
        m = len(keys)
        lo, hi = self._bounds(keys)
        if np.any(lo > hi + 1e-15):
            return False
        if m == 1:
            return True
        nvar = m + m * self.d
        a_rows = []
        b_rows = []
        for v in range(m):
            for w in range(m):
                if v == w:
                    continue
                row = np.zeros(nvar)
                row[w] = -1.0
                row[v] = 1.0
                row[m + v * self.d: m + (v + 1) * self.d] = \
                    self.nodes[w] - self.nodes[v]
                a_rows.append(row)
                b_rows.append(0.0)
        bounds = list(zip(lo, hi))
        if self.gammas is None:
            bounds += [(None, None)] * (m * self.d)
        else:
            for _ in range(m):
                bounds += [(-g, g) for g in self.gammas]
        self.lp_calls += 1
        res = linprog(np.zeros(nvar), A_ub=np.array(a_rows),
                      b_ub=np.array(b_rows), bounds=bounds, method="highs",
                      options=_LP_OPTS)
        return res.status == 0

    def _key_box(self, k):
        lo, hi = self._bounds([k])
        return float(lo[0]), float(hi[0])

    def _step_cap(self):
        # Values live in [-b, b], so |step| <= 2b even without a slope cap.
        if self.gammas is None:
            return 2.0 * self.b
        h = abs(float(self.nodes[1, 0] - self.nodes[0, 0]))
        return min(2.0 * self.b, float(self.gammas[0]) * h)

    def _init_polygon(self, box0, box1, cap):
        """Feasible (y_1, s_1) with y_i in box_i, s_1 = y_1 - y_0,
        |s_1| <= cap."""
        lo1, hi1 = box1
        poly = np.array([[lo1, -cap], [hi1, -cap], [hi1, cap], [lo1, cap]])
        poly = _clip_halfplane(poly, (1.0, -1.0), box0[1])    # y - s <= hi0
        poly = _clip_halfplane(poly, (-1.0, 1.0), -box0[0])   # y - s >= lo0
        return poly if poly.shape[0] else None

    def _advance_polygon(self, poly, box, cap):
        """Push the (value, step) polygon through one more node: the new
        step dominates the old one and stays within the cap, and the new
        value lands in the next key box."""
        smin = float(np.min(poly[:, 1]))
        if smin > cap + _CLIP_TOL:
            return None
        # Minkowski sum with the vertical segment [0, cap - smin]: the
        # convex hull of the polygon and its lifted copy.
        lifted = poly.copy()
        lifted[:, 1] += cap - smin
        grown = _hull(np.vstack([poly, lifted]))
        grown = _clip_halfplane(grown, (0.0, 1.0), cap)
        if grown.shape[0] == 0:
            return None
        grown[:, 0] += grown[:, 1]                            # shear to y+s
        grown = _clip_halfplane(grown, (1.0, 0.0), box[1])
        grown = _clip_halfplane(grown, (-1.0, 0.0), -box[0])
        grown = _clip_halfplane(grown, (0.0, -1.0), cap)      # s >= -cap
        return grown if grown.shape[0] else None

    def _run_uniform_1d(self):
        boxes = {k: self._key_box(k) for k in self.key_range}
        live_keys = [k for k in self.key_range
                     if boxes[k][0] <= boxes[k][1] + _CLIP_TOL]
        if self.n == 1:
            self.count = len(live_keys)
            return self.count
        cap = self._step_cap()
        stack = []
        for k0 in live_keys:
            for k1 in live_keys:
                self.lp_calls += 1
                poly = self._init_polygon(boxes[k0], boxes[k1], cap)
                if poly is not None:
                    stack.append((2, poly))
        while stack:
            if self.lp_calls > self.budget:
                self.exhausted = True
                return None
            depth, poly = stack.pop()
            if depth == self.n:
                self.count += 1
                continue
            for k in live_keys:
                self.lp_calls += 1
                child = self._advance_polygon(poly, boxes[k], cap)
                if child is not None:
                    stack.append((depth + 1, child))
        return self.count

    def run(self):
        if self.uniform_1d:
            return self._run_uniform_1d()
        stack = [[k] for k in reversed(self.key_range)]
        while stack:
            if self.lp_calls > self.budget:
                self.exhausted = True
                return None
            keys = stack.pop()
            if not self._feasible_general(keys):
                continue
            if len(keys) == self.n:
                self.count += 1
                continue
            for k in reversed(self.key_range):
                stack.append(keys + [k])
        return self.count


def count_achievable_keys(nodes, q: float, b: float, gammas=None,
                          budget: int = 200_000, method: str = "auto"):
    """Exact number of floor-quantization keys realizable by convex
    functions bounded by b (and Gamma-Lipschitz per axis if gammas given)
    on the given nodes.

    Args:
        nodes: (n, d) array of node coordinates (d=1 columns allowed as 1-d
            array).
        q: value quantum; keys are floor(f(node)/q).
        b: value bound.
        gammas: optional per-axis slope caps.
        budget: feasibility-work budget (polygon transitions on the uniform
            1-d fast path, LP calls otherwise); None is returned when it
            runs out ("not enumerated").
        method: "auto" picks the exact polygon recursion on uniform 1-d
            grids; "general" forces the subgradient LP, which is valid on
            any node set.

    Returns:
        int count, or None if the budget ran out.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    if q <= 0 or b <= 0:
        raise DomainError("q and b must be positive")
    if q <= 10 * CELL_TOP_MARGIN:
        raise DomainError("quantum too small for the half-open cell margin")
    if method not in ("auto", "general"):
        raise DomainError("method must be 'auto' or 'general'")
    return _KeyEnumerator(nodes, q, b, gammas, budget, method=method).run()
