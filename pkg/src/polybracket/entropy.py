"""Empirical bracketing-number estimates and growth-rate fits.

The count of brackets actually hit by sampled functions is a lower bound
on the family's bracketing number: every sampled function maps to its
canonical key, distinct keys are counted (via digests of the quantized
node values), and the count can only undershoot the family total.  Tiny
instances are enumerated exactly, so the growth rate is pinched from both
sides there; large instances report the lower bound plus the closed-form
upper bound.

Rates are fit on log log N against log(1/eps), since the claim under test
is polynomial growth of log N.
"""

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import brackets as brk
from . import geometry as geo
from . import partition as part
from . import schedule as sched
from .errors import (ConstructionBugError, DomainError,
                     InsufficientDataError, PolybracketError)
from .sampler import SamplerConfig, sample_convex_fn, sample_manifest

COVER_TOL = 1e-9

# Geometric-spacing tolerance on consecutive eps ratios.
SPACING_RTOL = 1e-6


def _rng(seed: int, lane: int, sub: int = 0) -> np.random.Generator:
    counter = np.array([0, sub, lane, 1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


# ---------------------------------------------------------------------------
# Counting plan: fixed node subsample + probe decompositions, so that both
# the key digests and the coverage checks reduce to one matrix product per
# chunk of functions.


class _CountingPlan:
    """Precomputed evaluation layout for one global family.

    Holds a seeded subsample of node points (keys are digested from the
    quantized values there; a restriction of the full key, hence distinct
    digests never overcount distinct keys) and the Kuhn-simplex
    decomposition of every coverage probe, with columns into one shared
    point matrix.
    """

    def __init__(self, gf, domain, seed: int, lane: int,
                 max_nodes: int = 2048, n_probes: int = 256):
        self.b = gf.b
        rng = _rng(seed, lane)
        probes = brk._rejection_sample(domain, n_probes, seed + 7919 * lane)
        cell_of = gf.locate(probes)
        live = [(i, fam) for i, fam in enumerate(gf.families)
                if fam is not None]
        total = sum(fam.n_nodes for _, fam in live)
        pts_blocks, q_blocks, digest_cols = [], [], []
        probe_cols = np.zeros((n_probes, domain.dim + 1), dtype=np.int64)
        probe_lam = np.zeros((n_probes, domain.dim + 1))
        probe_q = np.zeros(n_probes)
        probe_eps = np.zeros(n_probes)
        probe_live = np.zeros(n_probes, dtype=bool)
        offset = 0
        for i, fam in live:
            quota = max(1, int(round(max_nodes * fam.n_nodes / total)))
            quota = min(quota, fam.n_nodes)
            sub = np.sort(rng.choice(fam.n_nodes, size=quota, replace=False))
            mask = cell_of == i
            if np.any(mask):
                flat_p, lam_p = fam.simplex_decomposition(probes[mask])
                needed = np.unique(np.concatenate([sub, flat_p.ravel()]))
                probe_cols[mask] = offset + np.searchsorted(needed, flat_p)
                probe_lam[mask] = lam_p
                probe_q[mask] = fam.quantum
                probe_eps[mask] = fam.eps
                probe_live[mask] = True
            else:
                needed = sub
            pts_blocks.append(fam.node_points(needed))
            q_blocks.append(np.full(needed.size, fam.quantum))
            digest_cols.append(offset + np.searchsorted(needed, sub))
            offset += needed.size
        self.points = (np.vstack(pts_blocks) if pts_blocks
                       else np.zeros((0, domain.dim)))
        self.quanta = (np.concatenate(q_blocks) if q_blocks
                       else np.zeros(0))
        self.digest_cols = (np.concatenate(digest_cols) if digest_cols
                            else np.zeros(0, dtype=np.int64))
        self.probes = probes
        self.probe_cols = probe_cols
        self.probe_lam = probe_lam
        self.probe_q = probe_q
        self.probe_eps = probe_eps
        self.probe_live = probe_live
        # probes in trivial cells carry the [-b, b] bracket; a point that
        # fails to locate would be a partition defect, flagged at count time
        self.probe_lost = cell_of < 0

    def count(self, slopes, intercepts, n_batches: int, chunk: int = 256):
        """Distinct-key digests and coverage for stacked functions.

        slopes (n, m, d), intercepts (n, m).  Returns (batch key sets,
        covered bool array); batch id of function i is i % n_batches.
        """
        n = slopes.shape[0]
        batches = [set() for _ in range(n_batches)]
        covered = np.zeros(n, dtype=bool)
        if np.any(self.probe_lost):
            raise ConstructionBugError(
                f"{int(np.sum(self.probe_lost))} probe points matched no "
                "cell; the partition should cover the domain")
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            g = slopes[lo:hi]
            c = intercepts[lo:hi]
            vals = np.einsum("kd,nmd->nkm", self.points, g) + c[:, None, :]
            vals = np.clip(vals.max(axis=2), -self.b, self.b)
            keys = np.floor(vals / self.quanta[None, :]).astype(np.int64)
            sub = np.ascontiguousarray(keys[:, self.digest_cols])
            for r in range(hi - lo):
                digest = hashlib.blake2b(sub[r].tobytes(),
                                         digest_size=16).digest()
                batches[(lo + r) % n_batches].add(digest)
            covered[lo:hi] = self._covered(g, c, keys)
        return batches, covered

    def _covered(self, g, c, keys):
        fp = np.einsum("kd,nmd->nkm", self.probes, g) + c[:, None, :]
        fp = np.clip(fp.max(axis=2), -self.b, self.b)
        ok = np.ones(fp.shape, dtype=bool)
        ok[:, ~self.probe_live] = np.abs(fp[:, ~self.probe_live]) \
            <= self.b + COVER_TOL
        if np.any(self.probe_live):
            lv = self.probe_live
            node_vals = keys[:, self.probe_cols[lv]] \
                * self.probe_q[lv][None, :, None]
            mid = np.einsum("npj,pj->np", node_vals, self.probe_lam[lv])
            half = self.probe_eps[lv][None, :] / 2.0 + COVER_TOL
            ok[:, lv] = np.abs(fp[:, lv] - mid) <= half
        return ok.all(axis=1)


def _sample_function_arrays(cfg: SamplerConfig, n: int):
    """Stacked (slopes, intercepts) for samples 0..n-1 of the stream."""
    slopes = np.empty((n, cfg.n_pieces, cfg.domain.dim))
    intercepts = np.empty((n, cfg.n_pieces))
    for i in range(n):
        f = sample_convex_fn(cfg, index=i)
        slopes[i] = f.slopes
        intercepts[i] = f.intercepts
    return slopes, intercepts


def enumerated_total(family):
    """Exact key count where enumeration is feasible, else None.

    Accepts a single-cell family or a global one (product over nontrivial
    cells; trivial cells contribute one shared key).
    """
    if isinstance(family, brk.BracketFamily):
        return family.enumerated_count()
    total = 1
    for fam in family.families:
        if fam is None:
            continue
        c = fam.enumerated_count()
        if c is None:
            return None
        total *= c
    return total


def empirical_count(domain: geo.Polytope, b: float, p: float, eps: float,
                    n_samples: int, seed: int, *, family=None,
                    sampler_cfg: SamplerConfig = None,
                    slope_scale: float = 0.5, n_pieces: int = 4,
                    max_nodes: int = 2048, n_probes: int = 256,
                    n_batches: int = 20, u_mode: str = "empirical",
                    lane: int = 0, enumerate_keys: bool = False,
                    detail: bool = False):
    """Distinct canonical keys hit by n_samples seeded functions, with the
    fraction bracketed at the coverage probes.

    The count is a lower bound on the family's key count: keys are
    compared through a fixed seeded node subsample, and the sampler does
    not exhaust the class.  Coverage below 1.0 raises ConstructionBugError
    (a correctness defect, never a statistic).

    Returns (distinct_keys, coverage); with detail=True, a dict that also
    carries the per-batch key sets, the enumerated total (present when
    enumerate_keys and the instance is tiny), and wall time.
    """
    t0 = time.perf_counter()
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if family is None:
        family = brk.build_global_family(domain, b, eps, p, u_mode=u_mode)
    if sampler_cfg is None:
        sampler_cfg = SamplerConfig(seed=seed, domain=domain,
                                    n_pieces=n_pieces,
                                    slope_scale=slope_scale, b=b)
    plan = _CountingPlan(family, domain, seed, lane,
                         max_nodes=max_nodes, n_probes=n_probes)
    slopes, intercepts = _sample_function_arrays(sampler_cfg, n_samples)
    batches, covered = plan.count(slopes, intercepts, n_batches)
    coverage = float(np.mean(covered))
    if coverage < 1.0:
        bad = int(np.argmin(covered))
        raise ConstructionBugError(
            f"sample {bad} escaped its bracket ({coverage:.6f} covered): "
            "the construction must cover every class member")
    distinct = len(set().union(*batches))
    enum_total = enumerated_total(family) if enumerate_keys else None
    if not detail:
        return distinct, coverage
    return {
        "distinct": distinct,
        "coverage": coverage,
        "batches": batches,
        "enumerated": enum_total,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
        "manifest": sample_manifest(sampler_cfg, n_samples),
    }


# ---------------------------------------------------------------------------
# Rate fitting


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of log log N on log(1/eps)."""

    slope: float
    intercept: float
    residual: float
    ci: tuple = None

    def __post_init__(self):
        if not math.isfinite(self.slope):
            raise DomainError("fitted slope must be finite")


def _validate_sweep(eps_list):
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 4:
        raise InsufficientDataError(
            f"rate fit needs at least 4 eps values, got {eps.size}")
    if np.any(eps <= 0):
        raise DomainError("eps values must be positive")
    ratios = eps[1:] / eps[:-1]
    if np.any(ratios >= 1.0):
        raise DomainError("eps sweep must be strictly decreasing")
    if np.any(np.abs(ratios - ratios[0]) > SPACING_RTOL * ratios[0]):
        raise DomainError("eps sweep must be geometrically spaced")
    return eps


def _loglog(log_counts):
    y = np.asarray(log_counts, dtype=float)
    if np.any(y < math.log(2.0) - 1e-12):
        raise InsufficientDataError(
            "every count must be at least 2 for a log log fit")
    return np.log(y)


def fit_slope(eps_list, counts=None, *, log_counts=None, batches=None,
              n_boot: int = 200, seed: int = 0) -> FitResult:
    """Growth-rate estimate: regress log log N(eps) on log(1/eps).

    counts are raw key counts; pass log_counts instead when N itself
    overflows (closed-form bounds).  batches, when given, is one list of
    per-batch key sets per eps (batch ids aligned across eps: the sweep
    evaluates the same function stream at every eps); the slope is then
    re-fit on n_boot batch resamples and ci is the central 95% range.

    Raises:
        InsufficientDataError: fewer than 4 eps values, or any count < 2.
        DomainError: sweep not geometric or inputs inconsistent.
    """
    eps = _validate_sweep(eps_list)
    if (counts is None) == (log_counts is None):
        raise DomainError("pass exactly one of counts, log_counts")
    if counts is not None:
        counts = np.asarray(counts, dtype=float)
        if counts.size != eps.size:
            raise DomainError("counts and eps_list lengths differ")
        if np.any(counts < 2):
            raise InsufficientDataError(
                "every count must be at least 2 for a log log fit")
        log_counts = np.log(counts)
    x = np.log(1.0 / eps)
    y = _loglog(log_counts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    ci = None
    if batches is not None:
        if len(batches) != eps.size:
            raise DomainError("need one batch list per eps")
        n_b = len(batches[0])
        if any(len(bl) != n_b for bl in batches):
            raise DomainError("batch counts differ across eps")
        rng = _rng(seed, 0, sub=2)
        draws = rng.integers(0, n_b, size=(n_boot, n_b))
        slopes = []
        for row in draws:
            cnt = [len(set().union(*(bl[j] for j in row)))
                   for bl in batches]
            if min(cnt) < 2:
                continue
            yr = np.log(np.log(cnt))
            slopes.append(np.polyfit(x, yr, 1)[0])
        if len(slopes) < n_boot // 2:
            raise InsufficientDataError(
                "bootstrap resamples mostly degenerate; counts too small")
        ci = (float(np.percentile(slopes, 2.5)),
              float(np.percentile(slopes, 97.5)))
    return FitResult(float(slope), float(intercept), resid, ci)


# ---------------------------------------------------------------------------
# Experiment orchestration


@dataclass(frozen=True)
class ExperimentConfig:
    """One rate experiment: a domain, an eps sweep, and sampling sizes."""

    domain: geo.Polytope
    eps_list: tuple
    b: float = 1.0
    p: float = 2.0
    mode: str = "empirical"
    seed: int = 0
    n_samples: int = 1000
    n_pieces: int = 4
    slope_scale: float = 0.5
    u_mode: str = "empirical"
    max_nodes: int = 2048
    n_probes: int = 256
    n_batches: int = 20
    n_workers: int = 1
    label: str = "run"

    def __post_init__(self):
        object.__setattr__(self, "eps_list",
                           tuple(float(e) for e in self.eps_list))
        if self.mode not in ("empirical", "theoretical"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.n_samples < 1 or self.n_batches < 1 or self.n_workers < 1:
            raise DomainError("sample, batch, and worker counts must be "
                              "positive")
        if not (self.b > 0 and self.p >= 1):
            raise DomainError("need b > 0 and p >= 1")


@dataclass(frozen=True)
class EntropyReport:
    """Results of one eps sweep.

    distinct counts are lower bounds (canonical keys actually hit);
    enumerated totals appear only where exact enumeration was feasible.
    log_counts holds the fitted quantity per eps: log(distinct) in
    empirical mode, the closed-form log-count bound in theoretical mode.
    """

    eps_list: tuple
    mode: str
    log_counts: tuple
    fit: FitResult
    distinct: tuple = None
    enumerated: tuple = None
    coverage: tuple = None
    wall_ms: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.distinct is not None and any(
                c < 1 for c in self.distinct):
            raise DomainError("distinct counts must be positive")
        if self.coverage is not None and any(
                not 0.0 <= c <= 1.0 for c in self.coverage):
            raise DomainError("coverage must lie in [0, 1]")
        if not math.isfinite(self.fit.slope):
            raise DomainError("fitted slope must be finite")


def _g17(x) -> str:
    return f"{float(x):.17g}"


def report_csv(report: EntropyReport) -> str:
    """Byte-stable CSV of the sweep (timings live in the metadata file,
    so identical configs reproduce identical bytes)."""
    if report.mode == "empirical":
        lines = ["eps,distinct_keys,enumerated_total,coverage"]
        for i, eps in enumerate(report.eps_list):
            en = report.enumerated[i] if report.enumerated else None
            lines.append(",".join([
                _g17(eps),
                str(int(report.distinct[i])),
                "" if en is None else str(int(en)),
                _g17(report.coverage[i]),
            ]))
    else:
        lines = ["eps,log_count_bound,size_certificate"]
        size = report.meta.get("size_certificates")
        for i, eps in enumerate(report.eps_list):
            lines.append(",".join([
                _g17(eps),
                _g17(report.log_counts[i]),
                _g17(size[i]) if size else "",
            ]))
    return "\n".join(lines) + "\n"


def report_json(report: EntropyReport) -> str:
    """Byte-stable JSON of everything except wall-clock data."""
    fit = {"slope": report.fit.slope, "intercept": report.fit.intercept,
           "residual": report.fit.residual, "ci": report.fit.ci}
    doc = {
        "eps_list": list(report.eps_list),
        "mode": report.mode,
        "log_counts": list(report.log_counts),
        "fit": fit,
        "distinct": None if report.distinct is None
        else list(report.distinct),
        "enumerated": None if report.enumerated is None
        else list(report.enumerated),
        "coverage": None if report.coverage is None
        else list(report.coverage),
        "meta": report.meta,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def timing_json(report: EntropyReport) -> str:
    doc = {"written_unix": time.time(),
           "wall_ms": None if report.wall_ms is None
           else list(report.wall_ms)}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_report(report: EntropyReport, out_dir) -> dict:
    """Write report.csv, report.json, and timing.json; returns the paths."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, text in (("report.csv", report_csv(report)),
                       ("report.json", report_json(report)),
                       ("timing.json", timing_json(report))):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path
    return paths


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, PolybracketError):
                raise type(exc)(f"[{name}] {exc}") from exc
            return False

    return _Ctx()


def _empirical_eps(cfg, eps, lane, u, slopes, intercepts):
    t0 = time.perf_counter()
    with _stage(f"schedule eps={eps:g}"):
        schedules = {k: sched.build_schedule(eps, cfg.p, u, k)
                     for k in range(1, cfg.domain.dim + 1)}
    with _stage(f"partition eps={eps:g}"):
        cells = part.build_cells(cfg.domain, schedules, b=cfg.b)
    with _stage(f"families eps={eps:g}"):
        gf = brk.build_global_family(cfg.domain, cfg.b, eps, cfg.p, u=u,
                                     schedules=schedules, cells=cells)
    with _stage(f"counts eps={eps:g}"):
        plan = _CountingPlan(gf, cfg.domain, cfg.seed, lane,
                             max_nodes=cfg.max_nodes,
                             n_probes=cfg.n_probes)
        batches, covered = plan.count(slopes, intercepts, cfg.n_batches)
        coverage = float(np.mean(covered))
        if coverage < 1.0:
            raise ConstructionBugError(
                f"eps={eps:g}: {coverage:.6f} of samples covered; the "
                "construction must cover every class member")
        distinct = len(set().union(*batches))
    wall = (time.perf_counter() - t0) * 1e3
    return distinct, coverage, batches, wall


def run_experiment(config: ExperimentConfig) -> EntropyReport:
    """Full pipeline: constants, then per-eps partition/families/counts
    (in parallel across eps when n_workers > 1; results keyed by eps, so
    worker count never changes a reported number), then the rate fit.
    """
    dom = config.domain
    with _stage("faces"):
        simple, violations = geo.check_simple(dom)
        if not simple:
            raise DomainError(f"domain is not simple: {violations[:3]}")
        n_faces = {k: len(geo.enumerate_faces(dom, k))
                   for k in range(1, dom.dim + 1)}
    with _stage("constants"):
        u = sched.compute_u(dom, config.p, config.u_mode)
    meta = {
        "label": config.label,
        "domain": geo.to_json(dom),
        "b": config.b,
        "p": config.p,
        "u": float(u),
        "u_mode": config.u_mode,
        "seed": config.seed,
        "n_samples": config.n_samples,
        "n_pieces": config.n_pieces,
        "slope_scale": config.slope_scale,
        "n_faces": {str(k): v for k, v in n_faces.items()},
    }
    if config.mode == "theoretical":
        log_counts, sizes = [], []
        for eps in config.eps_list:
            with _stage(f"count-bound eps={eps:g}"):
                tc = brk.theoretical_count(dom, config.b, eps, config.p,
                                           u=u)
            log_counts.append(tc["log_count_bound"])
            sizes.append(tc["size_certificate"])
        meta["size_certificates"] = [float(s) for s in sizes]
        with _stage("fit"):
            fit = fit_slope(config.eps_list, log_counts=log_counts)
        return EntropyReport(eps_list=config.eps_list, mode="theoretical",
                             log_counts=tuple(float(v) for v in log_counts),
                             fit=fit, meta=meta)
    with _stage("samples"):
        scfg = SamplerConfig(seed=config.seed, domain=dom,
                             n_pieces=config.n_pieces,
                             slope_scale=config.slope_scale, b=config.b)
        slopes, intercepts = _sample_function_arrays(scfg,
                                                     config.n_samples)
        meta["sampler"] = sample_manifest(scfg, config.n_samples)
    lanes = list(enumerate(config.eps_list))
    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            results = list(pool.map(
                lambda it: _empirical_eps(config, it[1], it[0], u,
                                          slopes, intercepts), lanes))
    else:
        results = [_empirical_eps(config, eps, lane, u, slopes, intercepts)
                   for lane, eps in lanes]
    distinct = tuple(r[0] for r in results)
    coverage = tuple(r[1] for r in results)
    batches = [r[2] for r in results]
    wall = tuple(r[3] for r in results)
    with _stage("fit"):
        fit = fit_slope(config.eps_list, distinct, batches=batches,
                        seed=config.seed)
    return EntropyReport(eps_list=config.eps_list, mode="empirical",
                         log_counts=tuple(math.log(c) for c in distinct),
                         fit=fit, distinct=distinct, enumerated=None,
                         coverage=coverage, wall_ms=wall, meta=meta)
