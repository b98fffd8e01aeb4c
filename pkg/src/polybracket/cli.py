"""Command-line front end and file interfaces.

Subcommands operate on polytope JSON files (the geometry module's format)
and, for entropy sweeps, a TOML run configuration.  Exit codes: 0 on
success, 1 on validation errors (bad flags, missing or malformed files),
2 when a self-check catches an internal invariant violation.

Numeric values in human-readable output are printed with 17 significant
digits so they round-trip to the exact binary float.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from . import brackets as brk
from . import entropy as ent
from . import geometry as geo
from . import partition as part
from . import schedule as sched
from .errors import (ConstructionBugError, DomainError, PolybracketError,
                     SolverFailureError)


def _g17(x) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# Run configuration

# (config section, key) -> RunConfig field
_FIELD_FOR = {
    ("run", "polytope"): "polytope_path",
    ("run", "B"): "b",
    ("run", "p"): "p",
    ("run", "mode"): "mode",
    ("run", "seed"): "seed",
    ("run", "n_samples"): "n_samples",
    ("run", "out"): "output_dir",
    ("run", "label"): "label",
    ("run", "u_mode"): "u_mode",
    ("eps", "min"): "eps_min",
    ("eps", "max"): "eps_max",
    ("eps", "steps"): "eps_steps",
    ("sampler", "n_pieces"): "n_pieces",
    ("sampler", "slope_scale"): "slope_scale",
    ("counting", "max_nodes"): "max_nodes",
    ("counting", "n_probes"): "n_probes",
    ("counting", "n_batches"): "n_batches",
    ("parallel", "workers"): "workers",
}

_SECTION_KEYS: dict = {}
for _sec, _key in _FIELD_FOR:
    _SECTION_KEYS.setdefault(_sec, set()).add(_key)

_FLOAT_FIELDS = ("b", "p", "eps_min", "eps_max", "slope_scale")
_INT_FIELDS = ("eps_steps", "seed", "n_samples", "n_pieces", "max_nodes",
               "n_probes", "n_batches", "workers")


@dataclass(frozen=True)
class RunConfig:
    """Everything an entropy run needs, resolvable from file and flags.

    The eps sweep is geometric from eps_max down to eps_min with eps_steps
    points.  workers=0 requests machine parallelism.
    """

    polytope_path: str
    b: float = 1.0
    p: float = 2.0
    eps_min: float = 0.03125
    eps_max: float = 0.25
    eps_steps: int = 4
    mode: str = "empirical"
    seed: int = 0
    n_samples: int = 1000
    output_dir: str = "runs/entropy"
    n_pieces: int = 4
    slope_scale: float = 0.5
    u_mode: str = "empirical"
    max_nodes: int = 2048
    n_probes: int = 256
    n_batches: int = 20
    workers: int = 0
    label: str = "run"

    def __post_init__(self):
        for name in _FLOAT_FIELDS:
            object.__setattr__(self, name, _coerce(name, getattr(self, name),
                                                   float))
        for name in _INT_FIELDS:
            object.__setattr__(self, name, _coerce(name, getattr(self, name),
                                                   int))
        if not self.polytope_path:
            raise DomainError("a polytope file is required (--polytope or "
                              "the run.polytope config key)")
        if not os.path.exists(self.polytope_path):
            raise DomainError(
                f"polytope file not found: {self.polytope_path}")
        if not 0 < self.eps_min < self.eps_max:
            raise DomainError("need 0 < eps_min < eps_max")
        if self.eps_steps < 2:
            raise DomainError("eps sweep needs at least 2 steps")
        if self.mode not in ("theoretical", "empirical"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.workers < 0:
            raise DomainError("workers must be >= 0")

    def eps_list(self) -> tuple:
        return tuple(float(e) for e in
                     np.geomspace(self.eps_max, self.eps_min,
                                  self.eps_steps))

    def experiment(self) -> ent.ExperimentConfig:
        dom = _load_polytope(self.polytope_path)
        workers = self.workers or (os.cpu_count() or 1)
        return ent.ExperimentConfig(
            domain=dom, eps_list=self.eps_list(), b=self.b, p=self.p,
            mode=self.mode, seed=self.seed, n_samples=self.n_samples,
            n_pieces=self.n_pieces, slope_scale=self.slope_scale,
            u_mode=self.u_mode, max_nodes=self.max_nodes,
            n_probes=self.n_probes, n_batches=self.n_batches,
            n_workers=min(workers, self.eps_steps), label=self.label)


def _coerce(name, value, kind):
    if isinstance(value, bool):
        raise DomainError(f"config value {name} must be a number")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise DomainError(f"config value {name}={value!r} is not "
                          f"a valid {kind.__name__}") from None


def load_run_config(path, overrides=None) -> RunConfig:
    """Parse a TOML run config; explicit flag overrides win over the file.

    Relative polytope and output paths are resolved against the config
    file's directory, so a run directory can be relocated as a unit.
    """
    if not os.path.exists(path):
        raise DomainError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DomainError(f"bad config file {path}: {exc}") from None
    kw = {}
    for section, table in doc.items():
        known = _SECTION_KEYS.get(section)
        if known is None:
            raise DomainError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise DomainError(f"config section [{section}] must be a table")
        for key, val in table.items():
            if key not in known:
                raise DomainError(
                    f"unknown key {key!r} in config section [{section}]")
            kw[_FIELD_FOR[section, key]] = val
    base = os.path.dirname(os.path.abspath(path))
    for pathkey in ("polytope_path", "output_dir"):
        if pathkey in kw and not os.path.isabs(kw[pathkey]):
            kw[pathkey] = os.path.join(base, kw[pathkey])
    kw.update(overrides or {})
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# Subcommands


def _load_polytope(path) -> geo.Polytope:
    if not path:
        raise DomainError("a polytope file is required (--polytope)")
    if not os.path.exists(path):
        raise DomainError(f"polytope file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        return geo.from_json(text)
    except (KeyError, ValueError) as exc:
        raise DomainError(f"bad polytope file {path}: {exc}") from None


def _py(value):
    """Recursively strip numpy scalar types for json.dumps."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _py(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    return value


def _emit(ns, doc, human) -> None:
    """One JSON document with --json, plain key: value lines otherwise."""
    if ns.json:
        print(json.dumps(_py(doc), sort_keys=True, indent=1))
    else:
        for line in human:
            print(line)


def _cmd_check(ns) -> int:
    p = _load_polytope(ns.polytope)
    simple, violations = geo.check_simple(p)
    doc = {"simple": simple, "dim": p.dim, "n_facets": p.n_facets,
           "violations": [{"j_tuple": [int(j) for j in jt], "n_tight": n}
                          for jt, n in violations]}
    human = [f"simple: {str(simple).lower()}"]
    human += [f"  face {tuple(jt)}: {n} tight facets"
              for jt, n in violations]
    _emit(ns, doc, human)
    return 0


def _cmd_faces(ns) -> int:
    p = _load_polytope(ns.polytope)
    by_k = {k: [[int(j) for j in f.j_tuple]
                for f in geo.enumerate_faces(p, k)]
            for k in range(1, p.dim + 1)}
    doc = {"dim": p.dim, "n_facets": p.n_facets,
           "faces": {str(k): v for k, v in by_k.items()}}
    human = [f"dim: {p.dim}", f"facets: {p.n_facets}"]
    for k, tuples in by_k.items():
        human.append(f"k={k} ({len(tuples)} faces): "
                     + " ".join(str(tuple(jt)) for jt in tuples))
    _emit(ns, doc, human)
    return 0


def _cmd_constants(ns) -> int:
    p = _load_polytope(ns.polytope)
    rep = sched.constants_report(p, ns.p)
    human = [f"p: {_g17(rep['p'])}",
             f"u_theoretical: {_g17(rep['u_theoretical'])}",
             f"u_empirical: {_g17(rep['u_empirical'])}",
             f"cap_log2: {_g17(rep['cap_log2'])}"]
    for row in rep["faces"]:
        human.append(f"  k={row['k']} j={tuple(row['j_tuple'])}"
                     f" L_k1={_g17(row['L_k1'])}"
                     f" L_k2={_g17(row['L_k2'])}"
                     f" L_j3={_g17(row['L_j3'])}")
    _emit(ns, rep, human)
    return 0


def _cmd_partition(ns) -> int:
    p = _load_polytope(ns.polytope)
    u = sched.compute_u(p, ns.p, ns.mode)
    schedules = {k: sched.build_schedule(ns.eps_min, ns.p, u, k)
                 for k in range(1, p.dim + 1)}
    cells = part.build_cells(p, schedules, b=ns.B)
    n = ns.samples if ns.samples is not None else 100_000
    audit = part.partition_audit(p, cells, n=n, seed=ns.seed)
    doc = {"n_cells": len(cells), "eps": ns.eps_min, "u": u,
           "audit": {k: v for k, v in audit.items()
                     if k != "miss_examples"},
           "miss_points": [[float(c) for c in pt]
                           for pt, _ in audit["miss_examples"]]}
    human = [f"cells: {len(cells)}",
             f"u ({ns.mode}): {_g17(u)}",
             f"audit points: {audit['n']}",
             f"misses: {audit['misses']}",
             f"volume: {_g17(audit['vol_sum'])} vs "
             f"{_g17(audit['vol_domain'])} "
             f"(rel err {_g17(audit['vol_rel_err'])})",
             f"audit: {'ok' if audit['ok'] else 'FAIL'}"]
    _emit(ns, doc, human)
    if not audit["ok"]:
        raise ConstructionBugError(
            f"partition audit failed: {audit['misses']} misclassified "
            f"points, volume rel err {_g17(audit['vol_rel_err'])}")
    return 0


def _cmd_brackets(ns) -> int:
    p = _load_polytope(ns.polytope)
    gf = brk.build_global_family(p, ns.B, ns.eps_min, ns.p, u_mode=ns.mode)
    man = brk.global_manifest(gf)
    man["u"] = gf.u
    man["eps"] = gf.eps
    out_path = None
    if ns.out:
        os.makedirs(ns.out, exist_ok=True)
        out_path = os.path.join(ns.out, "global_manifest.json")
        with open(out_path, "w", newline="") as fh:
            fh.write(json.dumps(man, sort_keys=True, indent=1) + "\n")
    doc = {"n_cells": man["n_cells"], "n_trivial": man["n_trivial"],
           "size_bound": man["size_bound"],
           "log_count_bound": man["log_count_bound"],
           "manifest_path": out_path}
    human = [f"cells: {man['n_cells']} ({man['n_trivial']} trivial)",
             f"size_bound: {_g17(man['size_bound'])}",
             "log_count_bound: " + ("n/a" if man["log_count_bound"] is None
                                    else _g17(man["log_count_bound"]))]
    if out_path:
        human.append(f"manifest: {out_path}")
    _emit(ns, doc, human)
    return 0


def _resolve_run_config(ns) -> RunConfig:
    overrides = {}
    for flag, fieldname in (("polytope", "polytope_path"), ("B", "b"),
                            ("p", "p"), ("eps_min", "eps_min"),
                            ("eps_max", "eps_max"),
                            ("eps_steps", "eps_steps"),
                            ("samples", "n_samples"), ("seed", "seed"),
                            ("mode", "mode"), ("out", "output_dir"),
                            ("workers", "workers")):
        val = getattr(ns, flag, None)
        if val is not None:
            overrides[fieldname] = val
    if ns.config:
        return load_run_config(ns.config, overrides)
    if "polytope_path" not in overrides:
        raise DomainError("entropy needs --config or --polytope")
    return RunConfig(**overrides)


def _cmd_entropy(ns) -> int:
    cfg = _resolve_run_config(ns)
    report = ent.run_experiment(cfg.experiment())
    paths = ent.write_report(report, cfg.output_dir)
    fit = report.fit
    doc = {"mode": report.mode, "slope": fit.slope,
           "ci": None if fit.ci is None else list(fit.ci),
           "eps_list": list(report.eps_list),
           "distinct": None if report.distinct is None
           else [int(c) for c in report.distinct],
           "paths": dict(paths)}
    human = [f"mode: {report.mode}",
             "eps: " + " ".join(_g17(e) for e in report.eps_list)]
    if report.distinct is not None:
        human.append("distinct: "
                     + " ".join(str(int(c)) for c in report.distinct))
    line = f"slope: {_g17(fit.slope)}"
    if fit.ci is not None:
        line += f"  ci: [{_g17(fit.ci[0])}, {_g17(fit.ci[1])}]"
    human.append(line)
    human += [f"wrote {paths[k]}"
              for k in ("report.csv", "report.json", "timing.json")]
    _emit(ns, doc, human)
    return 0


def _cmd_verify(ns) -> int:
    """Rebuild the construction at one eps and re-run its self-checks."""
    p = _load_polytope(ns.polytope)
    simple, violations = geo.check_simple(p)
    if not simple:
        raise DomainError(f"domain is not simple: {violations[:3]}")
    lines, failures = [], []

    gf = brk.build_global_family(p, ns.B, ns.eps_min, ns.p, u_mode=ns.mode,
                                 audit_n=4096, audit_seed=ns.seed)
    lines.append(f"construction: ok ({gf.n_cells} cells, "
                 f"point audit passed)")

    n_aud = ns.samples if ns.samples is not None else 200_000
    audit = part.partition_audit(p, gf.cells, n=n_aud, seed=ns.seed)
    msg = (f"partition audit ({audit['n']} points): "
           f"{audit['misses']} misses, volume rel err "
           f"{_g17(audit['vol_rel_err'])}")
    (lines if audit["ok"] else failures).append(
        msg if audit["ok"] else msg + " exceeds tolerance")

    tc = brk.theoretical_count(p, ns.B, ns.eps_min, ns.p, u=gf.u)
    rel = (abs(tc["size_certificate"] - tc["size_certificate_percell"])
           / tc["size_certificate"])
    msg = f"size certificate recompute: rel err {_g17(rel)}"
    (lines if rel <= 1e-6 else failures).append(msg)

    # A single affine piece with slope s varies by at most s*diam over the
    # domain, so cap the scale to keep calibrated draws inside [-B, B].
    diam, _ = geo.max_width(p)
    scale = min(0.5, 0.5 * ns.B / diam)
    n_cov = 500
    try:
        distinct, coverage = ent.empirical_count(
            p, ns.B, ns.p, ns.eps_min, n_cov, ns.seed, family=gf,
            slope_scale=scale)
        lines.append(f"coverage ({n_cov} draws): {_g17(coverage)} "
                     f"({distinct} distinct keys)")
    except ConstructionBugError as exc:
        failures.append(f"coverage: {exc}")

    ok = not failures
    doc = {"ok": ok, "checks": lines, "failures": failures}
    human = ([f"ok {line}" for line in lines]
             + [f"FAIL {line}" for line in failures]
             + [f"verify: {'ok' if ok else 'FAIL'}"])
    _emit(ns, doc, human)
    if not ok:
        raise ConstructionBugError("; ".join(failures))
    return 0


def _cmd_report(ns) -> int:
    path = ns.out
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    if not os.path.exists(path):
        raise DomainError(f"no report found at {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"bad report file {path}: {exc}") from None
    if ns.json:
        print(json.dumps(doc, sort_keys=True, indent=1))
        return 0
    eps = doc.get("eps_list") or []
    distinct = doc.get("distinct")
    enumerated = doc.get("enumerated")
    coverage = doc.get("coverage")
    log_counts = doc.get("log_counts") or []
    print(f"mode: {doc.get('mode', '?')}")
    for i, e in enumerate(eps):
        cols = [f"eps {_g17(e)}"]
        if distinct is not None:
            cols.append(f"distinct {int(distinct[i])}")
            if enumerated is not None and enumerated[i] is not None:
                cols.append(f"enumerated {int(enumerated[i])}")
            if coverage is not None:
                cols.append(f"coverage {_g17(coverage[i])}")
        elif i < len(log_counts):
            cols.append(f"log_count {_g17(log_counts[i])}")
        print("  " + ", ".join(cols))
    fit = doc.get("fit") or {}
    if "slope" in fit:
        line = f"slope: {_g17(fit['slope'])}"
        if fit.get("ci"):
            line += f"  ci: [{_g17(fit['ci'][0])}, {_g17(fit['ci'][1])}]"
        print(line)
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch


class _UsageError(Exception):
    def __init__(self, parser, message):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """argparse exits the process with code 2 on usage errors; that code is
    reserved for invariant violations here, so raise instead."""

    def error(self, message):
        raise _UsageError(self, message)


def _add_json(sp) -> None:
    sp.add_argument("--json", action="store_true",
                    help="machine-readable JSON on stdout")


def _add_polytope(sp) -> None:
    sp.add_argument("--polytope", metavar="FILE", required=True,
                    help="polytope JSON file")


def _add_build_flags(sp) -> None:
    sp.add_argument("--p", type=float, default=2.0,
                    help="L_p norm exponent (default 2)")
    sp.add_argument("--B", type=float, default=1.0,
                    help="uniform bound on the class (default 1)")
    sp.add_argument("--eps-min", dest="eps_min", type=float,
                    default=0.03125, help="bracket scale (default 1/32)")
    sp.add_argument("--mode", choices=("empirical", "theoretical"),
                    default="empirical",
                    help="route for the corner constant u")
    sp.add_argument("--seed", type=int, default=0, help="RNG seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polybracket",
                     description="Bracketing families for bounded convex "
                                 "functions on polytopes.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                required=True)

    sp = sub.add_parser("check", help="report whether a polytope is simple")
    _add_polytope(sp)
    _add_json(sp)
    sp.set_defaults(func=_cmd_check)

    sp = sub.add_parser("faces", help="enumerate faces by codimension")
    _add_polytope(sp)
    _add_json(sp)
    sp.set_defaults(func=_cmd_faces)

    sp = sub.add_parser("constants",
                        help="per-face L constants and the corner scale u")
    _add_polytope(sp)
    sp.add_argument("--p", type=float, default=2.0,
                    help="L_p norm exponent (default 2)")
    _add_json(sp)
    sp.set_defaults(func=_cmd_constants)

    sp = sub.add_parser("partition",
                        help="build the band partition and audit it")
    _add_polytope(sp)
    _add_build_flags(sp)
    sp.add_argument("--samples", type=int, default=None,
                    help="audit points (default 100000)")
    _add_json(sp)
    sp.set_defaults(func=_cmd_partition)

    sp = sub.add_parser("brackets",
                        help="build the global family, write its manifest")
    _add_polytope(sp)
    _add_build_flags(sp)
    sp.add_argument("--out", metavar="DIR", default=None,
                    help="directory for global_manifest.json")
    _add_json(sp)
    sp.set_defaults(func=_cmd_brackets)

    sp = sub.add_parser("entropy",
                        help="run an eps sweep and write report files")
    sp.add_argument("--config", metavar="FILE", default=None,
                    help="TOML run configuration")
    sp.add_argument("--polytope", metavar="FILE", default=None,
                    help="polytope JSON file (overrides config)")
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--B", type=float, default=None)
    sp.add_argument("--eps-min", dest="eps_min", type=float, default=None)
    sp.add_argument("--eps-max", dest="eps_max", type=float, default=None)
    sp.add_argument("--eps-steps", dest="eps_steps", type=int, default=None)
    sp.add_argument("--samples", type=int, default=None,
                    help="functions sampled per eps")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--mode", choices=("empirical", "theoretical"),
                    default=None, help="count route")
    sp.add_argument("--out", metavar="DIR", default=None,
                    help="report directory")
    sp.add_argument("--workers", type=int, default=None,
                    help="parallel eps lanes (0 = machine parallelism)")
    _add_json(sp)
    sp.set_defaults(func=_cmd_entropy)

    sp = sub.add_parser("verify",
                        help="rebuild at one eps and re-run self-checks")
    _add_polytope(sp)
    _add_build_flags(sp)
    sp.add_argument("--samples", type=int, default=None,
                    help="partition audit points (default 200000)")
    _add_json(sp)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("report", help="render a written report.json")
    sp.add_argument("--out", metavar="PATH", required=True,
                    help="report directory or report.json path")
    _add_json(sp)
    sp.set_defaults(func=_cmd_report)

    return parser


def cli_dispatch(argv) -> int:
    """Parse argv (without the program name) and run one subcommand.

    Returns the exit code: 0 success, 1 validation error, 2 internal
    invariant violation.
    """
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(exc.parser.format_usage())
        sys.stderr.write(f"{exc.parser.prog}: error: {exc}\n")
        return 1
    except SystemExit as exc:        # --help prints and exits
        return 0 if exc.code in (None, 0) else 1
    try:
        return ns.func(ns)
    except (ConstructionBugError, SolverFailureError) as exc:
        sys.stderr.write(f"invariant violation: {exc}\n")
        return 2
    except PolybracketError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
