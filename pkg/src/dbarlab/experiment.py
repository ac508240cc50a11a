"""Experiment configs, dispatch, and run reports.

A run writes ``report.json`` (deterministic for a fixed config and seed),
CSV tables, optional SVG plots, and ``metadata.json`` holding the wall-clock
timestamp and timings, which are the only non-reproducible outputs.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .catalog import catalog_weight
from .diagnostics import (
    FORM_KINDS, ProbeConfig, TestFormGenerator, compactness_probe, eigenform_tail_bound,
    kohn_morrey_sides, refinement_ratio,
)
from .errors import ConfigurationError, OutputError
from .grid import GridSpec, WeightedMeasure, build_grid, truncation_mass
from .operators import assemble_box_laplacian
from .property_p import DomainSpec, WeightFamily, certify
from .spectral import SolverConfig, dense_oracle, lower_bound_slack, spectrum_report
from .weights import DOUBLE_STAR, STAR, WeightSpec, check_condition

log = logging.getLogger(__name__)

REPORT_SCHEMA_ID = "dbarlab.run-report/1"
KINDS = ("check-weight", "kohn-morrey", "spectrum", "tail", "probe", "property-p")
TRUNCATION_LIMIT = 1e-8
OUTPUT_ENV = "LAB_OUTPUT_ROOT"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_term = {
    "type": "object",
    "properties": {
        "a": _pos, "kind": {"enum": ["radial", "coordinate"]},
        "m": _posint, "j": {"type": "integer", "minimum": 1, "maximum": 2},
    },
    "required": ["a", "kind", "m"],
    "additionalProperties": False,
}
_weight = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "properties": {"name": {"type": "string"}, "terms": {"type": "array", "items": _term, "minItems": 1}},
            "required": ["terms"],
            "additionalProperties": False,
        },
    ]
}
_radii = {"type": "array", "items": _pos, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "n": {"enum": [1, 2]},
        "weight": _weight,
        "grid": {
            "type": "object",
            "properties": {"L": _pos, "N": {"type": "integer", "minimum": 9}},
            "required": ["L", "N"],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "k": _posint, "tol": _pos, "max_iter": _posint, "dense_fallback_dim": {"type": "integer", "minimum": 0},
                "shift": _num, "block_size": _posint, "thresholds": {"type": "array", "items": _num},
                "stiffness_cap": _pos,
            },
            "additionalProperties": False,
        },
        "condition": {
            "type": "object",
            "properties": {
                "radii": {"type": "array", "items": _pos, "minItems": 3},
                "samples_per_sphere": {"type": "integer", "minimum": 8},
                "floor": _num, "growth_floor": _num,
            },
            "additionalProperties": False,
        },
        "kohn_morrey": {
            "type": "object",
            "properties": {
                "N_list": {"type": "array", "items": {"type": "integer", "minimum": 9}, "minItems": 1},
                "forms": _posint,
                "form_kind": {"enum": list(FORM_KINDS)},
            },
            "additionalProperties": False,
        },
        "tail": {"type": "object", "properties": {"radii": _radii}, "additionalProperties": False},
        "probe": {
            "type": "object",
            "properties": {
                "radii": {"type": "array", "items": _pos, "minItems": 3},
                "tail_fractions": _radii,
                "shift_steps": {"type": "array", "items": _posint},
                "growth_floor": _num, "decay_factor": _pos,
            },
            "additionalProperties": False,
        },
        "domain": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["ball", "ellipsoid", "pball"]}, "radius": _pos,
                "semi_axes": {"type": "array", "items": _pos}, "p": _posint,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "family": {
            "type": "object",
            "properties": {"base": _weight, "mode": {"enum": ["linear", "fixed", "log"]}, "name": {"type": "string"}},
            "required": ["base"],
            "additionalProperties": False,
        },
        "M_list": {"type": "array", "items": _pos, "minItems": 1},
        "samples": {"type": "integer", "minimum": 4},
        "C_max": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "plots": {"type": "boolean"},
        "output_dir": {"type": "string"},
    },
    "required": ["n"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "property-p"}}, "required": ["kind"]},
         "then": {"required": ["domain", "family"]},
         "else": {"required": ["weight"]}},
    ],
}


def validate_config(raw: dict) -> None:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from None


def _weight_from(value, n: int) -> WeightSpec:
    if isinstance(value, str):
        spec = catalog_weight(value)
        if spec.n != n:
            raise ConfigurationError(f"catalog weight {value!r} has n={spec.n}, config has n={n}")
        return spec
    return WeightSpec.from_dict({"n": n, **value})


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict
    n: int
    seed: int = 0
    plots: bool = False
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, kind: str | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(raw)
        if kind is not None:
            if raw.get("kind", kind) != kind:
                raise ConfigurationError(f"config is for {raw['kind']!r}, not {kind!r}")
            raw["kind"] = kind
        validate_config(raw)
        if "kind" not in raw:
            raise ConfigurationError("config needs a 'kind' (or pass it on the command line)")
        cfg = cls(raw["kind"], raw, raw["n"], raw.get("seed", 0), raw.get("plots", False), raw.get("output_dir"))
        # build the typed sections once so bad values fail here, not mid-run
        if "weight" in raw:
            cfg.weight
        if cfg.kind != "property-p":
            cfg.grid
            cfg.probe if cfg.kind == "probe" else cfg.solver
        return cfg

    @classmethod
    def load(cls, path, kind: str | None = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OutputError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(raw, kind)

    def echo(self) -> dict:
        d = copy.deepcopy(self.raw)
        d["seed"] = self.seed
        d["plots"] = self.plots
        d.pop("output_dir", None)
        return d

    # typed views of the sections
    @property
    def weight(self) -> WeightSpec:
        return _weight_from(self.raw["weight"], self.n)

    @property
    def grid(self) -> GridSpec:
        g = self.raw.get("grid", {"L": 6.0 if self.n == 1 else 3.0, "N": 81 if self.n == 1 else 13})
        return build_grid(self.n, g["L"], g["N"])

    @property
    def solver(self) -> SolverConfig:
        s = dict(self.raw.get("solver", {}))
        if "thresholds" in s:
            s["thresholds"] = tuple(s["thresholds"])
        return SolverConfig(seed=self.seed, **s)

    @property
    def probe(self) -> ProbeConfig:
        p = {k: tuple(v) if isinstance(v, list) else v for k, v in self.raw.get("probe", {}).items()}
        return ProbeConfig(seed=self.seed, solver=self.solver, **p)


@dataclass
class RunReport:
    kind: str
    config: dict
    results: dict
    warnings: list[str] = field(default_factory=list)
    tables: dict[str, list[list]] = field(default_factory=dict)  # name -> header row + rows
    schema: str = REPORT_SCHEMA_ID
    metadata: dict = field(default_factory=dict)

    def warn(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)

    def to_dict(self, with_metadata: bool = True) -> dict:
        d = {
            "schema": self.schema, "kind": self.kind, "config": self.config,
            "results": self.results, "warnings": list(self.warnings), "tables": self.tables,
        }
        if with_metadata:
            d["metadata"] = self.metadata
        return d

    def to_json(self, with_metadata: bool = True) -> str:
        return json.dumps(_plain(self.to_dict(with_metadata)), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema") != REPORT_SCHEMA_ID:
            raise ConfigurationError(f"unsupported report schema {d.get('schema')!r}")
        return cls(d["kind"], d["config"], d["results"], list(d.get("warnings", [])),
                   d.get("tables", {}), d["schema"], d.get("metadata", {}))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        try:
            return cls.from_json(path.read_text())
        except OSError as exc:
            raise OutputError(f"cannot read report {path}: {exc}") from exc


def _plain(x):
    """Convert numpy scalars and tuples into JSON-native values; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # strict JSON has no inf/nan literals
        return x if np.isfinite(x) else repr(x)
    return x


# -- experiments -------------------------------------------------------------------

def _truncation_warning(report: RunReport, spec: WeightSpec, grid: GridSpec) -> float:
    mass = truncation_mass(spec, grid)
    report.results["truncation_mass"] = mass
    if mass > TRUNCATION_LIMIT:
        report.warn(f"e^-phi mass outside the box is {mass:.3g} > {TRUNCATION_LIMIT:g}; enlarge L")
    return mass


def _condition_table(verdicts) -> list[list]:
    rows = [["condition", "radius", "inf_mu", "axis_mu"]]
    for v in verdicts:
        for r, m, a in zip(v.radii, v.inf_per_radius, v.axis_mu):
            rows.append([v.condition, r, m, a])
    return rows


def _eigen_table(pairs) -> list[list]:
    return [["index", "lambda", "residual"]] + [[i, p.lam, p.residual] for i, p in enumerate(pairs)]


def _run_check_weight(cfg: ExperimentConfig, report: RunReport) -> None:
    spec = cfg.weight
    c = cfg.raw.get("condition", {})
    radii = c.get("radii", [1.0, 2.0, 4.0, 8.0])
    kw = dict(samples_per_sphere=c.get("samples_per_sphere", 64), floor=c.get("floor", 1e-6),
              growth_floor=c.get("growth_floor", 10.0), seed=cfg.seed)
    verdicts = [check_condition(spec, which, radii, **kw) for which in (STAR, DOUBLE_STAR)]
    report.results["weight"] = {"label": spec.label(), **spec.to_dict()}
    for v in verdicts:
        report.results[v.condition] = v.to_dict()
        if v.verdict == "inconclusive":
            report.warn(f"{v.condition} verdict is inconclusive on the radius ladder")
    report.tables["condition"] = _condition_table(verdicts)


def _run_kohn_morrey(cfg: ExperimentConfig, report: RunReport) -> None:
    spec = cfg.weight
    g0 = cfg.grid
    k = cfg.raw.get("kohn_morrey", {})
    N_list = k.get("N_list", [g0.N, 2 * g0.N - 1])
    gen = TestFormGenerator(cfg.seed, k.get("form_kind", "random_smooth"))
    count = k.get("forms", 20)
    grids = [build_grid(g0.n, g0.L, N) for N in N_list]
    rows = [["form", "N", "h", "lhs", "gradient", "levi", "residual", "margin"]]
    residuals = np.zeros((count, len(grids)))
    margins = np.zeros((count, len(grids)))
    for gi, g in enumerate(grids):
        for i in range(count):
            s = kohn_morrey_sides(gen.form(g, i), spec, g)
            residuals[i, gi] = abs(s["lhs"] - s["gradient"] - s["levi"])
            margins[i, gi] = s["lhs"] - s["levi"]
            rows.append([i, g.N, g.h, s["lhs"], s["gradient"], s["levi"], residuals[i, gi], margins[i, gi]])
    res = {"N_list": list(N_list), "h": [g.h for g in grids],
           "max_residual": residuals.max(axis=0).tolist(), "min_margin": margins.min(axis=0).tolist()}
    if len(grids) > 1:
        ratios = np.array([refinement_ratio(residuals[i], res["h"]) for i in range(count)])
        res["ratio_min"] = ratios.min(axis=0).tolist()
        res["ratio_max"] = ratios.max(axis=0).tolist()
    report.results["kohn_morrey"] = res
    report.tables["kohn_morrey"] = rows
    _truncation_warning(report, spec, grids[-1])


def _spectrum(cfg: ExperimentConfig, report: RunReport):
    spec, grid, scfg = cfg.weight, cfg.grid, cfg.solver
    op = assemble_box_laplacian(spec, grid)
    ms = WeightedMeasure.from_weight(spec, grid)
    rep = spectrum_report(spec, grid, op, ms, scfg)
    d = rep.to_dict()
    d["lower_bound_ok"] = bool(rep.lower_bound_margin >= -lower_bound_slack(grid.h))
    if op.shape[0] <= scfg.dense_fallback_dim:
        dense = dense_oracle(op, ms, scfg.dense_fallback_dim)[: len(rep.eigenpairs)]
        d["dense_max_rel_diff"] = float(np.max(np.abs(dense - rep.eigenvalues) / np.maximum(1.0, np.abs(dense))))
    report.results["spectrum"] = d
    report.tables["eigenvalues"] = _eigen_table(rep.eigenpairs)
    _truncation_warning(report, spec, grid)
    return rep


def _run_spectrum(cfg: ExperimentConfig, report: RunReport) -> None:
    _spectrum(cfg, report)


def _tail_rows(rows_by_R) -> list[list]:
    out = [["R", "tail", "bound", "margin", "vacuous"]]
    for r in rows_by_R:
        out.append([r["R"], r["tail"], r["bound"], r["margin"], r["vacuous"]])
    return out


def _run_tail(cfg: ExperimentConfig, report: RunReport) -> None:
    spec, grid = cfg.weight, cfg.grid
    rep = _spectrum(cfg, report)
    radii = cfg.raw.get("tail", {}).get("radii", [grid.L / 6, grid.L / 4, grid.L / 3, grid.L / 2])
    table = []
    for R in radii:
        rows = [eigenform_tail_bound(p, R, spec, grid) for p in rep.eigenpairs]
        worst = min(rows, key=lambda t: t.margin)
        table.append({"R": R, "tail": max(t.tail for t in rows), "bound": worst.bound,
                      "margin": worst.margin, "vacuous": worst.vacuous})
        if worst.vacuous:
            report.warn(f"tail bound is vacuous at R={R:g} (inf mu = 0 outside the ball)")
    report.results["tail"] = table
    report.tables["tail"] = _tail_rows(table)


def _run_probe(cfg: ExperimentConfig, report: RunReport) -> None:
    spec, grid = cfg.weight, cfg.grid
    diag = compactness_probe(spec, grid, cfg.probe)
    report.results["probe"] = diag.to_dict()
    report.results["spectrum"] = diag.spectrum.to_dict()
    report.tables["eigenvalues"] = _eigen_table(diag.spectrum.eigenpairs)
    report.tables["tail"] = _tail_rows(diag.tail_table)
    report.tables["translation"] = [["shift", "defect"]] + [[r["shift"], r["defect"]] for r in diag.translation_table]
    report.tables["condition"] = _condition_table([diag.condition])
    if diag.verdict == "inconclusive":
        report.warn("compactness probe verdict is inconclusive")
    if any(r["vacuous"] for r in diag.tail_table):
        report.warn("tail bound is vacuous on some shells (inf mu = 0 outside the ball)")
    _truncation_warning(report, spec, grid)


def _run_property_p(cfg: ExperimentConfig, report: RunReport) -> None:
    raw = cfg.raw
    d = dict(raw["domain"])
    d.setdefault("n", cfg.n)
    domain = DomainSpec.from_dict(d)
    fam = raw["family"]
    family = WeightFamily(_weight_from(fam["base"], cfg.n), fam.get("mode", "linear"), fam.get("name", ""))
    cert = certify(domain, family, raw.get("M_list", [1.0, 10.0, 100.0]), raw.get("samples", 64),
                   raw.get("C_max", 10.0))
    report.results["certificate"] = cert.to_dict()
    rows = [["M", "sample", "margin"]]
    for M, margins in zip(cert.M_values, cert.per_sample):
        rows += [[M, i, m] for i, m in enumerate(margins)]
    report.tables["margins"] = rows


_DISPATCH = {
    "check-weight": _run_check_weight,
    "kohn-morrey": _run_kohn_morrey,
    "spectrum": _run_spectrum,
    "tail": _run_tail,
    "probe": _run_probe,
    "property-p": _run_property_p,
}


def run_experiment(cfg: ExperimentConfig, output_dir=None, write: bool = True) -> RunReport:
    """Run one experiment; when ``write`` is set, emit its files under ``output_dir``."""
    report = RunReport(cfg.kind, cfg.echo(), {})
    t0 = time.perf_counter()
    _DISPATCH[cfg.kind](cfg, report)
    report.metadata = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "timings": {"total_s": time.perf_counter() - t0},
        "version": __version__,
    }
    if write:
        write_report(report, resolve_output_dir(cfg, output_dir), plots=cfg.plots)
    return report


def resolve_output_dir(cfg: ExperimentConfig, output_dir=None) -> Path:
    if output_dir is not None:
        return Path(output_dir)
    root = Path(os.environ.get(OUTPUT_ENV, "runs"))
    return root / (cfg.output_dir or cfg.kind)


def write_csv(path: Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_report(report: RunReport, out: Path, plots: bool = False) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(with_metadata=False))
        (out / "metadata.json").write_text(json.dumps(report.metadata, indent=2, sort_keys=True) + "\n")
        for name, rows in report.tables.items():
            write_csv(out / f"{name}.csv", rows)
        if plots:
            from .plots import write_plots
            write_plots(report, out)
    except OSError as exc:
        raise OutputError(f"cannot write outputs to {out}: {exc}") from exc
    return out


# -- comparison ----------------------------------------------------------------------

def _delta_rows(a: list, b: list, key: str) -> list[dict]:
    rows = []
    for i in range(max(len(a), len(b))):
        va = a[i] if i < len(a) else None
        vb = b[i] if i < len(b) else None
        delta = vb - va if va is not None and vb is not None else None
        rows.append({key: i, "a": va, "b": vb, "delta": delta})
    return rows


def _ladders(r: RunReport) -> dict[str, list]:
    res = r.results
    out = {}
    if "spectrum" in res:
        out["eigenvalues"] = list(res["spectrum"]["eigenvalues"])
    table = res.get("tail") or (res.get("probe") or {}).get("tail_table")
    if table:
        out["tail"] = [row["tail"] for row in table]
    for c in (STAR, DOUBLE_STAR):
        if c in res:
            out[f"{c}_inf_mu"] = list(res[c]["inf_per_radius"])
    if "probe" in res:
        out["double_star_inf_mu"] = list(res["probe"]["condition"]["inf_per_radius"])
    if "kohn_morrey" in res:
        out["kohn_morrey_max_residual"] = list(res["kohn_morrey"]["max_residual"])
    if "certificate" in res:
        out["margins"] = list(res["certificate"]["margins"])
        out["C_tilde"] = [float(c) for c in res["certificate"]["C_tilde"]]
    return out


def compare_runs(a: RunReport, b: RunReport) -> dict:
    """Side-by-side ladders of two reports of the same kind with deltas ``b - a``."""
    if a.kind != b.kind:
        raise ConfigurationError(f"cannot compare a {a.kind!r} run with a {b.kind!r} run")
    la, lb = _ladders(a), _ladders(b)
    tables = {k: _delta_rows(la.get(k, []), lb.get(k, []), "index") for k in sorted(set(la) | set(lb))}
    deltas = [r["delta"] for rows in tables.values() for r in rows]
    identical = all(d == 0 for d in deltas) and a.to_dict(False) == b.to_dict(False)
    verdicts = {}
    if a.kind == "probe":
        verdicts = {"a": a.results["probe"]["verdict"], "b": b.results["probe"]["verdict"]}
    return {"kind": a.kind, "tables": tables, "verdicts": verdicts, "identical": bool(identical)}
