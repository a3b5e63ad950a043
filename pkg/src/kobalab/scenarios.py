"""Scenario files, the experiment registry and deterministic report writing.

A scenario is a strict JSON object::

    {"id": "ball-visibility", "experiment": "visibility", "seed": 0,
     "domain": {"kind": "unit-ball"},
     "window": null,
     "params": {"xi": [1, 0, 0, 0], "xi2": [-1, 0, 0, 0], "eps": 0.2},
     "expect": "pass"}

Points are real-interleaved lists ``[Re z1, Im z1, Re z2, Im z2, ...]``,
as in domain documents.  Unknown fields anywhere are errors.
"""
import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import experiments as ex
from .constraints import from_real
from .domains import Window, domain_from_dict, intersect_window
from .errors import KobalabError, ParseError
from .logtype import NearBoundarySpec, calibrate_constant, log_type_certificate, measure_gaps
from .metric import fmt
from .paths import PathPolyline

EXIT_CODES = {"pass": 0, "fail": 2, "inconclusive": 3, "error": 1}
# a batch exits with the most severe code among its scenarios
SEVERITY = (1, 2, 3, 0)
DEFAULT_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
REQUIRED = object()


# parameter conversion


def _number(v, path, kind):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError([(path, f"expected {kind}")])
    if kind == "integer":
        if isinstance(v, float) and not v.is_integer():
            raise ParseError([(path, "expected integer")])
        return int(v)
    if not math.isfinite(v):
        raise ParseError([(path, "expected a finite number")])
    return float(v)


def _point(v, path):
    if not isinstance(v, list) or not v or len(v) % 2:
        raise ParseError([(path, "expected a point [Re z1, Im z1, ...] with an even number of entries")])
    return from_real(np.array([_number(x, f"{path}[{i}]", "number") for i, x in enumerate(v)]))


def _levels(v, path):
    if not isinstance(v, list) or not v:
        raise ParseError([(path, "expected a non-empty list of levels")])
    lv = [_number(x, f"{path}[{i}]", "number") for i, x in enumerate(v)]
    if any(x <= 0 for x in lv) or any(b >= a for a, b in zip(lv, lv[1:])):
        raise ParseError([(path, "levels must be positive and strictly decreasing")])
    return tuple(lv)


def _seq(v, path):
    if not isinstance(v, dict):
        raise ParseError([(path, "expected an object")])
    errs = [(f"{path}.{k}", "unknown field") for k in sorted(set(v) - {"anchor", "levels", "approach", "tilt"})]
    errs += [(f"{path}.{k}", "missing field") for k in ("anchor", "levels") if k not in v]
    if errs:
        raise ParseError(errs)
    app = v.get("approach", "normal")
    if app != "normal":
        app = _point(app, f"{path}.approach")
    return ex.BoundarySequenceSpec(_point(v["anchor"], f"{path}.anchor"), _levels(v["levels"], f"{path}.levels"),
                                   app, _number(v.get("tilt", 0.0), f"{path}.tilt", "number"))


def _list_of(conv):
    def f(v, path):
        if not isinstance(v, list) or not v:
            raise ParseError([(path, "expected a non-empty list")])
        return [conv(x, f"{path}[{i}]") for i, x in enumerate(v)]
    return f


def _choice(*options):
    def f(v, path):
        if v not in options:
            raise ParseError([(path, f"expected one of {', '.join(options)}")])
        return v
    return f


def _bool(v, path):
    if not isinstance(v, bool):
        raise ParseError([(path, "expected true or false")])
    return v


def _optional(conv):
    return lambda v, path: None if v is None else conv(v, path)


CONVERTERS = {
    "integer": lambda v, p: _number(v, p, "integer"),
    "number": lambda v, p: _number(v, p, "number"),
    "boolean": _bool,
    "point": _point,
    "levels": _levels,
    "window": Window.from_dict,
    "sequence": _seq,
    "sequences": _list_of(_seq),
    "path": _list_of(_point),
}


# registry


@dataclass(frozen=True)
class Experiment:
    """Registry entry: ``schema`` maps parameter name to ``(type, default)``."""

    name: str
    description: str
    schema: dict
    run: object
    domain: str = "required"
    window: str = "forbidden"

    def describe(self):
        params = {k: {"type": t, "default": "required" if d is REQUIRED else d}
                  for k, (t, d) in sorted(self.schema.items())}
        return {"name": self.name, "description": self.description, "domain": self.domain,
                "window": self.window, "params": params}


def _conv(t):
    """Converter for a type string: a base type, ``base?`` (nullable) or ``a|b|c`` (choice)."""
    if t.endswith("?"):
        return _optional(_conv(t[:-1]))
    if "|" in t:
        return _choice(*t.split("|"))
    return CONVERTERS[t]


def _run_blowup(sc, p):
    o = sc.domain.basepoint if p["o"] is None else p["o"]
    return ex.same_point_blowup_probe(sc.domain, p["seq"], o, p["seq2"], p["threshold"], p["slack"],
                                      p["bound"], p["provider"], sc.id, sc.seed)


def _run_bracket(sc, p):
    return ex.bracket_experiment(sc.domain, seed=sc.seed, scenario=sc.id, h=sc.h, **p)


def _run_certificate(sc, p):
    return ex.certificate_experiment(sc.domain, seed=sc.seed, scenario=sc.id, **p)


def _run_distance_localization(sc, p):
    return ex.localization_distance_experiment(sc.domain, sc.window, seed=sc.seed, scenario=sc.id, h=sc.h, **p)


def _run_extension(sc, p):
    return ex.extension_probe(p["map"], p["xi"], p["seqs"], sc.seed, p["calibration"], p["provider"],
                              scenario=sc.id)


def _run_four_point(sc, p):
    return ex.four_point_check(sc.domain, p["tuples"], sc.seed, p["delta_max"], p["provider"], sc.id)


def _run_geodesic_stay(sc, p):
    return ex.geodesic_stay_estimate(sc.domain, sc.window, PathPolyline(np.array(p["path"])), p["xi"], p["eps"],
                                     p["pairs"], sc.seed, dini_window=p["dini_window"], scenario=sc.id)


def _run_metric_localization(sc, p):
    return ex.metric_localization_experiment(sc.domain, sc.window, seed=sc.seed, scenario=sc.id, **p)


def _run_visibility(sc, p):
    dom = sc.domain if sc.window is None else intersect_window(sc.domain, sc.window, seed=sc.seed)
    p = dict(p)
    cert = None
    if p.pop("certify"):
        spec = NearBoundarySpec(DEFAULT_LEVELS, 8, sc.seed, p["xi"], 0.5 * p["eps"])
        gaps = measure_gaps(dom, spec)
        C = calibrate_constant({k: v[gaps["level"] < 2] for k, v in gaps.items()}, 1.0)
        cert = log_type_certificate(dom, spec, 1.0, C, gaps=gaps)
    return ex.visibility_experiment(dom, p.pop("xi"), p.pop("xi2"), p.pop("eps"), seed=sc.seed,
                                    certificate=cert, scenario=sc.id, h=sc.h, **p)


_EXPERIMENTS = [
    Experiment("blow-up", "Gromov products along boundary sequences: blow-up at one point, bounded at two",
               {"seq": ("sequence", REQUIRED), "seq2": ("sequence?", None), "o": ("point?", None),
                "threshold": ("number", 5.0), "slack": ("number", 0.2), "bound": ("number", 3.0),
                "provider": ("auto|oracle|bracket", "auto")},
               _run_blowup),
    Experiment("bracket", "Oracle anchoring and pinch of distance brackets on random pairs",
               {"pairs": ("integer", 1000), "node_budget": ("integer", 5000), "vertex_budget": ("integer", 17),
                "rounds": ("integer", 40), "projection": ("boolean", True),
                "pinch_separation": ("number", 0.1), "pinch_max": ("number", 2.05), "within": ("number", 0.15),
                "within_from": ("number", 0.3)},
               _run_bracket),
    Experiment("certificate", "Log-type convexity certificate with calibrated constant and fitted exponent",
               {"levels": ("levels", (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)), "samples": ("integer", 8),
                "nu": ("number", 1.0), "C": ("number?", None),
                "calibrate_levels": ("integer", 2), "anchor": ("point?", None),
                "anchor_radius": ("number", 0.0), "grid": ("integer", 96)},
               _run_certificate),
    Experiment("distance-localization", "Additive comparison of K on the domain and on its window intersection",
               {"V": ("window", REQUIRED), "pairs": ("integer", 60), "levels": ("levels", DEFAULT_LEVELS),
                "use_nikolov": ("boolean", True), "vertex_budget": ("integer", 9), "rounds": ("integer", 20),
                "slack_level": ("number", 0.1)},
               _run_distance_localization, window="required"),
    Experiment("extension-probe", "Boundary behaviour of explicit biholomorphisms via Gromov-product transport",
               {"map": ("|".join(sorted(ex.extension_maps())), REQUIRED), "xi": ("point", REQUIRED),
                "seqs": ("sequences", REQUIRED), "calibration": ("integer", 100),
                "provider": ("auto|oracle|bracket", "auto")},
               _run_extension, domain="forbidden"),
    Experiment("four-point", "Gromov four-point condition on random tuples",
               {"tuples": ("integer", 200), "delta_max": ("number", math.log(3.0)),
                "provider": ("auto|oracle|bracket", "oracle")},
               _run_four_point),
    Experiment("geodesic-stay", "Parameter differences of a path against distances in the window intersection",
               {"path": ("path", REQUIRED), "xi": ("point", REQUIRED), "eps": ("number", REQUIRED),
                "pairs": ("integer", 50), "dini_window": ("window?", None)},
               _run_geodesic_stay, window="required"),
    Experiment("metric-localization", "Directional gaps in the window intersection against the full domain",
               {"xi": ("point", REQUIRED), "eps": ("number", REQUIRED), "levels": ("levels", DEFAULT_LEVELS),
                "samples": ("integer", 40), "nu": ("number", 1.0), "tol": ("number", 1e-6)},
               _run_metric_localization, window="required"),
    Experiment("visibility", "Depth reached by near-geodesics joining neighbourhoods of two boundary points",
               {"xi": ("point", REQUIRED), "xi2": ("point", REQUIRED), "eps": ("number", REQUIRED),
                "trials": ("integer", 200), "levels": ("levels", (1e-1, 1e-4)), "node_budget": ("integer", 1000),
                "vertex_budget": ("integer", 5), "rounds": ("integer", 8), "max_slope": ("number", 0.25),
                "depth_factor": ("number", 10.0), "certify": ("boolean", False)},
               _run_visibility, window="optional"),
]
REGISTRY = {e.name: e for e in _EXPERIMENTS}


def list_experiments():
    """Registry entries as dicts, sorted by name."""
    return [REGISTRY[k].describe() for k in sorted(REGISTRY)]


# scenarios


@dataclass
class Scenario:
    """A validated scenario; ``params`` holds converted values with defaults filled."""

    id: str
    experiment: str
    seed: int
    params: dict
    domain: object = None
    window: Window = None
    expect: str = None
    out: str = None
    h: float = None
    source: dict = field(default_factory=dict, repr=False)


_TOP = {"id", "experiment", "seed", "domain", "window", "params", "expect", "out"}


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def parse_scenario(data):
    """Validate a scenario document (bytes or str).

    Raises
    ------
    ParseError
        With one ``(path, message)`` entry per offending field.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data, parse_constant=_reject_constant)
    except ValueError as exc:
        raise ParseError([("", f"invalid JSON: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ParseError([("", "expected an object")])
    errs = [(k, "unknown field") for k in sorted(set(doc) - _TOP)]
    for k in ("id", "experiment", "seed"):
        if k not in doc:
            errs.append((k, "missing field" + (" (the seed is mandatory)" if k == "seed" else "")))
    sid = doc.get("id")
    if "id" in doc and not (isinstance(sid, str) and sid and all(c.isalnum() or c in "-_." for c in sid)):
        errs.append(("id", "expected a non-empty name of letters, digits, '-', '_' or '.'"))
    name = doc.get("experiment")
    exp = REGISTRY.get(name) if isinstance(name, str) else None
    if "experiment" in doc and exp is None:
        errs.append(("experiment", f"unknown experiment {name!r}; known: {', '.join(sorted(REGISTRY))}"))
    seed = doc.get("seed")
    if "seed" in doc and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        errs.append(("seed", "expected a non-negative integer"))
    if doc.get("expect") not in (None, "pass", "fail", "inconclusive"):
        errs.append(("expect", "expected pass, fail or inconclusive"))
    if "out" in doc and not isinstance(doc["out"], str):
        errs.append(("out", "expected a directory name"))
    domain = window = None
    params = {}
    if exp is not None:
        domain, window, params = _parse_parts(doc, exp, errs)
    if errs:
        raise ParseError(errs)
    return Scenario(sid, name, seed, params, domain, window, doc.get("expect"), doc.get("out"), source=doc)


def _collect(errs, fn, *args):
    try:
        return fn(*args)
    except ParseError as exc:
        errs.extend(exc.errors)
    return None


def _parse_parts(doc, exp, errs):
    domain = window = None
    if exp.domain == "required":
        if doc.get("domain") is None:
            errs.append(("domain", "missing field"))
        else:
            domain = _collect(errs, domain_from_dict, doc["domain"], "domain")
    elif doc.get("domain") is not None:
        errs.append(("domain", f"not used by {exp.name}"))
    if exp.window == "required" and doc.get("window") is None:
        errs.append(("window", "missing field"))
    elif exp.window == "forbidden" and doc.get("window") is not None:
        errs.append(("window", f"not used by {exp.name}"))
    elif doc.get("window") is not None:
        window = _collect(errs, Window.from_dict, doc["window"], "window")
    raw = doc.get("params", {})
    params = {}
    if not isinstance(raw, dict):
        errs.append(("params", "expected an object"))
        return domain, window, params
    errs.extend((f"params.{k}", "unknown parameter") for k in sorted(set(raw) - set(exp.schema)))
    for k, (t, default) in exp.schema.items():
        if k not in raw:
            if default is REQUIRED:
                errs.append((f"params.{k}", "missing parameter"))
            params[k] = default
            continue
        params[k] = _collect(errs, _conv(t), raw[k], f"params.{k}")
    return domain, window, params


# output


def _clean(x):
    """JSON-ready copy: numpy scalars to Python, floats rounded to 9 significant digits, NaN to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(fmt(x)) if math.isfinite(x) else None
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


def report_json(report, expect=None):
    d = report.to_dict()
    d["expect"] = expect
    d["version"] = __version__
    return json.dumps(_clean(d), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    if isinstance(v, dict):
        return json.dumps(_clean(v), sort_keys=True)
    return str(v)


def report_csv(report):
    """One row per record; columns are the sorted union of record keys."""
    cols = sorted({k for r in report.records for k in r})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "index"] + cols)
    for i, r in enumerate(report.records):
        w.writerow([report.scenario, i] + [_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def report_markdown(report, expect=None):
    lines = [f"# {report.scenario}", "", f"- experiment: `{report.experiment}`", f"- seed: {report.seed}",
             f"- verdict: **{report.verdict}**"]
    if expect is not None:
        lines.append(f"- expected: {expect} ({'met' if expect == report.verdict else 'NOT met'})")
    lines += [f"- records: {len(report.records)}", f"- wall time: {fmt(report.wall_time)} s", "",
              "| statistic | value |", "|---|---|"]
    for k in sorted(report.stats):
        lines.append(f"| {k} | {_cell(report.stats[k])} |")
    lines += ["", "## Parameters", "", "```json", json.dumps(_clean(report.params), sort_keys=True, indent=1), "```", ""]
    return "\n".join(lines)


@dataclass
class ManifestEntry:
    id: str
    experiment: str
    seed: int
    status: str
    verdict: str = None
    expect: str = None
    exit_code: int = 1
    outputs: list = field(default_factory=list)
    error: str = None
    wall_time: float = 0.0

    @property
    def expectation_met(self):
        return None if self.expect is None or self.verdict is None else self.expect == self.verdict

    def to_dict(self):
        return {"id": self.id, "experiment": self.experiment, "seed": self.seed, "status": self.status,
                "verdict": self.verdict, "expect": self.expect, "expectation_met": self.expectation_met,
                "exit_code": self.exit_code, "outputs": self.outputs, "error": self.error,
                "wall_time": self.wall_time}


@dataclass
class RunManifest:
    """Per-scenario statuses of one run; every scenario appears once."""

    entries: list = field(default_factory=list)
    version: str = __version__
    wall_time: float = 0.0

    @property
    def totals(self):
        t = {"ok": 0, "failed": 0, "skipped": 0}
        for e in self.entries:
            t[e.status] += 1
        return t

    @property
    def exit_code(self):
        codes = {e.exit_code for e in self.entries if e.status != "skipped"}
        return next((c for c in SEVERITY if c in codes), 0)

    def to_dict(self):
        return {"version": self.version, "scenarios": [e.to_dict() for e in self.entries],
                "totals": self.totals, "exit_code": self.exit_code, "wall_time": self.wall_time}


def run_scenario(scenario, out_dir=None, seed=None, h=None, write=True):
    """Run a parsed scenario and write ``{id}_{seed}.json/.csv/.md``.

    ``seed`` and ``h`` override the scenario's values.  Experiment errors
    are caught and recorded in the returned manifest entry (exit code 1).

    Returns
    -------
    report : ExperimentReport or None
    entry : ManifestEntry
    """
    if seed is not None:
        scenario.seed = int(seed)
    if h is not None:
        scenario.h = float(h)
    out_dir = out_dir or scenario.out or "."
    entry = ManifestEntry(scenario.id, scenario.experiment, scenario.seed, "ok", expect=scenario.expect)
    t0 = time.perf_counter()
    try:
        report = REGISTRY[scenario.experiment].run(scenario, scenario.params)
    except (KobalabError, ValueError, ArithmeticError) as exc:
        entry.status, entry.error = "failed", f"{type(exc).__name__}: {exc}"
        entry.wall_time = time.perf_counter() - t0
        return None, entry
    entry.verdict = report.verdict
    entry.exit_code = EXIT_CODES[report.verdict]
    if write:
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.join(out_dir, f"{scenario.id}_{scenario.seed}")
        for ext, text in (("json", report_json(report, scenario.expect)), ("csv", report_csv(report)),
                          ("md", report_markdown(report, scenario.expect))):
            with open(f"{stem}.{ext}", "w", newline="") as fh:
                fh.write(text)
            entry.outputs.append(f"{stem}.{ext}")
    entry.wall_time = time.perf_counter() - t0
    return report, entry
