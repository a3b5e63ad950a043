"""Command-line front end: ``run``, ``list``, ``certify`` and ``distance``.

Exit status follows the verdict: 0 pass, 2 fail, 3 inconclusive, 1 error.
A ``run`` over several scenarios exits with the most severe of these.
"""
import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .constraints import from_real, to_real
from .domains import domain_from_json
from .errors import KobalabError, ParseError
from .experiments import certificate_experiment
from .metric import distance_bracket, fmt, oracle_distance
from .scenarios import (EXIT_CODES, ManifestEntry, RunManifest, list_experiments, parse_scenario,
                        report_csv, report_json, report_markdown, run_scenario)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _run_one(args):
    path, out, seed, h = args
    try:
        sc = parse_scenario(_read(path))
    except (OSError, ParseError) as exc:
        name = os.path.splitext(os.path.basename(path))[0]
        return ManifestEntry(name, None, seed, "failed", error=f"{type(exc).__name__}: {exc}"), None
    report, entry = run_scenario(sc, out, seed, h)
    return entry, None if report is None else report.verdict


def cmd_run(ns):
    t0 = time.perf_counter()
    jobs = [(p, ns.out, ns.seed, ns.h) for p in ns.scenarios]
    if ns.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(ns.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    manifest = RunManifest()
    seen = set()
    for (entry, _), path in zip(results, ns.scenarios):
        if entry.status == "ok" and entry.id in seen:
            # ids are unique per run; a repeat would overwrite the first outputs
            entry.status, entry.error, entry.outputs = "skipped", "duplicate scenario id", []
        seen.add(entry.id)
        manifest.entries.append(entry)
        tag = entry.verdict if entry.status == "ok" else entry.status
        extra = ""
        if entry.expectation_met is not None:
            extra = " (expected)" if entry.expectation_met else f" (expected {entry.expect})"
        print(f"{entry.id}: {tag}{extra}" + (f" - {entry.error}" if entry.error else ""))
    manifest.wall_time = time.perf_counter() - t0
    out = ns.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    t = manifest.totals
    print(f"ok {t['ok']}, failed {t['failed']}, skipped {t['skipped']}; wall time {fmt(manifest.wall_time)} s")
    return manifest.exit_code


def cmd_list(ns):
    entries = list_experiments()
    if ns.json:
        print(json.dumps(entries, sort_keys=True, indent=1))
        return 0
    for e in entries:
        print(f"{e['name']:<22} {e['description']}")
        for k, p in e["params"].items():
            print(f"    {k:<18} {p['type']:<10} default {p['default']}")
    return 0


def _parse_point(text):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals or len(vals) % 2:
        raise argparse.ArgumentTypeError("a point needs an even number of real coordinates")
    return from_real(np.array(vals))


def _load_domain(path):
    return domain_from_json(_read(path).decode("utf-8"))


def cmd_certify(ns):
    domain = _load_domain(ns.domain)
    levels = tuple(10.0 ** -k for k in range(1, ns.depth + 1))
    rep = certificate_experiment(domain, levels, ns.samples, ns.seed, ns.nu, ns.C, anchor=ns.anchor,
                                 anchor_radius=ns.anchor_radius,
                                 scenario=os.path.splitext(os.path.basename(ns.domain))[0])
    s = rep.stats
    print(f"verdict {rep.verdict}: nu {fmt(s['nu'])}, C {fmt(s['C'])}, lambda_hat {fmt(s['lambda_hat'])}, "
          f"C_hat {fmt(s['C_hat'])}, samples {s['sample_count']}")
    if ns.out:
        os.makedirs(ns.out, exist_ok=True)
        stem = os.path.join(ns.out, f"{rep.scenario}_{rep.seed}")
        for ext, text in (("json", report_json(rep)), ("csv", report_csv(rep)), ("md", report_markdown(rep))):
            with open(f"{stem}.{ext}", "w", newline="") as fh:
                fh.write(text)
    return EXIT_CODES[rep.verdict]


def cmd_distance(ns):
    domain = _load_domain(ns.domain)
    kw = {"h": ns.h, "seed": ns.seed}
    est = distance_bracket(domain, ns.p, ns.q, projection=not ns.no_projection, **kw)
    print(f"lower {fmt(est.lower)} ({est.lower_method})")
    print(f"upper {fmt(est.upper)} ({est.upper_method})")
    print(f"rigorous lower {fmt(est.rigorous_lower)}")
    k = oracle_distance(domain, ns.p, ns.q)
    if k is not None:
        print(f"oracle {fmt(k)}")
    if ns.json:
        d = est.to_dict()
        d.update({"from": to_real(ns.p).tolist(), "to": to_real(ns.q).tolist(),
                  "oracle": None if k is None else float(k)})
        print(json.dumps({a: (fmt(b) if isinstance(b, float) else b) for a, b in d.items()}, sort_keys=True))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="kobalab", description="Kobayashi-geometry experiments on model domains.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run scenario files")
    r.add_argument("scenarios", nargs="+", metavar="scenario.json")
    r.add_argument("--seed", type=int, default=None, help="override every scenario's seed")
    r.add_argument("--out", default=None, help="output directory (default: scenario 'out' or .)")
    r.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel processes")
    r.add_argument("--h", type=float, default=None, help="quadrature step of reported path values")
    r.set_defaults(fn=cmd_run)

    li = sub.add_parser("list", help="list registered experiments")
    li.add_argument("--json", action="store_true")
    li.set_defaults(fn=cmd_list)

    c = sub.add_parser("certify", help="log-type certificate for a domain document")
    c.add_argument("domain", metavar="domain.json")
    c.add_argument("--nu", type=float, default=1.0)
    c.add_argument("--C", type=float, default=None, help="constant (default: calibrated on shallow levels)")
    c.add_argument("--depth", type=int, default=6, help="levels 1e-1 ... 1e-depth")
    c.add_argument("--samples", type=int, default=8)
    c.add_argument("--anchor", type=_parse_point, default=None)
    c.add_argument("--anchor-radius", type=float, default=0.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    c.set_defaults(fn=cmd_certify)

    d = sub.add_parser("distance", help="bracket the distance between two points")
    d.add_argument("domain", metavar="domain.json")
    d.add_argument("--from", dest="p", type=_parse_point, required=True, help="'Re z1,Im z1,Re z2,Im z2'")
    d.add_argument("--to", dest="q", type=_parse_point, required=True)
    d.add_argument("--h", type=float, default=None)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--no-projection", action="store_true")
    d.add_argument("--json", action="store_true")
    d.set_defaults(fn=cmd_distance)
    return ap


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        return ns.fn(ns)
    except (KobalabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
