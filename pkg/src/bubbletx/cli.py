"""Command line interface: ``bubbletx check-mesh|weights|decompose|verify|bounds``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import corpus
from .forms import form_from_dict, form_to_dict, random_form
from .harness import (SUITES, CheckRecord, SuiteConfig, bounds_records, build_report,
                      emit_report, estimate_bounds, mesh_descriptor, run_suite, suites_report)
from .mesh import MeshError, check_assumptions, load_mesh, overlap_constant, macroelement, \
    shape_constant
from .transform import ReconstructionError, bubble_transform
from .weights import (WeightSolveError, build_weights, verify_weight_identities,
                      weights_from_dict, weights_to_dict)

log = logging.getLogger("bubbletx")


def _load_mesh(spec):
    """A corpus name or a path to a mesh JSON file."""
    if spec in corpus.GENERATORS:
        return corpus.load_corpus(spec), spec
    path = Path(spec)
    if not path.exists():
        raise MeshError(f"{spec!r} is neither a corpus mesh ({', '.join(corpus.corpus_names())}) "
                        "nor a file")
    return load_mesh(path), path.stem


def _load_form(args, mesh):
    if args.form is None:
        return random_form(mesh, args.k, args.r, "Pr", args.seed)
    data = json.loads(Path(args.form).read_text())
    return form_from_dict(mesh, data, k=args.k if data.get("class") == "random" else None)


def _write(report, out):
    text = emit_report(report, out)
    if out is None:
        sys.stdout.write(text)
    return 0 if report["passed"] else 1


# -- commands -----------------------------------------------------------------------------------


def cmd_check_mesh(args):
    mesh, name = _load_mesh(args.mesh)
    res = check_assumptions(mesh, args.boundary)
    records = [CheckRecord(e["check"], "mesh assumption", 0.0 if e["passed"] else 1.0, 0.0,
                           e["passed"], {"simplex": e["simplex"]}) for e in res["entries"]]
    diag = {"shape_constant": shape_constant(mesh),
            "overlap_vertices": overlap_constant(mesh, [macroelement(mesh, v)
                                                        for v in mesh.simplices[0]]),
            "simplex_counts": [len(mesh.simplices[m]) for m in range(mesh.dim + 1)]}
    report = build_report("check-mesh", res["passed"], records,
                          mesh=mesh_descriptor(mesh, name), diagnostics=diag,
                          assumptions=[{"check": e["check"], "simplex": list(e["simplex"]),
                                        "passed": e["passed"]} for e in res["entries"]])
    return _write(report, args.out)


def cmd_weights(args):
    mesh, name = _load_mesh(args.mesh)
    t0 = time.perf_counter()
    wf = build_weights(mesh, args.boundary)
    checks = verify_weight_identities(wf)
    records = []
    for c in checks:
        ctx = {"e": list(c.e), "f": list(c.f), "level": c.j}
        records.append(CheckRecord("z-d", "dz = (-1)^(j+1) delta z", c.dz_residual, 1e-10,
                                   c.dz_residual <= 1e-10, ctx))
        records.append(CheckRecord("z-plus", "delta^+ z = 0", c.delta_plus_residual, 1e-12,
                                   c.delta_plus_residual <= 1e-12, ctx))
    passed = all(r.passed for r in records)
    report = build_report("weights", passed, records, mesh=mesh_descriptor(mesh, name),
                          weights=weights_to_dict(wf),
                          diagnostics={"zbound_constant": max((c.zbound_constant for c in checks),
                                                              default=0.0)},
                          timing={"seconds": round(time.perf_counter() - t0, 3)})
    return _write(report, args.out)


def _bubble_dict(b):
    terms = []
    for t in b.terms:
        rf = t.reduced
        terms.append({"g": list(t.g), "e": None if t.e is None else list(t.e),
                      "factor": float(t.factor), "base": list(rf.base), "k": rf.k - rf.j,
                      "r": None if rf.is_zero else int(rf.form.r),
                      "coeffs": None if rf.is_zero else rf.form.coeffs.tolist()})
    for t in terms:
        if t["r"] is None:
            del t["r"]
    return {"m": b.m, "f": list(b.f), "terms": terms}


def cmd_decompose(args):
    mesh, name = _load_mesh(args.mesh)
    u = _load_form(args, mesh)
    if args.weights:
        data = json.loads(Path(args.weights).read_text())
        wf = weights_from_dict(mesh, data.get("weights", data))
    else:
        wf = build_weights(mesh, args.boundary)
    t0 = time.perf_counter()
    D = bubble_transform(u.k, u, wf, seed=args.seed, strict=False)
    records = [CheckRecord("recon", "global cut-off sums are polynomials of the input degree",
                           v, 1e-8, v <= 1e-8, {"stage": key})
               for key, v in sorted(D.residuals.items())]
    stages = [{"m": m, "form": form_to_dict(s)} for m, s in enumerate(D.stages)]
    bubbles = [_bubble_dict(b) for m in sorted(D.bubbles) for b in D.bubbles[m]]
    report = build_report("decompose", all(r.passed for r in records), records,
                          mesh=mesh_descriptor(mesh, name), seed=args.seed,
                          input=form_to_dict(u), stages=stages, bubbles=bubbles,
                          residuals={str(k): v for k, v in D.residuals.items()},
                          timing={"seconds": round(time.perf_counter() - t0, 3)})
    return _write(report, args.out)


def cmd_verify(args):
    names = corpus.DEFAULT_CORPUS if args.mesh in (None, "corpus") else [args.mesh]
    suites = SUITES if args.suite in (None, "all") else args.suite.split(",")
    config = SuiteConfig(ks=None if args.k is None else (args.k,),
                         rs=tuple(range(1, args.r + 1)) if args.r else (1, 2, 3),
                         seed=args.seed, seeds=args.seeds, boundary=args.boundary)
    reports = []
    for spec in names:
        mesh, name = _load_mesh(spec)
        wf = None
        for s in suites:
            if s != "mesh" and wf is None and check_assumptions(mesh, args.boundary)["passed"]:
                wf = build_weights(mesh, args.boundary)
            rep = run_suite(s, mesh, config, name, weights=wf)
            log.info("%-14s %-14s %s (%.1fs)", name, s, "pass" if rep.passed else "FAIL",
                     rep.seconds)
            reports.append(rep)
    return _write(suites_report(reports), args.out)


def cmd_bounds(args):
    mesh, name = _load_mesh(args.mesh or "square-fan-4")
    ks = [args.k] if args.k is not None else list(range(min(mesh.dim, 2) + 1))
    rs = [args.r] if args.r else [1, 2]
    t0 = time.perf_counter()
    studies, records = [], []
    for k in ks:
        for r in rs:
            st = estimate_bounds(mesh, args.levels, k, r, args.samples, args.seed, args.boundary)
            studies.append(st.to_dict())
            records += bounds_records(st)
    report = build_report("bounds", all(r.passed for r in records), records,
                          mesh=mesh_descriptor(mesh, name), seed=args.seed, studies=studies,
                          timing={"seconds": round(time.perf_counter() - t0, 3)})
    return _write(report, args.out)


# -- parser -------------------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="bubbletx", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mesh_required=True):
        sp.add_argument("--mesh", required=mesh_required,
                        help="corpus mesh name or path to a mesh JSON file")
        sp.add_argument("--out", help="write the JSON report here (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--boundary", choices=("closed", "interior"), default="closed")

    sp = sub.add_parser("check-mesh", help="mesh assumptions and diagnostics")
    common(sp)
    sp.set_defaults(func=cmd_check_mesh)

    sp = sub.add_parser("weights", help="build and verify the weight family")
    common(sp)
    sp.set_defaults(func=cmd_weights)

    sp = sub.add_parser("decompose", help="bubble decomposition of one form")
    common(sp)
    sp.add_argument("--form", help="form JSON file (default: random P_r form)")
    sp.add_argument("--k", type=int, default=0)
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--weights", help="weights file written by the weights command")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("verify", help="run verification suites")
    common(sp, mesh_required=False)
    sp.add_argument("--suite", default="all", help=f"all or comma list of {', '.join(SUITES)}")
    sp.add_argument("--k", type=int, help="single form order (default: all)")
    sp.add_argument("--r", type=int, help="largest degree (default 3)")
    sp.add_argument("--seeds", type=int, default=1, help="random inputs per configuration")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bounds", help="refinement study of the operator norms")
    common(sp, mesh_required=False)
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--samples", type=int, default=8, help="random inputs per probe vertex")
    sp.add_argument("--k", type=int)
    sp.add_argument("--r", type=int)
    sp.set_defaults(func=cmd_bounds)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MeshError, WeightSolveError, ReconstructionError, ValueError, KeyError,
            OSError) as exc:
        print(f"bubbletx: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
