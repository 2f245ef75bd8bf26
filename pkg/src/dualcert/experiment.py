"""Run orchestration, summary tables and report verification."""

import csv
import json
import os
from pathlib import Path

import numpy as np

from .certificates import CertificateContext, evaluate, make_context, surrogate_constants
from .errors import ConfigError, ReferenceInconsistency
from .methods import (FISTA, PG, TSENG, StepSizeRule, fista_dual, projected_dual_gradient,
                      read_trace_csv, tseng_fast_gradient)

METHODS = (PG, FISTA, TSENG)
SUMMARY_COLUMNS = ["method", "k", "dual_gap", "f_err_xbar", "f_err_xtilde", "f_err_xhat",
                   "delta_xbar"]


def log_grid(K):
    """1, 2, 5, 10, 20, 50, ... up to K (K itself always included)."""
    out = []
    scale = 1
    while scale <= K:
        for mult in (1, 2, 5):
            if mult * scale <= K:
                out.append(mult * scale)
        scale *= 10
    if not out or out[-1] != K:
        out.append(K)
    return out


def parse_methods(text):
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
    return names


def run_method(inst, method, K, u0=None, alpha_rule="linear", cfg=None, L_tilde=None):
    """Run one dual method from ``u0`` (default 0); ``w0`` equals ``u0``."""
    u0 = np.zeros(inst.m + inst.p) if u0 is None else np.asarray(u0, dtype=float)
    if method == PG:
        rule = alpha_rule if isinstance(alpha_rule, StepSizeRule) else StepSizeRule.parse(alpha_rule, inst)
        return projected_dual_gradient(inst, u0, rule, K, cfg)
    if method == FISTA:
        return fista_dual(inst, u0, K, cfg)
    if method == TSENG:
        if L_tilde is None:
            if inst.all_linear:
                L_tilde = inst.constants.sigma_max_At**2 / inst.objective.theta
            else:
                L_tilde = surrogate_constants(inst, "compact").L_hat
        return tseng_fast_gradient(inst, u0, u0, L_tilde, K, cfg)
    raise ConfigError(f"unknown method {method!r}")


def summary_rows(method, trace, ref, grid):
    rows = []
    for k in grid:
        if k >= len(trace):
            continue
        rows.append({
            "method": method, "k": k,
            "dual_gap": ref.d - trace.d[k],
            "f_err_xbar": abs(trace.f_xbar[k] - ref.f),
            "f_err_xtilde": abs(trace.f_xtilde[k] - ref.f),
            "f_err_xhat": abs(trace.f_xhat[k] - ref.f) if trace.f_xhat else float("nan"),
            "delta_xbar": trace.delta_xbar[k],
        })
    return rows


def run_experiment(inst, methods, K, outdir, ref, alpha_rule="linear", u0=None, cfg=None,
                   cert_tol=None):
    """Run each method, write its trace CSV and certificate JSON plus a summary.

    Files: ``<method>_trace.csv``, ``<method>_certificate.json`` and
    ``summary.csv`` (dual gap, primal value errors of x̄, x̃, x̂ and
    infeasibility on the grid 1, 2, 5, 10, ..., K).  Returns a dict with the
    written paths and per-method violation counts.
    """
    if ref is None:
        raise ReferenceInconsistency("reference required")
    if not methods:
        return {"files": [], "violations": {}}
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    grid = log_grid(K)
    files, viol, rows = [], {}, []
    for method in methods:
        trace = run_method(inst, method, K, u0=u0, alpha_rule=alpha_rule, cfg=cfg)
        tpath = out / f"{method}_trace.csv"
        cpath = out / f"{method}_certificate.json"
        trace.to_csv(tpath, reference=ref)
        ctx = make_context(inst, ref, trace, cert_tol=cert_tol, oracle_cfg=cfg)
        rep = evaluate(ctx, trace.data(ref))
        rep.to_json(cpath, trace_file=tpath.name)
        files += [str(tpath), str(cpath)]
        viol[method] = rep.violations()
        rows += summary_rows(method, trace, ref, grid)
    spath = out / "summary.csv"
    with open(spath, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c])
                        for c in SUMMARY_COLUMNS})
    files.append(str(spath))
    return {"files": files, "violations": viol}


def _report_paths(paths):
    found = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            found += sorted(p.glob("*_certificate.json"))
        else:
            found.append(p)
    return found


def verify_report(paths, out=print):
    """Re-derive every bound from trace CSVs and certificate contexts.

    Returns 0 when no family is violated anywhere, 1 on violations and 2 on
    unreadable, inconsistent or reference-less reports.  Worst margins per
    bound family are printed through ``out``.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    reports = _report_paths(paths)
    if not reports:
        out("error: no certificate reports found")
        return 2
    status = 0
    for rpath in reports:
        try:
            with open(rpath, encoding="utf-8") as fh:
                data = json.load(fh)
            if not isinstance(data, dict) or "context" not in data:
                raise ValueError("missing 'context' block")
            ctx = CertificateContext.from_dict(data["context"])
            tfile = data.get("trace_file")
            if not tfile:
                raise ValueError("missing 'trace_file'")
            cols = read_trace_csv(Path(rpath).parent / tfile)
            if cols["u"].shape[1] != ctx.m + ctx.p:
                raise ValueError("trace dual dimension does not match the context")
        except ReferenceInconsistency as exc:
            out(f"{rpath}: {exc}")
            status = max(status, 2)
            continue
        except (OSError, ValueError, TypeError, KeyError) as exc:
            out(f"{rpath}: malformed report: {exc}")
            status = max(status, 2)
            continue
        rep = evaluate(ctx, cols)
        stored = data.get("violations") or {}
        viol = rep.violations()
        out(f"{rpath.name}: method={rep.method} iterates={len(cols['k'])}")
        for name, fam in rep.families.items():
            w = fam.worst()
            if w is None:
                continue
            flag = "VIOLATED" if name in viol else "ok"
            out(f"  {name:34s} {flag:8s} worst margin {w['margin']: .3e} at k={w['k']}"
                f" ({fam.provenance})")
        for name in sorted(set(stored) - set(viol)):
            out(f"  {name}: flagged in the stored report but not on re-evaluation")
            status = max(status, 2)
        if viol:
            for name, count in viol.items():
                out(f"  violation: {name} at {count} iterate(s)")
            status = max(status, 1) if status != 2 else status
    return status
