"""Acceptance suite: twelve criteria, one PASS/FAIL line each in the summary.

Run with ``pytest tests/test_acceptance.py``; the lines appear under the
"acceptance criteria" section at the end of the run.
"""

import csv
import json
import time

import numpy as np
import pytest

from dualcert.certificates import evaluate, lemma_checks, make_context, sample_dual_points
from dualcert.experiment import verify_report
from dualcert.generator import GeneratorConfig, generate_instance
from dualcert.instances import halfsquare_equality, halfsquare_inequality
from dualcert.methods import (StepSizeRule, fista_dual, projected_dual_gradient,
                              strongly_concave_rate_params, tseng_fast_gradient)
from dualcert.oracle import (CLOSED_FORM, SEPARABLE, dual_gap_identity_check,
                             finite_difference_dual_gradient, oracle_path, solve_lagrangian)
from dualcert.reference import compute_reference

K = 10_000
TOL = 1e-7


def record(log, n, ok, detail):
    log[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def exact_instances():
    """Five generated instances on the exact oracle paths."""
    out = []
    for seed in range(5):
        if seed % 2 == 0:
            cfg = GeneratorConfig(seed=seed, box=False, gamma=0.0)
        else:
            cfg = GeneratorConfig(seed=seed, diagonal_H=True, separable_P=True)
        inst = generate_instance(cfg)
        assert oracle_path(inst) in (CLOSED_FORM, SEPARABLE)
        out.append(inst)
    return out


def random_dual_point(inst, rng, scale=3.0, margin=0.0):
    u = rng.standard_normal(inst.m + inst.p) * scale
    u[: inst.m] = np.abs(u[: inst.m]) + margin
    return u


@pytest.fixture(scope="module")
def long_runs(gen_inst, gen_ref):
    """K = 10^4 traces of the three methods on the default-dimension instance."""
    L = gen_inst.constants.sigma_max_At**2 / gen_inst.objective.theta
    u0 = np.zeros(gen_inst.m + gen_inst.p)
    runs, secs = {}, {}
    for name, fn in [
        ("pg", lambda: projected_dual_gradient(gen_inst, u0, StepSizeRule.linear(gen_inst), K)),
        ("fista", lambda: fista_dual(gen_inst, u0, K)),
        ("tseng", lambda: tseng_fast_gradient(gen_inst, u0, u0, L, K)),
    ]:
        t = time.perf_counter()
        runs[name] = fn()
        secs[name] = time.perf_counter() - t
    reports = {n: evaluate(make_context(gen_inst, gen_ref, tr, cert_tol=TOL), tr.data(gen_ref))
               for n, tr in runs.items()}
    return runs, reports, secs


def test_criterion_01_halfsquare(acceptance_log):
    t = time.perf_counter()
    inst = halfsquare_inequality()
    err = 0.0
    for u in np.linspace(0, 5, 51):
        r = solve_lagrangian(inst, np.array([u]))
        err = max(err, abs(r.xbar[0] - u), abs(r.dual_value - (u - u * u / 2)),
                  abs(r.dual_gradient[0] - (1 - u)))
    tr = projected_dual_gradient(inst, [0.0], 0.5, 20)
    seq_ok = [u[0] for u in tr.u] == [1 - 0.5**k for k in range(21)]
    ref = compute_reference(inst)
    ref_err = max(abs(ref.u[0] - 1), abs(ref.f - 0.5), abs(ref.d - 0.5))
    secs = time.perf_counter() - t
    ok = err <= 1e-12 and seq_ok and ref_err <= 1e-9 and secs < 1
    record(acceptance_log, 1, ok, f"oracle err {err:.1e}, pg sequence exact={seq_ok}, "
                                  f"reference err {ref_err:.1e}, {secs:.2f}s")


def test_criterion_02_equality(acceptance_log):
    t = time.perf_counter()
    inst = halfsquare_equality()
    tr = fista_dual(inst, [0.0], 5)
    gaps = [0.5 - d for d in tr.d]
    reached = next((k for k, g in enumerate(gaps) if g <= 1e-12 and tr.u[k][0] == -1.0), None)
    never_clamped = all(u[0] <= 0 for u in tr.u) and any(u[0] < 0 for u in tr.u)
    secs = time.perf_counter() - t
    ok = reached is not None and reached <= 5 and never_clamped and secs < 1
    record(acceptance_log, 2, ok, f"u*=-1 with gap<=1e-12 at k={reached}, "
                                  f"negative multipliers kept={never_clamped}, {secs:.2f}s")


def test_criterion_03_identity(acceptance_log):
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    count = 0
    for inst in exact_instances():
        for _ in range(200):
            u = random_dual_point(inst, rng)
            r = solve_lagrangian(inst, u)
            worst = max(worst, dual_gap_identity_check(r, inst, u) / (1 + np.abs(u).sum()))
            count += 1
    secs = time.perf_counter() - t
    ok = count == 1000 and worst <= 1e-9 and secs < 10
    record(acceptance_log, 3, ok, f"{count} points, worst scaled residual {worst:.1e}, {secs:.2f}s")


def test_criterion_04_gradient(acceptance_log):
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    insts = exact_instances()
    worst = 0.0
    for i in range(50):
        inst = insts[i % len(insts)]
        u = random_dual_point(inst, rng, margin=1e-3)
        g = solve_lagrangian(inst, u).dual_gradient
        fd = finite_difference_dual_gradient(inst, u, h=1e-6)
        worst = max(worst, float(np.max(np.abs(fd - g))))
    secs = time.perf_counter() - t
    ok = worst <= 1e-6 and secs < 10
    record(acceptance_log, 4, ok, f"50 points, worst abs difference {worst:.1e}, {secs:.2f}s")


POINTWISE = ["distance_via_dual_distance", "distance_via_gap", "value_upper_linear",
             "value_lower_linear", "infeasibility_linear", "value_upper", "value_lower",
             "infeasibility"]


def test_criterion_05_pointwise_bounds(acceptance_log, long_runs):
    runs, reports, secs = long_runs
    bad = {}
    for name, rep in reports.items():
        for fam in POINTWISE:
            v = int(rep.families[fam].violated.sum())
            if v:
                bad[f"{name}/{fam}"] = v
    total = sum(secs.values())
    ok = not bad and all(len(tr) == K + 1 for tr in runs.values()) and max(secs.values()) < 120
    record(acceptance_log, 5, ok, f"3 methods x {K} iterates x {len(POINTWISE)} bounds, "
                                  f"violations {bad or 0}, {total:.1f}s total")


def test_criterion_06_pg_envelopes(acceptance_log, long_runs):
    runs, reports, secs = long_runs
    rep = reports["pg"]
    env = [f for f in rep.families if f.startswith("envelope")]
    bad = {f: int(rep.families[f].violated.sum()) for f in env if rep.families[f].violated.any()}
    mono = rep.families["dual_distance_monotone"]
    worst_inc = float(np.nanmax(mono.measured))
    ok = (not bad and not mono.violated.any() and worst_inc <= 1e-9
          and rep.context.method_params["L_provenance"] == "exact" and secs["pg"] < 120)
    record(acceptance_log, 6, ok, f"{len(env)} envelopes over k<={K}, violations {bad or 0}, "
                                  f"largest increase of ||u_k-u*|| {worst_inc:.1e}, "
                                  f"{secs['pg']:.1f}s")


def test_criterion_07_fista_envelopes(acceptance_log, long_runs):
    runs, reports, secs = long_runs
    rep = reports["fista"]
    env = [f for f in rep.families if f.startswith("envelope")]
    bad = {f: int(rep.families[f].violated.sum()) for f in env if rep.families[f].violated.any()}
    b = rep.families["envelope_dual_gap"].bound
    ratio_err = max(abs(b[k2] / b[k1] - ((k1 + 1) / (k2 + 1)) ** 2) / ((k1 + 1) / (k2 + 1)) ** 2
                    for k1, k2 in [(4, 9), (1, 99), (10, 10_000), (99, 999)])
    ok = not bad and ratio_err <= 1e-14 and secs["fista"] < 120
    record(acceptance_log, 7, ok, f"{len(env)} envelopes over 1<=k<={K}, violations {bad or 0}, "
                                  f"(k+1)^-2 ratio rel err {ratio_err:.1e}, {secs['fista']:.1f}s")


def test_criterion_08_tseng_envelope(acceptance_log, long_runs, gen_inst, gen_ref):
    runs, reports, secs = long_runs
    tr = runs["tseng"]
    L = gen_inst.constants.sigma_max_At**2 / gen_inst.objective.theta
    Q = 0.5 * float(np.sum((gen_ref.u - np.asarray(tr.params["w0"])) ** 2))
    k = np.arange(1, len(tr))
    gap = gen_ref.d - np.asarray(tr.d[1:])
    env = 4 * L * Q / (k + 1) ** 2
    excess = float(np.max(gap - env))
    rep = reports["tseng"]
    fam_bad = rep.families["envelope_dual_gap"].violated.any()
    ok = excess <= TOL + gen_ref.gap_tol and not fam_bad and secs["tseng"] < 120
    record(acceptance_log, 8, ok, f"max(d*-d(u_k) - 4LQ/(k+1)^2) = {excess:.1e} over k<={K}, "
                                  f"{secs['tseng']:.1f}s")


def test_criterion_09_contraction(acceptance_log, gen_inst):
    rng = np.random.default_rng(9)
    insts = [gen_inst] + exact_instances()[:2]
    bad = {}
    for i, inst in enumerate(insts):
        U = sample_dual_points(inst, rng, 200)
        rows = lemma_checks(inst, list(zip(U[:100], U[100:])), tol=TOL)
        for name in ("contraction", "contraction_linear", "linear_constant_tighter"):
            if rows[name]["count"] != 100 or rows[name]["violations"]:
                bad[f"{i}/{name}"] = rows[name]["violations"]
    ok = not bad
    record(acceptance_log, 9, ok, f"{len(insts)} instances x 100 pairs, violations {bad or 0} "
                                  "(including sigma_max/theta <= min gamma)")


def _slope(k, y, floor):
    sel = (k >= 100) & (k <= K) & (y > floor)
    if sel.sum() < 3:
        return np.nan, int(sel.sum())
    return float(np.polyfit(np.log(k[sel]), np.log(y[sel]), 1)[0]), int(sel.sum())


def test_criterion_10_rate_order(acceptance_log, long_runs, gen_ref):
    runs, reports, secs = long_runs
    # points whose error is within reach of the reference accuracy carry no rate information
    floor_d = 100 * gen_ref.gap_tol
    floor_f = 100 * reports["fista"].context.ref_f_slack + 1e-12
    k = np.arange(K + 1)
    s_pg, n_pg = _slope(k, gen_ref.d - np.asarray(runs["pg"].d), floor_d)
    s_fi, n_fi = _slope(k, gen_ref.d - np.asarray(runs["fista"].d), floor_d)
    s_fv, n_fv = _slope(k, np.abs(np.asarray(runs["fista"].f_xbar) - gen_ref.f), floor_f)
    ok = s_pg <= -0.9 and s_fi <= -1.8 and s_fv <= -0.9
    record(acceptance_log, 10, ok, f"slopes pg {s_pg:.2f} ({n_pg} pts), fista {s_fi:.2f} "
                                   f"({n_fi} pts), fista value {s_fv:.2f} ({n_fv} pts)")


def test_criterion_11_linear_rate(acceptance_log):
    t = time.perf_counter()
    worst = 0.0
    checked = 0
    for seed in range(3):
        inst = generate_instance(GeneratorConfig(seed=seed, box=False, gamma=0.0))
        ref = compute_reference(inst)
        prm = strongly_concave_rate_params(inst)
        tr = projected_dual_gradient(inst, np.zeros(inst.m + inst.p),
                                     StepSizeRule.strongly_concave(inst), 3000)
        dist = np.linalg.norm(tr.U - ref.u, axis=1)
        env = prm["q"] ** np.arange(len(dist)) * dist[0]
        sel = env > 1e-9
        checked += int(sel.sum())
        worst = max(worst, float(np.max(dist[sel] / env[sel])))
    secs = time.perf_counter() - t
    ok = worst <= 1 + 1e-6 and secs < 30
    record(acceptance_log, 11, ok, f"{checked} iterates on 3 instances, "
                                   f"max ||u_k-u*||/(q^k||u_0-u*||) = {worst:.6f}, {secs:.1f}s")


def test_criterion_12_negative_control(acceptance_log, long_runs, gen_inst, gen_ref, tmp_path):
    runs, reports, secs = long_runs
    tr = runs["pg"]
    tr.to_csv(tmp_path / "pg_trace.csv", reference=gen_ref)
    reports["pg"].to_json(tmp_path / "pg_certificate.json", trace_file="pg_trace.csv")
    quiet = []
    clean = verify_report(tmp_path, out=quiet.append)

    rows = list(csv.reader(open(tmp_path / "pg_trace.csv")))
    header = rows[0]
    # push the dual gap at k = 5000 above the envelope and move u_k away from u*
    d_col, u_col = header.index("d"), header.index("u2")
    env = reports["pg"].families["envelope_dual_gap"].bound[5000]
    rows[5001][d_col] = repr(float(rows[5001][d_col]) - 2 * float(env))
    rows[7001][u_col] = repr(float(rows[7001][u_col]) + 1e-3)
    with open(tmp_path / "pg_trace.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    lines = []
    corrupted = verify_report(tmp_path, out=lines.append)
    named = sorted({s.split()[1] for s in lines if s.strip().startswith("violation:")})

    data = json.loads((tmp_path / "pg_certificate.json").read_text())
    del data["context"]["ref"]
    (tmp_path / "pg_certificate.json").write_text(json.dumps(data))
    noref_lines = []
    noref = verify_report(tmp_path, out=noref_lines.append)
    ok = (clean == 0 and corrupted != 0 and "envelope_dual_gap" in named
          and "dual_distance_monotone" in named and noref != 0
          and any("reference required" in s for s in noref_lines))
    record(acceptance_log, 12, ok, f"clean exit {clean}, perturbed exit {corrupted} "
                                   f"naming {named}, missing reference exit {noref}")
