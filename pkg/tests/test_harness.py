import csv
import json

import numpy as np
import pytest

from dualcert.cli import main
from dualcert.errors import BudgetExhausted, ConfigError, ReferenceInconsistency
from dualcert.experiment import log_grid, parse_methods, run_experiment, verify_report
from dualcert.generator import GeneratorConfig, generate_instance
from dualcert.reference import ReferenceSolution, compute_reference


def test_log_grid():
    assert log_grid(1) == [1]
    assert log_grid(100) == [1, 2, 5, 10, 20, 50, 100]
    assert log_grid(300) == [1, 2, 5, 10, 20, 50, 100, 200, 300]


def test_parse_methods():
    assert parse_methods("pg, fista") == ["pg", "fista"]
    with pytest.raises(ConfigError):
        parse_methods("pg,newton")


def test_reference_analytic(t1, eq1):
    ref = compute_reference(t1)
    assert abs(ref.u[0] - 1) <= 1e-9 and abs(ref.f - 0.5) <= 1e-9 and abs(ref.d - 0.5) <= 1e-9
    ref = compute_reference(eq1)
    assert abs(ref.u[0] + 1) <= 1e-9 and abs(ref.x[0] - 1) <= 1e-9


def test_reference_nonlinear(ball_ref):
    assert ball_ref.u[0] == pytest.approx(np.sqrt(5) - 1, abs=1e-9)
    np.testing.assert_allclose(ball_ref.x, np.array([2.0, 1.0]) / np.sqrt(5), atol=1e-9)


@pytest.mark.parametrize("seed", [0, 5])
def test_reference_strong_duality(seed):
    ref = compute_reference(generate_instance(GeneratorConfig(seed=seed)))
    assert abs(ref.f - ref.d) <= 1e-7 * (1 + abs(ref.f))


def test_reference_trivial_case():
    """No constraint binds at x̄(0): the multiplier is zero."""
    from dualcert.problem import (EqualityConstraints, FeasibleSet, InequalityConstraint,
                                  ObjectiveModel, ProblemInstance)
    obj = ObjectiveModel.quadratic([[1.0]], [0.0])
    inst = ProblemInstance(obj, [InequalityConstraint.affine([0.0], -1.0)],
                           EqualityConstraints.empty(1), FeasibleSet.whole_space(1))
    ref = compute_reference(inst)
    assert ref.method == "trivial" and ref.u[0] == 0.0


def test_reference_budget(gen_inst):
    with pytest.raises(BudgetExhausted) as info:
        compute_reference(gen_inst, budget=20)
    assert info.value.best is not None


def test_reference_json(tmp_path, t1):
    ref = compute_reference(t1)
    ref.save(tmp_path / "r.json")
    back = ReferenceSolution.load(tmp_path / "r.json")
    assert back.d == ref.d and np.array_equal(back.u, ref.u)


@pytest.fixture(scope="module")
def experiment(tmp_path_factory, gen_inst, gen_ref):
    out = tmp_path_factory.mktemp("exp")
    res = run_experiment(gen_inst, ["pg", "fista", "tseng"], 300, out, gen_ref)
    return out, res


def test_experiment_files(experiment):
    out, res = experiment
    names = sorted(p.name for p in out.iterdir())
    assert names == ["fista_certificate.json", "fista_trace.csv", "pg_certificate.json",
                     "pg_trace.csv", "summary.csv", "tseng_certificate.json", "tseng_trace.csv"]
    assert res["violations"] == {"pg": {}, "fista": {}, "tseng": {}}
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    ks = {m: [int(r["k"]) for r in rows if r["method"] == m] for m in ("pg", "fista", "tseng")}
    assert ks["pg"] == ks["fista"] == ks["tseng"] == log_grid(300)


def test_experiment_no_methods(tmp_path, gen_inst, gen_ref):
    assert run_experiment(gen_inst, [], 10, tmp_path / "x", gen_ref)["files"] == []
    with pytest.raises(ReferenceInconsistency):
        run_experiment(gen_inst, ["pg"], 10, tmp_path / "x", None)


def test_verify_clean(experiment):
    out, _ = experiment
    lines = []
    assert verify_report(out, out=lines.append) == 0
    assert any("worst margin" in s for s in lines)


def _copy(src, dst):
    dst.mkdir()
    for p in src.iterdir():
        (dst / p.name).write_bytes(p.read_bytes())


def test_verify_flags_perturbed_u(experiment, tmp_path):
    out, _ = experiment
    bad = tmp_path / "bad"
    _copy(out, bad)
    path = bad / "pg_trace.csv"
    rows = list(csv.reader(open(path)))
    col = rows[0].index("u2")
    rows[151][col] = repr(float(rows[151][col]) + 0.5)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    lines = []
    assert verify_report(bad / "pg_certificate.json", out=lines.append) == 1
    assert any("violation: dual_distance_monotone" in s for s in lines)


def test_verify_missing_reference(experiment, tmp_path):
    out, _ = experiment
    bad = tmp_path / "noref"
    _copy(out, bad)
    path = bad / "fista_certificate.json"
    data = json.loads(path.read_text())
    del data["context"]["ref"]
    path.write_text(json.dumps(data))
    lines = []
    assert verify_report(path, out=lines.append) == 2
    assert "reference required" in lines[0]


def test_verify_malformed(tmp_path):
    (tmp_path / "x_certificate.json").write_text("{not json")
    lines = []
    assert verify_report(tmp_path, out=lines.append) == 2
    assert "malformed" in lines[0]
    assert verify_report(tmp_path / "empty", out=lines.append) == 2


def test_cli_pipeline(tmp_path, capsys):
    inst, inst2 = tmp_path / "i.json", tmp_path / "i2.json"
    assert main(["gen", "--seed", "3", "--n", "6", "--m", "2", "--p", "1", "--q", "3",
                 "-o", str(inst)]) == 0
    assert main(["gen", "--seed", "3", "--n", "6", "--m", "2", "--p", "1", "--q", "3",
                 "-o", str(inst2)]) == 0
    assert inst.read_bytes() == inst2.read_bytes()
    ref = tmp_path / "r.json"
    assert main(["reference", str(inst), "-o", str(ref)]) == 0
    out = tmp_path / "out"
    assert main(["run", str(inst), "--ref", str(ref), "--methods", "pg,fista", "--k", "100",
                 "--alpha-rule", "compact", "-o", str(out)]) == 0
    assert main(["verify", str(out)]) == 0
    assert main(["run", str(inst), "--ref", str(ref), "--methods", "pg", "--k", "10",
                 "--alpha-rule", "nonsense", "-o", str(out)]) == 2
    assert "unknown step rule" in capsys.readouterr().err


def test_outputs_deterministic_except_wall_time(tmp_path, gen_inst, gen_ref):
    a = run_experiment(gen_inst, ["tseng"], 40, tmp_path / "a", gen_ref)
    b = run_experiment(gen_inst, ["tseng"], 40, tmp_path / "b", gen_ref)
    for fa, fb in zip(a["files"], b["files"]):
        if fa.endswith(".csv") and "trace" in fa:
            ra = [r[:9] + r[10:] for r in csv.reader(open(fa))]
            rb = [r[:9] + r[10:] for r in csv.reader(open(fb))]
            assert ra == rb
        else:
            assert open(fa, "rb").read() == open(fb, "rb").read()
