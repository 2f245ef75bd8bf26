import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualcert.errors import InputError
from dualcert.generator import GeneratorConfig, generate_instance
from dualcert.problem import (EqualityConstraints, FeasibleSet, InequalityConstraint,
                              ObjectiveModel, ProblemInstance, check_constraint_samples,
                              in_D, infeasibility, instance_from_dict, instance_to_dict,
                              is_slater_point, load_instance, project_onto_D, project_onto_X,
                              save_instance)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_quadratic_objective_values():
    H = np.diag([2.0, 4.0])
    obj = ObjectiveModel.quadratic(H, [1.0, -1.0], gamma=0.5, P=[[1.0, 1.0]], s=[1.0])
    x = np.array([1.0, 2.0])
    assert obj.value(x) == pytest.approx(0.5 * (2 + 16) + (1 - 2) + 0.5 * 2.0)
    assert obj.theta == pytest.approx(2.0)
    assert obj.has_l1 and obj.q == 1
    # subgradient takes sign(0) = 0 on kinks
    g = obj.subgradient(np.array([0.5, 0.5]))
    np.testing.assert_allclose(g, H @ [0.5, 0.5] + [1.0, -1.0])


def test_objective_validation():
    with pytest.raises(InputError):
        ObjectiveModel.quadratic([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(InputError):
        ObjectiveModel.quadratic([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    with pytest.raises(InputError):
        # theta may not exceed the smallest eigenvalue
        ObjectiveModel.quadratic(np.eye(2), [0.0, 0.0], theta=2.0)
    with pytest.raises(InputError):
        ObjectiveModel.quadratic(np.eye(2), [0.0, 0.0], gamma=-1.0, P=np.eye(2), s=[0, 0])


def test_default_M_only_without_l1():
    assert ObjectiveModel.quadratic(np.diag([1.0, 3.0]), [0, 0]).M == pytest.approx(3.0)
    assert ObjectiveModel.quadratic(np.eye(2), [0, 0], 1.0, np.eye(2), [0, 0]).M is None


def test_instance_requires_a_dualized_constraint():
    obj = ObjectiveModel.quadratic(np.eye(2), [0.0, 0.0])
    with pytest.raises(InputError):
        ProblemInstance(obj, [], EqualityConstraints.empty(2), FeasibleSet.whole_space(2))


def test_zero_equality_matrix_rejected():
    with pytest.raises(InputError):
        EqualityConstraints(np.zeros((1, 2)), [1.0])


def test_bad_slater_point_rejected():
    obj = ObjectiveModel.quadratic([[1.0]], [0.0])
    con = InequalityConstraint.affine([-1.0], 1.0)
    with pytest.raises(InputError):
        ProblemInstance(obj, [con], EqualityConstraints.empty(1), FeasibleSet.whole_space(1),
                        slater_point=[0.5])


def test_box_validation():
    with pytest.raises(InputError):
        FeasibleSet.box([1.0], [0.0])
    with pytest.raises(InputError):
        FeasibleSet(1, lower=np.zeros(1))
    fs = FeasibleSet.box([-1.0, -2.0], [1.0, 2.0])
    assert fs.diameter == pytest.approx(np.sqrt(4 + 16))
    assert FeasibleSet.whole_space(3).diameter is None


def test_spectral_constants_hand_case():
    # A' = (1, 0), A = (0, 2): sigma_max(A) = 2, sigma_max(Ã) = 2, sigma_min(Ã) = 1
    obj = ObjectiveModel.quadratic(2 * np.eye(2), [0.0, 0.0])
    inst = ProblemInstance(obj, [InequalityConstraint.affine([1.0, 0.0], -1.0)],
                           EqualityConstraints([[0.0, 2.0]], [0.0]), FeasibleSet.whole_space(2))
    c = inst.constants
    assert c.sigma_max_A == pytest.approx(2.0)
    assert c.sigma_max_At == pytest.approx(2.0)
    assert c.sigma_min_At == pytest.approx(1.0)
    assert c.lambda_min_H == pytest.approx(2.0)


def test_infeasibility_stacks_positive_parts(t1, eq1):
    assert infeasibility(t1, [0.0]) == pytest.approx(1.0)
    assert infeasibility(t1, [3.0]) == 0.0
    assert infeasibility(eq1, [3.0]) == pytest.approx(2.0)
    assert infeasibility(eq1, [1.0 + 1e-14]) == 0.0


@given(arrays(float, 6, elements=finite), st.integers(0, 6))
def test_projection_onto_D_idempotent(v, m):
    u = project_onto_D(v, m)
    assert in_D(u, m)
    np.testing.assert_array_equal(project_onto_D(u, m), u)
    # equality multipliers are never clamped
    np.testing.assert_array_equal(u[m:], v[m:])


@given(arrays(float, 3, elements=finite))
def test_projection_onto_box(v):
    fs = FeasibleSet.box([-1, 0, 2], [1, 0.5, 3])
    x = project_onto_X(fs, v)
    assert fs.contains(x)
    np.testing.assert_array_equal(project_onto_X(FeasibleSet.whole_space(3), v), v)


def test_generator_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_instance(generate_instance(GeneratorConfig(seed=7)), a)
    save_instance(generate_instance(GeneratorConfig(seed=7)), b)
    assert a.read_bytes() == b.read_bytes()
    save_instance(generate_instance(GeneratorConfig(seed=8)), b)
    assert a.read_bytes() != b.read_bytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4), st.integers(0, 3), st.booleans())
def test_generated_instances_have_slater_points(seed, m, p, box):
    if m + p == 0:
        m = 1
    inst = generate_instance(GeneratorConfig(seed=seed, n=6, m=m, p=p, q=3, box=box))
    assert is_slater_point(inst, inst.slater_point)
    assert np.linalg.eigvalsh(inst.objective.H)[0] > 0
    if p:
        assert np.linalg.matrix_rank(inst.equalities.A) == p


def test_generator_rejects_impossible_dimensions():
    with pytest.raises(InputError):
        generate_instance(GeneratorConfig(n=3, p=4))
    with pytest.raises(InputError):
        generate_instance(GeneratorConfig(m=0, p=0))
    with pytest.raises(InputError):
        generate_instance(GeneratorConfig(n=3, q=4, p=1, separable_P=True))


def test_inequality_only_instance_is_valid():
    inst = generate_instance(GeneratorConfig(p=0, m=1))
    assert inst.p == 0 and inst.m == 1


def test_json_round_trip(tmp_path, gen_inst):
    path = tmp_path / "inst.json"
    save_instance(gen_inst, path)
    back = load_instance(path)
    assert instance_to_dict(back) == instance_to_dict(gen_inst)
    x = np.linspace(-1, 1, gen_inst.n)
    assert back.objective.value(x) == gen_inst.objective.value(x)


def test_json_dimension_mismatch(gen_inst):
    d = instance_to_dict(gen_inst)
    d["m"] = 7
    with pytest.raises(InputError):
        instance_from_dict(d)
    d = instance_to_dict(gen_inst)
    del d["H"]
    with pytest.raises(InputError):
        instance_from_dict(json.loads(json.dumps(d)))


def test_nonlinear_instances_do_not_serialize(ball):
    with pytest.raises(InputError):
        instance_to_dict(ball)


def test_constraint_samples(rng, ball):
    con = ball.inequalities[0]
    report = check_constraint_samples(con, ball.feasible_set, rng)
    assert report["ok"]
    bad = InequalityConstraint(fun=lambda x: -float(x @ x), grad=lambda x: -2 * x, lipschitz=0.1)
    assert not check_constraint_samples(bad, ball.feasible_set, rng)["ok"]
