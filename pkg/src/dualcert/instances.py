"""Small instances with known closed-form solutions, used as test oracles."""

import numpy as np

from .problem import (EqualityConstraints, FeasibleSet, InequalityConstraint, ObjectiveModel,
                      ProblemInstance)


def halfsquare_inequality():
    """min 0.5 x^2 s.t. 1 - x <= 0.

    x̄(u) = u, d(u) = u - u^2/2, u* = x* = 1, f* = d* = 0.5.
    """
    obj = ObjectiveModel.quadratic([[1.0]], [0.0])
    return ProblemInstance(obj, [InequalityConstraint.affine([-1.0], 1.0)],
                           EqualityConstraints.empty(1), FeasibleSet.whole_space(1),
                           slater_point=[2.0], name="halfsquare_inequality")


def halfsquare_equality():
    """min 0.5 x^2 s.t. x - 1 = 0.

    x̄(u) = -u, d(u) = -u^2/2 - u, u* = -1, x* = 1, f* = d* = 0.5.
    """
    obj = ObjectiveModel.quadratic([[1.0]], [0.0])
    return ProblemInstance(obj, [], EqualityConstraints([[1.0]], [-1.0]),
                           FeasibleSet.whole_space(1), slater_point=[1.0],
                           name="halfsquare_equality")


def ball_projection(c=(2.0, 1.0), half_width=2.0):
    """min 0.5 ||x - c||^2 s.t. 0.5 ||x||^2 - 0.5 <= 0, X = [-w, w]^n.

    For ``||c|| > 1`` and c inside the box: x̄(u) = c / (1 + u),
    u* = ||c|| - 1, x* = c / ||c||, f* = 0.5 (||c|| - 1)^2 - 0.5 ||c||^2 (the
    constant term of the objective is dropped).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    fs = FeasibleSet.box(-half_width * np.ones(n), half_width * np.ones(n))
    obj = ObjectiveModel.quadratic(np.eye(n), -c)
    con = InequalityConstraint.ball(np.zeros(n), 1.0, fs)
    return ProblemInstance(obj, [con], EqualityConstraints.empty(n), fs, slater_point=np.zeros(n),
                           multiplier_floor=[-0.5], name="ball_projection")


def _ball_solution():
    c = np.array([2.0, 1.0])
    r = np.linalg.norm(c)
    # the objective drops the constant 0.5 ||c||^2
    return {"u": [r - 1.0], "x": list(c / r), "f": 0.5 * (r - 1.0) ** 2 - 0.5 * float(c @ c)}


ANALYTIC = {
    "halfsquare_inequality": (halfsquare_inequality, {"u": [1.0], "x": [1.0], "f": 0.5}),
    "halfsquare_equality": (halfsquare_equality, {"u": [-1.0], "x": [1.0], "f": 0.5}),
    "ball_projection": (ball_projection, _ball_solution()),
}


def analytic_solution(name):
    sol = ANALYTIC[name][1]
    return {"u": np.array(sol["u"]), "x": np.array(sol["x"]), "f": sol["f"], "d": sol["f"]}
