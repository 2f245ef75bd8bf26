"""Seeded random instances of the l1-regularized, linearly constrained QP."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError
from .problem import (EqualityConstraints, FeasibleSet, InequalityConstraint, ObjectiveModel,
                      ProblemInstance)


@dataclass
class GeneratorConfig:
    """Dimensions and shape controls for :func:`generate_instance`.

    The defaults give the 10-variable, 3-inequality, 2-equality, 5-row-l1
    setting.  ``box=False`` drops the box (X is then the whole space).
    ``diagonal_H`` with ``separable_P`` produces instances the oracle solves
    coordinate-wise.
    """

    seed: int = 0
    n: int = 10
    m: int = 3
    p: int = 2
    q: int = 5
    gamma: float = 1.0
    radius_min: float = 0.5
    radius_max: float = 2.0
    box: bool = True
    eig_min: float = 0.1
    eig_max: float = 10.0
    ensure_slater: bool = True
    diagonal_H: bool = False
    separable_P: bool = False

    def to_dict(self):
        return asdict(self)


def generate_instance(cfg):
    """Build a random instance with a strictly feasible interior point.

    The interior point is drawn first, then ``b_eq`` and ``b_ineq`` are set
    from it so that the equalities hold exactly and every inequality has
    slack in [0.1, 1].
    """
    n, m, p, q = cfg.n, cfg.m, cfg.p, cfg.q
    if min(n, m, p, q) < 0:
        raise InputError("dimensions must be nonnegative")
    if n < 1 or m + p < 1:
        raise InputError("need n >= 1 and m + p >= 1")
    if p > n:
        raise InputError(f"p={p} equalities cannot have full row rank in dimension n={n}")
    if cfg.separable_P and q > n:
        raise InputError("a separable P needs q <= n")
    if not 0 < cfg.eig_min <= cfg.eig_max:
        raise InputError("need 0 < eig_min <= eig_max")
    rng = np.random.default_rng(cfg.seed)

    eigs = np.geomspace(cfg.eig_min, cfg.eig_max, n) if n > 1 else np.array([cfg.eig_min])
    if cfg.diagonal_H:
        H = np.diag(rng.permutation(eigs))
    else:
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        H = (Q * eigs) @ Q.T
        H = 0.5 * (H + H.T)
    t = rng.standard_normal(n) * np.sqrt(cfg.eig_max)

    if cfg.separable_P:
        cols = rng.choice(n, size=q, replace=False)
        P = np.zeros((q, n))
        P[np.arange(q), cols] = rng.choice([-1.0, 1.0], size=q) * rng.uniform(0.5, 1.5, size=q)
    else:
        P = rng.standard_normal((q, n))
    s = rng.standard_normal(q)

    radii = rng.uniform(cfg.radius_min, cfg.radius_max, size=n)
    x_in = rng.uniform(-0.5, 0.5, size=n) * radii

    A_eq = rng.standard_normal((p, n))
    while p and np.linalg.matrix_rank(A_eq) < p:
        A_eq = rng.standard_normal((p, n))
    b_eq = -A_eq @ x_in
    A_in = rng.standard_normal((m, n))
    slack = rng.uniform(0.1, 1.0, size=m)
    b_in = -A_in @ x_in - slack

    obj = ObjectiveModel.quadratic(H, t, cfg.gamma, P, s)
    fs = FeasibleSet.box(-radii, radii) if cfg.box else FeasibleSet.whole_space(n)
    ineqs = [InequalityConstraint.affine(a, b) for a, b in zip(A_in, b_in)]
    return ProblemInstance(obj, ineqs, EqualityConstraints(A_eq, b_eq), fs,
                           slater_point=x_in if cfg.ensure_slater else None,
                           name=f"generated-seed{cfg.seed}")
