"""Problem data: objective, constraints, feasible set and primitive evaluations.

The problem solved throughout the package is::

    minimize    f(x)
    subject to  g_i(x) <= 0,  i = 1..m
                A x + b = 0
                x in X

with ``f`` strongly convex over ``X`` and ``X`` either a box or the whole
space.  Dual points ``u`` stack the ``m`` inequality multipliers (kept
nonnegative) on top of the ``p`` equality multipliers (free).
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError

QUADRATIC = "quadratic"
QUADRATIC_L1 = "quadratic_l1"
CUSTOM = "custom"

BOX = "box"
WHOLE_SPACE = "whole_space"

# slack allowed when comparing a user-supplied modulus with eig(H)
_EIG_RTOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _vector(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise InputError(f"{name} must be a vector of length {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class ObjectiveModel:
    """Strongly convex objective ``f``.

    Quadratic models are ``0.5 x'Hx + t'x + gamma * ||P x - s||_1``.  A custom
    model is a smooth function given by callables; it has no l1 part.
    """

    kind: str
    theta: float
    H: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None
    gamma: float = 0.0
    P: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    M: Optional[float] = None
    value_fn: Optional[Callable] = None
    gradient_fn: Optional[Callable] = None
    smooth_lipschitz: Optional[float] = None

    @classmethod
    def quadratic(cls, H, t, gamma=0.0, P=None, s=None, theta=None, M=None):
        H = np.array(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise InputError(f"H must be square, got shape {H.shape}")
        if not np.allclose(H, H.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
            raise InputError("H must be symmetric")
        H = 0.5 * (H + H.T)
        n = H.shape[0]
        t = _vector(t, n, "t")
        gamma = float(gamma)
        if gamma < 0:
            raise InputError("gamma must be nonnegative")
        if P is None:
            P = np.zeros((0, n))
        P = np.atleast_2d(np.array(P, dtype=float)).reshape(-1, n)
        s = np.zeros(P.shape[0]) if s is None else _vector(s, P.shape[0], "s")
        eigs = np.linalg.eigvalsh(H) if n else np.array([1.0])
        if eigs[0] <= 0:
            raise InputError("H must be positive definite")
        if theta is None:
            theta = float(eigs[0])
        theta = float(theta)
        if not 0 < theta <= eigs[0] * (1 + _EIG_RTOL):
            raise InputError(
                f"theta={theta} is not a valid convexity modulus (lambda_min(H)={eigs[0]})")
        if M is None and (gamma == 0.0 or P.shape[0] == 0):
            M = float(eigs[-1])
        kind = QUADRATIC_L1 if gamma > 0 and P.shape[0] > 0 else QUADRATIC
        return cls(kind=kind, theta=theta, H=_frozen(H), t=_frozen(t), gamma=gamma,
                   P=_frozen(P), s=_frozen(s), M=M, smooth_lipschitz=float(eigs[-1]))

    @classmethod
    def custom(cls, value, gradient, theta, smooth_lipschitz=None, M=None):
        """Smooth strongly convex objective given by ``value(x)`` and ``gradient(x)``."""
        if theta <= 0:
            raise InputError("theta must be positive")
        return cls(kind=CUSTOM, theta=float(theta), value_fn=value, gradient_fn=gradient,
                   M=M, smooth_lipschitz=smooth_lipschitz)

    @property
    def is_quadratic(self):
        return self.kind in (QUADRATIC, QUADRATIC_L1)

    @property
    def has_l1(self):
        return self.kind == QUADRATIC_L1

    @property
    def q(self):
        return 0 if self.P is None else self.P.shape[0]

    def smooth_value(self, x):
        if self.kind == CUSTOM:
            return float(self.value_fn(x))
        return float(0.5 * x @ self.H @ x + self.t @ x)

    def smooth_gradient(self, x):
        if self.kind == CUSTOM:
            return np.asarray(self.gradient_fn(x), dtype=float)
        return self.H @ x + self.t

    def l1_value(self, x):
        if not self.has_l1:
            return 0.0
        return float(self.gamma * np.abs(self.P @ x - self.s).sum())

    def value(self, x):
        return self.smooth_value(x) + self.l1_value(x)

    def subgradient(self, x):
        """A subgradient of ``f`` at ``x``; kinks of the l1 term use sign(0) = 0."""
        g = self.smooth_gradient(x)
        if self.has_l1:
            g = g + self.gamma * self.P.T @ np.sign(self.P @ x - self.s)
        return g

    def separable_l1(self):
        """Column map of a monomial ``P``, or None.

        Returns ``(cols, coef)`` when every row of ``P`` has exactly one nonzero
        and no column is used twice, so the l1 term splits per coordinate.
        """
        if not self.has_l1:
            return np.zeros(0, dtype=int), np.zeros(0)
        nz = self.P != 0
        if np.any(nz.sum(axis=1) != 1):
            return None
        cols = np.argmax(nz, axis=1)
        if len(set(cols.tolist())) != len(cols):
            return None
        return cols, self.P[np.arange(len(cols)), cols]


@dataclass(frozen=True, eq=False)
class InequalityConstraint:
    """Convex constraint ``g(x) <= 0``.

    ``lipschitz`` bounds ``|g(x) - g(y)| / ||x - y||`` on X.  ``grad_lipschitz``
    (Lipschitz constant of the gradient) and ``grad_sup`` (bound on the gradient
    norm over X) are optional and feed the step-size surrogates.
    """

    fun: Callable
    grad: Callable
    lipschitz: float
    linear_form: Optional[tuple] = None
    grad_lipschitz: Optional[float] = None
    grad_sup: Optional[float] = None

    @classmethod
    def affine(cls, a, b):
        a = _frozen(np.ravel(a))
        b = float(b)
        norm = float(np.linalg.norm(a))
        return cls(fun=lambda x: float(a @ x + b), grad=lambda x: a,
                   lipschitz=norm if norm > 0 else 1.0, linear_form=(a, b),
                   grad_lipschitz=0.0, grad_sup=norm)

    @classmethod
    def ball(cls, center, radius, feasible_set=None):
        """``0.5 ||x - c||^2 - 0.5 r^2 <= 0``; constants taken over a box X."""
        c = _frozen(np.ravel(center))
        r = float(radius)
        if feasible_set is not None and feasible_set.kind == BOX:
            far = np.maximum(np.abs(feasible_set.lower - c), np.abs(feasible_set.upper - c))
            sup = float(np.linalg.norm(far))
        else:
            sup = None
        return cls(fun=lambda x: float(0.5 * (x - c) @ (x - c) - 0.5 * r * r),
                   grad=lambda x: x - c, lipschitz=sup if sup else 1.0,
                   grad_lipschitz=1.0, grad_sup=sup)

    @property
    def is_affine(self):
        return self.linear_form is not None

    def __call__(self, x):
        return self.fun(x)


@dataclass(frozen=True, eq=False)
class EqualityConstraints:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2:
            raise InputError("A must be a matrix")
        b = _vector(self.b, A.shape[0], "b")
        if A.shape[0] > 0 and not np.any(A):
            raise InputError("equality matrix A must not be zero when p > 0")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def p(self):
        return self.A.shape[0]

    def residual(self, x):
        return self.A @ x + self.b


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """Box ``lower <= x <= upper`` or the whole space (both bounds None)."""

    n: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.lower is None) != (self.upper is None):
            raise InputError("box needs both lower and upper bounds")
        if self.lower is not None:
            lo = _vector(self.lower, self.n, "box_lower")
            hi = _vector(self.upper, self.n, "box_upper")
            if np.any(lo > hi) or not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
                raise InputError("box bounds must be finite with lower <= upper")
            object.__setattr__(self, "lower", _frozen(lo))
            object.__setattr__(self, "upper", _frozen(hi))

    @classmethod
    def box(cls, lower, upper):
        lower = np.ravel(np.asarray(lower, dtype=float))
        return cls(lower.shape[0], lower, upper)

    @classmethod
    def whole_space(cls, n):
        return cls(n)

    @property
    def kind(self):
        return WHOLE_SPACE if self.lower is None else BOX

    @property
    def diameter(self):
        if self.lower is None:
            return None
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, atol=0.0):
        if self.lower is None:
            return True
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))


@dataclass(frozen=True)
class SpectralConstants:
    sigma_max_A: float
    sigma_max_At: Optional[float]
    sigma_min_At: Optional[float]
    lambda_min_H: Optional[float]
    lambda_max_H: Optional[float]


def _sigma_max(A):
    if A.size == 0:
        return 0.0
    return float(np.sqrt(max(np.linalg.eigvalsh(A.T @ A)[-1], 0.0)))


def _sigma_min(A):
    # max{sqrt(lmin(A A')), sqrt(lmin(A'A))}, zero-dimension gives 0
    if A.size == 0:
        return 0.0
    lo1 = np.linalg.eigvalsh(A @ A.T)[0]
    lo2 = np.linalg.eigvalsh(A.T @ A)[0]
    return float(np.sqrt(max(lo1, lo2, 0.0)))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Immutable problem description with cached matrix constants.

    ``multiplier_floor`` is an optional vector ``u_tilde`` whose first ``m``
    entries are negative and for which the Lagrangian stays strongly convex;
    it extends the oracle domain and enters the step-size surrogates.
    """

    objective: ObjectiveModel
    inequalities: Sequence[InequalityConstraint]
    equalities: EqualityConstraints
    feasible_set: FeasibleSet
    slater_point: Optional[np.ndarray] = None
    multiplier_floor: Optional[np.ndarray] = None
    name: str = ""
    constants: SpectralConstants = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        n = self.feasible_set.n
        if self.equalities.A.shape[1] != n:
            raise InputError("equality matrix has the wrong number of columns")
        if self.objective.is_quadratic and self.objective.H.shape[0] != n:
            raise InputError("objective dimension does not match the feasible set")
        if self.objective.has_l1 and self.objective.P.shape[1] != n:
            raise InputError("P has the wrong number of columns")
        for con in self.inequalities:
            if con.is_affine and con.linear_form[0].shape[0] != n:
                raise InputError("affine constraint has the wrong dimension")
        if self.m + self.p == 0:
            raise InputError("need at least one dualized constraint (m + p >= 1)")
        if self.slater_point is not None:
            xs = _frozen(_vector(self.slater_point, n, "slater_point"))
            object.__setattr__(self, "slater_point", xs)
            if not is_slater_point(self, xs):
                raise InputError("slater_point is not strictly feasible")
        if self.multiplier_floor is not None:
            fl = _frozen(_vector(self.multiplier_floor, self.m + self.p, "multiplier_floor"))
            if np.any(fl[: self.m] >= 0):
                raise InputError("multiplier_floor must be negative on inequality entries")
            object.__setattr__(self, "multiplier_floor", fl)
        object.__setattr__(self, "constants", _compute_constants(self))

    @property
    def n(self):
        return self.feasible_set.n

    @property
    def m(self):
        return len(self.inequalities)

    @property
    def p(self):
        return self.equalities.p

    @property
    def q(self):
        return self.objective.q

    @property
    def all_linear(self):
        return all(c.is_affine for c in self.inequalities)

    @property
    def A_ineq(self):
        if not self.all_linear:
            return None
        if self.m == 0:
            return np.zeros((0, self.n))
        return np.vstack([c.linear_form[0] for c in self.inequalities])

    @property
    def b_ineq(self):
        if not self.all_linear:
            return None
        return np.array([c.linear_form[1] for c in self.inequalities], dtype=float)

    @property
    def A_tilde(self):
        Ai = self.A_ineq
        return None if Ai is None else np.vstack([Ai, self.equalities.A])

    @property
    def b_tilde(self):
        bi = self.b_ineq
        return None if bi is None else np.concatenate([bi, self.equalities.b])

    @property
    def lipschitz_constants(self):
        return np.array([c.lipschitz for c in self.inequalities], dtype=float)

    def constraint_values(self, x):
        """``[g_1(x), ..., g_m(x), (A x + b)']'`` (the dual gradient at x̄)."""
        g = np.array([c.fun(x) for c in self.inequalities], dtype=float)
        return np.concatenate([g, self.equalities.residual(x)])

    def lagrangian(self, x, u):
        return self.objective.value(x) + float(u @ self.constraint_values(x))


def _compute_constants(inst):
    obj = inst.objective
    At = inst.A_tilde
    if obj.is_quadratic and obj.H.size:
        eig = np.linalg.eigvalsh(obj.H)
        lmin, lmax = float(eig[0]), float(eig[-1])
    else:
        lmin = lmax = None
    return SpectralConstants(
        sigma_max_A=_sigma_max(inst.equalities.A),
        sigma_max_At=None if At is None else _sigma_max(At),
        sigma_min_At=None if At is None else _sigma_min(At),
        lambda_min_H=lmin,
        lambda_max_H=lmax,
    )


def spectral_constants(inst):
    return inst.constants


def eval_objective(inst, x):
    x = _vector(x, inst.n, "x")
    return inst.objective.value(x)


def infeasibility(inst, x, atol=1e-12):
    """Euclidean norm of equality residuals stacked with positive parts of g.

    Residual entries of magnitude at most ``atol`` count as satisfied.
    """
    x = _vector(x, inst.n, "x")
    r = inst.constraint_values(x)
    r[: inst.m] = np.maximum(r[: inst.m], 0.0)
    r[np.abs(r) <= atol] = 0.0
    return float(np.linalg.norm(r))


def project_onto_D(v, m):
    """Clamp the first ``m`` (inequality) multipliers at zero."""
    u = np.array(v, dtype=float)
    u[:m] = np.maximum(u[:m], 0.0)
    return u


def in_D(u, m):
    return bool(np.all(u[:m] >= 0))


def project_onto_X(feasible_set, x):
    if feasible_set.lower is None:
        return np.array(x, dtype=float)
    return np.clip(x, feasible_set.lower, feasible_set.upper)


def is_slater_point(inst, x, eq_tol=1e-9):
    vals = inst.constraint_values(x)
    if np.any(vals[: inst.m] >= 0):
        return False
    if inst.p and np.max(np.abs(vals[inst.m:])) > eq_tol:
        return False
    return inst.feasible_set.contains(x)


def check_constraint_samples(con, feasible_set, rng, samples=200, scale=1.0, tol=1e-9):
    """Sampled convexity and Lipschitz checks of one constraint over X.

    Returns the worst violation of ``g(y) >= g(x) + grad(x)'(y - x)`` and of
    ``|g(x) - g(y)| <= L ||x - y||`` over random pairs drawn from X (or a
    ball of radius ``scale`` when X is the whole space).
    """
    n = feasible_set.n

    def draw():
        if feasible_set.lower is None:
            return scale * rng.standard_normal(n)
        return rng.uniform(feasible_set.lower, feasible_set.upper)

    worst_convex = 0.0
    worst_lip = 0.0
    for _ in range(samples):
        x, y = draw(), draw()
        gx, gy = con.fun(x), con.fun(y)
        worst_convex = max(worst_convex, gx + con.grad(x) @ (y - x) - gy)
        worst_lip = max(worst_lip, abs(gx - gy) - con.lipschitz * np.linalg.norm(x - y))
    return {"convexity": worst_convex, "lipschitz": worst_lip,
            "ok": worst_convex <= tol and worst_lip <= tol}


# -- JSON instance format -------------------------------------------------

def _lst(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def instance_to_dict(inst):
    if not inst.all_linear:
        raise InputError("only instances with affine inequalities serialize to JSON")
    obj = inst.objective
    if not obj.is_quadratic:
        raise InputError("only quadratic objectives serialize to JSON")
    fs = inst.feasible_set
    d = {
        "n": inst.n, "m": inst.m, "p": inst.p, "q": inst.q,
        "H": _lst(obj.H), "t": _lst(obj.t), "gamma": obj.gamma,
        "P": _lst(obj.P), "s": _lst(obj.s),
        "Aineq": _lst(inst.A_ineq), "bineq": _lst(inst.b_ineq),
        "Aeq": _lst(inst.equalities.A), "beq": _lst(inst.equalities.b),
        "box_lower": _lst(fs.lower), "box_upper": _lst(fs.upper),
        "theta": obj.theta,
        "slater_point": _lst(inst.slater_point),
    }
    if obj.M is not None:
        d["M"] = obj.M
    if inst.name:
        d["name"] = inst.name
    return d


def _mat(rows, ncols):
    if rows is None or len(rows) == 0:
        return np.zeros((0, ncols))
    a = np.array(rows, dtype=float)
    if a.ndim != 2 or a.shape[1] != ncols:
        raise InputError(f"matrix with {ncols} columns expected, got shape {a.shape}")
    return a


def instance_from_dict(d):
    try:
        n = int(d["n"])
        H = np.array(d["H"], dtype=float).reshape(n, n)
        P = _mat(d.get("P"), n)
        obj = ObjectiveModel.quadratic(H, d["t"], d.get("gamma", 0.0), P,
                                       d.get("s") or np.zeros(P.shape[0]),
                                       theta=d.get("theta"), M=d.get("M"))
        Ai = _mat(d.get("Aineq"), n)
        bi = np.array(d.get("bineq") or [], dtype=float)
        if bi.shape[0] != Ai.shape[0]:
            raise InputError("bineq length does not match Aineq")
        ineqs = [InequalityConstraint.affine(a, b) for a, b in zip(Ai, bi)]
        Ae = _mat(d.get("Aeq"), n)
        eqs = EqualityConstraints(Ae, np.array(d.get("beq") or [], dtype=float))
        if d.get("box_lower") is None:
            fs = FeasibleSet.whole_space(n)
        else:
            fs = FeasibleSet.box(d["box_lower"], d["box_upper"])
        for key, val in (("m", len(ineqs)), ("p", eqs.p), ("q", obj.q)):
            if key in d and int(d[key]) != val:
                raise InputError(f"declared {key}={d[key]} but data has {val}")
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed instance: {exc!r}") from exc
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed instance: {exc}") from exc
    return ProblemInstance(obj, ineqs, eqs, fs, slater_point=d.get("slater_point"),
                           name=d.get("name", ""))


def save_instance(inst, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1)
        fh.write("\n")


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))
