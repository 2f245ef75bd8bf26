"""Lagrangian minimization: x̄(u), the dual value d(u) and the dual gradient.

Three solution paths, picked per instance:

* ``closed_form`` -- quadratic objective, no l1 term, X the whole space and
  affine constraints: ``x̄ = -H^{-1}(t + Ã'u)`` from a cached Cholesky factor.
* ``separable`` -- diagonal H, monomial P, box or whole space, affine
  constraints: exact per-coordinate minimization.
* ``iterative`` -- everything else.  Quadratic problems with affine
  constraints run a primal-dual splitting loop and snap onto the active set
  (a KKT solve) as soon as that certifies; other problems run an accelerated
  proximal gradient loop with backtracking and periodic restarts.

Every result carries ``inner_residual``, a fixed-point residual of the
projected/proximal optimality map (plus an l1 complementarity term), so a
result can be trusted only as far as that number says.
"""

import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, OracleFailure, UnsupportedProblem
from .problem import project_onto_D

CLOSED_FORM = "closed_form"
SEPARABLE = "separable"
ITERATIVE = "iterative"

_RESTART_EVERY = 100
_POLISH_EVERY = 10
_POLISH_THRESHOLDS = (1e-3, 1e-5, 1e-7, 1e-9, 1e-11)


@dataclass
class OracleConfig:
    """Inner solver settings.

    ``schedule_constant`` ties the tolerance to the outer iteration ``k``:
    ``min(tolerance, schedule_constant / k**2)``.
    """

    tolerance: float = 1e-10
    max_inner_iterations: int = 50_000
    warm_start: bool = True
    schedule_constant: Optional[float] = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError("oracle tolerance must be positive")

    def tolerance_at(self, k):
        if self.schedule_constant is None or k < 1:
            return self.tolerance
        return min(self.tolerance, self.schedule_constant / k**2)


@dataclass
class OracleResult:
    xbar: np.ndarray
    dual_value: float
    dual_gradient: np.ndarray
    inner_iterations: int = 0
    inner_residual: float = 0.0
    l1_multiplier: Optional[np.ndarray] = field(default=None, repr=False)
    path: str = ""


@dataclass
class _Structure:
    """Per-instance data computed once (factorizations, dispatch)."""

    path: str
    linear: bool
    At: Optional[np.ndarray] = None
    bt: Optional[np.ndarray] = None
    chol: Optional[tuple] = None
    hdiag: Optional[np.ndarray] = None
    l1_cols: Optional[np.ndarray] = None
    l1_coef: Optional[np.ndarray] = None
    P_norm2: float = 0.0


_STRUCTURES = weakref.WeakKeyDictionary()


def _structure(inst):
    st = _STRUCTURES.get(inst)
    if st is not None:
        return st
    obj = inst.objective
    linear = inst.all_linear and obj.is_quadratic
    sep = obj.separable_l1() if obj.is_quadratic else None
    st = _Structure(path=ITERATIVE, linear=linear)
    if linear:
        st.At, st.bt = inst.A_tilde, inst.b_tilde
    if obj.is_quadratic:
        H = obj.H
        diag = not np.any(H - np.diag(np.diag(H)))
        if diag:
            st.hdiag = np.diag(H).copy()
        if linear and not obj.has_l1 and inst.feasible_set.lower is None:
            st.path = CLOSED_FORM
            st.chol = cho_factor(H)
        elif linear and diag and sep is not None:
            st.path = SEPARABLE
        if sep is not None:
            st.l1_cols, st.l1_coef = sep
        if obj.has_l1:
            st.P_norm2 = float(np.linalg.norm(obj.P, 2) ** 2)
    _STRUCTURES[inst] = st
    return st


def oracle_path(inst):
    """Name of the solution path the oracle uses for ``inst``."""
    return _structure(inst).path


def _check_dual_point(inst, u, extended):
    u = np.asarray(u, dtype=float)
    if u.shape != (inst.m + inst.p,):
        raise InputError(f"dual point must have length {inst.m + inst.p}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InputError("dual point must be finite")
    m = inst.m
    if extended:
        if inst.all_linear and inst.objective.is_quadratic:
            return u
        floor = inst.multiplier_floor
        if floor is None:
            raise UnsupportedProblem("extended domain needs multiplier_floor metadata")
        if np.any(u[:m] < floor[:m]):
            raise InputError("dual point lies below the multiplier floor")
        return u
    if np.any(u[:m] < 0):
        raise InputError("inequality multipliers must be nonnegative (u must lie in D)")
    return u


def _project_box(fs, x):
    if fs.lower is None:
        return x
    return np.minimum(np.maximum(x, fs.lower), fs.upper)


def _residual(inst, x, grad_h, z):
    """Natural-map residual ``||x - P_X(x - G)||`` plus l1 complementarity."""
    obj = inst.objective
    G = grad_h
    comp = 0.0
    if obj.has_l1:
        G = G + obj.P.T @ z
        r = obj.P @ x - obj.s
        comp = max(obj.gamma * np.abs(r).sum() - float(z @ r), 0.0)
    return float(np.linalg.norm(x - _project_box(inst.feasible_set, x - G))) + comp


def _finish(inst, st, u, x, iters, resid, z, path):
    if st.linear:
        grad = st.At @ x + st.bt
    else:
        grad = inst.constraint_values(x)
    d = inst.objective.value(x) + float(u @ grad)
    return OracleResult(xbar=x, dual_value=d, dual_gradient=grad, inner_iterations=iters,
                        inner_residual=resid, l1_multiplier=z, path=path)


def solve_lagrangian(inst, u, cfg=None, warm=None, extended=False, tolerance=None):
    """Minimize the Lagrangian ``L(., u)`` over X.

    Parameters
    ----------
    inst : ProblemInstance
    u : array_like
        Dual point in D (or above ``inst.multiplier_floor`` if ``extended``).
    cfg : OracleConfig, optional
    warm : OracleResult or ndarray, optional
        Previous result (preferred, it carries l1 multipliers) or a primal
        starting point for the iterative path.
    tolerance : float, optional
        Overrides ``cfg.tolerance`` for this call.

    Raises
    ------
    OracleFailure
        The iterative path hit ``cfg.max_inner_iterations``.
    """
    cfg = cfg or OracleConfig()
    tol = cfg.tolerance if tolerance is None else tolerance
    u = _check_dual_point(inst, u, extended)
    st = _structure(inst)
    if not cfg.warm_start:
        warm = None
    if st.path == CLOSED_FORM:
        c = inst.objective.t + st.At.T @ u
        x = -cho_solve(st.chol, c)
        resid = float(np.linalg.norm(inst.objective.H @ x + c))
        return _finish(inst, st, u, x, 0, resid, None, CLOSED_FORM)
    if st.path == SEPARABLE:
        x, z = _separable_solve(inst, st, u)
        c = inst.objective.t + st.At.T @ u
        resid = _residual(inst, x, inst.objective.H @ x + c, z)
        return _finish(inst, st, u, x, 0, resid, z, SEPARABLE)
    if st.linear:
        x, z, iters, resid = _solve_linear_qp(inst, st, u, tol, cfg.max_inner_iterations, warm)
    else:
        x, z, iters, resid = _solve_general(inst, st, u, tol, cfg.max_inner_iterations, warm)
    return _finish(inst, st, u, x, iters, resid, z, ITERATIVE)


def _soft(v, w):
    return np.sign(v) * np.maximum(np.abs(v) - w, 0.0)


def _separable_solve(inst, st, u):
    obj = inst.objective
    fs = inst.feasible_set
    h = st.hdiag
    c = obj.t + st.At.T @ u
    x = -c / h
    z = None
    if obj.has_l1:
        cols, coef = st.l1_cols, st.l1_coef
        kink = obj.s / coef
        w = obj.gamma * np.abs(coef)
        hc, cc = h[cols], c[cols]
        # 0.5 h y^2 + (h kink + c) y + w |y| with y = x - kink
        x[cols] = kink - _soft(hc * kink + cc, w) / hc
    x = _project_box(fs, x)
    if obj.has_l1:
        r = obj.P @ x - obj.s
        z = obj.gamma * np.sign(r)
        at_kink = r == 0
        if np.any(at_kink):
            j = cols[at_kink]
            z[at_kink] = np.clip(-(h[j] * x[j] + c[j]) / coef[at_kink], -obj.gamma, obj.gamma)
    return x, z


# -- quadratic objective, affine constraints ---------------------------------

def _polish(inst, c, x_guess, thresh):
    """Solve the KKT system on the active set read off ``x_guess``."""
    obj = inst.objective
    fs = inst.feasible_set
    H = obj.H
    n = inst.n
    scale = 1.0 + np.abs(x_guess).max(initial=0.0)
    fixed = np.zeros(n, dtype=bool)
    xb = np.zeros(n)
    if fs.lower is not None:
        lo = x_guess <= fs.lower + thresh * scale
        hi = x_guess >= fs.upper - thresh * scale
        fixed = lo | hi
        xb = np.where(lo, fs.lower, np.where(hi, fs.upper, 0.0))
    F = ~fixed
    lin = c.copy()
    if obj.has_l1:
        r = obj.P @ x_guess - obj.s
        Z = np.abs(r) <= thresh * scale
        sig = np.sign(r)
        sig[Z] = 0.0
        lin = lin + obj.gamma * obj.P.T @ sig
        PZ = obj.P[Z]
    else:
        Z = np.zeros(0, dtype=bool)
        PZ = np.zeros((0, n))
    nf, nz = int(F.sum()), int(Z.sum())
    K = np.zeros((nf + nz, nf + nz))
    K[:nf, :nf] = H[np.ix_(F, F)]
    K[nf:, :nf] = PZ[:, F]
    K[:nf, nf:] = PZ[:, F].T
    rhs = np.concatenate([-lin[F] - H[np.ix_(F, fixed)] @ xb[fixed],
                          obj.s[Z] - PZ[:, fixed] @ xb[fixed] if nz else np.zeros(0)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    x = xb.copy()
    x[F] = sol[:nf]
    x = _project_box(fs, x)
    z = None
    if obj.has_l1:
        z = obj.gamma * sig
        z[Z] = np.clip(sol[nf:], -obj.gamma, obj.gamma)
    return x, z


def _try_polish(inst, c, x_guess, tol, thresholds=_POLISH_THRESHOLDS):
    H = inst.objective.H
    for th in thresholds:
        x, z = _polish(inst, c, x_guess, th)
        res = _residual(inst, x, H @ x + c, z)
        if res <= tol:
            return x, z, res
    return None


def _warm_parts(inst, warm):
    if warm is None:
        return None, None
    if isinstance(warm, OracleResult):
        return np.array(warm.xbar, dtype=float), warm.l1_multiplier
    x = np.asarray(warm, dtype=float)
    if x.shape != (inst.n,):
        raise InputError("warm start has the wrong dimension")
    return x.copy(), None


def _solve_linear_qp(inst, st, u, tol, max_iter, warm):
    obj = inst.objective
    fs = inst.feasible_set
    H = obj.H
    c = obj.t + st.At.T @ u
    x, z = _warm_parts(inst, warm)
    if x is not None:
        got = _try_polish(inst, c, x, tol, thresholds=(1e-9,))
        if got is not None:
            return got[0], got[1], 0, got[2]
    else:
        x = _project_box(fs, np.zeros(inst.n))
    if obj.has_l1:
        if z is None:
            z = obj.gamma * np.sign(obj.P @ x - obj.s)
        L = inst.constants.lambda_max_H
        tau = 0.99 / L
        sigma = 0.5 * L / max(st.P_norm2, 1e-300)
    else:
        L = inst.constants.lambda_max_H
    best = (np.inf, x, z)
    y, x_prev, t_mom = x.copy(), x.copy(), 1.0
    for it in range(1, max_iter + 1):
        if obj.has_l1:
            # primal-dual splitting: box prox on x, clip on the l1 dual
            x_new = _project_box(fs, x - tau * (H @ x + c + obj.P.T @ z))
            z = np.clip(z + sigma * (obj.P @ (2 * x_new - x) - obj.s), -obj.gamma, obj.gamma)
            x = x_new
        else:
            # accelerated projected gradient on a box QP
            x = _project_box(fs, y - (H @ y + c) / L)
            t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_mom * t_mom))
            y = x + ((t_mom - 1) / t_next) * (x - x_prev)
            x_prev, t_mom = x, t_next
            if it % _RESTART_EVERY == 0:
                y, t_mom = x.copy(), 1.0
        if it % _POLISH_EVERY == 0:
            got = _try_polish(inst, c, x, tol)
            if got is not None:
                return got[0], got[1], it, got[2]
            res = _residual(inst, x, H @ x + c, z)
            if res < best[0]:
                best = (res, x.copy(), None if z is None else z.copy())
            if res <= tol:
                return x, z, it, res
    raise OracleFailure(f"inner solver did not reach tolerance {tol:g} in {max_iter} iterations",
                        best_x=best[1], residual=best[0], iterations=max_iter)


# -- general objective / nonlinear constraints ------------------------------

def _lagrangian_smooth(inst, u):
    obj = inst.objective
    m = inst.m
    A = inst.equalities.A
    ueq = u[m:]
    cons = inst.inequalities

    def value(x):
        v = obj.smooth_value(x) + float(ueq @ (A @ x + inst.equalities.b))
        for ui, con in zip(u[:m], cons):
            if ui:
                v += ui * con.fun(x)
        return v

    def grad(x):
        g = obj.smooth_gradient(x) + A.T @ ueq
        for ui, con in zip(u[:m], cons):
            if ui:
                g = g + ui * con.grad(x)
        return g

    return value, grad


def _separable_prox(inst, st, y, step):
    """Prox of ``step * gamma * ||P x - s||_1`` plus the box, monomial P."""
    obj = inst.objective
    x = y.copy()
    if obj.has_l1:
        cols, coef = st.l1_cols, st.l1_coef
        kink = obj.s / coef
        w = step * obj.gamma * np.abs(coef)
        x[cols] = kink + _soft(y[cols] - kink, w)
    return _project_box(inst.feasible_set, x)


def _separable_multiplier(inst, st, x, g):
    obj = inst.objective
    if not obj.has_l1:
        return None
    r = obj.P @ x - obj.s
    z = obj.gamma * np.sign(r)
    at_kink = r == 0
    if np.any(at_kink):
        j = st.l1_cols[at_kink]
        z[at_kink] = np.clip(-g[j] / st.l1_coef[at_kink], -obj.gamma, obj.gamma)
    return z


def _solve_general(inst, st, u, tol, max_iter, warm):
    obj = inst.objective
    fs = inst.feasible_set
    value, grad = _lagrangian_smooth(inst, u)
    x, z = _warm_parts(inst, warm)
    if x is None:
        x = _project_box(fs, np.zeros(inst.n))
    else:
        x = _project_box(fs, x)
    if obj.has_l1 and st.l1_cols is None:
        return _primal_dual_general(inst, st, u, grad, x, z, tol, max_iter)
    # accelerated proximal gradient, backtracking on the smooth part
    L = obj.smooth_lipschitz or 1.0
    y, x_prev, t_mom = x.copy(), x.copy(), 1.0
    best = (np.inf, x)
    g = grad(x)
    res = _residual(inst, x, g, _separable_multiplier(inst, st, x, g))
    if res <= tol:
        return x, _separable_multiplier(inst, st, x, g), 0, res
    for it in range(1, max_iter + 1):
        fy, gy = value(y), grad(y)
        while True:
            x_new = _separable_prox(inst, st, y - gy / L, 1.0 / L)
            dx = x_new - y
            if value(x_new) <= fy + gy @ dx + 0.5 * L * (dx @ dx) + 1e-15 * abs(fy):
                break
            L *= 2.0
        x = x_new
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_mom * t_mom))
        y = x + ((t_mom - 1) / t_next) * (x - x_prev)
        x_prev, t_mom = x, t_next
        if it % _RESTART_EVERY == 0:
            y, t_mom = x.copy(), 1.0
        g = grad(x)
        zx = _separable_multiplier(inst, st, x, g)
        res = _residual(inst, x, g, zx)
        if res < best[0]:
            best = (res, x.copy())
        if res <= tol:
            return x, zx, it, res
    raise OracleFailure(f"inner solver did not reach tolerance {tol:g} in {max_iter} iterations",
                        best_x=best[1], residual=best[0], iterations=max_iter)


def _primal_dual_general(inst, st, u, grad, x, z, tol, max_iter):
    obj = inst.objective
    fs = inst.feasible_set
    Lg = [c.grad_lipschitz for c in inst.inequalities]
    if obj.smooth_lipschitz is None or any(v is None for v in Lg):
        raise UnsupportedProblem(
            "non-separable l1 term with nonlinear constraints needs gradient Lipschitz constants")
    L = obj.smooth_lipschitz + float(np.dot(np.maximum(u[: inst.m], 0.0), Lg))
    tau = 0.99 / L
    sigma = 0.5 * L / max(st.P_norm2, 1e-300)
    if z is None:
        z = obj.gamma * np.sign(obj.P @ x - obj.s)
    best = (np.inf, x)
    for it in range(1, max_iter + 1):
        x_new = _project_box(fs, x - tau * (grad(x) + obj.P.T @ z))
        z = np.clip(z + sigma * (obj.P @ (2 * x_new - x) - obj.s), -obj.gamma, obj.gamma)
        x = x_new
        res = _residual(inst, x, grad(x), z)
        if res < best[0]:
            best = (res, x.copy())
        if res <= tol:
            return x, z, it, res
    raise OracleFailure(f"inner solver did not reach tolerance {tol:g} in {max_iter} iterations",
                        best_x=best[1], residual=best[0], iterations=max_iter)


# -- checks ------------------------------------------------------------------

def dual_gap_identity_check(res, inst, u):
    """``|f(x̄) - d(u) + grad d(u)'u|``; zero for an exact minimizer."""
    return abs(inst.objective.value(res.xbar) - res.dual_value + float(res.dual_gradient @ u))


def dual_value(inst, u, cfg=None, extended=False):
    return solve_lagrangian(inst, u, cfg, extended=extended).dual_value


def finite_difference_dual_gradient(inst, u, h=1e-5, cfg=None):
    """Central differences of d; one-sided where an inequality multiplier is < h."""
    u = np.asarray(u, dtype=float)
    m = inst.m
    out = np.empty_like(u)
    for i in range(u.shape[0]):
        e = np.zeros_like(u)
        e[i] = h
        if i < m and u[i] < h:
            d0 = dual_value(inst, u, cfg)
            d1 = dual_value(inst, u + e, cfg)
            d2 = dual_value(inst, u + 2 * e, cfg)
            out[i] = (-3 * d0 + 4 * d1 - d2) / (2 * h)
        else:
            out[i] = (dual_value(inst, u + e, cfg) - dual_value(inst, u - e, cfg)) / (2 * h)
    return out


def project_dual(inst, v):
    return project_onto_D(v, inst.m)
