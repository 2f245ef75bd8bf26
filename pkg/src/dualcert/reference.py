"""High-accuracy reference solutions (x*, u*, f*, d*) by long dual runs."""

import json
from dataclasses import dataclass

import numpy as np

from .certificates import gamma_at, surrogate_constants
from .errors import BudgetExhausted, ConfigError, InputError, ReferenceInconsistency
from .methods import fista_beta
from .oracle import OracleConfig, solve_lagrangian
from .problem import project_onto_D


@dataclass
class ReferenceSolution:
    """Reference primal-dual pair.

    ``gap_tol`` is an estimate of ``d* - d(u)`` at the stored ``u``; the
    certificate tolerances inherit it.
    """

    x: np.ndarray
    u: np.ndarray
    f: float
    d: float
    gap_tol: float
    method: str
    iterations: int
    grad_map_norm: float = 0.0

    def to_dict(self):
        return {"x": self.x.tolist(), "u": self.u.tolist(), "f": self.f, "d": self.d,
                "gap_tol": self.gap_tol, "method": self.method, "iterations": self.iterations,
                "grad_map_norm": self.grad_map_norm}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(x=np.asarray(data["x"], dtype=float), u=np.asarray(data["u"], dtype=float),
                       f=float(data["f"]), d=float(data["d"]), gap_tol=float(data["gap_tol"]),
                       method=str(data["method"]), iterations=int(data["iterations"]),
                       grad_map_norm=float(data.get("grad_map_norm", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed reference: {exc}") from exc

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _finish(inst, u, res, method, iters, gmap, L, check=True):
    f = float(inst.objective.value(res.xbar))
    d = float(res.dual_value)
    # d* - d(u) <= ||G(u)|| ||u - u*|| for the gradient mapping G; ||u - u*||
    # is replaced by 1 + ||u|| since u* is unknown.
    gap_tol = gmap * (1.0 + float(np.linalg.norm(u))) + abs(f - d) + 1e-15 * (1 + abs(d))
    if check and abs(f - d) > 1e-7 * (1 + abs(f)):
        raise ReferenceInconsistency(f"f*={f!r} and d*={d!r} disagree by {abs(f - d):.3e}")
    return ReferenceSolution(res.xbar, u, f, d, gap_tol, method, iters, gmap)


def compute_reference(inst, budget=200_000, tol=1e-11, cfg=None, check_every=10,
                      polish_tol=1e-15, polish_budget=5_000):
    """Run a dual method until the gradient mapping is ``<= tol (1 + ||u||)``.

    Once ``tol`` is met the run continues for at most ``polish_budget``
    further iterations, aiming at ``polish_tol``, and keeps the best point;
    a smaller reference gap tightens every certificate tolerance.

    Affine constraints use FISTA with function-value restarts; other
    problems use projected gradient with the compact-X step size.  If
    gamma vanishes at x̄(0) (no constraint can bind), x̄(0) is returned
    directly.  Raises :class:`BudgetExhausted` with the best point so far.
    """
    cfg = cfg or OracleConfig(tolerance=1e-13)
    m = inst.m
    u = np.zeros(m + inst.p)
    res = solve_lagrangian(inst, u, cfg)
    if gamma_at(inst, res) == 0.0:
        return _finish(inst, u, res, "trivial", 0, 0.0, 1.0)

    if inst.all_linear:
        L = inst.constants.sigma_max_At**2 / inst.objective.theta
        step = 1.0 / L
        method = "fista_restart"
    else:
        if inst.feasible_set.lower is None:
            raise ConfigError("reference for nonaffine constraints needs a box X")
        sc = surrogate_constants(inst, "compact")
        L = sc.L_hat
        step = 1.0 / L
        method = "projected_gradient"

    u_prev = u.copy()
    beta = beta_prev = 1.0
    best = (np.inf, u, res, 0)
    res_v = res
    reached = None
    for it in range(1, budget + 1):
        if method == "fista_restart":
            v = u + beta * (1.0 / beta_prev - 1.0) * (u - u_prev)
            res_v = solve_lagrangian(inst, v, cfg, warm=res_v, extended=True)
        else:
            v, res_v = u, res
        u_next = project_onto_D(v + step * res_v.dual_gradient, m)
        res_next = solve_lagrangian(inst, u_next, cfg, warm=res)
        if method == "fista_restart":
            beta_prev, beta = beta, fista_beta(beta)
            if res_next.dual_value < res.dual_value:
                beta = beta_prev = 1.0
                u_prev = u_next.copy()
            else:
                u_prev = u
        u, res = u_next, res_next
        if it % check_every == 0 or it == budget:
            probe = project_onto_D(u + step * res.dual_gradient, m)
            gmap = float(np.linalg.norm(probe - u)) / step
            if gmap < best[0]:
                best = (gmap, u.copy(), res, it)
            scale = 1.0 + float(np.linalg.norm(u))
            if reached is None and gmap <= tol * scale:
                reached = it
            if reached is not None and (gmap <= polish_tol * scale or it - reached >= polish_budget):
                gb, ub, rb, ib = best
                return _finish(inst, ub, rb, method, ib, gb, L)
    gmap, ub, rb, _ = best
    if reached is not None:
        return _finish(inst, ub, rb, method, budget, gmap, L)
    raise BudgetExhausted(f"gradient mapping {gmap:.3e} above tolerance after {budget} iterations",
                          best=_finish(inst, ub, rb, method, budget, gmap, L, check=False))
