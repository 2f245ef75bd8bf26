"""Dual iterations: projected gradient, 1-memory fast gradient, FISTA.

All three run on the dual problem ``max_{u in D} d(u)`` and record, per
iteration, the dual point, d(u), the Lagrangian minimizer x̄(u) and its
primal quality, plus running primal averages.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificates import surrogate_constants
from .errors import ConfigError, MethodFailure, OracleFailure, UnsupportedProblem
from .oracle import OracleConfig, solve_lagrangian
from .problem import infeasibility, project_onto_D

EXPLICIT = "explicit"
LINEAR = "linear"
COMPACT = "compact"
LIPSCHITZ = "lipschitz"
STRONGLY_CONCAVE = "strongly_concave"

PG = "pg"
TSENG = "tseng"
FISTA = "fista"

CSV_COLUMNS = ["k", "d", "f_xbar", "delta_xbar", "f_xtilde", "delta_xtilde", "f_xhat",
               "delta_xhat", "dist_u_to_ref", "wall_ns"]


@dataclass
class StepSizeRule:
    """Step size of the projected dual gradient method.

    ``alpha`` is the step used.  For the surrogate rules ``eta_hat``,
    ``L_hat`` and ``gamma_hat`` are the computable constants it came from.
    """

    kind: str
    alpha: float
    safety: float = 0.99
    eta_hat: Optional[float] = None
    L_hat: Optional[float] = None
    gamma_hat: Optional[float] = None
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if not self.alpha > 0 or not np.isfinite(self.alpha):
            raise ConfigError(f"step size must be positive and finite, got {self.alpha}")
        if not 0 < self.safety <= 1:
            raise ConfigError("safety factor must lie in (0, 1]")

    @classmethod
    def explicit(cls, alpha):
        return cls(EXPLICIT, float(alpha), safety=1.0)

    @classmethod
    def linear(cls, inst, safety=0.99):
        """``safety * 2 theta / sigma_max(Ã)^2`` for affine constraints."""
        if not inst.all_linear:
            raise UnsupportedProblem("the linear step rule needs affine constraints")
        sig = inst.constants.sigma_max_At
        L = sig**2 / inst.objective.theta
        return cls(LINEAR, safety * 2.0 / L, safety=safety, lipschitz=L)

    @classmethod
    def compact(cls, inst, safety=0.99):
        return cls._from_surrogates(COMPACT, surrogate_constants(inst, COMPACT), safety)

    @classmethod
    def lipschitz_g(cls, inst, dual_diameter=None, safety=0.99):
        sc = surrogate_constants(inst, LIPSCHITZ, dual_diameter=dual_diameter)
        return cls._from_surrogates(LIPSCHITZ, sc, safety)

    @classmethod
    def strongly_concave(cls, inst, M=None):
        params = strongly_concave_rate_params(inst, M=M)
        return cls(STRONGLY_CONCAVE, params["alpha_opt"], safety=1.0)

    @classmethod
    def _from_surrogates(cls, kind, sc, safety):
        return cls(kind, safety * step_bound(sc.L_hat, sc.eta_hat), safety=safety,
                   eta_hat=sc.eta_hat, L_hat=sc.L_hat, gamma_hat=sc.gamma_hat,
                   lipschitz=sc.L_hat)

    @classmethod
    def parse(cls, text, inst, dual_diameter=None):
        """``linear`` | ``compact`` | ``lipschitz`` | ``explicit:<alpha>``."""
        if text.startswith("explicit:"):
            return cls.explicit(float(text.split(":", 1)[1]))
        if text == LINEAR:
            return cls.linear(inst)
        if text == COMPACT:
            return cls.compact(inst)
        if text == LIPSCHITZ:
            return cls.lipschitz_g(inst, dual_diameter)
        raise ConfigError(f"unknown step rule {text!r}")


def step_bound(L_hat, eta_hat):
    """Upper end of the admissible step interval for surrogate constants."""
    if L_hat > eta_hat:
        return 2.0 / L_hat
    return 4.0 * (1.0 / eta_hat - L_hat / (2.0 * eta_hat**2))


@dataclass
class RunTrace:
    """Per-iteration record of a dual method run (append-only)."""

    method: str
    m: int
    p: int
    params: dict = field(default_factory=dict)
    k: list = field(default_factory=list)
    u: list = field(default_factory=list)
    d: list = field(default_factory=list)
    xbar: list = field(default_factory=list)
    f_xbar: list = field(default_factory=list)
    delta_xbar: list = field(default_factory=list)
    beta: Optional[list] = None
    wall_ns: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_residual: list = field(default_factory=list)
    x_tilde: list = field(default_factory=list)
    f_xtilde: list = field(default_factory=list)
    delta_xtilde: list = field(default_factory=list)
    x_hat: list = field(default_factory=list)
    f_xhat: list = field(default_factory=list)
    delta_xhat: list = field(default_factory=list)

    def __len__(self):
        return len(self.k)

    def record(self, inst, k, u, res, t0, beta=None):
        self.k.append(k)
        self.u.append(np.array(u, dtype=float))
        self.d.append(res.dual_value)
        self.xbar.append(res.xbar)
        self.f_xbar.append(inst.objective.value(res.xbar))
        self.delta_xbar.append(infeasibility(inst, res.xbar))
        self.wall_ns.append(time.perf_counter_ns() - t0)
        self.inner_iterations.append(res.inner_iterations)
        self.inner_residual.append(res.inner_residual)
        if beta is not None:
            if self.beta is None:
                self.beta = []
            self.beta.append(beta)

    @property
    def U(self):
        return np.array(self.u)

    @property
    def X(self):
        return np.array(self.xbar)

    def data(self, reference=None):
        """Columns as arrays; distances need a reference solution."""
        out = {
            "k": np.array(self.k),
            "u": self.U,
            "d": np.array(self.d),
            "f_xbar": np.array(self.f_xbar),
            "delta_xbar": np.array(self.delta_xbar),
            "inner_residual": np.array(self.inner_residual),
        }
        if reference is not None:
            out["dist_xbar_to_ref"] = np.linalg.norm(self.X - reference.x, axis=1)
        return out

    def to_csv(self, path, reference=None, include_wall_time=True):
        """Write the trace; extra columns follow the standard ones.

        Extra columns: ``dist_xbar_to_ref``, ``inner_residual`` and one
        ``u<i>`` column per dual coordinate.
        """
        U = self.U
        n_u = U.shape[1] if len(U) else self.m + self.p
        dist_u = (np.linalg.norm(U - reference.u, axis=1) if reference is not None
                  else [None] * len(self))
        dist_x = (np.linalg.norm(self.X - reference.x, axis=1) if reference is not None
                  else [None] * len(self))
        nan = float("nan")
        header = CSV_COLUMNS + ["dist_xbar_to_ref", "inner_residual"] + [f"u{i}" for i in range(n_u)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                row = [
                    self.k[i], _fmt(self.d[i]), _fmt(self.f_xbar[i]), _fmt(self.delta_xbar[i]),
                    _fmt(self.f_xtilde[i] if self.f_xtilde else nan),
                    _fmt(self.delta_xtilde[i] if self.delta_xtilde else nan),
                    _fmt(self.f_xhat[i] if self.f_xhat else nan),
                    _fmt(self.delta_xhat[i] if self.delta_xhat else nan),
                    _fmt(dist_u[i]), self.wall_ns[i] if include_wall_time else 0,
                    _fmt(dist_x[i]), _fmt(self.inner_residual[i]),
                ]
                row += [_fmt(v) for v in U[i]]
                w.writerow(row)


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    if np.isnan(v):
        return ""
    return repr(v)


def read_trace_csv(path):
    """Load a trace CSV into arrays (blank cells become NaN)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace file")
    header, body = rows[0], rows[1:]
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    cols = {name: i for i, name in enumerate(header)}

    def col(name):
        return np.array([float(r[cols[name]]) if r[cols[name]] != "" else np.nan for r in body])

    out = {name: col(name) for name in header if not (name.startswith("u") and name[1:].isdigit())}
    ucols = sorted((int(h[1:]), i) for h, i in cols.items() if h.startswith("u") and h[1:].isdigit())
    out["u"] = np.array([[float(r[i]) for _, i in ucols] for r in body]).reshape(len(body), len(ucols))
    out["k"] = out["k"].astype(int)
    return out


def _oracle(inst, u, cfg, warm, k, extended=False):
    return solve_lagrangian(inst, u, cfg, warm=warm, extended=extended,
                            tolerance=cfg.tolerance_at(k))


def _run(fn):
    """Wrap a method body so oracle failures keep the partial trace."""

    def wrapper(inst, *args, **kwargs):
        trace_box = []
        try:
            return fn(inst, *args, trace_box=trace_box, **kwargs)
        except OracleFailure as exc:
            raise MethodFailure(f"oracle failed: {exc}", trace=trace_box[0] if trace_box else None) from exc

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_run
def projected_dual_gradient(inst, u0, rule, K, cfg=None, stop_tol=None, trace_box=None):
    """Iterate ``u_{k+1} = P_D[u_k + alpha grad d(u_k)]`` for K steps.

    ``rule`` is a :class:`StepSizeRule` or a positive float.  With
    ``stop_tol`` the run ends early once ``||u_{k+1} - u_k|| / alpha <= stop_tol``.
    """
    if not isinstance(rule, StepSizeRule):
        rule = StepSizeRule.explicit(rule)
    cfg = cfg or OracleConfig()
    m = inst.m
    u = _start_point(inst, u0)
    alpha = rule.alpha
    trace = RunTrace(PG, m, inst.p, params={"alpha": alpha, "rule": rule.kind,
                                            "u0": u.tolist()})
    trace_box.append(trace)
    t0 = time.perf_counter_ns()
    res = _oracle(inst, u, cfg, None, 0)
    trace.record(inst, 0, u, res, t0)
    for k in range(K):
        u_next = project_onto_D(u + alpha * res.dual_gradient, m)
        step = np.linalg.norm(u_next - u) / alpha
        u = u_next
        res = _oracle(inst, u, cfg, res, k + 1)
        trace.record(inst, k + 1, u, res, t0)
        if stop_tol is not None and step <= stop_tol:
            break
    primal_averages(trace, inst, weighted=False)
    return trace


@_run
def tseng_fast_gradient(inst, u0, w0, L_tilde, K, cfg=None, stop_tol=None, trace_box=None):
    """1-memory fast gradient method with ``Q(u, v) = ||u - v||^2 / 2``.

    Uses ``w_{k+1} = P_D[w_k + grad d(v_k)/(beta_k L)]``,
    ``u_{k+1} = P_D[v_k + grad d(v_k)/L]`` and ``beta_k = 2/(k+2)``.
    ``L_tilde`` must be a global Lipschitz constant of grad d on D, so the
    constraints must be affine or X compact.
    """
    if L_tilde is None or not np.isfinite(L_tilde) or L_tilde <= 0:
        raise ConfigError("tseng_fast_gradient needs a positive global Lipschitz constant")
    if not inst.all_linear and inst.feasible_set.lower is None:
        raise UnsupportedProblem("bounded dual gradient needs affine constraints or a compact X")
    if inst.all_linear:
        floor = inst.constants.sigma_max_At**2 / inst.objective.theta
        if L_tilde < floor * (1 - 1e-12):
            raise ConfigError(f"L_tilde={L_tilde} is below the Lipschitz constant {floor}")
    cfg = cfg or OracleConfig()
    m = inst.m
    u = _start_point(inst, u0)
    w = _start_point(inst, w0)
    beta = 1.0
    trace = RunTrace(TSENG, m, inst.p, params={"L_tilde": float(L_tilde), "u0": u.tolist(),
                                               "w0": w.tolist()})
    trace_box.append(trace)
    t0 = time.perf_counter_ns()
    res_u = _oracle(inst, u, cfg, None, 0)
    res_v = res_u
    trace.record(inst, 0, u, res_u, t0, beta=beta)
    for k in range(K):
        v = (1 - beta) * u + beta * w
        res_v = _oracle(inst, v, cfg, res_v, k + 1)
        g = res_v.dual_gradient
        w = project_onto_D(w + g / (beta * L_tilde), m)
        u_next = project_onto_D(v + g / L_tilde, m)
        step = np.linalg.norm(u_next - v) * L_tilde
        u = u_next
        beta = 2.0 / (k + 3)
        res_u = _oracle(inst, u, cfg, res_u, k + 1)
        trace.record(inst, k + 1, u, res_u, t0, beta=beta)
        if stop_tol is not None and step <= stop_tol:
            break
    primal_averages(trace, inst)
    return trace


def fista_beta(beta):
    return 0.5 * (np.sqrt(beta**4 + 4 * beta**2) - beta**2)


@_run
def fista_dual(inst, u0, K, cfg=None, stop_tol=None, adaptive_restart=False, trace_box=None):
    """FISTA on the dual of an affinely constrained problem.

    Step ``theta / sigma_max(Ã)^2`` and
    ``beta_{k+1} = (sqrt(beta_k^4 + 4 beta_k^2) - beta_k^2) / 2``.
    ``adaptive_restart`` resets the momentum whenever d decreases; it is
    meant for reference solves, not for rate measurements.
    """
    if not inst.all_linear:
        raise UnsupportedProblem("fista_dual needs affine inequality constraints")
    cfg = cfg or OracleConfig()
    m = inst.m
    step = inst.objective.theta / inst.constants.sigma_max_At**2
    u = _start_point(inst, u0)
    u_prev = u.copy()
    beta = beta_prev = 1.0
    trace = RunTrace(FISTA, m, inst.p, params={"step": step, "u0": u.tolist(),
                                               "adaptive_restart": adaptive_restart})
    trace_box.append(trace)
    t0 = time.perf_counter_ns()
    res_u = _oracle(inst, u, cfg, None, 0)
    res_v = res_u
    trace.record(inst, 0, u, res_u, t0, beta=beta)
    for k in range(K):
        v = u + beta * (1.0 / beta_prev - 1.0) * (u - u_prev)
        res_v = _oracle(inst, v, cfg, res_v, k + 1, extended=True)
        u_next = project_onto_D(v + step * res_v.dual_gradient, m)
        gmap = np.linalg.norm(u_next - v) / step
        beta_prev, beta = beta, fista_beta(beta)
        u_prev, u = u, u_next
        res_prev = res_u
        res_u = _oracle(inst, u, cfg, res_u, k + 1)
        if adaptive_restart and res_u.dual_value < res_prev.dual_value:
            beta = beta_prev = 1.0
            u_prev = u.copy()
        trace.record(inst, k + 1, u, res_u, t0, beta=beta)
        if stop_tol is not None and gmap <= stop_tol:
            break
    primal_averages(trace, inst)
    return trace


def _start_point(inst, u0):
    u = np.array(u0, dtype=float) if u0 is not None else np.zeros(inst.m + inst.p)
    if u.shape != (inst.m + inst.p,):
        raise ConfigError(f"start point must have length {inst.m + inst.p}")
    if np.any(u[: inst.m] < 0):
        raise ConfigError("start point must lie in D")
    return u


def strongly_concave_rate_params(inst, alpha=None, M=None):
    """Linear-rate factor ``q`` and optimal step for a strongly concave dual.

    Needs affine constraints with full-row-rank Ã, X the whole space and a
    Lipschitz constant ``M`` of the objective's (sub)gradient.
    """
    if not inst.all_linear or inst.feasible_set.lower is not None:
        raise UnsupportedProblem("needs affine constraints and X equal to the whole space")
    M = M if M is not None else inst.objective.M
    if M is None:
        raise UnsupportedProblem("needs a Lipschitz constant M of the objective gradient")
    At = inst.A_tilde
    if At.shape[0] > At.shape[1] or np.linalg.matrix_rank(At) < At.shape[0]:
        raise UnsupportedProblem("Ã must have full row rank")
    th = inst.objective.theta
    smin2 = inst.constants.sigma_min_At**2
    smax2 = inst.constants.sigma_max_At**2
    denom = th**2 * smin2 + M**2 * smax2
    alpha_opt = 2 * M**2 * th / denom
    out = {"alpha_opt": alpha_opt, "M": M}
    a = alpha_opt if alpha is None else alpha
    if not 0 < a <= alpha_opt * (1 + 1e-12):
        raise ConfigError(f"alpha={a} outside (0, alpha_opt={alpha_opt}]")
    out["q"] = float(np.sqrt(max(1 - 2 * a * th * smin2 * smax2 / denom, 0.0)))
    out["alpha"] = a
    return out


def primal_averages(trace, inst, weighted=True):
    """Fill running averages of x̄ into the trace.

    ``x_tilde`` is the uniform average of x̄(u_0..u_k); ``x_hat`` weights
    x̄(u_l) by 1/beta_l.  Both are updated incrementally.
    """
    if weighted and trace.beta is None:
        raise ConfigError(f"method {trace.method!r} has no beta sequence for weighted averages")
    trace.x_tilde, trace.f_xtilde, trace.delta_xtilde = [], [], []
    trace.x_hat, trace.f_xhat, trace.delta_xhat = [], [], []
    mean = None
    wmean, wsum = None, 0.0
    for i, x in enumerate(trace.xbar):
        mean = x.copy() if mean is None else mean + (x - mean) / (i + 1)
        trace.x_tilde.append(mean)
        trace.f_xtilde.append(inst.objective.value(mean))
        trace.delta_xtilde.append(infeasibility(inst, mean))
        if weighted:
            wgt = 1.0 / trace.beta[i]
            wsum += wgt
            wmean = x.copy() if wmean is None else wmean + (wgt / wsum) * (x - wmean)
            trace.x_hat.append(wmean)
            trace.f_xhat.append(inst.objective.value(wmean))
            trace.delta_xhat.append(infeasibility(inst, wmean))
    return trace
