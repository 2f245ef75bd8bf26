"""Primal error bounds and convergence-rate envelopes evaluated along traces.

A :class:`CertificateContext` collects every scalar the bounds need (problem
constants, reference solution, method parameters) in a JSON-friendly form, so
a report can be re-derived later from the trace CSV plus the context alone.
:func:`evaluate` turns a context and trace columns into a
:class:`CertificateReport` of bound families, each a per-k array of measured
value, bound, margin and violation flag.

Every family is phrased as ``measured <= bound``; lower bounds on
``f - f*`` are stored as upper bounds on ``f* - f``.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ReferenceInconsistency, UnsupportedProblem

EXACT = "exact"
SURROGATE = "surrogate"

DEFAULT_TOL = 1e-7
MONOTONE_TOL = 1e-9


def default_tolerance():
    """Certificate tolerance, overridable through ``DUALCERT_TOL``."""
    raw = os.environ.get("DUALCERT_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        val = float(raw)
    except ValueError as exc:
        raise ConfigError(f"DUALCERT_TOL={raw!r} is not a number") from exc
    if not val >= 0:
        raise ConfigError("DUALCERT_TOL must be nonnegative")
    return val


# --------------------------------------------------------------------------
# constants

def _grad_norms(inst, x):
    return np.array([np.linalg.norm(c.grad(x)) for c in inst.inequalities], dtype=float)


def gamma_at(inst, res):
    """``sqrt(m+1)/theta * max{sigma_max(A), max_i ||grad g_i(x̄(u))||}``.

    ``res`` is an :class:`~dualcert.oracle.OracleResult` or a primal point.
    """
    x = getattr(res, "xbar", res)
    x = np.asarray(x, dtype=float)
    gn = _grad_norms(inst, x)
    top = max(inst.constants.sigma_max_A, float(gn.max()) if gn.size else 0.0)
    return np.sqrt(inst.m + 1) / inst.objective.theta * top


@dataclass
class SurrogateConstants:
    """Computable stand-ins for the uncomputable local constants."""

    case: str
    gamma_hat: float
    L_hat: float
    eta_hat: float
    multiplier_floor: Optional[list] = None


def _floor(inst):
    """Multiplier floor ``u_tilde`` for nonaffine constraints.

    Uses the instance's floor if given; otherwise picks
    ``-theta / (2 m L'_i)`` so the Lagrangian modulus stays at least theta/2.
    Affine constraints get ``-inf`` (any floor works for them).
    """
    m = inst.m
    fl = np.full(m, -np.inf)
    if inst.multiplier_floor is not None:
        fl[:] = inst.multiplier_floor[:m]
    for i, con in enumerate(inst.inequalities):
        if con.is_affine:
            fl[i] = -np.inf
        elif inst.multiplier_floor is None:
            if con.grad_lipschitz is None:
                raise ConfigError("a nonaffine constraint needs grad_lipschitz or a multiplier_floor")
            fl[i] = -np.inf if con.grad_lipschitz == 0 else -inst.objective.theta / (2 * m * con.grad_lipschitz)
    return fl


def surrogate_constants(inst, case, dual_diameter=None):
    """gamma_hat, L_hat and eta_hat for a compact X or Lipschitz g.

    ``case='compact'`` needs X to be a box.  ``case='lipschitz'`` needs an
    upper bound ``dual_diameter`` on the diameter of the initial dual level
    ball (``2 ||u_0 - u*||`` works) whenever some constraint is nonaffine.
    """
    th = inst.objective.theta
    m = inst.m
    sA = inst.constants.sigma_max_A
    L = inst.lipschitz_constants
    fl = _floor(inst)
    finite = np.isfinite(fl)
    if case == "compact":
        if inst.feasible_set.lower is None:
            raise ConfigError("the compact-X rule needs a box X")
        sup = np.array([c.grad_sup if c.grad_sup is not None else c.lipschitz
                        for c in inst.inequalities], dtype=float)
        gamma_hat = np.sqrt(m + 1) / th * max(sA, float(sup.max()) if m else 0.0)
        spread = inst.feasible_set.diameter
    elif case == "lipschitz":
        gamma_hat = np.sqrt(m + 1) / th * max(sA, float(L.max()) if m else 0.0)
        if finite.any():
            if dual_diameter is None:
                raise ConfigError("the Lipschitz-g rule needs a bound on the dual level-set diameter")
            spread = gamma_hat * float(dual_diameter)
        else:
            spread = 0.0
    else:
        raise ConfigError(f"unknown surrogate case {case!r}")
    L_hat = gamma_hat * np.sqrt(sA**2 + float(np.sum(L**2)))
    eta = sA**2 / th
    if finite.any():
        eta = max(eta, float(np.max(-L[finite] / fl[finite])) * spread)
    return SurrogateConstants(case, float(gamma_hat), float(L_hat), float(eta),
                              multiplier_floor=[float(v) for v in fl])


def dual_lipschitz(inst):
    """Global Lipschitz constant of grad d and its provenance.

    Exact ``sigma_max(Ã)^2 / theta`` for affine constraints, the compact-X
    surrogate otherwise.
    """
    if inst.all_linear:
        return inst.constants.sigma_max_At**2 / inst.objective.theta, EXACT
    if inst.feasible_set.lower is not None:
        return surrogate_constants(inst, "compact").L_hat, SURROGATE
    return surrogate_constants(inst, "lipschitz", dual_diameter=0.0).L_hat, SURROGATE


# --------------------------------------------------------------------------
# pointwise bounds (scalar API)

def _gap(ctx, d_u):
    ref = ctx.ref
    slack = ctx.cert_tol + ref["gap_tol"]
    gap = ref["d"] - d_u
    if gap < -slack:
        raise ReferenceInconsistency(
            f"d(u)={d_u!r} exceeds the reference optimum {ref['d']!r} by {-gap:.3e}")
    return max(gap, 0.0)


def distance_bounds(ctx, u, d_u):
    """Two upper bounds on ``||x̄(u) - x*||``: via ``||u - u*||`` and via the gap."""
    u = np.asarray(u, dtype=float)
    G = _gap(ctx, d_u)
    return {
        "bound_via_dual_dist": ctx.gamma_star * float(np.linalg.norm(u - ctx.u_star)),
        "bound_via_gap": float(np.sqrt(2 * G / ctx.theta)),
    }


def value_and_infeasibility_bounds(ctx, u, d_u, linear=None):
    """Bounds on ``f(x̄(u)) - f*`` (upper, lower) and on ``Delta(x̄(u))``.

    ``linear=None`` picks the affine-constraint forms whenever they apply.
    """
    u = np.asarray(u, dtype=float)
    G = _gap(ctx, d_u)
    use_linear = ctx.linear if linear is None else linear
    if use_linear:
        if not ctx.linear:
            raise UnsupportedProblem("linear-case bounds need affine constraints")
        s = ctx.sigma_max_At * np.sqrt(2 * G / ctx.theta)
        return {"value_upper": float(np.linalg.norm(u)) * s,
                "value_lower": -float(np.linalg.norm(ctx.u_star)) * s,
                "infeasibility": float(s)}
    if ctx.L_tilde is None:
        raise ConfigError("no dual Lipschitz constant available")
    L = ctx.L_tilde
    mp = ctx.m + ctx.p
    sG = np.sqrt(G)
    return {
        "value_upper": float((np.max(np.abs(u)) * np.sqrt(2 * L * mp) + sG) * sG),
        "value_lower": -float(np.linalg.norm(ctx.u_star) * np.sqrt(2 * L * G)),
        "infeasibility": float(np.sqrt(2 * L * G)),
    }


# --------------------------------------------------------------------------
# context

@dataclass
class CertificateContext:
    """Everything needed to evaluate bounds on a trace, JSON-serializable."""

    theta: float
    m: int
    p: int
    sigma_max_A: float
    sigma_max_At: Optional[float]
    lipschitz: list
    linear: bool
    gamma_star: float
    L_tilde: Optional[float]
    L_tilde_provenance: str
    ref: dict
    cert_tol: float = DEFAULT_TOL
    monotone_tol: float = MONOTONE_TOL
    gamma_hat: Optional[float] = None
    eta_hat: Optional[float] = None
    method: Optional[str] = None
    method_params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def u_star(self):
        return np.asarray(self.ref["u"], dtype=float)

    @property
    def x_star(self):
        return np.asarray(self.ref["x"], dtype=float)

    @property
    def ref_x_slack(self):
        """Upper bound on the distance from the stored x* to the true one."""
        return float(np.sqrt(2 * self.ref["gap_tol"] / self.theta))

    @property
    def ref_f_slack(self):
        """Upper bound on ``|f(stored x*) - f*|`` from the reference gap."""
        eps = self.ref["gap_tol"]
        u = self.u_star
        cands = []
        if self.linear:
            cands.append(float(np.linalg.norm(u)) * self.sigma_max_At * np.sqrt(2 * eps / self.theta))
        if self.L_tilde is not None:
            mp = self.m + self.p
            cands.append((float(np.max(np.abs(u))) * np.sqrt(2 * self.L_tilde * mp) + np.sqrt(eps)) * np.sqrt(eps))
        return float(min(cands)) if cands else 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "ref" not in data or data["ref"] is None:
            raise ReferenceInconsistency("reference required")
        missing = [k for k in ("x", "u", "f", "d", "gap_tol") if k not in data["ref"]]
        if missing:
            raise ReferenceInconsistency(f"reference required (missing {missing})")
        return cls(**data)


def _ref_dict(ref):
    return {"x": [float(v) for v in ref.x], "u": [float(v) for v in ref.u], "f": float(ref.f),
            "d": float(ref.d), "gap_tol": float(ref.gap_tol)}


def make_context(inst, ref, trace=None, cert_tol=None, L_tilde=None, ubar=None, oracle_cfg=None):
    """Build the context for an instance, a reference and optionally a trace.

    ``L_tilde`` overrides the pointwise Lipschitz constant (default
    :func:`dual_lipschitz`).  ``ubar`` is the non-optimal dual point used by
    the finite-time value bound of the fast methods when ``p == 0``;
    by default the trace's starting point is used if it is not optimal.
    """
    from .oracle import solve_lagrangian

    if ref is None:
        raise ReferenceInconsistency("reference required")
    cert_tol = default_tolerance() if cert_tol is None else cert_tol
    L_pt, prov = (L_tilde, SURROGATE) if L_tilde is not None else _try_dual_lipschitz(inst)
    ctx = CertificateContext(
        theta=float(inst.objective.theta), m=inst.m, p=inst.p,
        sigma_max_A=float(inst.constants.sigma_max_A),
        sigma_max_At=None if inst.constants.sigma_max_At is None else float(inst.constants.sigma_max_At),
        lipschitz=[float(v) for v in inst.lipschitz_constants],
        linear=inst.all_linear, gamma_star=float(gamma_at(inst, ref.x)),
        L_tilde=L_pt, L_tilde_provenance=prov, ref=_ref_dict(ref), cert_tol=float(cert_tol),
    )
    if inst.feasible_set.lower is not None:
        sc = surrogate_constants(inst, "compact")
        ctx.gamma_hat, ctx.eta_hat = sc.gamma_hat, sc.eta_hat
    if trace is None:
        return ctx
    ctx.method = trace.method
    u_star = ref.u
    grad_star = inst.constraint_values(ref.x)
    u0 = np.asarray(trace.u[0], dtype=float)
    R = float(np.linalg.norm(u0 - u_star))
    mp = dict(u0=u0.tolist(), dist_u0=R)
    if trace.method == "pg":
        alpha = trace.params["alpha"]
        L, lprov = _pg_lipschitz(inst, trace.params.get("rule"), R)
        mp.update(alpha=alpha)
        if L is None:
            ctx.notes.append("no Lipschitz constant for the step-size analysis; envelopes skipped")
        else:
            delta = 1.0 / alpha - L / 2.0
            R0 = max(ref.d - trace.d[0], 0.0)
            rho = (float(np.linalg.norm(grad_star)) + L * R + R / alpha) ** 2
            mp.update(L=L, L_provenance=lprov, delta=delta, R0=R0, rho=rho)
            if delta <= 0:
                ctx.notes.append(f"step size {alpha} is not compliant (delta={delta:.3e}); envelopes skipped")
    elif trace.method == "tseng":
        w0 = np.asarray(trace.params["w0"], dtype=float)
        Lt = float(trace.params["L_tilde"])
        exact = inst.all_linear and np.isclose(Lt, inst.constants.sigma_max_At**2 / inst.objective.theta,
                                                rtol=1e-12)
        mp.update(L=Lt, L_provenance=EXACT if exact else SURROGATE,
                  Q=0.5 * float(np.sum((u_star - w0) ** 2)))
    elif trace.method == "fista":
        mp.update(L=inst.constants.sigma_max_At**2 / inst.objective.theta, L_provenance=EXACT)
    else:
        raise ConfigError(f"unknown method {trace.method!r}")
    if trace.method in ("tseng", "fista") and inst.p == 0 and inst.slater_point is not None:
        xs = inst.slater_point
        gmax = float(np.max(inst.constraint_values(xs)[: inst.m]))
        if ubar is None:
            ubar = u0
        d_ubar = solve_lagrangian(inst, np.asarray(ubar, dtype=float), oracle_cfg).dual_value
        if ref.d - d_ubar > ref.gap_tol + cert_tol:
            mp.update(slater_f=float(inst.objective.value(xs)), slater_gmax=gmax, d_ubar=float(d_ubar))
        else:
            ctx.notes.append("finite-time value bound skipped: the supplied ubar is optimal")
    ctx.method_params = mp
    return ctx


def _try_dual_lipschitz(inst):
    try:
        L, prov = dual_lipschitz(inst)
        return float(L), prov
    except ConfigError:
        return None, SURROGATE


def _pg_lipschitz(inst, rule_kind, dist_u0):
    if inst.all_linear and rule_kind in (None, "linear", "explicit", "strongly_concave"):
        return inst.constants.sigma_max_At**2 / inst.objective.theta, EXACT
    kind = rule_kind if rule_kind in ("compact", "lipschitz") else (
        "compact" if inst.feasible_set.lower is not None else "lipschitz")
    try:
        sc = surrogate_constants(inst, kind, dual_diameter=2 * dist_u0)
    except ConfigError:
        return None, SURROGATE
    return sc.L_hat, SURROGATE


# --------------------------------------------------------------------------
# trace evaluation

@dataclass
class BoundFamily:
    """One bound evaluated along a trace (``measured <= bound + tol``)."""

    name: str
    k: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    tol: np.ndarray
    provenance: str

    @property
    def active(self):
        return np.isfinite(self.bound) & np.isfinite(self.measured)

    @property
    def margin(self):
        return self.bound - self.measured

    @property
    def violated(self):
        with np.errstate(invalid="ignore"):
            return self.active & (self.measured - self.bound > self.tol)

    def worst(self):
        """Smallest margin relative to tolerance, or None if never active."""
        act = self.active
        if not act.any():
            return None
        slack = (self.margin + self.tol)[act]
        i = int(np.argmin(slack))
        return {"k": int(self.k[act][i]), "margin": float(self.margin[act][i]),
                "slack": float(slack[i])}

    def to_dict(self):
        return {"constant_provenance": self.provenance, "k": self.k.tolist(),
                "measured": _jl(self.measured), "bound": _jl(self.bound),
                "tolerance": _jl(self.tol), "margin": _jl(self.margin),
                "violated": self.violated.tolist()}


def _jl(a):
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]


@dataclass
class CertificateReport:
    method: Optional[str]
    context: CertificateContext
    families: dict

    def violations(self):
        return {n: int(f.violated.sum()) for n, f in self.families.items() if f.violated.any()}

    @property
    def ok(self):
        return not self.violations()

    def worst_margins(self):
        return {n: f.worst() for n, f in self.families.items()}

    def to_dict(self, trace_file=None):
        out = {"method": self.method, "trace_file": trace_file, "context": self.context.to_dict(),
               "violations": self.violations(),
               "families": {n: f.to_dict() for n, f in self.families.items()}}
        return out

    def to_json(self, path, trace_file=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(trace_file), fh)


def _sqrtpos(v):
    return np.sqrt(np.maximum(v, 0.0))


def evaluate(ctx, data, families=None):
    """Evaluate all applicable bound families on trace columns.

    ``data`` needs ``k``, ``u`` (rows), ``d``, ``f_xbar``, ``delta_xbar``,
    ``dist_xbar_to_ref`` and optionally ``inner_residual``.
    """
    k = np.asarray(data["k"], dtype=int)
    U = np.asarray(data["u"], dtype=float)
    d = np.asarray(data["d"], dtype=float)
    f = np.asarray(data["f_xbar"], dtype=float)
    delta = np.asarray(data["delta_xbar"], dtype=float)
    dist_x = np.asarray(data["dist_xbar_to_ref"], dtype=float)
    inner = np.nan_to_num(np.asarray(data.get("inner_residual", np.zeros_like(d)), dtype=float))
    ref = ctx.ref
    u_star = ctx.u_star
    eps = ref["gap_tol"]
    th = ctx.theta
    mp = ctx.m + ctx.p

    gap_meas = ref["d"] - d
    G = np.maximum(gap_meas, 0.0) + eps
    dist_u = np.linalg.norm(U - u_star, axis=1)
    norm_u = np.linalg.norm(U, axis=1)
    norm_inf = np.max(np.abs(U), axis=1) if U.shape[1] else np.zeros(len(k))
    nu_star = float(np.linalg.norm(u_star))
    df = f - ref["f"]

    base = ctx.cert_tol + inner
    tol_x = base + ctx.ref_x_slack
    tol_f = base + ctx.ref_f_slack
    tol_d = base + eps
    out = {}

    def add(name, meas, bnd, tol, prov):
        out[name] = BoundFamily(name, k, np.asarray(meas, dtype=float), np.asarray(bnd, dtype=float),
                                np.broadcast_to(np.asarray(tol, dtype=float), k.shape).copy(), prov)

    add("reference_consistency", d - ref["d"], np.zeros_like(d), tol_d, EXACT)
    add("distance_via_dual_distance", dist_x, ctx.gamma_star * dist_u, tol_x, EXACT)
    add("distance_via_gap", dist_x, np.sqrt(2 * G / th), tol_x, EXACT)
    if ctx.L_tilde is not None:
        L = ctx.L_tilde
        prov = ctx.L_tilde_provenance
        add("value_upper", df, (norm_inf * np.sqrt(2 * L * mp) + np.sqrt(G)) * np.sqrt(G), tol_f, prov)
        add("value_lower", -df, nu_star * np.sqrt(2 * L * G), tol_f, prov)
        add("infeasibility", delta, np.sqrt(2 * L * G), base, prov)
    if ctx.linear:
        s = ctx.sigma_max_At * np.sqrt(2 * G / th)
        add("value_upper_linear", df, norm_u * s, tol_f, EXACT)
        add("value_lower_linear", -df, nu_star * s, tol_f, EXACT)
        add("infeasibility_linear", delta, s, base, EXACT)

    mpar = ctx.method_params
    if ctx.method == "pg" and "delta" in mpar and mpar["delta"] > 0:
        prov = mpar["L_provenance"]
        L = mpar["L"]
        R0 = mpar["R0"] + eps
        E = R0 / (1 + k * R0 * mpar["delta"] / mpar["rho"])
        r0 = mpar["dist_u0"]
        add("envelope_dual_gap", gap_meas, E, tol_d, prov)
        add("envelope_distance", dist_x, _sqrtpos(2 * E / th), tol_x, prov)
        add("envelope_value_upper", df, (nu_star + r0) * _sqrtpos(2 * mp * L * E) + E, tol_f, prov)
        add("envelope_value_lower", -df, nu_star * _sqrtpos(2 * L * E), tol_f, prov)
        add("envelope_infeasibility", delta, _sqrtpos(2 * L * E), base, prov)
        if ctx.linear:
            add("envelope_value_upper_linear", df,
                ctx.sigma_max_At * (nu_star + r0) * _sqrtpos(2 * E / th), tol_f, prov)
        inc = np.full(len(k), np.nan)
        inc[1:] = np.diff(dist_u)
        bnd = np.where(np.isnan(inc), np.nan, 0.0)
        add("dual_distance_monotone", inc, bnd, ctx.monotone_tol, prov)
    elif ctx.method in ("tseng", "fista"):
        kk = np.where(k >= 1, k + 1.0, np.nan)
        prov = mpar["L_provenance"]
        if ctx.method == "tseng":
            L = mpar["L"]
            Q = mpar["Q"]
            gapb = 4 * L * Q / kk**2
            add("envelope_dual_gap", gap_meas, gapb, tol_d, prov)
            add("envelope_distance", dist_x, np.sqrt(8 * L * Q / th) / kk, tol_x, prov)
            add("envelope_value_upper", df, L * norm_inf * np.sqrt(8 * mp * Q) / kk + gapb, tol_f, prov)
            add("envelope_value_lower", -df, L * nu_star * np.sqrt(8 * Q) / kk, tol_f, prov)
            add("envelope_infeasibility", delta, L * np.sqrt(8 * Q) / kk, base, prov)
            if "d_ubar" in mpar:
                gap_bar = ref["d"] - mpar["d_ubar"]
                kmin = np.sqrt(4 * L * Q / gap_bar)
                b = (L * (mpar["d_ubar"] - mpar["slater_f"]) * np.sqrt(8 * mp * Q)
                     / (kk * mpar["slater_gmax"]) + gapb)
                add("envelope_value_upper_finite_time", df, np.where(k > kmin, b, np.nan), tol_f, prov)
        else:
            s = ctx.sigma_max_At
            R = mpar["dist_u0"]
            add("envelope_dual_gap", gap_meas, 2 * s**2 * R**2 / (th * kk**2), tol_d, prov)
            add("envelope_distance", dist_x, 2 * s * R / (th * kk), tol_x, prov)
            add("envelope_value_upper", df, 2 * norm_u * s**2 * R / (th * kk), tol_f, prov)
            add("envelope_value_lower", -df, 2 * nu_star * s**2 * R / (th * kk), tol_f, prov)
            add("envelope_infeasibility", delta, 2 * s**2 * R / (th * kk), base, prov)
            if "d_ubar" in mpar:
                gap_bar = ref["d"] - mpar["d_ubar"]
                kmin = s * R * np.sqrt(2 / (th * gap_bar))
                b = (2 * s**2 * (mpar["d_ubar"] - mpar["slater_f"]) * R
                     / (th * kk * mpar["slater_gmax"]))
                add("envelope_value_upper_finite_time", df, np.where(k > kmin, b, np.nan), tol_f, prov)
    if families is not None:
        out = {n: fam for n, fam in out.items() if n in families}
    return CertificateReport(ctx.method, ctx, out)


def certify_trace(inst, ref, trace, cert_tol=None, **kwargs):
    """Context plus evaluation in one call."""
    ctx = make_context(inst, ref, trace, cert_tol=cert_tol, **kwargs)
    return evaluate(ctx, trace.data(ref))


def pg_rate_envelopes(ctx, data):
    """Envelope families of the projected dual gradient method."""
    if ctx.method != "pg":
        raise ConfigError(f"context is for {ctx.method!r}, not the projected gradient method")
    rep = evaluate(ctx, data)
    rep.families = {n: f for n, f in rep.families.items()
                    if n.startswith("envelope") or n == "dual_distance_monotone"}
    return rep


def fg_rate_envelopes(ctx, data, variant):
    """Envelope families of the fast methods (``variant`` is tseng or fista)."""
    if variant not in ("tseng", "fista"):
        raise ConfigError(f"unknown fast-gradient variant {variant!r}")
    if ctx.method != variant:
        raise ConfigError(f"context is for {ctx.method!r}, not {variant!r}")
    rep = evaluate(ctx, data)
    rep.families = {n: f for n, f in rep.families.items() if n.startswith("envelope")}
    return rep


# --------------------------------------------------------------------------
# sampled lemma checks

def sample_dual_points(inst, rng, count, low=-2.0, high=2.0, extended=False):
    """Uniform points of a box intersected with D (or with the extended domain).

    Inequality coordinates are drawn from ``[0, high]``; with
    ``extended=True`` they are drawn from ``[floor/2, high]`` instead, which
    needs ``inst.multiplier_floor``.
    """
    m, p = inst.m, inst.p
    U = rng.uniform(low, high, size=(count, m + p))
    if m:
        lo = np.zeros(m)
        if extended:
            if inst.multiplier_floor is None and not inst.all_linear:
                raise ConfigError("extended sampling needs a multiplier_floor")
            lo = (0.5 * inst.multiplier_floor[:m] if inst.multiplier_floor is not None
                  else np.full(m, low))
        U[:, :m] = rng.uniform(lo, high, size=(count, m))
    return U


def lemma_checks(inst, pairs, cfg=None, tol=1e-7, extended_pairs=None):
    """Check the sampled primal contraction and dual Lipschitz inequalities.

    ``pairs`` is a sequence of ``(u, v)`` in D.  Families:

    * ``contraction``: ``||x̄(u) - x̄(v)|| <= min{gamma(u), gamma(v)} ||u - v||``
    * ``dual_lipschitz``: ``||grad d(u) - grad d(v)|| <= L ||u - v||`` with the
      global constant of :func:`dual_lipschitz`
    * affine constraints only: ``contraction_linear`` with ``sigma_max(Ã)/theta``
      and ``linear_constant_tighter``: ``sigma_max(Ã)/theta <= min gamma``
    * ``extended_quadratic_lower``: on ``extended_pairs`` (points allowed
      below zero down to the multiplier floor),
      ``d(v) - d(u) - grad d(u)'(v - u) >= -L/2 ||u - v||^2``.

    Returns ``{family: {"count", "violations", "worst_margin"}}``.
    """
    from .oracle import solve_lagrangian

    L, _ = dual_lipschitz(inst)
    sig = inst.constants.sigma_max_At / inst.objective.theta if inst.all_linear else None
    rows = {}

    def push(name, meas, bnd, slack):
        r = rows.setdefault(name, {"count": 0, "violations": 0, "worst_margin": np.inf})
        r["count"] += 1
        margin = bnd - meas
        r["worst_margin"] = min(r["worst_margin"], margin)
        if meas - bnd > slack:
            r["violations"] += 1

    for u, v in pairs:
        ru = solve_lagrangian(inst, np.asarray(u, dtype=float), cfg)
        rv = solve_lagrangian(inst, np.asarray(v, dtype=float), cfg)
        duv = float(np.linalg.norm(np.asarray(u) - np.asarray(v)))
        slack = tol + ru.inner_residual + rv.inner_residual
        dx = float(np.linalg.norm(ru.xbar - rv.xbar))
        gmin = min(gamma_at(inst, ru), gamma_at(inst, rv))
        push("contraction", dx, gmin * duv, slack)
        push("dual_lipschitz", float(np.linalg.norm(ru.dual_gradient - rv.dual_gradient)), L * duv, slack)
        if sig is not None:
            push("contraction_linear", dx, sig * duv, slack)
            push("linear_constant_tighter", sig, gmin, tol * (1 + sig))
    for u, v in extended_pairs or ():
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        ru = solve_lagrangian(inst, u, cfg, extended=True)
        rv = solve_lagrangian(inst, v, cfg, extended=True)
        lhs = rv.dual_value - ru.dual_value - float(ru.dual_gradient @ (v - u))
        push("extended_quadratic_lower", -lhs, 0.5 * L * float(np.sum((u - v) ** 2)),
             tol * (1 + abs(ru.dual_value) + abs(rv.dual_value)))
    for r in rows.values():
        r["worst_margin"] = float(r["worst_margin"])
    return rows
