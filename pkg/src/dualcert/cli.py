"""Command line entry point: gen, reference, run, verify."""

import argparse
import json
import sys

from .errors import BudgetExhausted, DualCertError
from .experiment import parse_methods, run_experiment, verify_report
from .generator import GeneratorConfig, generate_instance
from .problem import load_instance, save_instance
from .reference import ReferenceSolution, compute_reference


def _cmd_gen(args):
    cfg = GeneratorConfig(seed=args.seed, n=args.n, m=args.m, p=args.p, q=args.q, gamma=args.gamma,
                          box=not args.no_box, eig_min=args.eig_min, eig_max=args.eig_max)
    save_instance(generate_instance(cfg), args.output)
    return 0


def _cmd_reference(args):
    inst = load_instance(args.instance)
    try:
        ref = compute_reference(inst, budget=args.budget)
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.best is not None and args.output:
            exc.best.save(args.output + ".partial")
        return 1
    ref.save(args.output)
    print(f"d*={ref.d!r} f*={ref.f!r} gap<={ref.gap_tol:.2e} ({ref.method}, {ref.iterations} it)")
    return 0


def _cmd_run(args):
    inst = load_instance(args.instance)
    ref = ReferenceSolution.load(args.ref)
    res = run_experiment(inst, parse_methods(args.methods), args.k, args.output, ref,
                         alpha_rule=args.alpha_rule)
    print(json.dumps(res["violations"]))
    return 1 if any(res["violations"].values()) else 0


def _cmd_verify(args):
    return verify_report(args.paths)


def build_parser():
    ap = argparse.ArgumentParser(prog="dualcert", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded random instance as JSON")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--p", type=int, default=2)
    g.add_argument("--q", type=int, default=5)
    g.add_argument("--gamma", type=float, default=1.0)
    g.add_argument("--eig-min", type=float, default=0.1)
    g.add_argument("--eig-max", type=float, default=10.0)
    g.add_argument("--no-box", action="store_true", help="X is the whole space")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_gen)

    r = sub.add_parser("reference", help="solve an instance to high accuracy")
    r.add_argument("instance")
    r.add_argument("--budget", type=int, default=200_000)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=_cmd_reference)

    u = sub.add_parser("run", help="run dual methods and write traces and certificates")
    u.add_argument("instance")
    u.add_argument("--ref", required=True)
    u.add_argument("--methods", default="pg,fista,tseng")
    u.add_argument("--k", type=int, default=10_000)
    u.add_argument("--alpha-rule", default="linear",
                   help="linear | compact | lipschitz | explicit:<alpha>")
    u.add_argument("-o", "--output", required=True)
    u.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="re-check certificate reports; exit 0 iff clean")
    v.add_argument("paths", nargs="+")
    v.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DualCertError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
