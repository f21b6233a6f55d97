"""Command-line entry point.

Subcommands
-----------
resonances CFG   print the crossing schedule
simulate CFG     direct solve, write KGSNAP01 snapshots
predict CFG      asymptotic amplitude traces as CSV
compare CFG      full report; exit status 1 if a hard gate fails
fresnel          layer jump by direct integration next to the closed form
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

from . import __version__
from .errors import ResonanceError
from .layer import LayerProblem, jump_amplitude_closed_form, layer_ode_integrate
from .pipeline import (
    ExperimentConfig,
    compare,
    predict,
    schedule_resonances,
    simulate,
    summary_text,
)

__all__ = ["main", "build_parser"]


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    over = {}
    if getattr(args, "eps", None):
        over["epsilons"] = list(args.eps)
    if getattr(args, "output", None):
        over["output_dir"] = args.output
    return cfg.with_overrides(**over) if over else cfg


def _cmd_resonances(args):
    cfg = _load(args)
    print(f"{'k':>3} {'t2*':>18} {'phi':>12} {'kappa':>10} {'omega':>10}")
    for ev in schedule_resonances(cfg):
        print(f"{ev.k:>3} {ev.t2_star:>18.12f} {ev.phi:>12.6g} {ev.kappa:>10.6g} {ev.omega:>10.6g}")
    return 0


def _cmd_simulate(args):
    cfg = _load(args)
    out = cfg["output_dir"]
    for eps in cfg.epsilons:
        res = simulate(cfg, eps, out_dir=os.path.join(out, "snapshots"))
        print(f"eps={eps:g}: n={res.grid.n_points} dt={res.grid.dt:.4g} "
              f"{len(res.snapshots)} snapshots in {res.wall_time:.1f} s")
    return 0


def _cmd_predict(args):
    cfg = _load(args)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    for eps in cfg.epsilons:
        traces = predict(cfg, eps)
        path = os.path.join(out, f"predicted_eps{eps:g}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t2", "mode_label", "predicted_abs"])
            for k, rows in traces.items():
                for t2, a in rows:
                    w.writerow([repr(t2), f"k{k}", repr(a)])
        print(f"wrote {path}")
    return 0


def _cmd_compare(args):
    cfg = _load(args)
    rep = compare(cfg, out_dir=cfg["output_dir"], jobs=args.jobs)
    sys.stdout.write(summary_text(rep, cfg))
    return 1 if rep.hard_failures else 0


def _cmd_fresnel(args):
    f = complex(args.f_re, args.f_im)
    tic = time.perf_counter()
    res = layer_ode_integrate(LayerProblem(args.phi, f, (-args.span, args.span)))
    wall = time.perf_counter() - tic
    exact = jump_amplitude_closed_form(args.phi, f)
    err = abs(res.W_plus - exact) / abs(exact) if exact != 0 else abs(res.W_plus)
    print(f"W_plus      {res.W_plus.real:+.12e} {res.W_plus.imag:+.12e}i")
    print(f"closed form {exact.real:+.12e} {exact.imag:+.12e}i")
    print(f"rel_error   {err:.3e}")
    print(f"wall_time   {wall:.3f} s")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="resonant-kg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("--eps", type=float, nargs="+", help="override the epsilon list")
        p.add_argument("--output", help="override the output directory")
        p.set_defaults(func=func)
        return p

    with_config("resonances", _cmd_resonances, "print the crossing schedule")
    with_config("simulate", _cmd_simulate, "direct solve and write snapshots")
    with_config("predict", _cmd_predict, "write predicted amplitude traces")
    p = with_config("compare", _cmd_compare, "direct vs asymptotic report")
    p.add_argument("--jobs", type=int, default=None, help="parallel epsilon runs")

    p = sub.add_parser("fresnel", help="layer jump oracle")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--f-re", type=float, default=1.0)
    p.add_argument("--f-im", type=float, default=0.0)
    p.add_argument("--span", type=float, default=200.0, help="integrate over [-span, span]")
    p.set_defaults(func=_cmd_fresnel)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResonanceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
