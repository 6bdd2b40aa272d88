"""Command line driver for the convergence and adaptive studies.

Example::

    stwave --example 1 --p 2 --q 1 --levels 1..4 --out runs/ex1

Exit status is 0 when every requested level solved and 2 when any
level failed (failed levels are recorded and the study continues, so
partial artifacts are still written).
"""

import argparse
import sys

from .errors import StwaveError
from .problems import ExperimentConfig, load_config
from .studies import run_adaptive, run_convergence_study


def _int_tuple(text):
    """Parse `a..b` ranges and comma lists into an int tuple."""
    if ".." in text:
        a, b = text.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(tok) for tok in text.split(","))


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stwave",
        description="Solve the wave reconstruction benchmarks and "
                    "report convergence rates.")
    ap.add_argument("--config", metavar="PATH",
                    help="key = value file read before the flags below")
    ap.add_argument("--example", type=int, choices=(1, 2))
    ap.add_argument("--p", type=_int_tuple, metavar="P[,P..]",
                    help="primal degree(s), e.g. 2 or 1,2,3")
    ap.add_argument("--q", type=_int_tuple, metavar="Q[,Q..]",
                    help="dual degree(s), broadcast against --p")
    ap.add_argument("--gamma", type=float, help="primal stabilization weight")
    ap.add_argument("--gamma-star", type=float,
                    help="dual stabilization weight")
    ap.add_argument("--levels", type=_int_tuple, metavar="A..B",
                    help="mesh ladder levels, e.g. 1..4")
    ap.add_argument("--stab-primal", choices=("residual-jump", "face-only"))
    ap.add_argument("--stab-dual", choices=("gradient", "residual"))
    ap.add_argument("--adaptive", action="store_true", default=None,
                    help="run the indicator-driven refinement loop instead")
    ap.add_argument("--cycles", type=int, help="adaptive cycle count")
    ap.add_argument("--theta", type=float, help="bulk marking parameter")
    ap.add_argument("--out", metavar="DIR", help="artifact directory")
    ap.add_argument("--data-degree", type=int,
                    help="degree of the piecewise data representation; "
                         "0 samples the observation exactly")
    ap.add_argument("--allow-locking", action="store_true", default=None,
                    help="permit dual degree above the primal degree")
    ap.add_argument("--allow-unstable", action="store_true", default=None,
                    help="permit zero stabilization weights")
    ap.add_argument("--deep", action="store_true", default=None,
                    help="append the finest ladder level")
    ap.add_argument("--deterministic", action="store_true", default=None,
                    help="zero out wall-clock columns in reports")
    return ap


def config_from_args(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for name in ("example", "p", "q", "gamma", "gamma_star", "levels",
                 "stab_primal", "stab_dual", "adaptive", "cycles", "theta",
                 "out", "data_degree", "allow_locking", "allow_unstable",
                 "deep", "deterministic"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.adaptive:
            cycles = run_adaptive(cfg)
            last = cycles[-1]
            print(f"adaptive: {len(cycles)} cycles, final mesh "
                  f"{last.ntri} triangles, eta = {last.eta_total:.3e}, "
                  f"rel L2 = {last.rel_l2_M:.3e}")
            return 0
        results = run_convergence_study(cfg)
        failed = False
        for pair in results:
            for rep in pair.reports:
                print(f"V{pair.p} x V{pair.q} level {rep.level}: "
                      f"h = {rep.h:.3e}, rel L2 = {rep.rel_l2_M:.3e}, "
                      f"dual = {rep.dual_norm:.3e}")
            if "rel_l2_M" in pair.rates:
                print(f"V{pair.p} x V{pair.q} fitted rate "
                      f"tau = {pair.rates['rel_l2_M'].tau:.3f}")
            for lv, msg in pair.failures:
                failed = True
                print(f"V{pair.p} x V{pair.q} level {lv} FAILED: {msg}",
                      file=sys.stderr)
        return 2 if failed else 0
    except StwaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
