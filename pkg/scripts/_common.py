"""Shared setup for the experiment scripts."""
import argparse
import json
import sys
from fractions import Fraction

from cuspwalk import GreenLab, WeightedChain, make_group, solve_params


def parser(doc: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--group", default="f2-rel-z", choices=("f2-rel-z", "z2-free-z"))
    ap.add_argument("--a", type=Fraction, default=Fraction(2))
    ap.add_argument("--p", type=Fraction, default=None,
                    help="default 2 for f2-rel-z, 5/4 for z2-free-z")
    ap.add_argument("--q", type=Fraction, default=Fraction(4))
    ap.add_argument("--seed", type=int, default=1)
    return ap


def setup(args):
    group = make_group(args.group)
    p = args.p if args.p is not None else (Fraction(2) if args.group == "f2-rel-z"
                                           else Fraction(5, 4))
    chain = WeightedChain(solve_params(group, args.a, p, args.q), group)
    lab = GreenLab(chain)
    lab.spectral_radius_estimate(n_max=20)
    return group, chain, lab


def emit(obj):
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
