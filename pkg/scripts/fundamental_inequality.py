"""Drift, Green drift, entropy and critical exponent from one seed.

Reports h against l_G and against l * D_Gamma, with the stderrs, for a
range of path counts so the convergence of each estimate is visible.
"""
from _common import emit, parser, setup
from cuspwalk import fundamental_report

ap = parser(__doc__)
ap.add_argument("--steps", type=int, default=400)
ap.add_argument("--paths", type=int, nargs="+", default=[2500, 10_000])
ap.add_argument("--entropy-paths", type=int, default=2000)
args = ap.parse_args()
group, chain, lab = setup(args)

out = []
for M in args.paths:
    rep = fundamental_report(lab, args.steps, M, args.seed, entropy_count=args.entropy_paths)
    out.append({"paths": M, "drift_X": rep.drift_X.to_json(), "drift_G": rep.drift_G.to_json(),
                "entropy": rep.entropy.value, "entropy_stderr": rep.entropy.stderr,
                "critical_exponent": rep.critical.value, "checks": rep.checks,
                "excursions": rep.excursions.to_json() if rep.excursions else None})
emit(out)
