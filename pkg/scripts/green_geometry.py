"""Hyperbolicity plateau, Green/graph quasi-isometry and Ancona stability.

Each quantity is computed at the given sample size and again at double
size (or a second seed), so the printed spread shows the sampling noise.
"""
from _common import emit, parser, setup
from cuspwalk.cusped_graph import horoball_pairs

ap = parser(__doc__)
ap.add_argument("--quadruples", type=int, default=20_000)
ap.add_argument("--pairs", type=int, default=500)
ap.add_argument("--triples", type=int, default=200)
args = ap.parse_args()
group, chain, lab = setup(args)

delta = {R: lab.hyperbolicity("graph", R, args.quadruples, args.seed).delta_hat
         for R in (4, 6, 8, 10)}
qi = [lab.quasi_isometry(args.pairs, seed) for seed in (args.seed, args.seed + 1)]
ancona = {d: [lab.verify_inequality("ancona", args.triples, seed, distance=d).max_constant
              for seed in (args.seed, args.seed + 1)] for d in (8, 12, 16)}
emit({"delta_X": delta,
      "delta_G": lab.hyperbolicity("green", 8, args.quadruples // 4, args.seed).delta_hat,
      "quasi_isometry": qi, "ancona_max_by_stratum": ancona,
      "irreducibility": lab.irreducibility_gap(200, args.seed),
      "preferred_paths": {span: chain.graph.preferred_path_constants(
          horoball_pairs(group, span, 200, args.seed)) for span in (10, 10**3, 10**6)}})
