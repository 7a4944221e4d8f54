"""Shadow-lemma and dimension regressions for the harmonic and
Patterson-Sullivan measures, with epsilon printed next to every slope."""
from _common import emit, parser, setup
from cuspwalk import BoundaryMeasures, fundamental_report

ap = parser(__doc__)
ap.add_argument("--horizon", type=int, default=30)
ap.add_argument("--shadow-paths", type=int, default=1000)
ap.add_argument("--ball-paths", type=int, default=500)
ap.add_argument("--centers", type=int, default=16)
ap.add_argument("--offset", type=float, default=0.1, help="s - D_Gamma for the PS measure")
args = ap.parse_args()
group, chain, lab = setup(args)

rep = fundamental_report(lab, 400, 4000, args.seed, entropy_count=1000)
lX, lG, h, D = rep.drift_X.value, rep.drift_G.value, rep.entropy.value, rep.critical.value
delta_X = max(lab.hyperbolicity("graph", R, 20_000, args.seed).delta_hat for R in (6, 8, 10))
delta_G = lab.hyperbolicity("green", 8, 5000, args.seed).delta_hat
bm = BoundaryMeasures(lab, args.horizon, critical=D, delta_X=delta_X, delta_G=delta_G,
                      seed=args.seed)
s = D + args.offset
centers = bm.harmonic_centers(args.centers, seed=args.seed + 1)
# shadows need proxies at least twice as far as the target
distances = range(6, min(14, args.horizon // 2) + 1)
levels_X, levels_G = list(range(2, 17, 2)), list(range(2, 15, 2))
emit({"l_X": lX, "l_G": lG, "h": h, "D": D, "s": s,
      "epsilon_X": bm.epsilon("graph"), "epsilon_G": bm.epsilon("green"),
      "shadow_nu": bm.shadow_nu(bm.shadow_targets(distances), M=args.shadow_paths).to_json(),
      "shadow_ps": bm.shadow_ps(bm.shadow_targets(distances, seed=args.seed + 3, depth0=True), s,
                                M=args.ball_paths).to_json(),
      "dimension_nu_G": bm.dimension_nu("green", centers, levels_G, args.ball_paths,
                                        l_X=lX, l_G=lG, h=h).to_json(),
      "dimension_nu_X": bm.dimension_nu("graph", centers, levels_X, args.ball_paths,
                                        l_X=lX, l_G=lG, h=h).to_json(),
      "dimension_ps": bm.dimension_ps(bm.ps_centers(args.centers, seed=args.seed + 2),
                                      levels_X, s, args.ball_paths).to_json()})
