"""Return-probability decay, cusp decay of G((e,n),e) and the fitted tail.

Prints the spectral fit over 2n <= 20, the successive cusp ratios against
a^{-d_H}, and the return probabilities out to ``--horizon`` steps next to
the fitted per-step tail bound.
"""
import numpy as np

from _common import emit, parser, setup
from cuspwalk import Vertex
from cuspwalk.green_series import GreenSeries

O = Vertex((), 0)

ap = parser(__doc__)
ap.add_argument("--horizon", type=int, default=256)
args = ap.parse_args()
group, chain, lab = setup(args)

fit = lab.spectral
ret = GreenSeries(chain, horizon=args.horizon).series(O, O)
m0 = float(chain.m_weight(O))
rows = []
for n in range(20, args.horizon + 1, 20):
    tail = m0 * fit.C_hat * fit.delta_hat ** (n + 1) / (1 - fit.delta_hat)
    rows.append({"n": n, "p_n": float(ret[n]), "ratio_2": float(ret[n] / ret[n - 2]),
                 "remainder": float(lab.green(O, O) - ret[: n + 1].sum()), "fitted_tail": tail})
emit({"spectral": fit.to_json(),
      "cusp_decay": [{"n": n, "G": g, "ratio": r} for n, g, r in lab.cusp_decay(range(2, 11))],
      "target_ratio": float(chain.params.a) ** -group.parabolics[0].d_H,
      "green_origin": lab.green(O, O),
      "returns": rows,
      "max_series_error": float(abs(ret.sum() - lab.green(O, O)) / lab.green(O, O))})
