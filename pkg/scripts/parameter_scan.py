"""Feasibility of the walk parameters over a grid of (p, q), with the first
failing condition for each infeasible pair."""
from fractions import Fraction

from _common import emit, parser
from cuspwalk import check_params

ap = parser(__doc__)
ap.add_argument("--ps", type=Fraction, nargs="+",
                default=[Fraction(5, 4), Fraction(3, 2), Fraction(2), Fraction(3)])
ap.add_argument("--qs", type=Fraction, nargs="+",
                default=[Fraction(1), Fraction(2), Fraction(18, 5), Fraction(4), Fraction(8)])
args = ap.parse_args()

rows = []
for p in args.ps:
    for q in args.qs:
        try:
            rep = check_params(args.group, args.a, p, q)
            fail = rep.first_failure()
            rows.append({"p": str(p), "q": str(q), "passed": rep.passed,
                         "first_failure": None if fail is None else fail[0]})
        except ValueError as exc:
            rows.append({"p": str(p), "q": str(q), "passed": False, "error": str(exc)})
emit(rows)
