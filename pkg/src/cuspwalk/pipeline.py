"""The stages behind the command line: each writes its artifacts and
returns a JSON summary with pass/fail checks.

Every JSON artifact carries the config hash and the solved parameters.
Nothing depends on wall-clock time or on the number of workers, so the
same config and seed give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .asymptotics import estimate_drift, fundamental_report, simulate_paths
from .boundary_measures import (BoundaryMeasures, coset_growth_census, cusp_normalization)
from .config import RunConfig
from .cusped_graph import build_ball, export_ball, horoball_pairs
from .green_lab import ORIGIN, GreenLab, nstep_distribution
from .group_model import make_group
from .walk_kernel import (WeightedChain, audit_templates, check_params, fraction_json,
                          solve_params)


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, Fraction):
        return fraction_json(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class StageResult:
    name: str
    data: dict
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list:
        return sorted(k for k, ok in self.checks.items() if not ok)


def vertex_id(group, v) -> str:
    return f"{group.format(v.element)}@{v.depth}"


class Pipeline:
    def __init__(self, cfg: RunConfig, out: str | Path | None = None):
        self.cfg = cfg
        self.out = Path(out if out is not None else cfg.out)
        self.group = make_group(cfg.group)
        self._params = None
        self._lab = None
        self.results: dict = {}

    # -- shared objects ---------------------------------------------------

    @property
    def params(self):
        if self._params is None:
            self._params = solve_params(self.group, self.cfg.a, self.cfg.p, self.cfg.q)
        return self._params

    @property
    def chain(self) -> WeightedChain:
        return WeightedChain(self.params, self.group) if self._lab is None else self._lab.chain

    @property
    def lab(self) -> GreenLab:
        if self._lab is None:
            self._lab = GreenLab(WeightedChain(self.params, self.group))
            self._lab.spectral_radius_estimate(n_max=self.cfg.spectral_n_max)
        return self._lab

    def header(self, params=True) -> dict:
        return {"config_hash": self.cfg.hash, "config": self.cfg.to_json(),
                "params": self.params.to_json() if params else None}

    def write(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)

    def write_json(self, name: str, result: StageResult, params=True):
        body = {**self.header(params), "stage": result.name, "checks": result.checks,
                "passed": result.passed, "data": result.data}
        self.write(name, dumps(body))

    def write_csv(self, name: str, header: list, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, float) else x for x in r])
        self.write(name, buf.getvalue())

    def load(self, name: str):
        path = self.out / name
        if not path.exists():
            return None
        body = json.loads(path.read_text())
        if body.get("config_hash") != self.cfg.hash:
            return None
        return body

    # -- stages -----------------------------------------------------------

    def validate(self) -> StageResult:
        rep = check_params(self.group, self.cfg.a, self.cfg.p, self.cfg.q)
        data = rep.to_json()
        checks = {f"condition ({label})": ok for label, ok, _, _ in rep.conditions}
        checks.update({f"recipe {label}": ok for label, ok, _, _ in rep.recipe})
        res = StageResult("validate", data, checks)
        if res.passed:
            self.write_json("params.json", res)
        self.results["validate"] = res
        return res

    def build(self) -> StageResult:
        cfg = self.cfg
        chain = self.chain
        ball = build_ball(chain.graph, ORIGIN, cfg.ball_radius, cfg.ball_margin, cfg.budget)
        self.write("ball.edges", export_ball(ball, self.group))
        depths = sorted({v.depth for v in ball.inner()})
        audit = audit_templates(chain, depths)
        two = nstep_distribution(chain, ORIGIN, 2, exact=True)[ORIGIN]
        P = self.params
        data = {"ball_vertices": len(ball), "inner_vertices": len(ball.inner()),
                "radius": cfg.ball_radius, "margin": cfg.ball_margin, "audit": audit.to_json(),
                "p0": P.p0, "m0": P.m0, "p1": P.p_n[1], "two_step_return": two,
                "preferred_paths": chain.graph.preferred_path_constants(
                    horoball_pairs(self.group, 10**4, 200, cfg.seed))}
        checks = {"rows sum to 1": audit.rows_exact, "detailed balance": audit.balance_exact}
        res = StageResult("build", data, checks)
        self.write_json("build.json", res)
        self.results["build"] = res
        return res

    def simulate(self, steps: int | None = None, paths: int | None = None,
                 seed: int | None = None) -> StageResult:
        cfg = self.cfg
        steps = cfg.steps if steps is None else steps
        paths = cfg.paths if paths is None else paths
        seed = cfg.seed if seed is None else seed
        stride = max(1, steps // 10)
        sample = simulate_paths(self.chain, steps, paths, seed,
                                checkpoints=tuple(range(0, steps + 1, stride)))
        graph = self.chain.graph
        rows = []
        for i, row in enumerate(sample.vertices):
            for t, v in zip(sample.times, row):
                rows.append((i, t, self.group.format(v.element), v.depth, graph.distance(ORIGIN, v)))
        self.write_csv("paths.csv", ["path_id", "step", "element", "depth", "rho_X"], rows)
        final = [r[4] for r in rows if r[1] == steps]
        data = {"steps": steps, "paths": paths, "seed": seed, "times": sample.times,
                "mean_final_distance": float(np.mean(final)) if final else 0.0}
        res = StageResult("simulate", data, {})
        self.write_json("simulate.json", res)
        self.results["simulate"] = res
        return res

    def green(self) -> StageResult:
        cfg = self.cfg
        lab = self.lab
        fit = lab.spectral
        deltas = {str(R): lab.hyperbolicity("graph", R, cfg.quadruples, cfg.seed).delta_hat
                  for R in cfg.delta_radii}
        delta_G = lab.hyperbolicity("green", 8, max(cfg.quadruples // 4, 1), cfg.seed).delta_hat
        qi = lab.quasi_isometry(cfg.green_pairs, cfg.seed)
        ancona = {}
        for d in cfg.ancona_distances:
            rep = lab.verify_inequality("ancona", cfg.ancona_triples, cfg.seed, distance=d)
            ancona[str(d)] = rep.to_json()
        tops = [ancona[str(d)]["max_constant"] for d in cfg.ancona_distances]
        monotone_growth = len(tops) > 1 and all(b > a for a, b in zip(tops, tops[1:]))
        target = float(self.params.a) ** (-self.group.parabolics[0].d_H)
        decay = lab.cusp_decay(cfg.cusp_depths)
        C_G = lab.green_constant()
        # green.csv: truncated sums on the quasi-isometry pairs
        rows, skipped = [], 0
        for x, y in lab.metric_pairs(cfg.green_pairs, cfg.seed):
            try:
                gv = lab.green_value(x, y)
            except (ValueError, KeyError):
                skipped += 1
                continue
            rows.append((vertex_id(self.group, x), vertex_id(self.group, y),
                         self.chain.graph.distance(x, y), gv.partial, gv.tail_bound, gv.rho_G))
        self.write_csv("green.csv", ["x_id", "y_id", "rho_X", "G_partial", "tail_bound", "rho_G"],
                       rows)
        radii = [str(R) for R in cfg.delta_radii]
        plateau = (deltas[radii[-1]] - deltas[radii[-2]]) / deltas[radii[-2]] if len(radii) > 1 \
            and deltas[radii[-2]] > 0 else 0.0
        data = {"spectral": fit.to_json(), "delta_X": deltas, "delta_G": delta_G,
                "delta_plateau_increase": plateau, "quasi_isometry": qi, "ancona": ancona,
                "cusp_decay": {"target": target,
                               "rows": [{"n": n, "G": g, "ratio": r} for n, g, r in decay]},
                "C_G": C_G, "cusp_normalization": cusp_normalization(lab),
                "irreducibility": lab.irreducibility_gap(200, cfg.seed),
                "csv_rows": len(rows), "csv_skipped": skipped}
        checks = {
            "spectral delta < 1 and monotone": fit.passed,
            "spectral R^2 >= 0.95": fit.r2 >= 0.95,
            "delta plateau < 15%": plateau < 0.15,
            "quasi-isometry K stable": qi["stable"],
            "ancona no monotone growth": not monotone_growth and tops[-1] <= 1.3 * tops[0],
            "cusp decay ratios": all(0.75 * target <= r <= 1.25 * target for _, _, r in decay),
        }
        res = StageResult("green", data, checks)
        self.write_json("green.json", res)
        self.results["green"] = res
        return res

    def asymptotics(self) -> StageResult:
        cfg = self.cfg
        rep = fundamental_report(self.lab, cfg.steps, cfg.paths, cfg.seed, cfg.n_grid,
                                 cfg.entropy_paths, cfg.critical_radius)
        c = rep.checks
        data = rep.to_json()
        data["polynomial_growth_order"] = rep.critical.value / math.log(float(self.params.a))
        checks = {"drift positive": c["drift_positive"],
                  "drift relative stderr < 5%": c["drift_relative_stderr"] < 0.05,
                  "entropy matches Green drift": c["entropy_vs_green_drift"] < 0.15,
                  "h <= l D": c["guivarch_holds"]}
        res = StageResult("asymptotics", data, checks)
        self.write_json("asymptotics.json", res)
        self.results["asymptotics"] = res
        return res

    def _stage_data(self, name: str) -> dict:
        if name in self.results:
            return self.results[name].data
        body = self.load(f"{name}.json")
        if body is not None:
            return body["data"]
        return getattr(self, name)().data

    def boundary(self) -> StageResult:
        cfg = self.cfg
        lab = self.lab
        g = self._stage_data("green")
        a = self._stage_data("asymptotics")
        lX, lG = a["drift_X"]["value"], a["drift_G"]["value"]
        h, D = a["entropy"]["value"], a["critical_exponent"]["value"]
        delta_X = max(g["delta_X"].values())
        bm = BoundaryMeasures(lab, cfg.R_horizon, critical=D, delta_X=delta_X,
                              delta_G=g["delta_G"], seed=cfg.seed,
                              epsilon_X=cfg.epsilon_X, epsilon_G=cfg.epsilon_G)
        s = D + cfg.ps_offset
        targets = bm.shadow_targets(cfg.shadow_distances, cfg.shadow_per_distance)
        shadow = bm.shadow_nu(targets, M=cfg.shadow_paths)
        centers = bm.harmonic_centers(cfg.boundary_centers, seed=cfg.seed + 1)
        dim_G = bm.dimension_nu("green", centers, list(cfg.levels_G), cfg.boundary_paths,
                                l_X=lX, l_G=lG, h=h)
        dim_X = bm.dimension_nu("graph", centers, list(cfg.levels_X), cfg.boundary_paths,
                                l_X=lX, l_G=lG, h=h)
        pcs = bm.ps_centers(cfg.boundary_centers, seed=cfg.seed + 2)
        dim_ps = bm.dimension_ps(pcs, list(cfg.levels_X), s, cfg.boundary_paths)
        orbit_targets = bm.shadow_targets(cfg.shadow_distances, cfg.shadow_per_distance,
                                          seed=cfg.seed + 3, depth0=True)
        shadow_ps = bm.shadow_ps(orbit_targets, s, M=cfg.boundary_paths)
        growth = coset_growth_census(lab, cfg.critical_radius, metric="graph")
        # boundary.csv: proxies of both measures with Gromov products to a probe set
        nu = bm.harmonic(cfg.boundary_paths, seed=cfg.seed + 4)
        mu = bm.ps(cfg.boundary_paths, s, seed=cfg.seed + 5)
        probes = nu.proxies[:4]
        rows = []
        for kind, ps in (("nu", nu), ("ps", mu)):
            for i, (v, w) in enumerate(zip(ps.proxies, ps.weights)):
                gps = [bm.gromov("graph", ORIGIN, v, q) for q in probes]
                rows.append([f"{kind}{i}", vertex_id(self.group, v),
                             float(w) if kind == "nu" else "", float(w) if kind == "ps" else "",
                             *gps])
        self.write_csv("boundary.csv", ["proxy_id", "vertex", "weight_nu", "weight_ps"]
                       + [f"gromov_probe{k}" for k in range(len(probes))], rows)
        data = {"epsilon_X": bm.epsilon("graph"), "epsilon_G": bm.epsilon("green"),
                "R_nu": bm.R_nu, "R_X": bm.R_X, "s": s, "shadow_nu": shadow.to_json(),
                "shadow_ps": shadow_ps.to_json(), "dimension_nu_G": dim_G.to_json(),
                "dimension_nu_X": dim_X.to_json(), "dimension_ps": dim_ps.to_json(),
                "coset_growth": growth.to_json()}
        checks = {
            "shadow slope in [0.85, 1.15]": 0.85 <= shadow.slope <= 1.15,
            "shadow R^2 >= 0.9": shadow.r_squared >= 0.9,
            "dimension_nu_G within 20%": dim_G.relative_gap < 0.2,
            "dimension_nu_X within 20%": dim_X.relative_gap < 0.2,
            "dimension_ps within 25%": dim_ps.relative_gap < 0.25,
        }
        res = StageResult("boundary", data, checks)
        self.write_json("boundary.json", res)
        self.results["boundary"] = res
        return res

    def report(self) -> StageResult:
        stages = ("validate", "build", "green", "asymptotics", "boundary")
        parts, checks = {}, {}
        for name in stages:
            if name in self.results:
                res = self.results[name]
                data, chk = res.data, res.checks
            else:
                body = self.load("params.json" if name == "validate" else f"{name}.json")
                if body is None:
                    res = getattr(self, name)()
                    data, chk = res.data, res.checks
                else:
                    data, chk = body["data"], body["checks"]
            parts[name] = data
            checks.update({f"{name}: {k}": v for k, v in chk.items()})
        res = StageResult("report", {"stages": parts, "comparisons": comparisons(parts)}, checks)
        self.write_json("report.json", res)
        self.results["report"] = res
        return res


def comparisons(parts: dict) -> list:
    """Every estimate next to the value predicted by theory."""
    out = []
    g, a, b = parts.get("green"), parts.get("asymptotics"), parts.get("boundary")
    if g:
        out.append({"quantity": "spectral delta", "value": g["spectral"]["delta_hat"],
                    "target": "< 1"})
        for r in g["cusp_decay"]["rows"]:
            out.append({"quantity": f"G((e,{r['n']}),e) ratio", "value": r["ratio"],
                        "target": g["cusp_decay"]["target"]})
    if a:
        lX, lG, h = a["drift_X"]["value"], a["drift_G"]["value"], a["entropy"]["value"]
        D = a["critical_exponent"]["value"]
        out += [{"quantity": "entropy h vs Green drift l_G", "value": h, "target": lG},
                {"quantity": "h vs l D_Gamma", "value": h, "target": f"<= {lX * D}"}]
    if b:
        for k in ("shadow_nu", "shadow_ps", "dimension_nu_G", "dimension_nu_X", "dimension_ps"):
            r = b[k]
            out.append({"quantity": f"{k} slope", "value": r["slope"], "target": r["target"],
                        "cross_target": r["cross_target"], "epsilon": r["epsilon"]})
    return out
