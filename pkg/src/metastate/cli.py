"""metastate analyze|predict|simulate|report --config <path> [--out <dir>] [-v]

Everything that affects numbers lives in the JSON config; flags only pick the
command, the config, the output directory and verbosity.  Exit codes: 0 ok,
1 validation or model error, 2 completed with genericity warnings (or
aborted on a depth tie).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io as mio
from .errors import GenericityError, GenericityWarning, MetastateError, MissingArtifacts
from .heights import HeightIndex
from .landscape import default_r0, graph_of, load_landscape, max_r0, nu_weight, ek_weight
from .tree import build_tree, state_label, validate_simple_bound
from .tvmix import default_grid, f_curve, predict_diffusion

log = logging.getLogger("metastate")

TREE_FILE = "tree.json"
PREDICT_FILE = "prediction.json"
SIM_FILE = "simulation.json"


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------
class RunConfig:
    def __init__(self, path: str | Path, out: str | Path | None = None):
        self.path = Path(path)
        if not self.path.exists():
            raise MetastateError(f"config file {self.path} does not exist")
        try:
            self.doc = json.loads(self.path.read_text())
        except json.JSONDecodeError as exc:
            raise MetastateError(f"config {self.path} is not valid JSON: {exc}") from None
        base = self.path.parent
        if "landscape" not in self.doc:
            raise MetastateError("config needs a 'landscape' entry")
        self.landscape_path = (base / self.doc["landscape"]).resolve()
        if not self.landscape_path.exists():
            raise MetastateError(f"landscape file {self.landscape_path} does not exist")
        if out is None:
            out = base / self.doc.get("out", "out")
        self.out = Path(out)
        self.predict = self.doc.get("predict", {})
        self.simulate = self.doc.get("simulate", {})
        for d in self.predict.get("deltas", []):
            if not 0 < d < 1:
                raise MetastateError(f"delta {d} must lie in (0, 1)")
        for e in self.predict.get("epsilons", []):
            if not e > 0:
                raise MetastateError(f"epsilon {e} must be positive")

    def landscape(self):
        return load_landscape(self.landscape_path)

    def echo(self) -> dict:
        d = dict(self.doc)
        d["landscape"] = self.landscape_path.name
        d.pop("out", None)
        return d


def _setup(cfg: RunConfig):
    spec = cfg.landscape()
    graph = graph_of(spec)
    tree = build_tree(graph, HeightIndex(graph))
    cfg.out.mkdir(parents=True, exist_ok=True)
    return spec, graph, tree


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_analyze(cfg: RunConfig) -> dict:
    spec, graph, tree = _setup(cfg)
    report = {
        "landscape": {"name": spec.name, "kind": spec.kind, **graph.to_dict()},
        "weights": {
            "nu": {m.id: nu_weight(m) for m in graph.minima},
            "omega": {s.id: ek_weight(s) for s in graph.saddles},
        },
        "tree": tree.to_dict(),
        "simple_bound": {str(L.index): validate_simple_bound(L, tree.index) for L in tree.layers},
        "valley_radius": {"max": max_r0(tree.depths), "default": default_r0(tree.depths)},
    }
    mio.write_json(cfg.out / TREE_FILE, report)
    print(f"landscape {spec.name or cfg.landscape_path.stem}: {len(graph.minima)} minima, "
          f"{len(graph.saddles)} saddles")
    print(f"time scales q = {tree.q}, depths = {[round(d, 12) for d in tree.depths]}")
    for L in tree.layers:
        cls = " | ".join("{" + ", ".join(state_label(M) for M in c) + "}" for c in L.classes)
        tr = ", ".join(state_label(M) for M in L.transient) or "-"
        print(f"  layer {L.index}: d = {L.depth:.12g}; classes {cls}; transient {tr}")
    print(f"global minima: {state_label(tree.m_star)}")
    return report


def _curve_grid(cfg: RunConfig, tree) -> np.ndarray:
    grid = cfg.predict.get("grid")
    if grid:
        return np.asarray(grid, dtype=float)
    return default_grid(tree, int(cfg.predict.get("perDecade", 60)))


def cmd_predict(cfg: RunConfig) -> dict:
    spec, graph, tree = _setup(cfg)
    deltas = cfg.predict.get("deltas", [0.5, 0.25, 0.1, 0.01])
    eps = cfg.predict.get("epsilons", [0.2, 0.1, 0.05])
    prof = predict_diffusion(tree, deltas, eps)
    grid = _curve_grid(cfg, tree)
    curve_rows, limits = [], []
    for p in range(1, tree.q + 1):
        for m in graph.minimum_ids():
            c = f_curve(tree, m, p, grid)
            curve_rows += c.rows()
            limits.append({"layer": p, "start": m, "t0": c.limit_zero, "tinf": c.limit_infinity})
    mio.write_csv(cfg.out / "curves.csv", ["layer", "start_min", "t", "f_value"], curve_rows)
    mio.write_csv(cfg.out / "plateaus.csv", ["layer", "start_min", "plateau"], prof.plateaus)
    mio.write_csv(cfg.out / "mixing.csv", ["delta", "T_mix_chain", "epsilon", "theta_q", "T_mix_predicted"],
                  prof.mixing_rows())
    doc = {
        "depths": list(prof.depths),
        "chain_mixing": [{"delta": d, "T_mix_chain": prof.chain_mixing[d]} for d in prof.deltas],
        "scales": [{"epsilon": e, "theta": prof.scales[e], "separated": prof.separated[e]}
                   for e in prof.epsilons],
        "predicted": [{"epsilon": e, "delta": d, "T_mix": prof.predicted[(e, d)]}
                      for e in prof.epsilons for d in prof.deltas],
        "eyring_kramers": [{"epsilon": e, "expected_time": t} for e, t in prof.eyring_kramers.items()],
        "curve_limits": limits,
        "notes": [f"epsilon = {e}: scales 1/eps < theta_1 < ... are not separated; "
                  "plateau values are outside their regime" for e in prof.epsilons if not prof.separated[e]],
    }
    mio.write_json(cfg.out / PREDICT_FILE, doc)
    for d in prof.deltas:
        print(f"delta = {d}: T_mix(chain) = {prof.chain_mixing[d]:.10g}")
    for e in prof.epsilons:
        flag = "" if prof.separated[e] else "  (scales not separated)"
        print(f"eps = {e}: theta_q = {prof.scales[e][-1]:.6g}{flag}")
    return doc


def _resolve_time(item, tree, eps: float) -> tuple[float, str, dict]:
    from .tvmix import chain_mixing_time

    if isinstance(item, (int, float)):
        return float(item), "time", {}
    if "plateau" in item:
        p = int(item["plateau"])
        th = [1.0 / eps] + [math.exp(d / eps) for d in tree.depths]
        return math.sqrt(th[p - 1] * th[p]), "plateau", {"layer": p}
    if "mix" in item:
        d = float(item["mix"])
        factor = float(item.get("factor", 10.0))
        t = factor * math.exp(tree.depths[-1] / eps) * chain_mixing_time(tree, d)
        return t, "mixed", {"threshold": float(item.get("threshold", 0.1))}
    raise MetastateError(f"cannot interpret sample time {item!r}")


def _sim_config(block: dict, starts, sample_times=(), H=None):
    from .mcsim import SimConfig

    try:
        return SimConfig(
            epsilon=float(block["epsilon"]), dt=float(block["dt"]), horizon=float(block["horizon"]),
            n_traj=int(block["nTraj"]), seed=int(block["seed"]), start_points=tuple(starts),
            valley_radius=block.get("valleyRadius"), level_H=H, sample_times=tuple(sample_times))
    except KeyError as exc:
        raise MetastateError(f"simulate block is missing {exc.args[0]!r}") from None


def cmd_simulate(cfg: RunConfig) -> dict:
    from . import mcsim
    from .tvmix import plateau as chain_plateau

    spec, graph, tree = _setup(cfg)
    if not spec.analytic:
        raise MetastateError("simulate needs an analytic landscape")
    block = cfg.simulate
    if not block:
        raise MetastateError("config has no 'simulate' block")
    eps = float(block["epsilon"])
    rows, files = [], {}
    for k, ex in enumerate(block.get("experiments", [])):
        kind = ex.get("kind")
        tag = f"{k}:{kind}"
        if kind == "hitting":
            cfg_h = _sim_config(block, [graph.point(ex["start"]).position])
            st = mcsim.hitting_times(spec, cfg_h, ex["start"], ex["target"], ex.get("radius"))
            tol = float(ex.get("tolerance", 0.2))
            half = 1.959963984540054 * st.se
            rows.append((tag, "mean_tau", "", st.prediction, st.mean, st.mean - half, st.mean + half, tol,
                         abs(st.ratio - 1) <= tol))
            ks_max = float(ex.get("ksMax", 0.05))
            rows.append((tag, "ks_exponential", "", 0.0, st.ks, "", "", ks_max, st.ks < ks_max))
            name = f"hitting_{k}.csv"
            files[name] = mio.write_csv(cfg.out / name, ["traj_id", "tau_hit"],
                                        list(enumerate(st.times.tolist())))
        elif kind == "coarse-tv":
            start = ex["start"]
            p = int(ex.get("layer", 1))
            resolved = [_resolve_time(t, tree, eps) for t in ex.get("times", [])]
            times = [0.0] + [t for t, _, _ in resolved]
            horizon = max(times)
            b = dict(block, horizon=horizon)
            cfg_s = _sim_config(b, [graph.point(start).position], sample_times=sorted(set(times)))
            ens = mcsim.simulate(spec, cfg_s, graph=graph, tree=tree)
            partition = [frozenset([m.id]) for m in graph.minima]
            ref = mcsim.reference_law(spec, ens.valleys, partition, eps)
            for t, what, extra in resolved:
                tv = mcsim.empirical_coarse_tv(ens, t, partition, ref)
                if what == "plateau":
                    _, pred = mcsim.plateau_reference(spec, tree, ens.valleys, partition, eps, start,
                                                      extra["layer"])
                    tol = max(0.05, 3 * tv.se)
                    rows.append((tag, f"plateau_{extra['layer']}", t, pred, tv.value, tv.lo, tv.hi, tol,
                                 abs(tv.value - pred) <= tol))
                    rows.append((tag, f"plateau_{extra['layer']}_limit", t,
                                 chain_plateau(tree, start, extra["layer"]), "", "", "", "", ""))
                elif what == "mixed":
                    thr = extra["threshold"]
                    rows.append((tag, "tv_after_mixing", t, 0.0, tv.value, tv.lo, tv.hi, thr, tv.value < thr))
                if spec.dim == 1:
                    pc = mcsim.chain_coarse_prediction(spec, tree, ens.valleys, partition, eps, start, t, p)
                    pred = 0.5 * float(np.abs(pc.aligned(ref.states) - ref.weights).sum())
                    # diagnostic only: meaningful inside the plateau window
                    rows.append((tag, f"chain_layer_{p}", t, pred, tv.value, tv.lo, tv.hi, "", ""))
            name = f"occupation_{k}.csv"
            cell_of = list(ens.owners)
            occ = [(i, float(t), cell_of[c] if c >= 0 else mcsim.TRANSIT)
                   for i in range(ens.n_traj) for t, c in zip(ens.times, ens.labels[i])]
            files[name] = mio.write_csv(cfg.out / name, ["traj_id", "t", "cell"], occ)
        elif kind == "mixing":
            delta = float(ex["delta"])
            H = ex.get("H")
            if "times" in ex:
                times = [float(t) for t in ex["times"]]
            else:
                n = int(ex.get("nTimes", 60))
                times = np.linspace(0, float(block["horizon"]), n + 1)[1:].tolist()
            starts = mcsim.level_set_starts(spec, H) if H is not None else [m.position for m in graph.minima]
            cfg_m = _sim_config(block, starts, sample_times=times, H=H)
            est = mcsim.empirical_mixing_time(spec, cfg_m, tree, delta, H=H, starts=starts)
            band = ex.get("band", [0.7, 1.4])
            rows.append((tag, "T_mix", "", est.predicted, est.time, est.lo, est.hi, f"{band[0]}..{band[1]}",
                         band[0] <= est.ratio <= band[1]))
            name = f"mixing_{k}.csv"
            files[name] = mio.write_csv(cfg.out / name, ["t", "worst_coarse_tv"],
                                        list(zip(est.times.tolist(), est.worst_tv.tolist())))
        else:
            raise MetastateError(f"unknown experiment kind {kind!r}")
    header = ["experiment", "quantity", "t", "predicted", "empirical", "ci_lo", "ci_hi", "tolerance", "pass"]
    files["comparison.csv"] = mio.write_csv(cfg.out / "comparison.csv", header, rows)
    man = mio.manifest(cfg.echo(), files)
    mio.write_json(cfg.out / SIM_FILE, man)
    for r in rows:
        if r[-1] == "":
            continue
        status = "PASS" if r[-1] else "FAIL"
        print(f"{status}  {r[0]} {r[1]}: predicted {mio.fmt_float(r[3])[:10]} empirical {mio.fmt_float(r[4])[:10]}")
    return man


def cmd_report(cfg: RunConfig) -> dict:
    out = cfg.out
    need = [out / TREE_FILE, out / PREDICT_FILE]
    missing = [p.name for p in need if not p.exists()]
    if missing:
        raise MissingArtifacts(f"{out} lacks {', '.join(missing)}; run analyze and predict first")
    tree = json.loads((out / TREE_FILE).read_text())
    pred = json.loads((out / PREDICT_FILE).read_text())
    doc = {"analysis": tree, "prediction": pred}
    lines = [f"landscape: {tree['landscape']['name']} ({tree['landscape']['kind']})",
             f"time scales: q = {tree['tree']['q']}, depths = {tree['tree']['depths']}",
             f"global minima: {tree['tree']['m_star']}"]
    table = [("q", tree["tree"]["q"])]
    for row in pred["chain_mixing"]:
        lines.append(f"T_mix(delta={row['delta']}) of the top chain: {row['T_mix_chain']:.10g}")
        table.append((f"T_mix_chain[delta={row['delta']}]", float(row["T_mix_chain"])))
    for row in pred["eyring_kramers"]:
        lines.append(f"Eyring-Kramers expected transition time at eps={row['epsilon']}: {row['expected_time']:.10g}")
        table.append((f"EK_time[eps={row['epsilon']}]", float(row["expected_time"])))
    if (out / SIM_FILE).exists():
        doc["simulation"] = json.loads((out / SIM_FILE).read_text())
        import csv

        with open(out / "comparison.csv", newline="") as fh:
            comp = list(csv.DictReader(fh))
        doc["comparison"] = comp
        for r in comp:
            if r["pass"] == "":
                continue
            try:
                ratio = float(r["empirical"]) / float(r["predicted"])
            except (ValueError, ZeroDivisionError):
                ratio = math.nan
            lines.append(f"{r['experiment']} {r['quantity']}: predicted {r['predicted']}, empirical "
                         f"{r['empirical']}, ratio {ratio:.6g}, {'pass' if r['pass'] == 'True' else 'FAIL'}")
            table.append((f"{r['experiment']}|{r['quantity']}|ratio", ratio))
    for note in pred.get("notes", []):
        lines.append("note: " + note)
    mio.write_json(out / "report.json", doc)
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    mio.write_csv(out / "report_table.csv", ["quantity", "value"], table)
    print("\n".join(lines))
    return doc


COMMANDS = {"analyze": cmd_analyze, "predict": cmd_predict, "simulate": cmd_simulate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="metastate", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GenericityWarning)
        try:
            cfg = RunConfig(args.config, args.out)
            COMMANDS[args.command](cfg)
        except GenericityError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        except (MetastateError, ValueError) as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
    generic = [w for w in caught if issubclass(w.category, GenericityWarning)]
    for w in caught:
        print(f"warning: {w.category.__name__}: {w.message}", file=sys.stderr)
    return 2 if generic else 0


if __name__ == "__main__":
    sys.exit(main())
