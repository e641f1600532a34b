"""Per-replica experiment bodies and their aggregation.

Every experiment is a function ``(params, geometry, seed) -> ReplicaResult``
with a fixed list of CSV columns, plus an aggregation function turning the
ordered replica results into the summary dictionary.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import stats
from .ensemble import (
    Calibration,
    Window,
    calibrate_r,
    config_at,
    lambda_to_p,
    sample_labels,
)
from .errors import ConfigurationError, FitError
from .forest import (
    BOUNDARY,
    FULL,
    LEXICOGRAPHIC,
    MAX_ONLY,
    StopRule,
    invade,
    mst_kruskal,
    tree_path,
)
from .pivnet import (
    BAND,
    BOUNDARY_BAND,
    SITE,
    build_network,
    cutoff_forest,
    cutoff_invasion,
    find_important,
    giant,
    switches,
)
from .rng import derive_seed
from .treespace import frechet, point_distance


@dataclass
class ReplicaResult:
    """Rows for ``results.csv`` and extra values used only by the aggregation."""

    rows: list
    extra: dict = field(default_factory=dict)
    tree: object = None


# ---------------------------------------------------------------- parameters


class Params:
    """Typed access to the flat key/value parameters of a run."""

    def __init__(self, raw):
        self.raw = dict(raw)
        self.used = set()

    def _get(self, key, default):
        self.used.add(key)
        if key in self.raw:
            return self.raw[key]
        if default is _REQUIRED:
            raise ConfigurationError(f"missing parameter {key!r}")
        return default

    def str(self, key, default=None):
        v = self._get(key, default)
        return None if v is None else str(v)

    def float(self, key, default=None):
        v = self._get(key, default)
        try:
            return None if v is None else float(v)
        except ValueError:
            raise ConfigurationError(f"{key} must be a number, got {v!r}") from None

    def int(self, key, default=None):
        v = self._get(key, default)
        try:
            return None if v is None else int(v)
        except ValueError:
            raise ConfigurationError(f"{key} must be an integer, got {v!r}") from None

    def bool(self, key, default=False):
        v = self._get(key, default)
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{key} must be a boolean, got {v!r}")

    def floats(self, key, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        if isinstance(v, (list, tuple)):
            return [float(x) for x in v]
        try:
            return [float(x) for x in str(v).replace(",", " ").split()]
        except ValueError:
            raise ConfigurationError(f"{key} must be a list of numbers, got {v!r}") from None

    def pairs(self, key, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        out = []
        for item in str(v).replace(",", " ").split():
            try:
                a, b = item.split(":")
                out.append((float(a), float(b)))
            except ValueError:
                raise ConfigurationError(f"{key} entries must look like r:R, got {item!r}") from None
        return out


_REQUIRED = object()


def _calibration(p, geometry, seed):
    mode = p.str("calibration", "theoretical")
    if mode == "theoretical":
        return Calibration.theoretical(geometry.eta)
    if mode == "measured":
        return calibrate_r(geometry, p.int("calibration_samples", 10000), derive_seed(seed, 1 << 32))
    raise ConfigurationError(f"calibration must be theoretical or measured, got {mode!r}")


def _window(p):
    lo = p.float("lambda_lo", -2.0)
    hi = p.float("lambda_hi", 2.0)
    try:
        return Window(lo, hi)
    except Exception as exc:
        raise ConfigurationError(str(exc)) from None


def _rule(p):
    rule = p.str("rule", LEXICOGRAPHIC)
    if rule not in (LEXICOGRAPHIC, MAX_ONLY):
        raise ConfigurationError(f"rule must be {LEXICOGRAPHIC} or {MAX_ONLY}")
    return rule


def _random_points(geometry, seed, count):
    rng = np.random.default_rng(seed)
    return rng.uniform(-geometry.m, geometry.m, size=(count, 2))


# ---------------------------------------------------------------- trees


def run_mst(p, g, seed):
    labels = sample_labels(g, seed)
    tree = mst_kruskal(g, labels, _rule(p))
    row = {"sites": g.site_count, "edges": tree.edge_count, "spanning": int(tree.spanning),
           "label_sum": float(np.sum(tree.values)), "label_max": float(np.max(tree.values))}
    return ReplicaResult([row], tree=tree)


def run_invade(p, g, seed):
    labels = sample_labels(g, seed)
    stop = p.str("stop", FULL)
    start = p.str("start", "center")
    start = g.nearest_site((0.0, 0.0)) if start == "center" else int(start)
    if stop == FULL:
        rule = StopRule.full()
    elif stop == BOUNDARY:
        rule = StopRule.boundary()
    elif stop == "target":
        rule = StopRule.at(p.int("target", _REQUIRED))
    else:
        raise ConfigurationError(f"unknown stop rule {stop!r}")
    threshold = p.float("tail_threshold", 0.52)
    tree, trace = invade(g, labels, start, rule, _rule(p))
    trace = np.asarray(trace)
    half = trace[trace.shape[0] // 2:]
    tail = float(np.mean(half > threshold)) if half.size else 0.0
    row = {"start": start, "steps": int(trace.shape[0]), "last_label": float(trace[-1]) if trace.size else 0.0,
           "max_label": float(trace.max()) if trace.size else 0.0, "tail_fraction": tail}
    return ReplicaResult([row], tree=tree)


def run_render(p, g, seed):
    result = run_mst(p, g, seed)
    result.rows[0] = {"sites": g.site_count, "edges": result.tree.edge_count}
    return result


# ---------------------------------------------------------------- cut-off trees


def cutoff_pipeline(geometry, labels, cal, window, epsilon, s):
    """Important sites at ``lambda``, switches, network, forest and giant tree."""
    config = config_at(labels, lambda_to_p(window.lambda_lo, cal))
    important = find_important(geometry, config, epsilon)
    events = switches(labels, important, window, cal)
    network = build_network(geometry, config, important, labels)
    forest = cutoff_forest(network, events, window.lambda_lo)
    tree = giant(forest, s)
    return important, events, forest, tree


def run_cutoff(p, g, seed):
    labels = sample_labels(g, seed)
    cal = _calibration(p, g, seed)
    window = _window(p)
    s = p.float("s", 0.25)
    rows = []
    last = None
    for eps in p.floats("epsilon", [0.1]):
        important, events, forest, tree = cutoff_pipeline(g, labels, cal, window, eps, s)
        rows.append({"epsilon": eps, "important": len(important),
                     "open_pivotals": sum(1 for x in important if x.open),
                     "events": len(events), "routers": forest.router_count,
                     "forest_edges": int(forest.edges.shape[0]),
                     "components": int(forest.components().max() + 1) if forest.router_count else 0,
                     "giant_routers": int(tree.routers.shape[0]), "degenerate": int(tree.degenerate)})
        last = tree
    return ReplicaResult(rows, tree=last)


def run_cutoff_invade(p, g, seed):
    labels = sample_labels(g, seed)
    cal = _calibration(p, g, seed)
    window = _window(p)
    s = p.float("s", 0.25)
    target = p.str("target_kind", BOUNDARY_BAND)
    if target not in (BOUNDARY_BAND, SITE, BAND):
        raise ConfigurationError(f"unknown target kind {target!r}")
    origin = (p.float("origin_x", 0.0), p.float("origin_y", 0.0))
    point = None
    if target != BOUNDARY_BAND:
        point = (p.float("target_x", _REQUIRED), p.float("target_y", _REQUIRED))
    rows = []
    last = None
    for eps in p.floats("epsilon", [0.1]):
        _, _, forest, tree = cutoff_pipeline(g, labels, cal, window, eps, s)
        if tree.degenerate:
            inv = tree
        else:
            inv = cutoff_invasion(forest, origin, target, s, point)
        trace = inv.trace or {}
        rows.append({"epsilon": eps, "degenerate": int(inv.degenerate),
                     "routers": int(inv.routers.shape[0]), "edges": int(inv.edges.shape[0]),
                     "batch_stop": trace.get("batch_stop", 0), "edge_stop": trace.get("edge_stop", 0)})
        last = inv
    return ReplicaResult(rows, tree=last)


def _path_distance(mst, tree, x, y):
    g = mst.geometry
    a, b = g.nearest_site(x), g.nearest_site(y)
    path = tree_path(mst, a, b)
    if tree.degenerate:
        pts = path.points
        return max(point_distance(q, tree.point, path.metric, path.period) for q in pts)
    net = tree.forest.network
    pos = net.router_positions[tree.routers]
    ra = int(tree.routers[int(np.argmin(g.distance(pos, np.asarray(x))))])
    rb = int(tree.routers[int(np.argmin(g.distance(pos, np.asarray(y))))])
    return frechet(path, tree.path(ra, rb))


def _mst_switch_sites(mst, tree, ra, rb, event_sites):
    net = tree.forest.network
    from .forest import tree_sites_path

    walk = tree_sites_path(mst, int(net.routers[ra]), int(net.routers[rb]))
    return {s for s in walk if s in event_sites}


def run_compare(p, g, seed):
    labels = sample_labels(g, seed)
    cal = _calibration(p, g, seed)
    window = _window(p)
    s = p.float("s", 0.25)
    npairs = p.int("pairs", 20)
    mst = mst_kruskal(g, labels)
    pts = _random_points(g, derive_seed(seed, 7), 2 * npairs)
    rng = np.random.default_rng(derive_seed(seed, 11))
    rows = []
    for eps in p.floats("epsilon", [0.2, 0.1, 0.05]):
        _, events, forest, tree = cutoff_pipeline(g, labels, cal, window, eps, s)
        dist = [_path_distance(mst, tree, pts[2 * k], pts[2 * k + 1]) for k in range(npairs)]
        agree = total = 0
        if not tree.degenerate and tree.routers.shape[0] > 1:
            event_sites = {e.site for e in events}
            for _ in range(npairs):
                ra, rb = (int(v) for v in rng.choice(tree.routers, 2, replace=False))
                cut = tree.switch_sites(ra, rb)
                ref = _mst_switch_sites(mst, tree, ra, rb, event_sites)
                total += 1
                agree += int(cut == ref)
        rows.append({"epsilon": eps, "degenerate": int(tree.degenerate),
                     "mean_distance": float(np.mean(dist)), "max_distance": float(np.max(dist)),
                     "switch_pairs": total, "switch_agree": agree})
    return ReplicaResult(rows)


# ---------------------------------------------------------------- statistics


def _arm_spec(p, g, samples_key="samples"):
    palette = tuple(p.str("palette", "O").upper())
    radii = p.pairs("radii", None)
    if radii is None:
        eta = g.eta
        inner = p.float("inner", 0.0)
        outer = p.floats("outer", [4 * eta * 2 ** k for k in range(5)])
        radii = [(inner, R) for R in outer]
    return stats.ArmSpec(palette, tuple(radii), (p.float("lambda_lo", 0.0), p.float("lambda_hi", 0.0)),
                         p.int(samples_key, 1000), p.bool("monochromatic", False))


def run_arms(p, g, seed):
    spec = _arm_spec(p, g)
    cal = _calibration(p, g, seed)
    if p.bool("stability", False):
        rows = []
        for s in stats.stability_ratio(spec, g, cal, seed):
            rows.append({"r": s.r, "R": s.R, "samples": s.samples, "hits": s.critical,
                         "near_hits": s.near, "both_hits": s.both})
        return ReplicaResult(rows)
    est = stats.arm_probability(spec, g, cal, seed)
    rows = [{"r": r, "R": R, "samples": est.samples, "hits": h, "near_hits": "", "both_hits": ""}
            for (r, R), h in zip(est.radii, est.hits)]
    return ReplicaResult(rows)


def run_calibrate(p, g, seed):
    cal = calibrate_r(g, p.int("samples", 10000), seed)
    return ReplicaResult([{"samples": cal.samples, "hits": cal.hits, "alpha4": cal.alpha4,
                           "r_eta": cal.r_eta, "ci_lo": cal.interval[0], "ci_hi": cal.interval[1]}])


def run_census(p, g, seed):
    labels = sample_labels(g, seed)
    tree = mst_kruskal(g, labels)
    rho = p.float("rho", 0.25)
    shift = p.float("shift", 0.0)
    rows = []
    for r in p.floats("r", [rho / 4, rho / 8, rho / 16]):
        c = stats.degree_census(tree, r, rho, shift)
        row = {"r": r, "boxes": c.box_count}
        row.update({f"deg_ge_{d}": n for d, n in c.counts.items()})
        row.update({"pinching": c.pinching_count, "figure_six": c.figure_six_count})
        rows.append(row)
    return ReplicaResult(rows, tree=tree)


def run_dimension(p, g, seed):
    labels = sample_labels(g, seed)
    tree = mst_kruskal(g, labels)
    rho = p.float("rho", 0.25)
    shift = p.float("shift", 0.0)
    scales = p.floats("r", [rho / 2 ** k for k in range(2, 7)])
    curve = stats.trunk_curve(tree, rho, scales, shift)
    rows = [{"r": r, "trunk_boxes": n} for r, n in zip(curve.scales, curve.counts)]
    return ReplicaResult(rows, tree=tree)


def run_volume(p, g, seed):
    labels = sample_labels(g, seed)
    config = config_at(labels, p.float("p", 0.5))
    r = p.float("r_volume", None)
    report = stats.cluster_volume_law(config, p.float("rho", 0.25), p.float("zeta", 0.1), r)
    return ReplicaResult([{"clusters": int(report.ratios.size), "passed": report.passed,
                           "min_ratio": report.min_ratio}])


# ---------------------------------------------------------------- aggregation


def _mean(values):
    values = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(values)) if values else None


def _by(rows, key):
    out = {}
    for row in rows:
        out.setdefault(row[key], []).append(row)
    return out


def summarize_mst(results, p, g):
    rows = [r for res in results for r in res.rows]
    return {"mean_edges": _mean([r["edges"] for r in rows]),
            "all_spanning": all(r["spanning"] for r in rows)}


def summarize_invade(results, p, g):
    rows = [r for res in results for r in res.rows]
    return {"mean_steps": _mean([r["steps"] for r in rows]),
            "mean_tail_fraction": _mean([r["tail_fraction"] for r in rows])}


def summarize_render(results, p, g):
    return {"edges": [r["edges"] for res in results for r in res.rows]}


def summarize_cutoff(results, p, g):
    out = {}
    for eps, rows in _by([r for res in results for r in res.rows], "epsilon").items():
        out[repr(eps)] = {k: _mean([r[k] for r in rows])
                          for k in ("important", "events", "routers", "forest_edges",
                                    "giant_routers", "degenerate")}
    return {"per_epsilon": out}


def summarize_cutoff_invade(results, p, g):
    out = {}
    for eps, rows in _by([r for res in results for r in res.rows], "epsilon").items():
        out[repr(eps)] = {k: _mean([r[k] for r in rows])
                          for k in ("degenerate", "routers", "batch_stop", "edge_stop")}
    return {"per_epsilon": out}


def summarize_compare(results, p, g):
    groups = _by([r for res in results for r in res.rows], "epsilon")
    eps = sorted(groups, reverse=True)
    per = {}
    for e in eps:
        rows = groups[e]
        pairs = sum(r["switch_pairs"] for r in rows)
        agree = sum(r["switch_agree"] for r in rows)
        per[repr(e)] = {"mean_distance": _mean([r["mean_distance"] for r in rows]),
                        "degenerate_fraction": _mean([r["degenerate"] for r in rows]),
                        "switch_pairs": pairs,
                        "switch_agreement": agree / pairs if pairs else None}
    means = [per[repr(e)]["mean_distance"] for e in eps]
    trend = all(b <= a for a, b in zip(means, means[1:]))
    pairs = sum(v["switch_pairs"] for v in per.values())
    agree = sum(r["switch_agree"] for res in results for r in res.rows)
    return {"per_epsilon": per, "non_increasing": trend,
            "switch_pairs": pairs, "switch_agreement": agree / pairs if pairs else None}


def summarize_arms(results, p, g):
    groups = {}
    for res in results:
        for r in res.rows:
            acc = groups.setdefault((r["r"], r["R"]), [0, 0, 0, 0])
            acc[0] += r["samples"]
            acc[1] += r["hits"]
            if r["near_hits"] != "":
                acc[2] += r["near_hits"]
                acc[3] += r["both_hits"]
    radii = sorted(groups)
    stability = bool(results) and bool(results[0].rows) and results[0].rows[0]["near_hits"] != ""
    pooled = []
    for key in radii:
        n, h, nh, bh = groups[key]
        entry = {"r": key[0], "R": key[1], "samples": n, "hits": h, "frequency": h / n}
        if stability:
            entry.update({"near_hits": nh, "ratio": nh / h if h else None, "unbounded": h == 0})
        pooled.append(entry)
    out = {"radii": pooled}
    if stability:
        ratios = [e["ratio"] for e in pooled if e["ratio"] is not None]
        out["spread"] = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else None
    else:
        est = stats.ArmEstimate(tuple(radii), tuple(groups[k][1] for k in radii), groups[radii[0]][0])
        try:
            slope, err = stats.fit_exponent(est, g.eta)
            out.update({"exponent": slope, "exponent_stderr": err})
        except FitError as exc:
            out.update({"exponent": None, "fit_error": str(exc)})
    return out


def summarize_calibrate(results, p, g):
    hits = sum(r["hits"] for res in results for r in res.rows)
    n = sum(r["samples"] for res in results for r in res.rows)
    r_eta = [r["r_eta"] for res in results for r in res.rows]
    return {"pooled_alpha4": hits / n if n else None, "mean_r_eta": _mean(r_eta)}


def summarize_census(results, p, g):
    groups = _by([r for res in results for r in res.rows], "r")
    scales = sorted(groups, reverse=True)
    per = {}
    for r in scales:
        rows = groups[r]
        per[repr(r)] = {"mean_pinching": _mean([x["pinching"] for x in rows]),
                        "mean_figure_six": _mean([x["figure_six"] for x in rows]),
                        "zero_deg5_fraction": _mean([float(x["deg_ge_5"] == 0) for x in rows]),
                        "mean_deg_ge_4": _mean([x["deg_ge_4"] for x in rows])}
    pin = [per[repr(r)]["mean_pinching"] for r in scales]
    return {"per_r": per, "pinching_non_increasing": all(b <= a for a, b in zip(pin, pin[1:]))}


def summarize_dimension(results, p, g):
    groups = _by([r for res in results for r in res.rows], "r")
    scales = sorted(groups)
    counts = [float(np.mean([x["trunk_boxes"] for x in groups[r]])) for r in scales]
    curve = stats.BoxCountCurve(p.float("rho", 0.25), tuple(scales), tuple(counts))
    out = {"scales": scales, "mean_counts": counts}
    try:
        slope, err = stats.minkowski_fit(curve)
        out.update({"slope": slope, "stderr": err})
    except FitError as exc:
        out.update({"slope": None, "fit_error": str(exc)})
    slopes = []
    for res in results:
        try:
            c = stats.BoxCountCurve(curve.rho, tuple(r["r"] for r in res.rows),
                                    tuple(r["trunk_boxes"] for r in res.rows))
            slopes.append(stats.minkowski_fit(c)[0])
        except FitError:
            pass
    out["replica_slopes"] = slopes
    return out


def summarize_volume(results, p, g):
    rows = [r for res in results for r in res.rows]
    clusters = sum(r["clusters"] for r in rows)
    passed = sum(r["passed"] for r in rows)
    return {"clusters": clusters, "passed": passed,
            "pass_fraction": passed / clusters if clusters else None,
            "min_ratio": min((r["min_ratio"] for r in rows if r["clusters"]), default=None)}


EXPERIMENTS = {
    "mst": (run_mst, summarize_mst,
            ["sites", "edges", "spanning", "label_sum", "label_max"]),
    "invade": (run_invade, summarize_invade,
               ["start", "steps", "last_label", "max_label", "tail_fraction"]),
    "cutoff": (run_cutoff, summarize_cutoff,
               ["epsilon", "important", "open_pivotals", "events", "routers", "forest_edges",
                "components", "giant_routers", "degenerate"]),
    "cutoff-invade": (run_cutoff_invade, summarize_cutoff_invade,
                      ["epsilon", "degenerate", "routers", "edges", "batch_stop", "edge_stop"]),
    "compare": (run_compare, summarize_compare,
                ["epsilon", "degenerate", "mean_distance", "max_distance", "switch_pairs",
                 "switch_agree"]),
    "arms": (run_arms, summarize_arms,
             ["r", "R", "samples", "hits", "near_hits", "both_hits"]),
    "census": (run_census, summarize_census,
               ["r", "boxes", "deg_ge_2", "deg_ge_3", "deg_ge_4", "deg_ge_5", "deg_ge_6",
                "pinching", "figure_six"]),
    "dimension": (run_dimension, summarize_dimension, ["r", "trunk_boxes"]),
    "volume": (run_volume, summarize_volume, ["clusters", "passed", "min_ratio"]),
    "calibrate": (run_calibrate, summarize_calibrate,
                  ["samples", "hits", "alpha4", "r_eta", "ci_lo", "ci_hi"]),
    "render": (run_render, summarize_render, ["sites", "edges"]),
}
