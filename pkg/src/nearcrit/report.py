"""Matplotlib figures written next to the CSV/JSON output of a run."""

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _grouped(rows, key, value):
    out = defaultdict(list)
    for row in rows:
        if row.get(key) is None or row.get(value) is None:
            continue
        out[float(row[key])].append(float(row[value]))
    xs = sorted(out)
    return np.array(xs), np.array([np.mean(out[x]) for x in xs])


def _loglog(ax, x, y, label=None):
    keep = (x > 0) & (y > 0)
    ax.loglog(x[keep], y[keep], "o-", label=label)


def _arms(ax, rows):
    hits = defaultdict(lambda: [0, 0])
    for row in rows:
        h = hits[(float(row["r"]), float(row["R"]))]
        h[0] += int(row["hits"])
        h[1] += int(row["samples"])
    keys = sorted(hits)
    if len({k[0] for k in keys}) == 1:
        x = np.array([k[1] for k in keys])
        ax.set_xlabel("outer radius")
    else:
        x = np.array([k[1] / k[0] for k in keys])
        ax.set_xlabel("aspect ratio")
    y = np.array([hits[k][0] / max(hits[k][1], 1) for k in keys])
    _loglog(ax, x, y)
    ax.set_ylabel("arm event frequency")


def _census(ax, rows):
    for d in range(2, 7):
        x, y = _grouped(rows, "r", f"deg_ge_{d}")
        _loglog(ax, x, y, label=f"degree >= {d}")
    ax.set_xlabel("box scale r")
    ax.set_ylabel("mean box count")
    ax.legend(fontsize="small")


def _dimension(ax, rows):
    x, y = _grouped(rows, "r", "trunk_boxes")
    _loglog(ax, x, y)
    ax.set_xlabel("box scale r")
    ax.set_ylabel("trunk boxes")


def _compare(ax, rows):
    x, y = _grouped(rows, "epsilon", "mean_distance")
    ax.plot(x, y, "o-")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("cut-off epsilon")
    ax.set_ylabel("mean path distance")


def _cutoff(ax, rows):
    for col in ("important", "routers", "forest_edges"):
        x, y = _grouped(rows, "epsilon", col)
        _loglog(ax, x, y, label=col)
    ax.invert_xaxis()
    ax.set_xlabel("cut-off epsilon")
    ax.legend(fontsize="small")


def _histogram(ax, rows, column):
    vals = [float(r[column]) for r in rows if r.get(column) not in (None, "")]
    ax.hist(vals, bins=max(1, min(20, len(vals))))
    ax.set_xlabel(column)
    ax.set_ylabel("replicas")


_PLOTS = {"arms": _arms, "census": _census, "dimension": _dimension,
          "compare": _compare, "cutoff": _cutoff}
_HIST = {"mst": "label_max", "invade": "steps", "volume": "min_ratio",
         "calibrate": "r_eta", "cutoff-invade": "routers", "render": "edges"}


def write_figures(experiment, aggregate, rows, out):
    """Render ``<experiment>.png`` into ``out``; returns the path or None."""
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 4))
    try:
        if experiment in _PLOTS:
            _PLOTS[experiment](ax, rows)
        else:
            _histogram(ax, rows, _HIST.get(experiment, next(iter(rows[0]))))
        ax.set_title(experiment)
        fig.tight_layout()
        path = out / f"{experiment}.png"
        fig.savefig(path, dpi=100)
    finally:
        plt.close(fig)
    return path
