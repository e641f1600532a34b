"""Command-line experiment runner, label snapshots and tree rendering.

Usage::

    nearcrit <experiment> --config FILE [--seed S] [--replicas K] [--out DIR]

The config file is flat ``key = value`` text (``#`` starts a comment).
Lattice keys: ``kind`` (triangular-site | square-bond), ``n`` (sites per unit
length), ``m`` (half-side), ``domain`` (torus | box); run keys: ``seed``,
``replicas``; everything else is an experiment parameter (see README).
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
import json
import os
from pathlib import Path
import struct
import sys
import traceback
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .ensemble import LabelField
from .errors import ConfigurationError, FormatError, IntegrityError, NearcritError, UsageError
from .experiments import EXPERIMENTS, Params
from .geometry import BOX, SQUARE, TORUS, TRIANGULAR, LatticeSpec, build_geometry
from .rng import derive_seed

SUMMARY_SCHEMA = 1
LATTICE_KEYS = ("kind", "n", "m", "domain")
RUN_KEYS = ("seed", "replicas", "svg")


# ---------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    """Everything that determines the artifacts of a run."""

    experiment: str
    lattice: LatticeSpec
    seed: int = 0
    replicas: int = 1
    params: dict = field(default_factory=dict)
    out: Path = Path("out")
    svg: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; "
                                     f"choose from {', '.join(sorted(EXPERIMENTS))}")
        if self.replicas < 1:
            raise ConfigurationError("replicas must be at least 1")

    def as_dict(self):
        return {"experiment": self.experiment, "kind": self.lattice.kind, "n": self.lattice.n,
                "m": self.lattice.m, "domain": self.lattice.domain, "seed": self.seed,
                "replicas": self.replicas, "svg": self.svg, "params": dict(sorted(self.params.items()))}


def parse_config_text(text):
    """Flat ``key = value`` pairs; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def make_config(experiment, raw, seed=None, replicas=None, out="out"):
    """Build a RunConfig from parsed key/value pairs and command-line overrides."""
    raw = dict(raw)
    try:
        spec = LatticeSpec(raw.pop("kind", TRIANGULAR), int(raw.pop("n", 64)),
                           float(raw.pop("m", 1.0)), raw.pop("domain", TORUS))
        cfg_seed = int(raw.pop("seed", 0))
        cfg_rep = int(raw.pop("replicas", 1))
        svg = raw.pop("svg", "false").strip().lower() in ("1", "true", "yes", "on")
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    except NearcritError as exc:
        raise ConfigurationError(str(exc)) from None
    return RunConfig(experiment, spec, cfg_seed if seed is None else int(seed),
                     cfg_rep if replicas is None else int(replicas), raw, Path(out), svg)


# ---------------------------------------------------------------- snapshots

MAGIC = b"NCPT"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sI16sId8sQQ")
_KINDS = {TRIANGULAR: b"triangular-site", SQUARE: b"square-bond"}
_DOMAINS = {TORUS: b"torus", BOX: b"box"}


def save_snapshot(labels, path):
    """Write a label field: fixed header, then little-endian float64 labels."""
    spec = labels.geometry.spec
    header = _HEADER.pack(MAGIC, SNAPSHOT_VERSION, _KINDS[spec.kind], int(spec.n),
                          float(spec.m), _DOMAINS[spec.domain], int(labels.seed) & (2**64 - 1),
                          int(labels.values.shape[0]))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(labels.values, dtype="<f8").tobytes())


def load_snapshot(path):
    """Read a snapshot written by :func:`save_snapshot`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        if data[:4] != MAGIC[:len(data[:4])]:
            raise FormatError("not a snapshot file")
        raise IntegrityError("snapshot header is truncated")
    magic, version, kind, n, m, domain, seed, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad snapshot magic")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"unsupported snapshot version {version}")
    kinds = {v: k for k, v in _KINDS.items()}
    domains = {v: k for k, v in _DOMAINS.items()}
    kind, domain = kind.rstrip(b"\0"), domain.rstrip(b"\0")
    if kind not in kinds or domain not in domains:
        raise FormatError("unknown lattice kind or domain in snapshot header")
    try:
        spec = LatticeSpec(kinds[kind], n, m, domains[domain])
    except NearcritError as exc:
        raise FormatError(f"invalid lattice in snapshot header: {exc}") from None
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise IntegrityError(f"expected {8 * count} label bytes, found {len(body)}")
    g = build_geometry(spec)
    if count != g.carrier_count:
        raise IntegrityError("label count does not match the lattice")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    values.setflags(write=False)
    return LabelField(g, values, int(seed))


# ---------------------------------------------------------------- rendering


def _draw_map(g):
    # linear map from grid steps to the drawing plane
    if g.spec.kind == TRIANGULAR:
        return np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]]) * g.eta
    return np.eye(2) * g.eta


def _site_xy(g, sites):
    i, j = g.coords(np.asarray(sites))
    return (_draw_map(g) @ np.stack([i, j]).astype(float)).T


def _step_xy(g, a, b):
    ia, ja = g.coords(a)
    ib, jb = g.coords(b)
    d = np.stack([ib - ia, jb - ja]).astype(float)
    if g.spec.torus:
        L = g.side
        d = (d + L // 2) % L - L // 2
    return (_draw_map(g) @ d).T


def render_tree(tree, style, path, highlight=None):
    """Write an SVG drawing of a spanning tree or cut-off tree.

    Spanning trees get one ``<line>`` per edge; cut-off tree edges are
    ``<polyline>`` walks through their pivotal; a degenerate tree is a single
    marker. ``highlight`` is an optional site sequence drawn on top.
    """
    style = dict({"stroke": "#1f3b73", "width": 0.6, "size": 600}, **(style or {}))
    g = tree.geometry
    corners = _site_xy(g, [0, g.side - 1, g.site_count - g.side, g.site_count - 1])
    lo = corners.min(axis=0) - g.eta
    hi = corners.max(axis=0) + g.eta
    scale = style["size"] / float(np.max(hi - lo))
    w, h = (hi - lo) * scale

    def pt(xy):
        return f"{(xy[0] - lo[0]) * scale:.3f},{(hi[1] - xy[1]) * scale:.3f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">',
           f'<g stroke="{escape(style["stroke"])}" stroke-width="{style["width"]}" fill="none">']
    if getattr(tree, "degenerate", False):
        # the degenerate point is stored in embedding coordinates
        s = g.nearest_site(tree.point)
        x, y = pt(_site_xy(g, s)).split(",")
        out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="{escape(style["stroke"])}"/>')
    elif hasattr(tree, "forest"):
        for (a, b), piv in zip(tree.edges, tree.pivotal):
            walk = tree.forest.edge_sites(int(a), int(b), int(piv))
            xy = [_site_xy(g, walk[0])]
            for u, v in zip(walk, walk[1:]):
                xy.append(xy[-1] + _step_xy(g, u, v))
            out.append('<polyline points="' + " ".join(pt(q) for q in xy) + '"/>')
    else:
        ends = g.edges[tree.edges]
        a = _site_xy(g, ends[:, 0])
        b = a + _step_xy(g, ends[:, 0], ends[:, 1])
        for p, q in zip(a, b):
            x1, y1 = pt(p).split(",")
            x2, y2 = pt(q).split(",")
            out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>')
    out.append("</g>")
    if highlight is not None and len(highlight) > 1:
        xy = [_site_xy(g, highlight[0])]
        for u, v in zip(highlight, highlight[1:]):
            xy.append(xy[-1] + _step_xy(g, u, v))
        out.append('<polyline stroke="#c0392b" stroke-width="2" fill="none" points="'
                   + " ".join(pt(q) for q in xy) + '"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------- running


def _replica(experiment, lattice, params, index, seed, want_tree):
    body = EXPERIMENTS[experiment][0]
    g = build_geometry(lattice)
    try:
        res = body(Params(params), g, seed)
    except ConfigurationError:
        raise
    except Exception as exc:
        return index, None, f"{type(exc).__name__}: {exc}", traceback.format_exc()
    if not want_tree:
        res.tree = None
    return index, res, None, None


def _threads():
    try:
        return max(1, int(os.environ.get("NEARCRIT_THREADS", "1")))
    except ValueError:
        raise ConfigurationError("NEARCRIT_THREADS must be an integer") from None


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def run(config):
    """Run all replicas, write results.csv, summary.json, provenance.json and figures.

    Returns the process exit status: 0 when every replica succeeded, 3 when
    some replicas failed (the summary is then marked incomplete).
    """
    body, summarize, columns = EXPERIMENTS[config.experiment]
    seeds = [derive_seed(config.seed, i) for i in range(config.replicas)]
    # fail fast on parameter errors before starting the pool
    Params(config.params)
    want_tree = config.svg or config.experiment == "render"
    jobs = [(config.experiment, config.lattice, config.params, i, s, want_tree and i == 0)
            for i, s in enumerate(seeds)]
    workers = min(_threads(), config.replicas)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_replica, *zip(*jobs)))
    else:
        done = [_replica(*job) for job in jobs]
    done.sort(key=lambda t: t[0])
    results = [res for _, res, _, _ in done if res is not None]
    failures = [{"replica": i, "seed": seeds[i], "error": err}
                for i, res, err, _ in done if res is None]
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["replica", "seed", "status"] + columns)
        for i, res, err, _ in done:
            if res is None:
                writer.writerow([i, seeds[i], "failed"] + [""] * len(columns))
                continue
            for row in res.rows:
                writer.writerow([i, seeds[i], "ok"] + [_fmt(row.get(c, "")) for c in columns])
    g = build_geometry(config.lattice)
    aggregate = summarize(results, Params(config.params), g) if results else {}
    summary = {"schema": SUMMARY_SCHEMA, "experiment": config.experiment,
               "config": config.as_dict(), "replicas": config.replicas,
               "completed": len(results), "complete": not failures,
               "failures": failures, "aggregate": aggregate}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True,
                                                 default=_json_default) + "\n")
    (out / "provenance.json").write_text(json.dumps({
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__, "python": sys.version.split()[0],
        "threads": workers}, indent=2) + "\n")
    tree = next((res.tree for _, res, _, _ in done if res is not None and res.tree is not None), None)
    if tree is not None:
        render_tree(tree, None, out / "tree.svg")
    from .report import write_figures

    write_figures(config.experiment, aggregate, [r for res in results for r in res.rows], out)
    return 0 if not failures else 3


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def build_parser():
    parser = argparse.ArgumentParser(prog="nearcrit", description=__doc__.split("\n\n")[0])
    parser.add_argument("experiment", choices=sorted(EXPERIMENTS))
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--replicas", type=int, default=None, help="replica count (overrides config)")
    parser.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
        config = make_config(args.experiment, parse_config_text(text), args.seed,
                             args.replicas, args.out)
        return run(config)
    except (ConfigurationError, UsageError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
