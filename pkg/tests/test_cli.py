import csv
import json
from xml.etree import ElementTree

import numpy as np
import pytest

from nearcrit import LatticeSpec, build_geometry, sample_labels
from nearcrit.cli import load_snapshot, main, make_config, parse_config_text, render_tree, run, save_snapshot
from nearcrit.errors import ConfigurationError, FormatError, IntegrityError
from nearcrit.forest import SpanningTree, mst_kruskal
from nearcrit.pivnet import _degenerate, build_network, cutoff_forest

SVG = "{http://www.w3.org/2000/svg}"


def test_snapshot_round_trip(tmp_path):
    for kind in ("triangular-site", "square-bond"):
        g = build_geometry(LatticeSpec(kind, 8, 0.75, "box"))
        lab = sample_labels(g, 2 ** 63 + 5)
        path = tmp_path / f"{kind}.ncpt"
        save_snapshot(lab, path)
        back = load_snapshot(path)
        assert back.values.tobytes() == lab.values.tobytes()
        assert back.seed == lab.seed and back.geometry.spec == g.spec


def test_snapshot_size_is_header_plus_labels(tmp_path):
    g = build_geometry(LatticeSpec("triangular-site", 500, 1.0, "torus"))
    assert g.carrier_count == 10 ** 6
    path = tmp_path / "big.ncpt"
    save_snapshot(sample_labels(g, 0), path)
    assert path.stat().st_size == 60 + 8 * 10 ** 6


def test_snapshot_rejects_damage(tmp_path):
    g = build_geometry(LatticeSpec("triangular-site", 4, 1.0, "torus"))
    path = tmp_path / "s.ncpt"
    save_snapshot(sample_labels(g, 1), path)
    data = bytearray(path.read_bytes())
    bad = tmp_path / "bad.ncpt"
    bad.write_bytes(bytes([data[0] ^ 0xFF]) + bytes(data[1:]))
    with pytest.raises(FormatError):
        load_snapshot(bad)
    bad.write_bytes(bytes(data[:4]) + (99).to_bytes(4, "little") + bytes(data[8:]))
    with pytest.raises(FormatError):
        load_snapshot(bad)
    bad.write_bytes(bytes(data[:-3]))
    with pytest.raises(IntegrityError):
        load_snapshot(bad)
    bad.write_bytes(bytes(data[:30]))
    with pytest.raises(IntegrityError):
        load_snapshot(bad)


def _elements(path, tag):
    root = ElementTree.parse(path).getroot()
    return root.findall(f".//{SVG}{tag}")


def test_render_two_site_tree(tmp_path):
    g = build_geometry(LatticeSpec("square-bond", 2, 0.5, "box"))
    tree = SpanningTree(g, [0], [0.5], spanning=False)
    render_tree(tree, None, tmp_path / "t.svg")
    assert len(_elements(tmp_path / "t.svg", "line")) == 1


def test_render_mst_and_degenerate(tmp_path):
    g = build_geometry(LatticeSpec("triangular-site", 32, 1.0, "torus"))
    lab = sample_labels(g, 0)
    tree = mst_kruskal(g, lab)
    render_tree(tree, {"stroke": "black"}, tmp_path / "mst.svg", highlight=[0, 1, 2])
    assert len(_elements(tmp_path / "mst.svg", "line")) == g.site_count - 1
    from nearcrit import config_at

    net = build_network(g, config_at(lab, 0.5), [])
    render_tree(_degenerate(cutoff_forest(net, [], 0.0)), None, tmp_path / "dot.svg")
    assert len(_elements(tmp_path / "dot.svg", "circle")) == 1
    assert not _elements(tmp_path / "dot.svg", "polyline")


def test_config_parsing():
    raw = parse_config_text("kind = square-bond\n# comment\nn = 8\nepsilon = 0.2, 0.1  # trailing\n")
    assert raw == {"kind": "square-bond", "n": "8", "epsilon": "0.2, 0.1"}
    cfg = make_config("mst", raw, seed=3)
    assert cfg.seed == 3 and cfg.lattice.n == 8 and cfg.params == {"epsilon": "0.2, 0.1"}
    with pytest.raises(ConfigurationError):
        parse_config_text("n 8")
    with pytest.raises(ConfigurationError):
        parse_config_text("n = 8\nn = 9")
    with pytest.raises(ConfigurationError):
        make_config("mst", {"n": "eight"})
    with pytest.raises(ConfigurationError):
        make_config("nothing", {})
    with pytest.raises(ConfigurationError):
        make_config("mst", {}, replicas=0)


def test_invalid_config_exit_status(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = hexagonal\n")
    assert main(["mst", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigurationError"


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_mst_run_and_rerun(tmp_path, monkeypatch):
    cfg = tmp_path / "mst.cfg"
    cfg.write_text("kind = triangular-site\nn = 32\nm = 1\n")
    args = ["mst", "--config", str(cfg), "--replicas", "3", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    rows = _read(tmp_path / "a" / "results.csv")
    assert len(rows) == 3 and all(int(r["edges"]) == 64 * 64 - 1 for r in rows)
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    monkeypatch.setenv("NEARCRIT_THREADS", "2")
    assert main(args + ["--out", str(tmp_path / "c")]) == 0
    first = (tmp_path / "a" / "results.csv").read_bytes()
    assert (tmp_path / "b" / "results.csv").read_bytes() == first
    assert (tmp_path / "c" / "results.csv").read_bytes() == first
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["complete"] and summary["schema"] == 1
    assert (tmp_path / "a" / "mst.png").stat().st_size > 0
    assert "timestamp" in json.loads((tmp_path / "a" / "provenance.json").read_text())
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert a == b


def test_failed_replicas_are_recorded(tmp_path):
    # an out-of-range target makes every invasion replica fail
    cfg = make_config("invade", {"n": "8", "stop": "target", "target": "100000"}, replicas=2,
                      out=tmp_path)
    assert run(cfg) == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert not summary["complete"] and len(summary["failures"]) == 2
    assert [r["status"] for r in _read(tmp_path / "results.csv")] == ["failed", "failed"]


def test_render_experiment_writes_svg(tmp_path):
    cfg = make_config("render", {"n": "16"}, out=tmp_path)
    assert run(cfg) == 0
    lines = _elements(tmp_path / "tree.svg", "line")
    assert len(lines) == 32 * 32 - 1
    assert np.isfinite(float(lines[0].get("x1")))
