import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import nid, random_catalog, random_system, tiny_graph
from iotrisk.chains import chain_risk, extract_top_exploit_chains
from iotrisk.defenses import expand_library
from iotrisk.optimizer import OptimizerParams, optimize
from iotrisk.propagation import propagate_scores
from iotrisk.report import CURVE_HEADER, curve_csv, emit_curve_data, weakest_link_report
from oracles import all_chains


def test_single_path():
    g = tiny_graph({"a": ("entry", 0.9), "n": ("mid", 0.5), "l": ("goal", 0.4)}, [("a", "n"), ("n", "l")])
    (c,) = extract_top_exploit_chains(g, 5)
    assert c.nodes == (nid("a"), nid("n"), nid("l"))
    assert c.risk == pytest.approx(0.9 * 0.5 * 0.4, abs=1e-15)
    assert chain_risk(g, c.nodes) == c.risk


def test_parallel_paths_ranked():
    g = tiny_graph(
        {"a": ("entry", 0.9), "b": ("goal", 0.9), "c": ("entry", 0.5), "d": ("goal", 0.5)},
        [("a", "b"), ("c", "d")],
    )
    top = extract_top_exploit_chains(g, 2)
    assert [c.nodes[0] for c in top] == [nid("a"), nid("c")]
    assert [round(c.risk, 12) for c in top] == [0.81, 0.25]


def test_zero_m_and_length_cap():
    g = tiny_graph({"a": ("entry", 0.9), "n": ("mid", 0.5), "l": ("goal", 0.4)}, [("a", "n"), ("n", "l")])
    assert extract_top_exploit_chains(g, 0) == []
    assert extract_top_exploit_chains(g, 3, max_len=2) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 8))
def test_matches_exhaustive_enumeration(seed, m):
    rng = random.Random(seed)
    g = random_system(rng, 3, (4, 6), n_inter=3)
    for e in g.iter_edges():
        if rng.random() < 0.3:
            e.edge_defense_score = rng.choice([0.0, 0.3, 0.6, 0.9])
    # fully blocked chains (risk 0) are not reported
    want = [c for c in all_chains(g, 8) if c[0] > 0][:m]
    got = extract_top_exploit_chains(g, m, max_len=8)
    assert len(got) == len(want)
    for c, (risk, path) in zip(got, want):
        assert c.risk == pytest.approx(risk, rel=1e-9)
        assert chain_risk(g, c.nodes) == pytest.approx(risk, rel=1e-9)
    # ranking is by risk; equal-risk paths may appear in either order
    assert [c.risk for c in got] == sorted((c.risk for c in got), reverse=True)


def test_fixture_multi_device_chain(smart_home):
    def shape(path):
        devs = []
        for n in path:
            d = n.split("/", 1)[0]
            if not devs or devs[-1] != d:
                devs.append(d)
        return devs == ["laptop", "router-main", "google-home", "google-home-cloud"]

    (c,) = extract_top_exploit_chains(
        smart_home,
        1,
        sources=[n for n in smart_home.entry_nodes if n.startswith("laptop/")],
        accept=lambda n: n == "google-home-cloud/-/dos",
        path_filter=shape,
    )
    assert c.devices == ["laptop", "router-main", "google-home", "google-home-cloud"]
    assert smart_home.nodes[c.nodes[-1]].label.startswith("Denial-of-Service")
    assert 0 < c.risk < 1


def test_report_all_zero():
    g = tiny_graph({"a": ("entry", 0.0), "n": ("mid", 0.0), "l": ("goal", 0.0)}, [("a", "n"), ("n", "l")])
    propagate_scores(g)
    rep = weakest_link_report(g, 3)
    assert len(rep.top_nodes) == 3 and all(r.score == 0 for r in rep.top_nodes)
    assert rep.adversary_score == 0.0


def test_report_sort_oracle():
    g = tiny_graph(
        {"a": ("entry", 0.9), "b": ("entry", 0.3), "m": ("mid", 0.8), "n": ("mid", 0.6), "l": ("goal", 0.7), "q": ("goal", 0.2)},
        [("a", "m"), ("b", "n"), ("m", "l"), ("n", "l"), ("n", "q"), ("b", "m")],
    )
    propagate_scores(g)
    rep = weakest_link_report(g, 6)
    want = sorted(g.nodes.values(), key=lambda n: n.exploit_score, reverse=True)
    assert [r.score for r in rep.top_nodes] == [n.exploit_score for n in want]
    assert {r.node_id for r in rep.top_nodes} == set(g.nodes)


def test_fixture_top_rows(smart_home):
    rep = weakest_link_report(smart_home, 3, n_chains=2)
    labels = {r.label for r in rep.top_nodes}
    assert labels <= {"Access requested", "Sensor tampering"}
    assert all(0.5 < r.score < 1.0 for r in rep.top_nodes)
    assert [r.score for r in rep.top_nodes] == sorted((r.score for r in rep.top_nodes), reverse=True)
    assert len(rep.chains) == 2 and rep.k == 23
    d = rep.to_dict()
    assert d["top_nodes"][0]["exploit_score"] == rep.top_nodes[0].score
    assert max(d["device_max"].values()) == rep.top_nodes[0].score


@pytest.fixture(scope="module")
def small_run():
    rng = random.Random(5)
    g = random_system(rng, 4, n_inter=5)
    propagate_scores(g)
    return optimize(g, random_catalog(rng, g, 12), OptimizerParams(k=2, alpha_global=0.00032))


def test_curve_one_round():
    rng = random.Random(6)
    g = random_system(rng, 2)
    propagate_scores(g)
    res = optimize(g, random_catalog(rng, g, 3), OptimizerParams(k=1, max_defenses=1))
    doc = emit_curve_data(res)
    assert [r["round"] for r in doc["rows"]] == [0, 1, "h_best"]


def test_curve_document(small_run):
    doc = emit_curve_data(small_run, {"source": "test"})
    rows = doc["rows"][:-1]
    marker = doc["rows"][-1]
    adv = [r["adversary_score"] for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(adv, adv[1:]))
    assert marker["global_obj"] == min(r["global_obj"] for r in rows)
    assert sum(r["is_optimal"] for r in rows) == 1
    assert doc["recommended"]["round"] == small_run.best.round
    assert doc["provenance"]["source"] == "test"
    text = curve_csv(doc)
    lines = text.splitlines()
    assert lines[0] == ",".join(CURVE_HEADER)
    assert len(lines) == len(doc["rows"]) + 1
    assert lines[-1].startswith("h_best,")


def test_fixture_marker_minimizes_global(smart_home):
    res = optimize(smart_home, expand_library(smart_home), OptimizerParams(alpha_global=0.00032, k=23, max_defenses=40))
    doc = emit_curve_data(res)
    rows = doc["rows"][:-1]
    assert doc["rows"][-1]["global_obj"] == min(r["global_obj"] for r in rows)
