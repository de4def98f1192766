import copy
from collections import deque

import pytest

from iotrisk.builder import (
    DEFAULT_ACCESSIBILITY,
    SpecError,
    build_system,
    connect_devices,
    instantiate_device,
    parse_system_spec,
)
from iotrisk.graph import AttackVector, NodeKind, PrivilegesRequired, Scope, validate_device_graph
from iotrisk.templates import CATEGORIES, all_subcategory_combinations, default_master_template, derive_device_template

SUB = {"updatability": "updatable", "network_access": "local", "comms": "send_and_receive"}
EXT = {"updatability": "updatable", "network_access": "external", "comms": "send_and_receive"}


def dev(name, category, sub=SUB, **kw):
    return {"name": name, "category": category, "subcategory": dict(sub), **kw}


def template_for(d):
    return derive_device_template(default_master_template(), d.category, d.subcategories)


def test_minimal_device_defaults():
    spec = parse_system_spec({"devices": [dev("s", "sensor")]})
    g = build_system(spec)
    assert g.inter_edges == []
    for n in g.nodes.values():
        assert n.impact.is_zero()
        if n.is_entry:
            assert n.accessibility == DEFAULT_ACCESSIBILITY == 0.40


def test_dangling_grantee():
    doc = {"devices": [dev("r", "router_gateway", login_permissions=[{"permission": "p", "devices": ["ghost"]}])]}
    with pytest.raises(SpecError, match="ghost"):
        parse_system_spec(doc)


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda d: d["devices"].append(dict(d["devices"][0])), "duplicate"),
        (lambda d: d["devices"][0].update(category="toaster"), "unknown category"),
        (lambda d: d["devices"][0]["subcategory"].update(comms="shout"), "comms"),
        (lambda d: d["devices"][0].update(local_network=["nowhere"]), "unknown device"),
        (lambda d: d["devices"][0].update(impact={"availability": [1.5]}), "availability"),
        (lambda d: d["devices"][0].update(accessibility={"access-requested": "extreme"}), "accessibility"),
        (lambda d: d["devices"][0].update(name="a/b"), "may not contain"),
        (lambda d: d["devices"][0].update(factor_overrides={"dos": {"attack_vector": "telepathy"}}), "override"),
    ],
)
def test_spec_errors(mutate, msg):
    doc = {"devices": [dev("s", "sensor")]}
    mutate(doc)
    with pytest.raises(SpecError, match=msg):
        parse_system_spec(doc)


def test_spec_error_lists_every_problem():
    doc = {"devices": [dev("a", "toaster"), dev("b", "sensor", local_network=["zzz"])]}
    with pytest.raises(SpecError) as exc:
        parse_system_spec(doc)
    assert len(exc.value.problems) == 2


def test_smart_home_parsed(smart_home_doc, smart_home):
    spec = parse_system_spec(smart_home_doc)
    cats = [d.category for d in spec.devices]
    assert len(spec.devices) == 23
    assert cats.count("router_gateway") == 3
    assert cats.count("local_controller") == 4
    assert cats.count("sensor") + cats.count("actuator") == 11
    assert len(smart_home.inter_edges) >= 50
    assert smart_home.provenance["warnings"] == []


def _count(g, device, permission):
    return sum(1 for n in g.devices[device].nodes.values() if n.permission == permission)


def test_permission_copy_counts():
    base = parse_system_spec({"devices": [dev("r", "router_gateway"), dev("h", "local_controller", EXT)]})
    t = template_for(base.device("r"))
    plain = build_system(base)
    n_params = sum(1 for n in t.nodes.values() if n.parameterized)
    assert len(plain.devices["r"].nodes) == len(t.nodes) - n_params

    one = parse_system_spec(
        {
            "devices": [
                dev("r", "router_gateway", login_permissions=[{"permission": "p1", "devices": ["h"]}],
                    execute_permissions=[{"permission": "p2", "devices": ["h"]}]),
                dev("h", "local_controller", EXT),
            ]
        }
    )
    g1 = build_system(one)
    assert _count(g1, "r", "p1") == len(t.permission_slugs({"login"}))
    assert _count(g1, "r", "p2") == len(t.permission_slugs({"execute"}))
    assert _count(g1, "r", None) == len(plain.devices["r"].nodes)

    two = parse_system_spec(
        {
            "devices": [
                dev("r", "router_gateway", login_permissions=[{"permission": "p1", "devices": ["h"]}, {"permission": "p3", "devices": ["h"]}]),
                dev("h", "local_controller", EXT),
            ]
        }
    )
    g2 = build_system(two)
    login_nodes = sum(1 for n in g2.devices["r"].nodes.values() if n.permission)
    assert login_nodes == 2 * len(t.permission_slugs({"login"}))


def test_parameterized_goals_per_target_and_permission():
    spec = parse_system_spec(
        {
            "devices": [
                dev("r1", "router_gateway", login_permissions=[{"permission": "a", "devices": ["h"]}, {"permission": "b", "devices": ["h"]}]),
                dev("r2", "router_gateway", login_permissions=[{"permission": "a", "devices": ["h"]}]),
                dev("h", "user_device", EXT),
            ]
        }
    )
    g = build_system(spec)
    keys = sorted(n.slug for n in g.devices["h"].nodes.values() if n.slug.startswith("obtain-auth-key@"))
    assert keys == ["obtain-auth-key@r1:a", "obtain-auth-key@r1:b", "obtain-auth-key@r2:a"]
    for dg in g.devices.values():
        assert validate_device_graph(dg) == []


def test_router_pair_linked_both_ways():
    spec = parse_system_spec({"devices": [dev("r1", "router_gateway", local_network=["r2"]), dev("r2", "router_gateway")]})
    g = build_system(spec)
    keys = {e.key for e in g.inter_edges}
    assert keys == {("r1/-/no-strong-auth", "r2/-/no-strong-auth"), ("r2/-/no-strong-auth", "r1/-/no-strong-auth")}


def test_isolated_device_has_no_inter_edges():
    spec = parse_system_spec({"devices": [dev("r1", "router_gateway", local_network=["s"]), dev("s", "sensor"), dev("lone", "actuator")]})
    g = build_system(spec)
    assert all("lone/" not in e.source and "lone/" not in e.target for e in g.inter_edges)


def test_connection_rules():
    spec = parse_system_spec(
        {
            "devices": [
                dev("r", "router_gateway", local_network=["c", "s", "p"]),
                dev("c", "local_controller", local_network=["s"], login_permissions=[{"permission": "own", "devices": ["u"]}]),
                dev("s", "sensor", {"updatability": "non_updatable", "network_access": "local", "comms": "send"},
                    execute_permissions=[{"permission": "ctl", "devices": ["c"]}]),
                dev("p", "actuator", general_permissions=True),
                dev("u", "user_device", EXT, local_network=["r"]),
            ]
        }
    )
    g = build_system(spec)
    keys = {e.key for e in g.inter_edges}
    assert ("r/-/no-strong-auth", "c/-/access-requested") in keys
    assert ("s/-/sensor-tampering", "c/-/access-ports") in keys
    assert ("s/-/firmware-unsigned", "c/-/access-ports") in keys
    assert ("u/-/obtain-auth-key@c:own", "c/own/access-network-address") in keys
    assert ("u/-/obtain-open-access@c:own", "c/-/access-network-address") in keys
    # execute-only copy: lands on the copy's command node
    assert ("c/-/manipulate-commands@s:ctl", "s/ctl/execute-command") in keys
    assert ("r/-/no-strong-auth", "p/-/access-network-address") in keys
    for a, b in keys:
        assert g.nodes[a].device_id != g.nodes[b].device_id


def test_exploitability_rules(smart_home):
    tamper = smart_home.nodes["ring-doorbell/-/sensor-tampering"]
    assert tamper.exploitability.attack_vector is AttackVector.PHYSICAL
    for n in smart_home.nodes.values():
        if n.permission is None:
            assert n.exploitability.privileges_required is PrivilegesRequired.NONE
        else:
            assert n.exploitability.privileges_required is not PrivilegesRequired.NONE
        assert (n.exploitability.scope is Scope.CHANGED) == smart_home.has_inter_out_edge(n.id)
    key = smart_home.nodes["laptop/-/obtain-auth-key@router-main:admin"]
    assert key.exploitability.scope is Scope.CHANGED


def test_factor_override_applies():
    doc = {"devices": [dev("s", "sensor", factor_overrides={"access-requested": {"attack_vector": "physical", "user_interaction": "required"}})]}
    g = build_system(parse_system_spec(doc))
    ex = g.nodes["s/-/access-requested"].exploitability
    assert ex.attack_vector is AttackVector.PHYSICAL and ex.user_interaction.value == "required"


def test_impact_forms_agree():
    t = template_for(parse_system_spec({"devices": [dev("s", "sensor")]}).device("s"))
    goals = t.goal_slugs
    as_list = {"availability": [0.56] + [0.0] * (len(goals) - 1)}
    as_dict = {"availability": {goals[0]: "high"}}
    g1 = build_system(parse_system_spec({"devices": [dev("s", "sensor", impact=as_list)]}))
    g2 = build_system(parse_system_spec({"devices": [dev("s", "sensor", impact=as_dict)]}))
    for nid in g1.nodes:
        assert g1.nodes[nid].impact == g2.nodes[nid].impact
    assert g1.nodes[f"s/-/{goals[0]}"].impact.availability == 0.56


def _path_exists(g, src, dst, via=None):
    seen, todo = {src}, deque([src])
    while todo:
        n = todo.popleft()
        if n == dst:
            return True
        for c in g.children(n):
            if c not in seen and (via is None or via(c)):
                seen.add(c)
                todo.append(c)
    return False


def test_multi_device_path_in_fixture(smart_home):
    # laptop holds execute rights on the fridge, the fridge on the hub
    src = "laptop/-/download-malware"
    dst = "samsung-connect-hub/-/dos"
    assert src in smart_home.nodes and dst in smart_home.nodes
    allowed = {"laptop", "samsung-family-hub", "samsung-connect-hub"}
    assert _path_exists(smart_home, src, dst, via=lambda n: smart_home.nodes[n].device_id in allowed)


def test_every_category_builds_valid_graphs():
    devices = []
    for i, (cat, sub) in enumerate((c, s) for c in CATEGORIES for s in all_subcategory_combinations()):
        devices.append(dev(f"d{i}", cat, sub))
    g = build_system(parse_system_spec({"devices": devices}))
    for dg in g.devices.values():
        assert validate_device_graph(dg) == []
    assert all(n.kind is not NodeKind.ENTRY or n.permission is None for n in g.nodes.values())


def test_build_is_deterministic(smart_home_doc):
    a = build_system(parse_system_spec(copy.deepcopy(smart_home_doc)))
    b = build_system(parse_system_spec(copy.deepcopy(smart_home_doc)))
    assert sorted(a.nodes) == sorted(b.nodes)
    assert [e.key for e in a.iter_edges()] == [e.key for e in b.iter_edges()]
    assert a.provenance["template_version"] == default_master_template().version


def test_instantiate_device_without_grants():
    spec = parse_system_spec({"devices": [dev("x", "cloud_server", EXT)]})
    d = spec.device("x")
    dg = instantiate_device(d, template_for(d))
    g = connect_devices([dg], spec)
    assert len(g) == len(dg.nodes)
