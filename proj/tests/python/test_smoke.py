import json
import math
from pathlib import Path

import pytest

import popnet

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def star(mcs, model):
    pops = [
        {"name": f"pop{i + 1}", "mc_cpu": mc, "endpoint": {"type": "heat-like", "port": 9100 + i}}
        for i, mc in enumerate(mcs)
    ]
    links = [{"a": p["name"], "b": "s1", "delay_ms": 5} for p in pops]
    return json.dumps(
        {"format_version": 1, "pops": pops, "switches": ["s1"], "links": links, "defaults": {"model": model}}
    )


def oracle_a(nc, mc, ac, e_cpu, total_mc):
    if ac + nc > mc:
        return None
    return e_cpu / total_mc * nc


def oracle_b(nc, mc, ac, e_cpu, total_mc):
    return e_cpu / total_mc * (mc / max(mc, ac)) * nc


def test_closed_forms_match_oracle():
    for mc in range(1, 6):
        for ac in range(0, 9):
            for nc in range(1, 4):
                assert popnet.cpu_limit_model_a(nc, mc, ac, 0.5, 8) == oracle_a(nc, mc, ac, 0.5, 8)
                assert popnet.cpu_limit_model_b(nc, mc, ac + nc, 0.5, 8) == oracle_b(nc, mc, ac + nc, 0.5, 8)


def test_fixed_limit_platform_rejects_past_capacity():
    platform = popnet.Platform.load(str(CONFIGS / "topologies" / "single_pop.json"), e_cpu=0.5)
    outcomes = [platform.allocate("pop1", cpu_cu=1) for _ in range(5)]
    assert [o["accepted"] for o in outcomes] == [True] * 4 + [False]
    assert outcomes[-1]["reason"] == "cpu_exhausted"
    assert all(i["cpu_fraction"] == 0.125 for i in platform.instances())
    assert platform.ledgers()["pop1"]["ac_cpu"] == 4
    assert platform.check_invariants() == []


def test_over_provisioning_rescales_peers():
    platform = popnet.Platform(star([4], "over_provisioning_B"), e_cpu=0.5)
    for _ in range(8):
        assert platform.allocate("pop1")["accepted"]
    limits = [i["cpu_fraction"] for i in platform.instances()]
    assert all(math.isclose(x, 0.5 / 4 * 4 / 8, rel_tol=1e-12) for x in limits)
    assert sum(limits) <= 0.5 + 1e-12


def test_release_restores_ledger():
    platform = popnet.Platform(star([2, 2], "fixed_limit_A"))
    before = platform.ledgers()
    outcome = platform.allocate("pop2", cpu_cu=2, memory_mb=512)
    assert platform.release(outcome["id"])["accepted"]
    assert platform.ledgers() == before
    with pytest.raises(popnet.Error) as info:
        platform.release(outcome["id"])
    assert info.value.code == "unknown_instance"


def test_chain_walks_between_pops():
    platform = popnet.Platform(star([2, 2], "fixed_limit_A"))
    a = platform.allocate("pop1")["id"]
    b = platform.allocate("pop2")["id"]
    chain = platform.set_chain([a, b], "smallest_delay")
    assert chain["vlan_tag"] == 1
    assert chain["segments"] == [["pop1", "s1", "pop2"]]
    report = platform.traffic(chain["id"], 1.0)
    assert report["end_to_end_delay_ms"] == pytest.approx(10.0)
    removed = platform.remove_chain(chain["id"])
    assert len(removed) == 3 and platform.flows() == []


def test_compute_path_and_graph():
    text = star([1, 1, 1], "fixed_limit_A")
    graph = popnet.topology_graph(text)
    assert sorted(graph) == ["pop1", "pop2", "pop3", "s1"]
    assert [peer for _, peer, _ in graph["s1"]] == ["pop1", "pop2", "pop3"]
    path, cost = popnet.compute_path(text, "pop1", "pop3", "fewest_hops")
    assert path == ["pop1", "s1", "pop3"] and cost == 2


def test_validate_reports_field():
    bad = json.loads(star([1], "fixed_limit_A"))
    bad["pops"].append({"name": "island", "mc_cpu": 1, "endpoint": {"port": 9200}})
    violations = popnet.validate_topology(json.dumps(bad))
    assert any("island" in field + message for field, message in violations)
    with pytest.raises(popnet.Error) as info:
        popnet.Platform(json.dumps(bad))
    assert info.value.code == "validation_error"

    bad["links"].append({"a": "pop1", "b": "ghost"})
    with pytest.raises(popnet.Error) as info:
        popnet.validate_topology(json.dumps(bad))
    assert info.value.code == "parse_error" and "ghost" in str(info.value)


def test_scenarios_are_deterministic():
    names = popnet.builtin_scenarios()
    assert "experiment1_modelA" in names
    first = popnet.run_scenario("experiment1_modelA")
    assert first == popnet.run_scenario("experiment1_modelA")
    assert first.splitlines()[0] == "t,instance_id,pop,usage,limit,expected"
    golden = Path(__file__).resolve().parents[1] / "golden" / "experiment1_modelA.csv"
    assert first == golden.read_text()


def test_inline_scenario():
    scenario = {
        "format_version": 1,
        "name": "inline",
        "topology": json.loads(star([2], "fixed_limit_A")),
        "duration_s": 3,
        "actions": [{"t": 1, "allocate": {"pop": "pop1", "cpu_cu": 1}}],
    }
    csv = popnet.run_scenario(text=json.dumps(scenario))
    assert "i-000001" in csv


def test_sweep():
    shared = popnet.isolation_sweep("shared")
    for point in shared:
        assert point["pop2_usage_per_instance"] == pytest.approx(0.5 / max(4, point["pop1_requested"] + 2))
    assert popnet.export_sweep("modelA").startswith("pop1_instances,")
