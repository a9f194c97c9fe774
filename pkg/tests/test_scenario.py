import copy
import json
import math

import pytest

from leosplit.profiles import GB, hetero_vitg_scenario, table2_scenario
from leosplit.scenario import (
    LinkSpec,
    ScenarioError,
    data_sizes,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    write_scenario,
)


@pytest.fixture
def doc():
    return scenario_to_dict(table2_scenario())


def test_table2_file_echoes_reported_setup(scenario_dir):
    scn = load_scenario(scenario_dir / "table2_vitg.json")
    assert len(scn.satellites) == 5
    assert scn.links.isl_rate == 0.5e9
    assert scn.links.s2g_rate == 6e9
    assert scn.workload.batch_size == 64
    assert all(s.mem_capacity == 8 * GB for s in scn.satellites)


def test_vitg_file_has_48_layers_and_12gb(scenario_dir):
    scn = load_scenario(scenario_dir / "hetero_vitg.json")
    assert scn.workload.num_layers == 48
    assert sum(lay.mem_bytes for lay in scn.workload.layers) == 12 * GB
    assert scn.num_stages == 5


def test_roundtrip_through_file(tmp_path):
    scn = hetero_vitg_scenario()
    write_scenario(scn, tmp_path / "s.json")
    assert load_scenario(tmp_path / "s.json") == scn


def test_zero_flops_is_rejected_with_path(doc):
    doc["satellites"][2]["flops_per_sec"] = 0
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.path == "$.satellites[2].flops_per_sec"


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d["workload"]["layers"][3].__setitem__("flops", "x"), "$.workload.layers[3].flops"),
        (lambda d: d["workload"].pop("batch_size"), "$.workload.batch_size"),
        (lambda d: d["links"].__setitem__("isl_rate_bps", -1), "$.links.isl_rate_bps"),
        (lambda d: d["links"].__setitem__("s2g_profile", [[5, 1e9], [5, 2e9]]), "$.links.s2g_profile[1][0]"),
        (lambda d: d["calibration"]["acc_points"][0].__setitem__(0, 1.5), "$.calibration.acc_points[0][0]"),
        (lambda d: d["optimizer"].__setitem__("grid_resolution", 0), "$.optimizer.grid_resolution"),
        (lambda d: d["satellites"][1].__setitem__("id", 7), "$.satellites"),
        (lambda d: d.__setitem__("satellites", d["satellites"][:1]), "$.satellites"),
        (lambda d: d["workload"].__setitem__("num_batches", True), "$.workload.num_batches"),
    ],
)
def test_validation_names_the_offending_field(doc, mutate, path):
    d = copy.deepcopy(doc)
    mutate(d)
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(d)
    assert err.value.path == path
    assert path in str(err.value)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_infinite_rate_allowed(doc):
    doc["links"]["isl_rate_bps"] = math.inf
    assert scenario_from_dict(json.loads(json.dumps(doc))).links.isl_rate == math.inf


def test_rate_profile_lookup():
    links = LinkSpec(1.0, 5.0, ((0.0, 2.0), (15.0, 3.0), (30.0, 4.0)), start_time=20.0)
    assert links.s2g_rate_at() == 3.0
    assert links.s2g_rate_at(0.0) == 2.0
    assert links.s2g_rate_at(45.0) == 4.0
    assert LinkSpec(1.0, 5.0).s2g_rate_at() == 5.0


def test_data_sizes():
    w = table2_scenario().workload
    inp, act, out = data_sizes(w, 0)
    assert inp == 64 * 1920 * 1080 * 3 * 8
    assert act == 64 * 257 * 1664 * 32
    assert out == 64 * 10 * 32
    with pytest.raises(IndexError):
        data_sizes(w, 48)


def test_compute_chain_renumbering():
    scn = table2_scenario()
    sub = scn.with_compute_satellites(scn.compute_satellites[2:])
    assert [s.id for s in sub.satellites] == [0, 1, 2]
    assert sub.num_stages == 2
