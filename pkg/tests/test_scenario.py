import json

import pytest

from nosebreak_lab.errors import ConfigError
from nosebreak_lab.honeywall import CaptureLog
from nosebreak_lab.scenario import (RunReport, Scenario, assert_unlogged, builtin,
                                    capture_is_opaque, export, run)


@pytest.fixture(scope="module")
def full_run():
    return run(builtin("nosebreak-full"), seed=3)


def test_full_scenario_passes(full_run):
    rep = full_run
    assert [s["status"] for s in rep.steps] == ["ok"] * len(rep.steps)
    assert rep.assertions == {"unlogged": True, "capture_opaque": True, "monitor_disabled": True,
                              "root_server": True, "privilege_path": True}
    disable = next(s for s in rep.steps if s["type"] == "disable")["detail"]
    assert disable["found"] and disable["disabled"]


def test_first_server_runs_as_web_uid(full_run):
    first = full_run.steps[0]["detail"]
    assert first["server_uid"] == 33 and first["http_status"] == 200


def test_detectors_fire_before_disable(full_run):
    first = full_run.detections[:4]
    verdicts = {d["technique"]: d["verdict"] for d in first}
    assert verdicts["syscall_anomaly"] == verdicts["module_scan"] == "detected"
    assert full_run.detections[-1]["verdict"] == "not_detected"


def test_clean_control_run():
    rep = run(builtin("nosebreak-full", sebek=False), seed=3)
    assert all(s["status"] == "ok" for s in rep.steps if s["type"] != "disable")
    assert {d["verdict"] for d in rep.detections[:2]} == {"not_detected"}


def test_same_seed_same_report():
    a = run(builtin("nosebreak-full"), seed=11)
    b = run(builtin("nosebreak-full"), seed=11)
    assert a.to_json() == b.to_json() and a.digest() == b.digest()


def test_control_read_trips_marker():
    sc = builtin("nosebreak-full")
    sc.steps.insert(2, {"type": "control-read", "marker": 2})  # while the monitor runs
    rep = run(sc, seed=3)
    assert rep.assertions["unlogged"] is False
    verdict = assert_unlogged(rep, sc.markers)
    assert verdict[sc.markers[2]] is False
    assert all(v for m, v in verdict.items() if m != sc.markers[2])


def test_empty_marker_set_vacuous(full_run):
    assert assert_unlogged(full_run, []) == {}


def test_capture_opacity_checker(full_run):
    assert capture_is_opaque(full_run.lab, {31337, 31338})
    assert not capture_is_opaque(full_run.lab, {443})  # HTTPS records are not Kebes-shaped


def test_export_round_trip(full_run, tmp_path):
    p = export(full_run, tmp_path / "r.json")
    back = RunReport.from_dict(json.loads(p.read_text()))
    assert back.to_dict() == full_run.to_dict()
    pc = export(full_run, tmp_path / "r.pcap", "pcap")
    raw = pc.read_bytes()
    count, off = 0, 24
    while off < len(raw):
        incl = int.from_bytes(raw[off + 8:off + 12], "little")
        off += 16 + incl
        count += 1
    assert count == len(full_run.lab.wall.capture)
    with pytest.raises(OSError):
        export(full_run, tmp_path / "r.xml", "xml")
    with pytest.raises(OSError):
        export(full_run, tmp_path / "missing-dir" / "r.json")


def test_scenario_validation(tmp_path):
    with pytest.raises(ConfigError):
        Scenario("x", steps=[{"type": "teleport"}])
    with pytest.raises(ConfigError):
        Scenario("x", steps=[{"type": "client-commands", "session": "ghost", "commands": []}])
    with pytest.raises(ConfigError):
        builtin("other")
    sc = builtin("nosebreak-full")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sc.to_dict()))
    assert Scenario.load(p).to_dict() == sc.to_dict()
    p.write_text("{")
    with pytest.raises(ConfigError):
        Scenario.load(p)


def test_step_failure_aborts_rest():
    sc = Scenario("broken", {"sebek": {}}, [], [
        {"type": "deliver-exploit", "session": "www"},
        {"type": "client-commands", "session": "www", "commands": [["READFILE", "/nope"]]},
        {"type": "run-detectors"},
    ])
    rep = run(sc, seed=1)
    assert [s["status"] for s in rep.steps] == ["ok", "failed", "skipped"]
    assert not rep.passed


def test_capture_log_len_counts_trains():
    assert len(CaptureLog()) == 0
