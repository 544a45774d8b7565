import json
import struct

import numpy as np

import pytest

from nosebreak_lab.errors import KernelFault, LookupFailure, PrivilegeError
from nosebreak_lab.nosebreak import (DETECTED, NOT_DETECTED, DecoyPlan, DetectionReport,
                                     call_kernel_address, classify_sebek, detect_all,
                                     detect_counter_regression, detect_dd_rtt,
                                     detect_module_scan, detect_proc_discrepancy,
                                     detect_syscall_anomaly, disable_by_reboot,
                                     extract_secrets, generate_decoys, parse_proc_net_dev,
                                     probe_connection_limit, probe_content_rewrite,
                                     run_technique, scan_hidden_modules, stored_original_read)
from nosebreak_lab.sebek import SebekConfig
from nosebreak_lab.simkernel import Image
from nosebreak_lab.simkernel.memory import NR_READ


def _sebek_top(host):
    public = {m.header_addr for m in host.public_modules()}
    hidden = [c for c in scan_hidden_modules(host.memory) if c.header_addr not in public]
    return classify_sebek(hidden, host.memory)


def test_parse_proc_net_dev_oracle(host):
    text = host.render_proc_net_dev()
    parsed = parse_proc_net_dev(text)
    for line in text.splitlines()[2:]:
        name, rest = line.split(":")
        cols = [int(x) for x in rest.split()]
        assert parsed[name.strip()]["rx_bytes"] == cols[0]
        assert parsed[name.strip()]["tx_packets"] == cols[9]


def test_report_validation():
    with pytest.raises(ValueError):
        DetectionReport("x", "maybe")
    with pytest.raises(ValueError):
        DetectionReport("x", DETECTED, {})


@pytest.mark.parametrize("sebek,expect", [({"version": "v216"}, DETECTED),
                                          ({"version": "v217"}, NOT_DETECTED),
                                          (None, NOT_DETECTED)])
def test_counter_regression(make_lab, sebek, expect):
    lab = make_lab(sebek=sebek)
    assert detect_counter_regression(lab.host).verdict == expect


def test_proc_discrepancy_after_traffic(make_lab):
    lab = make_lab()
    assert detect_proc_discrepancy(lab.host).verdict == NOT_DETECTED
    detect_counter_regression(lab.host, reads=100)
    lab.settle()
    assert detect_proc_discrepancy(lab.host).verdict == DETECTED
    clean = make_lab(sebek=None)
    detect_counter_regression(clean.host, reads=100)
    clean.settle()
    assert detect_proc_discrepancy(clean.host).verdict == NOT_DETECTED


def test_dd_rtt(make_lab):
    rep = detect_dd_rtt(make_lab())
    assert rep.detected and rep.evidence["ratio"] > 10
    rep = detect_dd_rtt(make_lab(sebek=None))
    assert rep.verdict == NOT_DETECTED and rep.evidence["inconclusive"]


def test_probes(make_lab):
    lab = make_lab()
    rew = probe_content_rewrite(lab)
    assert rew.detected and rew.evidence["altered"] == 2
    received = [p["received"] for p in rew.evidence["pairs"]]
    assert any(b"\x24\x00\x99\xde\x6c\x3e" in r for r in received)
    assert any(b"/ben/sh" in r for r in received)
    lim = probe_connection_limit(lab, n=20)
    assert lim.detected and lim.evidence["limit"] == 14  # one slot used by the rewrite probe
    no_wall = make_lab(wall=False)
    assert probe_connection_limit(no_wall, n=20).verdict == NOT_DETECTED
    assert probe_content_rewrite(no_wall).verdict == NOT_DETECTED


def test_fresh_connection_limit_is_fifteen(lab):
    assert probe_connection_limit(lab, n=20).evidence["limit"] == 15


def test_scan_and_classify_finds_monitor(lab):
    ranked = _sebek_top(lab.host)
    top, score = ranked[0]
    assert top.name == lab.monitor.config.module_name and score == 1.0
    others = {c.name: s for c, s in ranked[1:]}
    assert all(s < 2 / 3 for s in others.values())


def test_whitelisted_numeric_module_not_flagged(make_lab):
    lab = make_lab(sebek=None, modules=["8390"])
    assert detect_module_scan(lab.host).verdict == NOT_DETECTED


def test_secrets_and_stored_read(lab):
    cfg = lab.monitor.config
    top, _ = _sebek_top(lab.host)[0]
    truth = (cfg.magic, cfg.src_port, cfg.dst_port, cfg.dst_ip)
    assert truth in [g.as_tuple() for g in extract_secrets(top, lab.host.memory)[:5]]
    assert stored_original_read(top, lab.host.memory) == 0xC0132ECC


def test_syscall_anomaly(make_lab):
    assert detect_syscall_anomaly(make_lab().host).detected
    assert detect_syscall_anomaly(make_lab(sebek=None).host).verdict == NOT_DETECTED


def test_cleanup_jump_and_privilege(lab):
    top, _ = _sebek_top(lab.host)[0]
    with pytest.raises(PrivilegeError):
        call_kernel_address(lab.host, top.cleanup_addr, uid=1000)
    call_kernel_address(lab.host, top.cleanup_addr)
    assert lab.host.table[NR_READ] == 0xC0132ECC
    before = lab.collector.record_count
    lab.host.exec(1, "/bin/cat", ["cat", "/etc/passwd"], fd_plan={1: "/dev/null"})
    lab.settle()
    assert lab.collector.record_count == before


def test_wrong_jump_crashes(lab):
    top, _ = _sebek_top(lab.host)[0]
    with pytest.raises(KernelFault):
        call_kernel_address(lab.host, top.base + 0x3000)


def test_reboot_disables(lab):
    fresh = disable_by_reboot(lab.host)
    assert detect_syscall_anomaly(fresh).verdict == NOT_DETECTED
    with pytest.raises(PrivilegeError):
        disable_by_reboot(fresh, uid=5)


def test_removal_tool_end_to_end(lab):
    host = lab.host
    host.write_file(1, "/tmp/nb", Image("nosebreak-tool").to_bytes())
    host.chmod(1, "/tmp/nb", 0o755)
    child = host.exec(1, "/tmp/nb", ["nb"], fd_plan={1: "/tmp/nb.out"})
    assert child.exit_status == 0
    report = json.loads(bytes(host.fs.lookup("/tmp/nb.out").content))
    cfg = lab.monitor.config
    assert report["found"] and report["disabled"] and report["after"] == NOT_DETECTED
    assert [cfg.magic, cfg.src_port, cfg.dst_port, cfg.dst_ip] in report["secrets"]


def test_removal_tool_finds_nothing_on_clean_host(make_lab):
    host = make_lab(sebek=None).host
    host.write_file(1, "/tmp/nb", Image("nosebreak-tool").to_bytes())
    host.chmod(1, "/tmp/nb", 0o755)
    assert host.exec(1, "/tmp/nb", ["nb"], fd_plan={1: "/dev/null"}).exit_status == 2


def test_decoys_dilute_real_commands(lab):
    real = [["/bin/cat", "/etc/passwd"], ["/usr/bin/id"]]
    plan = DecoyPlan(shadow_decoy=True, copy_binaries=["/bin/ls"], fork_churn=5,
                     real_commands=real, dummies_per_real=99)
    before = len(lab.collector.records)
    actions = generate_decoys(lab.host, plan)
    lab.settle()
    kinds = [a.kind for a in actions]
    runs = kinds.count("real") + kinds.count("dummy")
    assert kinds.count("real") / runs <= 0.01
    assert {"shadow", "copy-exec", "fork"} <= set(kinds)
    assert len(lab.collector.records) > before
    assert generate_decoys(lab.host, DecoyPlan()) == []


def test_randomized_install_is_found(make_lab):
    cfg = SebekConfig.randomized(42)
    lab = make_lab(sebek=cfg.to_dict())
    top, score = _sebek_top(lab.host)[0]
    assert top.name == cfg.module_name and score == 1.0


def test_registry(make_lab):
    with pytest.raises(LookupFailure):
        run_technique(make_lab(), "telepathy")
    reports = detect_all(make_lab(sebek={"version": "v216"}))
    assert {r.technique for r in reports if r.detected} >= {
        "counter_regression", "syscall_anomaly", "module_scan", "dd_rtt",
        "content_rewrite", "connection_limit"}


def test_scan_empty_region(host):
    assert scan_hidden_modules(host.memory) == []
    assert classify_sebek([], host.memory) == []


def test_scan_has_no_false_headers(make_lab):
    from nosebreak_lab.simkernel.memory import MODULE_BASE, MODULE_END
    lab = make_lab(modules=["8390", "3c59x", "ext3"])
    mem = lab.host.memory
    planted = {m.header_addr for m in lab.host.modules}
    assert len(planted) == 4
    found = {c.header_addr for c in scan_hidden_modules(mem)}
    assert found == planted
    # independent pass over every aligned offset, from the 24-byte layout alone
    raw = mem.read(MODULE_BASE, MODULE_END - MODULE_BASE)
    words = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    lo, hi = MODULE_BASE, MODULE_END
    maybe = np.nonzero((words[2:-3] > 0) & (words[1:-4] >= lo) & (words[1:-4] < hi))[0]
    assert planted <= {lo + 4 * i for i in maybe.tolist()}
    accidental = set()
    for i in maybe.tolist():
        nxt, name, size, flags, init, clean = struct.unpack_from("<6I", raw, 4 * i)
        hdr = lo + 4 * i
        if size > 1 << 20 or flags > 0xFF or hdr + size > hi or (nxt and not lo <= nxt < hi):
            continue
        if not all(hdr + 24 <= p < hdr + size for p in (name, init, clean)):
            continue
        text = raw[name - lo:].split(b"\0", 1)[0]
        if text and all(0x21 <= c < 0x7F for c in text) and hdr not in planted:
            accidental.add(hdr)
    assert accidental == set()


def test_zeroed_var_block_is_an_extraction_error(lab):
    from nosebreak_lab.errors import ExtractionError
    top, _ = _sebek_top(lab.host)[0]
    start = top.base + top.size - 0x400
    lab.host.memory.write(start, bytes(256))
    with pytest.raises(ExtractionError):
        extract_secrets(top, lab.host.memory)


def test_v217_no_delta_before_reads(lab):
    assert detect_proc_discrepancy(lab.host).verdict == NOT_DETECTED
