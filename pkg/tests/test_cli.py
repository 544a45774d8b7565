import json
import socket
import subprocess
import sys
import time

import pytest

from nosebreak_lab.cli import kebes_client_main, lab_main, nosebreak_main, parse_script
from nosebreak_lab.errors import LabError


@pytest.fixture
def state(tmp_path):
    def make(*extra):
        p = tmp_path / f"state{len(list(tmp_path.iterdir()))}.json"
        assert lab_main(["init-state", str(p), *extra]) == 0
        return p
    return make


def test_detect_json(state, capsys):
    assert nosebreak_main(["detect", "--host", str(state("--sebek", "v216")),
                           "--technique", "counter_regression", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out[0]["technique"] == "counter_regression" and out[0]["verdict"] == "detected"


def test_detect_plain_text(state, capsys):
    assert nosebreak_main(["detect", "--host", str(state("--sebek", "none")),
                           "--technique", "syscall_anomaly"]) == 0
    assert "not_detected" in capsys.readouterr().out


def test_detect_bad_state(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("[")
    assert nosebreak_main(["detect", "--host", str(p), "--all"]) == 2
    assert "cannot read lab state" in capsys.readouterr().err


def test_lab_run_builtin(tmp_path, capsys):
    rep, pcap = tmp_path / "r.json", tmp_path / "c.pcap"
    assert lab_main(["run", "nosebreak-full", "--seed", "2", "--report", str(rep),
                     "--pcap", str(pcap)]) == 0
    assert json.loads(rep.read_text())["passed"] is True
    assert pcap.stat().st_size > 24
    assert "passed=True" in capsys.readouterr().out


def test_lab_run_missing_file(tmp_path, capsys):
    assert lab_main(["run", str(tmp_path / "none.json"), "--report", str(tmp_path / "r")]) == 2


def test_parse_script():
    calls = parse_script('# comment\n["LISTDIR", "/tmp"]\n\n["CREATEFILE", "/tmp/x", {"hex": "4142"}]\n')
    assert calls == [("LISTDIR", ["/tmp"]), ("CREATEFILE", ["/tmp/x", b"AB"])]
    with pytest.raises(LabError):
        parse_script("{}")


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_live_server_and_client(state, tmp_path, capsys):
    port = _free_port()
    proc = subprocess.Popen([sys.executable, "-c",
                             "import sys; from nosebreak_lab.cli import kebes_server_main; "
                             "sys.exit(kebes_server_main(sys.argv[1:]))",
                             "--listen", str(port), "--host", str(state())],
                            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        deadline = time.time() + 30
        while time.time() < deadline:
            try:
                socket.create_connection(("127.0.0.1", port), timeout=0.5).close()
                break
            except OSError:
                time.sleep(0.1)
        script = tmp_path / "cmds.txt"
        script.write_text('["SYSINFO"]\n["EXECUTE", "/bin/echo", ["echo", "live"], ""]\n')
        code = kebes_client_main(["--connect", f"127.0.0.1:{port}", "--script", str(script),
                                  "--seed", "1"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out[0]["result"]["uid"] == 33
        assert bytes.fromhex(out[1]["result"]["output"]) == b"live\n"
    finally:
        proc.terminate()
        proc.wait(10)
