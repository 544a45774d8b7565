import hashlib
import random

import pytest

from nosebreak_lab.errors import ChannelError, PolicyError
from nosebreak_lab.forensics import audit_deletion
from nosebreak_lab.kebes import KebesClient, RemoteError, SimTransport, commands, shellcode, wire
from nosebreak_lab.kebes.crypt import FrameReader, Session, parse_public
from nosebreak_lab.kebes.entropy import (DIGEST_SPAN, POOL_BYTES, EntropyPool, file_digest,
                                         gather_entropy)
from nosebreak_lab.kebes.server import ERROR, OK, ServerSession
from nosebreak_lab.simkernel import Image, boot

PORT = 31337


def start_server(lab, uid=0, port=PORT, seed="t"):
    host = lab.host
    host.write_file(1, "/usr/sbin/ks", Image("kebes-server").to_bytes())
    host.chmod(1, "/usr/sbin/ks", 0o755)
    parent = host.spawn("/bin/sh", uid)
    host.exec(parent.pid, "/usr/sbin/ks", ["ks", str(port), seed])
    lab.settle()


def connect(lab, n=0, port=PORT, toolset=True):
    t = SimTransport(lab, lab.host.ip, port, client_ip=f"192.0.2.{10 + n}", client_port=40000 + n)
    client = KebesClient(t, seed=f"c{n}")
    client.handshake()
    if toolset:
        client.add_toolset()
    return client


@pytest.fixture
def session(lab):
    start_server(lab)
    return lab, connect(lab)


def _server_pids(lab):
    from nosebreak_lab.kebes.server import KebesServer, SessionHandler
    return {pid for pid, s in lab.host.services.items()
            if isinstance(s, (KebesServer, SessionHandler))}


# -- registry and dispatch ---------------------------------------------------

def test_fresh_registry_only_addcommand(lab):
    start_server(lab)
    client = connect(lab, toolset=False)
    tag, status, msg = client.batch([("LISTDIR", ["/tmp"])])[0]
    assert status == ERROR and "unknown command" in msg
    client.add_command("LISTDIR")
    assert isinstance(client.call("LISTDIR", "/tmp"), list)


def test_registry_isolation(lab):
    start_server(lab)
    a = connect(lab, 0)
    b = connect(lab, 1, toolset=False)
    assert a.batch([("SYSINFO", [])])[0][1] == OK
    assert b.batch([("SYSINFO", [])])[0][1] == ERROR


def test_batch_tags_preserved(session):
    lab, client = session
    replies = client.batch([("SYSINFO", []), ("LISTDIR", ["/"]), ("FILEINFO", ["/etc/passwd"])])
    assert [r[0] for r in replies] == [b"t%06d" % i for i in range(len(commands.TOOLSET) + 1,
                                                                   len(commands.TOOLSET) + 4)]
    assert all(r[1] == OK for r in replies)


def test_basics(session):
    lab, client = session
    host = lab.host
    for name in ("a", "b"):
        client.call("CREATEFILE", f"/tmp/{name}.x", b"12345")
    assert {"a.x", "b.x"} <= set(client.call("LISTDIR", "/tmp"))
    assert client.call("FILEINFO", "/tmp/a.x")["size"] == 5
    info = client.call("SYSINFO")
    assert info["uid"] == 0 and info["hostname"] == host.hostname
    with pytest.raises(RemoteError):
        client.call("FILEINFO", "/nope")


def test_readfile(session):
    lab, client = session
    before = lab.collector.record_count
    assert client.call("READFILE", "/etc/passwd") == bytes(lab.host.fs.lookup("/etc/passwd").content)
    client.call("CREATEFILE", "/tmp/empty", b"")
    assert client.call("READFILE", "/tmp/empty") == b""
    with pytest.raises(RemoteError, match="UnsupportedMapping"):
        client.call("READFILE", "/proc/net/dev")
    lab.settle()
    assert lab.collector.record_count == before


def test_secure_delete_leaves_no_runs(session):
    lab, client = session
    host = lab.host
    original = bytes(range(256)) * 4
    client.call("CREATEFILE", "/tmp/secret", original)
    ino = host.fs.lookup("/tmp/secret").ino
    since = len(host.fs.versions(ino))
    assert client.call("DELETE", "/tmp/secret")["passes"] == 8
    assert not host.fs.exists("/tmp/secret")
    assert audit_deletion(host.fs, ino, original, since) == []
    with pytest.raises(RemoteError):
        client.call("DELETE", "/tmp/secret")
    with pytest.raises(RemoteError):
        client.call("DELETE", "/dev/zero")


def test_forensic_oracle_sees_plain_unlink(lab):
    host = lab.host
    original = bytes(range(256)) * 4
    host.write_file(1, "/tmp/plain", original)
    ino = host.fs.lookup("/tmp/plain").ino
    host.unlink(1, "/tmp/plain")
    assert audit_deletion(host.fs, ino, original, 0) != []


def test_execute(session):
    lab, client = session
    before = set(lab.host.fs.walk("/tmp"))
    r = client.call("EXECUTE", "/bin/echo", ["echo", "ok"], b"")
    assert r["status"] == 0 and r["output"] == b"ok\n"
    r = client.call("EXECUTE", "/bin/cat", ["cat"], b"")
    assert r["status"] == 0 and r["output"] == b""
    assert set(lab.host.fs.walk("/tmp")) == before
    with pytest.raises(RemoteError):
        client.call("EXECUTE", "/bin/nothing", ["x"], b"")


def test_execute_logs_only_library_load(session):
    lab, client = session
    lab.settle()
    before = len(lab.collector.records)
    client.call("EXECUTE", "/usr/bin/uptime", ["uptime"], b"")
    lab.settle()
    new = lab.collector.records[before:]
    assert len(new) == 1 and new[0].command_name == "uptime"


def test_server_never_reads(session):
    lab, client = session
    client.call("READFILE", "/etc/passwd")
    client.call("EXECUTE", "/bin/echo", ["echo", "x"], b"")
    client.call("CREATEFILE", "/tmp/gone", b"z" * 100)
    client.call("DELETE", "/tmp/gone")
    for pid in _server_pids(lab):
        assert lab.host.reads_by(pid) == 0


def test_execute_binary_random_name(session):
    lab, client = session
    lab.settle()
    before = len(lab.collector.records)
    blob = Image("cat", body=b"distinctive-tool-body" * 8).to_bytes()
    r = client.call("EXECUTEBINARY", blob, ["/etc/hostname"])
    lab.settle()
    names = {rec.command_name for rec in lab.collector.records[before:]}
    assert r["status"] == 0 and r["output"] == b"honey\n"
    assert names and all(len(n) == 12 and n != "cat" for n in names)
    assert not any(blob in b for b in lab.host.fs.disk_blobs())


def test_execute_binary_copy_variant(session):
    lab, client = session
    copied = client.call("EXECUTEBINARY", None, ["/"], None, "/bin/ls")
    direct = client.call("EXECUTE", "/bin/ls", ["ls", "/"], b"")
    assert copied["output"] == direct["output"] != b""


def test_shellcode_exec(session):
    lab, client = session
    writes = len(lab.host.fs.history)
    assert client.call("SHELLCODE", shellcode.assemble(["uid"])) == 0
    assert len(lab.host.fs.history) == writes
    with pytest.raises(RemoteError):
        client.call("SHELLCODE", b"\xff")
    with pytest.raises(RemoteError, match="PolicyError"):
        client.call("SHELLCODE", shellcode.assemble(["write", "/tmp/x", b"y"]))
    assert client.call("SYSINFO")["uid"] == 0  # server survived


# -- blob interpreter --------------------------------------------------------

class _Api:
    uid, euid, pid, hostname = 33, 33, 7, "hp"

    def now(self):
        return 99


@pytest.mark.parametrize("op", sorted(shellcode.DISK_OPS))
def test_blob_policy_rejects_every_disk_op(op):
    with pytest.raises(PolicyError):
        shellcode.run(shellcode.assemble(["push", 1], [op]), _Api())


def test_blob_ops():
    blob = shellcode.assemble(["hostname"], ["push", ":"], ["concat"], ["pid"], ["drop"])
    assert shellcode.run(blob, _Api()) == "hp:"
    assert shellcode.run(shellcode.assemble(["time"]), _Api()) == 99
    for bad in (shellcode.assemble(["concat"]), shellcode.assemble(["fly"]), wire.encode(5)):
        with pytest.raises(ValueError):
            shellcode.run(bad, _Api())


# -- entropy -----------------------------------------------------------------

def test_pool_size_constant():
    pool = EntropyPool()
    for i in range(300):
        pool.stir(["x", i], i, i)
        assert len(pool.snapshot()) == POOL_BYTES == 1960 // 8


def test_large_file_digests_tail(host):
    blob = bytes(range(256)) * (2 * DIGEST_SPAN // 256)
    host.write_file(1, "/var/big", blob)
    assert file_digest(host, 1, "/var/big") == hashlib.sha1(blob[-1048576:]).digest()
    host.write_file(1, "/var/small", b"abc")
    assert file_digest(host, 1, "/var/small") == hashlib.sha1(b"abc").digest()


def test_empty_trees_still_stir(host):
    pool = gather_entropy(host, 1, roots=("/nonexistent-a", "/nonexistent-b"))
    assert any(pool.snapshot()) and pool.stir_counter >= 1


def test_scheduler_seeds_give_distinct_pools(host):
    pools = {gather_entropy(host, 1, scheduler_seed=s).snapshot() for s in range(100)}
    assert len(pools) == 100


def test_same_seed_same_pool():
    a = gather_entropy(boot(), 1, scheduler_seed=5).snapshot()
    assert gather_entropy(boot(), 1, scheduler_seed=5).snapshot() == a


def test_live_mode_runs(host):
    pool = gather_entropy(host, 1, live=True)
    assert any(pool.snapshot())


# -- in-band robustness and the relay demonstrator ----------------------------

def _handshake(a, b):
    a.complete(b.dh_public)
    b.complete(a.dh_public)


def test_server_session_rejects_garbage_message(host):
    srv = ServerSession(host, 1, random.Random(1))
    cli = Session.from_seed("client", 2)
    srv.feed(cli.hello())
    cli.complete(srv.crypt.dh_public)
    with pytest.raises(ChannelError):
        srv.feed(cli.seal(wire.encode({"not": "a list"})))


def test_active_relay_reads_everything(host):
    # the exchange is unauthenticated: a relay holding both halves sees plaintext
    server = ServerSession(host, 1, random.Random("srv"))
    client = Session.from_seed("client", "cli")
    to_client = Session.from_seed("server", "relay-a")
    to_server = Session.from_seed("client", "relay-b")
    _handshake(client, to_client)
    reader = FrameReader()
    first = server.feed(to_server.hello())
    assert first == b""
    to_server.complete(parse_public(reader.feed(server.hello())[0]))
    command = wire.encode([[b"t1", "ADDCOMMAND", ["SYSINFO", commands.source_of("SYSINFO")]]])
    seen = to_client.open(client.seal(command))
    assert wire.decode(seen)[0][1] == "ADDCOMMAND"
    reply_frames = FrameReader().feed(server.feed(to_server.seal(seen)))
    reply = wire.decode(to_server.open_body(reply_frames[0]))
    assert reply[0] == b"t1" and reply[1] == OK
    assert client.shared_key != server.crypt.shared_key
