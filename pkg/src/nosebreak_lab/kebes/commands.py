"""Command handlers shipped to the server with ADDCOMMAND.

Each handler is sent as source text and compiled inside the server, so it
must be self-contained: everything it touches comes through ``api``.  No
handler reads a file through read(); content comes from mmap, and output
goes out through write paths only.
"""


def LISTDIR(api, path):
    return api.listdir(path)


def FILEINFO(api, path):
    return api.stat(path)


def CREATEFILE(api, path, data, mode=0o644):
    if isinstance(data, str):
        data = data.encode()
    n = api.write(path, data)
    api.chmod(path, mode)
    return n


def SYSINFO(api):
    return {"uid": api.uid, "euid": api.euid, "pid": api.pid,
            "hostname": api.hostname, "ip": api.ip, "time": api.now()}


def READFILE(api, path):
    return api.mmap(path)


def DELETE(api, path, passes=8):
    info = api.stat(path)
    if info["kind"] != "regular":
        api.unsupported(f"{path}: cannot securely delete a {info['kind']} node")
    size = info["size"]
    directory = path.rsplit("/", 1)[0] or "/"
    current = path
    for _ in range(passes):
        renamed = directory.rstrip("/") + "/" + api.random_name(12)
        api.rename(current, renamed)
        current = renamed
        api.overwrite(current, api.rng.randbytes(size + api.rng.randint(1, 64)))
        api.fsync(current)
    api.unlink(current)
    return {"path": path, "passes": passes}


def EXECUTE(api, path, argv=None, stdin=b""):
    if isinstance(stdin, str):
        stdin = stdin.encode()
    names = ["/tmp/." + api.random_name(10) for _ in range(3)]
    stdin_path, out_path, err_path = names
    try:
        api.write(stdin_path, stdin)
        api.write(out_path, b"")
        api.write(err_path, b"")
        pid, status = api.exec(path, list(argv or [path]),
                               {0: stdin_path, 1: out_path, 2: err_path})
        output, errors = api.mmap(out_path), api.mmap(err_path)
    finally:
        delete = api.command("DELETE")
        for name in names:
            if api.exists(name):
                delete(name)
    return {"pid": pid, "status": status, "output": output, "errors": errors}


def EXECUTEBINARY(api, blob=None, argv=None, name_hint=None, copy_from=None):
    if copy_from is not None:
        blob = api.mmap(copy_from)
    if blob is None:
        api.unsupported("EXECUTEBINARY needs a blob or copy_from")
    path = "/tmp/" + (name_hint or api.random_name(12))
    api.write(path, blob)
    api.chmod(path, 0o755)
    try:
        return api.command("EXECUTE")(path, [path] + list(argv or []), b"")
    finally:
        if api.exists(path):
            api.command("DELETE")(path)


def SHELLCODE(api, blob):
    return api.shellcode(blob)


TOOLSET = ("LISTDIR", "FILEINFO", "CREATEFILE", "SYSINFO", "READFILE", "DELETE",
           "EXECUTE", "EXECUTEBINARY", "SHELLCODE")


def source_of(name: str) -> str:
    import inspect

    if name not in TOOLSET:
        raise KeyError(name)
    return inspect.getsource(globals()[name])
