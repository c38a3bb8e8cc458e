"""Container engine client over the Docker-compatible HTTP API.

Only the stdlib is used: ``http.client`` over a unix socket or TCP. The engine
endpoint comes from ``DOCKER_HOST`` (``unix:///path`` or ``tcp://host:port``)
and defaults to the local docker socket.
"""

from __future__ import annotations

import http.client
import io
import json
import logging
import os
import socket
import struct
import tarfile
import time
import urllib.parse
from pathlib import Path
from typing import Optional

from ..errors import ExecTransportError, ImageError, SandboxUnavailable
from ..maturity import ExecOutcome
from .base import (SCRIPT_COMMAND, SCRIPT_PATH, HandleState, Network, SandboxHandle, SandboxSpec,
                   split_image_ref, validate_image_ref)

log = logging.getLogger(__name__)

DEFAULT_ENGINE = "unix:///var/run/docker.sock"
ENV_FILE = "/etc/profile.d/setup_env.sh"
_CONNECT_TIMEOUT = 10.0


class _UnixConnection(http.client.HTTPConnection):
    def __init__(self, path: str, timeout: Optional[float]):
        super().__init__("localhost", timeout=timeout)
        self._path = path

    def connect(self):
        sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        sock.settimeout(self.timeout)
        sock.connect(self._path)
        self.sock = sock


def engine_endpoint(explicit: Optional[str] = None) -> str:
    return explicit or os.environ.get("DOCKER_HOST") or DEFAULT_ENGINE


def engine_available(endpoint: Optional[str] = None, timeout: float = 2.0) -> bool:
    try:
        return DockerEngineExecutor(endpoint).ping(timeout)
    except (SandboxUnavailable, ValueError):
        return False


def demux(raw: bytes) -> tuple[bytes, bytes]:
    """Split a multiplexed exec stream (8-byte frame headers) into stdout, stderr."""
    out, err = bytearray(), bytearray()
    pos = 0
    while pos + 8 <= len(raw):
        if raw[pos] not in (0, 1, 2) or raw[pos + 1:pos + 4] != b"\0\0\0":
            break
        kind, size = raw[pos], struct.unpack(">I", raw[pos + 4:pos + 8])[0]
        chunk = raw[pos + 8:pos + 8 + size]
        (err if kind == 2 else out).extend(chunk)
        pos += 8 + size
    if pos < len(raw):
        out.extend(raw[pos:])  # not multiplexed (tty mode) or trailing garbage
    return bytes(out), bytes(err)


def _tar_bytes(files: dict[str, bytes], tree: Optional[tuple[Path, str]] = None) -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tar:
        if tree is not None:
            src, arc = tree
            tar.add(str(src), arcname=arc, filter=_skip_vcs)
        for name, data in files.items():
            info = tarfile.TarInfo(name)
            info.size = len(data)
            info.mode = 0o755
            info.mtime = int(time.time())
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def _skip_vcs(info: tarfile.TarInfo) -> Optional[tarfile.TarInfo]:
    parts = info.name.split("/")
    return None if ".git" in parts else info


class DockerEngineExecutor:
    """One long-lived container per handle; commands run through exec."""

    def __init__(self, endpoint: Optional[str] = None):
        self.endpoint = engine_endpoint(endpoint)
        parsed = urllib.parse.urlparse(self.endpoint)
        if parsed.scheme == "unix":
            self._unix = parsed.path
            self._hostport = None
        elif parsed.scheme in ("tcp", "http"):
            self._unix = None
            self._hostport = (parsed.hostname or "localhost", parsed.port or 2375)
        else:
            raise ValueError(f"unsupported engine endpoint: {self.endpoint}")

    # -- transport ----------------------------------------------------------------

    def _connection(self, timeout: Optional[float]):
        if self._unix:
            return _UnixConnection(self._unix, timeout)
        return http.client.HTTPConnection(*self._hostport, timeout=timeout)

    def _request(self, method: str, path: str, body=None, timeout: Optional[float] = 60.0,
                 content_type: str = "application/json") -> tuple[int, bytes]:
        conn = self._connection(timeout)
        try:
            headers = {}
            if body is not None and not isinstance(body, bytes):
                body = json.dumps(body).encode("utf-8")
            if body is not None:
                headers["Content-Type"] = content_type
            conn.request(method, path, body=body, headers=headers)
            resp = conn.getresponse()
            return resp.status, resp.read()
        finally:
            conn.close()

    def _call(self, method: str, path: str, body=None, timeout: Optional[float] = 60.0,
              ok=(200, 201, 204), exc=SandboxUnavailable, content_type: str = "application/json") -> bytes:
        try:
            status, data = self._request(method, path, body, timeout, content_type)
        except (OSError, http.client.HTTPException) as e:
            raise exc(f"engine request {method} {path} failed: {e}") from e
        if status not in ok:
            raise exc(f"engine returned {status} for {method} {path}: {data[:300]!r}")
        return data

    def ping(self, timeout: float = _CONNECT_TIMEOUT) -> bool:
        try:
            status, data = self._request("GET", "/_ping", timeout=timeout)
        except (OSError, http.client.HTTPException) as e:
            raise SandboxUnavailable(f"container engine unreachable at {self.endpoint}: {e}") from e
        return status == 200

    # -- lifecycle ----------------------------------------------------------------

    def _ensure_image(self, ref: str) -> None:
        try:
            status, _ = self._request("GET", f"/images/{urllib.parse.quote(ref, safe='')}/json")
        except (OSError, http.client.HTTPException) as e:
            raise SandboxUnavailable(str(e)) from e
        if status == 200:
            return
        repo, tag = split_image_ref(ref)
        query = urllib.parse.urlencode({"fromImage": repo, **({"tag": tag} if tag else {})})
        try:
            status, data = self._request("POST", f"/images/create?{query}", timeout=1800)
        except (OSError, http.client.HTTPException) as e:
            raise ImageError(f"pulling {ref} failed: {e}") from e
        if status != 200:
            raise ImageError(f"pulling {ref} failed with status {status}: {data[:300]!r}")
        for line in data.decode("utf-8", "replace").splitlines():
            try:
                event = json.loads(line)
            except ValueError:
                continue
            if isinstance(event, dict) and event.get("error"):
                raise ImageError(f"pulling {ref} failed: {event['error']}")

    def create(self, spec: SandboxSpec) -> SandboxHandle:
        validate_image_ref(spec.base_image)
        if not self.ping():
            raise SandboxUnavailable(f"container engine at {self.endpoint} did not answer the ping")
        self._ensure_image(spec.base_image)
        env = {"PROJECT_ROOT": spec.workdir, "SETUP_ENV_FILE": ENV_FILE, "BASH_ENV": ENV_FILE,
               "DEBIAN_FRONTEND": "noninteractive", **spec.env}
        host_config: dict = {
            "Binds": [f"{m.host_path}:{m.container_path}{':ro' if m.read_only else ''}" for m in spec.mounts],
        }
        if spec.network is Network.DISABLED:
            host_config["NetworkMode"] = "none"
        if spec.memory_limit:
            host_config["Memory"] = spec.memory_limit
        body = {
            "Image": spec.base_image,
            "Cmd": ["sleep", "infinity"],
            "WorkingDir": spec.workdir,
            "Env": [f"{k}={v}" for k, v in env.items()],
            "NetworkDisabled": spec.network is Network.DISABLED,
            "HostConfig": host_config,
            "Labels": {"envmaturity": "1"},
        }
        data = self._call("POST", "/containers/create", body, exc=ImageError)
        cid = json.loads(data)["Id"]
        handle = SandboxHandle(cid, spec)
        try:
            self._call("POST", f"/containers/{cid}/start")
            if spec.repo_path:
                payload = _tar_bytes({}, (Path(spec.repo_path), spec.workdir.lstrip("/")))
                self._call("PUT", f"/containers/{cid}/archive?path=/", payload,
                           content_type="application/x-tar", timeout=600)
        except Exception:
            self.destroy(handle)
            raise
        return handle

    def destroy(self, h: SandboxHandle) -> None:
        if h.state is HandleState.STOPPED:
            return
        h.state = HandleState.STOPPED
        try:
            status, data = self._request("DELETE", f"/containers/{h.id}?force=1&v=1", timeout=60)
            if status not in (200, 204, 404):
                h.warnings.append(f"removing {h.id} returned {status}: {data[:200]!r}")
        except (OSError, http.client.HTTPException) as e:
            h.warnings.append(f"removing {h.id} failed: {e}")
        for w in h.warnings:
            log.warning(w)

    def reset(self, h: SandboxHandle) -> SandboxHandle:
        self.destroy(h)
        fresh = self.create(h.spec)
        return h.successor(fresh.id)

    # -- execution ----------------------------------------------------------------

    def _exec(self, h: SandboxHandle, argv: list[str], label: str, limit: float) -> ExecOutcome:
        h.require_running()
        wrapped = ["timeout", "-k", "5", str(int(max(limit, 1))), *argv]
        body = {"AttachStdout": True, "AttachStderr": True, "Tty": False, "Cmd": wrapped,
                "WorkingDir": h.spec.workdir}
        data = self._call("POST", f"/containers/{h.id}/exec", body, exc=ExecTransportError)
        eid = json.loads(data)["Id"]
        start = time.monotonic()
        raw = self._call("POST", f"/exec/{eid}/start", {"Detach": False, "Tty": False},
                         timeout=limit + 60, exc=ExecTransportError)
        elapsed = time.monotonic() - start
        info = json.loads(self._call("GET", f"/exec/{eid}/json", exc=ExecTransportError))
        code = info.get("ExitCode")
        if code is None:
            raise ExecTransportError(f"exec {eid} finished without an exit code")
        out, err = demux(raw)
        timed_out = code in (124, 137) and elapsed >= limit - 1
        return ExecOutcome.capture(label, int(code), out.decode("utf-8", "replace"),
                                   err.decode("utf-8", "replace"), int(elapsed * 1000), timed_out)

    def run_script(self, h: SandboxHandle, script_text: str, timeout: Optional[float] = None) -> ExecOutcome:
        h.require_running()
        payload = _tar_bytes({SCRIPT_PATH.lstrip("/"): script_text.encode("utf-8")})
        self._call("PUT", f"/containers/{h.id}/archive?path=/", payload,
                   content_type="application/x-tar", exc=ExecTransportError)
        return self._exec(h, ["bash", SCRIPT_PATH], SCRIPT_COMMAND, timeout or h.spec.time_limit)

    def run_command(self, h: SandboxHandle, cmd: str, timeout: Optional[float] = None) -> ExecOutcome:
        return self._exec(h, ["bash", "-c", cmd], cmd, timeout or h.spec.command_time_limit)
