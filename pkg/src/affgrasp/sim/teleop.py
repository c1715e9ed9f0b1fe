"""Interactive teleoperation server speaking newline-delimited JSON.

One environment instance per connection; client commands are applied at the
fixed tick and the resulting state is streamed back. A recording buffer can
be started/stopped/saved into the standard session directory layout so
teleoperated play feeds the labeler unmodified.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import threading
import time

import numpy as np

from ..playlog import PlayFrame, PlaySession, RGBDImage, write_session
from .env import Action, EnvConfig, TabletopEnv
from .render import depth_to_mm

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


def _state_message(env: TabletopEnv, tick: int, events: list[str]) -> dict:
    st = env.state
    return {
        "type": "state",
        "tick": tick,
        "tcp": {
            "pos": [float(v) for v in st.gripper.tcp_pose.position],
            "euler": [float(v) for v in st.gripper.tcp_pose.euler],
        },
        "width": float(st.gripper.width),
        "objects": [
            {
                "id": o.object_id,
                "pose": {
                    "pos": [float(v) for v in o.pose.position],
                    "euler": [float(v) for v in o.pose.euler],
                },
                "held": bool(o.held),
            }
            for o in st.objects
        ],
        "drawer": float(st.drawer.displacement) if st.drawer is not None else None,
        "events": list(events),
    }


def _parse_cmd(msg: dict, max_dpos: float, max_deuler: float) -> Action:
    for key in ("dpos", "deuler", "gripper"):
        if key not in msg:
            raise ValueError(f"cmd missing field {key!r}")
    dpos = np.asarray(msg["dpos"], dtype=float)
    deuler = np.asarray(msg["deuler"], dtype=float)
    if dpos.shape != (3,):
        raise ValueError("field 'dpos' must be a 3-vector")
    if deuler.shape != (3,):
        raise ValueError("field 'deuler' must be a 3-vector")
    if msg["gripper"] not in ("open", "close"):
        raise ValueError("field 'gripper' must be 'open' or 'close'")
    return Action(dpos=dpos, deuler=deuler, gripper=msg["gripper"])


class _Connection:
    def __init__(self, server: "TeleopServer", sock: socket.socket):
        self.server = server
        self.sock = sock
        self.inbox: queue.Queue[dict | None] = queue.Queue()
        self.env = TabletopEnv(server.cfg)
        self.env.reset(server.default_seed, task=server.task, object_set=server.object_set)
        self.recording = False
        self.frames: list[PlayFrame] = []
        self.last_gripper = "open"
        self.sessions_saved = 0
        self._wfile = sock.makefile("wb")
        self._lock = threading.Lock()

    def send(self, msg: dict) -> bool:
        try:
            with self._lock:
                self._wfile.write((json.dumps(msg) + "\n").encode())
                self._wfile.flush()
            return True
        except OSError:
            return False

    def _reader(self):
        try:
            with self.sock.makefile("rb") as rfile:
                for raw in rfile:
                    raw = raw.strip()
                    if not raw:
                        continue
                    try:
                        self.inbox.put(json.loads(raw))
                    except json.JSONDecodeError as exc:
                        self.inbox.put({"type": "_malformed", "detail": str(exc)})
        except OSError:
            pass
        self.inbox.put(None)  # disconnect sentinel

    def _record_frame(self, gripper_command: str) -> None:
        st = self.env.state
        rgb_s, depth_s = self.env.render("static")
        rgb_g, depth_g = self.env.render("gripper")
        idx = len(self.frames)
        self.frames.append(
            PlayFrame(
                index=idx,
                timestamp=idx / self.server.tick_hz,
                tcp_pose=st.gripper.tcp_pose.copy(),
                gripper_width=st.gripper.width,
                gripper_command=gripper_command,
                images={
                    "static": RGBDImage(rgb_s, depth_to_mm(depth_s)),
                    "gripper": RGBDImage(rgb_g, depth_to_mm(depth_g)),
                },
            )
        )

    def _handle_control(self, msg: dict) -> Action | None:
        """Apply a non-cmd message; returns an Action only for cmd messages."""
        mtype = msg.get("type")
        if mtype == "_malformed":
            self.send({"type": "error", "msg": f"malformed json: {msg['detail']}"})
        elif mtype == "cmd":
            try:
                action = _parse_cmd(msg, self.server.cfg.max_dpos, self.server.cfg.max_deuler)
                self.last_gripper = action.gripper
                return action
            except ValueError as exc:
                self.send({"type": "error", "msg": str(exc)})
        elif mtype == "reset":
            seed = msg.get("seed", self.server.default_seed)
            if not isinstance(seed, int):
                self.send({"type": "error", "msg": "field 'seed' must be an integer"})
            else:
                self.env.reset(seed, task=self.server.task, object_set=self.server.object_set)
                self.recording = False
                self.frames = []
                self.last_gripper = "open"
        elif mtype == "record":
            self._handle_record(msg)
        else:
            self.send({"type": "error", "msg": f"unknown message type {mtype!r}"})
        return None

    def _handle_record(self, msg: dict) -> None:
        action = msg.get("action")
        if action == "start":
            self.frames = []
            self.recording = True
        elif action == "stop":
            self.recording = False
        elif action == "save":
            path = msg.get("path")
            if not path:
                self.send({"type": "error", "msg": "record save requires field 'path'"})
                return
            if len(self.frames) < 2:
                self.send({"type": "error", "msg": f"only {len(self.frames)} frames recorded"})
                return
            session = PlaySession(
                session_id=f"teleop-{int(time.time())}-{self.sessions_saved}",
                calibs={
                    "static": self.server.cfg.static_calib,
                    "gripper": self.server.cfg.gripper_calib,
                },
                frames=self.frames,
                collector="human",
                environment_id=self.server.task,
                seed=self.server.default_seed,
            )
            try:
                write_session(session, path)
            except Exception as exc:
                self.send({"type": "error", "msg": f"save failed: {exc}"})
                return
            self.sessions_saved += 1
            self.send({"type": "saved", "path": str(path), "frames": len(self.frames)})
        else:
            self.send({"type": "error", "msg": f"unknown record action {action!r}"})

    def run(self):
        self.send({"type": "hello", "version": PROTOCOL_VERSION, "tick_hz": self.server.tick_hz})
        reader = threading.Thread(target=self._reader, daemon=True)
        reader.start()
        dt = 1.0 / self.server.tick_hz
        tick = 0
        alive = True
        while alive and not self.server.stopping.is_set():
            t0 = time.monotonic()
            action = None
            # apply at most one command per tick; control messages drain freely
            while action is None:
                try:
                    msg = self.inbox.get_nowait()
                except queue.Empty:
                    break
                if msg is None:
                    alive = False
                    break
                action = self._handle_control(msg)
            if not alive:
                break
            applied = action or Action(gripper=self.last_gripper)
            _, _, events = self.env.step(applied, want_images=False)
            if self.recording:
                self._record_frame(applied.gripper)
            if not self.send(_state_message(self.env, tick, events)):
                break
            tick += 1
            sleep = dt - (time.monotonic() - t0)
            if sleep > 0:
                time.sleep(sleep)
        self.recording = False
        try:
            self.sock.close()
        except OSError:
            pass


class TeleopServer:
    """Accepts connections and runs one interactive session per connection."""

    def __init__(
        self,
        cfg: EnvConfig | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
        task: str = "grasp",
        object_set=("puck", "cube", "pan"),
        tick_hz: float | None = None,
        default_seed: int = 0,
    ):
        self.cfg = cfg or EnvConfig()
        self.task = task
        self.object_set = object_set
        self.tick_hz = tick_hz or self.cfg.tick_hz
        self.default_seed = default_seed
        self.stopping = threading.Event()
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self._accept_thread: threading.Thread | None = None
        self._conn_threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()

    def start(self) -> "TeleopServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while not self.stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            log.info("teleop connection from %s", addr)
            conn = _Connection(self, sock)
            t = threading.Thread(target=conn.run, daemon=True)
            t.start()
            self._conn_threads.append(t)

    def stop(self):
        self.stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._accept_thread:
            self._accept_thread.join(timeout=2.0)
        for t in self._conn_threads:
            t.join(timeout=2.0)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class TeleopClient:
    """Minimal blocking client for tests and scripted drivers."""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0):
        self.sock = socket.create_connection(address, timeout=timeout)
        self._rfile = self.sock.makefile("rb")
        self.hello = self.recv()
        if self.hello.get("type") != "hello":
            raise RuntimeError(f"expected hello, got {self.hello}")

    def send(self, msg: dict) -> None:
        self.sock.sendall((json.dumps(msg) + "\n").encode())

    def send_cmd(self, dpos=(0, 0, 0), deuler=(0, 0, 0), gripper="open") -> None:
        self.send(
            {"type": "cmd", "dpos": list(dpos), "deuler": list(deuler), "gripper": gripper}
        )

    def recv(self) -> dict:
        line = self._rfile.readline()
        if not line:
            raise ConnectionError("server closed the stream")
        return json.loads(line)

    def recv_until(self, mtype: str, limit: int = 200) -> dict:
        for _ in range(limit):
            msg = self.recv()
            if msg.get("type") == mtype:
                return msg
        raise TimeoutError(f"no {mtype!r} message within {limit} messages")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
