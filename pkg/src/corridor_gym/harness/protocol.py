"""Line-delimited JSON protocol for driving an environment from another process.

One JSON object per line in each direction. Requests::

    {"type": "reset", "seed": 3, "view": "scaled"}   # seed and view optional
    {"type": "step", "actions": {"AC0000": 1}}        # 0 decelerate, 1 hold, 2 accelerate
    {"type": "close"}

Responses to reset/step::

    {"type": "reset" | "step", "time_s": float,
     "observations": {id: [float, ...]}, "rewards": {id: float}, "dones": {id: bool},
     "done": bool, "truncated": bool,
     "events": [{"kind", "id_a", "id_b", "time_s", "distance_m"}],
     "actions": {id: int}, "states": [{"id", "x", "y", "z", "heading", "speed", "accel"}]}

Any bad request gets ``{"type": "error", "error": "..."}`` and the session
stays usable. Floats are written with shortest round-trip formatting, so the
client sees exactly the values computed by the server.
"""

from __future__ import annotations

import io
import json
import logging
import socket
import socketserver
import threading
from typing import Optional

from ..env import CorridorEnv, StepResult, TrajectoryWriter, UseCaseParams
from ..errors import ContractViolation, CorridorGymError, ProtocolError
from ..scenario import Scenario, generate_scenario
from .config import ExperimentConfig

log = logging.getLogger(__name__)

VIEWS = ("raw", "scaled")


def result_message(kind: str, res: StepResult, view: str = "scaled") -> dict:
    return {
        "type": kind,
        "time_s": res.time,
        "observations": {aid: getattr(o, view).tolist() for aid, o in sorted(res.observations.items())},
        "rewards": dict(sorted(res.rewards.items())),
        "dones": dict(sorted(res.dones.items())),
        "done": res.done,
        "truncated": res.truncated,
        "events": res.info["events"],
        "actions": res.info["actions"],
        "states": res.info["states"],
    }


def message_rows(msg: dict) -> list:
    """Trajectory log rows from a reset/step response (same layout as the in-process log)."""
    acts, rews = msg["actions"], msg["rewards"]
    return [[msg["time_s"], s["id"], s["x"], s["y"], s["z"], s["heading"], s["speed"], s["accel"],
             acts.get(s["id"], ""), rews.get(s["id"], "")] for s in msg["states"]]


class Session:
    """One environment instance behind one connection."""

    def __init__(self, scenario: Scenario, params: UseCaseParams):
        self.env = CorridorEnv(scenario, params)
        self.view = "scaled"
        self.started = False
        self.done = False

    def handle(self, req) -> dict:
        if not isinstance(req, dict) or "type" not in req:
            raise ProtocolError("request must be an object with a 'type' field")
        kind = req["type"]
        if kind == "reset":
            seed = req.get("seed")
            if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
                raise ProtocolError(f"seed must be an integer, got {seed!r}")
            view = req.get("view", "scaled")
            if view not in VIEWS:
                raise ProtocolError(f"view must be one of {VIEWS}, got {view!r}")
            self.view = view
            res = self.env.reset(seed=seed)
            self.started, self.done = True, res.done
            return result_message("reset", res, self.view)
        if kind == "step":
            if not self.started:
                raise ProtocolError("step before reset")
            if self.done:
                raise ProtocolError("episode is done; send reset")
            actions = req.get("actions", {})
            if not isinstance(actions, dict):
                raise ProtocolError("actions must be an object mapping aircraft id to 0, 1 or 2")
            for aid, a in actions.items():
                if not isinstance(a, int) or isinstance(a, bool):
                    raise ProtocolError(f"action for {aid!r} must be an integer 0, 1 or 2, got {a!r}")
            res = self.env.step(actions)
            self.done = res.done
            return result_message("step", res, self.view)
        if kind == "close":
            return {"type": "close"}
        raise ProtocolError(f"unknown request type {kind!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv: ProtocolServer = self.server  # type: ignore[assignment]
        session = Session(srv.scenario, srv.params)
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                req = json.loads(line)
                resp = session.handle(req)
            except json.JSONDecodeError as exc:
                resp = {"type": "error", "error": f"malformed JSON: {exc}"}
            except (ProtocolError, ContractViolation, CorridorGymError) as exc:
                resp = {"type": "error", "error": str(exc)}
            self.wfile.write((json.dumps(resp, allow_nan=False) + "\n").encode())
            self.wfile.flush()
            if resp["type"] == "close":
                break


class ProtocolServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, scenario: Scenario, params: UseCaseParams, host: str = "127.0.0.1", port: int = 0):
        self.scenario = scenario
        self.params = params.validate()
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> threading.Thread:
        th = threading.Thread(target=self.serve_forever, daemon=True)
        th.start()
        return th

    def stop(self):
        self.shutdown()
        self.server_close()


def serve_protocol(cfg: ExperimentConfig, port: int = 0, host: str = "127.0.0.1",
                   scenario: Optional[Scenario] = None, background: bool = True) -> ProtocolServer:
    """Start a server for ``cfg``'s scenario; each connection gets its own environment."""
    scenario = scenario or generate_scenario(cfg.scenario, seed=cfg.seed)
    server = ProtocolServer(scenario, cfg.usecase.params(), host, port)
    log.info("serving on %s:%d", host, server.port)
    if background:
        server.start()
    else:
        try:
            server.serve_forever()
        finally:
            server.server_close()
    return server


class ProtocolClient:
    """Blocking client; raises :class:`ProtocolError` on error responses unless ``raw`` is set."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def request(self, msg: dict, raw: bool = False) -> dict:
        self.sock.sendall((json.dumps(msg) + "\n").encode())
        line = self.rfile.readline()
        if not line:
            raise ProtocolError("server closed the connection")
        resp = json.loads(line)
        if resp.get("type") == "error" and not raw:
            raise ProtocolError(resp["error"])
        return resp

    def reset(self, seed: Optional[int] = None, view: str = "scaled") -> dict:
        return self.request({"type": "reset", "seed": seed, "view": view})

    def step(self, actions: dict) -> dict:
        return self.request({"type": "step", "actions": actions})

    def close(self):
        try:
            self.request({"type": "close"})
        except (OSError, ProtocolError):
            pass
        self.rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def hold_client_trajectory(port: int, seed: Optional[int] = None, host: str = "127.0.0.1") -> str:
    """Fly an episode with Hold for every aircraft over the wire and return its trajectory log."""
    buf = io.StringIO()
    writer = TrajectoryWriter(buf)
    with ProtocolClient(host, port) as client:
        msg = client.reset(seed=seed)
        writer.write_rows(message_rows(msg))
        while not msg["done"]:
            ids = [s["id"] for s in msg["states"] if s["id"] in msg["dones"] and not msg["dones"][s["id"]]]
            msg = client.step({aid: 1 for aid in ids})
            writer.write_rows(message_rows(msg))
    return buf.getvalue()
