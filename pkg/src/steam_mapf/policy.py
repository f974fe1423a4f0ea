"""Local observations, the built-in greedy follower, and the external policy process."""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import PolicyTimeout, ProcessExited, ProtocolViolation
from .grid import ACTION_DELTAS, ACTION_NAMES, ACTIONS, N_ACTIONS, Action, GridMap, Vertex


@dataclass(frozen=True, eq=False)
class Observation:
    obstacle: np.ndarray  # (R, R) bool, out-of-map counts as blocked
    agents: np.ndarray  # (R, R) bool, other agents only
    cost: np.ndarray  # (R, R) float, +inf sentinel
    center: Vertex
    goal: Vertex

    @property
    def window(self) -> int:
        return self.cost.shape[0]

    def to_message(self) -> dict:
        return {
            "obstacle": self.obstacle.astype(int).ravel().tolist(),
            "agents": self.agents.astype(int).ravel().tolist(),
            "cost": [("inf" if math.isinf(x) else float(x)) for x in self.cost.ravel().tolist()],
            "window": int(self.window),
            "action_order": list(ACTION_NAMES),
        }

    @classmethod
    def from_message(cls, msg: dict, center=(0, 0), goal=(0, 0)) -> "Observation":
        r = int(msg["window"])
        cost = np.array([np.inf if x == "inf" else float(x) for x in msg["cost"]]).reshape(r, r)
        return cls(
            np.array(msg["obstacle"], dtype=bool).reshape(r, r),
            np.array(msg["agents"], dtype=bool).reshape(r, r),
            cost,
            tuple(center),
            tuple(goal),
        )


@dataclass
class PolicyConfig:
    kind: str = "greedy"  # "greedy" | "external"
    temperature: float = 1.0
    blocked_logit: float = 1e6
    occupied_penalty: float = 2.0
    selection: str = "argmax"  # "argmax" | "sample"
    window: int = 11
    command: Optional[List[str]] = None
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("greedy", "external"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.selection not in ("argmax", "sample"):
            raise ValueError(f"unknown selection mode {self.selection!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.blocked_logit < 1e3:
            raise ValueError("blocked_logit must be at least 1e3")
        if self.occupied_penalty < 0:
            raise ValueError("occupied_penalty must be non-negative")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.kind == "external" and not self.command:
            raise ValueError("external policy needs a command")

    def to_dict(self) -> dict:
        return asdict(self)


def build_observation(
    grid: GridMap,
    positions: Sequence[Vertex],
    agent_index: int,
    cost_channel: np.ndarray,
    window: int,
    goal: Vertex | None = None,
    occupancy: np.ndarray | None = None,
) -> Observation:
    """Crop obstacle/agent channels around ``positions[agent_index]``.

    ``occupancy`` is an optional precomputed (H, W) bool grid of all agents.
    """
    center = tuple(positions[agent_index])
    rad = window // 2
    obstacle = np.ones((window, window), dtype=bool)
    agents = np.zeros((window, window), dtype=bool)
    r0, r1 = max(center[0] - rad, 0), min(center[0] + rad + 1, grid.height)
    q0, q1 = max(center[1] - rad, 0), min(center[1] + rad + 1, grid.width)
    sr = slice(r0 - center[0] + rad, r1 - center[0] + rad)
    sc = slice(q0 - center[1] + rad, q1 - center[1] + rad)
    obstacle[sr, sc] = grid.blocked[r0:r1, q0:q1]
    if occupancy is None:
        for k, p in enumerate(positions):
            dr, dc = p[0] - center[0], p[1] - center[1]
            if k != agent_index and abs(dr) <= rad and abs(dc) <= rad:
                agents[dr + rad, dc + rad] = True
    else:
        agents[sr, sc] = occupancy[r0:r1, q0:q1]
        agents[rad, rad] = False
    return Observation(obstacle, agents, cost_channel, center, tuple(goal) if goal is not None else center)


def greedy_logits(obs: Observation, cfg: PolicyConfig) -> np.ndarray:
    """Shortest-path follower: prefer the neighbour with the lowest relative cost."""
    rad = obs.window // 2
    out = np.empty(N_ACTIONS)
    for a in ACTIONS:
        dr, dc = ACTION_DELTAS[a]
        r, c = rad + dr, rad + dc
        if a == Action.WAIT:
            out[a] = 0.0
            continue
        if obs.obstacle[r, c] or not np.isfinite(obs.cost[r, c]):
            out[a] = -cfg.blocked_logit
            continue
        val = -cfg.temperature * obs.cost[r, c]
        if obs.agents[r, c]:
            val -= cfg.occupied_penalty
        out[a] = val
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def select_action(logits: np.ndarray, cfg: PolicyConfig, rng: np.random.Generator | None = None) -> Action:
    if cfg.selection == "argmax":
        # np.argmax returns the first maximum, i.e. canonical-order tie-break
        return Action(int(np.argmax(logits)))
    if rng is None:
        raise ValueError("sample mode needs a generator")
    p = softmax(logits)
    return Action(int(rng.choice(N_ACTIONS, p=p)))


class ExternalPolicy:
    """Line-delimited JSON policy process on stdin/stdout.

    Request: ``{"step": t, "observations": [...]}``; reply: ``{"logits": [[5 floats], ...]}``.
    """

    def __init__(self, command: Sequence[str], timeout: float = 10.0):
        self.command = list(command)
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProcessExited(f"cannot start policy {self.command[0]!r}: {exc}") from None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def query(self, step: int, batch: Sequence[Observation]) -> List[np.ndarray]:
        req = {"step": int(step), "observations": [o.to_message() for o in batch]}
        try:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            raise ProcessExited(f"policy process exited (code {self._proc.poll()})") from None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise PolicyTimeout(f"no reply within {self.timeout}s at step {step}") from None
        if line is None:
            self._proc.wait()
            raise ProcessExited(f"policy process exited (code {self._proc.returncode})")
        return parse_reply(line, len(batch))

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def kill(self):
        self._proc.kill()
        self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_reply(line: str, expected: int) -> List[np.ndarray]:
    try:
        doc = json.loads(line)
        rows = doc["logits"]
    except (ValueError, KeyError, TypeError):
        raise ProtocolViolation(f"malformed reply: {line[:200]!r}") from None
    if not isinstance(rows, list) or len(rows) != expected:
        raise ProtocolViolation(f"expected {expected} logit vectors, got {len(rows) if isinstance(rows, list) else rows!r}")
    out = []
    for row in rows:
        if not isinstance(row, list) or len(row) != N_ACTIONS:
            raise ProtocolViolation(f"logit vector must have {N_ACTIONS} entries: {row!r}")
        try:
            vec = np.array([float(x) for x in row])
        except (TypeError, ValueError):
            raise ProtocolViolation(f"non-numeric logits: {row!r}") from None
        if not np.isfinite(vec).any():
            raise ProtocolViolation("logit vector has no finite entry")
        out.append(vec)
    return out


def query_external_policy(policy: ExternalPolicy, batch: Sequence[Observation], step: int = 0) -> List[np.ndarray]:
    return policy.query(step, batch)
