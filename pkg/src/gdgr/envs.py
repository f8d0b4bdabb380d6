"""Desk-scale environment families: lava grid, point-mass maze, 3-D reach.

Each family has an immutable spec, pure step/reward functions, a
:class:`~gdgr.core.DomainTheory` wrapper with batched dynamics, and a
feature encoding for policies.  ``domain_id`` is the FNV-1a hash of the
spec's canonical JSON serialization.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gdgr import kernels
from gdgr.core import (
    ConfigurationError,
    ContinuousBox,
    DiscreteActions,
    DomainDistribution,
    DomainError,
    DomainTheory,
    GoalSpace,
    SamplingError,
    fnv1a64,
    make_rng,
)

# grid headings: index -> (dx, dy); y grows southwards
NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
DIRS = {"N": NORTH, "E": EAST, "S": SOUTH, "W": WEST}
DIR_NAMES = "NESW"
DX = np.array([0, 1, 0, -1])
DY = np.array([-1, 0, 1, 0])

# grid actions
LEFT, RIGHT, FORWARD, STAY = 0, 1, 2, 3
GRID_ACTIONS = ("left", "right", "forward", "stay")

MAX_SAMPLING_ATTEMPTS = 1000


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# feature encodings


@dataclass(frozen=True)
class GridEncoding:
    """(x/w, y/h, one-hot heading, goal offset / size)."""

    width: int
    height: int
    kind: str = "grid"

    @property
    def dim(self) -> int:
        return 8

    @property
    def n_states(self) -> int:
        return self.width * self.height * 4

    def features(self, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        s = np.asarray(states).reshape(-1, 3)
        g = np.broadcast_to(np.asarray(goals).reshape(-1, 2), (s.shape[0], 2))
        out = np.zeros((s.shape[0], 8))
        out[:, 0] = s[:, 0] / self.width
        out[:, 1] = s[:, 1] / self.height
        out[np.arange(s.shape[0]), 2 + s[:, 2].astype(np.int64)] = 1.0
        out[:, 6] = (g[:, 0] - s[:, 0]) / self.width
        out[:, 7] = (g[:, 1] - s[:, 1]) / self.height
        return out

    def index(self, states: np.ndarray) -> np.ndarray:
        s = np.asarray(states).reshape(-1, 3).astype(np.int64)
        return (s[:, 1] * self.width + s[:, 0]) * 4 + s[:, 2]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MazeEncoding:
    """(position / scale, velocity, goal-centre offset / scale)."""

    scale: float = 10.0
    kind: str = "maze"

    @property
    def dim(self) -> int:
        return 6

    def features(self, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        s = np.asarray(states, dtype=np.float64).reshape(-1, 4)
        g = np.broadcast_to(np.asarray(goals).reshape(-1, 2), (s.shape[0], 2))
        centre = np.stack([g[:, 1] + 0.5, g[:, 0] + 0.5], axis=1)
        return np.concatenate([s[:, :2] / self.scale, s[:, 2:4], (centre - s[:, :2]) / self.scale], axis=1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReachEncoding:
    """(effector position, goal offset)."""

    kind: str = "reach"

    @property
    def dim(self) -> int:
        return 6

    def features(self, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        s = np.asarray(states, dtype=np.float64).reshape(-1, 3)
        g = np.broadcast_to(np.asarray(goals, dtype=np.float64).reshape(-1, 3), s.shape)
        return np.concatenate([s, g - s], axis=1)

    def to_dict(self) -> dict:
        return asdict(self)


def encoding_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "grid":
        return GridEncoding(**d)
    if kind == "maze":
        return MazeEncoding(**d)
    if kind == "reach":
        return ReachEncoding(**d)
    raise ConfigurationError(f"unknown encoding kind {kind!r}")


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    width: int = 9
    height: int = 9
    lava_cells: frozenset = frozenset()
    start: tuple = (1, 1, EAST)
    max_steps: int | None = None
    goal_cells: tuple | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("grid dimensions must be positive")
        lava = frozenset(tuple(int(v) for v in c) for c in self.lava_cells)
        object.__setattr__(self, "lava_cells", lava)
        sx, sy, sd = self.start
        sd = DIRS[sd] if isinstance(sd, str) else int(sd)
        object.__setattr__(self, "start", (int(sx), int(sy), sd))
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", 4 * self.width * self.height)
        if self.goal_cells is None:
            cells = tuple(
                (x, y)
                for y in range(self.height)
                for x in range(self.width)
                if (x, y) not in lava and (x, y) != (sx, sy)
            )
            object.__setattr__(self, "goal_cells", cells)
        else:
            object.__setattr__(self, "goal_cells", tuple(tuple(int(v) for v in g) for g in self.goal_cells))
        self.validate()

    def inside(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def validate(self) -> None:
        sx, sy, sd = self.start
        if not self.inside(sx, sy) or sd not in range(4):
            raise ConfigurationError("grid start outside bounds")
        for c in self.lava_cells:
            if not self.inside(*c):
                raise ConfigurationError(f"lava cell {c} outside bounds")
        if (sx, sy) in self.lava_cells:
            raise ConfigurationError("start overlaps lava")
        GoalSpace.discrete(self.goal_cells)
        for g in self.goal_cells:
            if not self.inside(*g) or g in self.lava_cells or g == (sx, sy):
                raise ConfigurationError(f"goal {g} overlaps start/lava or lies outside the grid")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive")

    def lava_array(self) -> np.ndarray:
        arr = np.zeros((self.height, self.width), dtype=np.uint8)
        for x, y in self.lava_cells:
            arr[y, x] = 1
        return arr

    def to_dict(self) -> dict:
        return {
            "family": "grid",
            "width": self.width,
            "height": self.height,
            "lava_cells": sorted([list(c) for c in self.lava_cells]),
            "start": [self.start[0], self.start[1], DIR_NAMES[self.start[2]]],
            "max_steps": self.max_steps,
            "goal_cells": [list(g) for g in self.goal_cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            width=d.get("width", 9),
            height=d.get("height", 9),
            lava_cells=frozenset(tuple(c) for c in d.get("lava_cells", [])),
            start=tuple(d.get("start", (1, 1, "E"))),
            max_steps=d.get("max_steps"),
            goal_cells=tuple(tuple(g) for g in d["goal_cells"]) if d.get("goal_cells") is not None else None,
        )


def grid_reachable(spec: GridSpec) -> set:
    """Cells reachable from the start without touching lava (BFS over cells)."""
    sx, sy, _ = spec.start
    seen = {(sx, sy)}
    q = deque([(sx, sy)])
    while q:
        x, y = q.popleft()
        for d in range(4):
            nx, ny = x + DX[d], y + DY[d]
            if spec.inside(nx, ny) and (nx, ny) not in spec.lava_cells and (nx, ny) not in seen:
                seen.add((int(nx), int(ny)))
                q.append((int(nx), int(ny)))
    return seen


def grid_step(spec: GridSpec, state, action: int, goal=None):
    """One grid transition.

    Returns ``(state', terminal, succeeded)``.  When ``goal`` is None any of
    the spec's goal cells terminates the episode successfully.
    """
    x, y, d = (int(v) for v in state)
    if not spec.inside(x, y):
        raise DomainError(f"state {state} outside the grid")
    if action == LEFT:
        d = (d + 3) % 4
    elif action == RIGHT:
        d = (d + 1) % 4
    elif action == FORWARD:
        nx, ny = x + int(DX[d]), y + int(DY[d])
        if spec.inside(nx, ny):
            x, y = nx, ny
    elif action != STAY:
        raise DomainError(f"unknown grid action {action}")
    if (x, y) in spec.lava_cells:
        return (x, y, d), True, False
    goals = spec.goal_cells if goal is None else [tuple(int(v) for v in goal)]
    if (x, y) in set(goals):
        return (x, y, d), True, True
    return (x, y, d), False, False


def grid_reward(spec: GridSpec, step_count: int, succeeded: bool) -> float:
    """Sparse reward: 1 - 0.9 * step_count / max_steps on success, else 0."""
    if not 0 <= step_count <= spec.max_steps:
        raise DomainError("step_count outside [0, max_steps]")
    if not succeeded:
        return 0.0
    return 1.0 - 0.9 * (step_count / spec.max_steps)


class GridDomain(DomainTheory):
    family = "grid"
    state_dim = 3
    state_dtype = np.int64

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.action_space = DiscreteActions(4)
        self.goal_space = GoalSpace.discrete(spec.goal_cells)
        self.max_steps = spec.max_steps
        self._lava = spec.lava_array()
        self._encoding = GridEncoding(spec.width, spec.height)
        self._domain_id = fnv1a64(canonical_json(spec.to_dict()).encode())

    @property
    def encoding(self) -> GridEncoding:
        return self._encoding

    def initial_state(self) -> np.ndarray:
        return np.asarray(self.spec.start, dtype=np.int64)

    def step_batch(self, states, actions, goals, t):
        s = np.asarray(states, dtype=np.int64)
        a = np.asarray(actions, dtype=np.int64)
        g = np.asarray(goals, dtype=np.int64).reshape(-1, 2)
        x, y, d = s[:, 0].copy(), s[:, 1].copy(), s[:, 2].copy()
        d = np.where(a == LEFT, (d + 3) % 4, np.where(a == RIGHT, (d + 1) % 4, d))
        fwd = a == FORWARD
        nx = np.where(fwd, x + DX[d], x)
        ny = np.where(fwd, y + DY[d], y)
        ok = (nx >= 0) & (nx < self.spec.width) & (ny >= 0) & (ny < self.spec.height)
        x = np.where(ok, nx, x)
        y = np.where(ok, ny, y)
        lava = self._lava[y, x].astype(bool)
        succ = ~lava & (x == g[:, 0]) & (y == g[:, 1])
        term = lava | succ
        rewards = np.where(succ, 1.0 - 0.9 * ((t + 1) / self.max_steps), 0.0)
        return np.stack([x, y, d], axis=1), rewards, term, succ

    def achieved_goal(self, states):
        return np.asarray(states).reshape(-1, 3)[:, :2]

    def is_valid_state(self, state) -> bool:
        x, y, d = (int(v) for v in state)
        return self.spec.inside(x, y) and 0 <= d < 4

    def reward_range(self):
        return 0.0, 1.0


# ---------------------------------------------------------------------------
# point maze


def four_rooms_layout(size: int = 11) -> np.ndarray:
    """Boolean occupancy grid (True = wall) of the four-rooms maze."""
    if size < 7:
        raise ConfigurationError("four-rooms needs size >= 7")
    w = np.zeros((size, size), dtype=bool)
    w[0, :] = w[-1, :] = w[:, 0] = w[:, -1] = True
    mid = size // 2
    w[mid, :] = True
    w[:, mid] = True
    q1, q3 = (1 + mid) // 2, (mid + size - 1) // 2
    # doorways: two in the vertical wall, two in the horizontal wall
    w[q1 - 1, mid] = False
    w[q3 + 1, mid] = False
    w[mid, q1] = False
    w[mid, q3] = False
    return w


def open_layout(size: int) -> np.ndarray:
    w = np.zeros((size, size), dtype=bool)
    w[0, :] = w[-1, :] = w[:, 0] = w[:, -1] = True
    return w


@dataclass(frozen=True)
class MazeSpec:
    size: int = 11
    wall_layout: tuple | None = None
    start: tuple = (1.5, 1.5)
    goal_cells: tuple | None = None
    success_radius: float = 0.5
    dt: float = 0.1
    damping: float = 0.1
    max_force: float = 1.0
    max_steps: int = 300

    def __post_init__(self):
        if not 3 <= self.size <= 64:
            raise ConfigurationError("maze size out of range")
        layout = four_rooms_layout(self.size) if self.wall_layout is None else np.asarray(self.wall_layout, dtype=bool)
        if layout.shape != (self.size, self.size):
            raise ConfigurationError("wall layout shape must be size x size")
        object.__setattr__(self, "wall_layout", tuple(tuple(bool(v) for v in row) for row in layout))
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        if self.goal_cells is None:
            cells = tuple((r, c) for r in range(self.size) for c in range(self.size) if not layout[r, c])
            object.__setattr__(self, "goal_cells", cells)
        else:
            object.__setattr__(self, "goal_cells", tuple(tuple(int(v) for v in g) for g in self.goal_cells))
        self.validate()

    def walls(self) -> np.ndarray:
        return np.asarray(self.wall_layout, dtype=bool)

    def free(self, row: int, col: int) -> bool:
        return 0 <= row < self.size and 0 <= col < self.size and not self.wall_layout[row][col]

    def validate(self) -> None:
        w = self.walls()
        if not (w[0, :].all() and w[-1, :].all() and w[:, 0].all() and w[:, -1].all()):
            raise ConfigurationError("maze walls must form a closed outer boundary")
        sx, sy = self.start
        if not self.free(int(np.floor(sy)), int(np.floor(sx))):
            raise ConfigurationError("maze start lies in a wall")
        GoalSpace.discrete(self.goal_cells)
        for r, c in self.goal_cells:
            if not self.free(r, c):
                raise ConfigurationError(f"maze goal {(r, c)} lies in a wall")
        if not 0.0 <= self.damping < 1.0 or self.dt <= 0 or self.max_force <= 0:
            raise ConfigurationError("invalid maze physics constants")

    def to_dict(self) -> dict:
        return {
            "family": "maze",
            "size": self.size,
            "wall_layout": ["".join("#" if v else "." for v in row) for row in self.wall_layout],
            "start": list(self.start),
            "goal_cells": [list(g) for g in self.goal_cells],
            "success_radius": self.success_radius,
            "dt": self.dt,
            "damping": self.damping,
            "max_force": self.max_force,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MazeSpec":
        layout = d.get("wall_layout")
        if layout is not None:
            layout = tuple(tuple(ch == "#" for ch in row) for row in layout)
        kw = {k: d[k] for k in ("size", "success_radius", "dt", "damping", "max_force", "max_steps") if k in d}
        if "start" in d:
            kw["start"] = tuple(d["start"])
        if d.get("goal_cells") is not None:
            kw["goal_cells"] = tuple(tuple(g) for g in d["goal_cells"])
        return cls(wall_layout=layout, **kw)


def cell_centre(goal) -> np.ndarray:
    r, c = goal
    return np.array([c + 0.5, r + 0.5])


def maze_step(spec: MazeSpec, state, action, goal):
    """Single-agent maze transition; returns ``(state', terminal, clamped)``."""
    a = np.asarray(action, dtype=np.float64).reshape(2)
    clipped = np.clip(a, -spec.max_force, spec.max_force)
    s = np.asarray(state, dtype=np.float64).reshape(1, 4)
    nxt = kernels.maze_step(np.ascontiguousarray(s), clipped.reshape(1, 2), spec.walls().astype(np.uint8), spec.dt, spec.damping)[0]
    dist = float(np.linalg.norm(nxt[:2] - cell_centre(goal)))
    return nxt, dist < spec.success_radius, bool(np.any(clipped != a))


def maze_reward(spec: MazeSpec, state, goal) -> float:
    """-1 while the agent is 0.5 or more from the goal centre, 0 once closer."""
    dist = float(np.linalg.norm(np.asarray(state, dtype=np.float64)[:2] - cell_centre(goal)))
    return 0.0 if dist < spec.success_radius else -1.0


class MazeDomain(DomainTheory):
    family = "maze"
    state_dim = 4

    def __init__(self, spec: MazeSpec):
        self.spec = spec
        self.action_space = ContinuousBox((-spec.max_force,) * 2, (spec.max_force,) * 2)
        self.goal_space = GoalSpace.discrete(spec.goal_cells)
        self.max_steps = spec.max_steps
        self._walls = np.ascontiguousarray(spec.walls().astype(np.uint8))
        self._encoding = MazeEncoding()
        self._domain_id = fnv1a64(canonical_json(spec.to_dict()).encode())

    @property
    def encoding(self) -> MazeEncoding:
        return self._encoding

    def initial_state(self) -> np.ndarray:
        return np.array([self.spec.start[0], self.spec.start[1], 0.0, 0.0])

    def step_batch(self, states, actions, goals, t):
        a = np.clip(np.asarray(actions, dtype=np.float64), -self.spec.max_force, self.spec.max_force)
        nxt = kernels.maze_step(
            np.ascontiguousarray(states, dtype=np.float64), np.ascontiguousarray(a), self._walls, self.spec.dt, self.spec.damping
        )
        g = np.asarray(goals).reshape(-1, 2)
        centre = np.stack([g[:, 1] + 0.5, g[:, 0] + 0.5], axis=1)
        dist = np.linalg.norm(nxt[:, :2] - centre, axis=1)
        succ = dist < self.spec.success_radius
        rewards = np.where(succ, 0.0, -1.0)
        return nxt, rewards, succ, succ

    def achieved_goal(self, states):
        s = np.asarray(states).reshape(-1, 4)
        return np.stack([np.floor(s[:, 1]), np.floor(s[:, 0])], axis=1).astype(np.int64)

    def is_valid_state(self, state) -> bool:
        x, y = float(state[0]), float(state[1])
        return self.spec.free(int(np.floor(y)), int(np.floor(x)))

    def reward_range(self):
        return -1.0, 0.0


# ---------------------------------------------------------------------------
# reach


@dataclass(frozen=True)
class ReachSpec:
    workspace_low: tuple = (-1.0, -1.0, -1.0)
    workspace_high: tuple = (1.0, 1.0, 1.0)
    start_effector: tuple = (0.0, 0.0, 0.0)
    goal_low: tuple = (-0.6, -0.6, -0.6)
    goal_high: tuple = (0.6, 0.6, 0.6)
    success_radius: float = 0.05
    max_velocity: float = 1.0
    dt: float = 0.05
    max_steps: int = 50

    def __post_init__(self):
        for name in ("workspace_low", "workspace_high", "start_effector", "goal_low", "goal_high"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    @property
    def workspace(self) -> ContinuousBox:
        return ContinuousBox(self.workspace_low, self.workspace_high)

    def validate(self) -> None:
        ws = self.workspace
        if not ws.contains(self.start_effector):
            raise ConfigurationError("start effector outside workspace")
        ContinuousBox(self.goal_low, self.goal_high)
        if not (ws.contains(self.goal_low) and ws.contains(self.goal_high)):
            raise ConfigurationError("goal space must lie inside the workspace")
        if self.success_radius <= 0 or self.max_velocity <= 0 or self.dt <= 0:
            raise ConfigurationError("invalid reach constants")

    def to_dict(self) -> dict:
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}
        d["family"] = "reach"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReachSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k != "family"})


def reach_step(spec: ReachSpec, state, action, goal):
    """Velocity-controlled effector step; returns ``(state', reward, terminal)``."""
    a = np.clip(np.asarray(action, dtype=np.float64), -spec.max_velocity, spec.max_velocity)
    nxt = np.clip(np.asarray(state, dtype=np.float64) + spec.dt * a, spec.workspace_low, spec.workspace_high)
    dist = float(np.linalg.norm(nxt - np.asarray(goal, dtype=np.float64)))
    return nxt, -dist, dist < spec.success_radius


def reach_reward(spec: ReachSpec, state, goal) -> float:
    return -float(np.linalg.norm(np.asarray(state, dtype=np.float64) - np.asarray(goal, dtype=np.float64)))


class ReachDomain(DomainTheory):
    family = "reach"
    state_dim = 3

    def __init__(self, spec: ReachSpec):
        self.spec = spec
        self.action_space = ContinuousBox((-spec.max_velocity,) * 3, (spec.max_velocity,) * 3)
        self.goal_space = GoalSpace.continuous(spec.goal_low, spec.goal_high, spec.success_radius)
        self.max_steps = spec.max_steps
        self._encoding = ReachEncoding()
        self._domain_id = fnv1a64(canonical_json(spec.to_dict()).encode())

    @property
    def encoding(self) -> ReachEncoding:
        return self._encoding

    def initial_state(self) -> np.ndarray:
        return np.asarray(self.spec.start_effector, dtype=np.float64)

    def step_batch(self, states, actions, goals, t):
        a = np.clip(np.asarray(actions, dtype=np.float64), -self.spec.max_velocity, self.spec.max_velocity)
        nxt = np.clip(np.asarray(states, dtype=np.float64) + self.spec.dt * a, self.spec.workspace_low, self.spec.workspace_high)
        dist = np.linalg.norm(nxt - np.asarray(goals, dtype=np.float64).reshape(-1, 3), axis=1)
        succ = dist < self.spec.success_radius
        return nxt, -dist, succ, succ

    def achieved_goal(self, states):
        return np.asarray(states, dtype=np.float64).reshape(-1, 3)

    def is_valid_state(self, state) -> bool:
        return self.spec.workspace.contains(state)

    def reward_range(self):
        lo, hi = np.asarray(self.spec.workspace_low), np.asarray(self.spec.workspace_high)
        return -float(np.linalg.norm(hi - lo)), 0.0


# ---------------------------------------------------------------------------
# construction, serialization, sampling


def make_domain(spec) -> DomainTheory:
    if isinstance(spec, GridSpec):
        return GridDomain(spec)
    if isinstance(spec, MazeSpec):
        return MazeDomain(spec)
    if isinstance(spec, ReachSpec):
        return ReachDomain(spec)
    raise ConfigurationError(f"unsupported spec type {type(spec).__name__}")


def spec_from_dict(d: dict):
    family = d.get("family")
    if family == "grid":
        return GridSpec.from_dict(d)
    if family == "maze":
        return MazeSpec.from_dict(d)
    if family == "reach":
        return ReachSpec.from_dict(d)
    raise ConfigurationError(f"unknown environment family {family!r}")


def save_spec(spec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")


def load_spec(path):
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return spec_from_dict(yaml.safe_load(text))
    return spec_from_dict(json.loads(text))


def _maze_connected(walls: np.ndarray) -> bool:
    free = np.argwhere(~walls)
    if len(free) == 0:
        return False
    start = tuple(free[0])
    seen = {start}
    q = deque([start])
    while q:
        r, c = q.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < walls.shape[0] and 0 <= n[1] < walls.shape[1] and not walls[n] and n not in seen:
                seen.add(n)
                q.append(n)
    return len(seen) == len(free)


def _sample_grid(p: dict, rng: np.random.Generator) -> GridSpec:
    width = int(p.get("width", 9))
    height = int(p.get("height", 9))
    lo, hi = p.get("lava_count", (0, 4))
    start = tuple(p.get("start", (1, 1, EAST)))
    sx, sy = int(start[0]), int(start[1])
    cells = [(x, y) for y in range(height) for x in range(width) if (x, y) != (sx, sy)]
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        k = int(rng.integers(lo, hi + 1))
        picks = rng.choice(len(cells), size=k, replace=False) if k else []
        lava = frozenset(cells[i] for i in picks)
        try:
            spec = GridSpec(width=width, height=height, lava_cells=lava, start=start, max_steps=p.get("max_steps"))
        except ConfigurationError:  # e.g. lava covering every goal cell
            continue
        if set(spec.goal_cells) <= grid_reachable(spec):
            return spec
    raise SamplingError("grid distribution over-constrained: 1000 rejections")


def _sample_maze(p: dict, rng: np.random.Generator) -> MazeSpec:
    lo, hi = p.get("size", (6, 9))
    olo, ohi = p.get("obstacles", (0, 4))
    kw = {k: p[k] for k in ("dt", "damping", "max_force", "success_radius") if k in p}
    steps_per_cell = int(p.get("steps_per_cell", 25))
    layouts = list(p.get("layouts", ["open"]))
    for name in layouts:
        if name not in ("open", "four_rooms"):
            raise ConfigurationError(f"unknown maze layout {name!r}")
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        layout = layouts[int(rng.integers(len(layouts)))] if len(layouts) > 1 else layouts[0]
        if layout == "four_rooms":
            size = int(rng.integers(max(lo, 7), max(hi, 7) + 1))
            walls = four_rooms_layout(size)
        else:
            size = int(rng.integers(lo, hi + 1))
            walls = open_layout(size)
        interior = [(r, c) for r in range(1, size - 1) for c in range(1, size - 1)]
        k = int(rng.integers(olo, ohi + 1))
        for i in rng.choice(len(interior), size=min(k, len(interior) - 2), replace=False) if k else []:
            walls[interior[i]] = True
        if not _maze_connected(walls):
            continue
        free = np.argwhere(~walls)
        r, c = free[rng.integers(len(free))]
        start = (c + 0.5, r + 0.5)
        return MazeSpec(
            size=size,
            wall_layout=tuple(map(tuple, walls)),
            start=start,
            max_steps=int(p.get("max_steps", steps_per_cell * size)),
            **kw,
        )
    raise SamplingError("maze distribution over-constrained: 1000 rejections")


def _sample_reach(p: dict, rng: np.random.Generator) -> ReachSpec:
    spread = float(p.get("start_spread", 0.0))
    base = ReachSpec(**{k: v for k, v in p.items() if k in ReachSpec.__dataclass_fields__})
    start = np.asarray(base.start_effector) + rng.uniform(-spread, spread, 3) if spread else np.asarray(base.start_effector)
    return ReachSpec(**{**asdict(base), "start_effector": tuple(np.clip(start, base.workspace_low, base.workspace_high))})


def sample_spec(dist: DomainDistribution, rng_seed: int):
    rng = make_rng(rng_seed)
    if dist.family == "grid":
        return _sample_grid(dist.params, rng)
    if dist.family == "maze":
        return _sample_maze(dist.params, rng)
    return _sample_reach(dist.params, rng)


def sample_domain(dist: DomainDistribution, rng_seed: int) -> DomainTheory:
    """Draw one domain theory from a family distribution.

    Grid params: width, height, lava_count=(lo, hi), start, max_steps.
    Maze params: size=(lo, hi), obstacles=(lo, hi), layouts (any of
    "open", "four_rooms"), physics constants, steps_per_cell.  Reach params: ReachSpec fields plus start_spread.
    """
    return make_domain(sample_spec(dist, rng_seed))


def sample_task(dist: DomainDistribution, rng_seed: int):
    """A (domain, goal) pair: the unit meta-training adapts to.

    ``task_goals`` in the params restricts goals to a list (entries outside
    the sampled domain's goal space are skipped); ``holdout_goals`` excludes
    goals, e.g. those reserved for evaluation.  Both apply to discrete goal
    spaces only.
    """
    domain = sample_domain(dist, rng_seed)
    rng = make_rng(rng_seed ^ 0x5DEECE66D)
    allowed = dist.params.get("task_goals")
    held = {tuple(g) for g in dist.params.get("holdout_goals", ())}
    if allowed is None and not held:
        return domain, domain.goal_space.sample(rng)
    if not domain.goal_space.is_discrete:
        raise ConfigurationError("task_goals/holdout_goals need a discrete goal space")
    space = {tuple(int(v) for v in g) for g in domain.goal_space.points}
    pool = [tuple(g) for g in (allowed if allowed is not None else sorted(space))]
    pool = [g for g in pool if g in space and g not in held]
    if not pool:
        raise SamplingError("no task goal left after applying task_goals/holdout_goals")
    return domain, np.asarray(pool[int(rng.integers(len(pool)))], dtype=np.int64)


def default_grid(width: int = 9, height: int = 9, **kw) -> GridDomain:
    return GridDomain(GridSpec(width=width, height=height, **kw))


def default_maze(**kw) -> MazeDomain:
    return MazeDomain(MazeSpec(**kw))


def default_reach(**kw) -> ReachDomain:
    return ReachDomain(ReachSpec(**kw))
