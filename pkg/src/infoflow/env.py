"""Deterministic continuous 3-room world.

The agent is a point in a 40x40 arena split into three horizontally stacked
rooms by two wall lines, each pierced by a single door gap. A move is the
straight segment from the current position to ``s + a``; if it touches a wall
or leaves the arena the agent stays where it was.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-9

BOTTOM, MIDDLE, TOP = 0, 1, 2
ROOM_NAMES = ("bottom", "middle", "top")


class ConfigError(ValueError):
    """Invalid geometry, reset mode or experiment configuration."""


@dataclass(frozen=True)
class Door:
    center: tuple[float, float]
    width: float
    rooms: tuple[int, int]


@dataclass(frozen=True)
class Room:
    name: str
    polygon: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class WorldGeometry:
    """Arena box, wall segments (already split around door gaps), doors and rooms.

    Room order defines the room id used for tie-breaking: a point on a shared
    boundary belongs to the room listed first.
    """
    width: float
    height: float
    walls: tuple[tuple[float, float, float, float], ...]
    doors: tuple[Door, ...]
    rooms: tuple[Room, ...]
    _wall_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.walls, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "_wall_arr", arr)

    @property
    def door_centers(self) -> np.ndarray:
        return np.array([d.center for d in self.doors], dtype=np.float64).reshape(-1, 2)

    @property
    def corners(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [self.width, 0.0], [0.0, self.height],
                         [self.width, self.height]])

    def room_id(self, name: str) -> int:
        for i, r in enumerate(self.rooms):
            if r.name == name:
                return i
        raise ConfigError(f"unknown room {name!r}")

    def to_text(self) -> str:
        lines = ["# infoflow world geometry",
                 f"arena {self.width!r} {self.height!r}"]
        for x0, y0, x1, y1 in self.walls:
            lines.append(f"wall {x0!r} {y0!r} {x1!r} {y1!r}")
        for d in self.doors:
            lines.append(f"door {d.center[0]!r} {d.center[1]!r} {d.width!r} "
                         f"{self.rooms[d.rooms[0]].name} {self.rooms[d.rooms[1]].name}")
        for r in self.rooms:
            pts = " ".join(f"{x!r},{y!r}" for x, y in r.polygon)
            lines.append(f"room {r.name} {pts}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> WorldGeometry:
        """Parse the line format written by :meth:`to_text`.

        One record per line: ``arena W H``, ``wall x0 y0 x1 y1``,
        ``door cx cy width room_a room_b`` and ``room name x,y x,y ...``.
        Blank lines and ``#`` comments are ignored; ``door`` lines may refer to
        rooms declared later in the file.
        """
        arena = None
        walls, door_recs, rooms = [], [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            kind, *rest = line.split()
            try:
                if kind == "arena":
                    arena = (float(rest[0]), float(rest[1]))
                elif kind == "wall":
                    walls.append(tuple(float(v) for v in rest[:4]))
                    if len(rest) != 4:
                        raise ValueError("wall needs 4 numbers")
                elif kind == "door":
                    door_recs.append(((float(rest[0]), float(rest[1])), float(rest[2]),
                                      rest[3], rest[4]))
                elif kind == "room":
                    poly = tuple(tuple(float(v) for v in p.split(",")) for p in rest[1:])
                    if len(poly) < 3 or any(len(p) != 2 for p in poly):
                        raise ValueError("room polygon needs >= 3 x,y points")
                    rooms.append(Room(rest[0], poly))
                else:
                    raise ValueError(f"unknown record {kind!r}")
            except (IndexError, ValueError) as exc:
                raise ConfigError(f"geometry line {lineno}: {exc}") from None
        if arena is None:
            raise ConfigError("geometry has no arena record")
        names = [r.name for r in rooms]
        doors = []
        for center, width, a, b in door_recs:
            if a not in names or b not in names:
                raise ConfigError(f"door references unknown room {a!r}/{b!r}")
            doors.append(Door(center, width, (names.index(a), names.index(b))))
        return cls(arena[0], arena[1], tuple(walls), tuple(doors), tuple(rooms))

    @classmethod
    def load(cls, path) -> WorldGeometry:
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def default_geometry(size: float = 40.0, door_width: float = 4.0,
                     lower_door_x: float = 10.0, upper_door_x: float = 30.0) -> WorldGeometry:
    """Three stacked rooms; wall lines at size/3 and 2*size/3; one door per wall."""
    y1, y2 = size / 3.0, 2.0 * size / 3.0
    h = door_width / 2.0
    walls = (
        (0.0, y1, lower_door_x - h, y1), (lower_door_x + h, y1, size, y1),
        (0.0, y2, upper_door_x - h, y2), (upper_door_x + h, y2, size, y2),
    )
    doors = (Door((lower_door_x, y1), door_width, (BOTTOM, MIDDLE)),
             Door((upper_door_x, y2), door_width, (MIDDLE, TOP)))
    rooms = (
        Room("bottom", ((0.0, 0.0), (size, 0.0), (size, y1), (0.0, y1))),
        Room("middle", ((0.0, y1), (size, y1), (size, y2), (0.0, y2))),
        Room("top", ((0.0, y2), (size, y2), (size, size), (0.0, size))),
    )
    return WorldGeometry(size, size, walls, doors, rooms)


def _sgn(v):
    return np.where(v > EPS, 1, np.where(v < -EPS, -1, 0))


def segments_intersect(p: np.ndarray, q: np.ndarray, a, b) -> np.ndarray:
    """Closed-segment intersection test of p->q (arrays (n, 2)) against one segment a->b."""
    ax, ay = a
    bx, by = b
    px, py, qx, qy = p[:, 0], p[:, 1], q[:, 0], q[:, 1]
    d1 = _sgn((bx - ax) * (py - ay) - (by - ay) * (px - ax))
    d2 = _sgn((bx - ax) * (qy - ay) - (by - ay) * (qx - ax))
    d3 = _sgn((qx - px) * (ay - py) - (qy - py) * (ax - px))
    d4 = _sgn((qx - px) * (by - py) - (qy - py) * (bx - px))
    crossing = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    collinear = (d1 == 0) & (d2 == 0)
    # 1-D overlap of the bounding boxes decides the collinear case
    overlap = ((np.minimum(px, qx) <= max(ax, bx) + EPS) & (np.maximum(px, qx) >= min(ax, bx) - EPS)
               & (np.minimum(py, qy) <= max(ay, by) + EPS) & (np.maximum(py, qy) >= min(ay, by) - EPS))
    return np.where(collinear, overlap, crossing)


def _points_in_polygon(pts: np.ndarray, poly) -> np.ndarray:
    """Closed point-in-polygon (boundary counts as inside)."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        within = ((np.minimum(x0, x1) - EPS <= x) & (x <= np.maximum(x0, x1) + EPS)
                  & (np.minimum(y0, y1) - EPS <= y) & (y <= np.maximum(y0, y1) + EPS))
        on_edge |= (np.abs(cross) <= EPS * max(1.0, np.hypot(x1 - x0, y1 - y0))) & within
        straddle = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= straddle & (x < x_cross)
    return inside | on_edge


class ResetKind(enum.Enum):
    UNIFORM_ANYWHERE = "anywhere"
    UNIFORM_BOTTOM_ROOM = "bottom"
    FIXED = "fixed"


@dataclass(frozen=True)
class ResetMode:
    kind: ResetKind
    state: tuple[float, float] | None = None

    @classmethod
    def parse(cls, text: str) -> ResetMode:
        """``anywhere``, ``bottom`` or ``fixed:x,y``."""
        if text.startswith("fixed:"):
            try:
                x, y = (float(v) for v in text[6:].split(","))
            except ValueError:
                raise ConfigError(f"bad fixed reset state {text!r}") from None
            return cls(ResetKind.FIXED, (x, y))
        try:
            return cls(ResetKind(text))
        except ValueError:
            raise ConfigError(f"unknown reset mode {text!r}") from None

    def __str__(self):
        if self.kind is ResetKind.FIXED:
            return f"fixed:{self.state[0]!r},{self.state[1]!r}"
        return self.kind.value


UNIFORM_ANYWHERE = ResetMode(ResetKind.UNIFORM_ANYWHERE)
UNIFORM_BOTTOM_ROOM = ResetMode(ResetKind.UNIFORM_BOTTOM_ROOM)


class World:
    """Collision semantics, resets and room lookup over a :class:`WorldGeometry`.

    ``action_norm`` selects how out-of-range actions are brought back in
    bounds: ``"box"`` clips each component to [-bound, bound], ``"l2"``
    rescales vectors longer than ``bound``.
    """

    def __init__(self, geometry: WorldGeometry | None = None, action_bound: float = 10.0,
                 action_norm: str = "box"):
        if action_norm not in ("box", "l2"):
            raise ConfigError(f"unknown action norm {action_norm!r}")
        self.geometry = geometry or default_geometry()
        self.action_bound = float(action_bound)
        self.action_norm = action_norm
        self._walls = [tuple(w) for w in self.geometry.walls]
        self._bottom = self.geometry.room_id("bottom") if any(
            r.name == "bottom" for r in self.geometry.rooms) else 0

    @property
    def width(self) -> float:
        return self.geometry.width

    @property
    def height(self) -> float:
        return self.geometry.height

    # --- actions ---------------------------------------------------------
    def clip_action(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if self.action_norm == "box":
            return np.clip(a, -self.action_bound, self.action_bound)
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        scale = np.minimum(1.0, self.action_bound / np.maximum(norm, 1e-300))
        return a * scale

    def sample_actions(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        shape = (2,) if n is None else (n, 2)
        return rng.uniform(-self.action_bound, self.action_bound, size=shape)

    # --- collision -------------------------------------------------------
    def segment_blocked_many(self, p, q) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=np.float64))
        q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        blocked = ((q[:, 0] < -EPS) | (q[:, 0] > self.width + EPS)
                   | (q[:, 1] < -EPS) | (q[:, 1] > self.height + EPS))
        for x0, y0, x1, y1 in self._walls:
            blocked |= segments_intersect(p, q, (x0, y0), (x1, y1))
        return blocked

    def segment_blocked(self, p, q) -> bool:
        """True iff the segment p->q touches a wall (outside door gaps) or leaves the arena."""
        px, py = float(p[0]), float(p[1])
        qx, qy = float(q[0]), float(q[1])
        if qx < -EPS or qx > self.width + EPS or qy < -EPS or qy > self.height + EPS:
            return True
        for ax, ay, bx, by in self._walls:
            if _blocked_scalar(px, py, qx, qy, ax, ay, bx, by):
                return True
        return False

    def step(self, s, a) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        a = self.clip_action(a)
        q = s + a
        return s.copy() if self.segment_blocked(s, q) else q

    def step_many(self, S, A) -> np.ndarray:
        S = np.asarray(S, dtype=np.float64)
        Q = S + self.clip_action(A)
        blocked = self.segment_blocked_many(S, Q)
        return np.where(blocked[:, None], S, Q)

    # --- state queries ---------------------------------------------------
    def on_wall_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        hit = np.zeros(len(pts), dtype=bool)
        for x0, y0, x1, y1 in self._walls:
            hit |= segments_intersect(pts, pts, (x0, y0), (x1, y1))
        return hit

    def is_valid_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        inside = ((pts[:, 0] >= -EPS) & (pts[:, 0] <= self.width + EPS)
                  & (pts[:, 1] >= -EPS) & (pts[:, 1] <= self.height + EPS))
        return inside & ~self.on_wall_many(pts) & np.all(np.isfinite(pts), axis=1)

    def is_valid(self, s) -> bool:
        return bool(self.is_valid_many(s)[0])

    def room_of_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        room = np.full(len(pts), -1, dtype=np.int64)
        for i, r in enumerate(self.geometry.rooms):
            hit = (room < 0) & _points_in_polygon(pts, r.polygon)
            room[hit] = i
        return room

    def room_of(self, s) -> int:
        x, y = float(s[0]), float(s[1])
        for i, r in enumerate(self.geometry.rooms):
            if _point_in_polygon_scalar(x, y, r.polygon):
                return i
        return -1

    def door_distance_many(self, pts) -> np.ndarray:
        """Euclidean distance from each point to the nearest door centre."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        c = self.geometry.door_centers
        return np.min(np.linalg.norm(pts[:, None, :] - c[None, :, :], axis=2), axis=1)

    # --- resets ----------------------------------------------------------
    def sample_valid_states(self, rng: np.random.Generator, n: int,
                            room: int | None = None) -> np.ndarray:
        """Uniform samples over valid positions (optionally restricted to one room)."""
        out = np.empty((0, 2))
        if room is None:
            lo, hi = np.zeros(2), np.array([self.width, self.height])
        else:
            poly = np.asarray(self.geometry.rooms[room].polygon)
            lo, hi = poly.min(axis=0), poly.max(axis=0)
        while len(out) < n:
            cand = rng.uniform(lo, hi, size=(max(16, 2 * (n - len(out))), 2))
            ok = self.is_valid_many(cand)
            if room is not None:
                ok &= self.room_of_many(cand) == room
            out = np.concatenate([out, cand[ok]])
        return out[:n]

    def reset(self, mode: ResetMode, rng: np.random.Generator) -> np.ndarray:
        if mode.kind is ResetKind.FIXED:
            s = np.asarray(mode.state, dtype=np.float64)
            if s.shape != (2,) or not self.is_valid(s):
                raise ConfigError(f"fixed reset state {mode.state} is not a valid position")
            return s.copy()
        if mode.kind is ResetKind.UNIFORM_BOTTOM_ROOM:
            return self.sample_valid_states(rng, 1, room=self._bottom)[0]
        return self.sample_valid_states(rng, 1)[0]


def _blocked_scalar(px, py, qx, qy, ax, ay, bx, by) -> bool:
    # scalar twin of segments_intersect for the per-step hot path
    def sgn(v):
        return 1 if v > EPS else (-1 if v < -EPS else 0)

    d1 = sgn((bx - ax) * (py - ay) - (by - ay) * (px - ax))
    d2 = sgn((bx - ax) * (qy - ay) - (by - ay) * (qx - ax))
    if d1 == 0 and d2 == 0:
        return (min(px, qx) <= max(ax, bx) + EPS and max(px, qx) >= min(ax, bx) - EPS
                and min(py, qy) <= max(ay, by) + EPS and max(py, qy) >= min(ay, by) - EPS)
    if d1 * d2 > 0:
        return False
    d3 = sgn((qx - px) * (ay - py) - (qy - py) * (ax - px))
    d4 = sgn((qx - px) * (by - py) - (qy - py) * (bx - px))
    return d3 * d4 <= 0


def _point_in_polygon_scalar(x, y, poly) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        if (abs(cross) <= EPS * max(1.0, ((x1 - x0) ** 2 + (y1 - y0) ** 2) ** 0.5)
                and min(x0, x1) - EPS <= x <= max(x0, x1) + EPS
                and min(y0, y1) - EPS <= y <= max(y0, y1) + EPS):
            return True
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            inside = not inside
    return inside
