"""Headless traffic replay with an inserted ego vehicle.

Non-ego vehicles are copied frame-by-frame from the recording (never
integrated); the ego integrates commanded accelerations with semi-implicit
Euler on the same clock. The environment emits fixed-width observations and
collision / lane-change / off-road / end-of-track events. Rewards are not
computed here; trainers own them.

Observation layout (width 14, all components normalized then clipped to
[-1.5, 1.5]):

    0  ego longitudinal speed / velocity_scale
    1  ego lateral offset from its lane center / lane width
    2..13  six neighbor slots x (gap / gap_scale, relative speed / velocity_scale)
           order: lead+rear in ego lane, lead+rear in left lane (lane_id - 1),
           lead+rear in right lane (lane_id + 1)

An absent neighbor reports gap = sensing_range and relative speed = 0 before
normalization, so slots stay bounded without sentinel NaNs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Recording

OBSERVATION_WIDTH = 14

TRAJECTORY_COLUMNS = [
    "frame", "ego_x", "ego_y", "ego_vx", "ego_vy",
    "a_long", "a_lat", "collision", "lane_id",
]


class InvalidSpawn(ValueError):
    pass


class NoValidSpawn(RuntimeError):
    pass


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionBounds:
    a_long_min: float = -6.0
    a_long_max: float = 4.0
    a_lat_min: float = -2.0
    a_lat_max: float = 2.0

    @property
    def low(self) -> np.ndarray:
        return np.array([self.a_long_min, self.a_lat_min])

    @property
    def high(self) -> np.ndarray:
        return np.array([self.a_long_max, self.a_lat_max])

    def clamp(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=float), self.low, self.high)


@dataclass
class Action:
    a_long: float
    a_lat: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a_long, self.a_lat], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "Action":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0]), float(arr[1]))


def as_action_array(action) -> np.ndarray:
    if isinstance(action, Action):
        return action.as_array()
    return np.asarray(action, dtype=float).reshape(2)


def quantize_action(action, bounds: ActionBounds, n_long: int = 9, n_lat: int = 5) -> Action:
    """Snap a continuous action onto a uniform n_long x n_lat grid over the bounds."""
    a = bounds.clamp(as_action_array(action))
    lo, hi = bounds.low, bounds.high
    steps = np.array([n_long - 1, n_lat - 1], dtype=float)
    snapped = lo + np.round((a - lo) / (hi - lo) * steps) / steps * (hi - lo)
    return Action.from_array(snapped)


@dataclass
class EgoState:
    x: float
    y: float
    x_velocity: float
    y_velocity: float
    width: float
    height: float
    lane_id: int

    def rect(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.width, self.height)

    @property
    def center_x(self) -> float:
        return self.x + self.width / 2.0

    @property
    def center_y(self) -> float:
        return self.y + self.height / 2.0


@dataclass
class StepInfo:
    collision: bool = False
    lane_change: bool = False
    off_road: bool = False
    end_of_track: bool = False
    done: bool = False


@dataclass(frozen=True)
class ObservationSpec:
    sensing_range: float = 200.0
    gap_scale: float = 200.0
    velocity_scale: float = 50.0
    clip: float = 1.5

    @property
    def width(self) -> int:
        return OBSERVATION_WIDTH


@dataclass
class SpawnSpec:
    frame: int
    lane: int
    x: float
    seed: int = 0


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------

def lane_index(y_center: float, boundaries) -> int:
    """1-based lane of a lateral center, or 0 when outside all lanes."""
    if y_center < boundaries[0] or y_center > boundaries[-1]:
        return 0
    idx = int(np.searchsorted(boundaries, y_center, side="right"))
    return min(idx, len(boundaries) - 1)


def lane_center(lane: int, boundaries) -> float:
    return (boundaries[lane - 1] + boundaries[lane]) / 2.0


def detect_collision(ego_rect, other_rects) -> bool:
    """True iff the ego rectangle overlaps any other with positive area.

    Rectangles are axis-aligned (x, y, width, height); touching edges do not
    count as a collision.
    """
    ex, ey, ew, eh = ego_rect
    for ox, oy, ow, oh in other_rects:
        if ex < ox + ow and ox < ex + ew and ey < oy + oh and oy < ey + eh:
            return True
    return False


def detect_lane_change(prev_lane: int, new_lane: int) -> bool:
    return prev_lane != new_lane


def integrate(state: EgoState, action, dt: float, lane_boundaries,
              v_max_long: float = 60.0, v_max_lat: float = 5.0) -> EgoState:
    """Semi-implicit Euler step: update velocity first, then position.

    Longitudinal speed is clamped to [0, v_max_long] (no reversing on a
    highway); lateral speed to [-v_max_lat, v_max_lat] since the ego must be
    able to move toward either side. lane_id is recomputed from the new
    lateral center against the lane boundaries (clamped to the nearest lane
    when the center is off the road; off-road handling is the caller's).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    a = as_action_array(action)
    vx = min(max(state.x_velocity + a[0] * dt, 0.0), v_max_long)
    vy = min(max(state.y_velocity + a[1] * dt, -v_max_lat), v_max_lat)
    x = state.x + vx * dt
    y = state.y + vy * dt
    lane = lane_index(y + state.height / 2.0, lane_boundaries)
    if lane == 0:
        lane = 1 if y + state.height / 2.0 < lane_boundaries[0] else len(lane_boundaries) - 1
    return EgoState(x=x, y=y, x_velocity=vx, y_velocity=vy,
                    width=state.width, height=state.height, lane_id=lane)


# ---------------------------------------------------------------------------
# Frame-indexed access to a recording
# ---------------------------------------------------------------------------

_EMPTY = np.zeros(0)


@dataclass
class FrameSlice:
    vehicle_ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    width: np.ndarray
    height: np.ndarray
    x_velocity: np.ndarray
    y_velocity: np.ndarray
    lane_id: np.ndarray

    def __len__(self) -> int:
        return self.vehicle_ids.shape[0]

    def rects(self):
        return zip(self.x, self.y, self.width, self.height)


_EMPTY_SLICE = FrameSlice(
    vehicle_ids=np.zeros(0, dtype=int), x=_EMPTY, y=_EMPTY, width=_EMPTY,
    height=_EMPTY, x_velocity=_EMPTY, y_velocity=_EMPTY,
    lane_id=np.zeros(0, dtype=int),
)


class FrameIndex:
    """Per-frame column arrays for a recording, built once for fast lookup."""

    def __init__(self, rec: Recording):
        self.recording = rec
        buckets: dict[int, list] = {}
        for vf in rec.frames:
            buckets.setdefault(vf.frame, []).append(vf)
        self._slices: dict[int, FrameSlice] = {}
        for f, rows in buckets.items():
            self._slices[f] = FrameSlice(
                vehicle_ids=np.array([r.vehicle_id for r in rows], dtype=int),
                x=np.array([r.x for r in rows]),
                y=np.array([r.y for r in rows]),
                width=np.array([r.width for r in rows]),
                height=np.array([r.height for r in rows]),
                x_velocity=np.array([r.x_velocity for r in rows]),
                y_velocity=np.array([r.y_velocity for r in rows]),
                lane_id=np.array([r.lane_id for r in rows], dtype=int),
            )
        if self._slices:
            self.min_frame = min(self._slices)
            self.max_frame = max(self._slices)
        else:
            self.min_frame, self.max_frame = 0, -1

    def at(self, frame: int) -> FrameSlice:
        return self._slices.get(frame, _EMPTY_SLICE)


def observe(source, frame: int, ego: EgoState, spec: ObservationSpec,
            exclude_id: int | None = None) -> np.ndarray:
    """Fixed-width observation of the ego plus its six nearest neighbors.

    `source` is a Recording or a prebuilt FrameIndex (pass an index on hot
    paths). Slot assignment picks, per lane, the nearest vehicle ahead of and
    behind the ego's longitudinal center within the sensing range; gaps are
    bumper-to-bumper and may go negative for vehicles alongside in adjacent
    lanes.
    """
    index = source if isinstance(source, FrameIndex) else FrameIndex(source)
    rec = index.recording
    sl = index.at(frame)

    boundaries = rec.lane_boundaries
    n_lanes = len(boundaries) - 1
    lane = min(max(ego.lane_id, 1), n_lanes)
    width = boundaries[lane] - boundaries[lane - 1]
    features = np.empty(OBSERVATION_WIDTH)
    features[0] = ego.x_velocity / spec.velocity_scale
    features[1] = (ego.center_y - lane_center(lane, boundaries)) / width

    if len(sl) and exclude_id is not None:
        keep = sl.vehicle_ids != exclude_id
    else:
        keep = slice(None)
    ox = sl.x[keep]
    ow = sl.width[keep]
    ovx = sl.x_velocity[keep]
    olane = sl.lane_id[keep]

    centers = ox + ow / 2.0
    rel = centers - ego.center_x
    in_range = np.abs(rel) <= spec.sensing_range

    absent = (spec.sensing_range / spec.gap_scale, 0.0)
    pos = 2
    for lane_offset in (0, -1, +1):
        slot_lane = lane + lane_offset
        if 1 <= slot_lane <= n_lanes:
            mask = (olane == slot_lane) & in_range
            lead = mask & (rel > 0.0)
            rear = mask & (rel < 0.0)
            if lead.any():
                j = np.flatnonzero(lead)[np.argmin(rel[lead])]
                gap = ox[j] - (ego.x + ego.width)
                features[pos] = gap / spec.gap_scale
                features[pos + 1] = (ovx[j] - ego.x_velocity) / spec.velocity_scale
            else:
                features[pos], features[pos + 1] = absent
            if rear.any():
                j = np.flatnonzero(rear)[np.argmax(rel[rear])]
                gap = ego.x - (ox[j] + ow[j])
                features[pos + 2] = gap / spec.gap_scale
                features[pos + 3] = (ovx[j] - ego.x_velocity) / spec.velocity_scale
            else:
                features[pos + 2], features[pos + 3] = absent
        else:
            features[pos], features[pos + 1] = absent
            features[pos + 2], features[pos + 3] = absent
        pos += 4
    return np.clip(features, -spec.clip, spec.clip)


# ---------------------------------------------------------------------------
# Replay environment
# ---------------------------------------------------------------------------

class ReplayEnv:
    """Episodic replay environment over one or more recordings.

    One instance is single-threaded and never mutates a recording; run
    several instances in parallel over shared recordings if needed.
    """

    def __init__(self, recordings=None, obs_spec: ObservationSpec | None = None,
                 bounds: ActionBounds | None = None, max_episode_steps: int | None = None,
                 ego_width: float = 4.5, ego_height: float = 2.0,
                 v_max_long: float = 60.0, v_max_lat: float = 5.0):
        if isinstance(recordings, Recording):
            recordings = [recordings]
        self.recordings = list(recordings) if recordings else []
        self.obs_spec = obs_spec or ObservationSpec()
        self.bounds = bounds or ActionBounds()
        self.max_episode_steps = max_episode_steps
        self.ego_width = ego_width
        self.ego_height = ego_height
        self.v_max_long = v_max_long
        self.v_max_lat = v_max_lat
        self._indexes: dict[int, FrameIndex] = {}
        self._rec: Recording | None = None
        self._index: FrameIndex | None = None
        self.ego: EgoState | None = None
        self._frame = 0
        self._steps = 0
        self._done = True
        self.trajectory: list[tuple] = []

    # -- episode control ----------------------------------------------------

    def _index_for(self, rec: Recording) -> FrameIndex:
        key = id(rec)
        idx = self._indexes.get(key)
        if idx is None or idx.recording is not rec:
            idx = FrameIndex(rec)
            self._indexes[key] = idx
        return idx

    def reset(self, rec: Recording, spawn: SpawnSpec) -> np.ndarray:
        """Insert the ego at the spawn point; velocity = local lane average."""
        index = self._index_for(rec)
        n_lanes = rec.n_lanes
        if not rec.frames or spawn.frame < index.min_frame or spawn.frame >= index.max_frame:
            raise InvalidSpawn(f"spawn frame {spawn.frame} outside recording")
        if not 1 <= spawn.lane <= n_lanes:
            raise InvalidSpawn(f"spawn lane {spawn.lane} outside 1..{n_lanes}")
        if not 0.0 <= spawn.x <= rec.road_length - self.ego_width:
            raise InvalidSpawn(f"spawn x {spawn.x} outside road")
        speed = self._lane_speed(index, spawn.frame, spawn.lane)
        y = lane_center(spawn.lane, rec.lane_boundaries) - self.ego_height / 2.0
        ego = EgoState(x=spawn.x, y=y, x_velocity=speed, y_velocity=0.0,
                       width=self.ego_width, height=self.ego_height, lane_id=spawn.lane)
        sl = index.at(spawn.frame)
        if detect_collision(ego.rect(), sl.rects()):
            raise InvalidSpawn("spawn position overlaps a recorded vehicle")
        self._rec, self._index = rec, index
        self.ego = ego
        self._frame = spawn.frame
        self._steps = 0
        self._done = False
        self.trajectory = []
        return observe(index, spawn.frame, ego, self.obs_spec)

    def _lane_speed(self, index: FrameIndex, frame: int, lane: int) -> float:
        sl = index.at(frame)
        mask = sl.lane_id == lane
        if mask.any():
            return float(sl.x_velocity[mask].mean())
        speeds = [vf.x_velocity for vf in index.recording.frames if vf.lane_id == lane]
        if speeds:
            return float(np.mean(speeds))
        if index.recording.frames:
            return float(np.mean([vf.x_velocity for vf in index.recording.frames]))
        return 30.0

    def sample_spawn(self, rec: Recording, rng, min_horizon: int = 50,
                     attempts: int = 100) -> SpawnSpec:
        """Seeded spawn inside the traffic envelope with clear front/rear gaps."""
        index = self._index_for(rec)
        lo_f, hi_f = index.min_frame, index.max_frame - max(min_horizon, 1)
        if hi_f < lo_f:
            hi_f = lo_f
        n_lanes = rec.n_lanes
        for _ in range(attempts):
            frame = int(rng.integers(lo_f, hi_f + 1))
            lane = int(rng.integers(1, n_lanes + 1))
            sl = index.at(frame)
            span_lo, span_hi = 10.0, rec.road_length - 10.0
            if len(sl):
                # prefer spawning inside the traffic envelope of that frame
                env_lo = max(float(sl.x.min()) + 20.0, span_lo)
                env_hi = min(float((sl.x + sl.width).max()) - 20.0, span_hi)
                if env_hi - env_lo >= 50.0:
                    span_lo, span_hi = env_lo, env_hi
            span_hi = min(span_hi, rec.road_length - self.ego_width)
            if span_hi <= span_lo:
                continue
            x = float(rng.uniform(span_lo, span_hi))
            spawn = SpawnSpec(frame=frame, lane=lane, x=x)
            if self._spawn_is_clear(index, spawn):
                return spawn
        raise NoValidSpawn(f"no valid spawn found in track {rec.track_id} "
                           f"after {attempts} attempts")

    def _spawn_is_clear(self, index: FrameIndex, spawn: SpawnSpec,
                        lead_clearance: float = 15.0, rear_clearance: float = 10.0) -> bool:
        sl = index.at(spawn.frame)
        same = sl.lane_id == spawn.lane
        front = spawn.x + self.ego_width
        for j in np.flatnonzero(same):
            if sl.x[j] >= front:
                if sl.x[j] - front < lead_clearance:
                    return False
            elif sl.x[j] + sl.width[j] <= spawn.x:
                if spawn.x - (sl.x[j] + sl.width[j]) < rear_clearance:
                    return False
            else:
                return False
        y = lane_center(spawn.lane, index.recording.lane_boundaries) - self.ego_height / 2.0
        rect = (spawn.x, y, self.ego_width, self.ego_height)
        return not detect_collision(rect, sl.rects())

    def reset_random(self, rng, min_horizon: int = 50) -> np.ndarray:
        if not self.recordings:
            raise InvalidSpawn("environment has no recordings to spawn into")
        if len(self.recordings) == 1:
            rec = self.recordings[0]
        else:
            rec = self.recordings[int(rng.integers(len(self.recordings)))]
        spawn = self.sample_spawn(rec, rng, min_horizon=min_horizon)
        return self.reset(rec, spawn)

    # -- stepping -----------------------------------------------------------

    def step(self, action) -> tuple[np.ndarray, StepInfo]:
        """Advance one tick: ego integrates, replay vehicles copy their next frame."""
        if self._done or self.ego is None or self._rec is None:
            raise EpisodeFinished("reset the environment before stepping")
        rec, index = self._rec, self._index
        clamped = self.bounds.clamp(as_action_array(action))
        prev_lane = self.ego.lane_id
        ego = integrate(self.ego, clamped, rec.dt, rec.lane_boundaries,
                        self.v_max_long, self.v_max_lat)

        next_frame = self._frame + 1
        end_of_track = next_frame > index.max_frame
        frame_used = min(next_frame, index.max_frame)
        sl = index.at(frame_used)
        collision = (not end_of_track) and detect_collision(ego.rect(), sl.rects())
        off_road = not (rec.lane_boundaries[0] <= ego.center_y <= rec.lane_boundaries[-1])
        self._steps += 1
        if self.max_episode_steps is not None and self._steps >= self.max_episode_steps:
            end_of_track = True
        info = StepInfo(
            collision=collision,
            lane_change=detect_lane_change(prev_lane, ego.lane_id),
            off_road=off_road,
            end_of_track=end_of_track,
            done=collision or off_road or end_of_track,
        )
        self.ego = ego
        self._frame = frame_used
        self._done = info.done
        self.trajectory.append((
            frame_used, ego.x, ego.y, ego.x_velocity, ego.y_velocity,
            float(clamped[0]), float(clamped[1]), int(collision), ego.lane_id,
        ))
        obs = observe(index, frame_used, ego, self.obs_spec)
        return obs, info

    @property
    def done(self) -> bool:
        return self._done

    @property
    def current_frame(self) -> int:
        return self._frame

    @property
    def recording(self) -> Recording | None:
        return self._rec

    def vehicles_at(self, frame: int) -> FrameSlice:
        """Replay access to the recorded (copied, never integrated) states."""
        if self._index is None:
            raise EpisodeFinished("reset the environment first")
        return self._index.at(frame)


def export_trajectory(rows, path) -> Path:
    """Write an episode trajectory as CSV (see TRAJECTORY_COLUMNS)."""
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for row in rows:
        frame, x, y, vx, vy, a_long, a_lat, collision, lane_id = row
        lines.append(",".join([
            str(int(frame)), repr(float(x)), repr(float(y)),
            repr(float(vx)), repr(float(vy)),
            repr(float(a_long)), repr(float(a_lat)),
            str(int(collision)), str(int(lane_id)),
        ]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path
