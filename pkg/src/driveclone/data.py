"""HighD-schema traffic recordings.

This module owns the on-disk track format (11-column CSV plus a small
key=value geometry sidecar), structural validation, seeded train/test splits,
a desk-scale synthetic traffic generator (Intelligent-Driver-Model
car-following with occasional scripted lane changes) and expert
demonstration extraction.

Column order of the track CSV:
    frame,vehicle_id,x,y,width,height,x_velocity,y_velocity,
    x_acceleration,y_acceleration,lane_id

x/y are the bounding-box top-left corner in road coordinates (meters); width
is the longitudinal length and height the lateral extent. Extra columns in
input files are ignored with a warning.
"""
from __future__ import annotations

import io
import math
import warnings
from csv import reader as csv_reader
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACK_COLUMNS = [
    "frame", "vehicle_id", "x", "y", "width", "height",
    "x_velocity", "y_velocity", "x_acceleration", "y_acceleration", "lane_id",
]
_INT_COLUMNS = {"frame", "vehicle_id", "lane_id"}

DEFAULT_FRAME_RATE = 25.0  # Hz; HighD recording cadence


class MissingColumn(ValueError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required column: {name}")


class MalformedRow(ValueError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


class NonContiguousVehicle(ValueError):
    def __init__(self, vehicle_id):
        self.vehicle_id = vehicle_id
        super().__init__(f"vehicle {vehicle_id} has gaps in its frame sequence")


class InsufficientRecordings(ValueError):
    pass


class UnknownVehicle(ValueError):
    def __init__(self, vehicle_id):
        self.vehicle_id = vehicle_id
        super().__init__(f"vehicle {vehicle_id} not present in recording")


class InvalidConfig(ValueError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class VehicleFrame:
    frame: int
    vehicle_id: int
    x: float
    y: float
    width: float
    height: float
    x_velocity: float
    y_velocity: float
    x_acceleration: float
    y_acceleration: float
    lane_id: int


@dataclass
class RoadMeta:
    """Geometry sidecar for a track file (the CSV itself is per-frame only)."""
    track_id: int
    road_length: float
    lane_boundaries: list[float]
    frame_rate: float = DEFAULT_FRAME_RATE


@dataclass
class Recording:
    track_id: int
    frames: list[VehicleFrame]
    road_length: float
    lane_boundaries: list[float]
    frame_rate: float = DEFAULT_FRAME_RATE

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def n_lanes(self) -> int:
        return len(self.lane_boundaries) - 1

    def frame_range(self) -> tuple[int, int]:
        if not self.frames:
            return (0, -1)
        return self.frames[0].frame, self.frames[-1].frame

    def vehicle_ids(self) -> list[int]:
        return sorted({vf.vehicle_id for vf in self.frames})


@dataclass
class Demonstration:
    observation: np.ndarray
    action: np.ndarray  # (a_long, a_lat) = recorded (x_acceleration, y_acceleration)
    vehicle_id: int
    frame: int


@dataclass
class DatasetSplit:
    train: list[Recording]
    test: list[Recording]


@dataclass
class Finding:
    severity: str
    location: str
    message: str

    def line(self) -> str:
        return f"{self.severity}:{self.location}:{self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def lines(self) -> list[str]:
        return [f.line() for f in self.findings]

    def text(self) -> str:
        return "\n".join(self.lines())


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

def _frame_violation(vf: VehicleFrame) -> str | None:
    if vf.frame < 1:
        return "frame must be >= 1"
    if vf.width <= 0.0:
        return "width must be > 0"
    if vf.height <= 0.0:
        return "height must be > 0"
    if vf.lane_id < 1:
        return "lane_id must be >= 1"
    return None


def parse_tracks(csv_text: str, meta: RoadMeta) -> Recording:
    """Parse a track CSV (header row required) into a validated Recording.

    Rows are re-ordered to (frame, vehicle_id). Raises MissingColumn,
    MalformedRow (with the 1-based file line) or NonContiguousVehicle.
    """
    rows_iter = csv_reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(rows_iter)]
    except StopIteration:
        raise MissingColumn(TRACK_COLUMNS[0]) from None
    col_idx = {}
    for name in TRACK_COLUMNS:
        if name not in header:
            raise MissingColumn(name)
        col_idx[name] = header.index(name)
    extras = [h for h in header if h not in TRACK_COLUMNS]
    if extras:
        warnings.warn(f"ignoring extra columns: {', '.join(extras)}", stacklevel=2)

    frames: list[VehicleFrame] = []
    seen: dict[tuple[int, int], int] = {}
    for line_no, row in enumerate(rows_iter, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
        values = {}
        for name in TRACK_COLUMNS:
            raw = row[col_idx[name]].strip()
            try:
                values[name] = int(raw) if name in _INT_COLUMNS else float(raw)
            except ValueError:
                raise MalformedRow(line_no, f"unparseable {name} value {raw!r}") from None
        vf = VehicleFrame(**values)
        reason = _frame_violation(vf)
        if reason:
            raise MalformedRow(line_no, reason)
        if not np.isfinite([vf.x, vf.y, vf.x_velocity, vf.y_velocity,
                            vf.x_acceleration, vf.y_acceleration]).all():
            raise MalformedRow(line_no, "non-finite value")
        if not 0.0 <= vf.x <= meta.road_length:
            raise MalformedRow(line_no, f"x={vf.x} outside [0, {meta.road_length}]")
        key = (vf.frame, vf.vehicle_id)
        if key in seen:
            raise MalformedRow(line_no, f"duplicate (frame, vehicle_id) pair {key}")
        seen[key] = line_no
        frames.append(vf)

    frames.sort(key=lambda v: (v.frame, v.vehicle_id))
    _check_contiguity(frames)
    return Recording(
        track_id=meta.track_id,
        frames=frames,
        road_length=meta.road_length,
        lane_boundaries=list(meta.lane_boundaries),
        frame_rate=meta.frame_rate,
    )


def _check_contiguity(frames: list[VehicleFrame]) -> None:
    per_vehicle: dict[int, list[int]] = {}
    for vf in frames:
        per_vehicle.setdefault(vf.vehicle_id, []).append(vf.frame)
    for vid in sorted(per_vehicle):
        fs = per_vehicle[vid]
        if fs[-1] - fs[0] + 1 != len(fs):
            raise NonContiguousVehicle(vid)


def serialize_recording(rec: Recording) -> str:
    """Write the per-frame table back to CSV text, field-exact on round-trip."""
    lines = [",".join(TRACK_COLUMNS)]
    for vf in sorted(rec.frames, key=lambda v: (v.frame, v.vehicle_id)):
        lines.append(",".join([
            str(vf.frame), str(vf.vehicle_id),
            repr(float(vf.x)), repr(float(vf.y)),
            repr(float(vf.width)), repr(float(vf.height)),
            repr(float(vf.x_velocity)), repr(float(vf.y_velocity)),
            repr(float(vf.x_acceleration)), repr(float(vf.y_acceleration)),
            str(vf.lane_id),
        ]))
    return "\n".join(lines) + "\n"


def road_meta(rec: Recording) -> RoadMeta:
    return RoadMeta(rec.track_id, rec.road_length, list(rec.lane_boundaries), rec.frame_rate)


def serialize_meta(meta: RoadMeta) -> str:
    return "\n".join([
        f"track_id={meta.track_id}",
        f"road_length={repr(float(meta.road_length))}",
        f"frame_rate={repr(float(meta.frame_rate))}",
        "lane_boundaries=" + ",".join(repr(float(b)) for b in meta.lane_boundaries),
    ]) + "\n"


def parse_meta(text: str) -> RoadMeta:
    pairs = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        pairs[key] = value
    try:
        return RoadMeta(
            track_id=int(pairs["track_id"]),
            road_length=float(pairs["road_length"]),
            lane_boundaries=[float(v) for v in pairs["lane_boundaries"].split(",")],
            frame_rate=float(pairs.get("frame_rate", DEFAULT_FRAME_RATE)),
        )
    except KeyError as exc:
        raise ValueError(f"meta file missing key {exc}") from None


def meta_path_for(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta")


def write_recording(rec: Recording, csv_path) -> tuple[Path, Path]:
    """Write `<name>.csv` and its `<name>.meta` geometry sidecar."""
    csv_path = Path(csv_path)
    csv_path.write_text(serialize_recording(rec), encoding="utf-8", newline="\n")
    mp = meta_path_for(csv_path)
    mp.write_text(serialize_meta(road_meta(rec)), encoding="utf-8", newline="\n")
    return csv_path, mp


def read_recording(csv_path) -> Recording:
    csv_path = Path(csv_path)
    mp = meta_path_for(csv_path)
    if not mp.exists():
        raise FileNotFoundError(f"geometry sidecar {mp} not found for {csv_path}")
    meta = parse_meta(mp.read_text(encoding="utf-8"))
    return parse_tracks(csv_path.read_text(encoding="utf-8"), meta)


def read_recordings(path) -> list[Recording]:
    """Read one track file, or every *.csv in a directory (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.glob("*.csv"))
        if not files:
            raise FileNotFoundError(f"no *.csv track files in {path}")
        return [read_recording(p) for p in files]
    return [read_recording(path)]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_recording(rec: Recording) -> ValidationReport:
    """Check every Recording/VehicleFrame invariant; findings never raise."""
    report = ValidationReport()

    def err(location, message):
        report.findings.append(Finding("ERROR", location, message))

    seen: set[tuple[int, int]] = set()
    prev_key = None
    per_vehicle: dict[int, list[int]] = {}
    for vf in rec.frames:
        loc = f"frame={vf.frame},vehicle={vf.vehicle_id}"
        reason = _frame_violation(vf)
        if reason:
            err(loc, reason)
        if not 0.0 <= vf.x <= rec.road_length:
            err(loc, f"x={vf.x} outside [0, {rec.road_length}]")
        key = (vf.frame, vf.vehicle_id)
        if key in seen:
            err(loc, f"duplicate (frame, vehicle_id) pair {key}")
        seen.add(key)
        if prev_key is not None and key < prev_key:
            err(loc, "rows not ordered by (frame, vehicle_id)")
        prev_key = key
        per_vehicle.setdefault(vf.vehicle_id, []).append(vf.frame)
    for vid in sorted(per_vehicle):
        fs = sorted(per_vehicle[vid])
        if fs[-1] - fs[0] + 1 != len(set(fs)):
            err(f"vehicle={vid}", "frame sequence has gaps")
    if len(rec.lane_boundaries) < 2:
        err("recording", "need at least two lane boundaries")
    if rec.frame_rate <= 0:
        err("recording", "frame_rate must be > 0")
    return report


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def split_dataset(recordings: list[Recording], n_train: int, n_test: int, seed: int) -> DatasetSplit:
    """Deterministic seeded split, disjoint by track. Pure in its inputs."""
    if n_train < 0 or n_test < 0:
        raise InsufficientRecordings("split sizes must be non-negative")
    if n_train + n_test > len(recordings):
        raise InsufficientRecordings(
            f"need {n_train}+{n_test} recordings, have {len(recordings)}"
        )
    order = np.random.default_rng(seed).permutation(len(recordings))
    train = [recordings[i] for i in order[:n_train]]
    test = [recordings[i] for i in order[n_train:n_train + n_test]]
    return DatasetSplit(train=train, test=test)


# ---------------------------------------------------------------------------
# Demonstrations
# ---------------------------------------------------------------------------

def extract_demonstrations(rec: Recording, vehicle_id: int, obs_spec=None, index=None) -> list[Demonstration]:
    """One (observation, action) pair per frame the vehicle exists, except its last.

    The action is the vehicle's recorded (x_acceleration, y_acceleration) at
    that frame, exactly; the observation treats the vehicle as the ego and
    excludes it from its own neighbor search. Pass a prebuilt `sim.FrameIndex`
    when extracting many vehicles from the same recording.
    """
    from .sim import EgoState, FrameIndex, ObservationSpec, observe

    rows = [vf for vf in rec.frames if vf.vehicle_id == vehicle_id]
    if not rows:
        raise UnknownVehicle(vehicle_id)
    if obs_spec is None:
        obs_spec = ObservationSpec()
    if index is None:
        index = FrameIndex(rec)
    demos = []
    for vf in rows[:-1]:
        ego = EgoState(
            x=vf.x, y=vf.y,
            x_velocity=vf.x_velocity, y_velocity=vf.y_velocity,
            width=vf.width, height=vf.height, lane_id=vf.lane_id,
        )
        obs = observe(index, vf.frame, ego, obs_spec, exclude_id=vehicle_id)
        demos.append(Demonstration(
            observation=obs,
            action=np.array([vf.x_acceleration, vf.y_acceleration], dtype=float),
            vehicle_id=vehicle_id,
            frame=vf.frame,
        ))
    return demos


def extract_all_demonstrations(rec: Recording, obs_spec=None, vehicle_ids=None) -> list[Demonstration]:
    """Demonstrations for several expert vehicles, sharing one frame index."""
    from .sim import FrameIndex

    index = FrameIndex(rec)
    if vehicle_ids is None:
        vehicle_ids = rec.vehicle_ids()
    demos = []
    for vid in vehicle_ids:
        demos.extend(extract_demonstrations(rec, vid, obs_spec=obs_spec, index=index))
    return demos


def save_demonstrations(demos: list[Demonstration], path) -> Path:
    """Write demonstrations as CSV: vehicle_id, frame, obs_*, a_long, a_lat."""
    if not demos:
        raise ValueError("no demonstrations to save")
    width = demos[0].observation.shape[0]
    header = (["vehicle_id", "frame"]
              + [f"obs_{i:02d}" for i in range(width)]
              + ["a_long", "a_lat"])
    lines = [",".join(header)]
    for d in demos:
        parts = [str(d.vehicle_id), str(d.frame)]
        parts += [repr(float(v)) for v in d.observation]
        parts += [repr(float(d.action[0])), repr(float(d.action[1]))]
        lines.append(",".join(parts))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def load_demonstrations(path) -> list[Demonstration]:
    text = Path(path).read_text(encoding="utf-8")
    rows_iter = csv_reader(io.StringIO(text))
    header = next(rows_iter)
    obs_cols = [i for i, name in enumerate(header) if name.startswith("obs_")]
    if not obs_cols or header[0] != "vehicle_id":
        raise ValueError(f"{path}: not a demonstrations CSV")
    a_long_idx = header.index("a_long")
    a_lat_idx = header.index("a_lat")
    demos = []
    for row in rows_iter:
        if not row:
            continue
        demos.append(Demonstration(
            observation=np.array([float(row[i]) for i in obs_cols]),
            action=np.array([float(row[a_long_idx]), float(row[a_lat_idx])]),
            vehicle_id=int(row[0]),
            frame=int(row[1]),
        ))
    return demos


# ---------------------------------------------------------------------------
# Synthetic traffic (IDM car-following + scripted lane changes)
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    n_vehicles: int
    n_lanes: int = 3
    duration_s: float = 60.0
    seed: int = 0
    frame_rate: float = DEFAULT_FRAME_RATE
    lane_width: float = 4.0
    track_id: int = 1
    lane_change_rate: float = 0.15          # per-vehicle chance of one scripted change
    desired_speed_range: tuple[float, float] = (25.0, 40.0)


# IDM parameters (Treiber et al. style) for the generator
_IDM_ACCEL = 1.5        # max acceleration, m/s^2
_IDM_BRAKE = 2.0        # comfortable deceleration
_IDM_HEADWAY = 1.2      # safe time headway, s
_IDM_MIN_GAP = 2.0      # jam distance, m
_IDM_DELTA = 4.0
_HARD_BRAKE = 8.0
_LANE_CHANGE_S = 3.5    # maneuver duration; keeps |a_lat| <= ~1.61 m/s^2


def _idm_accel(v, v0, gap, dv):
    """IDM longitudinal acceleration; gap <= 0 means free road."""
    if gap is None:
        s_star_term = 0.0
    else:
        gap = max(gap, 0.1)
        s_star = _IDM_MIN_GAP + max(
            0.0, v * _IDM_HEADWAY + v * dv / (2.0 * math.sqrt(_IDM_ACCEL * _IDM_BRAKE))
        )
        s_star_term = (s_star / gap) ** 2
    a = _IDM_ACCEL * (1.0 - (v / v0) ** _IDM_DELTA - s_star_term)
    return min(max(a, -_HARD_BRAKE), _IDM_ACCEL)


def synth_traffic(cfg: SynthConfig) -> Recording:
    """Generate a collision-free multi-lane recording, deterministic per seed.

    Every vehicle exists for the full duration; the road is sized afterwards
    so all positions stay inside [0, road_length]. Longitudinal motion is IDM
    car-following integrated at the frame rate (semi-implicit Euler, matching
    the replay integrator); lateral motion is a smooth cosine ramp during
    scripted lane changes. During a maneuver the vehicle occupies both lanes
    for gap purposes so followers in the target lane react immediately.
    """
    if cfg.n_vehicles < 1 or cfg.n_lanes < 1:
        raise InvalidConfig("n_vehicles and n_lanes must be >= 1")
    if cfg.duration_s <= 0 or cfg.frame_rate <= 0 or cfg.lane_width <= 0:
        raise InvalidConfig("duration_s, frame_rate and lane_width must be > 0")
    lo, hi = cfg.desired_speed_range
    if not 0 < lo <= hi:
        raise InvalidConfig("desired_speed_range must be increasing and positive")

    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_vehicles
    n_frames = max(1, int(round(cfg.duration_s * cfg.frame_rate)))
    dt = 1.0 / cfg.frame_rate

    # static per-vehicle attributes (drawn in vehicle-id order)
    length = rng.uniform(4.0, 5.5, size=n)
    extent = rng.uniform(1.8, 2.1, size=n)
    v0 = rng.uniform(lo, hi, size=n)
    v = np.clip(rng.uniform(0.75 * lo, 1.1 * lo, size=n), 10.0, v0)

    # lane assignment round-robin, then stack each lane front to back with a
    # per-lane staggered front so lanes do not run side by side
    home_lane = np.array([(i % cfg.n_lanes) + 1 for i in range(n)])
    x = np.zeros(n)
    for lane in range(1, cfg.n_lanes + 1):
        members = [i for i in range(n) if home_lane[i] == lane]
        front = 60.0 + rng.uniform(0.0, 60.0)
        for k, i in enumerate(members):
            if k == 0:
                x[i] = front
            else:
                lead = members[k - 1]
                gap = _IDM_MIN_GAP + v[i] * _IDM_HEADWAY + rng.uniform(8.0, 35.0)
                x[i] = x[lead] - gap - length[i]
    x -= x.min()  # shift so the rearmost bumper starts at 0-ish
    x += 5.0

    # scripted lane-change schedule: at most one maneuver per vehicle; the
    # request retries every frame from req_frame until the target lane clears
    maneuver_frames = int(round(_LANE_CHANGE_S * cfg.frame_rate))
    wants_change = rng.random(n) < cfg.lane_change_rate
    req_frame = rng.integers(
        low=min(50, n_frames), high=max(n_frames - maneuver_frames - 10, 51), size=n
    )
    drawn_dir = rng.choice([-1, 1], size=n)
    req_dir = np.where(home_lane == 1, 1,
                       np.where(home_lane == cfg.n_lanes, -1, drawn_dir))

    lane_a = home_lane.copy()      # current lane claim
    lane_b = home_lane.copy()      # equals lane_a except mid-maneuver (target lane)
    man_start = np.full(n, -1)     # frame a maneuver started, -1 = idle/done
    man_from = np.zeros(n, dtype=int)
    changed = np.zeros(n, dtype=bool)

    def lane_center(lane):
        return (lane - 0.5) * cfg.lane_width

    y_center = lane_center(home_lane.astype(float))

    frames: list[VehicleFrame] = []
    for f in range(1, n_frames + 1):
        # candidate lead per vehicle: shares a lane claim, strictly ahead
        share = (
            (lane_a[:, None] == lane_a[None, :]) | (lane_a[:, None] == lane_b[None, :])
            | (lane_b[:, None] == lane_a[None, :]) | (lane_b[:, None] == lane_b[None, :])
        )
        gap_ij = x[None, :] - (x[:, None] + length[:, None])  # follower i -> lead j
        ahead = gap_ij > 0.0
        np.fill_diagonal(share, False)
        valid = share & ahead
        gaps = np.where(valid, gap_ij, np.inf)
        lead_idx = np.argmin(gaps, axis=1)
        lead_gap = gaps[np.arange(n), lead_idx]

        accel = np.empty(n)
        for i in range(n):
            if np.isfinite(lead_gap[i]):
                accel[i] = _idm_accel(v[i], v0[i], lead_gap[i], v[i] - v[lead_idx[i]])
            else:
                accel[i] = _idm_accel(v[i], v0[i], None, 0.0)

        # maneuver bookkeeping and lateral kinematics
        vy = np.zeros(n)
        ay = np.zeros(n)
        for i in range(n):
            if (man_start[i] < 0 and wants_change[i] and not changed[i]
                    and req_frame[i] <= f <= n_frames - maneuver_frames):
                target = lane_a[i] + req_dir[i]
                if 1 <= target <= cfg.n_lanes and _change_is_clear(
                        i, target, x, v, length, lane_a, lane_b):
                    man_start[i] = f
                    man_from[i] = lane_a[i]
                    lane_b[i] = target
            if man_start[i] >= 0 and not changed[i]:
                tau = (f - man_start[i]) * dt
                delta = (lane_b[i] - man_from[i]) * cfg.lane_width
                if tau >= _LANE_CHANGE_S:
                    y_center[i] = lane_center(float(lane_b[i]))
                    lane_a[i] = lane_b[i]
                    changed[i] = True
                else:
                    phase = math.pi * tau / _LANE_CHANGE_S
                    y_center[i] = lane_center(float(man_from[i])) + delta * (1.0 - math.cos(phase)) / 2.0
                    vy[i] = delta * math.pi / (2.0 * _LANE_CHANGE_S) * math.sin(phase)
                    ay[i] = delta * math.pi ** 2 / (2.0 * _LANE_CHANGE_S ** 2) * math.cos(phase)

        for i in range(n):
            rec_lane = int(np.clip(y_center[i] // cfg.lane_width + 1, 1, cfg.n_lanes))
            frames.append(VehicleFrame(
                frame=f, vehicle_id=i + 1,
                x=float(x[i]), y=float(y_center[i] - extent[i] / 2.0),
                width=float(length[i]), height=float(extent[i]),
                x_velocity=float(v[i]), y_velocity=float(vy[i]),
                x_acceleration=float(accel[i]), y_acceleration=float(ay[i]),
                lane_id=rec_lane,
            ))

        # semi-implicit Euler, same rule the replay integrator uses
        v = np.clip(v + accel * dt, 0.0, None)
        x = x + v * dt

    road_length = float(math.ceil(max(vf.x + vf.width for vf in frames) + 50.0))
    boundaries = [i * cfg.lane_width for i in range(cfg.n_lanes + 1)]
    return Recording(
        track_id=cfg.track_id,
        frames=frames,
        road_length=road_length,
        lane_boundaries=boundaries,
        frame_rate=cfg.frame_rate,
    )


def _change_is_clear(i, target, x, v, length, lane_a, lane_b):
    """Conservative clearance check for a scripted lane change into `target`."""
    front_i = x[i] + length[i]
    for j in range(len(x)):
        if j == i or (lane_a[j] != target and lane_b[j] != target):
            continue
        if x[j] >= front_i:  # potential new lead
            gap = x[j] - front_i
            if gap < 20.0 + _LANE_CHANGE_S * max(0.0, v[i] - v[j]):
                return False
        elif x[j] + length[j] <= x[i]:  # potential new follower
            gap = x[i] - (x[j] + length[j])
            if gap < 20.0 + _LANE_CHANGE_S * max(0.0, v[j] - v[i]):
                return False
        else:  # longitudinal overlap with a target-lane vehicle
            return False
    return True
