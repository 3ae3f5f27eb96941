"""Policy evaluation over held-out recordings.

Each recording gets a fixed number of seed-chosen ego insertions; episodes run
the policy deterministically (mixture mode / Gaussian mean / zero-noise
generator) until collision, off-road, end of track or the step cap.
Velocity and acceleration means are frame-weighted across all episodes, so
aggregation is invariant to episode ordering. Collisions count episodes that
ended in a collision; lane changes are ego lane transitions.

Exported CSVs (floats printed with 6 significant digits):

    comparison.csv      policy,collisions,velocity_kmph,acceleration,
                        lane_changes,lane_change_rate,episodes
    track_profiles.csv  Track,expert_vel_kmph,expert_acc,
                        <policy>_vel_kmph,<policy>_acc,...
"""
from __future__ import annotations

import io
from csv import reader as csv_reader
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversarial import Generator, generator_predict, load_generator
from .bc import Policy, load_policy, predict
from .data import Recording
from .nn import load_checkpoint
from .sim import ActionBounds, NoValidSpawn, ObservationSpec, ReplayEnv

COMPARISON_COLUMNS = [
    "policy", "collisions", "velocity_kmph", "acceleration",
    "lane_changes", "lane_change_rate", "episodes",
]


class DivisionByZeroDrivers(ZeroDivisionError):
    pass


class IoFailure(OSError):
    pass


@dataclass
class EvalConfig:
    insertions_per_track: int = 30
    max_steps: int | None = None   # None = run to the end of the recording
    seed: int = 0


@dataclass
class MetricsRow:
    policy: str
    collisions: int
    velocity_kmph: float
    acceleration: float
    lane_changes: int
    lane_change_rate: float
    episodes: int


@dataclass
class TrackProfile:
    track_id: int
    expert_vel_kmph: float
    expert_acc: float
    policy_means: dict[str, tuple[float, float]] = field(default_factory=dict)


def kmh(v: float) -> float:
    """m/s -> km/h, exactly v * 3.6."""
    return v * 3.6


def lane_change_rate(changes: int, drivers: int) -> float:
    if drivers < 1:
        raise DivisionByZeroDrivers("drivers must be >= 1")
    return changes / drivers


def expert_profiles(recordings) -> list[TrackProfile]:
    """Per-track mean recorded velocity (km/h) and longitudinal acceleration.

    Averages run over all vehicles and frames; recordings without frames are
    skipped.
    """
    profiles = []
    for rec in recordings:
        if not rec.frames:
            continue
        vel = float(np.mean([vf.x_velocity for vf in rec.frames]))
        acc = float(np.mean([vf.x_acceleration for vf in rec.frames]))
        profiles.append(TrackProfile(track_id=rec.track_id,
                                     expert_vel_kmph=kmh(vel), expert_acc=acc))
    return profiles


def _actor(policy):
    if isinstance(policy, Generator):
        return lambda obs: generator_predict(policy, obs, mode="deterministic")
    if isinstance(policy, Policy):
        return lambda obs: predict(policy, obs, mode="deterministic")
    raise TypeError(f"cannot evaluate object of type {type(policy).__name__}")


def _policy_name(policy) -> str:
    return getattr(policy, "kind", type(policy).__name__)


def run_evaluation(policy, recordings: list[Recording], cfg: EvalConfig,
                   name: str | None = None) -> tuple[MetricsRow, list[TrackProfile]]:
    """Insert and run the policy `insertions_per_track` times per recording."""
    if not recordings:
        raise ValueError("no recordings to evaluate on")
    name = name or _policy_name(policy)
    act = _actor(policy)
    obs_spec = getattr(policy, "obs_spec", ObservationSpec())
    bounds = getattr(policy, "bounds", ActionBounds())

    root = np.random.SeedSequence(cfg.seed)
    streams = root.spawn(len(recordings))

    total_v = total_a = 0.0
    total_frames = 0
    collisions = lane_changes = episodes = 0
    profiles = expert_profiles(recordings)
    by_track = {p.track_id: p for p in profiles}

    for rec, stream in zip(recordings, streams):
        rng = np.random.default_rng(stream)
        env = ReplayEnv([rec], obs_spec=obs_spec, bounds=bounds,
                        max_episode_steps=cfg.max_steps)
        track_v = track_a = 0.0
        track_frames = 0
        for _ in range(cfg.insertions_per_track):
            obs = env.reset_random(rng)
            episodes += 1
            while True:
                action = act(obs)
                obs, info = env.step(action)
                track_v += env.ego.x_velocity
                track_a += env.trajectory[-1][5]
                track_frames += 1
                if info.lane_change:
                    lane_changes += 1
                if info.done:
                    if info.collision:
                        collisions += 1
                    break
        total_v += track_v
        total_a += track_a
        total_frames += track_frames
        if rec.track_id in by_track and track_frames:
            by_track[rec.track_id].policy_means[name] = (
                kmh(track_v / track_frames), track_a / track_frames)

    row = MetricsRow(
        policy=name,
        collisions=collisions,
        velocity_kmph=kmh(total_v / total_frames) if total_frames else 0.0,
        acceleration=total_a / total_frames if total_frames else 0.0,
        lane_changes=lane_changes,
        lane_change_rate=lane_change_rate(lane_changes, max(episodes, 1)),
        episodes=episodes,
    )
    return row, profiles


def load_actor(path):
    """Load a policy checkpoint of any kind (ffn/mdn/gaussian/generator)."""
    header, _ = load_checkpoint(path)
    if header.get("kind") == "gan_generator":
        return load_generator(path)
    return load_policy(path)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


def merge_profiles(profile_lists) -> list[TrackProfile]:
    """Join per-policy TrackProfile lists on the track id."""
    merged: dict[int, TrackProfile] = {}
    for profiles in profile_lists:
        for p in profiles:
            tgt = merged.setdefault(p.track_id, TrackProfile(
                track_id=p.track_id, expert_vel_kmph=p.expert_vel_kmph,
                expert_acc=p.expert_acc))
            tgt.policy_means.update(p.policy_means)
    return [merged[k] for k in sorted(merged)]


def export_table(rows: list[MetricsRow], profiles: list[TrackProfile],
                 out_dir) -> tuple[Path, Path]:
    """Write comparison.csv and track_profiles.csv into `out_dir`."""
    if not rows:
        raise ValueError("no metrics rows to export")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        comparison = out_dir / "comparison.csv"
        lines = [",".join(COMPARISON_COLUMNS)]
        for r in rows:
            lines.append(",".join([
                r.policy, str(r.collisions), _fmt(r.velocity_kmph),
                _fmt(r.acceleration), str(r.lane_changes),
                _fmt(r.lane_change_rate), str(r.episodes),
            ]))
        comparison.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

        policy_names = [r.policy for r in rows]
        header = ["Track", "expert_vel_kmph", "expert_acc"]
        for name in policy_names:
            header += [f"{name}_vel_kmph", f"{name}_acc"]
        plines = [",".join(header)]
        for p in sorted(profiles, key=lambda p: p.track_id):
            cells = [str(p.track_id), _fmt(p.expert_vel_kmph), _fmt(p.expert_acc)]
            for name in policy_names:
                vel, acc = p.policy_means.get(name, (float("nan"), float("nan")))
                cells += [_fmt(vel), _fmt(acc)]
            plines.append(",".join(cells))
        profile_path = out_dir / "track_profiles.csv"
        profile_path.write_text("\n".join(plines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"failed to write evaluation tables: {exc}") from exc
    return comparison, profile_path


def read_comparison(path) -> list[MetricsRow]:
    text = Path(path).read_text(encoding="utf-8")
    rows_iter = csv_reader(io.StringIO(text))
    header = next(rows_iter)
    if header != COMPARISON_COLUMNS:
        raise ValueError(f"{path}: unexpected comparison header {header}")
    rows = []
    for row in rows_iter:
        if not row:
            continue
        rows.append(MetricsRow(
            policy=row[0], collisions=int(row[1]), velocity_kmph=float(row[2]),
            acceleration=float(row[3]), lane_changes=int(row[4]),
            lane_change_rate=float(row[5]), episodes=int(row[6]),
        ))
    return rows


def read_track_profiles(path) -> list[TrackProfile]:
    text = Path(path).read_text(encoding="utf-8")
    rows_iter = csv_reader(io.StringIO(text))
    header = next(rows_iter)
    if header[:3] != ["Track", "expert_vel_kmph", "expert_acc"]:
        raise ValueError(f"{path}: unexpected profile header {header}")
    names = [h[: -len("_vel_kmph")] for h in header[3::2]]
    profiles = []
    for row in rows_iter:
        if not row:
            continue
        p = TrackProfile(track_id=int(row[0]), expert_vel_kmph=float(row[1]),
                         expert_acc=float(row[2]))
        for i, name in enumerate(names):
            vel = float(row[3 + 2 * i])
            acc = float(row[4 + 2 * i])
            if not (np.isnan(vel) and np.isnan(acc)):
                p.policy_means[name] = (vel, acc)
        profiles.append(p)
    return profiles
