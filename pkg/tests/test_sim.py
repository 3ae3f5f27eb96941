import numpy as np
import pytest
from hypothesis import given, strategies as st

from driveclone.data import Recording, SynthConfig, synth_traffic
from driveclone.sim import (
    Action, ActionBounds, EgoState, EpisodeFinished, FrameIndex, InvalidSpawn,
    NoValidSpawn, ObservationSpec, ReplayEnv, SpawnSpec, TRAJECTORY_COLUMNS,
    detect_collision, detect_lane_change, export_trajectory, integrate,
    lane_index, observe, quantize_action,
)

BOUNDARIES = [0.0, 4.0, 8.0, 12.0]


def make_vf(frame, vid, x, lane=1, vx=30.0, width=4.5, height=2.0, **kw):
    from driveclone.data import VehicleFrame
    y = kw.pop("y", (lane - 0.5) * 4.0 - height / 2.0)
    return VehicleFrame(frame=frame, vehicle_id=vid, x=x, y=y, width=width,
                        height=height, x_velocity=vx, y_velocity=kw.pop("vy", 0.0),
                        x_acceleration=kw.pop("ax", 0.0),
                        y_acceleration=kw.pop("ay", 0.0), lane_id=lane)


def make_rec(frames, road_length=1000.0, boundaries=BOUNDARIES):
    frames = sorted(frames, key=lambda v: (v.frame, v.vehicle_id))
    return Recording(track_id=1, frames=frames, road_length=road_length,
                     lane_boundaries=list(boundaries))


def empty_road(n_frames=100):
    # one faraway parked vehicle so every frame exists in the index
    return make_rec([make_vf(f, 99, 900.0, lane=3, vx=0.0) for f in range(1, n_frames + 1)])


# ---------------------------------------------------------------------------
# integrate
# ---------------------------------------------------------------------------

def test_integrate_semi_implicit_euler_arithmetic():
    s = EgoState(x=0.0, y=1.0, x_velocity=10.0, y_velocity=0.0,
                 width=4.5, height=2.0, lane_id=1)
    out = integrate(s, Action(2.0, 0.0), 0.04, BOUNDARIES)
    assert out.x_velocity == pytest.approx(10.08)
    assert out.x == pytest.approx(0.4032)


def test_integrate_floors_longitudinal_velocity_at_zero():
    s = EgoState(x=0.0, y=1.0, x_velocity=0.05, y_velocity=0.0,
                 width=4.5, height=2.0, lane_id=1)
    out = integrate(s, Action(-6.0, 0.0), 0.04, BOUNDARIES)
    assert out.x_velocity == 0.0
    assert out.x == 0.0


def test_integrate_lateral_motion_crosses_lane_boundary():
    s = EgoState(x=0.0, y=3.8 - 1.0, x_velocity=20.0, y_velocity=2.0,
                 width=4.5, height=2.0, lane_id=1)
    out = integrate(s, Action(0.0, 2.0), 0.2, BOUNDARIES)
    assert out.lane_id == s.lane_id + 1
    back = integrate(out, Action(0.0, -5.0), 1.0, BOUNDARIES)
    assert back.lane_id == out.lane_id - 1


def test_integrate_rejects_nonpositive_dt():
    s = EgoState(x=0.0, y=1.0, x_velocity=10.0, y_velocity=0.0,
                 width=4.5, height=2.0, lane_id=1)
    with pytest.raises(ValueError):
        integrate(s, Action(0.0, 0.0), 0.0, BOUNDARIES)


# ---------------------------------------------------------------------------
# collision detection
# ---------------------------------------------------------------------------

def test_identical_rectangles_collide():
    r = (0.0, 0.0, 4.0, 2.0)
    assert detect_collision(r, [r]) is True


def test_edge_sharing_rectangles_do_not_collide():
    a = (0.0, 0.0, 4.0, 2.0)
    assert detect_collision(a, [(4.0, 0.0, 4.0, 2.0)]) is False
    assert detect_collision(a, [(0.0, 2.0, 4.0, 2.0)]) is False


def sampling_oracle(a, b, n=100):
    """Dense grid of interior points of a, checked strictly inside b."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    xs = ax + (np.arange(n) + 0.5) * aw / n
    ys = ay + (np.arange(n) + 0.5) * ah / n
    inside_x = (xs > bx) & (xs < bx + bw)
    inside_y = (ys > by) & (ys < by + bh)
    return bool(inside_x.any() and inside_y.any())


def random_lattice_rect(rng):
    # coordinates on a 0.25 lattice, sizes >= 0.5 and <= 20: any positive
    # overlap is then at least 0.25 wide, which a 100x100 grid always hits
    x = rng.integers(0, 80) * 0.25
    y = rng.integers(0, 80) * 0.25
    w = rng.integers(2, 80) * 0.25
    h = rng.integers(2, 80) * 0.25
    return (x, y, w, h)


def test_collision_agrees_with_sampling_oracle(rng):
    for _ in range(300):
        a = random_lattice_rect(rng)
        b = random_lattice_rect(rng)
        assert detect_collision(a, [b]) == sampling_oracle(a, b)


@given(st.integers(0, 40), st.integers(0, 40), st.integers(1, 40), st.integers(1, 40),
       st.integers(0, 40), st.integers(0, 40), st.integers(1, 40), st.integers(1, 40))
def test_collision_is_symmetric(ax, ay, aw, ah, bx, by, bw, bh):
    a = (ax * 0.5, ay * 0.5, aw * 0.5, ah * 0.5)
    b = (bx * 0.5, by * 0.5, bw * 0.5, bh * 0.5)
    assert detect_collision(a, [b]) == detect_collision(b, [a])


def test_detect_lane_change():
    assert detect_lane_change(2, 2) is False
    assert detect_lane_change(2, 3) is True


def test_replayed_synthetic_lane_change_counted_once():
    rec = synth_traffic(SynthConfig(n_vehicles=10, n_lanes=3, duration_s=40.0,
                                    seed=5, lane_change_rate=1.0))
    per_vehicle = {}
    prev = {}
    for vf in rec.frames:
        if vf.vehicle_id in prev:
            per_vehicle[vf.vehicle_id] = per_vehicle.get(vf.vehicle_id, 0) + int(
                detect_lane_change(prev[vf.vehicle_id], vf.lane_id))
        prev[vf.vehicle_id] = vf.lane_id
    changed = {vid: n for vid, n in per_vehicle.items() if n}
    assert changed, "fixture should contain at least one lane change"
    assert all(n == 1 for n in changed.values())


# ---------------------------------------------------------------------------
# observe
# ---------------------------------------------------------------------------

def ego_in_lane(lane, x=100.0, vx=30.0):
    return EgoState(x=x, y=(lane - 0.5) * 4.0 - 1.0, x_velocity=vx, y_velocity=0.0,
                    width=4.5, height=2.0, lane_id=lane)


def test_observe_no_vehicles_in_range_all_absent():
    rec = empty_road()
    spec = ObservationSpec()
    obs = observe(rec, 1, ego_in_lane(1), spec)
    assert obs.shape == (14,)
    for base in range(2, 14, 2):
        assert obs[base] == 1.0 and obs[base + 1] == 0.0


def test_observe_single_lead_gap_normalization():
    ego = ego_in_lane(1, x=100.0)
    lead = make_vf(1, 2, 204.5, lane=1, vx=25.0)  # bumper gap = 204.5 - 104.5 = 100
    rec = make_rec([lead])
    obs = observe(rec, 1, ego, ObservationSpec())
    assert obs[2] == pytest.approx(0.5)
    assert obs[3] == pytest.approx(-5.0 / 50.0)


def observe_oracle(rec, frame, ego, spec, exclude_id=None):
    """Brute-force slot assignment over all vehicles in the frame."""
    rows = [vf for vf in rec.frames if vf.frame == frame and vf.vehicle_id != exclude_id]
    n_lanes = len(rec.lane_boundaries) - 1
    lane = min(max(ego.lane_id, 1), n_lanes)
    lane_width = rec.lane_boundaries[lane] - rec.lane_boundaries[lane - 1]
    center = (rec.lane_boundaries[lane - 1] + rec.lane_boundaries[lane]) / 2.0
    out = [ego.x_velocity / spec.velocity_scale,
           (ego.y + ego.height / 2.0 - center) / lane_width]
    ego_c = ego.x + ego.width / 2.0
    for offset in (0, -1, 1):
        slot_lane = lane + offset
        for direction in ("lead", "rear"):
            best, best_dist = None, None
            if 1 <= slot_lane <= n_lanes:
                for vf in rows:
                    if vf.lane_id != slot_lane:
                        continue
                    rel = vf.x + vf.width / 2.0 - ego_c
                    if abs(rel) > spec.sensing_range or rel == 0.0:
                        continue
                    if (direction == "lead") != (rel > 0):
                        continue
                    if best is None or abs(rel) < best_dist:
                        best, best_dist = vf, abs(rel)
            if best is None:
                out += [spec.sensing_range / spec.gap_scale, 0.0]
            else:
                gap = (best.x - (ego.x + ego.width) if direction == "lead"
                       else ego.x - (best.x + best.width))
                out += [gap / spec.gap_scale,
                        (best.x_velocity - ego.x_velocity) / spec.velocity_scale]
    return np.clip(np.array(out), -spec.clip, spec.clip)


def test_observe_matches_brute_force_oracle_on_crowded_frames(rng, dense_recording):
    spec = ObservationSpec()
    index = FrameIndex(dense_recording)
    for _ in range(60):
        frame = int(rng.integers(index.min_frame, index.max_frame + 1))
        lane = int(rng.integers(1, 4))
        x = float(rng.uniform(0.0, dense_recording.road_length - 5.0))
        ego = EgoState(x=x, y=(lane - 0.5) * 4.0 - 1.0,
                       x_velocity=float(rng.uniform(0.0, 45.0)), y_velocity=0.0,
                       width=4.5, height=2.0, lane_id=lane)
        got = observe(index, frame, ego, spec)
        want = observe_oracle(dense_recording, frame, ego, spec)
        assert np.allclose(got, want, atol=1e-12), (frame, lane, x)


def test_observe_components_always_within_bounds(rng, dense_recording):
    spec = ObservationSpec()
    index = FrameIndex(dense_recording)
    for _ in range(200):
        ego = EgoState(x=float(rng.uniform(0, dense_recording.road_length - 5)),
                       y=float(rng.uniform(-6.0, 18.0)),
                       x_velocity=float(rng.uniform(0.0, 60.0)),
                       y_velocity=float(rng.uniform(-5.0, 5.0)),
                       width=4.5, height=2.0,
                       lane_id=int(rng.integers(1, 4)))
        frame = int(rng.integers(index.min_frame, index.max_frame + 1))
        obs = observe(index, frame, ego, spec)
        assert np.isfinite(obs).all()
        assert np.all(obs >= -1.5) and np.all(obs <= 1.5)


# ---------------------------------------------------------------------------
# ReplayEnv
# ---------------------------------------------------------------------------

def test_reset_empty_lane_gives_absent_neighbors():
    env = ReplayEnv()
    obs = env.reset(empty_road(), SpawnSpec(frame=1, lane=1, x=100.0))
    for base in range(2, 14, 2):
        assert obs[base] == 1.0 and obs[base + 1] == 0.0


def test_reset_behind_recorded_vehicle_sees_it():
    # lead 30 m ahead of the ego front bumper, same recorded lane speed
    frames = [make_vf(f, 1, 134.5, lane=1, vx=28.0) for f in (1, 2, 3)]
    env = ReplayEnv()
    obs = env.reset(make_rec(frames), SpawnSpec(frame=1, lane=1, x=100.0))
    assert obs[2] == pytest.approx(30.0 / 200.0)
    assert obs[3] == pytest.approx(0.0)  # spawn speed = lane average = lead speed


def test_reset_spawn_frame_beyond_recording_end():
    env = ReplayEnv()
    with pytest.raises(InvalidSpawn):
        env.reset(empty_road(50), SpawnSpec(frame=51, lane=1, x=100.0))


def test_reset_spawn_on_occupied_cell_invalid():
    frames = [make_vf(f, 1, 100.0, lane=1) for f in (1, 2)]
    env = ReplayEnv()
    with pytest.raises(InvalidSpawn):
        env.reset(make_rec(frames), SpawnSpec(frame=1, lane=1, x=101.0))


def test_step_zero_action_advances_exactly_by_velocity():
    env = ReplayEnv()
    env.reset(empty_road(), SpawnSpec(frame=1, lane=1, x=100.0))
    v0 = env.ego.x_velocity
    x0 = env.ego.x
    _, info = env.step(Action(0.0, 0.0))
    assert env.ego.x == x0 + v0 * 0.04
    assert env.ego.x_velocity == v0
    assert not info.done


def test_step_collision_with_recorded_vehicle_terminates():
    # parked vehicle just ahead; ego drives into it
    frames = [make_vf(f, 1, 112.0, lane=1, vx=0.0) for f in range(1, 40)]
    rec = make_rec(frames)
    env = ReplayEnv()
    env.reset(rec, SpawnSpec(frame=1, lane=1, x=100.0))
    env.ego.x_velocity = 10.0
    done_info = None
    for _ in range(30):
        _, info = env.step(Action(0.0, 0.0))
        if info.done:
            done_info = info
            break
    assert done_info is not None and done_info.collision
    assert done_info.done


def test_step_past_recording_end_sets_end_of_track():
    env = ReplayEnv()
    env.reset(empty_road(3), SpawnSpec(frame=2, lane=1, x=100.0))
    _, info = env.step(Action(0.0, 0.0))
    assert not info.done
    _, info = env.step(Action(0.0, 0.0))
    assert info.end_of_track and info.done


def test_step_after_done_raises():
    env = ReplayEnv()
    env.reset(empty_road(3), SpawnSpec(frame=2, lane=1, x=100.0))
    env.step(Action(0.0, 0.0))
    env.step(Action(0.0, 0.0))
    with pytest.raises(EpisodeFinished):
        env.step(Action(0.0, 0.0))


def test_step_off_road_terminates():
    env = ReplayEnv()
    env.reset(empty_road(200), SpawnSpec(frame=1, lane=1, x=100.0))
    steps = 0
    while True:
        _, info = env.step(Action(0.0, -2.0))
        steps += 1
        if info.done:
            break
    assert info.off_road and steps < 100


def test_step_clamps_actions_to_bounds():
    env = ReplayEnv()
    env.reset(empty_road(), SpawnSpec(frame=1, lane=1, x=100.0))
    v0 = env.ego.x_velocity
    env.step(Action(100.0, 0.0))
    assert env.ego.x_velocity == pytest.approx(v0 + 4.0 * 0.04)  # a_long max = 4


def test_step_deterministic_sequences(dense_recording):
    def run():
        env = ReplayEnv([dense_recording])
        rng = np.random.default_rng(5)
        obs = env.reset_random(rng)
        trace = [obs.copy()]
        for _ in range(40):
            obs, info = env.step(Action(0.3, 0.0))
            trace.append(obs.copy())
            if info.done:
                break
        return np.vstack(trace)

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_replay_fidelity_bit_exact(dense_recording):
    env = ReplayEnv([dense_recording])
    env.reset_random(np.random.default_rng(0))
    by_frame = {}
    for vf in dense_recording.frames:
        by_frame.setdefault(vf.frame, []).append(vf)
    for frame, rows in by_frame.items():
        sl = env.vehicles_at(frame)
        assert list(sl.vehicle_ids) == [vf.vehicle_id for vf in rows]
        for k, vf in enumerate(rows):
            assert sl.x[k] == vf.x and sl.y[k] == vf.y
            assert sl.x_velocity[k] == vf.x_velocity
            assert sl.y_velocity[k] == vf.y_velocity


def test_sample_spawn_raises_when_no_room():
    # single short lane fully occupied
    frames = [make_vf(1, vid, 10.0 + 6.0 * vid, lane=1) for vid in range(1, 9)]
    frames += [make_vf(2, vid, 10.0 + 6.0 * vid, lane=1) for vid in range(1, 9)]
    rec = make_rec(frames, road_length=70.0, boundaries=[0.0, 4.0])
    env = ReplayEnv([rec])
    with pytest.raises(NoValidSpawn):
        env.sample_spawn(rec, np.random.default_rng(0), min_horizon=1, attempts=30)


def test_trajectory_export_round_trip(tmp_path):
    env = ReplayEnv()
    env.reset(empty_road(), SpawnSpec(frame=1, lane=1, x=100.0))
    for _ in range(5):
        env.step(Action(1.0, 0.0))
    path = export_trajectory(env.trajectory, tmp_path / "ep.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[5] == repr(1.0)


# ---------------------------------------------------------------------------
# quantizer
# ---------------------------------------------------------------------------

def test_quantize_action_snaps_to_grid():
    bounds = ActionBounds()
    a = quantize_action(Action(0.3, 0.4), bounds, n_long=9, n_lat=5)
    # long grid: -6..4 step 1.25 -> 0.25 nearest to 0.3; lat grid: -2..2 step 1
    assert a.a_long == pytest.approx(0.25)
    assert a.a_lat == pytest.approx(0.0)


def test_quantize_action_endpoints_and_clamp():
    bounds = ActionBounds()
    a = quantize_action(Action(99.0, -99.0), bounds)
    assert a.a_long == pytest.approx(4.0)
    assert a.a_lat == pytest.approx(-2.0)
