import math
from pathlib import Path

import numpy as np
import pytest

import roadrl

ROOT = Path(__file__).resolve().parents[2]
SMALL_MAP = str(ROOT / "maps" / "small.map")
DESK = str(ROOT / "configs" / "desk.json")


def test_reward_reference_cases():
    assert roadrl.compute_reward(True, 30.0, 2.0, 2.5, 50.0) == (-1.0, "collision")
    reward, term = roadrl.compute_reward(False, 10.0, 3.0, 4.0, 1.0)
    assert reward == 100.0 and term == "goal"
    reward, term = roadrl.compute_reward(False, 25.0 / 3.6, 40.0, 40.0, 4.0)
    assert abs(reward) <= 1e-9 and term == "none"


def test_action_keys():
    assert roadrl.ACTION_COUNT == 9
    assert roadrl.action_index(0, 0) == 4
    assert roadrl.action_index(-1, -1) == 0
    assert roadrl.action_index(1, 1) == 8


def test_plan_route_gaps():
    pts, cost = roadrl.plan_route(SMALL_MAP, "right-turn")
    assert pts.shape[1] == 2 and pts.shape[0] >= 2
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.all(gaps > 0) and np.all(gaps <= 8.0)
    assert cost == pytest.approx(120.0)
    with pytest.raises(roadrl.MapError):
        roadrl.plan_route(SMALL_MAP, "no-such-route")


def test_env_episode():
    env = roadrl.Env(DESK, seed=3)
    assert "left-turn" in env.routes
    obs = env.reset("straight-urban")
    assert obs["image"].shape == (2, 64, 64)
    assert obs["image"].min() >= 0.0 and obs["image"].max() <= 1.0
    assert obs["waypoint_distance"] is not None
    total = 0.0
    done = False
    steps = 0
    while not done and steps < 2000:
        obs, reward, done, info = env.step(roadrl.action_index(0, 1))
        total += reward
        steps += 1
    assert done
    assert info["cumulative_reward"] == pytest.approx(total, abs=1e-9)
    with pytest.raises(Exception):
        env.step(4)


def test_end_to_end_hides_waypoint_distance(tmp_path):
    cfg = tmp_path / "e2e.json"
    cfg.write_text('{"mode": "end-to-end", "map": "%s"}' % SMALL_MAP)
    env = roadrl.Env(str(cfg))
    assert env.mode == "end-to-end"
    assert env.reset()["waypoint_distance"] is None


def test_train_is_deterministic(tmp_path):
    a = roadrl.train(DESK, str(tmp_path / "a"), episodes=3, seed=5)
    b = roadrl.train(DESK, str(tmp_path / "b"), episodes=3, seed=5)
    assert len(a) == 3
    assert a == b
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert all(math.isfinite(r["cumulative_reward"]) for r in a)


def test_learning_curve_normalized():
    curve = roadrl.learning_curve([float(i % 7) for i in range(300)], 100)
    assert len(curve) == 201
    assert min(curve) == 0.0 and max(curve) == 1.0
