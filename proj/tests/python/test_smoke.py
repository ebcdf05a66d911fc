import json
import math

import pytest

import rtslab


def test_env_roundtrip():
    env = rtslab.make_env("cartpole-continuous")
    assert env.spec.state_dim == 4
    s = env.reset(7)
    assert s == rtslab.make_env("cartpole-continuous").reset(7)
    nxt, reward, done, reason = env.step([0.0])
    assert nxt == env.true_transition(s, [0.0])
    assert reward == 1.0 and not done and reason == "running"


def test_unknown_physics_key_is_config_error():
    with pytest.raises(rtslab.ConfigError):
        rtslab.make_env("cartpole-continuous", {"gravty": 9.8})


def test_trigger_overwrite():
    trig = rtslab.single_dim_trigger(4, 3, 5.0)
    assert rtslab.apply_trigger(trig, [0.1, 0.2, 0.3, 0.4]) == pytest.approx([0.1, 0.2, 0.3, 5.0])
    with pytest.raises(rtslab.DimensionError):
        rtslab.apply_trigger(trig, [0.0, 0.0])


def test_pipeline_end_to_end(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({
        "agent": {"total_steps": 1500, "warmup_steps": 300},
        "defender": {"dataset_size": 1200, "epochs": 1, "hidden": [16, 16]},
        "eval": {"first_seed": 1000, "episodes": 2},
        "output_dir": str(tmp_path / "run"),
    }))
    with pytest.raises(rtslab.MissingArtifactError):
        rtslab.run_stage(str(cfg), "eval")
    for stage in ("train", "defend", "eval"):
        rtslab.run_stage(str(cfg), stage)
    with pytest.raises(rtslab.OutputExistsError):
        rtslab.run_stage(str(cfg), "train")
    assert "dual-objective-defended" in rtslab.run_stage(str(cfg), "report")

    run = tmp_path / "run"
    policy = rtslab.load_policy(str(run / "poisoned_policy.bin"))
    trigger = rtslab.load_trigger(str(run / "trigger.json"))
    model = rtslab.load_model(str(run / "defender_dual.bin"))
    env = rtslab.make_env("cartpole-continuous")
    assert model.threshold > 0 and math.isfinite(model.threshold)

    ep = rtslab.run_episode(policy, env, 20, 2, trigger, model, 1000)
    assert len(ep["attacked"]) == ep["length"]
    model.threshold = math.inf
    guarded = rtslab.run_episode(policy, env, 20, 2, trigger, model, 1000)
    bare = rtslab.run_episode(policy, env, 20, 2, trigger, None, 1000)
    assert guarded["return"] == bare["return"] and not any(guarded["flagged"])

    summary = json.loads((run / "eval_summary.json").read_text())
    assert summary["config_hash"] == rtslab.config_hash(str(cfg))
