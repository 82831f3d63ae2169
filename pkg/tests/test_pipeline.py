import json
import os

import numpy as np
import pytest

from ddreach import cli, pipeline, reach
from ddreach.config import load_config
from ddreach.sets import BoxSet


def run_cli(*args):
    return cli.main(list(args))


def test_end_to_end_small(small_config):
    path, out = small_config
    assert run_cli("--config", path, "generate") == cli.EXIT_OK
    assert os.path.exists(os.path.join(out, "dataset", "manifest.json"))
    assert run_cli("--config", path, "train") == cli.EXIT_OK
    assert os.path.exists(os.path.join(out, "model.json"))
    assert os.path.exists(os.path.join(out, "loss_history.csv"))
    assert run_cli("--config", path, "reach") == cli.EXIT_OK
    cfg = load_config(path)
    for k in range(cfg.reach.horizon + 1):
        assert os.path.exists(os.path.join(out, f"reach_{k}.json"))
    for k in range(cfg.reach.horizon):
        assert os.path.exists(os.path.join(out, f"ltv_{k}.json"))
    assert os.path.exists(os.path.join(out, "timing.csv"))
    assert os.path.exists(os.path.join(out, "hull_yz_0.csv"))
    assert run_cli("--config", path, "validate") == cli.EXIT_OK
    assert os.path.exists(os.path.join(out, "mc_report.json"))
    assert os.path.exists(os.path.join(out, "mc_report_truth.json"))
    assert run_cli("--config", path, "report") == cli.EXIT_OK
    assert os.path.exists(os.path.join(out, "report.txt"))
    assert os.path.exists(os.path.join(out, "hull_areas.csv"))

    # tube artifacts satisfy the inner/outer sandwich
    tube = pipeline.load_tube(cfg)
    for front in tube.fronts:
        front.validate(1e-9)

    # tampering with the stored tube must trip validation
    doc = json.load(open(os.path.join(out, "reach_3.json")))
    doc["offsets"] = [o - 0.5 for o in doc["offsets"]]
    json.dump(doc, open(os.path.join(out, "reach_3.json"), "w"))
    assert run_cli("--config", path, "validate") == cli.EXIT_VALIDATION


def test_missing_artifacts_exit_config(small_config):
    path, out = small_config
    assert run_cli("--config", path, "validate") == cli.EXIT_CONFIG
    assert run_cli("--config", path, "train") == cli.EXIT_CONFIG


def test_bad_config_exit(tmp_path):
    assert run_cli("--config", str(tmp_path / "nope.json"),
                   "generate") == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run_cli("--config", str(bad), "generate") == cli.EXIT_CONFIG


def test_numeric_failure_exit(small_config, monkeypatch):
    path, _ = small_config

    def boom(cfg):
        raise reach.IllConditionedLiftError(0, 1e30)

    monkeypatch.setattr(pipeline, "cmd_reach", boom)
    assert run_cli("--config", path, "reach") == cli.EXIT_NUMERIC


def test_augment_box_adds_frozen_channel():
    box = BoxSet(center=np.array([1.0, 2.0]), half_width=np.array([0.5, 0.5]),
                 center_fn=lambda t: np.array([1.0 + t, 2.0]))
    aug = pipeline.augment_box(box)
    assert aug.dim == 3
    assert aug.center[-1] == 1.0 and aug.half_width[-1] == 0.0
    assert aug.center_at(2.0)[-1] == 1.0
    assert aug.center_at(2.0)[0] == 3.0


def test_lift_fitting_recovers_linear_oracle(small_config):
    path, _ = small_config
    cfg = load_config(path)
    rng = np.random.default_rng(0)
    A = np.eye(12) + 0.01 * rng.normal(size=(12, 12))
    B = rng.normal(size=(12, 5)) * 0.1

    def oracle(x, u, t):
        return A @ x + B @ u

    omega = pipeline.augment_box(pipeline.omega_box(cfg))
    sampler = pipeline._excitation_sampler(omega)
    front = reach.init_contacts(cfg.x0)
    lift = pipeline.fit_invertible_lift(oracle, front, sampler, cfg,
                                        dt=0.1, k=0)
    assert np.linalg.norm(lift.A - A) < 1e-8
    assert np.linalg.norm(lift.B - B) < 1e-8
    assert lift.residual.max() < 1e-10


def test_seed_override_changes_artifacts(small_config):
    path, out = small_config
    assert run_cli("--config", path, "--seed", "11", "generate") == cli.EXIT_OK
    a = open(os.path.join(out, "dataset", "traj_0.csv")).read()
    assert run_cli("--config", path, "--seed", "12", "generate") == cli.EXIT_OK
    b = open(os.path.join(out, "dataset", "traj_0.csv")).read()
    assert a != b


def test_scenario_override_changes_dataset_manifest(small_config, tmp_path):
    path, out = small_config
    assert run_cli("--config", path, "--out", str(tmp_path / "f"),
                   "--scenario", "rotor_failure", "generate") == cli.EXIT_OK
    manifest = json.load(open(tmp_path / "f" / "dataset" / "manifest.json"))
    # training data remain nominal; only the admissible set changes scenario
    assert manifest["scenario"] == "nominal"


def test_hull_extents(small_config):
    path, out = small_config
    for cmd in ("generate", "train", "reach"):
        assert run_cli("--config", path, cmd) == cli.EXIT_OK
    cfg = load_config(path)
    ext = pipeline.hull_extents(cfg)
    assert set(ext) == {"yz", "zx", "xy"}
    for pair in ext.values():
        assert len(pair) == 2 and all(v > 0 for v in pair)
