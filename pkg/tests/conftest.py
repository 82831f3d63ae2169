import json
import os
import time

import numpy as np
import pytest

from ddreach import pipeline
from ddreach.config import load_config

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(REPO, "configs")


def small_config_doc(out_dir):
    """A reduced-scale run config that exercises every stage in seconds."""
    return {
        "out_dir": out_dir,
        "scenario": "nominal",
        "dataset": {"n_traj": 6, "n_steps": 12, "dt": 0.1, "seed": 0},
        "train": {"epochs": 60, "hidden": 32, "seed": 0},
        "dmdc": {"width": 1, "n_extra_seeds": 60, "excite_seed": 1},
        "reach": {"horizon": 8},
        "mc": {"n_samples": 400, "seed": 2},
    }


def write_config(tmp_path, doc):
    path = os.path.join(str(tmp_path), "config.json")
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


@pytest.fixture
def small_config(tmp_path):
    out = os.path.join(str(tmp_path), "run")
    return write_config(tmp_path, small_config_doc(out)), out


def _full_run(config_name, out_dir):
    cfg = load_config(os.path.join(CONFIGS, config_name), out_dir=out_dir)
    pipeline.cmd_generate(cfg)
    t0 = time.perf_counter()
    _, history, train_wall = pipeline.cmd_train(cfg)
    tube, lifts, timings = pipeline.cmd_reach(cfg)
    report_nn, report_truth = pipeline.cmd_validate(cfg)
    pipeline.cmd_report(cfg)
    return {
        "cfg": cfg,
        "history": history,
        "train_wall": train_wall,
        "tube": tube,
        "lifts": lifts,
        "timings": timings,
        "report_nn": report_nn,
        "report_truth": report_truth,
        "total_wall": time.perf_counter() - t0,
    }


@pytest.fixture(scope="session")
def nominal_run(tmp_path_factory):
    """Full-scale nominal pipeline run shared across acceptance tests."""
    out = str(tmp_path_factory.mktemp("nominal"))
    return _full_run("nominal.json", out)


@pytest.fixture(scope="session")
def failure_run(tmp_path_factory):
    """Full-scale rotor-failure pipeline run."""
    out = str(tmp_path_factory.mktemp("rotor_failure"))
    return _full_run("rotor_failure.json", out)


def random_stable_lti(rng, n_x, n_u, spectral_radius=0.9):
    A = rng.normal(size=(n_x, n_x))
    A *= spectral_radius / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(n_x, n_u))
    return A, B
