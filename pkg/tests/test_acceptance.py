"""End-to-end acceptance suite.

Each test states its criterion, tolerance, and runtime budget directly;
full-scale pipeline runs are shared through the session fixtures in
conftest.py.
"""

import copy
import json
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import CONFIGS, random_stable_lti, small_config_doc, write_config
from ddreach import cli, dmdc, mc, mlp, pipeline, reach
from ddreach.config import load_config
from ddreach.sets import BoxSet


def test_01_dmdc_exact_recovery_50_systems():
    """50 random stable LTI systems (6 states, 2 inputs), width-20 windows
    with persistently exciting inputs: recovery error <= 1e-6, < 5 s."""
    start = time.perf_counter()
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(trial)
        A, B = random_stable_lti(rng, 6, 2)
        x = rng.normal(size=6)
        xs, us = [x], []
        for _ in range(20):
            u = rng.normal(size=2)
            us.append(u)
            x = A @ x + B @ u
            xs.append(x)
        us.append(rng.normal(size=2))
        window = dmdc.SnapshotWindow(xi=np.array(xs).T,
                                     upsilon=np.array(us).T, dt=1.0)
        step = dmdc.fit(window)
        err = np.linalg.norm(step.A - A) + np.linalg.norm(step.B - B)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    assert worst <= 1e-6, f"worst recovery error {worst:.3e}"
    assert elapsed < 5.0, f"recovery suite took {elapsed:.2f} s"


def test_02_polytopic_soundness_double_integrator():
    """Double integrator, K=50, 1e5 mixed-scheme samples: zero violations at
    1e-9, support gaps >= -1e-9, vertex-scheme support maxima attained by the
    contact points within 1e-4; < 30 s."""
    start = time.perf_counter()
    dt = 0.1
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.0], [dt]])
    x0 = BoxSet(center=np.zeros(2), half_width=np.ones(2))
    omega = BoxSet(center=np.zeros(1), half_width=np.ones(1))
    K = 50
    lifts = [dmdc.LtvStep(A=A, B=B, k=k, smallest_sv=1.0, rank=3)
             for k in range(K)]
    tube = reach.reach_sequence(reach.init_contacts(x0), lifts, omega, K,
                                dt=dt)
    cloud = mc.mc_reach(mc.lti_oracle(A, B), x0, omega, 100000, K, dt,
                        scheme="mixed", seed=3)
    report = mc.containment_report(tube, cloud, tol=1e-9)
    assert report.violation_fraction.max() == 0.0
    assert report.support_gap.min() >= -1e-9

    vertex = mc.mc_reach(mc.lti_oracle(A, B), x0, omega, 100000, K, dt,
                         scheme="vertex", seed=4)
    worst = 0.0
    for front, X in zip(tube.fronts, vertex.steps):
        contact_support = np.einsum("ij,ij->i", front.normals, front.contacts)
        mc_support = (X @ front.normals.T).max(axis=0)
        worst = max(worst, float(np.abs(contact_support - mc_support).max()))
    assert worst <= 1e-4, f"contact/support deviation {worst:.3e}"
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"soundness test took {elapsed:.2f} s"


def test_03_inner_outer_sandwich(nominal_run, failure_run):
    """Every contact point of every stored front satisfies every halfspace
    at 1e-9, for both full-scale runs and an exact LTI tube."""
    for run in (nominal_run, failure_run):
        for front in run["tube"].fronts:
            front.validate(1e-9)
        # the archived artifacts must satisfy the same invariant
        stored = pipeline.load_tube(run["cfg"])
        for front in stored.fronts:
            front.validate(1e-9)
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.0], [0.1]])
    lifts = [dmdc.LtvStep(A=A, B=B, k=k, smallest_sv=1.0, rank=3)
             for k in range(50)]
    tube = reach.reach_sequence(
        reach.init_contacts(BoxSet(center=np.zeros(2),
                                   half_width=np.ones(2))),
        lifts, BoxSet(center=np.zeros(1), half_width=np.ones(1)), 50)
    for front in tube.fronts:
        front.validate(1e-9)


def test_04_gradient_correctness_100_nets():
    """Analytic vs central finite-difference gradients over 100 random toy
    networks: max relative error <= 1e-5."""
    worst = 0.0
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        n_x, n_u, hidden = 3, 2, 6
        states = [rng.normal(size=(5, n_x))]
        inputs = [rng.normal(size=(4, n_u))]
        dt = 0.1
        params = mlp.init_params(rng, n_x + n_u, hidden, n_x)
        _, grads = mlp.loss_and_gradient(params, states, inputs, dt)
        analytic = np.concatenate([g.ravel() for g in grads])
        flat = params.flat()
        numeric = np.empty_like(flat)
        eps = 1e-6
        for i in range(flat.size):
            up, dn = flat.copy(), flat.copy()
            up[i] += eps
            dn[i] -= eps
            lu = mlp.multistep_loss(params.with_flat(up), states, inputs, dt)
            ld = mlp.multistep_loss(params.with_flat(dn), states, inputs, dt)
            numeric[i] = (lu - ld) / (2.0 * eps)
        rel = (np.linalg.norm(analytic - numeric)
               / max(np.linalg.norm(numeric), 1e-12))
        worst = max(worst, rel)
    assert worst <= 1e-5, f"worst relative gradient error {worst:.3e}"


def test_05_training_reproduction(nominal_run):
    """Full-scale training: final multistep loss <= 1e-2 within 10 min."""
    final_loss = nominal_run["history"][-1]
    assert final_loss <= 1e-2, f"final loss {final_loss:.3e}"
    assert nominal_run["train_wall"] <= 600.0, (
        f"training took {nominal_run['train_wall']:.1f} s")
    assert len(nominal_run["history"]) == 2000


def test_06_real_time_loop_w8_and_parallel_bitwise(nominal_run,
                                                   tmp_path_factory):
    """Width-8 reach loop over 24 hyperplanes, K=50: per-step wall time
    < 0.5 s, and per-hyperplane parallelism reproduces the sequential
    results bitwise."""
    base = nominal_run["cfg"]
    out_seq = str(tmp_path_factory.mktemp("w8_seq"))
    out_par = str(tmp_path_factory.mktemp("w8_par"))
    for src in ("model.json",):
        for out in (out_seq, out_par):
            with open(os.path.join(base.out_dir, src)) as fh:
                data = fh.read()
            with open(os.path.join(out, src), "w") as fh:
                fh.write(data)
    cfg_seq = copy.deepcopy(base)
    cfg_seq.out_dir = out_seq
    cfg_seq.dmdc = replace(base.dmdc, width=8, n_extra_seeds=40)
    cfg_seq.reach = replace(base.reach, parallel=False)
    cfg_par = copy.deepcopy(base)
    cfg_par.out_dir = out_par
    cfg_par.dmdc = replace(base.dmdc, width=8, n_extra_seeds=40)
    cfg_par.reach = replace(base.reach, parallel=True)

    tube_seq, _, timings = pipeline.cmd_reach(cfg_seq)
    tube_par, _, _ = pipeline.cmd_reach(cfg_par)
    assert tube_seq.fronts[0].normals.shape == (24, 12)
    assert len(tube_seq.fronts) == 51
    assert max(timings) < 0.5, f"max step wall time {max(timings):.3f} s"
    for fs, fp in zip(tube_seq.fronts, tube_par.fronts):
        assert np.array_equal(fs.normals, fp.normals)
        assert np.array_equal(fs.offsets, fp.offsets)
        assert np.array_equal(fs.contacts, fp.contacts)


def test_07_nn_pipeline_containment(nominal_run):
    """Nominal scenario, 1e4 MC rollouts of the learned model: outer
    containment violation fraction <= 2% at every step under the relative
    slack rule; the report artifact is archived."""
    cfg = nominal_run["cfg"]
    assert cfg.mc.n_samples == 10000
    report = nominal_run["report_nn"]
    worst = float(report.violation_fraction.max())
    assert worst <= 0.02, f"worst violation fraction {worst:.4f}"
    path = os.path.join(cfg.out_dir, "mc_report.json")
    assert os.path.exists(path)
    doc = json.load(open(path))
    assert max(doc["violation_fraction"]) <= 0.02


def test_08_rotor_failure_differentiation(nominal_run, failure_run):
    """The failure scenario's admissible set and per-plane hull extents
    differ from nominal; the signed differences are pinned to the baseline
    captured from the first validated run."""
    nom_cfg, fail_cfg = nominal_run["cfg"], failure_run["cfg"]
    omega_nom = nom_cfg.control.omega_box(nom_cfg.quad)
    omega_fail = fail_cfg.control.omega_box(fail_cfg.quad)
    assert omega_fail.center_at(0.0)[1] == 0.0
    assert omega_fail.center_at(0.0)[2] == 0.0
    assert not np.allclose(omega_nom.center_at(0.0), omega_fail.center_at(0.0))
    assert np.array_equal(omega_nom.half_width, omega_fail.half_width)

    ext_nom = pipeline.hull_extents(nom_cfg)
    ext_fail = pipeline.hull_extents(fail_cfg)
    baseline = {
        "yz": [-11.649633445719326, -37.510355249903235],
        "zx": [-37.510355249903235, -11.976088859074466],
        "xy": [-11.976088859074466, -11.649633445719326],
    }
    for plane, expect in baseline.items():
        diff = [ext_fail[plane][i] - ext_nom[plane][i] for i in range(2)]
        assert np.allclose(diff, expect, rtol=1e-6, atol=1e-9), (
            f"plane {plane}: diff {diff} vs baseline {expect}")


def test_09_pipeline_determinism(tmp_path):
    """Two complete pipeline runs with the same config produce bitwise
    identical numeric artifacts (wall-clock fields excluded)."""
    outs = [str(tmp_path / "a"), str(tmp_path / "b")]
    doc = small_config_doc(outs[0])
    for out in outs:
        doc["out_dir"] = out
        path = write_config(tmp_path, doc)
        for cmd in ("generate", "train", "reach", "validate", "report"):
            assert cli.main(["--config", path, cmd]) == cli.EXIT_OK

    def numeric_files(out):
        names = []
        for root, _, files in os.walk(out):
            for f in files:
                names.append(os.path.relpath(os.path.join(root, f), out))
        return sorted(names)

    files_a, files_b = numeric_files(outs[0]), numeric_files(outs[1])
    assert files_a == files_b
    # wall-clock-bearing artifacts are not numeric results
    skipped = {"timing.csv", "reach_summary.json", "report.txt"}
    for name in files_a:
        if os.path.basename(name) in skipped:
            continue
        with open(os.path.join(outs[0], name)) as fh:
            a = fh.read()
        with open(os.path.join(outs[1], name)) as fh:
            b = fh.read()
        if os.path.basename(name).startswith("reach_"):
            a = json.dumps({**json.loads(a), "wall_time": 0.0})
            b = json.dumps({**json.loads(b), "wall_time": 0.0})
        assert a == b, f"artifact {name} differs between runs"
