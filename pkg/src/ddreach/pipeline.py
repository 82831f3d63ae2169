"""End-to-end orchestration: data generation, network training, online
windowed lifting with polytopic propagation, Monte-Carlo validation, and
report aggregation. Each stage reads/writes file artifacts under the run's
output directory."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import replace
from typing import List

import numpy as np

from . import dmdc, mc, mlp, quadrotor, reach
from .config import RunConfig, STATE_NAMES
from .quadrotor import ControlConfig


class ValidationFailure(RuntimeError):
    """Monte-Carlo containment exceeded the configured threshold."""


def _dataset_dir(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "dataset")


def _model_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, "model.json")


def omega_box(cfg: RunConfig):
    return cfg.control.omega_box(cfg.quad)


def cmd_generate(cfg: RunConfig) -> str:
    """Simulate and write the training dataset."""
    ds_cfg = cfg.dataset
    control = ControlConfig(amplitude=cfg.control.amplitude,
                            frequency=cfg.control.frequency,
                            noise_half_width=cfg.control.noise_half_width,
                            scenario=ds_cfg.scenario)
    ds = quadrotor.generate_dataset(ds_cfg.n_traj, ds_cfg.n_steps, ds_cfg.dt,
                                    cfg.x0, control, cfg.quad, ds_cfg.seed)
    outdir = _dataset_dir(cfg)
    quadrotor.save_dataset(ds, outdir, cfg.quad, control, cfg.x0)
    return outdir


def cmd_train(cfg: RunConfig):
    """Train on the stored dataset; write checkpoint and loss history."""
    ds = quadrotor.load_dataset(_dataset_dir(cfg))
    start = time.perf_counter()
    params, history = mlp.train(ds, cfg.train)
    wall = time.perf_counter() - start
    mlp.save_checkpoint(params, _model_path(cfg), seed=cfg.train.seed,
                        final_loss=history[-1])
    with open(os.path.join(cfg.out_dir, "loss_history.csv"), "w",
              newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "loss"])
        for i, loss in enumerate(history):
            wr.writerow([i, format(loss, ".17g")])
    print(f"final loss {history[-1]:.6e} after {len(history)} epochs "
          f"({wall:.1f} s)")
    return params, history, wall


def _excitation_sampler(omega):
    def sampler(t, rng):
        c = omega.center_at(t)
        return c + rng.uniform(-omega.half_width, omega.half_width)
    return sampler


def augment_box(omega):
    """Append a frozen constant-1 coordinate to the admissible box.

    The lift is fitted with this extra channel so it carries an affine term
    (x+ = A x + B u + c); a strictly linear lift cannot absorb the constant
    part of the dynamics (gravity against hover thrust, and the drifting
    sinusoid center), which showed up as large one-step errors in the
    vertical-velocity channel. The extremal-control sign rule leaves a
    zero-width coordinate at its center, so propagation is unchanged.
    """
    from .sets import BoxSet
    return BoxSet(
        center=np.append(omega.center, 1.0),
        half_width=np.append(omega.half_width, 0.0),
        center_fn=lambda t: np.append(omega.center_at(t), 1.0),
    )


def fit_invertible_lift(oracle, front: reach.ContactFront, sampler,
                        cfg: RunConfig, dt: float, k: int) -> dmdc.LtvStep:
    """Fit a lift local to the current front, widening the excitation
    windows until A supports a reliable adjoint solve.

    One window is rolled from every contact point, plus n_extra_seeds
    points drawn uniformly from the contacts' bounding box, and all
    transitions are pooled into a single regression: a lone window excites
    only a low-rank state subspace and yields a singular A, while seeds
    spread over the region being propagated condition the fit to exactly
    that region. The attempt index keeps each retry's excitation stream
    deterministic.
    """
    width = cfg.dmdc.width
    lo = front.contacts.min(axis=0)
    hi = front.contacts.max(axis=0)
    last_exc: Exception | None = None
    for attempt in range(5):
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.dmdc.excite_seed, k, attempt)))
        seeds = list(front.contacts)
        if cfg.dmdc.n_extra_seeds:
            seeds += list(rng.uniform(lo, hi,
                                      size=(cfg.dmdc.n_extra_seeds, lo.size)))
        windows = [
            dmdc.build_window(oracle, seed, sampler, width, dt,
                              rng, t0=k * dt, k=k)
            for seed in seeds
        ]
        lift = dmdc.fit_windows(windows, cfg.dmdc.svd_tol)
        cond = np.linalg.cond(lift.A)
        if np.isfinite(cond) and cond <= reach.COND_LIMIT:
            return lift
        last_exc = reach.IllConditionedLiftError(k, cond)
        width *= 2
    raise last_exc


def cmd_reach(cfg: RunConfig):
    """Online loop: excite the learned model around the current front,
    fit a lift, propagate the supporting hyperplanes; emit per-step
    artifacts and a timing table."""
    params = mlp.load_checkpoint(_model_path(cfg))
    dt = cfg.dataset.dt
    omega = augment_box(omega_box(cfg))
    sampler = _excitation_sampler(omega)

    def oracle(x, u, t):
        return mlp.rk4_step(params, x, u[:4], dt)

    front = reach.init_contacts(cfg.x0)
    planes = cfg.reach.plane_indices()
    plane_names = ["".join(p) for p in cfg.reach.planes]
    os.makedirs(cfg.out_dir, exist_ok=True)
    reach.save_front(front, os.path.join(cfg.out_dir, "reach_0.json"))
    for name, (i, j) in zip(plane_names, planes):
        reach.save_hull_csv(reach.inner_hull_2d(front, (i, j)),
                            os.path.join(cfg.out_dir, f"hull_{name}_0.csv"))

    lifts: List[dmdc.LtvStep] = []
    timings = []
    fronts = [front]
    for k in range(cfg.reach.horizon):
        start = time.perf_counter()
        lift = fit_invertible_lift(oracle, front, sampler, cfg, dt, k)
        front = reach.propagate_front(front, lift, omega, t=k * dt,
                                      parallel=cfg.reach.parallel)
        wall = time.perf_counter() - start
        lifts.append(lift)
        fronts.append(front)
        timings.append(wall)
        lift.to_json(os.path.join(cfg.out_dir, f"ltv_{k}.json"))
        reach.save_front(front, os.path.join(cfg.out_dir,
                                             f"reach_{k + 1}.json"),
                         wall_time=wall)
        for name, (i, j) in zip(plane_names, planes):
            reach.save_hull_csv(
                reach.inner_hull_2d(front, (i, j)),
                os.path.join(cfg.out_dir, f"hull_{name}_{k + 1}.csv"))

    with open(os.path.join(cfg.out_dir, "timing.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "wall_time"])
        for k, wall in enumerate(timings):
            wr.writerow([k, format(wall, ".6f")])
    summary = {
        "scenario": cfg.scenario,
        "horizon": cfg.reach.horizon,
        "dt": dt,
        "omega_center_t0": omega.center_at(0.0).tolist(),
        "omega_half_width": omega.half_width.tolist(),
        "total_wall_time": sum(timings),
        "max_step_wall_time": max(timings),
    }
    with open(os.path.join(cfg.out_dir, "reach_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return reach.ReachTube(fronts=fronts), lifts, timings


def load_tube(cfg: RunConfig) -> reach.ReachTube:
    fronts = []
    for k in range(cfg.reach.horizon + 1):
        path = os.path.join(cfg.out_dir, f"reach_{k}.json")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing reach artifact {path}")
        fronts.append(reach.load_front(path))
    return reach.ReachTube(fronts=fronts)


def cmd_validate(cfg: RunConfig):
    """Monte-Carlo soundness check of the stored tube against the learned
    model (gating) and the ground-truth plant (informational)."""
    tube = load_tube(cfg)
    params = mlp.load_checkpoint(_model_path(cfg))
    dt = cfg.dataset.dt
    omega = omega_box(cfg)
    K = cfg.reach.horizon

    def nn_oracle(X, U, t):
        return mlp.rk4_step_batch(params, X, U, dt)

    def truth_oracle(X, U, t):
        return quadrotor.integrate_step_batch(X, U, dt, cfg.quad)

    cloud_nn = mc.mc_reach(nn_oracle, cfg.x0, omega, cfg.mc.n_samples, K, dt,
                           scheme=cfg.mc.scheme, seed=cfg.mc.seed)
    report_nn = mc.containment_report(tube, cloud_nn,
                                      slack_fraction=cfg.mc.slack_fraction)
    report_nn.to_json(os.path.join(cfg.out_dir, "mc_report.json"), extra={
        "dynamics": "learned_model",
        "scheme": cfg.mc.scheme,
        "seed": cfg.mc.seed,
        "n_samples": cfg.mc.n_samples,
        "slack_fraction": cfg.mc.slack_fraction,
    })

    cloud_truth = mc.mc_reach(truth_oracle, cfg.x0, omega, cfg.mc.n_samples,
                              K, dt, scheme=cfg.mc.scheme, seed=cfg.mc.seed)
    report_truth = mc.containment_report(tube, cloud_truth,
                                         slack_fraction=cfg.mc.slack_fraction)
    report_truth.to_json(os.path.join(cfg.out_dir, "mc_report_truth.json"),
                         extra={"dynamics": "true_plant",
                                "scheme": cfg.mc.scheme,
                                "seed": cfg.mc.seed,
                                "n_samples": cfg.mc.n_samples,
                                "slack_fraction": cfg.mc.slack_fraction})

    worst = float(report_nn.violation_fraction.max())
    print(f"learned-model containment: worst per-step violation fraction "
          f"{worst:.4f} (limit {cfg.mc.max_violation_fraction})")
    if worst > cfg.mc.max_violation_fraction:
        raise ValidationFailure(
            f"violation fraction {worst:.4f} exceeds "
            f"{cfg.mc.max_violation_fraction}")
    return report_nn, report_truth


def cmd_report(cfg: RunConfig) -> str:
    """Aggregate losses, timing, containment, and per-plane hull areas."""
    tube = load_tube(cfg)
    plane_names = ["".join(p) for p in cfg.reach.planes]
    planes = cfg.reach.plane_indices()

    areas = {name: [] for name in plane_names}
    for front in tube.fronts:
        for name, (i, j) in zip(plane_names, planes):
            areas[name].append(reach.hull_area(
                reach.inner_hull_2d(front, (i, j))))
    with open(os.path.join(cfg.out_dir, "hull_areas.csv"), "w",
              newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step"] + plane_names)
        for k in range(len(tube.fronts)):
            wr.writerow([k] + [format(areas[n][k], ".17g")
                               for n in plane_names])

    lines = [f"run: {cfg.out_dir} (scenario {cfg.scenario})"]
    loss_path = os.path.join(cfg.out_dir, "loss_history.csv")
    if os.path.exists(loss_path):
        with open(loss_path) as fh:
            rows = list(csv.reader(fh))[1:]
        if rows:
            lines.append(f"training: {len(rows)} epochs, "
                         f"final loss {float(rows[-1][1]):.6e}")
    timing_path = os.path.join(cfg.out_dir, "timing.csv")
    if os.path.exists(timing_path):
        with open(timing_path) as fh:
            walls = [float(r[1]) for r in list(csv.reader(fh))[1:]]
        lines.append(f"reach: {len(walls)} steps, max step "
                     f"{max(walls):.4f} s, total {sum(walls):.2f} s")
    mc_path = os.path.join(cfg.out_dir, "mc_report.json")
    if os.path.exists(mc_path):
        with open(mc_path) as fh:
            doc = json.load(fh)
        frac = doc["violation_fraction"]
        lines.append(f"containment: worst violation fraction "
                     f"{max(frac):.4f} over {len(frac)} steps")
    for name in plane_names:
        lines.append(f"hull area {name}: start {areas[name][0]:.4e}, "
                     f"end {areas[name][-1]:.4e}, "
                     f"max {max(areas[name]):.4e}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(cfg.out_dir, "report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return text


def hull_extents(cfg: RunConfig) -> dict:
    """Per-plane extent (max minus min contact coordinate over the whole
    tube) for scenario comparisons."""
    tube = load_tube(cfg)
    out = {}
    for name, (i, j) in zip(["".join(p) for p in cfg.reach.planes],
                            cfg.reach.plane_indices()):
        pts = np.vstack([f.contacts[:, [i, j]] for f in tube.fronts])
        out[name] = (pts.max(axis=0) - pts.min(axis=0)).tolist()
    return out
