"""12-DOF quadrotor simulator: rotor mixing, rigid-body dynamics, RK4
integration, noisy sinusoidal rotor commands, and trajectory dataset
generation/serialization.

State layout (12-vector):
    [x, y, z, vx, vy, vz, phi, theta, psi, p, q, r]
with attitude angles kept unwrapped so trajectories stay continuous.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .sets import BoxSet

POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
RATE = slice(9, 12)

CSV_HEADER = [
    "t", "x", "y", "z", "vx", "vy", "vz",
    "phi", "theta", "psi", "p", "q", "r",
    "w1", "w2", "w3", "w4",
]

SCENARIOS = ("nominal", "rotor_failure")
FAILED_ROTORS = (1, 2)  # rotors 2 and 3, zero-based


class IntegrationBlowup(RuntimeError):
    """Raised when an integration step produces a non-finite state."""


@dataclass
class QuadParams:
    """Physical parameters. Defaults give an O(1) hover rotor speed."""

    m: float = 1.0
    g: float = 9.81
    Ixx: float = 1.0
    Iyy: float = 1.0
    Izz: float = 2.0
    kf: float = 1.0
    km: float = 0.01
    l: float = 0.02
    # two circulating conventions for the translational trig terms:
    # "alt" keeps a cos*sin product in the y-acceleration that differs
    # from the usual textbook derivation; "standard" is the textbook form.
    translational_form: str = "alt"

    def __post_init__(self):
        for name in ("m", "Ixx", "Iyy", "Izz", "kf", "km", "l"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.translational_form not in ("alt", "standard"):
            raise ValueError("translational_form must be 'alt' or 'standard'")

    @property
    def hover_speed(self) -> float:
        """Rotor speed at which total thrust balances gravity."""
        return float(np.sqrt(self.m * self.g / (4.0 * self.kf)))


@dataclass
class ControlConfig:
    """Per-rotor sinusoidal nominal command with additive uniform noise.

    v_i(t) = hover_speed + amplitude[i] * sin(2*pi*frequency[i]*t); the
    applied command is v_i(t) + w_i with w_i ~ U[-noise_half_width, +...].
    Under the rotor_failure scenario the failed rotors output noise only.
    """

    amplitude: np.ndarray = field(default_factory=lambda: np.full(4, 0.5))
    frequency: np.ndarray = field(default_factory=lambda: np.full(4, 0.2))
    noise_half_width: float = 0.25
    scenario: str = "nominal"

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.frequency = np.asarray(self.frequency, dtype=float)
        if self.amplitude.shape != (4,) or self.frequency.shape != (4,):
            raise ValueError("amplitude and frequency must be 4-vectors")
        if self.noise_half_width < 0:
            raise ValueError("noise_half_width must be nonnegative")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")

    def nominal(self, t: float, params: QuadParams) -> np.ndarray:
        v = params.hover_speed + self.amplitude * np.sin(2.0 * np.pi * self.frequency * t)
        if self.scenario == "rotor_failure":
            v = v.copy()
            v[list(FAILED_ROTORS)] = 0.0
        return v

    def omega_box(self, params: QuadParams) -> BoxSet:
        """Admissible control set: noise box around the nominal command."""
        hw = np.full(4, self.noise_half_width)
        return BoxSet(
            center=self.nominal(0.0, params),
            half_width=hw,
            center_fn=lambda t: self.nominal(t, params),
        )


def mix_rotor_speeds(omega: np.ndarray, p: QuadParams) -> np.ndarray:
    """Map rotor speed commands to generalized forces [u1, u2, u3, u4].

    u = M @ omega**2 with the thrust/roll/pitch/yaw mixing matrix built
    from kf, km and the arm length l.
    """
    omega = np.asarray(omega, dtype=float)
    kf, km, lk = p.kf, p.km, p.l * p.kf
    M = np.array([
        [kf, kf, kf, kf],
        [-lk, lk, lk, -lk],
        [lk, lk, -lk, -lk],
        [km, -km, km, -km],
    ])
    return M @ (omega * omega)


def state_derivative(xi: np.ndarray, u: np.ndarray, p: QuadParams) -> np.ndarray:
    """Time derivative of the 12-vector state under generalized forces u."""
    xi = np.asarray(xi, dtype=float)
    phi, theta, psi = xi[ATT]
    dphi, dtheta, dpsi = xi[RATE]
    u1, u2, u3, u4 = u

    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    sps, cps = np.sin(psi), np.cos(psi)

    a = u1 / p.m
    if p.translational_form == "alt":
        ax = -a * (sphi * cps + cphi * cps * sth)
        ay = -a * (cphi * sps * sth - cps * sps)
    else:
        ax = -a * (cphi * sth * cps + sphi * sps)
        ay = -a * (cphi * sth * sps - sphi * cps)
    az = p.g - a * (cphi * cth)

    ddphi = (u2 - (p.Izz - p.Iyy) * dtheta * dpsi) / p.Ixx
    ddtheta = (u3 - (p.Ixx - p.Izz) * dphi * dpsi) / p.Iyy
    ddpsi = (u4 - (p.Iyy - p.Ixx) * dtheta * dphi) / p.Izz

    out = np.empty(12)
    out[POS] = xi[VEL]
    out[VEL] = (ax, ay, az)
    out[ATT] = xi[RATE]
    out[RATE] = (ddphi, ddtheta, ddpsi)
    return out


def integrate_step(xi: np.ndarray, omega: np.ndarray, dt: float, p: QuadParams) -> np.ndarray:
    """One RK4 step with the rotor command held constant (zero-order hold)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = mix_rotor_speeds(omega, p)
    k1 = state_derivative(xi, u, p)
    k2 = state_derivative(xi + 0.5 * dt * k1, u, p)
    k3 = state_derivative(xi + 0.5 * dt * k2, u, p)
    k4 = state_derivative(xi + dt * k3, u, p)
    out = xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowup("non-finite state after RK4 step")
    return out


def state_derivative_batch(X: np.ndarray, U: np.ndarray, p: QuadParams) -> np.ndarray:
    """Vectorized state_derivative over rows of X (states) and U (forces)."""
    phi, theta, psi = X[:, 6], X[:, 7], X[:, 8]
    dphi, dtheta, dpsi = X[:, 9], X[:, 10], X[:, 11]
    u1, u2, u3, u4 = U[:, 0], U[:, 1], U[:, 2], U[:, 3]

    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    sps, cps = np.sin(psi), np.cos(psi)

    a = u1 / p.m
    if p.translational_form == "alt":
        ax = -a * (sphi * cps + cphi * cps * sth)
        ay = -a * (cphi * sps * sth - cps * sps)
    else:
        ax = -a * (cphi * sth * cps + sphi * sps)
        ay = -a * (cphi * sth * sps - sphi * cps)
    az = p.g - a * (cphi * cth)

    out = np.empty_like(X)
    out[:, POS] = X[:, VEL]
    out[:, 3], out[:, 4], out[:, 5] = ax, ay, az
    out[:, ATT] = X[:, RATE]
    out[:, 9] = (u2 - (p.Izz - p.Iyy) * dtheta * dpsi) / p.Ixx
    out[:, 10] = (u3 - (p.Ixx - p.Izz) * dphi * dpsi) / p.Iyy
    out[:, 11] = (u4 - (p.Iyy - p.Ixx) * dtheta * dphi) / p.Izz
    return out


def integrate_step_batch(X: np.ndarray, Omega: np.ndarray, dt: float,
                         p: QuadParams) -> np.ndarray:
    """Vectorized integrate_step over rows of X and rotor commands Omega."""
    kf, km, lk = p.kf, p.km, p.l * p.kf
    M = np.array([
        [kf, kf, kf, kf],
        [-lk, lk, lk, -lk],
        [lk, lk, -lk, -lk],
        [km, -km, km, -km],
    ])
    U = (Omega * Omega) @ M.T
    k1 = state_derivative_batch(X, U, p)
    k2 = state_derivative_batch(X + 0.5 * dt * k1, U, p)
    k3 = state_derivative_batch(X + 0.5 * dt * k2, U, p)
    k4 = state_derivative_batch(X + dt * k3, U, p)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sample_control(t: float, cfg: ControlConfig, params: QuadParams,
                   rng: np.random.Generator) -> np.ndarray:
    """Noisy rotor command at time t: nominal sinusoid plus uniform noise."""
    w = rng.uniform(-cfg.noise_half_width, cfg.noise_half_width, size=4)
    return cfg.nominal(t, params) + w


def default_x0_box() -> BoxSet:
    """Initial set: position +-0.5 m, attitude +-0.1 rad, velocities and
    rates +-1e-3 to keep the box full-dimensional (24 faces)."""
    hw = np.empty(12)
    hw[POS] = 0.5
    hw[VEL] = 1e-3
    hw[ATT] = 0.1
    hw[RATE] = 1e-3
    return BoxSet(center=np.zeros(12), half_width=hw)


@dataclass
class TrajectoryDataset:
    """nT trajectories of N+1 states / N rotor commands at spacing dt."""

    dt: float
    states: List[np.ndarray]   # each (N+1, 12)
    inputs: List[np.ndarray]   # each (N, 4)
    seed: int
    scenario: str

    @property
    def n_traj(self) -> int:
        return len(self.states)

    @property
    def n_steps(self) -> int:
        return self.inputs[0].shape[0]

    def as_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked (nT, N+1, 12) and (nT, N, 4) arrays."""
        return np.stack(self.states), np.stack(self.inputs)


def generate_dataset(n_traj: int, n_steps: int, dt: float, x0_box: BoxSet,
                     cfg: ControlConfig, params: QuadParams,
                     seed: int) -> TrajectoryDataset:
    """Simulate n_traj trajectories from uniform draws in x0_box.

    Each trajectory uses an independent substream derived from (seed, k),
    so results are reproducible and independent of generation order.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    states, inputs = [], []
    for k in range(n_traj):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        xs = np.empty((n_steps + 1, 12))
        us = np.empty((n_steps, 4))
        xs[0] = x0_box.sample(rng, 1)[0]
        x = xs[0]
        for i in range(n_steps):
            us[i] = sample_control(i * dt, cfg, params, rng)
            try:
                x = integrate_step(x, us[i], dt, params)
            except IntegrationBlowup as exc:
                raise IntegrationBlowup(
                    f"trajectory {k}, step {i}: {exc}") from exc
            xs[i + 1] = x
        states.append(xs)
        inputs.append(us)
    return TrajectoryDataset(dt=dt, states=states, inputs=inputs,
                             seed=seed, scenario=cfg.scenario)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(ds: TrajectoryDataset, outdir: str, params: QuadParams,
                 cfg: ControlConfig, x0_box: BoxSet) -> None:
    """Write manifest.json plus one traj_<k>.csv per trajectory.

    The final CSV row has no control columns (no command applied there).
    """
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "dt": ds.dt,
        "n_traj": ds.n_traj,
        "n_steps": ds.n_steps,
        "seed": ds.seed,
        "scenario": ds.scenario,
        "params": {
            "m": params.m, "g": params.g,
            "Ixx": params.Ixx, "Iyy": params.Iyy, "Izz": params.Izz,
            "kf": params.kf, "km": params.km, "l": params.l,
            "translational_form": params.translational_form,
        },
        "control": {
            "amplitude": list(cfg.amplitude),
            "frequency": list(cfg.frequency),
            "noise_half_width": cfg.noise_half_width,
        },
        "x0_box": {
            "center": list(x0_box.center),
            "half_width": list(x0_box.half_width),
        },
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    for k in range(ds.n_traj):
        with open(os.path.join(outdir, f"traj_{k}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_HEADER)
            xs, us = ds.states[k], ds.inputs[k]
            for i in range(xs.shape[0]):
                row = [_fmt(i * ds.dt)] + [_fmt(v) for v in xs[i]]
                if i < us.shape[0]:
                    row += [_fmt(v) for v in us[i]]
                else:
                    row += ["", "", "", ""]
                wr.writerow(row)


def load_dataset(outdir: str) -> TrajectoryDataset:
    with open(os.path.join(outdir, "manifest.json")) as fh:
        manifest = json.load(fh)
    states, inputs = [], []
    for k in range(manifest["n_traj"]):
        with open(os.path.join(outdir, f"traj_{k}.csv"), newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != CSV_HEADER:
                raise ValueError(f"bad header in traj_{k}.csv")
            xs, us = [], []
            for row in rd:
                xs.append([float(v) for v in row[1:13]])
                if row[13] != "":
                    us.append([float(v) for v in row[13:17]])
        states.append(np.asarray(xs))
        inputs.append(np.asarray(us))
    return TrajectoryDataset(dt=manifest["dt"], states=states, inputs=inputs,
                             seed=manifest["seed"], scenario=manifest["scenario"])
