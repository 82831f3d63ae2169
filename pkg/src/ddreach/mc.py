"""Monte-Carlo estimation of reachable sets for arbitrary one-step
dynamics, used as an independent check on the polytopic propagation.

Sampling schemes:
  uniform  - initial states uniform in the box, commands uniform in the
             admissible box at every step.
  vertex   - initial states at box vertices and a single admissible-box
             vertex sign pattern held for the whole trajectory (a bang-bang
             command; for linear dynamics with sign-constant switching
             functions these attain the support extremes).
  mixed    - first half uniform, second half vertex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .reach import ReachTube
from .sets import BoxSet

BatchOracle = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

SCHEMES = ("uniform", "vertex", "mixed")


@dataclass
class SampleCloud:
    steps: List[np.ndarray]          # per-step (N, n_x) sample states
    n_samples: int
    seed: int
    scheme: str


@dataclass
class ContainmentReport:
    violation_fraction: np.ndarray   # (K+1,)
    max_violation: np.ndarray        # (K+1,) max signed halfspace excess
    support_gap: np.ndarray          # (K+1, m) gamma_i - max_j <c_i, x_j>
    tol_used: List[np.ndarray] = field(default_factory=list)

    def to_json(self, path: str, extra: dict | None = None) -> None:
        doc = {
            "violation_fraction": self.violation_fraction.tolist(),
            "max_violation": self.max_violation.tolist(),
            "support_gap": [row.tolist() for row in self.support_gap],
        }
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")


def mc_reach(oracle: BatchOracle, x0: BoxSet, omega: BoxSet, n_samples: int,
             K: int, dt: float, scheme: str = "mixed", seed: int = 0,
             t0: float = 0.0) -> SampleCloud:
    """Simulate n_samples trajectories for K steps and record every step."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))

    if scheme == "uniform":
        n_uni = n_samples
    elif scheme == "vertex":
        n_uni = 0
    else:
        n_uni = n_samples // 2
    n_vtx = n_samples - n_uni

    X = np.vstack([
        x0.sample(rng, n_uni) if n_uni else np.empty((0, x0.dim)),
        x0.sample_vertices(rng, n_vtx) if n_vtx else np.empty((0, x0.dim)),
    ])
    # one vertex sign pattern per vertex-scheme trajectory, held constant
    vtx_signs = rng.integers(0, 2, size=(n_vtx, omega.dim)) * 2.0 - 1.0

    steps = [X.copy()]
    for k in range(K):
        t = t0 + k * dt
        c = omega.center_at(t)
        U = np.empty((n_samples, omega.dim))
        if n_uni:
            U[:n_uni] = c + rng.uniform(-omega.half_width, omega.half_width,
                                        size=(n_uni, omega.dim))
        if n_vtx:
            U[n_uni:] = c + vtx_signs * omega.half_width
        X = oracle(X, U, t)
        if not np.all(np.isfinite(X)):
            bad = int(np.argmax(~np.all(np.isfinite(X), axis=1)))
            raise RuntimeError(f"non-finite sample {bad} at step {k}")
        steps.append(X.copy())
    return SampleCloud(steps=steps, n_samples=n_samples, seed=seed,
                       scheme=scheme)


def lti_oracle(A: np.ndarray, B: np.ndarray) -> BatchOracle:
    def step(X, U, t):
        return X @ A.T + U @ B.T
    return step


def ltv_oracle(lifts, dt: float = 1.0, t0: float = 0.0) -> BatchOracle:
    """Oracle that applies lift k = round((t - t0) / dt) at time t."""
    def step(X, U, t):
        k = min(max(int(round((t - t0) / dt)), 0), len(lifts) - 1)
        return X @ lifts[k].A.T + U @ lifts[k].B.T
    return step


def containment_report(tube: ReachTube, cloud: SampleCloud,
                       tol=1e-9, slack_fraction: float | None = None
                       ) -> ContainmentReport:
    """Fraction of samples outside the halfspace intersection per step, the
    maximum signed excess, and the per-normal conservatism gap.

    With ``slack_fraction`` the per-normal tolerance at each step is that
    fraction of the cloud's extent along the normal (a relative slack for
    model-mismatch comparisons); otherwise ``tol`` is used directly.
    """
    if len(tube.fronts) != len(cloud.steps):
        raise ValueError("tube and cloud lengths differ")
    K = len(tube.fronts)
    m = tube.fronts[0].normals.shape[0]
    frac = np.empty(K)
    maxv = np.empty(K)
    gaps = np.empty((K, m))
    tols_used: List[np.ndarray] = []
    for k, (front, X) in enumerate(zip(tube.fronts, cloud.steps)):
        proj = X @ front.normals.T            # (N, m)
        if slack_fraction is not None:
            extent = proj.max(axis=0) - proj.min(axis=0)
            tol_k = slack_fraction * extent
        else:
            tol_k = np.broadcast_to(np.asarray(tol, float), (m,))
        tols_used.append(np.asarray(tol_k, float))
        excess = proj - front.offsets[None, :]
        frac[k] = float(np.mean(np.any(excess > tol_k[None, :], axis=1)))
        maxv[k] = float(excess.max())
        gaps[k] = front.offsets - proj.max(axis=0)
    return ContainmentReport(violation_fraction=frac, max_violation=maxv,
                             support_gap=gaps, tol_used=tols_used)
