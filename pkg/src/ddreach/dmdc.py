"""Windowed least-squares identification of discrete linear time-varying
lifts (A_k, B_k) from short state/input snapshot windows, solved through an
SVD-truncated pseudo-inverse.

A dynamics oracle here is any callable (x, u, t) -> x_next advancing one
sampling interval; the learned-network one-step map and exact linear maps
both fit this shape.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

Oracle = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
ControlSampler = Callable[[float, np.random.Generator], np.ndarray]


class DegenerateWindowError(RuntimeError):
    """All singular values of the stacked snapshot matrix fell below the
    truncation threshold."""


@dataclass
class SnapshotWindow:
    """w+1 consecutive state columns and the commands applied at them.

    Column j of ``upsilon`` is the command applied at column j of ``xi``;
    it produced column j+1 (the last command's successor state is not
    stored).
    """

    xi: np.ndarray        # (n_x, w+1)
    upsilon: np.ndarray   # (n_u, w+1)
    dt: float
    k: int = 0

    def __post_init__(self):
        if self.xi.shape[1] != self.upsilon.shape[1]:
            raise ValueError("xi and upsilon must have equal column counts")
        if not (np.all(np.isfinite(self.xi)) and np.all(np.isfinite(self.upsilon))):
            raise ValueError("non-finite snapshot entries")

    @property
    def width(self) -> int:
        return self.xi.shape[1] - 1


@dataclass
class LtvStep:
    """One discrete lift x_{k+1} ~ A x_k + B u_k with fit diagnostics.

    ``residual`` is the componentwise max-abs least-squares residual over
    the fitted transitions; it bounds (on the fit data) how far the lifted
    map strays from the sampled dynamics over one step.
    """

    A: np.ndarray
    B: np.ndarray
    k: int
    smallest_sv: float
    rank: int
    residual: np.ndarray | None = None

    def __post_init__(self):
        if self.residual is None:
            self.residual = np.zeros(self.A.shape[0])

    def to_json(self, path: str) -> None:
        doc = {
            "A": self.A.ravel().tolist(),
            "B": self.B.ravel().tolist(),
            "n_x": self.A.shape[0],
            "n_u": self.B.shape[1],
            "k": self.k,
            "smallest_sv": self.smallest_sv,
            "rank": self.rank,
            "residual": self.residual.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @staticmethod
    def from_json(path: str) -> "LtvStep":
        with open(path) as fh:
            doc = json.load(fh)
        n_x, n_u = doc["n_x"], doc["n_u"]
        return LtvStep(
            A=np.asarray(doc["A"], float).reshape(n_x, n_x),
            B=np.asarray(doc["B"], float).reshape(n_x, n_u),
            k=doc["k"],
            smallest_sv=doc["smallest_sv"],
            rank=doc["rank"],
            residual=np.asarray(doc["residual"], float)
            if "residual" in doc else None,
        )


def build_window(oracle: Oracle, x_k: np.ndarray, sampler: ControlSampler,
                 w: int, dt: float, rng: np.random.Generator,
                 t0: float = 0.0, k: int = 0) -> SnapshotWindow:
    """Excite the oracle for w steps from x_k under sampled commands."""
    n_x = x_k.shape[0]
    xs = np.empty((n_x, w + 1))
    xs[:, 0] = x_k
    us = []
    x = np.asarray(x_k, float)
    for j in range(w):
        u = sampler(t0 + j * dt, rng)
        us.append(u)
        x = oracle(x, u, t0 + j * dt)
        xs[:, j + 1] = x
    us.append(sampler(t0 + w * dt, rng))
    return SnapshotWindow(xi=xs, upsilon=np.asarray(us).T, dt=dt, k=k)


def fit(window: SnapshotWindow, svd_tol: float = 1e-10) -> LtvStep:
    """Least-squares lift from one window.

    Solves Gamma = Xi_shift @ pinv([Xi; Upsilon]) with singular values below
    svd_tol * sigma_max truncated, then splits Gamma into A and B.
    """
    w = window.width
    if w < 1:
        raise ValueError("window width must be >= 1")
    n_x = window.xi.shape[0]
    xi = window.xi[:, :w]
    xi_next = window.xi[:, 1:]
    ups = window.upsilon[:, :w]
    stacked = np.vstack([xi, ups])
    U, s, Vt = np.linalg.svd(stacked, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateWindowError("zero snapshot matrix")
    keep = s >= svd_tol * s[0]
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        raise DegenerateWindowError("all singular values below threshold")
    pinv = Vt[keep].T @ np.diag(1.0 / s[keep]) @ U[:, keep].T
    gamma = xi_next @ pinv
    residual = np.abs(xi_next - gamma @ stacked).max(axis=1)
    return LtvStep(A=gamma[:, :n_x], B=gamma[:, n_x:], k=window.k,
                   smallest_sv=float(s[keep][-1]), rank=rank,
                   residual=residual)


def fit_windows(windows: Sequence[SnapshotWindow],
                svd_tol: float = 1e-10) -> LtvStep:
    """Pooled least-squares lift over the transitions of several windows.

    Stacks every window's (x_j, u_j) -> x_{j+1} pairs into one regression;
    windows rolled from spread-out seed states give a far better-conditioned
    A than a single rolled trajectory, whose columns excite only a low-rank
    state subspace.
    """
    if not windows:
        raise ValueError("need at least one window")
    n_x = windows[0].xi.shape[0]
    xi = np.hstack([w.xi[:, : w.width] for w in windows])
    xi_next = np.hstack([w.xi[:, 1:] for w in windows])
    ups = np.hstack([w.upsilon[:, : w.width] for w in windows])
    stacked = np.vstack([xi, ups])
    U, s, Vt = np.linalg.svd(stacked, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateWindowError("zero snapshot matrix")
    keep = s >= svd_tol * s[0]
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        raise DegenerateWindowError("all singular values below threshold")
    pinv = Vt[keep].T @ np.diag(1.0 / s[keep]) @ U[:, keep].T
    gamma = xi_next @ pinv
    residual = np.abs(xi_next - gamma @ stacked).max(axis=1)
    return LtvStep(A=gamma[:, :n_x], B=gamma[:, n_x:], k=windows[0].k,
                   smallest_sv=float(s[keep][-1]), rank=rank,
                   residual=residual)


def sliding_fit(oracle: Oracle, x_path: Sequence[np.ndarray],
                sampler: ControlSampler, w: int, dt: float, horizon: int,
                rng: np.random.Generator, svd_tol: float = 1e-10,
                t0: float = 0.0) -> List[LtvStep]:
    """One lift per step along x_path; records per-step wall time on the
    returned steps as ``wall_time`` attributes."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    steps: List[LtvStep] = []
    for k in range(horizon):
        start = time.perf_counter()
        window = build_window(oracle, np.asarray(x_path[k], float), sampler,
                              w, dt, rng, t0=t0 + k * dt, k=k)
        try:
            step = fit(window, svd_tol)
        except DegenerateWindowError as exc:
            raise DegenerateWindowError(f"step {k}: {exc}") from exc
        step.wall_time = time.perf_counter() - start
        steps.append(step)
    return steps
