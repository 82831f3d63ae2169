"""Polytopic reachable set propagation for discrete linear time-varying
lifts.

Each supporting hyperplane (unit normal c, offset gamma, contact point x*)
is advanced one step by the adjoint/extremal-control recursion: the next
normal solves A^T c' = c (then renormalized), the extremal command
maximizes <c', B u> over the admissible box, and the contact point follows
x*' = A x* + B u*. The contact points give an inner approximation (their
convex hull); the halfspaces give an outer one.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dmdc import LtvStep
from .sets import BoxSet

COND_LIMIT = 1e12


class DegenerateSetError(ValueError):
    """Initial set has a zero-width face."""


class IllConditionedLiftError(RuntimeError):
    """Lift matrix A is too ill-conditioned for a reliable adjoint solve."""

    def __init__(self, k: int, cond: float):
        super().__init__(f"lift at step {k} has condition number {cond:.3e}")
        self.k = k
        self.cond = cond


@dataclass
class ContactFront:
    """Supporting hyperplanes and their contact points at one time index.

    ``err_gens`` are generators of an error zonotope accumulated from the
    lifts' fit residuals; each offset equals the contact support plus the
    zonotope's support along that normal, so the halfspaces stay outer for
    the sampled dynamics, not just the fitted linear model. Exact linear
    lifts have (numerically) zero residuals and the margins vanish.
    """

    normals: np.ndarray    # (m, n_x), unit rows
    offsets: np.ndarray    # (m,)
    contacts: np.ndarray   # (m, n_x)
    k: int = 0
    controls: Optional[np.ndarray] = None  # (m, n_u) extremal commands applied
    err_gens: Optional[np.ndarray] = None  # (n_gen, n_x) error generators

    def error_support(self) -> np.ndarray:
        """Support of the error zonotope along each normal (zeros if none)."""
        if self.err_gens is None or self.err_gens.size == 0:
            return np.zeros(self.normals.shape[0])
        return np.abs(self.normals @ self.err_gens.T).sum(axis=1)

    def validate(self, tol: float = 1e-9) -> None:
        norms = np.linalg.norm(self.normals, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValueError("normals must be unit length")
        gam = np.einsum("ij,ij->i", self.normals, self.contacts)
        gam = gam + self.error_support()
        if np.max(np.abs(gam - self.offsets)) > tol:
            raise ValueError(
                "contact condition <c_i, x*_i> + margin_i = gamma_i violated")
        # every contact point must satisfy every halfspace (inner in outer)
        proj = self.contacts @ self.normals.T
        if np.max(proj - self.offsets[None, :]) > tol:
            raise ValueError("a contact point violates a halfspace")


@dataclass
class ReachTube:
    fronts: List[ContactFront]
    planes: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        ks = [f.k for f in self.fronts]
        if ks != list(range(ks[0], ks[0] + len(ks))):
            raise ValueError("front time indices must be consecutive")


def init_contacts(x0: BoxSet, scheme: str = "axis") -> ContactFront:
    """Axis-face front: normals +-e_i, contacts at face centroids."""
    if scheme != "axis":
        raise ValueError(f"unknown normal scheme {scheme!r}")
    if np.any(x0.half_width <= 0):
        raise DegenerateSetError("x0 has a zero-width face")
    n = x0.dim
    normals = np.zeros((2 * n, n))
    contacts = np.tile(x0.center, (2 * n, 1))
    for i in range(n):
        normals[2 * i, i] = 1.0
        normals[2 * i + 1, i] = -1.0
        contacts[2 * i, i] += x0.half_width[i]
        contacts[2 * i + 1, i] -= x0.half_width[i]
    offsets = np.einsum("ij,ij->i", normals, contacts)
    return ContactFront(normals=normals, offsets=offsets, contacts=contacts, k=0)


def optimal_control(c_next: np.ndarray, B: np.ndarray, omega: BoxSet,
                    t: float = 0.0) -> np.ndarray:
    """Extreme point of the command box maximizing <c_next, B u>.

    Componentwise sign rule on s = B^T c_next; s_j = 0 picks the center.
    """
    s = B.T @ np.asarray(c_next, float)
    return omega.center_at(t) + omega.half_width * np.sign(s)


def _propagate_one(c: np.ndarray, x: np.ndarray, A: np.ndarray,
                   B: np.ndarray, omega: BoxSet, t: float,
                   err_gens: np.ndarray):
    c_raw = np.linalg.solve(A.T, c)
    c_next = c_raw / np.linalg.norm(c_raw)
    u = optimal_control(c_next, B, omega, t)
    x_next = A @ x + B @ u
    margin = float(np.abs(err_gens @ c_next).sum()) if err_gens.size else 0.0
    return c_next, float(c_next @ x_next) + margin, x_next, u


def propagate_front(front: ContactFront, step: LtvStep, omega: BoxSet,
                    t: float = 0.0, parallel: bool = False,
                    max_workers: int = 4) -> ContactFront:
    """Advance every hyperplane one step through the lift (A, B).

    The fit-residual error zonotope is advanced alongside the hyperplanes
    (generators mapped through A, one fresh axis-aligned generator per
    state channel appended from the lift's residual bound) and its support
    inflates each offset; lifts with zero residual reduce to the exact
    adjoint recursion.

    With ``parallel`` the per-hyperplane work is mapped over a thread pool;
    each hyperplane runs the identical scalar path, so results match the
    sequential ones bitwise.
    """
    A, B = step.A, step.B
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedLiftError(step.k, cond)
    prev_gens = (front.err_gens if front.err_gens is not None
                 else np.empty((0, A.shape[0])))
    err_gens = np.vstack([prev_gens @ A.T, np.diag(step.residual)])
    err_gens = err_gens[np.any(err_gens != 0.0, axis=1)]
    args = [(front.normals[i], front.contacts[i], A, B, omega, t, err_gens)
            for i in range(front.normals.shape[0])]
    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda a: _propagate_one(*a), args))
    else:
        results = [_propagate_one(*a) for a in args]
    normals = np.array([r[0] for r in results])
    offsets = np.array([r[1] for r in results])
    contacts = np.array([r[2] for r in results])
    controls = np.array([r[3] for r in results])
    return ContactFront(normals=normals, offsets=offsets, contacts=contacts,
                        k=front.k + 1, controls=controls, err_gens=err_gens)


def reach_sequence(front0: ContactFront, lifts: Sequence[LtvStep],
                   omega: BoxSet, K: int, dt: float = 1.0, t0: float = 0.0,
                   parallel: bool = False) -> ReachTube:
    """Fold propagate_front over the first K lifts."""
    if K > len(lifts):
        raise ValueError("K exceeds the number of lifts")
    fronts = [front0]
    front = front0
    for k in range(K):
        front = propagate_front(front, lifts[k], omega, t=t0 + k * dt,
                                parallel=parallel)
        fronts.append(front)
    return ReachTube(fronts=fronts)


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull of 2D points, counterclockwise, collinear points
    dropped. Degenerate inputs yield a point or a segment."""
    pts = np.unique(np.asarray(points, float), axis=0)
    if pts.shape[0] <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:  # all collinear
        return np.array([pts[0], pts[-1]])
    return np.array(hull)


def inner_hull_2d(front: ContactFront, plane: Tuple[int, int]) -> np.ndarray:
    """Convex hull of the contact points projected onto a coordinate plane."""
    return convex_hull_2d(front.contacts[:, list(plane)])


def outer_contains(front: ContactFront, point: np.ndarray,
                   tol: float = 1e-9) -> bool:
    return bool(np.all(front.normals @ np.asarray(point, float)
                       <= front.offsets + tol))


def outer_contains_many(front: ContactFront, points: np.ndarray,
                        tol) -> np.ndarray:
    """Boolean mask over rows of points; tol may be scalar or per-normal."""
    slack = front.normals @ points.T - front.offsets[:, None]
    return np.all(slack.T <= np.asarray(tol), axis=1)


def hull_area(poly: np.ndarray) -> float:
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def tube_projection(tube: ReachTube, plane: Tuple[int, int]):
    """Per-step inner hulls plus the accumulated footprint polygon (the hull
    of all projected contact points over the horizon)."""
    if not tube.fronts:
        raise ValueError("tube is empty")
    hulls = [inner_hull_2d(f, plane) for f in tube.fronts]
    all_pts = np.vstack([f.contacts[:, list(plane)] for f in tube.fronts])
    return hulls, convex_hull_2d(all_pts)


def save_front(front: ContactFront, path: str, wall_time: float = 0.0) -> None:
    doc = {
        "k": front.k,
        "normals": [row.tolist() for row in front.normals],
        "offsets": front.offsets.tolist(),
        "contacts": [row.tolist() for row in front.contacts],
        "controls": None if front.controls is None
        else [row.tolist() for row in front.controls],
        "err_gens": None if front.err_gens is None
        else [row.tolist() for row in front.err_gens],
        "wall_time": wall_time,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_front(path: str) -> ContactFront:
    with open(path) as fh:
        doc = json.load(fh)
    return ContactFront(
        normals=np.asarray(doc["normals"], float),
        offsets=np.asarray(doc["offsets"], float),
        contacts=np.asarray(doc["contacts"], float),
        k=doc["k"],
        controls=None if doc["controls"] is None
        else np.asarray(doc["controls"], float),
        err_gens=None if doc.get("err_gens") is None
        else np.asarray(doc["err_gens"], float).reshape(-1, len(doc["normals"][0])),
    )


def save_hull_csv(poly: np.ndarray, path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["a", "b"])
        for row in poly:
            wr.writerow([format(row[0], ".17g"), format(row[1], ".17g")])
