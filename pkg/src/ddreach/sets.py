"""Axis-aligned box sets with optionally time-varying centers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class BoxSet:
    """Box {c(t) - h <= x <= c(t) + h} with componentwise half-widths h.

    ``center`` is the static center; ``center_fn`` (if given) overrides it
    with a time-varying center c(t).
    """

    center: np.ndarray
    half_width: np.ndarray
    center_fn: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_width = np.asarray(self.half_width, dtype=float)
        if self.center.shape != self.half_width.shape:
            raise ValueError("center and half_width shapes differ")
        if np.any(self.half_width < 0):
            raise ValueError("half_width must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def center_at(self, t: float) -> np.ndarray:
        if self.center_fn is not None:
            return np.asarray(self.center_fn(t), dtype=float)
        return self.center

    def sample(self, rng: np.random.Generator, n: int, t: float = 0.0) -> np.ndarray:
        """n uniform draws, shape (n, dim)."""
        c = self.center_at(t)
        return c + rng.uniform(-self.half_width, self.half_width, size=(n, self.dim))

    def sample_vertices(self, rng: np.random.Generator, n: int, t: float = 0.0) -> np.ndarray:
        """n draws from the 2^dim vertex set, shape (n, dim)."""
        c = self.center_at(t)
        signs = rng.integers(0, 2, size=(n, self.dim)) * 2.0 - 1.0
        return c + signs * self.half_width

    def contains(self, x: np.ndarray, t: float = 0.0, tol: float = 0.0) -> bool:
        c = self.center_at(t)
        return bool(np.all(np.abs(np.asarray(x) - c) <= self.half_width + tol))
