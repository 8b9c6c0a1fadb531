"""Uniform 2D tensor grids and trapezoid quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class TensorGrid:
    """Axis-aligned uniform tensor grid on [x_lo, x_hi] x [y_lo, y_hi]."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need at least 3 points per axis")
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise ValueError("upper bounds must exceed lower bounds")

    @property
    def hx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_hi - self.y_lo) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights, shape (nx, ny)."""
        wx = np.full(self.nx, self.hx)
        wx[0] = wx[-1] = 0.5 * self.hx
        wy = np.full(self.ny, self.hy)
        wy[0] = wy[-1] = 0.5 * self.hy
        return np.outer(wx, wy)

    def integrate(self, field: np.ndarray) -> float:
        """Trapezoid integral of a sampled field over the box."""
        return float(np.sum(self.weights * field))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Trapezoid L2 inner product of two sampled fields."""
        return float(np.sum(self.weights * f * g))

    def gradient(self, field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Second-order finite-difference gradient (central in the interior,
        one-sided at the boundary)."""
        fx, fy = np.gradient(field, self.hx, self.hy)
        return fx, fy

    def coarsen(self, stride: int) -> "TensorGrid":
        """Subgrid taking every ``stride``-th node per axis.

        Requires (n - 1) divisible by stride so the box is preserved.
        """
        if (self.nx - 1) % stride or (self.ny - 1) % stride:
            raise ValueError("stride must divide the interval counts")
        return TensorGrid(self.x_lo, self.x_hi, self.y_lo, self.y_hi,
                          (self.nx - 1) // stride + 1,
                          (self.ny - 1) // stride + 1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask
