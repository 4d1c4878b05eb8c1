"""Two-phase 1D meshes and 2D sampling grids.

The 1D domain [0, L] carries a piecewise-constant wave speed: c1 on the
left segment, c2 on the right, with the jump at an interface point x0.
The interface must fall exactly on a grid node; the mixed-form stencils
in the generator module rely on that alignment, so ``build_mesh`` refuses
meshes where x0 is off-grid instead of silently snapping it.

2D grids are plain inclusive tensor lattices used by the sub-ellipticity
and weighted-inequality checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh parameters or interface misalignment."""


@dataclass(frozen=True)
class Mesh1D:
    """Uniform grid on [0, L] with a speed jump at a shared interface node.

    ``alpha`` holds the nodal speed, c1 strictly left of the interface and
    c2 from the interface on.  The interface node itself belongs to both
    segments; ``node_region`` flags it with 0 and consumers that need a
    single value there (quadrature weights, stencil scaling) use the
    harmonic mean, not ``alpha[interface_index]``.
    """

    L: float
    x0: float
    N: int
    h: float
    alpha: np.ndarray
    interface_index: int
    c1: float
    c2: float

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.N)

    def node_region(self) -> np.ndarray:
        """Region label per node: 1 left of x0, 2 right of x0, 0 shared."""
        r = np.where(np.arange(self.N) < self.interface_index, 1, 2)
        r[self.interface_index] = 0
        return r

    def harmonic_speed(self) -> float:
        """Speed assigned to the shared interface node."""
        return 2.0 * self.c1 * self.c2 / (self.c1 + self.c2)


def build_mesh(L: float, x0: float, c1: float, c2: float, N: int) -> Mesh1D:
    """Build a two-phase mesh; x0 must sit on the grid.

    Raises MeshError with the nearest admissible interface when x0 is not
    within 1e-9 (in units of k = x0/h) of a grid node, and for any
    non-positive geometry or speed input.
    """
    if not (L > 0.0):
        raise MeshError(f"domain length must be positive, got L={L}")
    if not (c1 > 0.0 and c2 > 0.0):
        raise MeshError(f"wave speeds must be positive, got c1={c1}, c2={c2}")
    if N < 8:
        raise MeshError(f"need at least 8 nodes, got N={N}")
    if not (0.0 < x0 < L):
        raise MeshError(f"interface must lie strictly inside (0, {L}), got x0={x0}")

    h = L / (N - 1)
    k = x0 / L * (N - 1)
    idx = int(round(k))
    if abs(k - idx) > 1e-9:
        nearest = idx * h
        raise MeshError(
            f"interface x0={x0} is not on the grid for N={N}; "
            f"nearest admissible x0 is {nearest!r}"
        )
    if not (1 <= idx <= N - 2):
        raise MeshError(f"interface node {idx} must be interior for N={N}")

    alpha = np.where(np.arange(N) < idx, float(c1), float(c2))
    # Store the snapped interface so interface_index * h == x0 holds exactly.
    return Mesh1D(
        L=float(L),
        x0=idx * h,
        N=int(N),
        h=h,
        alpha=alpha,
        interface_index=idx,
        c1=float(c1),
        c2=float(c2),
    )


@dataclass(frozen=True)
class Grid2D:
    """Inclusive tensor lattice on a rectangle [a1, b1] x [a2, b2]."""

    bounds: tuple[float, float, float, float]
    nx: int
    ny: int

    @property
    def x1(self) -> np.ndarray:
        a1, b1, _, _ = self.bounds
        return np.linspace(a1, b1, self.nx)

    @property
    def x2(self) -> np.ndarray:
        _, _, a2, b2 = self.bounds
        return np.linspace(a2, b2, self.ny)

    @property
    def dx1(self) -> float:
        a1, b1, _, _ = self.bounds
        return (b1 - a1) / (self.nx - 1)

    @property
    def dx2(self) -> float:
        _, _, a2, b2 = self.bounds
        return (b2 - a2) / (self.ny - 1)

    def points(self) -> np.ndarray:
        """All lattice points as an (nx*ny, 2) array, x1-major order."""
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def trapezoid_weights(self) -> np.ndarray:
        """Tensor-product trapezoid quadrature weights, shape (nx, ny)."""
        w1 = np.full(self.nx, self.dx1)
        w1[[0, -1]] *= 0.5
        w2 = np.full(self.ny, self.dx2)
        w2[[0, -1]] *= 0.5
        return np.outer(w1, w2)


def build_grid2d(bounds: tuple[float, float, float, float], nx: int, ny: int) -> Grid2D:
    a1, b1, a2, b2 = bounds
    if not (b1 > a1 and b2 > a2):
        raise MeshError(f"degenerate rectangle bounds {bounds}")
    if nx < 16 or ny < 16:
        raise MeshError(f"2D grids need at least 16 points per axis, got {nx}x{ny}")
    return Grid2D(bounds=(float(a1), float(b1), float(a2), float(b2)), nx=int(nx), ny=int(ny))
