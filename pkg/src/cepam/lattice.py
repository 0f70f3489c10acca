"""Scaled integer lattices, nearest-point quantization, basic-cell geometry.

The lattice is alpha * Z^n and its basic cell is the half-open cube
P = alpha * (-0.5, 0.5]^n, which tiles R^n under lattice translations.
Ties at exactly -0.5 * alpha round toward +inf, realized as
floor(x / alpha + 0.5), so every point has a unique nearest lattice point
with offset inside P.  Lattice points are carried as exact int64
coordinate vectors (real position = alpha * coords); they are never
rounded through floats, which keeps codec round trips bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randomness import RandomTape

# Integer coordinates beyond this would lose exactness on the float path.
_COORD_LIMIT = 2**62


class MessageOverflowError(OverflowError):
    """Lattice coordinate does not fit the exact int64 range."""


@dataclass(frozen=True)
class LatticeSpec:
    """Dimension, cell edge alpha, and generator kind (only alpha * I_n)."""

    dim: int
    alpha: float
    generator: str = "scaled_identity"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"lattice dimension must be >= 1, got {self.dim}")
        if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
            raise ValueError(f"lattice scale must be a positive real, got {self.alpha}")
        if self.generator != "scaled_identity":
            raise ValueError(f"unsupported generator kind: {self.generator}")


def nearest_lattice_point(x, spec: LatticeSpec) -> np.ndarray:
    """Integer coordinates of the unique lattice point y with y - x in P.

    Componentwise y_real_i - x_i lies in (-0.5 * alpha, 0.5 * alpha].
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input to the lattice quantizer must be finite")
    coords = np.floor(x / spec.alpha + 0.5)
    if np.any(np.abs(coords) >= _COORD_LIMIT):
        raise MessageOverflowError("lattice coordinate exceeds the exact integer range")
    return coords.astype(np.int64)


def lattice_to_real(coords, spec: LatticeSpec) -> np.ndarray:
    """Real position of a lattice point given its integer coordinates."""
    return spec.alpha * np.asarray(coords, dtype=np.float64)


def cell_contains(z, spec: LatticeSpec) -> bool:
    """Membership in the basic cell alpha * (-0.5, 0.5]^n (half-open)."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("cell membership test requires finite input")
    half = 0.5 * spec.alpha
    return bool(np.all(z > -half) and np.all(z <= half))


def sample_cell_uniform(spec: LatticeSpec, tape: RandomTape) -> np.ndarray:
    """Uniform draw over the basic cell; consumes exactly ``dim`` tape draws.

    A tape uniform w in [0, 1) maps to alpha * (0.5 - w) in (-alpha/2, alpha/2],
    matching the cell's half-open orientation.
    """
    w = tape.next_uniforms(spec.dim)
    return spec.alpha * (0.5 - w)
