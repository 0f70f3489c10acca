"""Target noise families as layered uniform mixtures.

A noise density f is realized by drawing a latent level u from a density g
and then drawing uniformly from the superlevel set {z : f(z) >= u},
reparameterized here by the set's radius:

* Gaussian N(0, sigma^2 I_n): g is chi-square with n + 2 degrees of
  freedom and the level-u set is the closed ball of radius sigma * sqrt(u).
* Laplace(0, b) (one-dimensional): g is Gamma(2, 1) and the level-u set is
  the open interval (-b * u, b * u).

beta(u) is the smallest scale with the level-u set inside beta(u) * P for
the cubic basic cell P, i.e. the tight bounding box.  With the tight
choice the rejection acceptance probability p = vol(set) / vol(box) is
independent of u: vol(B^n) / 2^n for the Gaussian ball, 1 for the Laplace
interval.

Latent sampling is a rejection-free inverse CDF transform consuming
exactly one tape draw per sample, so encoder and decoder stay at identical
tape positions.  Boundary conventions (Gaussian closed, Laplace open) are
measure-zero choices fixed for test determinism.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .lattice import LatticeSpec
from .randomness import RandomTape


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


class GaussianBall:
    """Isotropic Gaussian noise N(0, sigma^2 I_n) in its layered form."""

    kind = "gaussian"

    def __init__(self, dim: int, sigma: float):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be a positive real, got {sigma}")
        self.dim = int(dim)
        self.sigma = float(sigma)
        self._latent = stats.chi2(df=self.dim + 2)

    def __repr__(self) -> str:
        return f"GaussianBall(dim={self.dim}, sigma={self.sigma})"

    def latent_from_uniform(self, w):
        """Inverse CDF of chi-square(n + 2); vectorized."""
        u = self._latent.ppf(w)
        if np.any(np.asarray(u) <= 0.0) or not np.all(np.isfinite(u)):
            raise RuntimeError("degenerate latent draw (uniform input hit 0)")
        return u

    def sample_latent(self, tape: RandomTape) -> float:
        """One latent draw; consumes exactly one tape uniform."""
        return float(self.latent_from_uniform(tape.next_uniform()))

    def radius(self, u):
        """Radius of the level-u set: sigma * sqrt(u)."""
        return self.sigma * np.sqrt(u)

    def superlevel_contains(self, u: float, z) -> bool:
        """Closed ball test ||z|| <= sigma * sqrt(u)."""
        z = np.asarray(z, dtype=np.float64).reshape(1, -1)
        return bool(self.accept(z, np.asarray([u], dtype=np.float64))[0])

    def accept(self, err: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Row-wise containment of err (B, n) in the level-u[i] sets."""
        norms = np.sqrt(np.sum(err * err, axis=1))
        return norms <= self.radius(u)

    def beta_scale(self, u, spec: LatticeSpec):
        """Tight box scale: the radius-sigma*sqrt(u) ball fits 2*r/alpha * P."""
        return 2.0 * self.sigma * np.sqrt(u) / spec.alpha

    def acceptance_prob(self) -> float:
        # dim 1 is exactly degenerate (the interval fills the cell) and the
        # codec branches on p == 1, so keep it free of float residue.
        if self.dim == 1:
            return 1.0
        return unit_ball_volume(self.dim) / 2.0**self.dim

    def variance(self) -> float:
        """Total variance E||Z||^2 = n * sigma^2."""
        return self.dim * self.sigma**2

    def coord_dist(self):
        """Per-coordinate marginal, for audits and goodness-of-fit tests."""
        return stats.norm(loc=0.0, scale=self.sigma)


class LaplaceInterval:
    """One-dimensional Laplace(0, b) noise in its layered form."""

    kind = "laplace"
    dim = 1

    def __init__(self, b: float):
        if not (b > 0.0 and math.isfinite(b)):
            raise ValueError(f"scale b must be a positive real, got {b}")
        self.b = float(b)
        self._latent = stats.gamma(a=2.0)

    def __repr__(self) -> str:
        return f"LaplaceInterval(b={self.b})"

    def latent_from_uniform(self, w):
        u = self._latent.ppf(w)
        if np.any(np.asarray(u) <= 0.0) or not np.all(np.isfinite(u)):
            raise RuntimeError("degenerate latent draw (uniform input hit 0)")
        return u

    def sample_latent(self, tape: RandomTape) -> float:
        """One latent draw; consumes exactly one tape uniform."""
        return float(self.latent_from_uniform(tape.next_uniform()))

    def radius(self, u):
        return self.b * np.asarray(u, dtype=np.float64)

    def superlevel_contains(self, u: float, z) -> bool:
        """Open interval test |z| < b * u."""
        z = np.asarray(z, dtype=np.float64).reshape(1, -1)
        return bool(self.accept(z, np.asarray([u], dtype=np.float64))[0])

    def accept(self, err: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.abs(err[:, 0]) < self.radius(u)

    def beta_scale(self, u, spec: LatticeSpec):
        return 2.0 * self.b * np.asarray(u, dtype=np.float64) / spec.alpha

    def acceptance_prob(self) -> float:
        return 1.0

    def variance(self) -> float:
        return 2.0 * self.b**2

    def coord_dist(self):
        return stats.laplace(loc=0.0, scale=self.b)


def make_noise_family(kind: str, dim: int = 1, sigma: float | None = None, b: float | None = None):
    """Factory used by configs and stream headers."""
    if kind == "gaussian":
        if sigma is None:
            raise ValueError("gaussian family requires sigma")
        return GaussianBall(dim=dim, sigma=sigma)
    if kind == "laplace":
        if b is None:
            raise ValueError("laplace family requires b")
        if dim != 1:
            raise ValueError("laplace family is one-dimensional")
        return LaplaceInterval(b=b)
    raise ValueError(f"unknown noise family kind: {kind!r}")
