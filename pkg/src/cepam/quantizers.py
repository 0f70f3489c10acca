"""SDQ, RSUQ and layered RSUQ encode/decode.

The subtractive dithered quantizer (SDQ) quantizes x - v to the lattice
and adds the dither v back; with v uniform on the basic cell P the error
is uniform on P and independent of x.  RSUQ redraws the dither until the
error lands in a chosen subset A of P, making the error uniform on A; the
accepted try count H is geometric with success mu(A) / mu(P).  The layered
variant (LRSUQ) first draws a latent level u, scales the cell by beta(u)
so the level-u set of the target density fits inside it, and rejection
samples into that set.  Mixing over u makes the decode error follow the
target density exactly, independent of the input.

Decoding regenerates u first and then the dithers, in exactly the order
the encoder consumed them, from a tape with the same (seed, context); the
reconstruction beta(u) * (alpha * M + V_H) is then bit-identical on both
sides.

The batch functions are the workhorses (vectorized across independent
subvector contexts, each with its own key and cursor); the single-vector
operations delegate to them with batch size one, which pins scalar and
batch paths to identical float semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import (
    LatticeSpec,
    MessageOverflowError,
    _COORD_LIMIT,
    cell_contains,
    nearest_lattice_point,
    sample_cell_uniform,
)
from .randomness import RandomTape, uniforms_at

REJECTION_CAP = 10**6


class RejectionOverflowError(RuntimeError):
    """Rejection loop exceeded its iteration cap (diagnosable fault)."""


class InvalidDitherError(ValueError):
    """Dither vector lies outside the basic cell."""


@dataclass(eq=False)
class EncodedSubvector:
    """Wire content for one subvector: accepted try index and lattice message."""

    h: int
    coords: np.ndarray  # exact int64 lattice coordinates

    def __post_init__(self) -> None:
        if self.h < 1:
            raise ValueError(f"rejection index must be >= 1, got {self.h}")
        self.coords = np.asarray(self.coords, dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncodedSubvector):
            return NotImplemented
        return self.h == other.h and np.array_equal(self.coords, other.coords)

    def __repr__(self) -> str:
        return f"EncodedSubvector(h={self.h}, coords={self.coords.tolist()})"


def sdq_encode(x, dither, spec: LatticeSpec) -> np.ndarray:
    """Lattice message of the dithered quantizer: Q_P(x - v)."""
    dither = np.asarray(dither, dtype=np.float64)
    if not cell_contains(dither, spec):
        raise InvalidDitherError("dither outside the basic cell")
    return nearest_lattice_point(np.asarray(x, dtype=np.float64) - dither, spec)


def sdq_decode(coords, dither, spec: LatticeSpec) -> np.ndarray:
    """Reconstruction alpha * m + v; its error against x lies in P."""
    return spec.alpha * np.asarray(coords, dtype=np.float64) + np.asarray(dither, dtype=np.float64)


def rsuq_encode(x, accept, spec: LatticeSpec, tape: RandomTape) -> EncodedSubvector:
    """Redraw dithers until the SDQ error satisfies ``accept`` (a predicate
    for a positive-measure subset of the basic cell)."""
    x = np.asarray(x, dtype=np.float64)
    for i in range(1, REJECTION_CAP + 1):
        v = sample_cell_uniform(spec, tape)
        m = nearest_lattice_point(x - v, spec)
        err = spec.alpha * m + v - x
        if accept(err):
            return EncodedSubvector(h=i, coords=m)
    raise RejectionOverflowError(f"no acceptance within {REJECTION_CAP} dither draws")


@dataclass
class BatchEncodeResult:
    """Arrays over a batch of independently keyed subvector encodes."""

    h: np.ndarray          # (B,) int64 accepted try indices
    coords: np.ndarray     # (B, n) int64 lattice messages
    y: np.ndarray          # (B, n) float64 accepted reconstructions
    u: np.ndarray          # (B,) float64 latent levels
    cursors: np.ndarray    # (B,) uint64 tape positions after encoding


def _draw_dithers(keys: np.ndarray, cursors: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    w = np.empty((keys.shape[0], spec.dim), dtype=np.float64)
    for j in range(spec.dim):
        w[:, j] = uniforms_at(keys, cursors + np.uint64(j))
    return spec.alpha * (0.5 - w)


def lrsuq_encode_batch(
    x: np.ndarray,
    fam,
    spec: LatticeSpec,
    keys: np.ndarray,
    cursors: np.ndarray | None = None,
) -> BatchEncodeResult:
    """Layered RSUQ encode of a (B, n) batch, one keyed tape per row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.dim:
        raise ValueError(f"expected inputs of shape (B, {spec.dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs to the quantizer must be finite")
    if fam.dim != spec.dim:
        raise ValueError("noise family and lattice dimensions differ")
    batch = x.shape[0]
    keys = np.asarray(keys, dtype=np.uint64)
    cursors = (
        np.zeros(batch, dtype=np.uint64)
        if cursors is None
        else np.asarray(cursors, dtype=np.uint64).copy()
    )

    u = np.asarray(fam.latent_from_uniform(uniforms_at(keys, cursors)), dtype=np.float64)
    cursors += np.uint64(1)
    beta = np.asarray(fam.beta_scale(u, spec), dtype=np.float64)

    h = np.zeros(batch, dtype=np.int64)
    coords = np.zeros((batch, spec.dim), dtype=np.int64)
    y = np.zeros((batch, spec.dim), dtype=np.float64)
    active = np.ones(batch, dtype=bool)

    tries = 0
    while active.any():
        tries += 1
        if tries > REJECTION_CAP:
            raise RejectionOverflowError(f"no acceptance within {REJECTION_CAP} dither draws")
        idx = np.flatnonzero(active)
        v = _draw_dithers(keys[idx], cursors[idx], spec)
        cursors[idx] += np.uint64(spec.dim)

        ba = beta[idx]
        target = x[idx] / ba[:, None] - v
        mfloat = np.floor(target / spec.alpha + 0.5)
        if np.any(np.abs(mfloat) >= _COORD_LIMIT):
            raise MessageOverflowError("lattice coordinate exceeds the exact integer range")
        m = mfloat.astype(np.int64)
        y_try = ba[:, None] * (spec.alpha * m + v)
        err = y_try - x[idx]
        ok = fam.accept(err, u[idx])

        h[idx] += 1
        hit = idx[ok]
        coords[hit] = m[ok]
        y[hit] = y_try[ok]
        active[hit] = False

    return BatchEncodeResult(h=h, coords=coords, y=y, u=u, cursors=cursors)


def lrsuq_decode_batch(
    h: np.ndarray,
    coords: np.ndarray,
    fam,
    spec: LatticeSpec,
    keys: np.ndarray,
    cursors: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Regenerate (u, V_H) per row and reconstruct beta(u) * (alpha*M + V_H).

    The tape is counter-based, so the accepted dither is read directly at
    the positions the encoder used (draw 0 is u; try i occupies positions
    1 + (i-1)*n .. i*n).  Cursors advance as if all H tries were replayed,
    keeping both ends at identical positions.

    Returns (y, u, cursors).
    """
    h = np.asarray(h, dtype=np.int64)
    coords = np.asarray(coords, dtype=np.int64)
    if np.any(h < 1):
        raise ValueError("rejection indices must be >= 1")
    batch = h.shape[0]
    keys = np.asarray(keys, dtype=np.uint64)
    cursors = (
        np.zeros(batch, dtype=np.uint64)
        if cursors is None
        else np.asarray(cursors, dtype=np.uint64).copy()
    )

    u = np.asarray(fam.latent_from_uniform(uniforms_at(keys, cursors)), dtype=np.float64)
    cursors += np.uint64(1)
    beta = np.asarray(fam.beta_scale(u, spec), dtype=np.float64)

    base = cursors + (h.astype(np.uint64) - np.uint64(1)) * np.uint64(spec.dim)
    v = _draw_dithers(keys, base, spec)
    cursors += h.astype(np.uint64) * np.uint64(spec.dim)

    y = beta[:, None] * (spec.alpha * coords + v)
    return y, u, cursors


def lrsuq_encode(x, fam, spec: LatticeSpec, tape: RandomTape) -> EncodedSubvector:
    """Single-subvector layered RSUQ encode, consuming the given tape."""
    enc, _, _ = lrsuq_encode_detail(x, fam, spec, tape)
    return enc


def lrsuq_encode_detail(
    x, fam, spec: LatticeSpec, tape: RandomTape
) -> tuple[EncodedSubvector, float, np.ndarray]:
    """Encode and also expose (latent u, accepted reconstruction y)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    keys = np.full(1, tape.key, dtype=np.uint64)
    cursors = np.full(1, tape.cursor, dtype=np.uint64)
    res = lrsuq_encode_batch(x, fam, spec, keys, cursors)
    tape.cursor = int(res.cursors[0])
    return EncodedSubvector(h=int(res.h[0]), coords=res.coords[0]), float(res.u[0]), res.y[0]


def lrsuq_decode(enc: EncodedSubvector, fam, spec: LatticeSpec, tape: RandomTape) -> np.ndarray:
    """Reconstruct one subvector from (H, M) and a lockstep tape."""
    keys = np.full(1, tape.key, dtype=np.uint64)
    cursors = np.full(1, tape.cursor, dtype=np.uint64)
    y, _, out = lrsuq_decode_batch(
        np.asarray([enc.h]), enc.coords.reshape(1, -1), fam, spec, keys, cursors
    )
    tape.cursor = int(out[0])
    return y[0]
