"""Shared-randomness tapes: keyed, counter-based, positionally deterministic.

The client-side encoder and the server-side decoder must regenerate
identical dither and latent streams from a shared seed, so only the
(rejection index, lattice message) pair ever crosses the wire.  A tape is
addressed by the tuple ``(seed, client, round, subvector)`` and its i-th
draw is a pure function of the derived key and the counter i.  That makes
the stream random-access (the decoder may jump to the dither it needs) and
safe to consume from both ends of the protocol in lockstep.

Construction, fixed bit-for-bit so independent implementations
interoperate:

    key    = first 8 bytes, little-endian, of
             SHA-256( LE64(seed) || LE64(client) || LE64(round) || LE64(subvector) )
    word_i = mix64( (key + (i + 1) * 0x9E3779B97F4A7C15)  mod 2^64 )
    u_i    = (word_i >> 11) * 2**-53        # uniform on [0, 1), 53 bits

where ``mix64`` is the SplitMix64 finalizer:

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9   (mod 2^64)
    z ^= z >> 27;  z *= 0x94D049BB133111EB   (mod 2^64)
    z ^= z >> 31

All integers are taken modulo 2^64.  The generator is not cryptographic;
the threat model trusts the server and the seed is a shared secret, so
statistical quality and positional determinism are the requirements, not
unpredictability.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U53 = 2.0**-53

_GOLDEN_U = np.uint64(_GOLDEN)
_MIX1_U = np.uint64(_MIX1)
_MIX2_U = np.uint64(_MIX2)
_ONE_U = np.uint64(1)


def derive_key(seed: int, client: int, round_index: int, subvector: int) -> int:
    """Derive the 64-bit stream key for one (seed, context) tuple."""
    raw = struct.pack(
        "<4Q",
        seed & _MASK64,
        client & _MASK64,
        round_index & _MASK64,
        subvector & _MASK64,
    )
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "little")


def derive_keys(seed: int, contexts) -> np.ndarray:
    """Vector of stream keys for an iterable of (client, round, subvector)."""
    return np.array(
        [derive_key(seed, c, r, j) for (c, r, j) in contexts], dtype=np.uint64
    )


def _mix64(z: int) -> int:
    z ^= z >> 30
    z = (z * _MIX1) & _MASK64
    z ^= z >> 27
    z = (z * _MIX2) & _MASK64
    z ^= z >> 31
    return z


def word_at(key: int, index: int) -> int:
    """The index-th raw 64-bit word of the stream with the given key."""
    return _mix64((key + (index + 1) * _GOLDEN) & _MASK64)


def uniform_at(key: int, index: int) -> float:
    return (word_at(key, index) >> 11) * _U53


def words_at(keys: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Vectorized ``word_at``: elementwise over uint64 keys and counters."""
    z = (keys.astype(np.uint64) + (indices.astype(np.uint64) + _ONE_U) * _GOLDEN_U)
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1_U
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2_U
    z = z ^ (z >> np.uint64(31))
    return z


def uniforms_at(keys: np.ndarray, indices: np.ndarray) -> np.ndarray:
    # Values after >> 11 are below 2^53, hence exactly representable.
    return (words_at(keys, indices) >> np.uint64(11)).astype(np.float64) * _U53


@dataclass
class RandomTape:
    """Single-owner cursor over one keyed stream.

    Tapes with equal (seed, context) produce identical draw sequences on
    any platform; tapes with different contexts are derived through
    SHA-256 and behave as independent streams.
    """

    key: int
    cursor: int = 0
    context: tuple = field(default=(), repr=True)

    @classmethod
    def derive(cls, seed: int, client: int, round_index: int, subvector: int) -> "RandomTape":
        key = derive_key(seed, client, round_index, subvector)
        return cls(key=key, context=(client, round_index, subvector))

    def next_uniform(self) -> float:
        """One uniform draw in [0, 1); advances the cursor by exactly one."""
        value = uniform_at(self.key, self.cursor)
        self.cursor += 1
        return value

    def next_uniforms(self, count: int) -> np.ndarray:
        """``count`` consecutive uniform draws as a float64 vector."""
        idx = np.arange(self.cursor, self.cursor + count, dtype=np.uint64)
        keys = np.full(count, self.key, dtype=np.uint64)
        self.cursor += count
        return uniforms_at(keys, idx)
