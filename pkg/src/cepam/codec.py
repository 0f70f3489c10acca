"""Bit-exact serialization of (H, M) records and bit-budget accounting.

Stream layout (all multi-byte header fields little-endian):

    magic   4 bytes  b"CEPM"
    version u8       currently 1
    family  u8       0 = gaussian, 1 = laplace
    dim     u16      lattice / noise dimension n
    count   u32      number of subvector records N
    param   f64      sigma (gaussian) or b (laplace)
    alpha   f64      lattice cell edge
    clip    f64      clip radius of the input domain (gamma)

followed by the payload: N records packed MSB-first with no alignment
between records, zero-padded to a byte boundary at the end.  The shared
seed is deliberately absent (it is a shared secret, delivered out of
band); everything else needed for a standalone decode is in the header.

One record is

    golomb(H)  ||  fixed-width index of M

The rejection index H is geometric with success p (the acceptance
probability, constant in u for the tight box scale), coded with the
Golomb code of h - 1 whose parameter is max(1, round(-1 / log2(1 - p)));
for p = 1 the geometric is deterministic and zero bits are spent.  The
message M is ranked row-major inside an axis-aligned bounding box of the
feasible message set, computed identically on both sides from the latent
level u (known to the decoder through its tape), the clip radius, the
noise family and the lattice.  The box over-approximates the exact
feasible set; in exchange both sides get it in O(n) with no geometry.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeSpec
from .noise import GaussianBall, LaplaceInterval, make_noise_family
from .quantizers import EncodedSubvector, lrsuq_decode_batch, lrsuq_encode_batch
from .randomness import derive_keys, uniforms_at

MAGIC = b"CEPM"
VERSION = 1
_HEADER = struct.Struct("<4sBBHIddd")
_FAMILY_TAGS = {"gaussian": 0, "laplace": 1}
_FAMILY_KINDS = {tag: kind for kind, tag in _FAMILY_TAGS.items()}


class CodecError(ValueError):
    """Malformed stream, truncated payload, or parameter misuse."""


class MessageDomainError(CodecError):
    """Message outside its domain box, or box too large to index."""


class BitWriter:
    """MSB-first bit sink backed by a bytearray."""

    def __init__(self) -> None:
        self._bytes = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_length = 0

    def write_bits(self, value: int, count: int) -> None:
        if count < 0 or value < 0 or value >> count:
            raise CodecError(f"value {value} does not fit in {count} bits")
        self._acc = (self._acc << count) | value
        self._nacc += count
        self.bit_length += count
        while self._nacc >= 8:
            self._nacc -= 8
            self._bytes.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_unary(self, count: int) -> None:
        """``count`` one-bits followed by a terminating zero."""
        while count >= 32:
            self.write_bits((1 << 32) - 1, 32)
            count -= 32
        self.write_bits(((1 << count) - 1) << 1, count + 1)

    def getvalue(self) -> bytes:
        """Zero-pad to a byte boundary and return the buffer."""
        out = bytearray(self._bytes)
        if self._nacc:
            out.append((self._acc << (8 - self._nacc)) & 0xFF)
        return bytes(out)


class BitReader:
    """MSB-first bit source over a bytes object."""

    def __init__(self, data: bytes, bit_offset: int = 0) -> None:
        self._data = data
        self.position = bit_offset

    def read_bits(self, count: int) -> int:
        end = self.position + count
        if end > 8 * len(self._data):
            raise CodecError("bitstream truncated")
        value = 0
        pos = self.position
        while count > 0:
            byte = self._data[pos >> 3]
            avail = 8 - (pos & 7)
            take = min(avail, count)
            shift = avail - take
            value = (value << take) | ((byte >> shift) & ((1 << take) - 1))
            pos += take
            count -= take
        self.position = pos
        return value

    def read_unary(self) -> int:
        count = 0
        while self.read_bits(1):
            count += 1
            if count > 8 * len(self._data):
                raise CodecError("unreasonable unary run")
        return count


def golomb_parameter(p: float) -> int:
    """Golomb divisor for Geom(p); 0 flags the degenerate p = 1 code."""
    if not (0.0 < p <= 1.0):
        raise CodecError(f"geometric success probability must be in (0, 1], got {p}")
    if p == 1.0:
        return 0
    return max(1, int(math.floor(-1.0 / math.log2(1.0 - p) + 0.5)))


def _truncated_binary_params(m: int) -> tuple[int, int]:
    b = max(1, (m - 1).bit_length()) if m > 1 else 0
    return b, (1 << b) - m if m > 1 else 0


def golomb_encode(writer: BitWriter, h: int, p: float) -> None:
    """Golomb code of h - 1 for H ~ Geom(p); zero bits when p = 1."""
    if h < 1:
        raise CodecError(f"rejection index must be >= 1, got {h}")
    m = golomb_parameter(p)
    if m == 0:
        if h != 1:
            raise CodecError(f"p = 1 admits only h = 1, got {h}")
        return
    q, r = divmod(h - 1, m)
    writer.write_unary(q)
    if m > 1:
        b, cutoff = _truncated_binary_params(m)
        if r < cutoff:
            writer.write_bits(r, b - 1)
        else:
            writer.write_bits(r + cutoff, b)


def golomb_decode(reader: BitReader, p: float) -> int:
    m = golomb_parameter(p)
    if m == 0:
        return 1
    q = reader.read_unary()
    r = 0
    if m > 1:
        b, cutoff = _truncated_binary_params(m)
        r = reader.read_bits(b - 1)
        if r >= cutoff:
            r = ((r << 1) | reader.read_bits(1)) - cutoff
    return q * m + r + 1


def golomb_length(h: int, p: float) -> int:
    """Bit length of the Golomb codeword without materializing it."""
    if h < 1:
        raise CodecError(f"rejection index must be >= 1, got {h}")
    m = golomb_parameter(p)
    if m == 0:
        return 0
    q, r = divmod(h - 1, m)
    if m == 1:
        return q + 1
    b, cutoff = _truncated_binary_params(m)
    return q + 1 + (b - 1 if r < cutoff else b)


@dataclass(frozen=True)
class MessageDomain:
    """Everything both sides need to agree on the message index box."""

    u: float
    clip_radius: float
    spec: LatticeSpec
    fam: object

    def __post_init__(self) -> None:
        if not (self.u > 0.0):
            raise CodecError(f"latent level must be positive, got {self.u}")
        if not (self.clip_radius >= 0.0):
            raise CodecError(f"clip radius must be nonnegative, got {self.clip_radius}")


def message_index_bounds(dom: MessageDomain) -> tuple[int, int]:
    """Per-axis integer coordinate bounds (lo, hi) with lo = -hi.

    Any accepted message satisfies |alpha * c| <= (clip + radius(u)) / beta(u)
    + alpha / 2 per axis, giving a symmetric axis-aligned superset of the
    feasible set.
    """
    reach = (dom.clip_radius + float(dom.fam.radius(dom.u))) / (
        float(dom.fam.beta_scale(dom.u, dom.spec)) * dom.spec.alpha
    )
    hi = int(math.ceil(reach + 0.5))
    lo = int(math.floor(-reach - 0.5))
    side = hi - lo + 1
    if side**dom.spec.dim >= 2**63:
        raise MessageDomainError("message box too large to index")
    return lo, hi


def domain_index_bits(dom: MessageDomain) -> int:
    lo, hi = message_index_bounds(dom)
    total = (hi - lo + 1) ** dom.spec.dim
    return (total - 1).bit_length() if total > 1 else 0


def encode_subvector(writer: BitWriter, enc: EncodedSubvector, dom: MessageDomain) -> int:
    """Append one record; returns its bit length."""
    start = writer.bit_length
    golomb_encode(writer, enc.h, dom.fam.acceptance_prob())
    lo, hi = message_index_bounds(dom)
    side = hi - lo + 1
    rank = 0
    for c in enc.coords.tolist():
        if c < lo or c > hi:
            raise MessageDomainError(
                f"message coordinate {c} outside box [{lo}, {hi}] "
                "(clip radius or scale mismatch)"
            )
        rank = rank * side + (c - lo)
    bits = domain_index_bits(dom)
    writer.write_bits(rank, bits)
    return writer.bit_length - start


def decode_subvector(reader: BitReader, dom: MessageDomain) -> EncodedSubvector:
    h = golomb_decode(reader, dom.fam.acceptance_prob())
    lo, hi = message_index_bounds(dom)
    side = hi - lo + 1
    rank = reader.read_bits(domain_index_bits(dom))
    coords = np.empty(dom.spec.dim, dtype=np.int64)
    for i in range(dom.spec.dim - 1, -1, -1):
        rank, rem = divmod(rank, side)
        coords[i] = rem + lo
    return EncodedSubvector(h=h, coords=coords)


@dataclass(frozen=True)
class StreamHeader:
    family: str
    dim: int
    noise_param: float  # sigma or b
    alpha: float
    clip_radius: float
    count: int

    def noise_family(self):
        if self.family == "gaussian":
            return make_noise_family("gaussian", dim=self.dim, sigma=self.noise_param)
        return make_noise_family("laplace", dim=self.dim, b=self.noise_param)

    def lattice_spec(self) -> LatticeSpec:
        return LatticeSpec(dim=self.dim, alpha=self.alpha)


def header_for(fam, spec: LatticeSpec, clip_radius: float, count: int) -> StreamHeader:
    param = fam.sigma if isinstance(fam, GaussianBall) else fam.b
    return StreamHeader(
        family=fam.kind,
        dim=spec.dim,
        noise_param=param,
        alpha=spec.alpha,
        clip_radius=clip_radius,
        count=count,
    )


def write_header(header: StreamHeader) -> bytes:
    return _HEADER.pack(
        MAGIC,
        VERSION,
        _FAMILY_TAGS[header.family],
        header.dim,
        header.count,
        header.noise_param,
        header.alpha,
        header.clip_radius,
    )


def read_header(data: bytes) -> tuple[StreamHeader, int]:
    if len(data) < _HEADER.size:
        raise CodecError("stream shorter than its header")
    magic, version, famtag, dim, count, param, alpha, clip = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CodecError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CodecError(f"unsupported stream version {version}")
    if famtag not in _FAMILY_KINDS:
        raise CodecError(f"unknown family tag {famtag}")
    header = StreamHeader(
        family=_FAMILY_KINDS[famtag],
        dim=dim,
        noise_param=param,
        alpha=alpha,
        clip_radius=clip,
        count=count,
    )
    return header, _HEADER.size


def encode_client_round(
    x_subvectors: np.ndarray,
    fam,
    spec: LatticeSpec,
    clip_radius: float,
    seed: int,
    client: int,
    round_index: int,
):
    """Quantize and serialize all subvectors of one client-round.

    Returns (stream bytes, per-record bit lengths, encoder reconstructions,
    latent levels).
    """
    x_subvectors = np.asarray(x_subvectors, dtype=np.float64)
    count = x_subvectors.shape[0]
    keys = derive_keys(seed, [(client, round_index, j) for j in range(count)])
    res = lrsuq_encode_batch(x_subvectors, fam, spec, keys)

    writer = BitWriter()
    record_bits = []
    for j in range(count):
        dom = MessageDomain(u=float(res.u[j]), clip_radius=clip_radius, spec=spec, fam=fam)
        enc = EncodedSubvector(h=int(res.h[j]), coords=res.coords[j])
        record_bits.append(encode_subvector(writer, enc, dom))
    data = write_header(header_for(fam, spec, clip_radius, count)) + writer.getvalue()
    return data, record_bits, res.y, res.u


def decode_client_round(data: bytes, seed: int, client: int, round_index: int):
    """Parse and reconstruct one client-round stream via lockstep tapes.

    Returns (header, reconstructions, decoded records).
    """
    header, offset = read_header(data)
    fam = header.noise_family()
    spec = header.lattice_spec()
    count = header.count
    keys = derive_keys(seed, [(client, round_index, j) for j in range(count)])

    # Latent levels come from the tapes (draw 0 of each), not from the wire.
    u = np.asarray(
        fam.latent_from_uniform(uniforms_at(keys, np.zeros(count, dtype=np.uint64))),
        dtype=np.float64,
    )

    reader = BitReader(data[offset:])
    encs = []
    for j in range(count):
        dom = MessageDomain(u=float(u[j]), clip_radius=header.clip_radius, spec=spec, fam=fam)
        encs.append(decode_subvector(reader, dom))

    h = np.asarray([e.h for e in encs], dtype=np.int64)
    coords = np.stack([e.coords for e in encs])
    y, _, _ = lrsuq_decode_batch(h, coords, fam, spec, keys)
    return header, y, encs


def geometric_entropy_bits(p: float) -> float:
    """Entropy of Geom(p) in bits: h2(p) / p, zero in the degenerate case."""
    if not (0.0 < p <= 1.0):
        raise CodecError(f"geometric success probability must be in (0, 1], got {p}")
    if p == 1.0:
        return 0.0
    return (-p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)) / p


def expected_bits_per_round(
    fam,
    spec: LatticeSpec,
    clip_radius: float,
    n_subvectors: int,
    samples: int,
    seed: int = 0,
) -> dict:
    """Monte-Carlo bit budget for one client-round of ``n_subvectors`` records.

    Samples latent levels, prices the rejection index at the geometric
    entropy and the message at its box index width, and cross-checks
    against the empirical mean length of records with geometrically
    sampled indices.
    """
    if samples < 10**3:
        raise ValueError("need at least 1000 samples for a stable estimate")
    keys = derive_keys(seed, [(0, i, 0) for i in range(samples)])
    w = uniforms_at(keys, np.zeros(samples, dtype=np.uint64))
    u = np.asarray(fam.latent_from_uniform(w), dtype=np.float64)
    p = fam.acceptance_prob()

    widths = np.empty(samples, dtype=np.float64)
    for i in range(samples):
        dom = MessageDomain(u=float(u[i]), clip_radius=clip_radius, spec=spec, fam=fam)
        widths[i] = domain_index_bits(dom)

    geom_bits = geometric_entropy_bits(p)
    if p == 1.0:
        h = np.ones(samples, dtype=np.int64)
    else:
        wh = uniforms_at(keys, np.ones(samples, dtype=np.uint64))
        h = 1 + np.floor(np.log1p(-wh) / math.log1p(-p)).astype(np.int64)
    record_lengths = np.asarray([golomb_length(int(hi), p) for hi in h], dtype=np.float64)
    record_lengths += widths

    per_record_estimate = geom_bits + float(widths.mean())
    return {
        "subvectors": n_subvectors,
        "acceptance_prob": p,
        "geometric_entropy_bits": geom_bits,
        "mean_index_bits": float(widths.mean()),
        "per_record_estimate_bits": per_record_estimate,
        "per_record_empirical_bits": float(record_lengths.mean()),
        "per_record_empirical_se": float(record_lengths.std(ddof=1) / math.sqrt(samples)),
        "round_estimate_bits": n_subvectors * per_record_estimate,
    }
