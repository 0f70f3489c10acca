import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cepam.codec import (
    BitReader,
    BitWriter,
    CodecError,
    MessageDomain,
    MessageDomainError,
    decode_client_round,
    decode_subvector,
    domain_index_bits,
    encode_client_round,
    encode_subvector,
    expected_bits_per_round,
    geometric_entropy_bits,
    golomb_decode,
    golomb_encode,
    golomb_length,
    golomb_parameter,
    message_index_bounds,
    read_header,
    write_header,
    header_for,
)
from cepam.lattice import LatticeSpec
from cepam.noise import GaussianBall, LaplaceInterval
from cepam.quantizers import EncodedSubvector


def bits_of(writer: BitWriter) -> str:
    data = writer.getvalue()
    return "".join(format(b, "08b") for b in data)[: writer.bit_length]


# ---------------------------------------------------------------------------
# bit plumbing


def test_bit_writer_reader_round_trip():
    w = BitWriter()
    w.write_bits(0b1011, 4)
    w.write_bits(0, 3)
    w.write_bits(0x5A3, 12)
    r = BitReader(w.getvalue())
    assert r.read_bits(4) == 0b1011
    assert r.read_bits(3) == 0
    assert r.read_bits(12) == 0x5A3


def test_bit_reader_overrun():
    w = BitWriter()
    w.write_bits(1, 1)
    r = BitReader(w.getvalue())
    r.read_bits(8)  # the padded byte
    with pytest.raises(CodecError):
        r.read_bits(1)


def test_trailing_pad_bits_zero():
    w = BitWriter()
    w.write_bits(0b111, 3)
    assert w.getvalue() == bytes([0b11100000])


# ---------------------------------------------------------------------------
# Golomb


def test_golomb_parameters():
    assert golomb_parameter(1.0) == 0
    assert golomb_parameter(0.5) == 1
    assert golomb_parameter(math.pi / 4) == 1
    assert golomb_parameter(math.pi / 6) == 1
    assert golomb_parameter(0.1) == 7
    with pytest.raises(CodecError):
        golomb_parameter(0.0)
    with pytest.raises(CodecError):
        golomb_parameter(1.5)


def test_golomb_unary_codewords():
    w = BitWriter()
    golomb_encode(w, 1, 0.5)
    assert bits_of(w) == "0"
    w = BitWriter()
    golomb_encode(w, 3, 0.5)
    assert bits_of(w) == "110"


def test_golomb_degenerate_code():
    w = BitWriter()
    golomb_encode(w, 1, 1.0)
    assert w.bit_length == 0
    r = BitReader(b"")
    assert golomb_decode(r, 1.0) == 1
    with pytest.raises(CodecError):
        golomb_encode(BitWriter(), 2, 1.0)


@pytest.mark.parametrize("p", [0.1, math.pi / 6, math.pi / 4])
def test_golomb_round_trip_small_range(p):
    w = BitWriter()
    hs = list(range(1, 101))
    for h in hs:
        golomb_encode(w, h, p)
    r = BitReader(w.getvalue())
    assert [golomb_decode(r, p) for _ in hs] == hs


@settings(max_examples=300, deadline=None)
@given(
    h=st.integers(min_value=1, max_value=50_000),
    p=st.floats(min_value=0.01, max_value=0.999),
)
def test_golomb_round_trip_property(h, p):
    w = BitWriter()
    golomb_encode(w, h, p)
    assert w.bit_length == golomb_length(h, p)
    assert golomb_decode(BitReader(w.getvalue()), p) == h


@pytest.mark.parametrize("p", [0.1, math.pi / 6, math.pi / 4, 0.9])
def test_golomb_prefix_free(p):
    words = []
    for h in range(1, 1001):
        w = BitWriter()
        golomb_encode(w, h, p)
        words.append(bits_of(w))
    assert len(set(words)) == len(words)
    ordered = sorted(words)
    for a, b in zip(ordered, ordered[1:]):
        assert not b.startswith(a)


# ---------------------------------------------------------------------------
# message domain


GAUSS3 = GaussianBall(dim=3, sigma=0.01)
SPEC3 = LatticeSpec(dim=3, alpha=1e-3)


def test_bounds_symmetric():
    dom = MessageDomain(u=2.0, clip_radius=1.0, spec=SPEC3, fam=GAUSS3)
    lo, hi = message_index_bounds(dom)
    assert lo == -hi


def test_bounds_zero_clip_tiny_box():
    dom = MessageDomain(u=3.0, clip_radius=0.0, spec=SPEC3, fam=GAUSS3)
    lo, hi = message_index_bounds(dom)
    assert hi - lo + 1 <= 3


def test_bounds_width_monotone_in_level():
    widths = []
    for u in np.linspace(0.05, 40.0, 60):
        dom = MessageDomain(u=float(u), clip_radius=1.0, spec=SPEC3, fam=GAUSS3)
        lo, hi = message_index_bounds(dom)
        widths.append(hi - lo + 1)
    assert all(a >= b for a, b in zip(widths, widths[1:]))


def test_domain_too_large():
    fam = LaplaceInterval(b=0.01)
    spec = LatticeSpec(dim=1, alpha=1e-3)
    dom = MessageDomain(u=1e-18, clip_radius=1.0, spec=spec, fam=fam)
    with pytest.raises(MessageDomainError):
        message_index_bounds(dom)


def test_out_of_box_message_fails_loudly():
    dom = MessageDomain(u=3.0, clip_radius=0.0, spec=SPEC3, fam=GAUSS3)
    lo, hi = message_index_bounds(dom)
    bad = EncodedSubvector(h=1, coords=np.array([hi + 1, 0, 0]))
    with pytest.raises(MessageDomainError):
        encode_subvector(BitWriter(), bad, dom)


def test_record_round_trip_randomized():
    rng = np.random.default_rng(23)
    fams = [
        (GaussianBall(dim=1, sigma=0.01), LatticeSpec(dim=1, alpha=1e-3)),
        (GaussianBall(dim=2, sigma=0.01), LatticeSpec(dim=2, alpha=1e-3)),
        (GAUSS3, SPEC3),
        (LaplaceInterval(b=0.01), LatticeSpec(dim=1, alpha=1e-3)),
    ]
    for fam, spec in fams:
        u = fam.latent_from_uniform(rng.uniform(0.01, 0.99, size=500))
        p = fam.acceptance_prob()
        w = BitWriter()
        originals = []
        doms = []
        for ui in u:
            dom = MessageDomain(u=float(ui), clip_radius=1.0, spec=spec, fam=fam)
            lo, hi = message_index_bounds(dom)
            coords = rng.integers(lo, hi + 1, size=spec.dim)
            h = 1 if p == 1.0 else int(rng.geometric(p))
            enc = EncodedSubvector(h=h, coords=coords)
            encode_subvector(w, enc, dom)
            originals.append(enc)
            doms.append(dom)
        r = BitReader(w.getvalue())
        for enc, dom in zip(originals, doms):
            assert decode_subvector(r, dom) == enc


def test_header_round_trip():
    header = header_for(GAUSS3, SPEC3, clip_radius=0.75, count=44)
    data = write_header(header)
    parsed, offset = read_header(data)
    assert parsed == header
    assert offset == len(data)
    with pytest.raises(CodecError):
        read_header(b"XXXX" + data[4:])


def test_client_round_pipeline_bit_exact():
    rng = np.random.default_rng(29)
    x = rng.normal(size=(40, 3))
    x = x / np.linalg.norm(x) * 0.8
    data, record_bits, y_enc, u = encode_client_round(x, GAUSS3, SPEC3, 1.0, 77, 4, 9)
    header, y_dec, encs = decode_client_round(data, 77, 4, 9)
    assert np.array_equal(y_enc, y_dec)
    assert header.count == 40
    assert len(record_bits) == 40
    assert sum(record_bits) <= 8 * len(data)


def test_corrupted_payload_never_silently_accepted():
    rng = np.random.default_rng(31)
    x = rng.normal(size=(20, 3))
    x = x / np.linalg.norm(x) * 0.8
    data, _, y_enc, _ = encode_client_round(x, GAUSS3, SPEC3, 1.0, 78, 0, 0)
    header_len = 36  # struct size of the fixed header
    corrupted = 0
    for bit in range(8 * header_len, 8 * len(data)):
        buf = bytearray(data)
        buf[bit // 8] ^= 0x80 >> (bit % 8)
        try:
            _, y_bad, _ = decode_client_round(bytes(buf), 78, 0, 0)
            if not np.array_equal(y_bad, y_enc):
                corrupted += 1
        except CodecError:
            corrupted += 1
    total_payload_bits = 8 * len(data) - 8 * header_len
    # every flipped non-pad bit must change the decode or raise
    assert corrupted >= total_payload_bits - 7


def test_gaussian_1d_records_have_no_h_bits():
    fam = GaussianBall(dim=1, sigma=0.01)
    spec = LatticeSpec(dim=1, alpha=1e-3)
    dom = MessageDomain(u=2.0, clip_radius=1.0, spec=spec, fam=fam)
    w = BitWriter()
    bits = encode_subvector(w, EncodedSubvector(h=1, coords=np.array([3])), dom)
    assert bits == domain_index_bits(dom)


def test_expected_bits_budget():
    report = expected_bits_per_round(GAUSS3, SPEC3, 1.0, 10, 5000, seed=3)
    assert math.isclose(report["geometric_entropy_bits"], geometric_entropy_bits(math.pi / 6))
    # source-coding bound with a sampling allowance on the empirical side
    emp = report["per_record_empirical_bits"]
    se = report["per_record_empirical_se"]
    assert emp + 3 * se >= report["per_record_estimate_bits"]
    assert emp <= report["per_record_estimate_bits"] + 2.0
    assert report["round_estimate_bits"] == 10 * report["per_record_estimate_bits"]


def test_geometric_entropy_values():
    assert geometric_entropy_bits(1.0) == 0.0
    p = math.pi / 4
    h2 = -p * math.log2(p) - (1 - p) * math.log2(1 - p)
    assert math.isclose(geometric_entropy_bits(p), h2 / p)
    assert math.isclose(geometric_entropy_bits(p), 0.9552, abs_tol=1e-4)
