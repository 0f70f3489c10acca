import numpy as np
import pytest

from cepam.randomness import (
    RandomTape,
    derive_key,
    derive_keys,
    uniform_at,
    uniforms_at,
    word_at,
    words_at,
)


def test_same_context_identical_streams():
    a = RandomTape.derive(seed=7, client=3, round_index=11, subvector=2)
    b = RandomTape.derive(seed=7, client=3, round_index=11, subvector=2)
    assert [a.next_uniform() for _ in range(1000)] == [b.next_uniform() for _ in range(1000)]


def test_distinct_seeds_distinct_streams():
    a = RandomTape.derive(seed=0, client=0, round_index=0, subvector=0)
    b = RandomTape.derive(seed=1, client=0, round_index=0, subvector=0)
    assert a.next_uniforms(100).tolist() != b.next_uniforms(100).tolist()


def test_neighbor_contexts_uncorrelated():
    a = RandomTape.derive(seed=5, client=2, round_index=9, subvector=4)
    b = RandomTape.derive(seed=5, client=2, round_index=9, subvector=5)
    xs = a.next_uniforms(1000)
    ys = b.next_uniforms(1000)
    assert xs.tolist() != ys.tolist()
    r = np.corrcoef(xs, ys)[0, 1]
    assert abs(r) < 0.05


def test_cursor_advances_by_one():
    tape = RandomTape.derive(seed=1, client=0, round_index=0, subvector=0)
    for expected in range(12):
        assert tape.cursor == expected
        tape.next_uniform()


def test_values_in_unit_interval_and_mean():
    tape = RandomTape.derive(seed=3, client=0, round_index=0, subvector=0)
    draws = tape.next_uniforms(100_000)
    assert np.all(draws >= 0.0) and np.all(draws < 1.0)
    assert abs(draws.mean() - 0.5) < 0.005  # 1% of the mean


def test_batch_matches_scalar_bitwise():
    key = derive_key(99, 1, 2, 3)
    idx = np.arange(257, dtype=np.uint64)
    batch = uniforms_at(np.full(257, key, dtype=np.uint64), idx)
    scalar = np.array([uniform_at(key, i) for i in range(257)])
    assert np.array_equal(batch, scalar)
    assert int(words_at(np.array([key], dtype=np.uint64), np.array([7], dtype=np.uint64))[0]) == word_at(key, 7)


def test_next_uniforms_matches_sequential_calls():
    a = RandomTape.derive(seed=4, client=0, round_index=0, subvector=0)
    b = RandomTape.derive(seed=4, client=0, round_index=0, subvector=0)
    block = a.next_uniforms(50)
    singles = np.array([b.next_uniform() for _ in range(50)])
    assert np.array_equal(block, singles)
    assert a.cursor == b.cursor == 50


def test_derive_keys_order():
    keys = derive_keys(8, [(0, 0, j) for j in range(5)])
    assert keys.dtype == np.uint64
    assert [int(k) for k in keys] == [derive_key(8, 0, 0, j) for j in range(5)]


def test_raw_words_pass_bit_balance():
    # each of the 64 bit positions should be set about half the time
    key = derive_key(42, 0, 0, 0)
    words = words_at(np.full(4096, key, dtype=np.uint64), np.arange(4096, dtype=np.uint64))
    for bit in range(64):
        frac = float(np.mean((words >> np.uint64(bit)) & np.uint64(1)))
        assert 0.45 < frac < 0.55, f"bit {bit} unbalanced: {frac}"


def test_key_derivation_is_context_sensitive():
    base = derive_key(1, 2, 3, 4)
    assert base != derive_key(2, 2, 3, 4)
    assert base != derive_key(1, 3, 3, 4)
    assert base != derive_key(1, 2, 4, 4)
    assert base != derive_key(1, 2, 3, 5)


def test_negative_seed_is_reduced_mod_2_64():
    assert derive_key(-1, 0, 0, 0) == derive_key(2**64 - 1, 0, 0, 0)
