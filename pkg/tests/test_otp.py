import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from combqkd.otp import (KeyBuffer, KeyExhaustedError, error_stats, read_key, sample_asset,
                         transfer_schedule, write_key, xor_codec)


def test_zero_key_identity():
    data = b"plaintext bytes"
    assert xor_codec(data, KeyBuffer(np.zeros(8 * len(data)))) == data


def test_involution(rng):
    data = rng.integers(0, 256, 1024, dtype=np.uint8).tobytes()
    bits = rng.integers(0, 2, 8 * len(data))
    assert xor_codec(xor_codec(data, KeyBuffer(bits)), KeyBuffer(bits)) == data


def test_msb_first_mapping():
    assert xor_codec(b"\x00", KeyBuffer([1, 0, 0, 0, 0, 0, 0, 1])) == b"\x81"


def test_exhaustion_is_explicit():
    kb = KeyBuffer([1] * 15)
    with pytest.raises(KeyExhaustedError):
        xor_codec(b"ab", kb)
    assert kb.offset == 0


@given(st.lists(st.integers(0, 40), max_size=10))
def test_bits_consumed_once(takes):
    kb = KeyBuffer(np.arange(200) % 2)
    seen = 0
    for n in takes:
        if n > kb.available:
            with pytest.raises(KeyExhaustedError):
                kb.take(n)
            continue
        before = kb.offset
        kb.take(n)
        assert kb.offset == before + n >= seen
        seen = kb.offset


def test_counterpart_key_error_rates(rng):
    data = sample_asset(21_000)
    a = rng.integers(0, 2, 8 * len(data)).astype(np.uint8)
    b = a ^ (rng.random(len(a)) < 0.09)
    out = xor_codec(xor_codec(data, KeyBuffer(a)), KeyBuffer(b))
    st_ = error_stats(data, out)
    n = len(a)
    assert abs(st_["bit_error_fraction"] - 0.09) < 3 * np.sqrt(0.09 * 0.91 / n)
    assert st_["byte_error_fraction"] == pytest.approx(1 - 0.91 ** 8, abs=0.02)


def test_schedule():
    assert transfer_schedule(21_000, 600) == 280.0
    assert transfer_schedule(0, 600) == 0.0
    assert transfer_schedule(1234, 1200) == transfer_schedule(1234, 600) / 2
    with pytest.raises(ValueError):
        transfer_schedule(10, 0)


@pytest.mark.parametrize("packed", [True, False])
def test_key_file_round_trip(tmp_path, rng, packed):
    bits = rng.integers(0, 2, 1001).astype(np.uint8)
    write_key(tmp_path / "k", bits, packed)
    assert np.array_equal(read_key(tmp_path / "k"), bits)
    if packed:
        raw = (tmp_path / "k").read_bytes()
        assert len(raw) == 16 + (1001 + 7) // 8


def test_truncated_key_file(tmp_path):
    write_key(tmp_path / "k", np.ones(100, np.uint8))
    raw = (tmp_path / "k").read_bytes()
    (tmp_path / "k").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        read_key(tmp_path / "k")


def test_sample_asset_size():
    a = sample_asset(21_000)
    assert len(a) == 21_000 and a.startswith(b"P5\n")
    assert sample_asset(21_000) == a
