"""One-time-pad codec fed by sifted key bits."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

KEY_MAGIC = b"CQKDKEY\x00"
_KEY_HEADER = struct.Struct("<8sQ")


class KeyExhaustedError(RuntimeError):
    """Not enough unused key material left for the request."""


class KeyBuffer:
    """Queue of key bits; every bit can be consumed exactly once."""

    def __init__(self, bits=None):
        self._bits = np.zeros(0, np.uint8)
        self.offset = 0
        if bits is not None:
            self.feed(bits)

    def feed(self, bits) -> None:
        b = np.asarray(getattr(bits, "bits", bits)).astype(np.uint8)
        if b.size and b.max() > 1:
            raise ValueError("key bits must be 0 or 1")
        self._bits = np.concatenate([self._bits, b])

    @property
    def available(self) -> int:
        return len(self._bits) - self.offset

    @property
    def exhausted(self) -> bool:
        return self.available == 0

    def take(self, n_bits: int) -> np.ndarray:
        if n_bits < 0:
            raise ValueError("cannot take a negative number of bits")
        if n_bits > self.available:
            raise KeyExhaustedError(
                f"need {n_bits} key bits but only {self.available} remain unused")
        out = self._bits[self.offset:self.offset + n_bits]
        self.offset += n_bits
        return out


def xor_codec(payload: bytes, key: KeyBuffer) -> bytes:
    """XOR ``payload`` with the next 8*len(payload) key bits (MSB first)."""
    data = np.frombuffer(bytes(payload), np.uint8)
    pad = np.packbits(key.take(8 * len(data)))
    return (data ^ pad).tobytes()


def transfer_schedule(payload_bytes: int, key_rate_bps: float) -> float:
    """Seconds of key generation needed to pad ``payload_bytes``."""
    if key_rate_bps <= 0:
        raise ValueError("key rate must be positive")
    if payload_bytes < 0:
        raise ValueError("payload size must be non-negative")
    return 8 * payload_bytes / key_rate_bps


def error_stats(original: bytes, received: bytes) -> dict:
    a = np.frombuffer(original, np.uint8)
    b = np.frombuffer(received, np.uint8)
    if len(a) != len(b):
        raise ValueError("payloads differ in length")
    if len(a) == 0:
        return {"bit_error_fraction": 0.0, "byte_error_fraction": 0.0}
    diff = a ^ b
    return {
        "bit_error_fraction": float(np.unpackbits(diff).mean()),
        "byte_error_fraction": float(np.count_nonzero(diff) / len(a)),
    }


def write_key(path, bits, packed: bool = True) -> None:
    """Store key bits either packed (16-byte header) or one bit per line."""
    b = np.asarray(getattr(bits, "bits", bits)).astype(np.uint8)
    path = Path(path)
    if packed:
        path.write_bytes(_KEY_HEADER.pack(KEY_MAGIC, len(b)) + np.packbits(b).tobytes())
    else:
        path.write_text("".join(f"{int(x)}\n" for x in b))


def read_key(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] == KEY_MAGIC:
        if len(raw) < _KEY_HEADER.size:
            raise ValueError(f"{path}: truncated key header at byte {len(raw)}")
        _, n = _KEY_HEADER.unpack_from(raw)
        body = np.frombuffer(raw, np.uint8, offset=_KEY_HEADER.size)
        if len(body) * 8 < n:
            raise ValueError(f"{path}: key body ends at byte {len(raw)}, "
                             f"expected {_KEY_HEADER.size + (n + 7) // 8}")
        return np.unpackbits(body)[:n]
    bits = []
    for n, line in enumerate(raw.decode("ascii").splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s not in ("0", "1"):
            raise ValueError(f"{path}: line {n} is not a bit: {s!r}")
        bits.append(int(s))
    return np.asarray(bits, np.uint8)


def sample_asset(n_bytes: int = 21_000) -> bytes:
    """Deterministic stand-in for the demo image: a binary PGM gradient with a ring."""
    width = 140
    header = b"P5\n140 %d\n255\n"
    height = max(1, (n_bytes - len(header % 999)) // width)
    head = header % height
    y, x = np.mgrid[0:height, 0:width]
    r = np.hypot(x - width / 2, y - height / 2)
    img = ((x * 255 // max(width - 1, 1)) ^ (np.abs(r - height / 3) < 6) * 255).astype(np.uint8)
    body = img.tobytes()
    data = (head + body)[:n_bytes]
    return data + bytes(n_bytes - len(data))
