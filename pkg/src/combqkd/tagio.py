"""Time-tag file formats.

Binary: little-endian; 16-byte header (8-byte magic, u32 version, u32
channel count) followed by 10-byte records (u64 picosecond time, u16
channel). CSV: a ``t_ps,channel`` header line then one record per line.
Within each channel timestamps never decrease.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CQKDTAG\x00"
VERSION = 1
HEADER = struct.Struct("<8sII")
RECORD = np.dtype([("t", "<u8"), ("channel", "<u2")])
assert RECORD.itemsize == 10


class TagFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _fmt_for(path, fmt):
    if fmt is not None:
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "bin"


def _check_order(t: np.ndarray, ch: np.ndarray):
    """Index of the first record breaking per-channel order, or -1."""
    for c in np.unique(ch):
        sel = np.flatnonzero(ch == c)
        bad = np.flatnonzero(t[sel][1:] < t[sel][:-1])
        if len(bad):
            return int(sel[bad[0] + 1])
    return -1


def write_tags(path, t, channel, fmt: str | None = None) -> None:
    t = np.asarray(t, np.int64)
    ch = np.asarray(channel, np.int64)
    if len(t) != len(ch):
        raise ValueError("time and channel columns differ in length")
    if len(t) and (t.min() < 0 or ch.min() < 0 or ch.max() > 0xFFFF):
        raise ValueError("times must be non-negative and channels fit in 16 bits")
    if _check_order(t, ch) >= 0:
        raise ValueError("timestamps must be non-decreasing within each channel")
    fmt = _fmt_for(path, fmt)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("t_ps,channel\n")
        for a, b in zip(t.tolist(), ch.tolist()):
            buf.write(f"{a},{b}\n")
        Path(path).write_text(buf.getvalue())
    elif fmt == "bin":
        rec = np.empty(len(t), RECORD)
        rec["t"] = t
        rec["channel"] = ch
        n_ch = int(ch.max()) + 1 if len(ch) else 0
        Path(path).write_bytes(HEADER.pack(MAGIC, VERSION, n_ch) + rec.tobytes())
    else:
        raise ValueError(f"unknown tag format {fmt!r}")


def read_tags(path, fmt: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return (times, channels) as int64 arrays."""
    fmt = _fmt_for(path, fmt)
    raw = Path(path).read_bytes()
    if fmt == "bin":
        t, ch = _decode_binary(raw)
    elif fmt == "csv":
        t, ch = _decode_csv(raw)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")
    return t, ch


def _decode_binary(raw: bytes):
    if len(raw) < HEADER.size:
        raise TagFormatError("truncated header", len(raw))
    magic, version, n_ch = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TagFormatError("bad magic", 0)
    if version != VERSION:
        raise TagFormatError(f"unsupported version {version}", 8)
    body = len(raw) - HEADER.size
    if body % RECORD.itemsize:
        n_full = body // RECORD.itemsize
        raise TagFormatError("truncated record", HEADER.size + n_full * RECORD.itemsize)
    rec = np.frombuffer(raw, RECORD, offset=HEADER.size)
    if np.any(rec["t"] > np.iinfo(np.int64).max):
        bad = int(np.flatnonzero(rec["t"] > np.iinfo(np.int64).max)[0])
        raise TagFormatError("timestamp out of range", HEADER.size + bad * RECORD.itemsize)
    t = rec["t"].astype(np.int64)
    ch = rec["channel"].astype(np.int64)
    if len(ch) and ch.max() >= n_ch:
        bad = int(np.flatnonzero(ch >= n_ch)[0])
        raise TagFormatError("channel id exceeds header channel count",
                             HEADER.size + bad * RECORD.itemsize + 8)
    bad = _check_order(t, ch)
    if bad >= 0:
        raise TagFormatError("timestamp decreases within channel",
                             HEADER.size + bad * RECORD.itemsize)
    return t, ch


def _decode_csv(raw: bytes):
    text = raw.decode("ascii")
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].strip() != "t_ps,channel":
        raise TagFormatError("missing t_ps,channel header", 0)
    offset = len(lines[0].encode())
    ts, chs, offsets = [], [], []
    for line in lines[1:]:
        s = line.strip()
        if s:
            parts = s.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                a, b = int(parts[0]), int(parts[1])
                if a < 0 or not 0 <= b <= 0xFFFF:
                    raise ValueError
            except ValueError:
                raise TagFormatError(f"malformed record {s!r}", offset) from None
            ts.append(a)
            chs.append(b)
            offsets.append(offset)
        offset += len(line.encode())
    t = np.asarray(ts, np.int64)
    ch = np.asarray(chs, np.int64)
    bad = _check_order(t, ch)
    if bad >= 0:
        raise TagFormatError("timestamp decreases within channel", offsets[bad])
    return t, ch


def merge_channels(streams: dict[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Interleave per-channel tag arrays into time order."""
    if not streams:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    t = np.concatenate([np.asarray(v, np.int64) for v in streams.values()])
    ch = np.concatenate([np.full(len(v), k, np.int64) for k, v in streams.items()])
    order = np.lexsort((ch, t))
    return t[order], ch[order]


def split_channels(t: np.ndarray, ch: np.ndarray) -> dict[int, np.ndarray]:
    return {int(c): t[ch == c] for c in np.unique(ch)}
