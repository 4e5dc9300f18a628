"""Binary time-tag file format: fixed-width little-endian records.

Layout (all little-endian), documented with a hex dump in
docs/tagfile-format.md:

    header, 40 bytes:
        offset  0  magic            8 bytes  b"BSTROBE1"
        offset  8  version          u16      currently 1
        offset 10  station_id       u8       0 = A, 1 = B
        offset 11  pad              1 zero byte
        offset 12  clock_resolution u32      picoseconds per tick (1)
        offset 16  record_count     u64
        offset 24  reserved         16 zero bytes
    record, 16 bytes each:
        offset  0  channel          u8       1 = det+, 2 = det-, 3 = trigger
        offset  1  pad              7 zero bytes
        offset  8  timestamp        u64      picoseconds, local clock

Records are sorted by timestamp, ties broken by ascending channel; duplicate
(timestamp, channel) pairs are invalid. File size is exactly 40 + 16*N bytes.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

MAGIC = b"BSTROBE1"
VERSION = 1
HEADER_STRUCT = struct.Struct("<8sHBxIQ16s")
RECORD_STRUCT = struct.Struct("<B7xQ")
HEADER_SIZE = HEADER_STRUCT.size
RECORD_SIZE = RECORD_STRUCT.size
VALID_CHANNELS = (1, 2, 3)

# numpy view of one record; "pad" must stay zeroed.
RECORD_DTYPE = np.dtype([("channel", "<u1"), ("pad", "V7"), ("timestamp", "<u8")])

assert HEADER_SIZE == 40 and RECORD_SIZE == 16


class TagFormatError(ValueError):
    """Malformed tag file or invalid record sequence."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (record index {index})"
        super().__init__(message)


class TagRecord(NamedTuple):
    channel: int
    timestamp: int


@dataclass(frozen=True)
class TagFileHeader:
    station_id: int
    record_count: int
    version: int = VERSION
    clock_resolution_ps: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.station_id <= 255:
            raise ValueError(f"station_id out of range: {self.station_id}")
        if self.record_count < 0:
            raise ValueError("record_count must be >= 0")

    def pack(self) -> bytes:
        return HEADER_STRUCT.pack(
            MAGIC,
            self.version,
            self.station_id,
            self.clock_resolution_ps,
            self.record_count,
            b"\x00" * 16,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "TagFileHeader":
        if len(raw) < HEADER_SIZE:
            raise TagFormatError(f"file shorter than the {HEADER_SIZE}-byte header")
        magic, version, station_id, resolution, count, _reserved = HEADER_STRUCT.unpack(
            raw[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise TagFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise TagFormatError(f"unsupported version {version}, expected {VERSION}")
        return cls(
            station_id=station_id,
            record_count=count,
            version=version,
            clock_resolution_ps=resolution,
        )


def _as_record_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Normalize records (iterable of pairs or (channels, timestamps)) to arrays."""
    if isinstance(records, tuple) and len(records) == 2 and np.ndim(records[0]) == 1:
        channels = np.asarray(records[0])
        timestamps = np.asarray(records[1])
    else:
        rows = list(records)
        channels = np.array([r[0] for r in rows], dtype=np.uint8)
        timestamps = np.array([r[1] for r in rows], dtype=np.uint64)
    if channels.shape != timestamps.shape:
        raise ValueError("channels and timestamps must have equal length")
    return channels.astype(np.uint8), timestamps.astype(np.uint64)


def _check_sorted(channels: np.ndarray, timestamps: np.ndarray) -> None:
    if timestamps.size < 2:
        return
    t0, t1 = timestamps[:-1], timestamps[1:]
    bad = (t1 < t0) | ((t1 == t0) & (channels[1:] <= channels[:-1]))
    if np.any(bad):
        i = int(np.argmax(bad)) + 1
        raise TagFormatError("records not sorted by (timestamp, channel)", index=i)


def write_tags(header: TagFileHeader, records, sink: BinaryIO | str | Path) -> int:
    """Write a tag file; returns the byte count (40 + 16*N).

    `records` is either an iterable of (channel, timestamp) pairs or a
    (channels, timestamps) array pair. Records must already satisfy the sort
    invariant and channel range; violations raise TagFormatError.
    """
    channels, timestamps = _as_record_arrays(records)
    if channels.size and not np.all(np.isin(channels, VALID_CHANNELS)):
        i = int(np.argmin(np.isin(channels, VALID_CHANNELS)))
        raise TagFormatError(f"channel {channels[i]} out of range", index=i)
    _check_sorted(channels, timestamps)
    if header.record_count != channels.size:
        header = TagFileHeader(
            station_id=header.station_id,
            record_count=int(channels.size),
            version=header.version,
            clock_resolution_ps=header.clock_resolution_ps,
        )

    packed = np.zeros(channels.size, dtype=RECORD_DTYPE)
    packed["channel"] = channels
    packed["timestamp"] = timestamps

    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            fh.write(header.pack())
            fh.write(packed.tobytes())
    else:
        sink.write(header.pack())
        sink.write(packed.tobytes())
    return HEADER_SIZE + RECORD_SIZE * channels.size


def read_tags(
    source: BinaryIO | bytes | str | Path, chunk_records: int = 4096
) -> tuple[TagFileHeader, Iterator[TagRecord]]:
    """Open a tag file for streaming readout.

    Returns the parsed header and a record iterator that validates channel
    range and the sort invariant as it goes, holding at most `chunk_records`
    records in memory at a time. Errors raise TagFormatError with the index
    of the offending record.
    """
    owns_handle = isinstance(source, (str, Path, bytes))
    if isinstance(source, (str, Path)):
        fh: BinaryIO = open(source, "rb")
    elif isinstance(source, bytes):
        fh = io.BytesIO(source)
    else:
        fh = source
    try:
        header = TagFileHeader.unpack(fh.read(HEADER_SIZE))
    except Exception:
        if owns_handle:
            fh.close()
        raise

    def _records() -> Iterator[TagRecord]:
        index = 0
        prev_t = -1
        prev_ch = 0
        try:
            while True:
                chunk = fh.read(RECORD_SIZE * chunk_records)
                if not chunk:
                    break
                if len(chunk) % RECORD_SIZE:
                    raise TagFormatError(
                        f"truncated record: trailing {len(chunk) % RECORD_SIZE} bytes",
                        index=index + len(chunk) // RECORD_SIZE,
                    )
                for channel, timestamp in RECORD_STRUCT.iter_unpack(chunk):
                    if channel not in VALID_CHANNELS:
                        raise TagFormatError(
                            f"channel {channel} out of range", index=index
                        )
                    if timestamp < prev_t or (timestamp == prev_t and channel <= prev_ch):
                        raise TagFormatError("monotonicity violation", index=index)
                    prev_t, prev_ch = timestamp, channel
                    yield TagRecord(channel, timestamp)
                    index += 1
            if index != header.record_count:
                raise TagFormatError(
                    f"record_count mismatch: header says {header.record_count}, "
                    f"file holds {index}"
                )
        finally:
            if owns_handle:
                fh.close()

    return header, _records()


def read_tag_arrays(source) -> tuple[TagFileHeader, np.ndarray, np.ndarray]:
    """Bulk load of a whole tag file as (header, channels, timestamps_ps).

    Convenience for the analysis pipeline; performs the same validation as
    read_tags but vectorized. Timestamps come back as int64 picoseconds.
    """
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    elif isinstance(source, bytes):
        raw = source
    else:
        raw = source.read()
    header = TagFileHeader.unpack(raw[:HEADER_SIZE])
    body = raw[HEADER_SIZE:]
    if len(body) % RECORD_SIZE:
        raise TagFormatError(
            f"truncated record: trailing {len(body) % RECORD_SIZE} bytes",
            index=len(body) // RECORD_SIZE,
        )
    packed = np.frombuffer(body, dtype=RECORD_DTYPE)
    if packed.size != header.record_count:
        raise TagFormatError(
            f"record_count mismatch: header says {header.record_count}, "
            f"file holds {packed.size}"
        )
    channels = packed["channel"].astype(np.uint8)
    timestamps = packed["timestamp"].astype(np.int64)
    if channels.size and not np.all(np.isin(channels, VALID_CHANNELS)):
        i = int(np.argmin(np.isin(channels, VALID_CHANNELS)))
        raise TagFormatError(f"channel {channels[i]} out of range", index=i)
    _check_sorted(channels, timestamps.astype(np.uint64))
    return header, channels, timestamps
