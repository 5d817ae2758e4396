"""Even/odd description splitting, merging, and macroblock-row packetization."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .codec import DCT_SIZE, EncodedFrame, FrameKind
from .frames import Frame, VideoSequence


class DescriptionId(IntEnum):
    EVEN = 0
    ODD = 1

    @property
    def other(self) -> "DescriptionId":
        return DescriptionId(1 - self.value)


@dataclass
class Description:
    """One independently decodable temporal sub-stream."""

    id: DescriptionId
    encoded_frames: list[EncodedFrame]
    source_indices: list[int]


@dataclass(frozen=True)
class Packet:
    """Exactly one macroblock row of one encoded frame."""

    description_id: DescriptionId
    frame_index: int  # within the description
    row_index: int
    payload: bytes

    @property
    def key(self) -> tuple[int, int, int]:
        return (int(self.description_id), self.frame_index, self.row_index)


@dataclass
class LossMask:
    """Delivered/lost record per packet, keyed by (description, frame, row)."""

    delivered: dict[tuple[int, int, int], bool] = field(default_factory=dict)

    def record(self, key: tuple[int, int, int], ok: bool) -> None:
        if key in self.delivered:
            raise ValueError(f"duplicate loss record for packet {key}")
        self.delivered[key] = ok

    def is_delivered(self, key: tuple[int, int, int]) -> bool:
        return self.delivered.get(key, False)

    def loss_count(self) -> int:
        return sum(1 for ok in self.delivered.values() if not ok)

    def to_trace(self) -> str:
        """One line per packet: desc, frame, row, 0/1 (1 = delivered)."""
        lines = [
            f"{d} {f} {r} {int(ok)}"
            for (d, f, r), ok in sorted(self.delivered.items())
        ]
        return "\n".join(lines) + "\n" if lines else ""

    @classmethod
    def from_trace(cls, text: str) -> "LossMask":
        mask = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            d, f, r, ok = line.split()
            mask.record((int(d), int(f), int(r)), bool(int(ok)))
        return mask


def split_sequence(seq: VideoSequence) -> tuple[VideoSequence, VideoSequence]:
    """Even original indices (0, 2, ...) left, odd (1, 3, ...) right."""
    if len(seq) == 0:
        raise ValueError("cannot split an empty sequence")
    return VideoSequence(seq.frames[0::2]), VideoSequence(seq.frames[1::2])


def merge_descriptions(
    even_frames: list[Frame | None], odd_frames: list[Frame | None]
) -> tuple[VideoSequence, tuple[bool, ...]]:
    """Interleave two descriptions back into display order.

    ``None`` marks a frame the decoder could not produce. Missing slots are
    filled with the temporally nearest available frame (earlier preferred on
    ties) and flagged True in the returned tuple: a fully lost description
    degrades to the survivor shown at half its original frame rate.
    """
    if len(even_frames) - len(odd_frames) not in (0, 1):
        raise ValueError(
            "even description must hold as many frames as odd, or one more"
        )
    slots: list[Frame | None] = []
    for k in range(len(even_frames) + len(odd_frames)):
        half = even_frames if k % 2 == 0 else odd_frames
        slots.append(half[k // 2])

    present = [i for i, f in enumerate(slots) if f is not None]
    if not present:
        raise ValueError("cannot merge: no frame present in either description")

    present_arr = np.array(present)
    merged: list[Frame] = []
    flagged: list[bool] = []
    for i, f in enumerate(slots):
        if f is not None:
            merged.append(f)
            flagged.append(False)
        else:
            dist = np.abs(present_arr - i)
            # earlier frame wins ties (freeze rather than look ahead)
            nearest = present_arr[np.lexsort((present_arr, dist))[0]]
            merged.append(slots[nearest])
            flagged.append(True)
    return VideoSequence(tuple(merged)), tuple(flagged)


def mb_record_size(kind: FrameKind, mb_size: int) -> int:
    """Payload bytes per macroblock: kind byte, MV (P only), coeff levels."""
    n_coeff = (mb_size // DCT_SIZE) ** 2 * DCT_SIZE * DCT_SIZE
    return 1 + (2 if kind is FrameKind.P else 0) + 2 * n_coeff


def _encode_row(ef: EncodedFrame, row: int) -> bytes:
    out = bytearray()
    is_p = ef.kind is FrameKind.P
    for c in range(ef.mb_cols):
        out.append(1 if is_p else 0)
        if is_p:
            out += struct.pack("<bb", int(ef.mvs[row, c, 0]), int(ef.mvs[row, c, 1]))
        out += ef.levels[row, c].astype("<i2").tobytes()
    return bytes(out)


def _decode_row(ef: EncodedFrame, row: int, payload: bytes) -> None:
    is_p = ef.kind is FrameKind.P
    rec = mb_record_size(ef.kind, ef.mb_size)
    if len(payload) != rec * ef.mb_cols:
        raise ValueError(
            f"row payload is {len(payload)} bytes, expected {rec * ef.mb_cols}"
        )
    n_coeff = ef.subs_per_mb * DCT_SIZE * DCT_SIZE
    off = 0
    for c in range(ef.mb_cols):
        kind_byte = payload[off]
        off += 1
        if kind_byte != (1 if is_p else 0):
            raise ValueError("macroblock kind byte disagrees with frame kind")
        if is_p:
            dx, dy = struct.unpack_from("<bb", payload, off)
            ef.mvs[row, c] = (dx, dy)
            off += 2
        levels = np.frombuffer(payload, dtype="<i2", count=n_coeff, offset=off)
        ef.levels[row, c] = levels.reshape(ef.subs_per_mb, DCT_SIZE, DCT_SIZE)
        off += 2 * n_coeff


def packetize(
    ef: EncodedFrame, desc_id: DescriptionId, frame_index: int
) -> list[Packet]:
    """One packet per macroblock row, ascending row order."""
    return [
        Packet(desc_id, frame_index, row, _encode_row(ef, row))
        for row in range(ef.mb_rows)
    ]


@dataclass(frozen=True)
class FrameLayout:
    """What the stream header promises about one frame's shape."""

    kind: FrameKind
    width: int  # padded
    height: int  # padded
    mb_size: int


def depacketize(
    packets: list[Packet], mask: LossMask, layout: FrameLayout
) -> EncodedFrame:
    """Rebuild an encoded frame from the rows that survived.

    Lost rows come back with availability False and zeroed records; delivered
    rows are bit-exact.
    """
    rows = layout.height // layout.mb_size
    cols = layout.width // layout.mb_size
    n_sub = (layout.mb_size // DCT_SIZE) ** 2
    ef = EncodedFrame(
        kind=layout.kind,
        width=layout.width,
        height=layout.height,
        mb_size=layout.mb_size,
        mvs=np.zeros((rows, cols, 2), dtype=np.int8),
        levels=np.zeros((rows, cols, n_sub, DCT_SIZE, DCT_SIZE), dtype=np.int16),
        available=np.zeros((rows, cols), dtype=bool),
    )
    seen: set[int] = set()
    for pkt in packets:
        if pkt.row_index in seen:
            raise ValueError(f"duplicate packet for row {pkt.row_index}")
        seen.add(pkt.row_index)
        if not (0 <= pkt.row_index < rows):
            raise ValueError(f"packet row {pkt.row_index} outside frame layout")
        if not mask.is_delivered(pkt.key):
            continue
        _decode_row(ef, pkt.row_index, pkt.payload)
        ef.available[pkt.row_index, :] = True
    return ef
