"""Lost-macroblock concealment: spatial, temporal, and the FST hybrid.

The hybrid scores a spatial candidate and a temporal candidate by how
smoothly each sits against the received 1-pixel border of the lost block
(mean absolute difference, the smoothness proxy), then picks the better one
or blends when the scores are within a configurable threshold. Concealed
frames are written back as the damaged description's prediction reference
(state recovery), so later P frames of that stream predict from the repaired
frame instead of a stale one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .codec import (
    CodecConfig,
    EncodedFrame,
    FrameKind,
    decode_available,
    decode_frame,
    round_half_away,
)
from .frames import BlockPos, Frame, VideoSequence
from .mdc import DescriptionId, merge_descriptions

SENTINEL = -1


class NoSupportError(RuntimeError):
    """Raised when a concealment method has no data at all to work from."""


class ConcealmentMode(str, Enum):
    NONE = "none"
    SPATIAL = "spatial"
    TEMPORAL = "temporal"
    FST = "fst"


@dataclass(frozen=True)
class FstConfig:
    # Candidates whose border scores differ by at most this (mean absolute
    # difference per border pixel) are blended instead of picked.
    blend_threshold: float = 2.0
    boundary_width: int = 1

    def __post_init__(self):
        if self.blend_threshold < 0:
            raise ValueError("blend_threshold must be >= 0")
        if self.boundary_width != 1:
            raise ValueError("only 1-pixel boundaries are supported")


class DamagedFrame:
    """A partially decoded frame being repaired macroblock by macroblock.

    ``pixels`` is int16 with SENTINEL in unavailable macroblocks; already
    concealed macroblocks count as available support for the ones after them
    (raster order), which is what makes interior fills possible.
    """

    def __init__(
        self,
        pixels: np.ndarray,
        mb_available: np.ndarray,
        kind: FrameKind,
        description: DescriptionId,
        seq_index: int,
        mb_size: int,
    ):
        self.pixels = pixels
        self.mb_available = mb_available.copy()
        self.kind = kind
        self.description = description
        self.seq_index = seq_index
        self.mb_size = mb_size
        self.pixel_available = np.repeat(
            np.repeat(mb_available, mb_size, axis=0), mb_size, axis=1
        )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def lost_positions(self) -> list[tuple[int, int]]:
        """(row, col) grid coordinates of unavailable macroblocks, raster order."""
        rows, cols = np.nonzero(~self.mb_available)
        return list(zip(rows.tolist(), cols.tolist()))

    def fill(self, pos: BlockPos, block: np.ndarray) -> None:
        y, x, s = pos.y, pos.x, pos.size
        self.pixels[y : y + s, x : x + s] = np.clip(
            round_half_away(block), 0, 255
        ).astype(np.int16)
        self.pixel_available[y : y + s, x : x + s] = True
        self.mb_available[y // s, x // s] = True

    def to_frame(self) -> Frame:
        if (self.pixels < 0).any():
            raise ValueError("damaged frame still holds sentinel pixels")
        return Frame(self.pixels.astype(np.uint8))


@dataclass
class ConcealmentContext:
    """Everything the temporal modes may draw on for one damaged frame.

    ``mv_field``/``mv_available`` carry the motion vectors associated with
    the damaged frame's macroblock grid: its own received vectors under
    partial loss, or the co-located other-description frame's vectors when
    the whole frame is gone (``colocated_mvs`` True). All vectors span two
    display frames, so displacements are rescaled per context-frame gap.
    """

    prev_other: Frame | None = None
    next_other: Frame | None = None
    prev_same: Frame | None = None
    mv_field: np.ndarray | None = None  # (rows, cols, 2)
    mv_available: np.ndarray | None = None  # (rows, cols) bool
    colocated_mvs: bool = False


def boundary_score(
    df: DamagedFrame, pos: BlockPos, candidate: np.ndarray
) -> float | None:
    """Mean absolute difference along the available 1-pixel outer border.

    Returns None when no border pixel is available to score against.
    """
    y, x, s = pos.y, pos.x, pos.size
    px, avail = df.pixels, df.pixel_available
    total = 0.0
    count = 0
    cand = np.asarray(candidate, dtype=np.float64)

    def side(ring_vals, ring_avail, edge_vals):
        nonlocal total, count
        if not ring_avail.any():
            return
        diff = np.abs(edge_vals[ring_avail] - ring_vals[ring_avail])
        total += float(diff.sum())
        count += int(ring_avail.sum())

    if y > 0:
        side(px[y - 1, x : x + s].astype(np.float64), avail[y - 1, x : x + s], cand[0, :])
    if y + s < df.height:
        side(px[y + s, x : x + s].astype(np.float64), avail[y + s, x : x + s], cand[s - 1, :])
    if x > 0:
        side(px[y : y + s, x - 1].astype(np.float64), avail[y : y + s, x - 1], cand[:, 0])
    if x + s < df.width:
        side(px[y : y + s, x + s].astype(np.float64), avail[y : y + s, x + s], cand[:, s - 1])

    return total / count if count else None


def _spatial_interpolate(df: DamagedFrame, pos: BlockPos) -> np.ndarray:
    """Inverse-distance interpolation from the nearest available pixel in
    each axial direction (float result, not yet rounded)."""
    if not df.pixel_available.any():
        raise NoSupportError("no available pixel anywhere in the frame")
    y0, x0, s = pos.y, pos.x, pos.size
    px = df.pixels.astype(np.float64)
    avail = df.pixel_available
    h, w = avail.shape
    cols = slice(x0, x0 + s)
    rows = slice(y0, y0 + s)

    inf = np.inf
    by = np.arange(s)[:, None]  # block row index
    bx = np.arange(s)[None, :]

    # Per block column: nearest available row above / below the block.
    up = avail[:y0, cols][::-1]
    has_up = up.any(axis=0) if y0 > 0 else np.zeros(s, dtype=bool)
    row_up = y0 - 1 - (up.argmax(axis=0) if y0 > 0 else 0)
    down = avail[y0 + s :, cols]
    has_down = down.any(axis=0) if y0 + s < h else np.zeros(s, dtype=bool)
    row_down = y0 + s + (down.argmax(axis=0) if y0 + s < h else 0)

    # Per block row: nearest available column left / right of the block.
    left = avail[rows, :x0][:, ::-1]
    has_left = left.any(axis=1) if x0 > 0 else np.zeros(s, dtype=bool)
    col_left = x0 - 1 - (left.argmax(axis=1) if x0 > 0 else 0)
    right = avail[rows, x0 + s :]
    has_right = right.any(axis=1) if x0 + s < w else np.zeros(s, dtype=bool)
    col_right = x0 + s + (right.argmax(axis=1) if x0 + s < w else 0)

    dist_up = np.where(has_up[None, :], (y0 + by) - row_up[None, :], inf)
    dist_down = np.where(has_down[None, :], row_down[None, :] - (y0 + by), inf)
    dist_left = np.where(has_left[:, None], (x0 + bx) - col_left[:, None], inf)
    dist_right = np.where(has_right[:, None], col_right[:, None] - (x0 + bx), inf)

    val_up = px[np.where(has_up, row_up, 0), x0 + np.arange(s)][None, :]
    val_down = px[np.where(has_down, row_down, 0), x0 + np.arange(s)][None, :]
    val_left = px[y0 + np.arange(s), np.where(has_left, col_left, 0)][:, None]
    val_right = px[y0 + np.arange(s), np.where(has_right, col_right, 0)][:, None]

    w_up, w_down = 1.0 / dist_up, 1.0 / dist_down
    w_left, w_right = 1.0 / dist_left, 1.0 / dist_right
    weight_sum = w_up + w_down + w_left + w_right
    value_sum = (
        w_up * val_up + w_down * val_down + w_left * val_left + w_right * val_right
    )

    out = np.empty((s, s), dtype=np.float64)
    supported = weight_sum > 0
    out[supported] = value_sum[supported] / weight_sum[supported]
    if not supported.all():
        # Isolated pixels with no axial support: fall back to the frame mean.
        out[~supported] = px[avail].mean()
    return out


def conceal_spatial(df: DamagedFrame, pos: BlockPos) -> np.ndarray:
    """Fill a lost block from the surrounding decoded area of the same frame."""
    block = _spatial_interpolate(df, pos)
    return np.clip(round_half_away(block), 0, 255).astype(np.uint8)


def _scale_mv(mv: tuple[int, int], gap: int) -> tuple[int, int]:
    # Stored vectors span 2 display frames; rescale to the context gap.
    if gap == 2:
        return mv
    return (
        int(round_half_away(mv[0] * gap / 2.0)),
        int(round_half_away(mv[1] * gap / 2.0)),
    )


def _candidate_mvs(ctx: ConcealmentContext, r: int, c: int) -> list[tuple[int, int]]:
    cands: list[tuple[int, int]] = [(0, 0)]
    if ctx.mv_field is None or ctx.mv_available is None:
        return cands
    rows, cols = ctx.mv_available.shape
    spots = [(r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)]
    if ctx.colocated_mvs:
        spots.insert(0, (r, c))
    seen = {(0, 0)}
    for nr, nc in spots:
        if 0 <= nr < rows and 0 <= nc < cols and ctx.mv_available[nr, nc]:
            mv = (int(ctx.mv_field[nr, nc, 0]), int(ctx.mv_field[nr, nc, 1]))
            if mv not in seen:
                seen.add(mv)
                cands.append(mv)
    return cands


def _fetch(frame: Frame, x: int, y: int, s: int) -> np.ndarray | None:
    if x < 0 or y < 0 or x + s > frame.width or y + s > frame.height:
        return None
    return frame.pixels[y : y + s, x : x + s].astype(np.float64)


def _best_temporal(
    df: DamagedFrame, ctx: ConcealmentContext, pos: BlockPos
) -> tuple[np.ndarray, float | None]:
    """Best motion-compensated candidate from the temporally adjacent frames.

    Candidates are the zero vector plus the available neighbor vectors, each
    fetched from the previous and/or next other-description frame (averaged
    pixel-wise when both exist); the one whose border matches best wins.
    Falls back to the same description's previous frame when the other
    description offers nothing at these indices.
    """
    prev, nxt = ctx.prev_other, ctx.next_other
    fallback = prev is None and nxt is None
    if fallback:
        if ctx.prev_same is None:
            raise NoSupportError("no temporally adjacent frame available")
        prev = ctx.prev_same

    r, c = pos.y // pos.size, pos.x // pos.size
    gap_prev = 2 if fallback else 1

    best: tuple[float, int, int, int, int] | None = None
    best_block: np.ndarray | None = None
    for mv in _candidate_mvs(ctx, r, c):
        taxi = abs(mv[0]) + abs(mv[1])
        blocks: list[tuple[int, np.ndarray]] = []  # (source priority, block)
        pb = nb = None
        if prev is not None:
            sdx, sdy = _scale_mv(mv, gap_prev)
            pb = _fetch(prev, pos.x + sdx, pos.y + sdy, pos.size)
        if nxt is not None:
            sdx, sdy = _scale_mv(mv, 1)
            nb = _fetch(nxt, pos.x - sdx, pos.y - sdy, pos.size)
        if pb is not None and nb is not None:
            blocks.append((0, (pb + nb) / 2.0))  # average preferred on ties
        if pb is not None:
            blocks.append((1, pb))
        if nb is not None:
            blocks.append((2, nb))
        for source, block in blocks:
            score = boundary_score(df, pos, block)
            key = (
                score if score is not None else np.inf,
                source,
                taxi,
                mv[1],
                mv[0],
            )
            if best is None or key < best:
                best = key
                best_block = block

    if best_block is None:
        raise NoSupportError("no in-bounds temporal candidate")
    score = best[0]
    return best_block, (None if np.isinf(score) else float(score))


def conceal_temporal(
    df: DamagedFrame, ctx: ConcealmentContext, pos: BlockPos
) -> np.ndarray:
    """Fill a lost block from temporally adjacent frames (see _best_temporal)."""
    block, _ = _best_temporal(df, ctx, pos)
    return np.clip(round_half_away(block), 0, 255).astype(np.uint8)


def _fst_decide(
    df: DamagedFrame,
    ctx: ConcealmentContext,
    pos: BlockPos,
    cfg: FstConfig,
) -> tuple[np.ndarray, str, float | None, float | None, float | None]:
    """Returns (block, method, Ds, Dt, chosen candidate's border score)."""
    try:
        spatial = _spatial_interpolate(df, pos)
        ds = boundary_score(df, pos, spatial)
    except NoSupportError:
        spatial, ds = None, None
    try:
        temporal, dt = _best_temporal(df, ctx, pos)
    except NoSupportError:
        temporal, dt = None, None

    if spatial is None and temporal is None:
        raise NoSupportError("neither spatial nor temporal support exists")
    if temporal is None:
        return spatial, "spatial", ds, None, ds
    if spatial is None:
        return temporal, "temporal", None, dt, dt

    ds_cmp = ds if ds is not None else np.inf
    dt_cmp = dt if dt is not None else np.inf
    if abs(ds_cmp - dt_cmp) <= cfg.blend_threshold or (
        np.isinf(ds_cmp) and np.isinf(dt_cmp)
    ):
        blend = (spatial + temporal) / 2.0
        return blend, "blend", ds, dt, boundary_score(df, pos, blend)
    if ds_cmp <= dt_cmp:
        return spatial, "spatial", ds, dt, ds
    return temporal, "temporal", ds, dt, dt


def conceal_fst(
    df: DamagedFrame,
    ctx: ConcealmentContext,
    pos: BlockPos,
    cfg: FstConfig | None = None,
) -> np.ndarray:
    """Hybrid concealment: pick or blend the spatial and temporal candidates."""
    block, _, _, _, _ = _fst_decide(df, ctx, pos, cfg or FstConfig())
    return np.clip(round_half_away(block), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# Full-stream decoding with concealment and state recovery
# --------------------------------------------------------------------------


@dataclass
class ReceivedStream:
    """One description as it came off the channel, ready to decode."""

    description: DescriptionId
    config: CodecConfig
    width: int  # original, pre-padding
    height: int
    frames: list[EncodedFrame]

    @property
    def padded_width(self) -> int:
        return self.frames[0].width if self.frames else self.width

    @property
    def padded_height(self) -> int:
        return self.frames[0].height if self.frames else self.height


@dataclass
class MbRecord:
    frame_index: int  # display order
    mb_x: int
    mb_y: int
    method: str  # spatial | temporal | blend | freeze
    ds: float | None
    dt: float | None
    chosen_score: float | None


@dataclass
class ConcealmentReport:
    mode: ConcealmentMode
    state_recovery: bool
    records: list[MbRecord] = field(default_factory=list)
    whole_frame_losses: list[int] = field(default_factory=list)  # display idx
    bootstrap_frames: list[int] = field(default_factory=list)
    missing_frames: list[int] = field(default_factory=list)
    duplicated: tuple[bool, ...] = ()

    def add(self, rec: MbRecord) -> None:
        self.records.append(rec)

    def concealed_frames(self) -> set[int]:
        return {r.frame_index for r in self.records}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "mb_x", "mb_y", "method", "Ds", "Dt"])
            for r in self.records:
                writer.writerow(
                    [
                        r.frame_index,
                        r.mb_x,
                        r.mb_y,
                        r.method,
                        "" if r.ds is None else f"{r.ds:.4f}",
                        "" if r.dt is None else f"{r.dt:.4f}",
                    ]
                )


@dataclass
class DecodeResult:
    sequence: VideoSequence
    duplicated: tuple[bool, ...]
    report: ConcealmentReport


def _freeze_fill(
    pixels: np.ndarray, avail: np.ndarray, prev_same: Frame | None, mb: int
) -> np.ndarray:
    """Mode-None fill: lost macroblocks copy co-located previous-frame pixels,
    or mid-gray when there is no history yet."""
    out = pixels.copy()
    mask = np.repeat(np.repeat(~avail, mb, axis=0), mb, axis=1)
    if prev_same is not None:
        out[mask] = prev_same.pixels.astype(np.int16)[mask]
    else:
        out[mask] = 128
    return out


def _build_context(
    streams: dict[DescriptionId, ReceivedStream],
    outputs: list[Frame | None],
    lookahead_fn,
    refs: dict[DescriptionId, Frame | None],
    t: int,
    desc: DescriptionId,
    ef: EncodedFrame,
    whole_lost: bool,
) -> ConcealmentContext:
    total = len(outputs)
    prev_other = outputs[t - 1] if t >= 1 else None
    next_other = lookahead_fn(t + 1) if t + 1 < total else None

    mv_field = mv_avail = None
    colocated = False
    if not whole_lost and ef.kind is FrameKind.P:
        mv_field, mv_avail = ef.mvs, ef.available
    elif whole_lost:
        # Borrow the motion field of the temporally adjacent other-description
        # frame; its co-located vector is itself a candidate.
        for neighbor_t in (t - 1, t + 1):
            if not 0 <= neighbor_t < total:
                continue
            other = streams[DescriptionId.EVEN if neighbor_t % 2 == 0 else DescriptionId.ODD]
            nef = other.frames[neighbor_t // 2]
            if nef.kind is FrameKind.P and nef.available.any():
                mv_field, mv_avail, colocated = nef.mvs, nef.available, True
                break

    return ConcealmentContext(
        prev_other=prev_other,
        next_other=next_other,
        prev_same=refs[desc],
        mv_field=mv_field,
        mv_available=mv_avail,
        colocated_mvs=colocated,
    )


def _conceal_damaged(
    df: DamagedFrame,
    ctx: ConcealmentContext,
    mode: ConcealmentMode,
    fst_cfg: FstConfig,
    whole_lost: bool,
    report: ConcealmentReport,
    t: int,
) -> None:
    """Conceal every lost macroblock of ``df`` in raster order, per mode."""
    mb = df.mb_size
    for r, c in df.lost_positions():
        pos = BlockPos(c * mb, r * mb, mb)
        block = None
        method, ds, dt, chosen = "freeze", None, None, None
        if mode is ConcealmentMode.SPATIAL:
            try:
                block = _spatial_interpolate(df, pos)
                method = "spatial"
                ds = boundary_score(df, pos, block)
                chosen = ds
            except NoSupportError:
                block = None
        elif mode is ConcealmentMode.TEMPORAL or (
            mode is ConcealmentMode.FST and whole_lost
        ):
            # Whole-frame loss has no spatial support worth the name; the
            # hybrid degenerates to its temporal half.
            try:
                block, dt = _best_temporal(df, ctx, pos)
                method = "temporal"
                chosen = dt
            except NoSupportError:
                block = None
        elif mode is ConcealmentMode.FST:
            try:
                block, method, ds, dt, chosen = _fst_decide(df, ctx, pos, fst_cfg)
            except NoSupportError:
                block = None

        if block is None:
            # Last resort: freeze from same-stream history, else mid-gray.
            if ctx.prev_same is not None:
                block = ctx.prev_same.pixels[
                    pos.y : pos.y + mb, pos.x : pos.x + mb
                ].astype(np.float64)
            else:
                block = np.full((mb, mb), 128.0)
            method, ds, dt, chosen = "freeze", None, None, None

        df.fill(pos, block)
        report.add(MbRecord(t, c, r, method, ds, dt, chosen))


def decode_with_concealment(
    even: ReceivedStream,
    odd: ReceivedStream,
    mode: ConcealmentMode = ConcealmentMode.FST,
    fst_cfg: FstConfig | None = None,
    state_recovery: bool = True,
) -> DecodeResult:
    """Decode both descriptions in display order, concealing losses per mode.

    A one-frame lookahead decode of the other description provides the
    future context frame. With ``state_recovery`` (the default), a concealed
    frame re-seeds its description's prediction loop; disabling it makes the
    loop fall back to a frozen reference so the benefit can be measured.
    """
    fst_cfg = fst_cfg or FstConfig()
    if (even.width, even.height) != (odd.width, odd.height):
        raise ValueError("descriptions disagree on frame dimensions")
    if len(even.frames) - len(odd.frames) not in (0, 1):
        raise ValueError("even description must hold equal frames or one more")

    streams = {DescriptionId.EVEN: even, DescriptionId.ODD: odd}
    total = len(even.frames) + len(odd.frames)
    if total == 0:
        raise ValueError("nothing to decode")

    refs: dict[DescriptionId, Frame | None] = {
        DescriptionId.EVEN: None,
        DescriptionId.ODD: None,
    }
    outputs: list[Frame | None] = [None] * total
    report = ConcealmentReport(mode=mode, state_recovery=state_recovery)
    lossless_cache: dict[int, Frame | None] = {}

    def desc_of(t: int) -> DescriptionId:
        return DescriptionId.EVEN if t % 2 == 0 else DescriptionId.ODD

    def try_lossless(t: int) -> Frame | None:
        """Decode display slot t iff fully received and decodable right now."""
        if t in lossless_cache:
            return lossless_cache[t]
        d = desc_of(t)
        stream = streams[d]
        ef = stream.frames[t // 2]
        result = None
        if ef.all_available():
            if ef.kind is FrameKind.I:
                result = decode_frame(ef, None, stream.config)
            elif refs[d] is not None:
                result = decode_frame(ef, refs[d], stream.config)
        lossless_cache[t] = result
        return result

    for t in range(total):
        d = desc_of(t)
        stream = streams[d]
        ef = stream.frames[t // 2]
        cfg = stream.config

        clean = try_lossless(t)
        if clean is not None:
            outputs[t] = clean
            refs[d] = clean
            continue

        pixels, avail = decode_available(ef, refs[d], cfg)
        whole_lost = not avail.any()
        if whole_lost:
            report.whole_frame_losses.append(t)

        if mode is ConcealmentMode.NONE:
            if whole_lost and refs[d] is None:
                # Nothing to freeze from: leave the slot missing; the merge
                # step replays the nearest surviving frame (half rate).
                report.missing_frames.append(t)
                continue
            filled = _freeze_fill(pixels, avail, refs[d], cfg.mb_size)
            frame = Frame(filled.astype(np.uint8))
            rows, cols = np.nonzero(~avail)
            for r, c in zip(rows.tolist(), cols.tolist()):
                report.add(MbRecord(t, c, r, "freeze", None, None, None))
            outputs[t] = frame
            refs[d] = frame
            continue

        df = DamagedFrame(pixels, avail, ef.kind, d, t, cfg.mb_size)
        ctx = _build_context(
            streams, outputs, try_lossless, refs, t, d, ef, whole_lost
        )
        if whole_lost and ctx.prev_other is None and ctx.next_other is None and (
            ctx.prev_same is None
        ):
            report.bootstrap_frames.append(t)
        _conceal_damaged(df, ctx, mode, fst_cfg, whole_lost, report, t)
        frame = df.to_frame()
        outputs[t] = frame
        if state_recovery:
            refs[d] = frame
        else:
            refs[d] = Frame(
                _freeze_fill(pixels, avail, ctx.prev_same, cfg.mb_size).astype(
                    np.uint8
                )
            )

    if all(f is None for f in outputs):
        # Nothing decodable at all: emit flagged mid-gray frames.
        gray = Frame(np.full((even.height, even.width), 128, dtype=np.uint8))
        report.bootstrap_frames = list(range(total))
        report.duplicated = tuple(True for _ in range(total))
        return DecodeResult(
            sequence=VideoSequence(tuple(gray for _ in range(total))),
            duplicated=report.duplicated,
            report=report,
        )

    even_out = [
        outputs[t].crop(even.width, even.height) if outputs[t] is not None else None
        for t in range(0, total, 2)
    ]
    odd_out = [
        outputs[t].crop(odd.width, odd.height) if outputs[t] is not None else None
        for t in range(1, total, 2)
    ]
    sequence, duplicated = merge_descriptions(even_out, odd_out)
    report.duplicated = duplicated
    return DecodeResult(sequence=sequence, duplicated=duplicated, report=report)
