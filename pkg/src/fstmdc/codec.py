"""Minimal block-based predictive codec.

Each description runs its own closed prediction loop: intra (I) frames and
motion-compensated (P) frames, 8x8 orthonormal DCT, uniform mid-tread
quantization, no entropy coding. The encoder predicts from *decoded* frames
so encoder and decoder state match bit-exactly on a lossless channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .frames import BlockPos, Frame

DCT_SIZE = 8


def _dct_matrix(n: int = DCT_SIZE) -> np.ndarray:
    # Orthonormal DCT-II basis: rows are cosine basis vectors.
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] /= np.sqrt(2.0)
    return mat


_DCT = _dct_matrix()


class FrameKind(str, Enum):
    I = "I"
    P = "P"


@dataclass(frozen=True)
class CodecConfig:
    mb_size: int = 16
    quant_step: int = 8
    gop_length: int = 15
    search_range: int = 8

    def __post_init__(self):
        if self.mb_size <= 0 or self.mb_size % DCT_SIZE != 0:
            raise ValueError(f"mb_size must be a positive multiple of {DCT_SIZE}")
        if self.quant_step < 1:
            raise ValueError("quant_step must be >= 1")
        if self.gop_length < 1:
            raise ValueError("gop_length must be >= 1")
        if not 0 <= self.search_range <= 127:
            raise ValueError("search_range must be in [0, 127]")


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int

    @property
    def taxi(self) -> int:
        return abs(self.dx) + abs(self.dy)


@dataclass
class EncodedFrame:
    """Per-macroblock coded records for one frame of one description.

    ``levels`` holds quantized coefficients, shape
    (mb_rows, mb_cols, n_sub, 8, 8) with sub-blocks in raster order inside
    each macroblock. ``mvs`` is zero for I frames. ``available`` is all-true
    from the encoder; depacketize clears rows lost in transit.
    """

    kind: FrameKind
    width: int  # padded
    height: int  # padded
    mb_size: int
    mvs: np.ndarray  # (mb_rows, mb_cols, 2) int8, [dx, dy]
    levels: np.ndarray  # (mb_rows, mb_cols, n_sub, 8, 8) int16
    available: np.ndarray = field(default=None)  # (mb_rows, mb_cols) bool

    def __post_init__(self):
        if self.width % self.mb_size or self.height % self.mb_size:
            raise ValueError("encoded frame dimensions must be mb_size multiples")
        if self.available is None:
            self.available = np.ones((self.mb_rows, self.mb_cols), dtype=bool)
        expect = (self.mb_rows, self.mb_cols, self.subs_per_mb, DCT_SIZE, DCT_SIZE)
        if self.levels.shape != expect:
            raise ValueError(f"levels shape {self.levels.shape} != {expect}")

    @property
    def mb_rows(self) -> int:
        return self.height // self.mb_size

    @property
    def mb_cols(self) -> int:
        return self.width // self.mb_size

    @property
    def subs_per_mb(self) -> int:
        return (self.mb_size // DCT_SIZE) ** 2

    def all_available(self) -> bool:
        return bool(self.available.all())

    def none_available(self) -> bool:
        return not self.available.any()


def dct2(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II over the last two axes (batched)."""
    block = np.asarray(block, dtype=np.float64)
    return np.einsum("ij,...jk,lk->...il", _DCT, block, _DCT)


def idct2(coeff: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2` (float output; no rounding or clamping)."""
    coeff = np.asarray(coeff, dtype=np.float64)
    return np.einsum("ji,...jk,kl->...il", _DCT, coeff, _DCT)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with halves away from zero (platform-stable)."""
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(coeff, step: int):
    """Uniform mid-tread quantizer: level = round(coeff / step)."""
    if step < 1:
        raise ValueError("quantizer step must be >= 1")
    return round_half_away(np.asarray(coeff, dtype=np.float64) / step).astype(np.int64)


def dequantize(level, step: int):
    """Reconstruction: level * step."""
    if step < 1:
        raise ValueError("quantizer step must be >= 1")
    return np.asarray(level, dtype=np.float64) * step


def motion_estimate(
    current_block: np.ndarray,
    reference: Frame,
    center: BlockPos,
    search_range: int,
) -> tuple[MotionVector, int]:
    """Exhaustive full-search block matching.

    Scans every displacement in [-range, range]^2 whose displaced block lies
    inside the reference, and returns the minimum-SAD vector. Ties prefer
    smaller |dx|+|dy|, then raster order (dy, then dx).
    """
    size = center.size
    cur = np.asarray(current_block, dtype=np.int16)
    if cur.shape != (size, size):
        raise ValueError("current block does not match position size")
    ref = reference.pixels
    h, w = ref.shape

    dy_lo = max(-search_range, -center.y)
    dy_hi = min(search_range, h - size - center.y)
    dx_lo = max(-search_range, -center.x)
    dx_hi = min(search_range, w - size - center.x)
    if dy_lo > dy_hi or dx_lo > dx_hi:
        raise ValueError("no candidate displacement lies inside the reference")

    window = ref[
        center.y + dy_lo : center.y + dy_hi + size,
        center.x + dx_lo : center.x + dx_hi + size,
    ]
    views = np.lib.stride_tricks.sliding_window_view(window, (size, size))
    sads = (
        np.abs(views.astype(np.int16) - cur)
        .sum(axis=(2, 3), dtype=np.int64)
        .ravel()
    )
    dys, dxs = np.meshgrid(
        np.arange(dy_lo, dy_hi + 1), np.arange(dx_lo, dx_hi + 1), indexing="ij"
    )
    dys = dys.ravel()
    dxs = dxs.ravel()
    taxi = np.abs(dxs) + np.abs(dys)
    # lexsort: last key is primary
    best = np.lexsort((dxs, dys, taxi, sads))[0]
    return MotionVector(int(dxs[best]), int(dys[best])), int(sads[best])


def _frame_to_subblocks(plane: np.ndarray, mb: int) -> np.ndarray:
    """(H, W) -> (mb_rows, mb_cols, n_sub, 8, 8) with raster sub-block order."""
    h, w = plane.shape
    rows, cols = h // mb, w // mb
    per = mb // DCT_SIZE
    blocks = (
        plane.reshape(rows, per, DCT_SIZE, cols, per, DCT_SIZE)
        .transpose(0, 3, 1, 4, 2, 5)
        .reshape(rows, cols, per * per, DCT_SIZE, DCT_SIZE)
    )
    return blocks


def _subblocks_to_frame(blocks: np.ndarray, mb: int) -> np.ndarray:
    rows, cols, n_sub = blocks.shape[:3]
    per = mb // DCT_SIZE
    plane = (
        blocks.reshape(rows, cols, per, per, DCT_SIZE, DCT_SIZE)
        .transpose(0, 2, 4, 1, 3, 5)
        .reshape(rows * mb, cols * mb)
    )
    return plane


def _predict_frame(
    mvs: np.ndarray, reference: Frame, mb: int
) -> np.ndarray:
    """Assemble the motion-compensated prediction plane (int16)."""
    ref = reference.pixels
    pred = ref.astype(np.int16, copy=True)  # zero-MV default
    rows, cols = mvs.shape[:2]
    for r in range(rows):
        for c in range(cols):
            dx, dy = int(mvs[r, c, 0]), int(mvs[r, c, 1])
            if dx == 0 and dy == 0:
                continue
            y, x = r * mb + dy, c * mb + dx
            pred[r * mb : r * mb + mb, c * mb : c * mb + mb] = ref[
                y : y + mb, x : x + mb
            ]
    return pred


def _transform_quantize(residual: np.ndarray, mb: int, step: int) -> np.ndarray:
    blocks = _frame_to_subblocks(residual.astype(np.float64), mb)
    coeff = dct2(blocks)
    return quantize(coeff, step).astype(np.int16)


def _reconstruct_residual(levels: np.ndarray, mb: int, step: int) -> np.ndarray:
    """Dequantize + inverse transform, skipping all-zero blocks."""
    rows, cols, n_sub = levels.shape[:3]
    flat = levels.reshape(-1, DCT_SIZE, DCT_SIZE)
    out = np.zeros(flat.shape, dtype=np.float64)
    nz = flat.any(axis=(1, 2))
    if nz.any():
        out[nz] = idct2(dequantize(flat[nz], step))
    return _subblocks_to_frame(
        out.reshape(rows, cols, n_sub, DCT_SIZE, DCT_SIZE), mb
    )


def encode_frame(
    frame: Frame, reference: Frame | None, cfg: CodecConfig
) -> EncodedFrame:
    """Encode one padded frame as I (no reference) or P (against reference)."""
    mb = cfg.mb_size
    if frame.width % mb or frame.height % mb:
        raise ValueError("frame must be padded to a macroblock multiple")
    if reference is not None and (
        reference.width != frame.width or reference.height != frame.height
    ):
        raise ValueError("reference dimensions do not match frame")

    rows, cols = frame.height // mb, frame.width // mb
    mvs = np.zeros((rows, cols, 2), dtype=np.int8)

    if reference is None:
        centered = frame.pixels.astype(np.int16) - 128
        levels = _transform_quantize(centered, mb, cfg.quant_step)
        kind = FrameKind.I
    else:
        for r in range(rows):
            for c in range(cols):
                pos = BlockPos(c * mb, r * mb, mb)
                block = frame.pixels[pos.y : pos.y + mb, pos.x : pos.x + mb]
                mv, _ = motion_estimate(block, reference, pos, cfg.search_range)
                mvs[r, c] = (mv.dx, mv.dy)
        pred = _predict_frame(mvs, reference, mb)
        residual = frame.pixels.astype(np.int16) - pred
        levels = _transform_quantize(residual, mb, cfg.quant_step)
        kind = FrameKind.P

    return EncodedFrame(
        kind=kind,
        width=frame.width,
        height=frame.height,
        mb_size=mb,
        mvs=mvs,
        levels=levels,
    )


def decode_frame(
    encoded: EncodedFrame, reference: Frame | None, cfg: CodecConfig
) -> Frame:
    """Exact inverse of the closed-loop encoder for a fully available frame."""
    if not encoded.all_available():
        raise ValueError("encoded frame has unavailable macroblocks; conceal first")
    if encoded.kind is FrameKind.P and reference is None:
        raise ValueError("P frame requires a reference")
    mb = encoded.mb_size
    residual = _reconstruct_residual(encoded.levels, mb, cfg.quant_step)
    if encoded.kind is FrameKind.I:
        base = np.full(residual.shape, 128.0)
    else:
        base = _predict_frame(encoded.mvs, reference, mb).astype(np.float64)
    recon = np.clip(round_half_away(base + residual), 0, 255).astype(np.uint8)
    return Frame(recon)


def decode_available(
    encoded: EncodedFrame, reference: Frame | None, cfg: CodecConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Decode the available macroblocks of a damaged frame.

    Returns (pixels, mb_available): ``pixels`` is int16 with -1 in every
    unavailable macroblock; P-frame macroblocks count as unavailable when the
    reference is missing, whatever the mask says.
    """
    mb = encoded.mb_size
    avail = encoded.available.copy()
    if encoded.kind is FrameKind.P and reference is None:
        avail[:] = False
    pixels = np.full((encoded.height, encoded.width), -1, dtype=np.int16)
    if not avail.any():
        return pixels, avail

    residual = _reconstruct_residual(encoded.levels, mb, cfg.quant_step)
    if encoded.kind is FrameKind.I:
        base = np.full(residual.shape, 128.0)
    else:
        base = _predict_frame(encoded.mvs, reference, mb).astype(np.float64)
    recon = np.clip(round_half_away(base + residual), 0, 255).astype(np.int16)
    mask = np.repeat(np.repeat(avail, mb, axis=0), mb, axis=1)
    pixels[mask] = recon[mask]
    return pixels, avail


def encode_description(
    frames: list[Frame], cfg: CodecConfig
) -> tuple[list[EncodedFrame], list[Frame]]:
    """Run one description's prediction loop over already-padded frames.

    Returns the encoded frames and the closed-loop reconstructions (which a
    lossless decode reproduces bit-exactly). An I frame opens every GOP.
    """
    encoded: list[EncodedFrame] = []
    recon: list[Frame] = []
    reference: Frame | None = None
    for i, frame in enumerate(frames):
        if i % cfg.gop_length == 0:
            reference = None
        ef = encode_frame(frame, reference, cfg)
        rec = decode_frame(ef, reference, cfg)
        encoded.append(ef)
        recon.append(rec)
        reference = rec
    return encoded, recon
