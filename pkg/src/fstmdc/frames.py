"""Core pixel-domain types: luma frames, sequences, and block addressing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Frame:
    """One 8-bit luma plane. The pixel array is made read-only on construction."""

    pixels: np.ndarray  # shape (height, width), dtype uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"frame pixels must be 2-D, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("frame samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        if px.size == 0:
            raise ValueError("frame must have at least one pixel")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def crop(self, width: int, height: int) -> "Frame":
        """Top-left crop, used to strip padding."""
        if width > self.width or height > self.height:
            raise ValueError("crop region exceeds frame bounds")
        if (width, height) == (self.width, self.height):
            return self
        return Frame(self.pixels[:height, :width].copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class VideoSequence:
    """Ordered frames of uniform dimensions.

    May be empty as an intermediate value (e.g. the odd half of a one-frame
    split); operations that need content raise on empty input.
    """

    frames: tuple[Frame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        frames = tuple(self.frames)
        for f in frames[1:]:
            if (f.width, f.height) != (frames[0].width, frames[0].height):
                raise ValueError("all frames in a sequence must share dimensions")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i) -> Frame:
        return self.frames[i]

    @property
    def width(self) -> int:
        if not self.frames:
            raise ValueError("empty sequence has no dimensions")
        return self.frames[0].width

    @property
    def height(self) -> int:
        if not self.frames:
            raise ValueError("empty sequence has no dimensions")
        return self.frames[0].height


@dataclass(frozen=True)
class BlockPos:
    """Square block position: top-left corner (x, y) and side length."""

    x: int
    y: int
    size: int

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("block size must be positive")
        if self.x < 0 or self.y < 0:
            raise ValueError("block position must be non-negative")


def pad_frame(frame: Frame, mb: int) -> Frame:
    """Pad a frame to the next multiple of ``mb`` in each dimension.

    New pixels replicate the nearest edge pixel so padding adds no artificial
    high-frequency content. Returns the frame unchanged if already aligned.
    """
    if mb <= 0:
        raise ValueError("macroblock size must be positive")
    pad_h = (-frame.height) % mb
    pad_w = (-frame.width) % mb
    if pad_h == 0 and pad_w == 0:
        return frame
    padded = np.pad(frame.pixels, ((0, pad_h), (0, pad_w)), mode="edge")
    return Frame(padded)


def extract_block(frame: Frame, pos: BlockPos) -> np.ndarray:
    """Copy a size x size block out of a frame, row-major."""
    if pos.x + pos.size > frame.width or pos.y + pos.size > frame.height:
        raise ValueError(
            f"block {pos} out of bounds for {frame.width}x{frame.height} frame"
        )
    return frame.pixels[pos.y : pos.y + pos.size, pos.x : pos.x + pos.size].copy()


def insert_block(frame: Frame, pos: BlockPos, block: np.ndarray) -> Frame:
    """Return a new frame with ``block`` written at ``pos``."""
    block = np.asarray(block)
    if block.shape != (pos.size, pos.size):
        raise ValueError(
            f"block shape {block.shape} does not match position size {pos.size}"
        )
    if pos.x + pos.size > frame.width or pos.y + pos.size > frame.height:
        raise ValueError(
            f"block {pos} out of bounds for {frame.width}x{frame.height} frame"
        )
    pixels = frame.pixels.copy()
    pixels[pos.y : pos.y + pos.size, pos.x : pos.x + pos.size] = block
    return Frame(pixels)
