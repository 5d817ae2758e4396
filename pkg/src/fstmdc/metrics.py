"""MSE/PSNR scoring of reconstructed sequences."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .frames import Frame, VideoSequence

PSNR_CAP_DB = 99.0
PEAK = 255.0


def mse(a: Frame, b: Frame) -> float:
    """Mean squared sample difference. Dimensions must match exactly."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(a: Frame, b: Frame) -> float:
    """10*log10(255^2 / MSE) in dB, capped at 99.0 when the frames match."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(PEAK * PEAK / err)))


@dataclass
class QualityReport:
    """Per-frame and aggregate quality of one decoded sequence.

    Aggregation is the arithmetic mean of per-frame PSNR (capped frames
    included at the cap), not the PSNR of the mean MSE.
    """

    frame_mse: list[float]
    frame_psnr: list[float]
    mean_psnr: float
    mode: str = ""
    loss_ratio: float = 0.0
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def csv_rows(self) -> list[list]:
        rows = [
            [self.seed, self.mode, self.loss_ratio, i, f"{m:.6f}", f"{p:.4f}"]
            for i, (m, p) in enumerate(zip(self.frame_mse, self.frame_psnr))
        ]
        rows.append(
            [
                self.seed,
                self.mode,
                self.loss_ratio,
                -1,
                f"{float(np.mean(self.frame_mse)):.6f}",
                f"{self.mean_psnr:.4f}",
            ]
        )
        return rows


def sequence_psnr(ref: VideoSequence, test: VideoSequence) -> QualityReport:
    """Score ``test`` against ``ref`` frame by frame.

    ``test`` frames may carry bottom/right padding; scoring is restricted to
    the reference (original) region.
    """
    if len(ref) == 0 or len(test) == 0:
        raise ValueError("cannot score empty sequences")
    if len(ref) != len(test):
        raise ValueError(f"length mismatch: {len(ref)} vs {len(test)}")
    mses = []
    psnrs = []
    for r, t in zip(ref, test):
        if t.width > r.width or t.height > r.height:
            t = t.crop(r.width, r.height)
        mses.append(mse(r, t))
        psnrs.append(psnr(r, t))
    return QualityReport(
        frame_mse=mses,
        frame_psnr=psnrs,
        mean_psnr=float(np.mean(psnrs)),
    )


RESULT_CSV_HEADER = ["seed", "mode", "loss_ratio", "frame_index", "mse", "psnr_db"]


def write_results_csv(path, reports: list[QualityReport]) -> None:
    """Long-format results: per-frame rows plus one summary row per report
    (frame_index -1 marks the sequence mean)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_CSV_HEADER)
        for rep in reports:
            writer.writerows(rep.csv_rows())
