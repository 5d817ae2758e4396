"""Seeded two-path lossy channel.

Each description travels its own path with an independent loss process; the
two paths draw from isolated sub-streams of one seeded generator, so changing
one path's parameters never perturbs the other's loss pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mdc import DescriptionId, LossMask, Packet


class LossMode(str, Enum):
    IID_PACKET = "iid"
    WHOLE_FRAME = "frame"
    BURST = "burst"


@dataclass(frozen=True)
class ChannelConfig:
    loss_ratio_even: float = 0.0
    loss_ratio_odd: float = 0.0
    mode: LossMode = LossMode.IID_PACKET
    # Gilbert process (burst mode only): good->bad and bad->good transition
    # probabilities; packets in the bad state are lost. Average loss ratio is
    # p_enter / (p_enter + p_exit); the per-path loss_ratio fields are unused.
    p_enter: float = 0.05
    p_exit: float = 0.4
    seed: int = 0

    def __post_init__(self):
        for name in ("loss_ratio_even", "loss_ratio_odd"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.mode is LossMode.BURST:
            for name in ("p_enter", "p_exit"):
                p = getattr(self, name)
                if not 0.0 < p <= 1.0:
                    raise ValueError(f"{name} must be in (0, 1], got {p}")

    def ratio_for(self, desc: DescriptionId) -> float:
        return self.loss_ratio_even if desc is DescriptionId.EVEN else self.loss_ratio_odd


def _path_rng(seed: int, desc: DescriptionId) -> np.random.Generator:
    # Documented sub-stream derivation: (seed, path id) via SeedSequence.
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(int(desc),))
    )


def _drop_decisions(
    keys: list[tuple[int, int, int]], ratio: float, mode: LossMode, cfg: ChannelConfig,
    rng: np.random.Generator,
) -> dict[tuple[int, int, int], bool]:
    """Map each packet key of one path to a lost? decision.

    Keys are processed in (frame, row) order so the decision sequence depends
    only on the stream layout, never on packet arrival order.
    """
    keys = sorted(keys)
    if mode is LossMode.IID_PACKET:
        lost = rng.random(len(keys)) < ratio
        return {k: bool(l) for k, l in zip(keys, lost)}
    if mode is LossMode.WHOLE_FRAME:
        frames = sorted({k[1] for k in keys})
        frame_lost = {f: bool(u < ratio) for f, u in zip(frames, rng.random(len(frames)))}
        return {k: frame_lost[k[1]] for k in keys}
    # Gilbert chain, started in the good state.
    decisions = {}
    bad = False
    for k in keys:
        decisions[k] = bad
        if bad:
            bad = not (rng.random() < cfg.p_exit)
        else:
            bad = rng.random() < cfg.p_enter
    return decisions


def transmit(
    packets: list[Packet], cfg: ChannelConfig
) -> tuple[list[Packet], LossMask]:
    """Push packets through both paths; returns survivors and the full mask."""
    by_path: dict[DescriptionId, list[tuple[int, int, int]]] = {
        DescriptionId.EVEN: [],
        DescriptionId.ODD: [],
    }
    for pkt in packets:
        by_path[pkt.description_id].append(pkt.key)

    lost: dict[tuple[int, int, int], bool] = {}
    for desc, keys in by_path.items():
        if not keys:
            continue
        rng = _path_rng(cfg.seed, desc)
        lost.update(_drop_decisions(keys, cfg.ratio_for(desc), cfg.mode, cfg, rng))

    mask = LossMask()
    delivered = []
    for pkt in packets:
        ok = not lost[pkt.key]
        mask.record(pkt.key, ok)
        if ok:
            delivered.append(pkt)
    return delivered, mask
