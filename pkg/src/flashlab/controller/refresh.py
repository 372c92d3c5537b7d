"""Data refresh engines.

Fixed-cadence refresh (FCR) rewrites every block whose data age exceeds a
set period. Adaptive refresh picks, per block, the longest period from a
tier ladder that the block's wear still supports: a block may skip
refresh entirely until its P/E count exceeds what the endurance curve
allows at native retention, then steps down through the tiers as it
wears. Hot-pool blocks are exempt by default — their data turns over
faster than any refresh period.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import SECONDS_PER_DAY, THREE_YEARS_S
from .warm import COLD
from .ftl import CLOSED

ADAPTIVE_TIERS_S = (90 * SECONDS_PER_DAY, 21 * SECONDS_PER_DAY, 3 * SECONDS_PER_DAY)


@dataclass(frozen=True)
class RefreshConfig:
    mode: str = "none"            # "none" | "fcr" | "adaptive"
    period_s: float = 3 * SECONDS_PER_DAY
    native_retention_s: float = THREE_YEARS_S
    include_hot: bool = False

    def __post_init__(self):
        if self.mode not in ("none", "fcr", "adaptive"):
            raise ValueError(f"unknown refresh mode {self.mode!r}")


def in_refresh_phase(pec, endurance_map, native_retention_s=THREE_YEARS_S):
    """True once wear exceeds what native retention can absorb.

    Below this point the cell holds data for the full native retention
    without help and refresh only burns cycles.
    """
    return pec >= endurance_map.endurance_at(native_retention_s)


def adaptive_period(pec, endurance_map, tiers_s=ADAPTIVE_TIERS_S):
    """Longest refresh period (seconds) this wear level supports.

    Returns None when no refresh is needed (native retention suffices)
    and the shortest tier when even the second-shortest cannot hold.
    """
    for period in sorted(tiers_s, reverse=True):
        if pec < endurance_map.endurance_at(period):
            return period
    return min(tiers_s)


def run_refresh(drive, now, cfg, endurance_map=None):
    """One refresh pass over the drive; returns blocks refreshed."""
    if cfg.mode == "none":
        return 0
    drive.now = now
    mask = (drive.state == CLOSED) & (drive.valid_count > 0)
    if not cfg.include_hot:
        mask &= drive.pool == COLD
    refreshed = 0
    for blk in np.flatnonzero(mask):
        if drive.state[blk] != CLOSED:  # reclaimed earlier in this pass
            continue
        pec = float(drive.pec[blk])
        if endurance_map is not None and not in_refresh_phase(
                pec, endurance_map, cfg.native_retention_s):
            continue
        if cfg.mode == "fcr":
            period = cfg.period_s
        else:
            if endurance_map is None:
                raise ValueError("adaptive refresh needs an endurance map")
            period = adaptive_period(pec, endurance_map)
        if period is not None and now - drive.program_epoch[blk] >= period:
            drive._in_reclaim = True
            try:
                drive._migrate_block(int(blk), int(drive.pool[blk]), "refresh")
            finally:
                drive._in_reclaim = False
            refreshed += 1
    return refreshed
