"""Write-hotness separation: hot/cold routing, cooldown window, tuning.

Hot data is identified by rewrite recency alone, at block granularity: a
page rewritten while its current block sits in the cooldown window (the
most recently closed cold blocks) is promoted to the hot pool; pages
already resident in the hot pool stay there. The hot pool is a bounded
slice of over-provisioning; when it overflows, the oldest hot block is
demoted in write order. Pool size and window length are re-tuned after
every full logical-drive write.
"""

from collections import deque
from dataclasses import dataclass, field

COLD, HOT = 0, 1

_W_MIN, _W_MAX = 1, 128
_H_STEP = 0.02
_H_MIN = 0.02


@dataclass
class WarmConfig:
    initial_hot_fraction: float = 0.04
    initial_window: int = 8
    hot_retention_s: float = 3 * 86400.0
    rotation_pec: int = 1000


class WarmManager:
    def __init__(self, geom, config=None):
        self.cfg = config or WarmConfig()
        self.geom = geom
        w = self.cfg.initial_window
        if w < _W_MIN or w > _W_MAX or w & (w - 1):
            raise ValueError("window must be a power of two in [1, 128]")
        self.window = w
        self.h = min(self.cfg.initial_hot_fraction, geom.op_fraction)
        self.cold_closed = deque()   # newest on the right
        self.hot_closed = deque()    # oldest on the left (demotion order)
        self._cooldown = set()
        # epoch counters, reset at each tune
        self.hot_hits = 0
        self.promotions = 0
        self.demotions = 0
        self.cold_writes = 0
        self.hot_writes = 0
        self._epoch_host_bytes = 0
        self._epoch_start = 0.0
        self._last_metric = None
        self._h_dir = 1
        self._last_utility = None
        self._w_dir = 1
        self.hot_erases_since_rotation = 0
        self.tune_count = 0

    @property
    def hot_budget_blocks(self):
        return max(1, int(self.h * self.geom.total_blocks))

    # --- routing --------------------------------------------------------

    def route(self, drive, lba):
        ppn = drive.map[lba]
        if ppn >= 0:
            blk = ppn // drive.geom.pages_per_block
            if drive.pool[blk] == HOT:
                self.hot_hits += 1
                self.hot_writes += 1
                return HOT
            if blk in self._cooldown:
                self.promotions += 1
                self.hot_writes += 1
                return HOT
        self.cold_writes += 1
        return COLD

    # --- queue maintenance (called by the Drive) --------------------------

    def on_block_closed(self, blk, pool):
        if pool == HOT:
            self.hot_closed.append(blk)
        else:
            self.cold_closed.append(blk)
            self._refresh_cooldown()

    def on_block_erased(self, blk, pool):
        try:
            (self.hot_closed if pool == HOT else self.cold_closed).remove(blk)
        except ValueError:
            pass
        if pool == HOT:
            self.hot_erases_since_rotation += 1
        else:
            self._refresh_cooldown()

    def _refresh_cooldown(self):
        n = len(self.cold_closed)
        self._cooldown = set(
            self.cold_closed[i] for i in range(max(0, n - self.window), n))

    # --- tuning -----------------------------------------------------------

    def after_host_write(self, drive, nbytes, now):
        self._epoch_host_bytes += nbytes
        if self._epoch_host_bytes >= self.geom.logical_bytes:
            self.tune(drive, now)

    def tune(self, drive, now):
        """Adjust hot-pool size and cooldown window from epoch statistics."""
        self.tune_count += 1
        elapsed = max(now - self._epoch_start, 1e-9)
        hot_rate = self.hot_writes * self.geom.page_size / elapsed

        # The hot pool must fill no faster than its retention guarantee:
        # a block written now is only guaranteed readable for
        # hot_retention_s, so the pool must turn over within that time.
        pool_bytes = self.hot_budget_blocks * self.geom.block_size
        if hot_rate <= 0:
            h_cap = _H_MIN
        else:
            h_cap = (hot_rate * self.cfg.hot_retention_s
                     / (self.geom.total_blocks * self.geom.block_size))

        metric = (self._cold_pool_blocks(drive)
                  / max(self.cold_writes, 1))
        if self._last_metric is not None and metric < self._last_metric:
            self._h_dir = -self._h_dir
        self._last_metric = metric
        self.h += self._h_dir * _H_STEP
        self.h = min(self.h, self.geom.op_fraction, max(h_cap, _H_MIN))
        self.h = max(self.h, _H_MIN)

        utility = self.hot_hits - self.demotions
        if self._last_utility is not None and utility < self._last_utility:
            self._w_dir = -self._w_dir
        self._last_utility = utility
        self.window = (min(self.window * 2, _W_MAX) if self._w_dir > 0
                       else max(self.window // 2, _W_MIN))
        self._refresh_cooldown()

        self.hot_hits = self.promotions = self.demotions = 0
        self.cold_writes = self.hot_writes = 0
        self._epoch_host_bytes = 0
        self._epoch_start = now

    def _cold_pool_blocks(self, drive):
        return int((drive.pool_block_count(COLD)) + len(drive.free))

    def rotation_due(self):
        return (self.hot_erases_since_rotation
                >= self.cfg.rotation_pec * self.hot_budget_blocks)
