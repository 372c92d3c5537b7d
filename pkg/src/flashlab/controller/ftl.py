"""Page-mapped flash translation layer with pools, GC, and refresh hooks.

State lives in flat numpy arrays indexed by physical page number (ppn) or
block id. Cold garbage collection is greedy (fewest valid pages, ties to
the lowest block id) and triggers when the free list drops to 2% of all
blocks. Hot-pool reclamation is strictly in write order: the oldest hot
block is demoted, its surviving pages rewritten cold.
"""

import heapq

import numpy as np

from .warm import COLD, HOT

FREE, OPEN, CLOSED = 0, 1, 2

WRITE_KINDS = ("host", "gc", "refresh", "demotion")


class Drive:
    def __init__(self, geom, warm=None, initial_pec=0):
        self.geom = geom
        nb, ppb = geom.total_blocks, geom.pages_per_block
        self.map = np.full(geom.logical_pages, -1, dtype=np.int64)
        self.rmap = np.full(nb * ppb, -1, dtype=np.int64)
        self.valid = np.zeros(nb * ppb, dtype=bool)
        self.valid_count = np.zeros(nb, dtype=np.int32)
        self.pec = np.full(nb, initial_pec, dtype=np.int64)
        self.program_epoch = np.zeros(nb, dtype=np.float64)
        self.read_count = np.zeros(nb, dtype=np.int64)
        self.pool = np.zeros(nb, dtype=np.int8)
        self.state = np.zeros(nb, dtype=np.int8)
        self.write_ptr = np.zeros(nb, dtype=np.int32)
        self.free = list(range(nb))
        heapq.heapify(self.free)  # wear-aware would key on pec; all equal here
        self.open_block = {COLD: None, HOT: None}
        self.warm = warm
        self.now = 0.0
        self.gc_threshold = max(2, -(-nb * 2 // 100))  # ceil(2%)
        self.writes = dict.fromkeys(WRITE_KINDS, 0)
        self.pool_writes = {COLD: 0, HOT: 0}
        self.refresh_writes_by_pool = {COLD: 0, HOT: 0}
        self.erases = 0
        self.reads = 0
        self._in_reclaim = False

    # --- bookkeeping -------------------------------------------------------

    def pool_block_count(self, pool):
        return int(np.count_nonzero((self.state != FREE) & (self.pool == pool)))

    @property
    def write_amplification(self):
        host = self.writes["host"]
        if host == 0:
            return 1.0
        return sum(self.writes.values()) / host

    # --- host interface ----------------------------------------------------

    def host_write(self, lba_page, now):
        self.now = now
        pool = self.warm.route(self, lba_page) if self.warm else COLD
        self._program(lba_page, pool, "host")
        if self.warm:
            self.warm.after_host_write(self, self.geom.page_size, now)
            if self.warm.rotation_due():
                self.rotate_hot_pool()

    def host_read(self, lba_page, now):
        """Returns (ppn, block age in seconds) or None if never written."""
        self.now = now
        ppn = self.map[lba_page]
        if ppn < 0:
            return None
        blk = ppn // self.geom.pages_per_block
        self.read_count[blk] += 1
        self.reads += 1
        return int(ppn), float(now - self.program_epoch[blk])

    # --- programming path --------------------------------------------------

    def _program(self, lba_page, pool, kind):
        ppn = self._next_page(pool)
        old = self.map[lba_page]
        if old >= 0:
            self.valid[old] = False
            self.valid_count[old // self.geom.pages_per_block] -= 1
            self.rmap[old] = -1
        self.map[lba_page] = ppn
        self.rmap[ppn] = lba_page
        self.valid[ppn] = True
        self.valid_count[ppn // self.geom.pages_per_block] += 1
        self.writes[kind] += 1
        self.pool_writes[pool] += 1
        if kind == "refresh":
            self.refresh_writes_by_pool[pool] += 1

    def _next_page(self, pool):
        blk = self.open_block[pool]
        if blk is None:
            blk = self._allocate(pool)
        ppn = blk * self.geom.pages_per_block + self.write_ptr[blk]
        self.write_ptr[blk] += 1
        if self.write_ptr[blk] == self.geom.pages_per_block:
            self.state[blk] = CLOSED
            self.open_block[pool] = None
            if self.warm:
                self.warm.on_block_closed(blk, pool)
        return ppn

    def _allocate(self, pool):
        if not self._in_reclaim:
            if pool == HOT and self.warm:
                while (self.pool_block_count(HOT) >= self.warm.hot_budget_blocks
                       and self.warm.hot_closed):
                    self._demote_oldest_hot()
            if len(self.free) <= self.gc_threshold:
                self._collect_garbage()
            # reclaim may itself have opened a block for this pool; reuse
            # it rather than orphaning it half-written
            if self.open_block[pool] is not None:
                return self.open_block[pool]
        if not self.free:
            raise RuntimeError("no free blocks: drive over-committed")
        blk = heapq.heappop(self.free)
        self.state[blk] = OPEN
        self.pool[blk] = pool
        self.write_ptr[blk] = 0
        self.program_epoch[blk] = self.now
        self.read_count[blk] = 0
        self.open_block[pool] = blk
        return blk

    def _erase(self, blk):
        live = np.flatnonzero(self.valid[blk * self.geom.pages_per_block:
                                         (blk + 1) * self.geom.pages_per_block])
        if live.size:
            raise RuntimeError("erasing a block with valid pages")
        pool = int(self.pool[blk])
        self.pec[blk] += 1
        self.state[blk] = FREE
        self.write_ptr[blk] = 0
        self.erases += 1
        heapq.heappush(self.free, int(blk))
        if self.warm:
            self.warm.on_block_erased(blk, pool)

    def _migrate_block(self, blk, dest_pool, kind):
        base = blk * self.geom.pages_per_block
        for off in np.flatnonzero(self.valid[base:base + self.geom.pages_per_block]):
            self._program(int(self.rmap[base + off]), dest_pool, kind)
        self._erase(blk)

    # --- garbage collection --------------------------------------------------

    def _collect_garbage(self):
        self._in_reclaim = True
        try:
            while len(self.free) <= self.gc_threshold:
                victim = self._pick_cold_victim()
                if victim is None or (
                        self.valid_count[victim] >= self.geom.pages_per_block):
                    # cold pool has nothing reclaimable; the invalid space
                    # must be sitting in hot blocks, so demote one
                    if self.warm and self.warm.hot_closed:
                        blk = self.warm.hot_closed[0]
                        n_live = int(self.valid_count[blk])
                        self._migrate_block(blk, COLD, "demotion")
                        self.warm.demotions += n_live
                        continue
                    break
                self._migrate_block(victim, COLD, "gc")
        finally:
            self._in_reclaim = False

    def _pick_cold_victim(self):
        mask = (self.state == CLOSED) & (self.pool == COLD)
        ids = np.flatnonzero(mask)
        if ids.size == 0:
            return None
        nb = self.geom.total_blocks
        return int(ids[np.argmin(self.valid_count[ids].astype(np.int64) * nb + ids)])

    def _demote_oldest_hot(self):
        self._in_reclaim = True
        try:
            blk = self.warm.hot_closed[0]
            n_live = int(self.valid_count[blk])
            self._migrate_block(blk, COLD, "demotion")
            self.warm.demotions += n_live
        finally:
            self._in_reclaim = False

    def rotate_hot_pool(self):
        """Move hot-pool contents onto fresh low-wear blocks."""
        self._in_reclaim = True
        try:
            for blk in list(self.warm.hot_closed):
                self._migrate_block(blk, HOT, "gc")
        finally:
            self._in_reclaim = False
        self.warm.hot_erases_since_rotation = 0

    # --- refresh --------------------------------------------------------------

    def refresh_sweep(self, now, period_s, include_hot=False):
        """Rewrite-in-place every closed block older than period_s.

        Hot-pool blocks are exempt unless include_hot: their data turns
        over faster than any refresh period, so refreshing them only
        burns cycles.
        """
        self.now = now
        mask = (self.state == CLOSED) & (self.valid_count > 0)
        mask &= (now - self.program_epoch) >= period_s
        if not include_hot:
            mask &= self.pool == COLD
        refreshed = 0
        self._in_reclaim = True
        try:
            for blk in np.flatnonzero(mask):
                self._migrate_block(int(blk), int(self.pool[blk]), "refresh")
                refreshed += 1
        finally:
            self._in_reclaim = False
        return refreshed

    # --- audit -----------------------------------------------------------------

    def audit(self):
        ppb = self.geom.pages_per_block
        live = np.flatnonzero(self.map >= 0)
        assert np.array_equal(self.rmap[self.map[live]], live), "map/rmap mismatch"
        assert self.valid[self.map[live]].all(), "mapped page not valid"
        assert int(self.valid.sum()) == live.size, "orphan valid pages"
        per_block = self.valid.reshape(-1, ppb).sum(axis=1)
        assert np.array_equal(per_block, self.valid_count), "valid_count drift"
        assert not self.valid.reshape(-1, ppb)[self.state == FREE].any()
        open_ids = set(np.flatnonzero(self.state == OPEN).tolist())
        assert open_ids == {b for b in self.open_block.values() if b is not None}, \
            "orphaned open blocks"
        return True
