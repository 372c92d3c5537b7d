"""Trace replay and drive-lifetime estimation.

Two estimation modes share one replay. "analytic" extrapolates the P/E
budget from measured per-pool write rates and the endurance curve;
"direct" walks forward in time until the worst-case block RBER crosses
the ECC limit.
"""

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..trace import SECTOR_BYTES
from ..degradation import RetentionModel3D
from .geometry import Geometry, EnduranceMap, SECONDS_PER_DAY, THREE_YEARS_S
from .ftl import Drive, CLOSED
from .refresh import RefreshConfig, run_refresh
from .warm import WarmManager, WarmConfig, COLD, HOT


@dataclass
class LifetimeConfig:
    geometry: Geometry
    endurance: EnduranceMap = field(default_factory=EnduranceMap)
    warm: bool = False
    warm_config: WarmConfig = None
    refresh: RefreshConfig = field(default_factory=RefreshConfig)
    initial_pec: int = 0
    mode: str = "analytic"          # "analytic" | "direct"
    ecc_limit: float = None         # RBER the ECC can absorb (direct mode)
    retention_model: RetentionModel3D = None
    refresh_check_s: float = 3600.0
    series_age_s: float = None      # data age assumed for series RBER
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("analytic", "direct"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "direct" and (self.ecc_limit is None
                                      or self.retention_model is None):
            raise ValueError("direct mode needs ecc_limit and retention_model")


@dataclass
class LifetimeReport:
    mode: str
    duration_days: float
    lifetime_days: float            # math.inf when nothing wears
    writes: dict
    pool_writes: dict
    refresh_hot_writes: int
    write_amplification: float
    pec_mean: float
    pec_max: int
    series: list

    def to_json(self):
        doc = {
            "mode": self.mode,
            "duration_days": self.duration_days,
            "lifetime_days": ("inf" if math.isinf(self.lifetime_days)
                              else self.lifetime_days),
            "writes": self.writes,
            "pool_writes": {("hot" if k == HOT else "cold"): v
                            for k, v in self.pool_writes.items()},
            "refresh_hot_writes": self.refresh_hot_writes,
            "write_amplification": self.write_amplification,
            "pec_mean": self.pec_mean,
            "pec_max": self.pec_max,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def series_csv(self):
        out = io.StringIO()
        out.write("day,rber_avg,rber_worst,writes_host,writes_gc,"
                  "writes_refresh,pec_mean\n")
        for row in self.series:
            out.write("%d,%.6e,%.6e,%d,%d,%d,%.2f\n" % row)
        return out.getvalue()


def _series_rber(drive, model, age_s):
    """Mean and worst block-level RBER at the assumed data age."""
    mask = (drive.state == CLOSED) & (drive.valid_count > 0)
    ids = np.flatnonzero(mask)
    if model is None or ids.size == 0:
        return 0.0, 0.0
    rbers = []
    for blk in ids:
        pec = float(drive.pec[blk])
        r = 0.5 * (math.exp(model.eval("log_rber_msb", pec, age_s))
                   + math.exp(model.eval("log_rber_lsb", pec, age_s)))
        rbers.append(r)
    return float(np.mean(rbers)), float(np.max(rbers))


def replay(events, drive, cfg):
    """Drive the FTL through a trace; returns the daily series."""
    geom = cfg.geometry
    spp = geom.page_size // SECTOR_BYTES
    age_s = cfg.series_age_s if cfg.series_age_s is not None else cfg.refresh.period_s
    series = []
    next_refresh = cfg.refresh_check_s
    next_day = SECONDS_PER_DAY
    day = 0
    last = {"host": 0, "gc": 0, "refresh": 0}
    for e in events:
        now = e.timestamp_us / 1e6
        while now >= next_refresh:
            run_refresh(drive, next_refresh, cfg.refresh, cfg.endurance)
            next_refresh += cfg.refresh_check_s
        while now >= next_day:
            avg, worst = _series_rber(drive, cfg.retention_model, age_s)
            series.append((day, avg, worst,
                           drive.writes["host"] - last["host"],
                           drive.writes["gc"] - last["gc"],
                           drive.writes["refresh"] - last["refresh"],
                           float(drive.pec.mean())))
            last = {k: drive.writes[k] for k in last}
            day += 1
            next_day += SECONDS_PER_DAY
        page = (e.lba // spp) % geom.logical_pages
        if e.op == "W":
            for p in range(max(e.size_bytes // geom.page_size, 1)):
                drive.host_write((page + p) % geom.logical_pages, now)
        else:
            drive.host_read(page, now)
    avg, worst = _series_rber(drive, cfg.retention_model, age_s)
    series.append((day, avg, worst,
                   drive.writes["host"] - last["host"],
                   drive.writes["gc"] - last["gc"],
                   drive.writes["refresh"] - last["refresh"],
                   float(drive.pec.mean())))
    return series


def run_lifetime(events, cfg):
    warm = WarmManager(cfg.geometry, cfg.warm_config) if cfg.warm else None
    drive = Drive(cfg.geometry, warm=warm, initial_pec=cfg.initial_pec)
    series = replay(events, drive, cfg)

    duration_s = max((events[-1].timestamp_us - events[0].timestamp_us) / 1e6,
                     1e-9) if events else 1e-9
    duration_days = duration_s / SECONDS_PER_DAY

    if cfg.mode == "analytic":
        lifetime_days = _analytic_lifetime(drive, warm, cfg, duration_days)
    else:
        lifetime_days = _direct_lifetime(drive, cfg, duration_days)

    return LifetimeReport(
        mode=cfg.mode,
        duration_days=duration_days,
        lifetime_days=lifetime_days,
        writes=dict(drive.writes),
        pool_writes=dict(drive.pool_writes),
        refresh_hot_writes=drive.refresh_writes_by_pool[HOT],
        write_amplification=drive.write_amplification,
        pec_mean=float(drive.pec.mean() - cfg.initial_pec),
        pec_max=int(drive.pec.max() - cfg.initial_pec),
        series=series,
    )


def _pool_endurance(cfg, warm, pool):
    if pool == HOT and warm is not None:
        return cfg.endurance.endurance_at(warm.cfg.hot_retention_s)
    if cfg.refresh.mode == "fcr":
        return cfg.endurance.endurance_at(cfg.refresh.period_s)
    if cfg.refresh.mode == "adaptive":
        from .refresh import ADAPTIVE_TIERS_S
        return cfg.endurance.endurance_at(min(ADAPTIVE_TIERS_S))
    return cfg.endurance.endurance_at(cfg.refresh.native_retention_s)


def _analytic_lifetime(drive, warm, cfg, duration_days):
    """Days until some pool exhausts its P/E budget at measured rates."""
    geom = cfg.geometry
    nb, ppb = geom.total_blocks, geom.pages_per_block
    hot_blocks = warm.hot_budget_blocks if warm is not None else 0
    blocks = {HOT: hot_blocks, COLD: nb - hot_blocks}
    worst = math.inf
    for pool in (COLD, HOT):
        rate = drive.pool_writes[pool] / duration_days  # pages/day
        if rate <= 0 or blocks[pool] == 0:
            continue
        capacity = blocks[pool] * ppb * _pool_endurance(cfg, warm, pool)
        worst = min(worst, capacity / rate)
    return worst


def _direct_lifetime(drive, cfg, duration_days):
    """First day the worst-case block RBER exceeds the ECC limit."""
    model = cfg.retention_model
    age_s = (cfg.series_age_s if cfg.series_age_s is not None
             else (cfg.refresh.period_s if cfg.refresh.mode != "none"
                   else cfg.refresh.native_retention_s))
    pec_rate = (drive.pec.max() - cfg.initial_pec) / duration_days
    if pec_rate <= 0:
        return math.inf

    def worst_rber(day):
        pec = cfg.initial_pec + pec_rate * day
        return 0.5 * (math.exp(model.eval("log_rber_msb", pec, age_s))
                      + math.exp(model.eval("log_rber_lsb", pec, age_s)))

    lo, hi = 0.0, 365.0 * 200
    if worst_rber(hi) <= cfg.ecc_limit:
        return math.inf
    if worst_rber(lo) > cfg.ecc_limit:
        return 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if worst_rber(mid) > cfg.ecc_limit:
            hi = mid
        else:
            lo = mid
    return hi
