"""Thermal-aware read-policy experiment.

Replays a trace once under a temperature profile, collecting for each
read the wall-clock data age, the exact room-equivalent (temperature-
integrated) age, and the controller's logarithmic-history estimate of it.
Each read policy is then scored analytically: ground-truth Gaussian state
models come from the unified calculator at the exact effective age, the
policy picks references from what it is allowed to know, and the
resulting RBER decides how many P/E cycles the drive survives before the
worst read exceeds the ECC limit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import CellState, VoltageGrid
from ..models.cdf import StateModel, enforce_constraints
from ..models.applications import estimate_rber, sweep_vopt
from ..degradation import retention_refs
from .. import urt as urt_mod
from ..trace import SECTOR_BYTES
from .policies import ReadContext, policy_refs, ReMARState

HEATWATCH_POLICIES = ("fixed", "retention_only", "remar", "heatwatch", "oracle")


@dataclass(frozen=True)
class ReadSample:
    age_s: float          # wall-clock time since the page was written
    eff_exact_s: float    # integral of af(T) over that interval
    eff_est_s: float      # controller's logarithmic-history estimate


@dataclass
class HeatwatchConfig:
    temp: urt_mod.TempTrace = field(default_factory=urt_mod.TempTrace)
    page_size: int = 8192
    tick_s: float = 60.0
    max_samples: int = 300
    min_age_s: float = 600.0
    temp_program_c: float = 25.0


def collect_samples(events, cfg, params=None):
    """One pass over the trace: per-read thermal bookkeeping.

    The exact effective age integrates the acceleration factor over the
    temperature profile (trapezoidal, one point per tick); the estimate
    comes from an AccelLog fed the same ticks, queried over the sample's
    own window.
    """
    if params is None:
        params = urt_mod.URTParams(pvm={}, srrm={})
    end_s = events[-1].timestamp_us / 1e6 if events else 0.0
    n_ticks = int(end_s / cfg.tick_s) + 2
    tick_t = np.arange(n_ticks) * cfg.tick_s
    temps = np.array([urt_mod.temp_generate(cfg.temp, t) for t in tick_t])
    afs = urt_mod.af(urt_mod.celsius_to_kelvin(temps), params)
    # cumulative exact effective time at each tick boundary
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (afs[1:] + afs[:-1]) * cfg.tick_s)])

    log = urt_mod.AccelLog()
    ticked = 0
    write_time = {}
    samples = []
    spp = cfg.page_size // SECTOR_BYTES
    for e in events:
        now = e.timestamp_us / 1e6
        while (ticked + 1) * cfg.tick_s <= now:
            log.update(float(afs[ticked]), cfg.tick_s)
            ticked += 1
        page = e.lba // spp
        if e.op == "W":
            write_time[page] = now
        elif page in write_time:
            age = now - write_time[page]
            if age < cfg.min_age_s:
                continue
            i0 = int(write_time[page] / cfg.tick_s)
            i1 = int(now / cfg.tick_s)
            eff_exact = float(cum[i1] - cum[i0])
            eff_est = log.effective_time(min(age, log.elapsed))
            samples.append(ReadSample(age, eff_exact, eff_est))
    if len(samples) > cfg.max_samples:
        idx = np.linspace(0, len(samples) - 1, cfg.max_samples).astype(int)
        samples = [samples[i] for i in idx]
    return samples


def truth_models(pack, pec, eff_retention_s, temp_program_c=25.0):
    """Ground-truth Gaussian state models from the unified calculator."""
    tp = urt_mod.celsius_to_kelvin(temp_program_c)
    t_r = max(eff_retention_s, 1.0)
    models = {}
    for st in CellState:
        mu = urt_mod.urt_predict(pack, f"mu_{st.name}", pec, tp, t_r, 0.0)
        sigma = max(urt_mod.urt_predict(pack, f"sigma_{st.name}", pec, tp, t_r, 0.0),
                    1e-3)
        models[st] = StateModel("gaussian", mu, sigma)
    return enforce_constraints(models)


def policy_worst_rber(policy, samples, pack, retention_model, pec,
                      grid=None, temp_program_c=25.0):
    """Worst per-sample RBER a policy suffers at a given wear level."""
    grid = grid or VoltageGrid()
    remar = ReMARState(retention_model) if policy == "remar" else None
    worst = 0.0
    for s in samples:
        truth = truth_models(pack, pec, s.eff_exact_s, temp_program_c)
        ctx = ReadContext(pec=pec, age_s=s.age_s,
                          eff_retention_s=s.eff_est_s,
                          temp_program_c=temp_program_c)
        refs = policy_refs(policy, ctx, retention_model=retention_model,
                           calibration=pack, remar_state=remar,
                           true_models=truth, grid=grid)
        worst = max(worst, estimate_rber(truth, refs, grid).total)
    return worst


def policy_lifetime_pec(policy, samples, pack, retention_model, ecc_limit,
                        pec_hi=60000, grid=None, temp_program_c=25.0,
                        tol=50):
    """Largest P/E count at which every sampled read still decodes."""
    def ok(pec):
        return policy_worst_rber(policy, samples, pack, retention_model,
                                 pec, grid, temp_program_c) <= ecc_limit

    lo = 0.0
    if not ok(lo):
        return 0.0
    hi = float(pec_hi)
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def run_experiment(events, pack, retention_model, ecc_limit,
                   policies=HEATWATCH_POLICIES, cfg=None, **kw):
    cfg = cfg or HeatwatchConfig()
    samples = collect_samples(events, cfg, pack)
    if not samples:
        raise ValueError("trace produced no read samples")
    return {p: policy_lifetime_pec(p, samples, pack, retention_model,
                                   ecc_limit,
                                   temp_program_c=cfg.temp_program_c, **kw)
            for p in policies}
