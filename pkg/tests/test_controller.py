import json
import math

import numpy as np
import pytest

from flashlab.channel import sample_page
from flashlab.controller import (ADAPTIVE_TIERS_S, COLD, HOT, Drive,
                                 EnduranceMap, Geometry, LifetimeConfig,
                                 RefreshConfig, WarmConfig, WarmManager,
                                 adaptive_period, in_refresh_phase,
                                 run_lifetime, run_refresh)
from flashlab.controller.ftl import CLOSED, FREE, OPEN
from flashlab.controller.policies import (DecodeOutcome, ReadContext,
                                          ReMARState, disparity_vref_search,
                                          heatwatch_refs, policy_refs,
                                          read_flow, ror_vopt_discovery)
from flashlab.degradation import RetentionModel3D, retention_refs
from flashlab.grid import DEFAULT_READ_REFS, CellState, ReadRefs, VoltageGrid
from flashlab.models.applications import sweep_vopt
from flashlab.models.cdf import StateModel
from flashlab.trace import synth_hot
from flashlab.urt import calibration_pack_from_retention

DAY = 86400.0


def small_geom(mb=16, op=0.25):
    return Geometry(capacity_bytes=mb << 20, op_fraction=op)


def fill_drive(drive, rng=None, passes=1.0, start=0.0, dt=1.0):
    """Write every logical page `passes` times; returns final clock."""
    n = drive.geom.logical_pages
    t = start
    for i in range(int(n * passes)):
        drive.host_write(i % n, t)
        t += dt
    return t


class TestGeometry:
    def test_derived_counts(self):
        g = small_geom(mb=16, op=0.25)
        assert g.total_blocks == 16
        assert g.pages_per_block == 128
        assert g.wordlines_per_block == 64
        assert g.total_pages == 2048
        assert g.logical_pages == int(2048 / 1.25)
        assert g.logical_bytes == g.logical_pages * 8192

    def test_validation(self):
        with pytest.raises(ValueError):
            Geometry(capacity_bytes=1 << 20)  # one block
        with pytest.raises(ValueError):
            Geometry(capacity_bytes=1 << 26, page_size=3000)
        with pytest.raises(ValueError):
            Geometry(capacity_bytes=1 << 26, op_fraction=0.0)


class TestEnduranceMap:
    def test_anchor_values_exact(self):
        m = EnduranceMap()
        assert m.endurance_at(3 * 365 * DAY) == pytest.approx(3000.0, rel=1e-9)
        assert m.endurance_at(3 * DAY) == pytest.approx(150000.0, rel=1e-9)

    def test_log_log_interpolation(self):
        m = EnduranceMap()
        t0, p0 = 3 * DAY, 150000.0
        t1, p1 = 3 * 365 * DAY, 3000.0
        t_mid = math.sqrt(t0 * t1)
        assert m.endurance_at(t_mid) == pytest.approx(math.sqrt(p0 * p1), rel=1e-9)

    def test_monotone_decreasing(self):
        m = EnduranceMap()
        ts = [DAY, 3 * DAY, 30 * DAY, 365 * DAY, 3 * 365 * DAY, 10 * 365 * DAY]
        vals = [m.endurance_at(t) for t in ts]
        assert vals == sorted(vals, reverse=True)

    def test_validation(self):
        with pytest.raises(ValueError):
            EnduranceMap(anchors=((DAY, 100.0),))
        with pytest.raises(ValueError):
            EnduranceMap(anchors=((DAY, 100.0), (2 * DAY, 200.0)))
        with pytest.raises(ValueError):
            EnduranceMap().endurance_at(0.0)


class TestDrive:
    def test_write_read_round_trip(self):
        d = Drive(small_geom())
        d.host_write(17, now=5.0)
        ppn, age = d.host_read(17, now=11.0)
        assert d.rmap[ppn] == 17
        assert age == pytest.approx(6.0)
        assert d.host_read(999, now=11.0) is None

    def test_rewrite_invalidates_old_page(self):
        d = Drive(small_geom())
        d.host_write(3, 0.0)
        old = d.map[3]
        d.host_write(3, 1.0)
        assert not d.valid[old]
        assert d.valid[d.map[3]]
        assert int(d.valid.sum()) == 1

    def test_write_amplification_is_unity_before_gc(self):
        d = Drive(small_geom())
        for i in range(200):
            d.host_write(i, float(i))
        assert d.write_amplification == 1.0
        assert d.writes["gc"] == 0

    def test_gc_keeps_free_blocks_above_threshold(self):
        d = Drive(small_geom())
        rng = np.random.default_rng(1)
        n = d.geom.logical_pages
        for i in range(3 * n):  # random overwrites leave victims partly live
            d.host_write(int(rng.integers(0, n)), float(i))
        assert len(d.free) >= d.gc_threshold - 1
        assert d.writes["gc"] > 0
        assert d.write_amplification > 1.0
        assert d.audit()

    def test_gc_victim_minimizes_valid_pages(self):
        d = Drive(small_geom())
        fill_drive(d, passes=1.0)
        victim = d._pick_cold_victim()
        closets = np.flatnonzero((d.state == CLOSED) & (d.pool == COLD))
        assert d.valid_count[victim] == d.valid_count[closets].min()

    def test_erase_advances_pec(self):
        d = Drive(small_geom())
        fill_drive(d, passes=3.0)
        assert d.erases > 0
        assert int(d.pec.max()) >= 1
        assert d.erases == int(d.pec.sum())

    def test_initial_pec_applies_everywhere(self):
        d = Drive(small_geom(), initial_pec=500)
        assert int(d.pec.min()) == 500

    def test_refresh_sweep_rewrites_only_old_blocks(self):
        d = Drive(small_geom())
        end = fill_drive(d, passes=1.0)
        refreshed = d.refresh_sweep(now=end + 10 * DAY, period_s=3 * DAY)
        assert refreshed > 0
        assert d.writes["refresh"] > 0
        # a second pass may catch the block that was still open during the
        # first; after that everything is freshly written and sweeps idle
        assert d.refresh_sweep(now=end + 10 * DAY, period_s=3 * DAY) <= 1
        assert d.refresh_sweep(now=end + 10 * DAY, period_s=3 * DAY) == 0
        assert d.audit()


class TestWarm:
    @staticmethod
    def warm_drive(mb=16, **cfg):
        geom = small_geom(mb=mb)
        warm = WarmManager(geom, WarmConfig(**cfg))
        return Drive(geom, warm=warm), warm

    def test_first_write_routes_cold(self):
        d, w = self.warm_drive()
        assert w.route(d, 0) == COLD

    def test_rewrite_in_cooldown_promotes(self):
        d, w = self.warm_drive()
        n = d.geom.pages_per_block
        for i in range(n):  # fill exactly one block so it closes into cooldown
            d.host_write(i, float(i))
        assert len(w.cold_closed) == 1
        assert w.route(d, 0) == HOT
        assert w.promotions >= 1

    def test_hot_resident_stays_hot(self):
        d, w = self.warm_drive()
        n = d.geom.pages_per_block
        for i in range(n):
            d.host_write(i, float(i))
        d.host_write(0, float(n))          # promoted
        assert w.route(d, 0) == HOT        # still resident in hot pool
        assert w.hot_hits >= 1

    def test_hot_pool_bounded_by_budget(self):
        d, w = self.warm_drive(initial_hot_fraction=0.04)
        rng = np.random.default_rng(0)
        hot_pages = 64
        t = fill_drive(d, passes=1.0)
        for i in range(20000):
            d.host_write(int(rng.integers(0, hot_pages)), t + i)
        assert d.pool_block_count(HOT) <= w.hot_budget_blocks + 1
        assert d.audit()

    def test_skewed_trace_cuts_write_amplification(self):
        base = Drive(small_geom(mb=32))
        d, w = self.warm_drive(mb=32)
        events = synth_hot(2000, 300, 0.01, 0.95,
                           footprint_bytes=int(0.9 * base.geom.logical_bytes),
                           seed=1)
        spp = 8192 // 512
        for drv in (base, d):
            for e in events:
                drv.host_write((e.lba // spp) % drv.geom.logical_pages,
                               e.timestamp_us / 1e6)
        assert d.write_amplification <= base.write_amplification
        assert w.tune_count > 0
        assert base.audit() and d.audit()

    def test_tuner_respects_bounds(self):
        d, w = self.warm_drive()
        for _ in range(30):
            w.tune(d, now=w._epoch_start + 100.0)
            assert 0.02 <= w.h <= d.geom.op_fraction + 1e-12
            assert 1 <= w.window <= 128
            assert w.window & (w.window - 1) == 0

    def test_window_must_be_power_of_two(self):
        with pytest.raises(ValueError):
            WarmManager(small_geom(), WarmConfig(initial_window=3))


class TestRefresh:
    @staticmethod
    def aged_drive(initial_pec=0):
        d = Drive(small_geom(), initial_pec=initial_pec)
        end = fill_drive(d, passes=1.0)
        return d, end

    def test_mode_none_is_noop(self):
        d, end = self.aged_drive()
        assert run_refresh(d, end + 100 * DAY, RefreshConfig(mode="none")) == 0

    def test_fcr_refreshes_expired_blocks(self):
        d, end = self.aged_drive()
        cfg = RefreshConfig(mode="fcr", period_s=3 * DAY)
        assert run_refresh(d, end + 1 * DAY, cfg) == 0
        n = run_refresh(d, end + 4 * DAY, cfg)
        assert n > 0 and d.writes["refresh"] > 0

    def test_refresh_phase_gate(self):
        emap = EnduranceMap()
        threshold = emap.endurance_at(3 * 365 * DAY)
        assert not in_refresh_phase(threshold - 1, emap)
        assert in_refresh_phase(threshold, emap)
        # low-wear drive with an endurance map: nothing to refresh yet
        d, end = self.aged_drive(initial_pec=0)
        cfg = RefreshConfig(mode="fcr", period_s=3 * DAY)
        assert run_refresh(d, end + 30 * DAY, cfg, endurance_map=emap) == 0
        d2, end2 = self.aged_drive(initial_pec=5000)
        assert run_refresh(d2, end2 + 30 * DAY, cfg, endurance_map=emap) > 0

    def test_adaptive_period_tiers(self):
        emap = EnduranceMap()
        # Wear levels straddling each tier's endurance budget.
        p90 = adaptive_period(emap.endurance_at(90 * DAY) - 1, emap)
        p21 = adaptive_period(emap.endurance_at(21 * DAY) - 1, emap)
        p3 = adaptive_period(emap.endurance_at(3 * DAY) - 1, emap)
        worn = adaptive_period(emap.endurance_at(3 * DAY) + 1, emap)
        assert p90 == 90 * DAY
        assert p21 == 21 * DAY
        assert p3 == 3 * DAY
        assert worn == min(ADAPTIVE_TIERS_S)
        assert p90 > p21 > p3

    def test_adaptive_needs_endurance_map(self):
        d, end = self.aged_drive()
        with pytest.raises(ValueError):
            run_refresh(d, end, RefreshConfig(mode="adaptive"))

    def test_hot_pool_exempt_by_default(self):
        geom = small_geom()
        warm = WarmManager(geom)
        d = Drive(geom, warm=warm, initial_pec=10000)
        n = geom.pages_per_block
        for i in range(n):
            d.host_write(i, float(i))
        for i in range(2 * n):  # rewrite promotes into the hot pool
            d.host_write(i % n, float(n + i))
        end = float(3 * n)
        cfg = RefreshConfig(mode="fcr", period_s=3 * DAY)
        run_refresh(d, end + 30 * DAY, cfg)
        assert d.refresh_writes_by_pool[HOT] == 0
        cfg_hot = RefreshConfig(mode="fcr", period_s=3 * DAY, include_hot=True)
        run_refresh(d, end + 90 * DAY, cfg_hot)
        # with the exemption lifted, resident hot blocks do refresh
        if d.pool_block_count(HOT) > 0 and any(
                d.state[b] == CLOSED for b in np.flatnonzero(d.pool == HOT)):
            assert d.refresh_writes_by_pool[HOT] > 0

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            RefreshConfig(mode="eager")


RET = RetentionModel3D()


class TestPolicies:
    def ctx(self, **kw):
        return ReadContext(**kw)

    def test_fixed_policy(self):
        assert policy_refs("fixed", self.ctx()) == DEFAULT_READ_REFS

    def test_retention_only_matches_model(self):
        ctx = self.ctx(pec=4000, age_s=7 * DAY)
        got = policy_refs("retention_only", ctx, retention_model=RET)
        assert got == retention_refs(RET, 4000, 7 * DAY)

    def test_lavar_applies_layer_offsets(self):
        ctx = self.ctx(pec=4000, age_s=7 * DAY, layer_va_offset=-4,
                       layer_vb_offset=-2)
        base = retention_refs(RET, 4000, 7 * DAY)
        got = policy_refs("lavar", ctx, retention_model=RET)
        assert got.va == base.va - 4
        assert got.vb == base.vb - 2
        assert got.va < got.vb < got.vc

    def test_remar_caches_between_refits(self):
        state = ReMARState(RET, cadence=10)
        a = state.refs(self.ctx(pec=1000, age_s=DAY))
        b = state.refs(self.ctx(pec=9000, age_s=60 * DAY))  # served stale
        assert a == b
        for _ in range(8):
            state.refs(self.ctx(pec=9000, age_s=60 * DAY))
        c = state.refs(self.ctx(pec=9000, age_s=60 * DAY))  # refit point
        assert c == retention_refs(RET, 9000, 60 * DAY)
        assert c != a

    def test_oracle_is_exhaustive_sweep(self):
        models = {st: StateModel("gaussian", [25, 105, 185, 255][i], 11.0)
                  for i, st in enumerate(CellState)}
        got = policy_refs("oracle", self.ctx(), true_models=models)
        assert got == sweep_vopt(models)

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError):
            policy_refs("psychic", self.ctx())

    def test_heatwatch_tracks_thermal_aging(self):
        pack = calibration_pack_from_retention(RET)
        cool = heatwatch_refs(pack, self.ctx(pec=5000, age_s=30 * DAY,
                                             eff_retention_s=1 * DAY,
                                             temp_program_c=20.0))
        hot = heatwatch_refs(pack, self.ctx(pec=5000, age_s=30 * DAY,
                                            eff_retention_s=300 * DAY,
                                            temp_program_c=20.0))
        assert cool.va < cool.vb < cool.vc
        assert hot.vc < cool.vc  # more effective retention, lower window

    def test_heatwatch_survives_extrapolated_mean_crossings(self):
        pack = calibration_pack_from_retention(RET)
        refs = heatwatch_refs(pack, self.ctx(pec=60000, age_s=365 * DAY,
                                             eff_retention_s=3650 * DAY))
        assert 1 <= refs.va < refs.vb < refs.vc


def ladder_population():
    models = {st: StateModel("gaussian", [20, 100, 180, 260][i], 12.0)
              for i, st in enumerate(CellState)}
    state = sample_page(models, 4000, seed=2, neighbor_states=True)
    # distinct per-neighbor-group drift that no single global offset fixes
    state.vth += np.array([-6.0, -6.0, 6.0, 6.0])[state.wl_neighbor_state]
    return state


class TestReadFlow:
    REFS = ReadRefs(60, 140, 220)

    def test_stage_escalation(self):
        o = read_flow(ladder_population(), self.REFS, ecc_budget_bits=9)
        assert o.stage == "policy" and o.reads == 1
        o = read_flow(ladder_population(), self.REFS, ecc_budget_bits=7)
        assert o.stage == "retry" and o.errors <= 7
        o = read_flow(ladder_population(), self.REFS, ecc_budget_bits=4)
        assert o.stage == "nac"
        assert o.errors <= 4
        o = read_flow(ladder_population(), self.REFS, ecc_budget_bits=0)
        assert o.stage == "fail"

    def test_each_stage_costs_more_reads(self):
        o_policy = read_flow(ladder_population(), self.REFS, 9)
        o_retry = read_flow(ladder_population(), self.REFS, 7)
        o_nac = read_flow(ladder_population(), self.REFS, 4)
        assert o_policy.reads < o_retry.reads < o_nac.reads

    def test_parity_requires_all_siblings(self):
        ok = read_flow(ladder_population(), self.REFS, 0,
                       siblings_decode=[True, True, True])
        assert ok.stage == "parity"
        bad = read_flow(ladder_population(), self.REFS, 0,
                        siblings_decode=[True, False, True])
        assert bad.stage == "fail"

    def test_clean_page_decodes_first_try(self):
        models = {st: StateModel("gaussian", [20, 100, 180, 260][i], 3.0)
                  for i, st in enumerate(CellState)}
        state = sample_page(models, 2000, seed=0)
        o = read_flow(state, ReadRefs(60, 140, 220), ecc_budget_bits=0)
        assert o.stage == "policy" and o.errors == 0


class TestReferenceDiscovery:
    def test_disparity_search_finds_quantile_boundaries(self):
        models = {st: StateModel("gaussian", [20, 100, 180, 260][i], 6.0)
                  for i, st in enumerate(CellState)}
        state = sample_page(models, 40000, seed=5)
        grid = VoltageGrid()
        va = disparity_vref_search(state, "va", grid)
        vb = disparity_vref_search(state, "vb", grid)
        vc = disparity_vref_search(state, "vc", grid)
        # each reference must land in the valley between its two states:
        # any point there matches the target disparity, so require >3 sigma
        # clearance from both neighboring means and near-zero raw errors
        assert 20 + 3 * 6.0 < va < 100 - 3 * 6.0
        assert 100 + 3 * 6.0 < vb < 180 - 3 * 6.0
        assert 180 + 3 * 6.0 < vc < 260 - 3 * 6.0
        assert va < vb < vc
        from flashlab.controller.policies import _bit_errors
        assert _bit_errors(state, ReadRefs(va, vb, vc)) <= 5

    def test_disparity_probe_budget(self):
        models = {st: StateModel("gaussian", [20, 100, 180, 260][i], 6.0)
                  for i, st in enumerate(CellState)}
        state = sample_page(models, 1000, seed=5)
        grid = VoltageGrid()
        # 9 probes must bisect the 400-step range exactly
        assert disparity_vref_search(state, "vb", grid, max_probes=9) >= 1

    def test_ror_descends_to_lower_error_reference(self):
        models = {st: StateModel("gaussian", [20, 100, 180, 260][i], 10.0)
                  for i, st in enumerate(CellState)}
        state = sample_page(models, 20000, seed=6)
        grid = VoltageGrid()
        start = ReadRefs(60, 151, 220)  # vb starts 11 steps high
        from flashlab.controller.policies import _bit_errors
        v, err, probes = ror_vopt_discovery(state, start, "vb", grid)
        assert v < 151
        assert err <= _bit_errors(state, start)
        assert probes <= 32


class TestLifetimeReplay:
    @staticmethod
    def run_once(seed=0):
        geom = small_geom(mb=32)
        events = synth_hot(1000, 200, 0.02, 0.9,
                           footprint_bytes=geom.logical_bytes, seed=3)
        cfg = LifetimeConfig(geometry=geom, warm=True, mode="analytic",
                             refresh=RefreshConfig(mode="fcr", period_s=3 * DAY),
                             seed=seed)
        return run_lifetime(events, cfg)

    def test_replay_is_deterministic(self):
        a = self.run_once()
        b = self.run_once()
        assert a.to_json() == b.to_json()
        assert a.series_csv() == b.series_csv()

    def test_report_accounting(self):
        rep = self.run_once()
        assert rep.writes["host"] == 1000 * 200
        assert rep.write_amplification >= 1.0
        assert rep.lifetime_days > 0
        csv = rep.series_csv().splitlines()
        assert csv[0].startswith("day,rber_avg,rber_worst")

    def test_direct_mode_requires_inputs(self):
        with pytest.raises(ValueError):
            LifetimeConfig(geometry=small_geom(), mode="direct")
