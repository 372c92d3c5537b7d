"""Command-line surface.

Subcommands: fit, simulate, plan, layout, trace-stats. All outputs are
JSON or CSV; every run writes a manifest (config hash, seed, package
versions) next to its artifacts. Exit codes: 0 ok, 2 configuration
error, 3 non-convergence, 4 uncorrectable data or infeasible layout.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .grid import VoltageGrid, CellState, N_BINS
from .channel import BinHistogram
from .models import (fit_static, fit_dynamic, predict_static, pooled_kl,
                     model_density, models_to_dict, save_models_json)
from .models.tables import default_tables
from .degradation import RetentionModel3D
from . import urt as urt_mod
from . import trace as trace_mod
from .raid_ecc import (EccConfig, ParityConfig, ecc_failure_rate, lb_fail,
                       parity_fail, op_fraction, lifetime_years,
                       multirate_lifetime, li_raid_layout, conventional_layout,
                       export_layout_csv, InfeasibleLayout)
from .controller import (Geometry, EnduranceMap, WarmConfig, RefreshConfig,
                         LifetimeConfig, run_lifetime, SECONDS_PER_DAY)
from .controller.heatwatch import HeatwatchConfig, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_UNCORRECTABLE = 4


class ConfigError(ValueError):
    pass


def _write_manifest(out_dir, command, config_obj, seed):
    os.makedirs(out_dir, exist_ok=True)
    blob = json.dumps(config_obj, sort_keys=True, default=str).encode()
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": seed,
        "versions": {
            "flashlab": __version__,
            "numpy": np.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_histogram(path, grid=None):
    grid = grid or VoltageGrid()
    counts = np.zeros((4, N_BINS), dtype=np.int64)
    names = {st.name: st.value for st in CellState}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["state", "bin", "count"]:
            raise ConfigError(f"{path}: expected header state,bin,count")
        for row in reader:
            counts[names[row[0]], int(row[1])] += int(row[2])
    return BinHistogram(counts=counts, grid=grid)


# --- fit --------------------------------------------------------------


_USABLE_KL = 0.01


def _nonconverged(fr):
    """A fit only counts as failed when the simplex stalled AND the
    resulting model is unusable; a tight KL with an exhausted iteration
    budget is routine for the 16-parameter joint polish."""
    return not fr.converged and not (fr.kl_error == fr.kl_error
                                     and fr.kl_error <= _USABLE_KL)


def _pec_from_name(path):
    stem = os.path.splitext(os.path.basename(path))[0]
    digits = "".join(ch for ch in stem if ch.isdigit())
    if not digits:
        raise ConfigError(f"cannot infer P/E count from filename {path!r};"
                          " use --pecs")
    return int(digits)


def cmd_fit(args):
    families = (args.compare.split(",") if args.compare else [args.family])
    out_dir = args.out
    _write_manifest(out_dir, "fit", vars(args), args.seed)
    tables = default_tables()

    if args.dynamic:
        if len(args.inputs) < 3:
            raise ConfigError("--dynamic needs at least 3 histograms")
        pecs = ([int(p) for p in args.pecs.split(",")] if args.pecs
                else [_pec_from_name(p) for p in args.inputs])
        if len(pecs) != len(args.inputs):
            raise ConfigError("--pecs count must match inputs")
        family = families[0]
        fits = []
        for pec, path in sorted(zip(pecs, args.inputs)):
            fr = fit_static(_load_histogram(path), family, tables=tables)
            if _nonconverged(fr):
                return EXIT_NONCONVERGENCE
            fits.append((pec, fr))
            print(f"pec={pec} kl={fr.kl_error:.6f}")
        dynamic = fit_dynamic(fits, family)
        if args.predict is not None:
            models, clamped = predict_static(dynamic, args.predict, family)
            save_models_json(models, os.path.join(out_dir, "model.json"))
            print(f"predicted model at pec={args.predict}"
                  + (" (clamped)" if clamped else ""))
        with open(os.path.join(out_dir, "dynamic.json"), "w") as fh:
            json.dump({f"{st}.{name}": [p.a, p.b, p.c]
                       for (st, name), p in dynamic.items()},
                      fh, indent=2, sort_keys=True)
        return EXIT_OK

    hist = _load_histogram(args.inputs[0])
    results = {}
    for family in families:
        fr = fit_static(hist, family, tables=tables)
        results[family] = fr
        print(f"{family}: kl={fr.kl_error:.6f} iters={fr.iterations}"
              f" converged={fr.converged}")
    best = min(results, key=lambda f: results[f].kl_error)
    save_models_json(results[best].params, os.path.join(out_dir, "model.json"))
    if any(_nonconverged(r) for r in results.values()):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


# --- simulate -----------------------------------------------------------


def _parse_refresh(spec):
    if spec in (None, "none"):
        return RefreshConfig(mode="none")
    if spec == "adaptive":
        return RefreshConfig(mode="adaptive")
    if spec.startswith("fcr:"):
        val = spec[4:]
        if not val.endswith("d"):
            raise ConfigError("fcr period must look like fcr:3d")
        return RefreshConfig(mode="fcr", period_s=float(val[:-1]) * SECONDS_PER_DAY)
    raise ConfigError(f"unknown refresh spec {spec!r}")


def _one_lifetime(item):
    name, cfg_doc, trace_path, seed = item
    events, _ = trace_mod.parse_canonical(trace_path)
    geom = Geometry(int(cfg_doc.get("capacity_bytes", 1 << 30)))
    cfg = LifetimeConfig(
        geometry=geom,
        warm=bool(cfg_doc.get("warm", False)),
        refresh=_parse_refresh(cfg_doc.get("refresh")),
        initial_pec=int(cfg_doc.get("initial_pec", 0)),
        mode=cfg_doc.get("mode", "analytic"),
        ecc_limit=cfg_doc.get("ecc_limit"),
        retention_model=(RetentionModel3D()
                         if cfg_doc.get("mode") == "direct"
                         or cfg_doc.get("series_rber") else None),
        seed=seed,
    )
    report = run_lifetime(events, cfg)
    return name, report


def cmd_simulate(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    out_dir = args.out
    _write_manifest(out_dir, "simulate", doc, args.seed)

    if doc.get("experiment") == "heatwatch":
        events, _ = trace_mod.parse_canonical(args.trace)
        rm = RetentionModel3D()
        pack = urt_mod.calibration_pack_from_retention(rm)
        temp_doc = doc.get("temp", {})
        hw_cfg = HeatwatchConfig(
            temp=urt_mod.TempTrace(seed=args.seed, **temp_doc),
            max_samples=int(doc.get("max_samples", 300)),
        )
        res = run_experiment(events, pack, rm,
                             float(doc.get("ecc_limit", 2e-3)), cfg=hw_cfg)
        with open(os.path.join(out_dir, "heatwatch.json"), "w") as fh:
            json.dump(res, fh, indent=2, sort_keys=True)
        print(json.dumps(res, sort_keys=True))
        return EXIT_OK

    policies = doc.get("policies")
    if not policies:
        raise ConfigError("config needs a 'policies' list")
    items = [(p["name"], p, args.trace, args.seed) for p in policies]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(_one_lifetime, items))
    else:
        results = dict(map(_one_lifetime, items))

    worst = EXIT_OK
    for name in sorted(results):
        rep = results[name]
        with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
            fh.write(rep.to_json())
        with open(os.path.join(out_dir, f"{name}_series.csv"), "w") as fh:
            fh.write(rep.series_csv())
        print(f"{name}: lifetime_days="
              f"{'inf' if math.isinf(rep.lifetime_days) else round(rep.lifetime_days, 1)}"
              f" wa={rep.write_amplification:.3f}")
        if rep.mode == "direct" and rep.lifetime_days <= 0:
            worst = EXIT_UNCORRECTABLE
    return worst


# --- plan ----------------------------------------------------------------


def cmd_plan(args):
    with open(args.config) as fh:
        doc = json.load(fh)
    out_dir = args.out
    _write_manifest(out_dir, "plan", doc, args.seed)
    out = {}

    if "ecc" in doc:
        ecc = EccConfig(int(doc["ecc"]["codeword_len"]),
                        int(doc["ecc"]["correctable"]),
                        float(doc["ecc"].get("coding_rate", 0.9)))
        rbers = doc.get("rber", [1e-3])
        rbers = rbers if isinstance(rbers, list) else [rbers]
        rows = []
        for r in rbers:
            p_ecfr = ecc_failure_rate(ecc, float(r))
            row = {"rber": r, "p_ecfr": p_ecfr}
            if "parity" in doc:
                par = ParityConfig(int(doc["parity"]["chips"]),
                                   int(doc["parity"]["dies"]),
                                   int(doc["parity"].get("codewords_per_lb", 1)),
                                   float(doc["parity"].get("p_hgbb", 0.0)))
                p_lb = lb_fail(par, p_ecfr)
                row["p_lb_fail"] = p_lb
                row["p_parity_fail"] = parity_fail(par, p_lb)
            rows.append(row)
        out["ecc"] = rows

    if "op" in doc:
        out["op"] = [{"pba": e["pba"], "lba": e["lba"],
                      "op_fraction": op_fraction(float(e["pba"]), float(e["lba"]))}
                     for e in doc["op"]]

    if "lifetime" in doc:
        lt = doc["lifetime"]
        out["lifetime_years"] = lifetime_years(
            float(lt["pec"]), float(lt["op"]), float(lt["dwpd"]),
            float(lt["wa"]), float(lt.get("r_compress", 1.0)))

    if "multirate" in doc:
        mr = doc["multirate"]
        schedule = [tuple(map(float, e)) for e in mr["schedule"]]
        out["multirate_lifetime_years"] = multirate_lifetime(
            schedule, float(mr["dwpd"]), float(mr.get("r_compress", 1.0)))

    with open(os.path.join(out_dir, "plan.json"), "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# --- layout ---------------------------------------------------------------


def cmd_layout(args):
    _write_manifest(args.out, "layout", vars(args), args.seed)
    try:
        if args.kind == "li_raid":
            layout = li_raid_layout(args.chips, args.wordlines)
        else:
            layout = conventional_layout(args.chips, args.wordlines)
    except InfeasibleLayout as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_UNCORRECTABLE
    path = os.path.join(args.out, f"{args.kind}_{args.chips}x{args.wordlines}.csv")
    export_layout_csv(layout, path)
    print(f"{layout.kind}: {layout.n_groups} groups"
          + (" (padded)" if layout.flagged else ""))
    return EXIT_OK


# --- trace-stats -----------------------------------------------------------


def cmd_trace_stats(args):
    if args.msr:
        events, skipped = trace_mod.parse_msr(args.trace)
    else:
        events, skipped = trace_mod.parse_canonical(args.trace)
    writes = sum(1 for e in events if e.op == "W")
    reads = len(events) - writes
    dur_s = ((events[-1].timestamp_us - events[0].timestamp_us) / 1e6
             if len(events) > 1 else 0.0)
    bytes_w = sum(e.size_bytes for e in events if e.op == "W")
    print(f"events={len(events)} reads={reads} writes={writes}"
          f" skipped={skipped} duration_s={dur_s:.1f}"
          f" written_bytes={bytes_w}")
    frac_pages, frac_writes = trace_mod.hotness_cdf(events, args.page_size)
    if frac_pages.size:
        for pct in (0.01, 0.05, 0.20):
            share = float(np.interp(pct, frac_pages, frac_writes))
            print(f"hottest {pct:.0%} of pages absorb {share:.1%} of writes")
    if args.canonical_out:
        trace_mod.write_canonical(events, args.canonical_out)
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="flashlab")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    sub = p.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("fit", help="fit channel models to histograms")
    f.add_argument("inputs", nargs="+")
    f.add_argument("--family", default="student_t",
                   choices=("gaussian", "normal_laplace", "student_t"))
    f.add_argument("--compare", help="comma list of families to rank by KL")
    f.add_argument("--dynamic", action="store_true")
    f.add_argument("--pecs", help="comma list of P/E counts per input")
    f.add_argument("--predict", type=float)
    f.set_defaults(fn=cmd_fit)

    s = sub.add_parser("simulate", help="trace-driven lifetime / policy runs")
    s.add_argument("--config", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(fn=cmd_simulate)

    pl = sub.add_parser("plan", help="analytic ECC/RAID/lifetime tables")
    pl.add_argument("--config", required=True)
    pl.set_defaults(fn=cmd_plan)

    la = sub.add_parser("layout", help="RAID parity layouts")
    la.add_argument("--chips", type=int, required=True)
    la.add_argument("--wordlines", type=int, required=True)
    la.add_argument("--kind", default="li_raid",
                    choices=("li_raid", "conventional"))
    la.set_defaults(fn=cmd_layout)

    t = sub.add_parser("trace-stats", help="summarize a block trace")
    t.add_argument("trace")
    t.add_argument("--msr", action="store_true")
    t.add_argument("--page-size", type=int, default=8192)
    t.add_argument("--canonical-out")
    t.set_defaults(fn=cmd_trace_stats)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
