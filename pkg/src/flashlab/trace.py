"""Workload traces: MSR-Cambridge ingestion, canonical CSV, synthesis.

Canonical event: (timestamp_us, op, lba, size_bytes) with lba counted in
512-byte sectors and op in {"R", "W"}.
"""

import csv
from dataclasses import dataclass

import numpy as np

SECTOR_BYTES = 512


@dataclass(frozen=True)
class TraceEvent:
    timestamp_us: int
    op: str
    lba: int
    size_bytes: int


def fold_lba(lba, drive_sectors):
    """Map an arbitrary trace LBA into the simulated drive by modulo."""
    return lba % drive_sectors


def parse_msr(path):
    """Parse an MSR-Cambridge block trace.

    Columns: Timestamp (100 ns ticks), Hostname, DiskNumber, Type
    (Read/Write), Offset (bytes), Size (bytes), ResponseTime. Timestamps
    are rebased so the first event is 0. Returns (events, skipped) where
    skipped counts malformed rows.
    """
    events, skipped = [], 0
    base = None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 6:
                skipped += 1
                continue
            try:
                ticks = int(row[0])
                kind = row[3].strip().lower()
                offset = int(row[4])
                size = int(row[5])
                if kind not in ("read", "write") or offset < 0 or size <= 0:
                    raise ValueError
            except ValueError:
                skipped += 1
                continue
            if base is None:
                base = ticks
            events.append(TraceEvent(
                timestamp_us=(ticks - base) // 10,
                op="R" if kind == "read" else "W",
                lba=offset // SECTOR_BYTES,
                size_bytes=size,
            ))
    return events, skipped


def write_canonical(events, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_us", "op", "lba", "size_bytes"])
        for e in events:
            w.writerow([e.timestamp_us, e.op, e.lba, e.size_bytes])


def parse_canonical(path):
    events, skipped = [], 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp_us", "op", "lba", "size_bytes"]:
            raise ValueError("not a canonical trace: bad header")
        for row in reader:
            try:
                ts, op, lba, size = int(row[0]), row[1], int(row[2]), int(row[3])
                if op not in ("R", "W") or size <= 0 or lba < 0:
                    raise ValueError
            except (ValueError, IndexError):
                skipped += 1
                continue
            events.append(TraceEvent(ts, op, lba, size))
    return events, skipped


def synth_hot(duration_s, rate_per_s, hot_fraction, hot_share,
              footprint_bytes, seed, page_size=8192, read_fraction=0.0,
              dist="twolevel", zipf_a=1.2):
    """Synthesize a skewed write trace.

    "twolevel": a hot_fraction slice of the page footprint receives a
    hot_share fraction of all writes, uniform within each slice. "zipf":
    page popularity follows a Zipf(zipf_a) law over a seeded permutation.
    Timestamps are evenly spaced; all accesses are one page.
    """
    if not (0.0 < hot_fraction < 1.0 and 0.0 <= hot_share <= 1.0):
        raise ValueError("hot_fraction in (0,1), hot_share in [0,1]")
    n_events = int(duration_s * rate_per_s)
    n_pages = max(footprint_bytes // page_size, 1)
    rng = np.random.default_rng(seed)
    spacing_us = 1e6 / rate_per_s
    times = (np.arange(n_events) * spacing_us).astype(np.int64)

    if dist == "twolevel":
        n_hot = max(int(n_pages * hot_fraction), 1)
        is_hot = rng.random(n_events) < hot_share
        pages = np.where(
            is_hot,
            rng.integers(0, n_hot, n_events),
            n_hot + rng.integers(0, max(n_pages - n_hot, 1), n_events),
        )
    elif dist == "zipf":
        ranks = np.minimum(rng.zipf(zipf_a, n_events) - 1, n_pages - 1)
        pages = rng.permutation(n_pages)[ranks]
    else:
        raise ValueError(f"unknown dist {dist!r}")

    is_read = rng.random(n_events) < read_fraction
    sectors_per_page = page_size // SECTOR_BYTES
    return [TraceEvent(int(t), "R" if r else "W", int(p) * sectors_per_page, page_size)
            for t, r, p in zip(times, is_read, pages)]


def hotness_cdf(events, page_size=8192):
    """Write-concentration curve.

    Returns (page_fraction, write_fraction): after sorting pages by write
    count descending, the cumulative share of writes absorbed by the
    hottest x fraction of written pages.
    """
    sectors_per_page = page_size // SECTOR_BYTES
    counts = {}
    for e in events:
        if e.op != "W":
            continue
        for pg in range(e.lba // sectors_per_page,
                        (e.lba * SECTOR_BYTES + e.size_bytes + page_size - 1) // page_size):
            counts[pg] = counts.get(pg, 0) + 1
    if not counts:
        return np.array([]), np.array([])
    writes = np.sort(np.fromiter(counts.values(), dtype=float))[::-1]
    frac_pages = np.arange(1, len(writes) + 1) / len(writes)
    frac_writes = np.cumsum(writes) / writes.sum()
    return frac_pages, frac_writes
