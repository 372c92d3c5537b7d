"""Analytic reliability calculus and RAID layout engines.

ECC codeword failure, logical-block and superpage-parity failure, drive
lifetime (single- and multi-rate ECC), over-provisioning arithmetic, and
the layer-interleaved RAID (LI-RAID) layout with a conventional-RAID
comparator.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

BLANK = -1
MSB, LSB = 0, 1


class InfeasibleLayout(ValueError):
    """Raised when a requested RAID layout cannot be constructed."""


@dataclass(frozen=True)
class EccConfig:
    codeword_len: int
    correctable: int
    coding_rate: float = 0.9
    target_uber: float = 1e-15

    def __post_init__(self):
        if not (0 < self.correctable < self.codeword_len):
            raise ValueError("need 0 < t < l")
        if not (0.0 < self.coding_rate < 1.0):
            raise ValueError("coding rate must lie in (0, 1)")


@dataclass(frozen=True)
class ParityConfig:
    chips: int
    dies: int
    codewords_per_lb: int = 1
    p_hgbb: float = 0.0

    def __post_init__(self):
        if self.chips * self.dies < 2:
            raise ValueError("parity needs at least two chip-dies")
        if self.codewords_per_lb < 1:
            raise ValueError("K must be >= 1")


def ecc_failure_rate(ecc, rber):
    """Probability that more than t of l bits are in error.

    The binomial survival function is evaluated through its exact
    identity with the regularized incomplete beta, P(X > t) =
    I_rber(t+1, l-t), which stays fully accurate out to l = 2^17 where a
    termwise binomial sum loses digits to log-gamma rounding.
    """
    if not (0.0 <= rber <= 1.0):
        raise ValueError("rber must lie in [0, 1]")
    if rber == 0.0:
        return 0.0
    if rber == 1.0:
        return 1.0
    l, t = ecc.codeword_len, ecc.correctable
    return float(betainc(t + 1, l - t, rber))


def lb_fail(parity, p_ecfr):
    """Logical-block failure: hidden grown bad block, or any codeword."""
    if not (0.0 <= p_ecfr <= 1.0):
        raise ValueError("p_ecfr must lie in [0, 1]")
    k = parity.codewords_per_lb
    return parity.p_hgbb + (1.0 - parity.p_hgbb) * (1.0 - (1.0 - p_ecfr) ** k)


def parity_fail(parity, p_lbfail):
    """Superpage parity fails iff two or more LBs in the stripe fail."""
    if not (0.0 <= p_lbfail <= 1.0):
        raise ValueError("p_lbfail must lie in [0, 1]")
    n = parity.chips * parity.dies
    return p_lbfail * (1.0 - (1.0 - p_lbfail) ** (n - 1))


def op_fraction(pba, lba):
    if lba <= 0:
        raise ValueError("lba must be positive")
    return (pba - lba) / lba


def lifetime_years(pec, op, dwpd, wa, r_compress):
    """Years until the PEC budget is exhausted at DWPD drive writes/day."""
    return pec * (1.0 + op) / (365.0 * dwpd * wa * r_compress)


def multirate_lifetime(schedule, dwpd, r_compress):
    """Lifetime across a multi-rate ECC schedule.

    schedule: ordered (pec_increment, op, wa, rate) entries; each entry
    covers the P/E cycles spent while that ECC engine is active.
    """
    total = 0.0
    for pec_i, op_i, wa_i, _rate in schedule:
        total += lifetime_years(pec_i, op_i, dwpd, wa_i, r_compress)
    return total


def multirate_schedule(engines, rber_of_pec, pec_step=100, pec_max=200000):
    """Switching thresholds for a ladder of ECC engines.

    Engine i hands over when its codeword failure rate at the drive's
    RBER(pec) exceeds its target UBER. engines: (EccConfig, op, wa) tuples
    ordered weakest code first. Returns (pec_increment, op, wa, rate)
    entries suitable for multirate_lifetime.
    """
    schedule = []
    start = 0
    for ecc, op, wa in engines:
        pec = start
        while pec <= pec_max and ecc_failure_rate(ecc, rber_of_pec(pec)) <= ecc.target_uber:
            pec += pec_step
        if pec > start:
            schedule.append((pec - start, op, wa, ecc.coding_rate))
            start = pec
        if pec > pec_max:
            break
    return schedule


# --- RAID layouts ------------------------------------------------------


@dataclass
class RaidLayout:
    m: int  # chips
    n: int  # wordlines
    assignment: dict  # (chip, wordline, page) -> group id or BLANK
    n_groups: int
    flagged: bool = False
    kind: str = "li_raid"

    def group_pages(self):
        groups = {}
        for key, g in self.assignment.items():
            if g != BLANK:
                groups.setdefault(g, []).append(key)
        return groups


def li_raid_layout(m, n):
    """Layer-interleaved parity grouping.

    Groups pair the MSB of one wordline with the LSB of a different
    wordline on every other chip, so no group ever contains two pages of
    the same wordline position; one wordline per chip stays blank so each
    page sees program interference from at most one later-programmed
    neighbor. Closed form (stride s = n/m): with idx = (w - j*s) mod n,
    chip j blanks idx = n - s; surviving wordlines rank q = idx, minus one
    once past the blank; group = 2q + page for even chips, page bits
    swapped on odd chips.
    """
    if m > 2 * n:
        raise InfeasibleLayout(f"m={m} chips cannot form groups over n={n} wordlines")
    flagged = n % m != 0
    s = max(n // m, 1)
    assignment = {}
    for j in range(m):
        for w in range(n):
            idx = (w - j * s) % n
            if idx == n - s:
                assignment[(j, w, MSB)] = BLANK
                assignment[(j, w, LSB)] = BLANK
                continue
            q = idx - (1 if idx > n - s else 0)
            for page in (MSB, LSB):
                orient = page if j % 2 == 0 else 1 - page
                assignment[(j, w, page)] = 2 * q + orient
    return RaidLayout(m, n, assignment, n_groups=2 * (n - 1), flagged=flagged,
                      kind="li_raid")


def conventional_layout(m, n):
    """Conventional RAID: identical (wordline, page) grouped across chips."""
    assignment = {(j, w, p): 2 * w + p
                  for j in range(m) for w in range(n) for p in (MSB, LSB)}
    return RaidLayout(m, n, assignment, n_groups=2 * n, flagged=False,
                      kind="conventional")


def layout_worst_group(layout, rber, parity=None, ecc=None):
    """Weakest parity group of a layout.

    rber: array (chips, wordlines, 2) of per-page RBER. Returns
    (group_id, mean_rber, p_parity) with p_parity None unless both parity
    and ecc configs are supplied.
    """
    rber = np.asarray(rber, dtype=float)
    worst_gid, worst_mean = None, -1.0
    for gid, pages in sorted(layout.group_pages().items()):
        mean = float(np.mean([rber[key] for key in pages]))
        if mean > worst_mean:
            worst_gid, worst_mean = gid, mean
    p_parity = None
    if parity is not None and ecc is not None:
        p_parity = parity_fail(parity, lb_fail(parity, ecc_failure_rate(ecc, worst_mean)))
    return worst_gid, worst_mean, p_parity


def export_layout_csv(layout, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chip", "wordline", "page", "group"])
        for (j, wl, p) in sorted(layout.assignment):
            g = layout.assignment[(j, wl, p)]
            w.writerow([j, wl, "MSB" if p == MSB else "LSB",
                        "BLANK" if g == BLANK else g])
