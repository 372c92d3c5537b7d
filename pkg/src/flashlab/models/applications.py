"""Controller-facing applications of the fitted distribution models:
RBER estimation, optimal read reference prediction, lifetime estimation,
and soft-decision LLRs.
"""

from dataclasses import dataclass

import numpy as np

from ..grid import LSB_OF_STATE, MSB_OF_STATE, CellState, ReadRefs, VoltageGrid
from .cdf import state_cdf
from .tables import default_tables

# Vopt search range for the top reference extends past the binning grid,
# matching the stock vc.
VC_SEARCH_MAX = 400


@dataclass
class RBEREstimate:
    total: float
    msb: float
    lsb: float


def region_masses(models, refs, grid=None, tables=None):
    """Probability mass of each intended state in each decode region.

    Returns shape (4 states, 4 regions); rows sum to 1.
    """
    grid = grid or VoltageGrid()
    tables = tables or default_tables()
    va, vb, vc = refs.voltages(grid)
    out = np.empty((4, 4))
    for st in CellState:
        c = state_cdf(models, st, np.array([va, vb, vc]), tables)
        out[st] = (c[0], c[1] - c[0], c[2] - c[1], 1.0 - c[2])
    return out


def estimate_rber(models, refs, grid=None, tables=None):
    """Analytic RBER at the given references, states weighted equally."""
    masses = region_masses(models, refs, grid, tables)
    msb = lsb = 0.0
    for st in range(4):
        for region in range(4):
            if MSB_OF_STATE[region] != MSB_OF_STATE[st]:
                msb += masses[st, region]
            if LSB_OF_STATE[region] != LSB_OF_STATE[st]:
                lsb += masses[st, region]
    msb /= 4.0
    lsb /= 4.0
    return RBEREstimate(total=(msb + lsb) / 2.0, msb=msb, lsb=lsb)


def _density(models, state, v, tables, h=0.25):
    lo = state_cdf(models, state, np.asarray(v, dtype=float) - h, tables)
    hi = state_cdf(models, state, np.asarray(v, dtype=float) + h, tables)
    return (hi - lo) / (2.0 * h)


def _intersect(models, lo_state, hi_state, tables, tol=1e-3):
    """Bisect for the voltage where the neighboring PDFs cross."""
    a, b = models[lo_state].mu, models[hi_state].mu

    def gap(v):
        return float(_density(models, lo_state, v, tables)
                     - _density(models, hi_state, v, tables))

    ga, gb = gap(a), gap(b)
    if ga <= 0 or gb >= 0:
        return None
    while b - a > tol:
        mid = (a + b) / 2.0
        if gap(mid) > 0:
            a = mid
        else:
            b = mid
    return (a + b) / 2.0


def predict_vopt(models, method="pdf_intersection", grid=None, tables=None):
    """Predict optimal read references.

    Returns (ReadRefs, flags); flags lists the boundaries that fell back
    to the mean midpoint because the densities never crossed.
    """
    if method not in ("pdf_intersection", "mean_midpoint"):
        raise ValueError(f"unknown method {method!r}")
    grid = grid or VoltageGrid()
    tables = tables or default_tables()
    mus = [models[st].mu for st in CellState]
    if not (mus[0] < mus[1] < mus[2] < mus[3]):
        raise ValueError("state means must be ordered ER < P1 < P2 < P3")

    flags = []
    steps = []
    for i, name in enumerate(("va", "vb", "vc")):
        midpoint = (mus[i] + mus[i + 1]) / 2.0
        if method == "mean_midpoint":
            v = midpoint
        else:
            v = _intersect(models, CellState(i), CellState(i + 1), tables)
            if v is None:
                v, flags = midpoint, flags + [name]
        steps.append(_round_to_step(v, grid))

    # Keep the ordering strict after rounding.
    steps[1] = max(steps[1], steps[0] + 1)
    steps[2] = max(steps[2], steps[1] + 1)
    return ReadRefs(*steps), flags


def _round_to_step(voltage, grid):
    ks = np.arange(1, VC_SEARCH_MAX + 1)
    return int(ks[np.argmin(np.abs(grid.value(ks) - voltage))])


def sweep_vopt(models, grid=None, tables=None):
    """Exhaustive per-boundary sweep minimizing misread mass.

    Total misread mass separates per boundary once the region order is
    fixed, so each reference is optimized independently. Serves as the
    oracle that predict_vopt is judged against.
    """
    grid = grid or VoltageGrid()
    tables = tables or default_tables()
    best = []
    for i in range(3):
        lo, hi = CellState(i), CellState(i + 1)
        ks = np.arange(1, VC_SEARCH_MAX + 1)
        vs = grid.value(ks)
        # Mass of the lower state above the boundary + upper state below.
        miss = (1.0 - state_cdf(models, lo, vs, tables)) + state_cdf(models, hi, vs, tables)
        best.append(int(ks[np.argmin(miss)]))
    best[1] = max(best[1], best[0] + 1)
    best[2] = max(best[2], best[1] + 1)
    return ReadRefs(*best)


def estimate_lifetime(dynamic, family, ecc_limit, pec_step=100, pec_max=200000,
                      method="pdf_intersection", grid=None, tables=None):
    """Smallest PEC (scanned in pec_step increments) where the RBER at the
    predicted Vopt exceeds the ECC limit. Returns (pec, exceeded)."""
    from .fitting import predict_static

    if ecc_limit <= 0:
        raise ValueError("ecc_limit must be positive")
    grid = grid or VoltageGrid()
    pec = 0
    while pec <= pec_max:
        models, _ = predict_static(dynamic, pec, family)
        refs, _ = predict_vopt(models, method, grid, tables)
        if estimate_rber(models, refs, grid, tables).total > ecc_limit:
            return pec, True
        pec += pec_step
    return pec_max, False


def llr(y, mu0, mu1, sigma):
    """AWGN log-likelihood ratio for a cell read in a known voltage bin."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return (mu1**2 - mu0**2) / (2.0 * sigma**2) + y * (mu0 - mu1) / sigma**2
