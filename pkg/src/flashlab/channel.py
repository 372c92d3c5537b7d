"""Synthetic voltage-domain flash channel.

Holds ground-truth cells (intended state + continuous threshold voltage),
applies distribution shifts, performs reads at arbitrary reference
voltages, and measures raw bit error rates against ground truth.

Continuous vth is kept even though hardware observes only 304 bins;
binning is a view, so degradation models can act in voltage space before
quantization. ER-state vth may be negative; the comparator and the binning
still handle it (such cells land in bin 0).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    LSB_OF_STATE,
    MISPROGRAM_TARGET,
    MSB_OF_STATE,
    N_BINS,
    CellState,
    VoltageGrid,
    classify_regions,
)
from .models.cdf import StateModel  # noqa: F401  (re-export for callers)
from .models.tables import default_tables

TRANSITION_KEYS = ("ER-P1", "P1-P2", "P2-P3", "multi")


@dataclass(frozen=True)
class ReadNoise:
    """Comparator noise: flip probability decays exponentially with the
    distance between the reference and the cell's threshold voltage."""

    p0: float = 0.01
    d: float = 3.0

    def flip_probability(self, vth, vref):
        return self.p0 * np.exp(-np.abs(vref - np.asarray(vth, dtype=float)) / self.d)


@dataclass
class ChannelState:
    """Ground truth for a population of cells.

    true_state is the intended state; shape_state is the state whose
    distribution the cell's vth was actually drawn from (differs from
    true_state only for misprogrammed cells). mu_ref/sigma_ref track the
    current location/scale of each state distribution so shifts can widen
    while preserving each cell's quantile.
    """

    grid: VoltageGrid
    true_state: np.ndarray
    shape_state: np.ndarray
    vth: np.ndarray
    layer: np.ndarray
    wl_neighbor_state: np.ndarray
    mu_ref: np.ndarray
    sigma_ref: np.ndarray
    seed: int = 0

    @property
    def n_cells(self):
        return self.vth.size


@dataclass
class BinHistogram:
    counts: np.ndarray  # (4, 304) int64
    grid: VoltageGrid

    def densities(self):
        totals = self.counts.sum(axis=1, keepdims=True).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = self.counts / totals
        return np.where(totals > 0, d, 0.0)


@dataclass
class RBERReport:
    total: float
    msb: float
    lsb: float
    transitions: dict = field(default_factory=dict)
    n_cells: int = 0


def _sample_component(model, n, rng, tables):
    """Draw n threshold voltages from one pure state distribution."""
    if model.family == "gaussian":
        return rng.normal(model.mu, model.sigma, n)
    if model.family == "student_t":
        u = rng.random(n)
        z = np.where(
            u <= 0.5,
            tables.t_quantile(u, model.beta),
            tables.t_quantile(u, model.alpha),
        )
        return model.mu + model.sigma * z
    # normal_laplace: Gaussian core plus an asymmetric Laplace component.
    base = rng.normal(model.mu, model.sigma, n)
    right = rng.random(n) < model.beta / (model.alpha + model.beta)
    w = np.where(
        right,
        rng.exponential(1.0 / model.alpha, n),
        -rng.exponential(1.0 / model.beta, n),
    )
    return base + w


def sample_page(models, n_cells, layer_profile=None, seed=0, grid=None,
                neighbor_states=False, tables=None):
    """Sample a cell population from a 4-state model.

    Intended states are assigned in equal quarters. Each ER/P1 cell is
    misprogrammed into its target state (ER->P3, P1->P2) with probability
    lambda, in which case its vth comes from the target's distribution.
    """
    if n_cells <= 0:
        raise ValueError("n_cells must be positive")
    grid = grid or VoltageGrid()
    tables = tables or default_tables()
    rng = np.random.default_rng(seed)

    true_state = (np.arange(n_cells) % 4).astype(np.int8)
    shape_state = true_state.copy()
    for st, tgt in MISPROGRAM_TARGET.items():
        lam = models[st].lam
        if lam > 0.0:
            idx = np.flatnonzero(true_state == st)
            flip = rng.random(idx.size) < lam
            shape_state[idx[flip]] = tgt

    vth = np.empty(n_cells)
    for st in CellState:
        idx = np.flatnonzero(shape_state == st)
        if idx.size:
            vth[idx] = _sample_component(models[st], idx.size, rng, tables)

    layer = rng.integers(0, 101, n_cells).astype(np.int16)
    if neighbor_states:
        nbr = rng.integers(0, 4, n_cells).astype(np.int8)
    else:
        nbr = np.full(n_cells, -1, dtype=np.int8)

    if layer_profile is not None:
        vth += layer_profile.vth_offset(layer, shape_state)

    mu_ref = np.array([models[CellState(s)].mu for s in range(4)])
    sigma_ref = np.array([models[CellState(s)].sigma for s in range(4)])
    return ChannelState(grid, true_state, shape_state, vth, layer, nbr,
                        mu_ref, sigma_ref, seed)


def read_cell(vth, vref, noise=None, rng=None):
    """Comparator read: 1 iff vth < vref, optionally flipped by noise."""
    bit = (np.asarray(vth, dtype=float) < vref).astype(np.int8)
    if noise is not None:
        rng = rng or np.random.default_rng()
        flips = rng.random(bit.shape) < noise.flip_probability(vth, vref)
        bit = bit ^ flips
    return bit


def read_page(state, refs, page, noise=None, rng=None):
    """Read the LSB or MSB page of the population.

    LSB needs one comparison (vb). MSB needs two (va and vc): the bit is 1
    when the cell lies below va (ER) or at/above vc (P3). Noise, when
    enabled, applies independently per comparison.
    """
    va, vb, vc = refs.voltages(state.grid)
    if page == "lsb":
        return read_cell(state.vth, vb, noise, rng)
    if page != "msb":
        raise ValueError("page must be 'lsb' or 'msb'")
    below_va = read_cell(state.vth, va, noise, rng)
    below_vc = read_cell(state.vth, vc, noise, rng)
    return (below_va | (1 - below_vc)).astype(np.int8)


def decode_states(state, refs, noise=None, rng=None):
    """Full decode of every cell into a state index via both pages."""
    if noise is None:
        return classify_regions(state.vth, state.grid, refs)
    msb = read_page(state, refs, "msb", noise, rng)
    lsb = read_page(state, refs, "lsb", noise, rng)
    # Gray decode: (1,1)->ER, (0,1)->P1, (0,0)->P2, (1,0)->P3
    return np.select(
        [(msb == 1) & (lsb == 1), (msb == 0) & (lsb == 1), (msb == 0) & (lsb == 0)],
        [0, 1, 2],
        default=3,
    ).astype(np.int8)


def measure_rber(state, refs, noise=None, rng=None):
    """Compare decoded states against ground truth."""
    decoded = decode_states(state, refs, noise, rng)
    true = state.true_state
    n = state.n_cells
    msb_err = int(np.sum(MSB_OF_STATE[decoded] != MSB_OF_STATE[true]))
    lsb_err = int(np.sum(LSB_OF_STATE[decoded] != LSB_OF_STATE[true]))

    diff = decoded.astype(int) - true.astype(int)
    wrong = diff != 0
    lo = np.minimum(decoded, true)
    trans = {k: 0 for k in TRANSITION_KEYS}
    adjacent = wrong & (np.abs(diff) == 1)
    for pair, key in ((0, "ER-P1"), (1, "P1-P2"), (2, "P2-P3")):
        trans[key] = int(np.sum(adjacent & (lo == pair)))
    trans["multi"] = int(np.sum(wrong & (np.abs(diff) > 1)))

    return RBERReport(
        total=(msb_err + lsb_err) / (2 * n),
        msb=msb_err / n,
        lsb=lsb_err / n,
        transitions=trans,
        n_cells=n,
    )


def bin_cells(state):
    """Histogram the population into the 304 voltage bins, per state."""
    bins = state.grid.bin_of(state.vth)
    counts = np.zeros((4, N_BINS), dtype=np.int64)
    for st in range(4):
        sel = state.true_state == st
        if sel.any():
            counts[st] = np.bincount(bins[sel], minlength=N_BINS)
    return BinHistogram(counts=counts, grid=state.grid)


def apply_shift(state, dmu, dsigma=None):
    """Shift and widen each state distribution in place.

    dmu/dsigma map state index -> delta (dict, sequence, or scalar).
    Widening rescales each cell about its distribution's current mean, so
    per-cell quantiles are preserved and pure mean shifts compose exactly.
    """
    dmu = _per_state(dmu)
    dsig = _per_state(dsigma) if dsigma is not None else np.zeros(4)
    new_sigma = state.sigma_ref + dsig
    if np.any(new_sigma <= 0):
        raise ValueError("shift would make a state's sigma non-positive")
    for st in range(4):
        sel = state.shape_state == st
        if not sel.any():
            continue
        mu, sg = state.mu_ref[st], state.sigma_ref[st]
        state.vth[sel] = mu + dmu[st] + (state.vth[sel] - mu) * (new_sigma[st] / sg)
    state.mu_ref += dmu
    state.sigma_ref = new_sigma
    return state


def _per_state(spec):
    if spec is None:
        return np.zeros(4)
    if np.isscalar(spec):
        return np.full(4, float(spec))
    if isinstance(spec, dict):
        return np.array([float(spec.get(CellState(s), spec.get(s, 0.0))) for s in range(4)])
    return np.asarray(spec, dtype=float)


def export_cells_csv(state, path):
    bins = state.grid.bin_of(state.vth)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "vth", "layer", "bin"])
        for i in range(state.n_cells):
            w.writerow([CellState(state.true_state[i]).name,
                        f"{state.vth[i]:.6f}", int(state.layer[i]), int(bins[i])])


def export_histogram_csv(hist, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "bin", "count"])
        for st in range(4):
            for b in range(N_BINS):
                w.writerow([CellState(st).name, b, int(hist.counts[st, b])])
