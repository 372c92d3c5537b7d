"""Parametric degradation models for 3D MLC NAND.

Covers retention loss (the 3D retention model), P/E-cycling linear
trends, layer-to-layer variation, program interference, retention
interference, and read disturb. These evolve channel ground truth and
parameterize the controller's read-reference predictions.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import CellState, ReadRefs
from .models.cdf import StateModel, enforce_constraints

SECONDS_24_DAYS = 24 * 86400.0

# Retention-loss regression: Variable = (alpha*PEC + beta)*ln(t) +
# gamma*PEC + delta, t in seconds. The read-reference row for Va carries
# no time term (its drift is PEC-only).
RETENTION_TABLE = {
    "log_rber_msb": (5.49e-6, 0.16, 1.33e-4, -13.11),
    "log_rber_lsb": (7.92e-6, 0.25, 3.28e-5, -12.72),
    "mu_ER": (1.01e-4, 0.74, 1.52e-3, -27.27),
    "mu_P1": (-1.94e-5, -0.40, 3.51e-4, 114.47),
    "mu_P2": (-4.71e-5, -0.70, 3.23e-4, 189.58),
    "mu_P3": (-7.37e-5, -1.20, 5.75e-4, 264.85),
    "sigma_ER": (1.20e-5, -0.10, 1.63e-6, 17.01),
    "sigma_P1": (-1.34e-6, 9.83e-3, 7.55e-5, 10.20),
    "sigma_P2": (-2.12e-6, 9.85e-3, 6.69e-5, 10.65),
    "sigma_P3": (2.87e-6, 1.40e-2, 3.30e-5, 10.83),
    "va": (None, None, 1.20e-3, 60.52),
    "vb": (-3.72e-5, -0.57, 4.20e-4, 150.56),
    "vc": (-6.51e-5, -1.06, 4.81e-4, 227.24),
}


@dataclass(frozen=True)
class RetentionModel3D:
    coeffs: dict = field(default_factory=lambda: dict(RETENTION_TABLE))

    def eval(self, variable, pec, t_seconds):
        if t_seconds < 1:
            raise ValueError("retention model is defined for t >= 1 s")
        alpha, beta, gamma, delta = self.coeffs[variable]
        value = gamma * pec + delta
        if alpha is not None:
            value += (alpha * pec + beta) * math.log(t_seconds)
        return value

    def to_json(self, path):
        recs = {k: {"alpha": a, "beta": b, "gamma": g, "delta": d}
                for k, (a, b, g, d) in self.coeffs.items()}
        with open(path, "w") as fh:
            json.dump(recs, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            recs = json.load(fh)
        return cls({k: (r["alpha"], r["beta"], r["gamma"], r["delta"])
                    for k, r in recs.items()})


def retention_eval(model, variable, pec, t_seconds):
    return model.eval(variable, pec, t_seconds)


def retention_state_models(model, pec, t_seconds):
    """Gaussian state models implied by the retention regression."""
    models = {}
    for st in CellState:
        mu = model.eval(f"mu_{st.name}", pec, t_seconds)
        sigma = max(model.eval(f"sigma_{st.name}", pec, t_seconds), 1e-3)
        models[st] = StateModel("gaussian", mu, sigma)
    return enforce_constraints(models)


def retention_refs(model, pec, t_seconds):
    """Predicted optimal read references from the regression rows."""
    va = int(round(model.eval("va", pec, t_seconds)))
    vb = int(round(model.eval("vb", pec, t_seconds)))
    vc = int(round(model.eval("vc", pec, t_seconds)))
    vb = max(vb, va + 1)
    vc = max(vc, vb + 1)
    return ReadRefs(va, vb, vc)


@dataclass(frozen=True)
class PECyclingConfig:
    """Linear mean/stddev drift per 1000 P/E cycles, in voltage steps.

    Calibrated, not measured: the hardware study publishes directions
    (ER/P1 up, P2/P3 down, all sigma up, ER moving most), not slopes.
    """

    mu_slopes: tuple = (3.0, 0.6, -0.4, -0.9)
    sigma_slopes: tuple = (1.1, 0.25, 0.25, 0.3)


def pe_cycle_trend(config, pec):
    """Per-state (delta mu, delta sigma) after pec program/erase cycles."""
    if pec < 0:
        raise ValueError("pec must be non-negative")
    scale = pec / 1000.0
    return (np.asarray(config.mu_slopes) * scale,
            np.asarray(config.sigma_slopes) * scale)


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("gamma parameters must be positive")

    @property
    def mean(self):
        return self.shape * self.scale


@dataclass(frozen=True)
class OffsetShape:
    """Layer curve for read-reference offsets: flat bottom half, linear
    droop over the top half. vc never moves."""

    va_drop: float = 4.0
    vb_drop: float = 2.0


@dataclass
class LayerProfile:
    va_offset: np.ndarray  # (101,) voltage steps
    vb_offset: np.ndarray
    rber_multiplier: np.ndarray  # positive, mean ~1

    def vth_offset(self, layers, states):
        """Per-cell voltage offset realizing the per-layer Va/Vb droop.

        State offsets solve (ER+P1)/2 = va_off, (P1+P2)/2 = vb_off,
        (P2+P3)/2 = 0 with P3 pinned at 0, so the optimal Va/Vb track the
        profile while the optimal Vc stays put.
        """
        va = self.va_offset[layers]
        vb = self.vb_offset[layers]
        per_state = np.stack([2.0 * (va - vb), 2.0 * vb,
                              np.zeros_like(va), np.zeros_like(va)])
        return per_state[states, np.arange(len(states))]


def sample_layer_profile(gamma, offset_cfg=None, seed=0, n_layers=101):
    offset_cfg = offset_cfg or OffsetShape()
    rng = np.random.default_rng(seed)
    mult = rng.gamma(gamma.shape, gamma.scale, n_layers) / gamma.mean
    mult = np.maximum(mult, 1e-6)

    layers = np.arange(n_layers)
    half = n_layers // 2
    ramp = np.where(layers <= half, 0.0, (layers - half) / (n_layers - 1 - half))
    return LayerProfile(
        va_offset=-offset_cfg.va_drop * ramp,
        vb_offset=-offset_cfg.vb_drop * ramp,
        rber_multiplier=mult,
    )


def fit_gamma(samples):
    """Method-of-moments gamma fit for per-layer RBER variation."""
    x = np.asarray(samples, dtype=float)
    if x.size < 30:
        raise ValueError("need at least 30 samples")
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    mean, var = float(np.mean(x)), float(np.var(x))
    if var <= 0:
        raise ValueError("zero-variance samples cannot be gamma-fit")
    return GammaParams(shape=mean**2 / var, scale=var / mean)


# Capacitive-coupling strength by aggressor position relative to the
# victim. Next-wordline coupling dominates by ~30x.
DEFAULT_COUPLING = {"next_wl": 0.027, "prev_wl": 0.0008}


@dataclass(frozen=True)
class InterferenceModel:
    coupling: dict = field(default_factory=lambda: dict(DEFAULT_COUPLING))
    retention_offset_cap: float = 2.0

    def __post_init__(self):
        for k, v in self.coupling.items():
            if not (0.0 <= v < 1.0):
                raise ValueError(f"coupling {k} outside [0, 1)")


def program_interference(dv_aggressor, position, model=None):
    """Victim voltage shift induced by programming a neighbor."""
    model = model or InterferenceModel()
    if position not in model.coupling:
        raise ValueError(f"unknown neighbor position {position!r}")
    return model.coupling[position] * dv_aggressor


def retention_interference_offset(victim_state, neighbor_state, t_seconds,
                                  model=None):
    """Neighbor-dependent component of the victim's retention shift.

    Linear in the neighbor's state index and decreasing in it (a
    higher-voltage neighbor lowers the victim's apparent shift), anchored
    at the full table value for 24 days of retention, magnitude capped.
    """
    model = model or InterferenceModel()
    CellState(victim_state)
    n = int(CellState(neighbor_state))
    cap = model.retention_offset_cap
    base = cap * (1.5 - n) / 1.5
    scale = math.log(max(t_seconds, 1.0)) / math.log(SECONDS_24_DAYS)
    return float(np.clip(base * scale, -cap, cap))


@dataclass(frozen=True)
class ReadDisturbConfig:
    """Voltage-step shift per state after reads_ref reads of a block."""

    slopes: tuple = (8.0, 2.5, 1.5, -0.5)
    reads_ref: float = 900e3


def read_disturb_shift(read_count, config=None):
    config = config or ReadDisturbConfig()
    if read_count < 0:
        raise ValueError("read_count must be non-negative")
    return np.asarray(config.slopes) * (read_count / config.reads_ref)
