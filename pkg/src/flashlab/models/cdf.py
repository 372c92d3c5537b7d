"""Threshold-voltage distribution families and their bin densities.

Three CDF families over the normalized voltage axis:
  gaussian        Phi(Z) from the z-table
  normal_laplace  Gaussian convolved with an asymmetric Laplace; evaluated
                  through Mills' ratio
  student_t       two-sided Student's t with separate tail weights

Each wordline carries four state distributions (ER, P1, P2, P3); ER and P1
additionally mix in a misprogram component that reuses the target state's
own parameters (ER -> P3, P1 -> P2).
"""

from dataclasses import dataclass, replace

import numpy as np

from ..grid import N_BINS, CellState, MISPROGRAM_TARGET
from .tables import default_tables

FAMILIES = ("gaussian", "normal_laplace", "student_t")

# Central-difference half-width for the Gaussian PDF used inside ncdf.
PHI_DELTA = 1e-3

# Beyond this |x| the tabulated Mills' ratio loses precision and the
# asymptotic forms take over.
_MILLS_SWITCH = 6.0

_overshoot_count = 0


def ncdf_overshoot_count():
    return _overshoot_count


def reset_ncdf_overshoot_count():
    global _overshoot_count
    _overshoot_count = 0


@dataclass(frozen=True)
class StateModel:
    """Distribution parameters for one cell state.

    alpha/beta are tail parameters: decay rates (1/voltage) for
    normal_laplace, degrees of freedom for student_t, unused for gaussian.
    lam is the misprogram probability (meaningful for ER and P1 only).
    """

    family: str
    mu: float
    sigma: float
    alpha: float | None = None
    beta: float | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must lie in [0, 1]")
        if self.family != "gaussian":
            if self.alpha is None or self.beta is None:
                raise ValueError(f"{self.family} needs alpha and beta")
            if self.alpha <= 0 or self.beta <= 0:
                raise ValueError("tail parameters must be positive")


def gcdf(v, mu, sigma, tables=None):
    """Gaussian CDF via z-table lookup."""
    tables = tables or default_tables()
    return tables.phi((np.asarray(v, dtype=float) - mu) / sigma)


def _phi_pdf(z, tables):
    """Spec'd central-difference approximation of the normal PDF."""
    return (tables.phi(z + PHI_DELTA) - tables.phi(z - PHI_DELTA)) / (2 * PHI_DELTA)


def _phi_times_mills(z, x, tables):
    """phi(z) * R(x) with R the Mills ratio (1-Phi(x))/phi(x), elementwise.

    Direct evaluation breaks down in the tails: for x > 6 the table
    difference underflows (asymptotic series instead), and for x < -6 the
    ratio overflows (the product is finite, so fold the exponentials).
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.empty(np.broadcast(z, x).shape)
    z, x = np.broadcast_arrays(z, x)

    mid = np.abs(x) <= _MILLS_SWITCH
    hi = x > _MILLS_SWITCH
    lo = x < -_MILLS_SWITCH

    if mid.any():
        xm = x[mid]
        r = (1.0 - tables.phi(xm)) / _phi_pdf(xm, tables)
        out[mid] = _phi_pdf(z[mid], tables) * r
    if hi.any():
        xh = x[hi]
        r = 1.0 / xh - 1.0 / xh**3 + 3.0 / xh**5
        out[hi] = _phi_pdf(z[hi], tables) * r
    if lo.any():
        # phi(z)/phi(x) = exp((x^2 - z^2)/2); here |z| > |x| always, so
        # the exponent is negative and the product is tiny but finite.
        out[lo] = np.exp((x[lo] ** 2 - z[lo] ** 2) / 2.0) * (1.0 - tables.phi(x[lo]))
    return out


def ncdf(v, mu, sigma, alpha, beta, tables=None):
    """Normal-Laplace CDF via Mills' ratio."""
    global _overshoot_count
    tables = tables or default_tables()
    z = (np.asarray(v, dtype=float) - mu) / sigma
    t1 = beta * _phi_times_mills(z, alpha * sigma - z, tables)
    t2 = alpha * _phi_times_mills(z, beta * sigma + z, tables)
    raw = tables.phi(z) - (t1 - t2) / (alpha + beta)
    if np.any(raw < -1e-9) or np.any(raw > 1 + 1e-9):
        _overshoot_count += 1
    return np.clip(raw, 0.0, 1.0)


def tcdf(v, mu, sigma, alpha, beta, tables=None):
    """Two-sided Student's t CDF: left half uses nu=beta, right nu=alpha."""
    tables = tables or default_tables()
    z = (np.asarray(v, dtype=float) - mu) / sigma
    left = tables.t_cdf(z, beta)
    right = tables.t_cdf(z, alpha)
    return np.where(z <= 0.0, left, right)


def component_cdf(model, v, tables=None):
    """CDF of one pure state component (no misprogram mixing)."""
    if model.family == "gaussian":
        return gcdf(v, model.mu, model.sigma, tables)
    if model.family == "normal_laplace":
        return ncdf(v, model.mu, model.sigma, model.alpha, model.beta, tables)
    return tcdf(v, model.mu, model.sigma, model.alpha, model.beta, tables)


def enforce_constraints(models):
    """Apply the reduced-parameter constraints to a 4-state model dict.

    lambda is zeroed for P2/P3; ER's tails are tied (beta := alpha) and
    P3's likewise (alpha := beta).
    """
    out = dict(models)
    er, p3 = out[CellState.ER], out[CellState.P3]
    if er.family != "gaussian":
        out[CellState.ER] = replace(er, beta=er.alpha)
        out[CellState.P3] = replace(p3, alpha=p3.beta)
    out[CellState.P2] = replace(out[CellState.P2], lam=0.0)
    out[CellState.P3] = replace(out[CellState.P3], lam=0.0)
    return out


def state_cdf(models, state, v, tables=None):
    """Mixture CDF for an intended state, including misprogram mass."""
    m = models[state]
    own = component_cdf(m, v, tables)
    if m.lam == 0.0 or state not in MISPROGRAM_TARGET:
        return own
    tgt = models[MISPROGRAM_TARGET[state]]
    return (1.0 - m.lam) * own + m.lam * component_cdf(tgt, v, tables)


def model_density(models, grid, tables=None):
    """Per-state bin probability masses, shape (4, 304).

    Bin k mass is the mixture-CDF difference across the bin; mass beyond
    the grid accrues to bins 0 and 303, so each row sums to exactly 1.
    """
    b = grid.boundaries()
    out = np.empty((4, N_BINS))
    for state in CellState:
        c = state_cdf(models, state, b, tables)
        out[state] = np.diff(np.concatenate(([0.0], c, [1.0])))
    return out


def kl_divergence(p, q, eps=1e-12):
    """KL(P || Q) in nats over matching bins; Q floored at eps."""
    p = np.asarray(p, dtype=float)
    q = np.maximum(np.asarray(q, dtype=float), eps)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def pooled_kl(measured, modeled, eps=1e-12):
    """Mean per-state KL across the four states (equal weights)."""
    return float(np.mean([kl_divergence(measured[s], modeled[s], eps) for s in range(4)]))
