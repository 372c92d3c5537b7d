"""Unified self-recovery and temperature model (URT).

Y(output) = Y0 + dY where Y0 comes from the program-variation model (PVM,
bilinear in programming temperature and PEC) and dY from the self-recovery
and retention model (SRRM, logarithmic in effective retention time,
damped by effective dwell time). Effective times are real times scaled by
the Arrhenius acceleration factor.

Orientation: af(T) >= 1 above room temperature and
effective time = real time * af(T).
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .models.simplex import nelder_mead

KB_EV_PER_K = 8.62e-5  # Boltzmann constant
DEFAULT_EA_EV = 1.04
DEFAULT_T_ROOM_K = 293.15
DEFAULT_DWELL_S = 0.5

N_LOG_LEVELS = 26
LOG_BASE_SECONDS = 0.5


@dataclass(frozen=True)
class URTParams:
    """pvm: output -> (A, B, C, D); srrm: output -> (a, b, c, t0).

    Temperatures are Kelvin throughout.
    """

    pvm: dict
    srrm: dict
    ea: float = DEFAULT_EA_EV
    t_room: float = DEFAULT_T_ROOM_K

    def __post_init__(self):
        if self.ea <= 0:
            raise ValueError("activation energy must be positive")
        for out, (a, b, c, t0) in self.srrm.items():
            if t0 <= 0:
                raise ValueError(f"srrm t0 must be positive ({out})")


def af(t_kelvin, params):
    """Arrhenius acceleration factor relative to room temperature."""
    if np.any(np.asarray(t_kelvin) <= 0):
        raise ValueError("temperature must be positive Kelvin")
    return np.exp((params.ea / KB_EV_PER_K) * (1.0 / params.t_room - 1.0 / np.asarray(t_kelvin)))


def fit_ea(samples, t_ref, temp_ref):
    """Activation energy from equivalent-time observations.

    samples: (t1, T1) pairs, each equivalent to t_ref seconds at temp_ref.
    Least squares through the origin of ln(t1/t_ref) vs (1/T1 - 1/t_ref's
    temperature); a single pair reduces to the closed-form inversion.
    """
    xs, ys = [], []
    for t1, temp1 in samples:
        if abs(temp1 - temp_ref) < 1e-9:
            continue
        xs.append(1.0 / temp1 - 1.0 / temp_ref)
        ys.append(math.log(t1 / t_ref))
    if not xs:
        raise ValueError("need at least one sample at a distinct temperature")
    xs, ys = np.asarray(xs), np.asarray(ys)
    return KB_EV_PER_K * float(np.dot(xs, ys) / np.dot(xs, xs))


def pvm_predict(params, t_p_kelvin, pec, output):
    a, b, c, d = params.pvm[output]
    return a * t_p_kelvin * pec + b * t_p_kelvin + c * pec + d


def fit_pvm(rows):
    """Least-squares (A,B,C,D) from (t_p, pec, y) rows."""
    rows = np.asarray(rows, dtype=float)
    tp, pec, y = rows[:, 0], rows[:, 1], rows[:, 2]
    design = np.column_stack([tp * pec, tp, pec, np.ones_like(tp)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return tuple(float(v) for v in coef)


def srrm_delta(params, t_er, t_ed, pec, output):
    a, b, c, t0 = params.srrm[output]
    if t_er < 0 or t_ed < 0:
        raise ValueError("effective times must be non-negative")
    return b * (pec + c) * math.log(1.0 + t_er / (t0 + a * t_ed))


def fit_srrm(rows, init=(0.1, 1e-3, 100.0, 1.0)):
    """Fit (a, b, c, t0) to (t_er, t_ed, pec, y) rows by MSE."""
    rows = np.asarray(rows, dtype=float)
    t_er, t_ed, pec, y = rows.T

    def unpack(v):
        return math.exp(v[0]), v[1], v[2], math.exp(v[3])

    def mse(v):
        a, b, c, t0 = unpack(v)
        pred = b * (pec + c) * np.log(1.0 + t_er / (t0 + a * t_ed))
        return float(np.mean((pred - y) ** 2))

    x0 = np.array([math.log(init[0]), init[1], init[2], math.log(init[3])])
    x, _, _, _ = nelder_mead(mse, x0, tol=1e-12, max_iter=4000)
    x, _, _, _ = nelder_mead(mse, x, tol=1e-12, max_iter=4000)
    return unpack(x)


def urt_predict(params, output, pec, t_p_kelvin, t_r, t_d, af_r=1.0, af_d=1.0):
    """Full unified prediction with effective retention/dwell times."""
    y0 = pvm_predict(params, t_p_kelvin, pec, output)
    return y0 + srrm_delta(params, t_r * af_r, t_d * af_d, pec, output)


class AccelLog:
    """Logarithmic history of temperature-accelerated time.

    Level k spans 0.5 * 2^k real seconds; 26 levels cover about a year.
    A binary-counter cascade keeps one partial accumulator at level 0 and,
    per level, the current (pending) and previous (last completed) chunk:
    at most 52 stored reals. Two completions of level k-1 rebuild level k.
    """

    def __init__(self, n_levels=N_LOG_LEVELS, base_seconds=LOG_BASE_SECONDS):
        self.n_levels = n_levels
        self.base = base_seconds
        self.cur = np.zeros(n_levels)
        self.prev = np.zeros(n_levels)
        self.pending = np.zeros(n_levels, dtype=np.int8)
        self.level0_real = 0.0
        self.elapsed = 0.0
        self.clamped = False

    def update(self, af_value, tick_seconds):
        """Accumulate af * dt, cascading completed chunks upward."""
        remaining = float(tick_seconds)
        while remaining > 1e-12:
            room = self.base - self.level0_real
            dt = min(remaining, room)
            self.cur[0] += af_value * dt
            self.level0_real += dt
            self.elapsed += dt
            remaining -= dt
            if self.level0_real >= self.base - 1e-12:
                self._complete(0)
                self.level0_real = 0.0

    def _complete(self, k):
        value = self.cur[k]
        self.prev[k] = value
        self.cur[k] = 0.0
        self.pending[k] = 0
        if k + 1 < self.n_levels:
            self.cur[k + 1] += value
            self.pending[k + 1] += 1
            if self.pending[k + 1] == 2:
                self._complete(k + 1)

    def effective_time(self, window_seconds):
        """Effective seconds accumulated over the last window_seconds.

        The level-k previous chunk always covers [T_k - c_k, T_k], where
        c_k = 0.5 * 2^k and T_k (its completion time) is derivable from
        the number n of level-0 completions: T_k = c_k * floor(n / 2^k).
        The walk descends from the newest data (the level-0 partial) into
        ever older, ever coarser chunks, subtracting value already counted
        where chunk intervals nest, and pro-rates the final straddling
        chunk. Resolution at age a is therefore about a/2, the price of
        the 52-real footprint.
        """
        window = float(window_seconds)
        if window > self.elapsed + 1e-9:
            self.clamped = True
            window = self.elapsed
        target = self.elapsed - window

        r0 = self.level0_real
        p = self.elapsed - r0
        if target >= p:  # window lies inside the partial chunk
            return self.cur[0] * (self.elapsed - target) / r0 if r0 > 0 else 0.0
        total = self.cur[0]
        n = int(round(p / self.base))
        segs = []  # consumed (lo, hi, value), chunk-aligned and disjoint

        for k in range(self.n_levels):
            c_k = self.base * 2**k
            nk = n >> k
            if nk < 1:
                break
            t_k = c_k * nk
            lo_k = t_k - c_k
            if lo_k >= p - 1e-12:
                continue  # chunk already fully counted
            # Chunk intervals are aligned, so prior consumed chunks either
            # nest inside this one or are disjoint from it. Keeping segs
            # maximal (nested ones replaced by their parent) makes the
            # already-counted sum exact.
            counted = sum(v for lo, hi, v in segs
                          if lo >= lo_k - 1e-9 and hi <= t_k + 1e-9)
            avail_value = max(self.prev[k] - counted, 0.0)
            avail_span = p - lo_k
            if target <= lo_k + 1e-12:
                total += avail_value
                segs = [s for s in segs
                        if not (s[0] >= lo_k - 1e-9 and s[1] <= t_k + 1e-9)]
                segs.append((lo_k, t_k, self.prev[k]))
                p = lo_k
                if p <= target + 1e-12:
                    return total
            else:
                return total + avail_value * (p - target) / avail_span
        self.clamped = True
        return total


class DwellTracker:
    """Tracks full-drive-write cadence to estimate per-cell dwell time."""

    def __init__(self, drive_bytes, window=20):
        self.drive_bytes = float(drive_bytes)
        self.window = window
        self.bytes_acc = 0.0
        self.stamps = []

    def record_write(self, n_bytes, now):
        self.bytes_acc += n_bytes
        while self.bytes_acc >= self.drive_bytes:
            self.bytes_acc -= self.drive_bytes
            self.stamps.append(now)
            if len(self.stamps) > self.window:
                self.stamps.pop(0)

    def dwell_effective(self, now, accel_log=None, default=DEFAULT_DWELL_S):
        if not self.stamps:
            return default
        span = max(now - self.stamps[0], 0.0)
        count = len(self.stamps)
        if accel_log is not None:
            span = accel_log.effective_time(span)
        return span / count if span > 0 else default


@dataclass(frozen=True)
class TempTrace:
    """Daily sinusoid plus Gaussian noise, deterministic per (seed, t)."""

    mean_c: float = 35.0
    amplitude_c: float = 15.0
    period_s: float = 86400.0
    noise_sigma_c: float = 3.0
    seed: int = 0


def temp_generate(cfg, t_seconds):
    base = cfg.mean_c + cfg.amplitude_c * math.sin(2.0 * math.pi * t_seconds / cfg.period_s)
    if cfg.noise_sigma_c > 0:
        rng = np.random.default_rng([cfg.seed, int(round(t_seconds * 1000.0)) & 0x7FFFFFFF])
        base += cfg.noise_sigma_c * rng.standard_normal()
    return base


def celsius_to_kelvin(c):
    return c + 273.15


# --- calibration pack -------------------------------------------------

URT_OUTPUTS = ("mu_ER", "mu_P1", "mu_P2", "mu_P3",
               "sigma_ER", "sigma_P1", "sigma_P2", "sigma_P3",
               "va", "vb", "vc", "log_rber_msb", "log_rber_lsb")


def calibration_pack_from_retention(retention_model, ea=DEFAULT_EA_EV,
                                    t_room=DEFAULT_T_ROOM_K, srrm_a=0.1):
    """Derive URT coefficients from the retention regression.

    Chosen so that at room temperature with negligible dwell the URT
    reduces to the retention regression for t >> 1 s: PVM carries the
    (gamma*PEC + delta) part, SRRM the (alpha*PEC + beta)*ln(t) part via
    b = alpha, c = beta/alpha, t0 = 1.
    """
    pvm, srrm = {}, {}
    for out in URT_OUTPUTS:
        alpha, beta, gamma, delta = retention_model.coeffs[out]
        pvm[out] = (0.0, 0.0, gamma, delta)
        if alpha is None or alpha == 0.0:
            srrm[out] = (srrm_a, 0.0, 0.0, 1.0)
        else:
            srrm[out] = (srrm_a, alpha, beta / alpha, 1.0)
    return URTParams(pvm=pvm, srrm=srrm, ea=ea, t_room=t_room)


def fine_tune(params, observations):
    """Online recalibration from sampled wordline observations.

    observations: rows (output, pec, t_p, t_r_eff, t_d_eff, y_true).
    Refits each output's PVM intercept D by least squares on the
    residuals (the cheap, always-well-posed correction).
    """
    residuals = {}
    for out, pec, t_p, t_r, t_d, y in observations:
        pred = pvm_predict(params, t_p, pec, out) + srrm_delta(params, t_r, t_d, pec, out)
        residuals.setdefault(out, []).append(y - pred)
    pvm = dict(params.pvm)
    for out, res in residuals.items():
        a, b, c, d = pvm[out]
        pvm[out] = (a, b, c, d + float(np.mean(res)))
    return replace(params, pvm=pvm)


def save_calibration_json(params, path):
    rec = {
        "ea": params.ea,
        "t_room": params.t_room,
        "pvm": {k: list(v) for k, v in params.pvm.items()},
        "srrm": {k: list(v) for k, v in params.srrm.items()},
    }
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)


def load_calibration_json(path):
    with open(path) as fh:
        rec = json.load(fh)
    return URTParams(
        pvm={k: tuple(v) for k, v in rec["pvm"].items()},
        srrm={k: tuple(v) for k, v in rec["srrm"].items()},
        ea=rec["ea"],
        t_room=rec["t_room"],
    )
