"""Nelder-Mead simplex minimizer.

Written in-house because the fitting pipeline needs tight control over
termination (simplex diameter) and deterministic behavior across runs.
Standard coefficients: reflection 1, expansion 2, contraction 0.5,
shrink 0.5.
"""

import numpy as np

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


class NanObjective(RuntimeError):
    """Raised when the objective returns NaN during optimization."""


def _eval(objective, x):
    f = float(objective(x))
    if np.isnan(f):
        raise NanObjective(f"objective returned NaN at x={x!r}")
    return f


def nelder_mead(objective, x0, tol=1e-8, max_iter=1000, initial_step=None):
    """Minimize objective from x0.

    Returns (x_best, f_best, iterations, converged). Convergence means the
    simplex diameter (max vertex distance from the best vertex, inf-norm)
    fell below tol within max_iter iterations.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if initial_step is None:
        initial_step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.05)
    else:
        initial_step = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))

    verts = np.tile(x0, (n + 1, 1))
    for i in range(n):
        verts[i + 1, i] += initial_step[i]
    fvals = np.array([_eval(objective, v) for v in verts])

    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(fvals, kind="stable")
        verts, fvals = verts[order], fvals[order]
        diameter = np.max(np.abs(verts[1:] - verts[0]))
        if diameter < tol:
            converged = True
            break
        iterations += 1

        centroid = verts[:-1].mean(axis=0)
        xr = centroid + REFLECT * (centroid - verts[-1])
        fr = _eval(objective, xr)
        if fr < fvals[0]:
            xe = centroid + EXPAND * (centroid - verts[-1])
            fe = _eval(objective, xe)
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + CONTRACT * (xr - centroid)
            else:
                xc = centroid + CONTRACT * (verts[-1] - centroid)
            fc = _eval(objective, xc)
            if fc < min(fr, fvals[-1]):
                verts[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    verts[i] = verts[0] + SHRINK * (verts[i] - verts[0])
                    fvals[i] = _eval(objective, verts[i])

    best = int(np.argmin(fvals))
    return verts[best].copy(), float(fvals[best]), iterations, converged
