"""Interpolation and quadrature along the generator direction (uniform grids)."""

from __future__ import annotations

import numpy as np

SNAP = 1e-10


def check_uniform(x, name="grid") -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 4:
        raise ValueError(f"{name} must be 1-D with at least 4 points")
    dx = np.diff(x)
    h = (x[-1] - x[0]) / (x.size - 1)
    if h <= 0 or np.abs(dx - h).max() > 1e-9 * max(1.0, abs(h)):
        raise ValueError(f"{name} must be uniform and increasing")
    return float(x[0]), float(h)


def stencil(x0, h, n, points, kind="cubic"):
    """Return ``(index, weights)`` for interpolating at ``points``.

    ``index`` has the shape of ``points`` and is the first node of the
    stencil; ``weights`` has shape ``(4,) + points.shape`` (cubic) or
    ``(2,) + points.shape`` (linear). A point that coincides with a node to
    within ``SNAP`` cells gets the exact nodal value.
    """
    u = (np.asarray(points, dtype=float) - x0) / h
    near = np.rint(u)
    u = np.where(np.abs(u - near) < SNAP, near, u)
    if kind == "linear":
        i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
        t = u - i
        return i, np.stack([1.0 - t, t])
    if kind != "cubic":
        raise ValueError(f"unknown interpolation kind {kind!r}")
    i = np.clip(np.floor(u).astype(np.int64), 1, n - 3)
    t = u - i
    w = np.stack(
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ]
    )
    return i - 1, w


def interp_columns(table, x0, h, points, kind="cubic"):
    """Interpolate ``table[:, node, ...]`` at one abscissa per node.

    ``table`` has shape ``(n, N, ...)`` and ``points`` shape ``(N,)``; the
    result has shape ``(N, ...)``.
    """
    n, npts = table.shape[0], table.shape[1]
    start, w = stencil(x0, h, n, points, kind)
    cols = np.arange(npts)
    out = np.zeros(table.shape[1:])
    extra = (slice(None),) + (None,) * (table.ndim - 2)
    for k in range(w.shape[0]):
        out += w[k][extra] * table[start + k, cols]
    return out


def interp_along(table, x0, h, x, kind="cubic"):
    """Interpolate a table ``(n, ...)`` at a single abscissa ``x``."""
    start, w = stencil(x0, h, table.shape[0], np.asarray([x]), kind)
    return sum(w[k, 0] * table[start[0] + k] for k in range(w.shape[0]))


def cumulative_quad(f, h, axis=0):
    """Fourth-order cumulative integral of samples on a uniform grid.

    Each cell is integrated exactly for the cubic through the four nearest
    samples (one-sided stencils in the first and last cells). Returns an array
    of the same shape with a zero first entry along ``axis``.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 4:
        raise ValueError("need at least 4 samples for fourth-order quadrature")
    cells = np.empty((n - 1,) + f.shape[1:])
    cells[1:-1] = (-f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:]) / 24.0
    cells[0] = (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0
    cells[-1] = (9.0 * f[-1] + 19.0 * f[-2] - 5.0 * f[-3] + f[-4]) / 24.0
    out = np.zeros_like(f)
    out[1:] = np.cumsum(cells, axis=0) * h
    return np.moveaxis(out, 0, axis)


def derivative(f, h, axis=0):
    """Fourth-order finite-difference derivative on a uniform grid."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples for a fourth-order derivative")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    d[-1] = -(-25.0 * f[-1] + 48.0 * f[-2] - 36.0 * f[-3] + 16.0 * f[-4] - 3.0 * f[-5]) / (12.0 * h)
    d[-2] = -(-3.0 * f[-1] - 10.0 * f[-2] + 18.0 * f[-3] - 6.0 * f[-4] + f[-5]) / (12.0 * h)
    return np.moveaxis(d, 0, axis)
