"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .background import BackgroundFoliation
from .errors import ExitedDomain, ShapeError


def check_background(bg, *require) -> BackgroundFoliation:
    if not isinstance(bg, BackgroundFoliation):
        raise TypeError(f"expected a BackgroundFoliation, got {type(bg).__name__}")
    if require:
        bg.require(*require)
    return bg


def check_graph_function(omega, bg: BackgroundFoliation, name="omega") -> np.ndarray:
    """Return ``omega`` as a float array on ``bg``'s grid, inside its range."""
    omega = np.asarray(omega, dtype=float)
    if omega.ndim == 1 and bg.grid.axisymmetric and omega.size == bg.grid.n_theta:
        omega = omega[:, None]
    if omega.shape != bg.grid.shape:
        raise ShapeError(f"{name} has shape {omega.shape}, expected {bg.grid.shape}")
    out = ~np.isfinite(omega) | (omega < bg.lam_min) | (omega > bg.lam_max)
    if out.any():
        raise ExitedDomain(np.argwhere(out), f"{name} is outside the background range at {int(out.sum())} node(s)")
    return omega
