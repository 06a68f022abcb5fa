"""Geometry of a graphical cross-section ``{s = omega(z)}`` of the null hypersurface.

All slashed operators are taken with the graph metric, which in the base
coordinates is the background metric evaluated at ``s = omega(z)``.
"""

from __future__ import annotations

import numpy as np

from .background import BackgroundFoliation, SliceData, sample_at
from .sphere import (
    contract,
    gradient,
    grad_norm_sq,
    hessian,
    laplace_beltrami,
    raise_index,
    symmetric_product,
    tensor_apply,
    trace,
)

__all__ = [
    "expansion_of",
    "graph_expansion",
    "chi_graph",
    "null_partner_coefficients",
    "graph_torsion",
    "trace_chi_graph",
]


def expansion_of(data: SliceData, omega) -> np.ndarray:
    """Half the null expansion of the graph, ``trchi_omega / 2``.

    ``-Lap omega - 2 tau(grad omega) + trchi/2 + (trchib/2 + kappa)|grad omega|^2``
    """
    data.require("trchi", "tau")
    g = data.metric
    omega = g.grid.check_scalar(omega, "omega")
    d_omega = gradient(g.grid, omega)
    return (
        -laplace_beltrami(g, omega)
        - 2.0 * contract(g, data.tau, d_omega)
        + 0.5 * data.trchi
        + (0.5 * data.trchib + data.kappa) * grad_norm_sq(g, omega)
    )


def graph_expansion(bg: BackgroundFoliation, omega) -> np.ndarray:
    """Full expansion ``trchi_omega`` of the graph ``omega`` in ``bg``."""
    return 2.0 * expansion_of(sample_at(bg, omega), omega)


def chi_graph(data: SliceData, omega) -> np.ndarray:
    """Second fundamental form of the graph along its null partner.

    Built from the full L-side tensor ``chi`` with the covariant Hessian of
    ``omega``; independent of the divergence-form Laplacian used by
    :func:`expansion_of`, so the two can cross-check each other.
    """
    data.require("chi", "tau")
    g = data.metric
    omega = g.grid.check_scalar(omega, "omega")
    d_omega = gradient(g.grid, omega)
    grad_sq = contract(g, d_omega, d_omega)
    dd = symmetric_product(d_omega, d_omega) / 2.0
    return (
        data.chi
        - 2.0 * symmetric_product(d_omega, data.tau)
        + 2.0 * data.kappa[None] * dd
        + grad_sq[None] * data.chib
        - 2.0 * hessian(g, omega)
    )


def null_partner_coefficients(data: SliceData, omega):
    """Coefficients of ``L_omega = c_L L + c_Lb Lb + V`` in the background frame.

    Returns ``(1, |grad omega|^2, V)`` with ``V = -2 grad omega`` given by its
    coordinate vector components.
    """
    g = data.metric
    omega = g.grid.check_scalar(omega, "omega")
    d_omega = gradient(g.grid, omega)
    return np.ones(g.grid.shape), contract(g, d_omega, d_omega), -2.0 * raise_index(g, d_omega)


def graph_torsion(data: SliceData, omega) -> np.ndarray:
    """Torsion one-form of the graph, ``tau - chib(., grad omega) + kappa d omega``."""
    data.require("tau")
    g = data.metric
    d_omega = gradient(g.grid, omega)
    grad_up = raise_index(g, d_omega)
    chib = data.chib
    unit = [np.zeros((2,) + g.grid.shape) for _ in range(2)]
    unit[0][0] = 1.0
    unit[1][1] = 1.0
    along = np.stack([tensor_apply(chib, unit[i], grad_up) for i in range(2)])
    return data.tau - along + data.kappa[None] * d_omega


def trace_chi_graph(data: SliceData, omega) -> np.ndarray:
    return trace(data.metric, chi_graph(data, omega))
