"""nullflow: mean curvature flow of cross-sections of null hypersurfaces.

Graphs ``s = omega(z)`` over a background foliation are flowed by
``d omega / dt = -trchi_omega / 2`` until a marginally outer trapped surface
is reached. The package also builds the rescaled generator gauge, checks the
gauge and energy inequalities, and glues the flow's leaves to the outer
foliation.
"""

import os as _os

__version__ = "0.1.0"

# NULLFLOW_THREADS caps the worker threads of the numeric backends; it has to
# be applied before numpy/numba are first imported.
_threads = _os.environ.get("NULLFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        _os.environ[_var] = _threads

from .background import (  # noqa: E402
    BackgroundFoliation,
    MinkowskiCone,
    RaychaudhuriPropagator,
    SchwarzschildCone,
    ShearFreeCustom,
    build_analytic,
    raychaudhuri_propagate,
    sample_at,
)
from .errors import *  # noqa: E402,F401,F403
from .flow import FlowConfig, MeanCurvatureFlow, run_to_mots, step  # noqa: E402
from .foliation import FoliationGluer, mollify_glue, verify_foliation  # noqa: E402
from .gauge import (  # noqa: E402
    GaugeBuilder,
    check_energy_condition,
    check_gauge_condition,
    construct_gauge,
    reparametrize,
)
from .graph import chi_graph, expansion_of, graph_expansion, null_partner_coefficients  # noqa: E402
from .sphere import MetricField, SphereGrid, laplace_beltrami, round_metric  # noqa: E402

__all__ = [
    "BackgroundFoliation",
    "MinkowskiCone",
    "RaychaudhuriPropagator",
    "SchwarzschildCone",
    "ShearFreeCustom",
    "build_analytic",
    "raychaudhuri_propagate",
    "sample_at",
    "FlowConfig",
    "MeanCurvatureFlow",
    "run_to_mots",
    "step",
    "FoliationGluer",
    "mollify_glue",
    "verify_foliation",
    "GaugeBuilder",
    "check_energy_condition",
    "check_gauge_condition",
    "construct_gauge",
    "reparametrize",
    "chi_graph",
    "expansion_of",
    "graph_expansion",
    "null_partner_coefficients",
    "MetricField",
    "SphereGrid",
    "laplace_beltrami",
    "round_metric",
]
