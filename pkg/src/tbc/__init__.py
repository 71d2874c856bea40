"""Discrete transparent boundary conditions for multistep finite difference schemes."""

import os

# BLAS pools read these at load time, so they must be set before numpy is imported.
_threads = os.environ.get("TBC_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .scheme import PRESETS, SchemeDef, audit_assumptions, scheme_from_json, scheme_to_json  # noqa: E402
from .spectral import companion_M, split_spectrum, stable_projector  # noqa: E402
from .kernels import (  # noqa: E402
    KernelSeries,
    check_algebraic_constraints,
    contour_scalar_series,
    laurent_projector_series,
    scalar_kernel_recursive,
)
from .ibvp import (  # noqa: E402
    run_cauchy,
    run_halfline_transparent,
    run_interval_transparent,
    verify_transparency,
)
from .stability import (  # noqa: E402
    detect_glancing,
    resolvent_solve,
    strong_stability_probe,
    ukl_extension_check,
)
