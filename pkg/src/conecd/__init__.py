"""Numerical laboratory for curvature-dimension conditions on metric measure cones."""

import os

__version__ = "0.1.0"

# CONECD_THREADS caps BLAS/OpenMP parallelism; it only takes effect when set
# before numpy is first imported in the process
_threads = os.environ.get("CONECD_THREADS")
if _threads and _threads.strip().isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads.strip())
