"""Hot-kernel backend selection.

The numba backend is used when importable; set ``TRAJ_ATLAS_NO_NUMBA=1`` to
force the pure NumPy fallback.  Both backends implement the same contracts
with identical results; ``benchmarks/bench_kernels.py`` compares their speed.
"""

import os


def _numba_disabled() -> bool:
    return os.environ.get("TRAJ_ATLAS_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


if _numba_disabled():
    from traj_atlas.kernels import numpy_backend as _backend
else:
    try:
        from traj_atlas.kernels import numba_backend as _backend
    except ImportError:  # numba not installed
        from traj_atlas.kernels import numpy_backend as _backend

BACKEND = _backend.NAME
rasterize = _backend.rasterize
erode = _backend.erode
dilate = _backend.dilate
thin = _backend.thin
segments_dist_sq = _backend.segments_dist_sq

__all__ = ["BACKEND", "rasterize", "erode", "dilate", "thin", "segments_dist_sq"]
