"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting
``TRIPLET_NN_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("TRIPLET_NN_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback

euclid_dists = _impl.euclid_dists
hamming_dists = _impl.hamming_dists
closer_mask_euclid = _impl.closer_mask_euclid
nearest_euclid = _impl.nearest_euclid
expansion_ratio_sorted = _impl.expansion_ratio_sorted
expansion_rates_euclid = _impl.expansion_rates_euclid

__all__ = [
    "BACKEND",
    "euclid_dists",
    "hamming_dists",
    "closer_mask_euclid",
    "nearest_euclid",
    "expansion_ratio_sorted",
    "expansion_rates_euclid",
]
