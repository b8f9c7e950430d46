"""Pick the compiled kernels when importable, else the numpy twins.

Set ``LABELBOOT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("LABELBOOT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

sample_from_masks = kernels.sample_from_masks
confusion = kernels.confusion
km_strata = kernels.km_strata
km_resample = kernels.km_resample
measures = kernels.measures
