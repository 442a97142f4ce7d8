"""Hot numerical kernels with compiled/pure-python selection at import.

The compiled Cython extension is preferred; the numpy fallback implements
the same functions with identical semantics. Set FLOWREC_PURE_PYTHON=1 to
force the fallback (used by the benchmark and for debugging).
"""

import os

from . import _ref

if os.environ.get("FLOWREC_PURE_PYTHON"):
    _impl = _ref
    HAVE_COMPILED = False
else:
    try:
        from . import _fast as _impl

        HAVE_COMPILED = True
    except ImportError:
        _impl = _ref
        HAVE_COMPILED = False

IMPLEMENTATION = "compiled" if HAVE_COMPILED else "python"

rasterize_fractions = _impl.rasterize_fractions
heaviside_means = _impl.heaviside_means
heaviside_means_jacobian = _impl.heaviside_means_jacobian
design_sums = _impl.design_sums
