"""Hot-kernel dispatch: compiled extension when built, numpy otherwise.

``BACKEND`` reports which one was selected; both expose the same functions
with identical contracts (see ``pykern`` docstrings).
"""

from . import pykern

try:
    from . import _ckern as _impl

    BACKEND = "cython"
except ImportError:  # extension not compiled on this install
    _impl = pykern
    BACKEND = "numpy"

gravity_window_mean = _impl.gravity_window_mean
variance_views_fields = _impl.variance_views_fields

__all__ = ["BACKEND", "gravity_window_mean", "variance_views_fields", "pykern"]
