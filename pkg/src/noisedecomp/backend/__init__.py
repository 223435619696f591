"""Numeric kernel backend selection.

The compiled extension is preferred when importable; setting the environment
variable ``NOISEDECOMP_PURE_PYTHON=1`` forces the numpy fallback.  Either way
the module exposes the same kernel functions (see ``reference.py`` for the
contract) plus ``BACKEND_NAME`` naming the active implementation.
"""

import os

from . import reference

_FORCE_PURE = os.environ.get("NOISEDECOMP_PURE_PYTHON", "") not in ("", "0")

if not _FORCE_PURE:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = reference
else:
    _impl = reference

BACKEND_NAME = _impl.BACKEND_NAME

ACT_IDENTITY = reference.ACT_IDENTITY
ACT_RELU = reference.ACT_RELU
ACT_TANH = reference.ACT_TANH
ACT_SIGMOID = reference.ACT_SIGMOID
ACT_SOFTPLUS = reference.ACT_SOFTPLUS

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
gaussian_mixture_pdf = _impl.gaussian_mixture_pdf
mixture_fit_terms = _impl.mixture_fit_terms
kde_cdf = _impl.kde_cdf
kde_pdf = _impl.kde_pdf

# non-hot helpers shared by every backend
activate = reference.activate
activation_gradient = reference.activation_gradient
