"""Thin wrapper over QUADPACK adaptive Gauss-Kronrod integration.

Every call returns the value with its error estimate and fails loudly when
the estimate exceeds the requested relative tolerance.
"""

from __future__ import annotations

import math
import warnings

from scipy import integrate

from .errors import QuadratureFailure


def quad(func, a: float, b: float, rel: float = 1e-10, abs_: float = 0.0,
         limit: int = 400, points=None, reject: float = 1e-6) -> tuple[float, float]:
    """Integrate ``func`` on ``[a, b]``; returns ``(value, error_estimate)``.

    Raises :class:`QuadratureFailure` when the error estimate is larger than
    ``reject`` times ``|value|`` (and larger than ``abs_``).
    """
    kw = {"epsrel": rel, "epsabs": abs_, "limit": limit}
    if points is not None and math.isfinite(b):
        kw["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, **kw)
    if not math.isfinite(val) or err > max(reject * abs(val), abs_, 1e-300):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] returned {val:.6g} +- {err:.3g}", remainder=err)
    return float(val), float(err)
