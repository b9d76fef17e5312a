"""Backend selection for the numeric core.

A compiled extension (built from _fastcore.pyx) mirrors pybackend. Selection
happens at import: the CIRCUITKERNELS_BACKEND environment variable may be
"auto" (default: compiled when available), "python", or "compiled" (raises
if the extension is missing). Routines the extension does not support for a
given shape raise NotImplementedError internally and fall back per call.
"""

from __future__ import annotations

import os

from . import pybackend as _py

_requested = os.environ.get("CIRCUITKERNELS_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "python", "compiled"):
    raise ValueError(
        f"CIRCUITKERNELS_BACKEND must be auto, python, or compiled (got {_requested!r})"
    )

_fast = None
if _requested in ("auto", "compiled"):
    try:
        from . import _fastcore as _fast  # type: ignore[attr-defined]
    except ImportError:
        _fast = None
        if _requested == "compiled":
            raise ImportError(
                "CIRCUITKERNELS_BACKEND=compiled but the extension is not built; "
                "reinstall the package with a working C++ toolchain"
            )

backend_name = "compiled" if _fast is not None else "python"


def feedforward(kind, ch_off, ch, wt, values):
    if _fast is not None:
        try:
            return _fast.feedforward(kind, ch_off, ch, wt, values)
        except NotImplementedError:
            pass
    return _py.feedforward(kind, ch_off, ch, wt, values)


def expected_kernel_scalar(p, q, k):
    if _fast is not None:
        try:
            return _fast.expected_kernel_scalar(p, q, k)
        except NotImplementedError:
            pass
    return _py.expected_kernel_scalar(p, q, k)


def product_integral_scalar(p, g):
    if _fast is not None:
        try:
            return _fast.product_integral_scalar(p, g)
        except NotImplementedError:
            pass
    return _py.product_integral_scalar(p, g)


def clamped_ek_batch(p, k, s_vars, ev, pairs):
    if _fast is not None:
        try:
            return _fast.clamped_ek_batch(p, k, s_vars, ev, pairs)
        except NotImplementedError:
            pass
    return _py.clamped_ek_batch(p, k, s_vars, ev, pairs)
