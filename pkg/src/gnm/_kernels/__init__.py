"""Numeric kernels with a compiled core and a pure-Python fallback.

The compiled extension (``_ckernels``, Cython) is preferred when it imported
cleanly; otherwise the pure-Python module is used.  Both implement the same
flat-buffer API with identical per-element accumulation order, so switching
backends never changes results.  Selection honours the ``GNM_BACKEND``
environment variable (``auto``, ``c`` or ``py``) and can be changed at
runtime with :func:`use`.
"""

import os

from ..errors import GnmError
from . import _pykernels

_compiled = None
if os.environ.get("GNM_BACKEND", "auto") != "py":
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

_active = _compiled if _compiled is not None else _pykernels


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "c")
    return tuple(names)


def active_backend():
    return _active.BACKEND_NAME


def use(name):
    """Switch the active backend ('c' or 'py'/'python')."""
    global _active
    if name in ("py", "python"):
        _active = _pykernels
    elif name == "c":
        if _compiled is None:
            raise GnmError("compiled kernel backend is not available")
        _active = _compiled
    else:
        raise GnmError(f"unknown kernel backend {name!r}")
    return _active.BACKEND_NAME


def matmul(a, b, out, m, k, n):
    _active.matmul(a, b, out, m, k, n)


def matmul_at_b(a, b, out, k, m, n):
    _active.matmul_at_b(a, b, out, k, m, n)


def matmul_a_bt(a, b, out, m, k, n):
    _active.matmul_a_bt(a, b, out, m, k, n)


def matvec(a, x, out, m, k):
    _active.matvec(a, x, out, m, k)


def csr_matvec(indptr, indices, values, x, out, m):
    _active.csr_matvec(indptr, indices, values, x, out, m)


def step_activate(z, h, n, b, mask, bias_row):
    return _active.step_activate(z, h, n, b, mask, bias_row)


def backprop_scale(delta, z, s, n, b, mask, bias_row):
    _active.backprop_scale(delta, z, s, n, b, mask, bias_row)


def zero_row(a, row, width):
    _active.zero_row(a, row, width)


def add_bias_col(z, bias, m, b):
    _active.add_bias_col(z, bias, m, b)


def row_sums(a, m, b, out):
    _active.row_sums(a, m, b, out)


def mul_inplace(a, b, length):
    _active.mul_inplace(a, b, length)


def gather_cols(src, rows, src_cols, idx, b, out):
    _active.gather_cols(src, rows, src_cols, idx, b, out)


def adam_update(p, g, m1, m2, t, lr, beta1, beta2, eps, length):
    _active.adam_update(p, g, m1, m2, t, lr, beta1, beta2, eps, length)


def l1_sum(p, rows, cols, skip_row):
    return _active.l1_sum(p, rows, cols, skip_row)


def l1_add_subgrad(g, p, lam, rows, cols, skip_row):
    _active.l1_add_subgrad(g, p, lam, rows, cols, skip_row)


def ce_loss_grad(logits, labels, grad, c, b):
    return _active.ce_loss_grad(logits, labels, grad, c, b)


def mse_loss_grad(out, tgt, grad, c, b):
    return _active.mse_loss_grad(out, tgt, grad, c, b)


def dropout_fill(state, mask, n, b, m, bias_row, p, keep):
    _active.dropout_fill(state, mask, n, b, m, bias_row, p, keep)
