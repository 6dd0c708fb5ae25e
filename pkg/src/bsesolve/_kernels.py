"""Hot numeric kernels: numba-jitted versions with a pure-numpy fallback.

Every kernel here sits inside a Krylov/DMRG iteration loop and is applied
thousands of times per solve.  The numba variants fuse the element-wise
diagonal work with the gather/scatter of the reduced-block indices, which
the numpy versions pay for in temporaries.

Set ``BSESOLVE_PURE_NUMPY=1`` in the environment to force the numpy path
(also taken automatically when numba is not importable).  Both paths are
exercised by ``tests/test_kernels.py`` and timed against each other by
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("BSESOLVE_PURE_NUMPY", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and not _FORCE_NUMPY


# ---------------------------------------------------------------------------
# pure numpy implementations (BLAS-backed)
# ---------------------------------------------------------------------------

def dplr_matvec_numpy(diag, left, right, x):
    """(diag + left @ right.T) @ x."""
    if left.shape[1] == 0:
        return diag * x
    return diag * x + left @ (right.T @ x)


def sherman_apply_numpy(dinv, pek, qe, u):
    """dinv * u - pek @ (qe.T @ u), the Sherman-Morrison inverse apply."""
    if pek.shape[1] == 0:
        return dinv * u
    return dinv * u - pek @ (qe.T @ u)


def blockdiag_solve_numpy(active, tail, block_inv, tail_inv, x):
    """Apply blockdiag(block_inv, diag(tail_inv)) given index sets."""
    y = np.empty_like(x)
    if active.shape[0]:
        y[active] = block_inv @ x[active]
    if tail.shape[0]:
        y[tail] = tail_inv * x[tail]
    return y


def reduced_matvec_numpy(deps, lv, active, w_b, tail, w2, x):
    """(diag(deps) + lv @ lv.T - W_active_block - diag_tail) @ x."""
    y = deps * x
    if lv.shape[1]:
        y += lv @ (lv.T @ x)
    if active.shape[0]:
        y[active] -= w_b @ x[active]
    if tail.shape[0]:
        y[tail] -= w2 * x[tail]
    return y


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def dplr_matvec_numba(diag, left, right, x):
        # BLAS for the skinny products, one fused pass for the diagonal part
        n, r = left.shape
        out = np.empty(n)
        if r == 0:
            for i in range(n):
                out[i] = diag[i] * x[i]
            return out
        c = np.dot(left, np.dot(x, right))
        for i in range(n):
            out[i] = diag[i] * x[i] + c[i]
        return out

    @njit(cache=True)
    def sherman_apply_numba(dinv, pek, qe, u):
        n, r = pek.shape
        out = np.empty(n)
        if r == 0:
            for i in range(n):
                out[i] = dinv[i] * u[i]
            return out
        c = np.dot(pek, np.dot(u, qe))
        for i in range(n):
            out[i] = dinv[i] * u[i] - c[i]
        return out

    @njit(cache=True)
    def blockdiag_solve_numba(active, tail, block_inv, tail_inv, x):
        # fused gather / BLAS block solve / scatter
        y = np.empty_like(x)
        nw = active.shape[0]
        if nw:
            xa = np.empty(nw)
            for i in range(nw):
                xa[i] = x[active[i]]
            ya = np.dot(block_inv, xa)
            for i in range(nw):
                y[active[i]] = ya[i]
        for i in range(tail.shape[0]):
            y[tail[i]] = tail_inv[i] * x[tail[i]]
        return y

    @njit(cache=True)
    def reduced_matvec_numba(deps, lv, active, w_b, tail, w2, x):
        n, r = lv.shape
        y = np.empty(n)
        if r == 0:
            for i in range(n):
                y[i] = deps[i] * x[i]
        else:
            c = np.dot(lv, np.dot(x, lv))
            for i in range(n):
                y[i] = deps[i] * x[i] + c[i]
        nw = active.shape[0]
        if nw:
            xa = np.empty(nw)
            for i in range(nw):
                xa[i] = x[active[i]]
            ya = np.dot(w_b, xa)
            for i in range(nw):
                y[active[i]] -= ya[i]
        for i in range(tail.shape[0]):
            y[tail[i]] -= w2[i] * x[tail[i]]
        return y

else:  # pragma: no cover
    dplr_matvec_numba = None
    sherman_apply_numba = None
    blockdiag_solve_numba = None
    reduced_matvec_numba = None


if USING_NUMBA:
    dplr_matvec = dplr_matvec_numba
    sherman_apply = sherman_apply_numba
    blockdiag_solve = blockdiag_solve_numba
    reduced_matvec = reduced_matvec_numba
else:
    dplr_matvec = dplr_matvec_numpy
    sherman_apply = sherman_apply_numpy
    blockdiag_solve = blockdiag_solve_numpy
    reduced_matvec = reduced_matvec_numpy


# name -> (numpy_impl, numba_impl_or_None); used by tests and the benchmark
KERNEL_PAIRS = {
    "dplr_matvec": (dplr_matvec_numpy, dplr_matvec_numba),
    "sherman_apply": (sherman_apply_numpy, sherman_apply_numba),
    "blockdiag_solve": (blockdiag_solve_numpy, blockdiag_solve_numba),
    "reduced_matvec": (reduced_matvec_numpy, reduced_matvec_numba),
}
