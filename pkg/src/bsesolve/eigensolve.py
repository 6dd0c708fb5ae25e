"""Krylov eigensolvers on the structured inverses, plus a dense oracle.

The interior eigenvalues become dominant under the inverse map, so both
paths run a thick-restart Krylov iteration on the precomputed inverse apply:
Lanczos with full reorthogonalization for the symmetric TDA block, and a
Krylov-Schur restarted Arnoldi for the nonsymmetric 2x2 block operator.
Convergence is always judged against the *forward* operator: the inverse
distorts residual scales.

The restart bookkeeping maintains the invariant

    M V_k = V_k H_k + v b_k^T

where b_k is a general coupling row (a multiple of e_k during plain Arnoldi
expansion, dense right after a restart truncation).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DenseGuardError(RuntimeError):
    """Requested dense work beyond the desk-scale size guard."""


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: object = None
    residuals: np.ndarray | None = None
    iterations: int = 0
    wall_time: float = 0.0
    method: str = ""
    converged: bool = True
    tol: float | None = None
    warnings: list = field(default_factory=list)
    history: list = field(default_factory=list)


def fix_signs(vecs, tol=1e-12):
    """Deterministic sign convention: first significant entry positive."""
    vecs = np.array(vecs)
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        big = np.abs(col) > tol * max(np.abs(col).max(), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            vecs[:, j] = -col
    return vecs


def positive_branch(values, m0=None):
    """Smallest positive eigenvalues, ascending."""
    vals = np.asarray(values)
    pos = np.sort(vals[vals > 0])
    return pos if m0 is None else pos[:m0]


def dense_eig_oracle(m, generalized_metric=None, max_dim=4096) -> EigenResult:
    """Full diagonalization baseline, guarded to desk-scale sizes."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if n > max_dim:
        raise DenseGuardError(f"dense oracle guard: {n} > {max_dim}")
    t0 = time.perf_counter()
    warnings = []
    if generalized_metric is not None:
        vals, vecs = scipy.linalg.eig(m, np.asarray(generalized_metric, dtype=float))
    elif np.array_equal(m, m.T) or np.abs(m - m.T).max() <= 1e-13 * max(
        np.abs(m).max(), 1e-300
    ):
        vals, vecs = np.linalg.eigh(m)
    else:
        vals, vecs = scipy.linalg.eig(m)
    if np.iscomplexobj(vals):
        scale = max(np.abs(vals).max(), 1e-300)
        if np.abs(vals.imag).max() > 1e-9 * scale:
            warnings.append("complex eigenvalues beyond tolerance; real parts kept")
        vals = vals.real
        vecs = vecs.real
    order = np.argsort(vals, kind="stable")
    return EigenResult(
        values=vals[order],
        vectors=fix_signs(vecs[:, order]),
        iterations=0,
        wall_time=time.perf_counter() - t0,
        method="dense",
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Krylov-Schur core
# ---------------------------------------------------------------------------

def _select(theta, which, count):
    if which == "LA":
        order = np.argsort(theta.real)[::-1]
    elif which == "SA":
        order = np.argsort(theta.real)
    elif which == "LM":
        order = np.argsort(np.abs(theta))[::-1]
    else:
        raise ValueError(which)
    return order[:count]


def _krylov_schur(
    op_apply,
    n,
    want,
    ncv,
    which,
    symmetric,
    rng,
    tol_est,
    max_restarts,
    v0=None,
    verify=None,
):
    """Thick-restart Krylov iteration; returns (theta, ritz_mat, info).

    ``ritz_mat`` holds the small-problem eigenvector coefficients; callers
    form Ritz vectors as V[:, :k] @ ritz_mat.  ``verify(theta, V, S)`` may
    veto convergence (forward-residual check); a veto tightens the internal
    estimate threshold and continues.
    """
    want = min(want, n)
    ncv = min(max(ncv, want + 2), n)
    keep_target = min(want + 6, ncv - 2) if ncv - 2 > 0 else want

    v_basis = np.empty((n, ncv + 1))
    h = np.zeros((ncv, ncv))
    b = np.zeros(ncv)
    if v0 is None:
        v0 = rng.standard_normal(n)
    v0 = np.asarray(v0, dtype=float)
    v_basis[:, 0] = v0 / np.linalg.norm(v0)
    k = 0
    matvecs = 0
    scale_est = 1.0
    history = []
    converged = False
    theta = np.zeros(0)
    smat = np.zeros((0, 0))

    for restart in range(max_restarts):
        while k < ncv:
            w = op_apply(v_basis[:, k])
            matvecs += 1
            scale_est = max(scale_est, float(np.linalg.norm(w)))
            c = v_basis[:, : k + 1].T @ w
            w = w - v_basis[:, : k + 1] @ c
            c2 = v_basis[:, : k + 1].T @ w
            w = w - v_basis[:, : k + 1] @ c2
            c += c2
            beta = float(np.linalg.norm(w))
            h[: k + 1, k] = c
            h[k, :k] = b[:k]
            if beta < 1e-13 * scale_est:
                # invariant subspace hit; continue with a fresh direction
                w = rng.standard_normal(n)
                w -= v_basis[:, : k + 1] @ (v_basis[:, : k + 1].T @ w)
                beta_link = 0.0
                beta = float(np.linalg.norm(w))
                if beta < 1e-10:  # whole space spanned already
                    w = np.zeros(n)
                    beta = 1.0
            else:
                beta_link = beta
            v_basis[:, k + 1] = w / beta
            b[: k + 1] = 0.0
            b[k] = beta_link
            k += 1

        hk = h[:k, :k]
        if symmetric:
            theta, smat = np.linalg.eigh(0.5 * (hk + hk.T))
        else:
            theta, smat = scipy.linalg.eig(hk)
        sel = _select(theta, which, want)
        ests = np.abs(b[:k] @ smat[:, sel])
        denom = np.maximum(np.abs(theta[sel]), 1e-300)
        history.append(
            {"restart": restart, "max_rel_est": float((ests / denom).max())}
        )
        if np.all(ests <= tol_est * denom):
            if verify is None or verify(theta[sel], v_basis[:, :k], smat[:, sel]):
                theta, smat = theta[sel], smat[:, sel]
                converged = True
                break
            tol_est *= 0.3
            history[-1]["verify_failed"] = True

        # thick restart: keep the leading Ritz pairs plus the residual vector
        if symmetric:
            keep = _select(theta, which, keep_target)
            v_new = v_basis[:, :k] @ smat[:, keep]
            b_new = smat[:, keep].T @ b[:k]
            v_basis[:, : keep.size] = v_new
            v_basis[:, keep.size] = v_basis[:, k]
            h[:, :] = 0.0
            h[: keep.size, : keep.size] = np.diag(theta[keep])
            b[:] = 0.0
            b[: keep.size] = b_new
            k = keep.size
        else:
            mags = np.sort(np.abs(theta))[::-1]
            ell = keep_target
            while True:
                if which == "LM":
                    cut = mags[ell - 1]
                    pred = lambda lam: abs(lam) >= cut * (1 - 1e-12)
                elif which == "SA":
                    cut = np.sort(theta.real)[ell - 1]
                    pred = lambda lam: lam.real <= cut * (1 + 1e-12) + 1e-300
                else:  # LA
                    cut = np.sort(theta.real)[::-1][ell - 1]
                    pred = lambda lam: lam.real >= cut * (1 - 1e-12) - 1e-300
                tmat, qmat, sdim = scipy.linalg.schur(
                    hk, output="real", sort=lambda re, im: pred(re + 1j * im)
                )
                if 0 < sdim <= k - 1:
                    break
                ell -= 1
                if ell < 1:
                    sdim = min(keep_target, k - 1)
                    tmat, qmat = scipy.linalg.schur(hk, output="real")
                    break
            v_new = v_basis[:, :k] @ qmat[:, :sdim]
            b_new = qmat[:, :sdim].T @ b[:k]
            v_basis[:, :sdim] = v_new
            v_basis[:, sdim] = v_basis[:, k]
            h[:, :] = 0.0
            h[:sdim, :sdim] = tmat[:sdim, :sdim]
            b[:] = 0.0
            b[:sdim] = b_new
            k = sdim
    else:
        # out of restarts: report the current best Ritz data, unconverged
        hk = h[:k, :k]
        if symmetric:
            theta, smat = np.linalg.eigh(0.5 * (hk + hk.T))
        else:
            theta, smat = scipy.linalg.eig(hk)
        sel = _select(theta, which, want)
        theta, smat = theta[sel], smat[:, sel]

    ritz = v_basis[:, : smat.shape[0]] @ smat
    info = {"matvecs": matvecs, "history": history, "converged": converged}
    return theta, ritz, info


def _forward_residuals(forward, vecs, vals):
    res = np.empty(len(vals))
    for j, lam in enumerate(vals):
        v = vecs[:, j]
        nv = np.linalg.norm(v)
        res[j] = np.linalg.norm(forward.matvec(v) - lam * v) / max(nv, 1e-300)
    return res


def shift_invert_tda(inv, m0, tol=1e-8, max_iter=60, seed=0) -> EigenResult:
    """m0 smallest eigenvalues of the SPD A-type block via Lanczos on its
    structured inverse (largest eigenvalues of A0^{-1})."""
    if m0 < 1:
        raise ValueError("m0 must be >= 1")
    forward = inv.forward
    if forward is None:
        raise ValueError("inverse carries no forward operator for residuals")
    n = inv.n
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    ncv = max(2 * m0 + 10, 40)

    def verify(theta, v_basis, smat):
        vecs = v_basis @ smat
        lam = 1.0 / theta
        res = _forward_residuals(forward, vecs, lam)
        return bool(np.all(res <= tol * np.maximum(np.abs(lam), 1.0)))

    theta, ritz, info = _krylov_schur(
        inv.apply,
        n,
        want=m0,
        ncv=ncv,
        which="LA",
        symmetric=True,
        rng=rng,
        tol_est=tol,
        max_restarts=max_iter,
        verify=verify,
    )
    lam = 1.0 / theta
    order = np.argsort(lam)
    lam = lam[order]
    vecs = fix_signs(np.real(ritz[:, order]))
    res = _forward_residuals(forward, vecs, lam)
    result = EigenResult(
        values=lam,
        vectors=vecs,
        residuals=res,
        iterations=info["matvecs"],
        wall_time=time.perf_counter() - t0,
        method="shift-invert-lanczos",
        converged=info["converged"],
        tol=tol,
        history=info["history"],
    )
    if not info["converged"]:
        result.warnings.append("not converged within max_iter restarts")
    return result


def forward_tda(a0, m0, tol=1e-8, max_iter=500, seed=0) -> EigenResult:
    """Reference path without the inverse: Lanczos on A0 targeting the
    smallest eigenvalues.  Kept for the monitored iteration-count comparison."""
    n = a0.shape[0]
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    ncv = max(2 * m0 + 10, 40)

    def verify(theta, v_basis, smat):
        vecs = v_basis @ smat
        res = _forward_residuals(a0, vecs, theta)
        return bool(np.all(res <= tol * np.maximum(np.abs(theta), 1.0)))

    theta, ritz, info = _krylov_schur(
        a0.matvec,
        n,
        want=m0,
        ncv=ncv,
        which="SA",
        symmetric=True,
        rng=rng,
        tol_est=tol,
        max_restarts=max_iter,
        verify=verify,
    )
    order = np.argsort(theta)
    lam = theta[order]
    vecs = fix_signs(np.real(ritz[:, order]))
    res = _forward_residuals(a0, vecs, lam)
    result = EigenResult(
        values=lam,
        vectors=vecs,
        residuals=res,
        iterations=info["matvecs"],
        wall_time=time.perf_counter() - t0,
        method="forward-lanczos",
        converged=info["converged"],
        tol=tol,
        history=info["history"],
    )
    if not info["converged"]:
        result.warnings.append("not converged within max_iter restarts")
    return result


def shift_invert_bse(
    inv,
    f0=None,
    m0=10,
    tol=1e-8,
    max_iter=60,
    initial_guess=None,
    seed=0,
) -> EigenResult:
    """m0 smallest positive eigenvalues of the 2x2 block operator via
    Krylov-Schur Arnoldi on F0^{-1} (shift 0).

    ``initial_guess`` may carry TDA eigenvectors; they are replicated as
    [x; 0] and combined into the start vector.
    """
    if m0 < 1:
        raise ValueError("m0 must be >= 1")
    forward = f0 if f0 is not None else inv.forward
    if forward is None:
        raise ValueError("no forward block operator supplied for residuals")
    n = inv.n
    n2 = 2 * n
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    want = min(2 * m0 + 2, n2)
    ncv = max(2 * m0 + 10, 40)
    warnings = []

    v0 = None
    if initial_guess is not None:
        guesses = np.asarray(initial_guess, dtype=float)
        if guesses.ndim == 1:
            guesses = guesses[None, :]
        elif guesses.shape[0] in (n, n2) and guesses.shape[1] not in (n, n2):
            guesses = guesses.T  # column-stacked vectors
        combined = guesses.sum(axis=0)
        if combined.shape[0] == n:  # TDA vectors: replicate as [x; 0]
            combined = np.concatenate([combined, np.zeros(n)])
        if combined.shape[0] != n2:
            raise ValueError("initial_guess vectors must have length n or 2n")
        nrm = np.linalg.norm(combined)
        v0 = combined / nrm if nrm > 0 else None

    def pick_positive(theta, vecs):
        lam = 1.0 / theta
        good = np.abs(lam.imag) <= tol * np.maximum(np.abs(lam.real), 1e-300)
        lam_r = lam.real[good]
        vec_r = vecs[:, good]
        pos = lam_r > 0
        lam_p = lam_r[pos]
        vec_p = vec_r[:, pos]
        order = np.argsort(lam_p)[:m0]
        return lam_p[order], np.real(vec_p[:, order]), int(np.sum(~good))

    def verify(theta, v_basis, smat):
        vecs = v_basis @ smat
        lam_p, vec_p, _ = pick_positive(theta, vecs)
        if lam_p.size < m0:
            return False
        res = _forward_residuals(forward, vec_p, lam_p)
        return bool(np.all(res <= tol * np.maximum(np.abs(lam_p), 1.0)))

    theta, ritz, info = _krylov_schur(
        inv.apply,
        n2,
        want=want,
        ncv=ncv,
        which="LM",
        symmetric=False,
        rng=rng,
        tol_est=tol,
        max_restarts=max_iter,
        v0=v0,
        verify=verify,
    )
    lam_p, vec_p, n_spurious = pick_positive(theta, ritz)
    if n_spurious:
        warnings.append(f"{n_spurious} spurious complex Ritz values flagged")
    converged = info["converged"] and lam_p.size == m0
    vecs = fix_signs(vec_p) if lam_p.size else vec_p
    res = _forward_residuals(forward, vecs, lam_p) if lam_p.size else np.zeros(0)
    result = EigenResult(
        values=lam_p,
        vectors=vecs,
        residuals=res,
        iterations=info["matvecs"],
        wall_time=time.perf_counter() - t0,
        method="shift-invert-arnoldi",
        converged=converged,
        tol=tol,
        warnings=warnings,
        history=info["history"],
    )
    if not converged:
        result.warnings.append("not converged within max_iter restarts")
    return result
