"""Structured inverses of the auxiliary operators.

The A-type block is a diagonal plus low-rank matrix, so its inverse is
available in closed form through the Sherman-Morrison/Woodbury identity:

    A0^{-1} = D^{-1} - D^{-1} P (I + Q^T D^{-1} P)^{-1} Q^T D^{-1}.

The full 2x2 block operator is inverted through its block LU factorization,
whose Schur complement S = -A0^T + B0^T A0^{-1} B0 is again a (negated)
diagonal plus low-rank matrix.  All dense work happens on 2r x 2r and
4r x 4r inner matrices; setup costs O(n r^2), each apply costs O(n r).

For the reduced-block variant, the "diagonal" D becomes the block-diagonal
energy matrix (dense active block plus diagonal tail) and the low-rank part
shrinks to P = Q = L_V; everything else is unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .lowrank import DiagPlusLowRank, LowRankMatrix


class StructuredSingularityError(np.linalg.LinAlgError):
    """An inner Sherman-Morrison system is numerically singular."""


def _guarded_inverse(mat, name, pivot_ratio=1e-13):
    r = mat.shape[0]
    if r == 0:
        return np.zeros((0, 0))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(mat)
    except np.linalg.LinAlgError as exc:
        raise StructuredSingularityError(f"inner system {name} is singular") from exc
    d = np.abs(np.diag(lu))
    if d.min() == 0.0 or d.min() < pivot_ratio * d.max():
        raise StructuredSingularityError(
            f"inner system {name} is numerically singular "
            f"(pivot ratio {d.min() / max(d.max(), 1e-300):.2e})"
        )
    return scipy.linalg.lu_solve((lu, piv), np.eye(r))


@dataclass(frozen=True)
class DiagonalInverse:
    """Reciprocal of a strictly nonzero diagonal."""

    recip: np.ndarray

    @property
    def n(self):
        return self.recip.shape[0]

    def apply(self, x):
        return self.recip * x

    def apply_mat(self, m):
        return self.recip[:, None] * m


@dataclass(frozen=True)
class BlockDiagEnergyInverse:
    """Inverse of the reduced-block energy matrix D - W_NW.

    In the ordering sorted by ascending energy this matrix is
    blockdiag(D1 - Wb, D2 - diag(w2)); here it is stored through the index
    sets of the active block and the tail, so no vector permutation is
    needed at apply time.
    """

    active_idx: np.ndarray
    tail_idx: np.ndarray
    dense_block_inv: np.ndarray
    tail_inv: np.ndarray

    @property
    def n(self):
        return self.active_idx.shape[0] + self.tail_idx.shape[0]

    def apply(self, x):
        return _kernels.blockdiag_solve(
            self.active_idx, self.tail_idx, self.dense_block_inv, self.tail_inv, x
        )

    def apply_mat(self, m):
        out = np.empty_like(m)
        if self.active_idx.shape[0]:
            out[self.active_idx] = self.dense_block_inv @ m[self.active_idx]
        if self.tail_idx.shape[0]:
            out[self.tail_idx] = self.tail_inv[:, None] * m[self.tail_idx]
        return out


def blockdiag_energy_inverse(
    deps_entries, active_idx, w_b, tail_idx, w2
) -> BlockDiagEnergyInverse:
    """Precompute (D - W_NW)^{-1} from the active block and diagonal tail."""
    active_idx = np.asarray(active_idx, dtype=np.int64)
    tail_idx = np.asarray(tail_idx, dtype=np.int64)
    n_w = active_idx.shape[0]
    n = n_w + tail_idx.shape[0]
    if n_w == n and n > 512:
        # degenerate full-block request: the dense inverse defeats the method
        raise ValueError("full-block energy inverse allowed only up to n = 512")
    if n_w:
        sub = np.diag(deps_entries[active_idx]) - w_b
        try:
            block_inv = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:
            raise StructuredSingularityError(
                "active energy block is singular"
            ) from exc
        cond = np.linalg.cond(sub)
        if not np.isfinite(cond) or cond > 1e14:
            raise StructuredSingularityError(
                f"active energy block is ill-conditioned (cond ~ {cond:.2e})"
            )
    else:
        block_inv = np.zeros((0, 0))
    tail_vals = deps_entries[tail_idx] - w2
    if tail_vals.size and np.any(tail_vals == 0.0):
        raise StructuredSingularityError("zero entry in the diagonal energy tail")
    return BlockDiagEnergyInverse(
        active_idx=active_idx,
        tail_idx=tail_idx,
        dense_block_inv=block_inv,
        tail_inv=1.0 / tail_vals if tail_vals.size else tail_vals,
    )


@dataclass(frozen=True)
class TdaInverse:
    """Precomputed apply of A0^{-1} (Algorithm 1 lines 1-4)."""

    diag_inv: object
    p_eps_k: np.ndarray
    q_eps: np.ndarray
    forward: object = None  # applier of A0 itself, used for residual checks

    @property
    def n(self):
        return self.p_eps_k.shape[0]

    def apply(self, u):
        if u.shape[0] != self.n:
            raise ValueError("dimension mismatch")
        if isinstance(self.diag_inv, DiagonalInverse):
            return _kernels.sherman_apply(
                self.diag_inv.recip, self.p_eps_k, self.q_eps, u
            )
        du = self.diag_inv.apply(u)
        if self.p_eps_k.shape[1] == 0:
            return du
        return du - self.p_eps_k @ (self.q_eps.T @ u)


@dataclass(frozen=True)
class BseInverse:
    """Precomputed apply of F0^{-1} (Algorithm 1 lines 5-10, Algorithm 2)."""

    tda: TdaInverse
    phi: np.ndarray
    psi: np.ndarray
    q_s_eps_k: np.ndarray
    p_s_eps: np.ndarray
    phi_ab: np.ndarray
    forward: object = None  # the 2x2 block operator, for residual checks

    @property
    def n(self):
        return self.tda.n

    def apply(self, rhs):
        n = self.n
        if rhs.shape[0] != 2 * n:
            raise ValueError("dimension mismatch")
        u, v = rhs[:n], rhs[n:]
        z_t = self.tda.apply(u)
        y_t = v + self.psi @ (self.phi.T @ z_t)
        y = -self.tda.diag_inv.apply(y_t) + self.q_s_eps_k @ (self.p_s_eps.T @ y_t)
        z = z_t - self.phi_ab @ (self.psi.T @ y)
        return np.concatenate([z, y])


def precompute_tda(a0: DiagPlusLowRank, diag_inv=None, forward=None) -> TdaInverse:
    """Algorithm 1, lines 1-4: P_eps, Q_eps, K and P_epsK for A0^{-1}."""
    if diag_inv is None:
        if np.any(a0.diag == 0.0):
            raise StructuredSingularityError("energy diagonal has zero entries")
        diag_inv = DiagonalInverse(1.0 / a0.diag)
        if forward is None:
            forward = a0  # plain-diagonal case only; a0 is not A_NW otherwise
    p, q = a0.lr.left, a0.lr.right
    p_eps = diag_inv.apply_mat(p)
    k = _guarded_inverse(np.eye(p.shape[1]) + q.T @ p_eps, "K = I + Q^T D^-1 P")
    return TdaInverse(
        diag_inv=diag_inv,
        p_eps_k=p_eps @ k,
        q_eps=diag_inv.apply_mat(q),
        forward=forward,
    )


def precompute_bse(
    a0: DiagPlusLowRank,
    b0: LowRankMatrix,
    diag_inv=None,
    tda: TdaInverse | None = None,
    forward=None,
) -> BseInverse:
    """Algorithm 1, lines 5-10: assemble the Schur-complement inverse data."""
    if forward is None and diag_inv is None and tda is None:
        from .lowrank import BlockJSymmetric

        forward = BlockJSymmetric(a0, b0, flavor="F0_structured", n=a0.shape[0])
    if tda is None:
        tda = precompute_tda(a0, diag_inv=diag_inv)
    dinv = tda.diag_inv
    p, q = a0.lr.left, a0.lr.right
    phi, psi = b0.left, b0.right

    phi_eps = dinv.apply_mat(phi)
    psi_eps = dinv.apply_mat(psi)
    # Q_S = [Q, Psi(Phi_epsP K Phi_epsQ - Phi^T Phi_eps)]; the product
    # Phi_epsP K is available as phi^T (P_eps K) without forming K again
    mid = (phi.T @ tda.p_eps_k) @ (tda.q_eps.T @ phi) - phi.T @ phi_eps
    q_s_eps = np.hstack([tda.q_eps, psi_eps @ mid])
    p_s_eps = np.hstack([dinv.apply_mat(p), psi_eps])
    k_s = _guarded_inverse(
        np.eye(q_s_eps.shape[1]) + np.hstack([p, psi]).T @ q_s_eps,
        "K_S = I + [P Psi]^T D^-1 Q_S",
    )
    phi_ab = phi_eps - tda.p_eps_k @ (tda.q_eps.T @ phi)
    return BseInverse(
        tda=tda,
        phi=phi,
        psi=psi,
        q_s_eps_k=q_s_eps @ k_s,
        p_s_eps=p_s_eps,
        phi_ab=phi_ab,
        forward=forward,
    )


def apply_tda(inv: TdaInverse, u):
    return inv.apply(u)


def apply_bse(inv: BseInverse, rhs):
    return inv.apply(rhs)


def precompute_reduced_tda(
    deps_entries, active_idx, w_b, tail_idx, w2, l_v, forward=None
) -> TdaInverse:
    """Reduced-block variant: D replaced by the block-diagonal energy matrix,
    only P = Q = L_V remains in the low-rank part."""
    dinv = blockdiag_energy_inverse(deps_entries, active_idx, w_b, tail_idx, w2)
    a0 = DiagPlusLowRank(deps_entries, LowRankMatrix(l_v, l_v))
    return precompute_tda(a0, diag_inv=dinv, forward=forward)


def precompute_reduced_bse(
    deps_entries, active_idx, w_b, tail_idx, w2, l_v, b0: LowRankMatrix, forward=None
) -> BseInverse:
    dinv = blockdiag_energy_inverse(deps_entries, active_idx, w_b, tail_idx, w2)
    a0 = DiagPlusLowRank(deps_entries, LowRankMatrix(l_v, l_v))
    return precompute_bse(a0, b0, diag_inv=dinv, forward=forward)
