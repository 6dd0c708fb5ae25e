"""Factored-matrix algebra: low-rank and diagonal-plus-low-rank operators.

These are the building blocks of the auxiliary problem: the exact blocks
A = diag + V - Wbar and B = V - Wtil are replaced by diagonal-plus-low-rank
and low-rank appliers whose matvec cost is O(n * r).  All operators are
immutable after assembly and safe for concurrent matvec calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .problem import ProblemInstance


def svd_chop(s, abs_tol, max_rank=None):
    """Minimal rank r such that the discarded tail satisfies
    sqrt(sum(s[r:]**2)) <= abs_tol, with a machine floor on noise-level
    singular values so exact-rank inputs report their exact rank."""
    if s.size == 0:
        return 0
    floor = s[0] * len(s) * np.finfo(float).eps
    tol = max(abs_tol, floor)
    tail = 0.0
    r = len(s)
    for k in range(len(s) - 1, -1, -1):
        grown = float(np.hypot(tail, s[k]))  # ||s[k:]||
        if grown <= tol:
            r = k
            tail = grown
        else:
            break
    if max_rank is not None:
        r = min(r, max_rank)
    return r


@dataclass(frozen=True)
class LowRankMatrix:
    """left @ right.T with the singular values folded into the left factor."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise ValueError("factors must be 2-D")
        if self.left.shape[1] != self.right.shape[1]:
            raise ValueError("factor column counts differ")
        if self.rank > min(self.shape):
            raise ValueError("rank exceeds min(m, n)")

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    @property
    def rank(self):
        return self.left.shape[1]

    def matvec(self, x):
        if self.rank == 0:
            return np.zeros(self.shape[0])
        return self.left @ (self.right.T @ x)

    def rmatvec(self, x):
        if self.rank == 0:
            return np.zeros(self.shape[1])
        return self.right @ (self.left.T @ x)

    def to_dense(self):
        return self.left @ self.right.T


def truncated_svd(m, eps, max_rank=None) -> LowRankMatrix:
    """Rank-minimal factorization with ||m - left@right.T||_F <= eps*||m||_F
    (unless max_rank binds)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    m = np.asarray(m, dtype=float)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    fro = float(np.linalg.norm(s))
    if fro == 0.0:
        return LowRankMatrix(np.zeros((m.shape[0], 0)), np.zeros((m.shape[1], 0)))
    r = svd_chop(s, eps * fro, max_rank)
    return LowRankMatrix(u[:, :r] * s[:r], vt[:r].T.copy())


@dataclass(frozen=True)
class DiagPlusLowRank:
    """diag + left @ right.T; the structured form of the A-type block."""

    diag: np.ndarray
    lr: LowRankMatrix

    def __post_init__(self):
        n = self.diag.shape[0]
        if self.lr.shape != (n, n):
            raise ValueError("low-rank part must be square and match the diagonal")

    @property
    def shape(self):
        n = self.diag.shape[0]
        return (n, n)

    def matvec(self, x):
        if x.shape[0] != self.diag.shape[0]:
            raise ValueError("dimension mismatch")
        return _kernels.dplr_matvec(self.diag, self.lr.left, self.lr.right, x)

    def rmatvec(self, x):
        if x.shape[0] != self.diag.shape[0]:
            raise ValueError("dimension mismatch")
        return _kernels.dplr_matvec(self.diag, self.lr.right, self.lr.left, x)

    def to_dense(self):
        return np.diag(self.diag) + self.lr.to_dense()


@dataclass(frozen=True)
class DenseOperator:
    """Dense matrix with the same applier interface (desk-scale oracle side)."""

    mat: np.ndarray

    @property
    def shape(self):
        return self.mat.shape

    def matvec(self, x):
        return self.mat @ x

    def rmatvec(self, x):
        return self.mat.T @ x

    def to_dense(self):
        return self.mat


@dataclass(frozen=True)
class BlockJSymmetric:
    """2x2 block operator [[A, B], [-B^T, -A^T]] of dimension 2*n."""

    a_block: object
    b_block: object
    flavor: str
    n: int

    @property
    def shape(self):
        return (2 * self.n, 2 * self.n)

    def matvec(self, xy):
        if xy.shape[0] != 2 * self.n:
            raise ValueError("dimension mismatch")
        x, y = xy[: self.n], xy[self.n :]
        top = self.a_block.matvec(x) + self.b_block.matvec(y)
        bot = -self.b_block.rmatvec(x) - self.a_block.rmatvec(y)
        return np.concatenate([top, bot])

    def rmatvec(self, xy):
        x, y = xy[: self.n], xy[self.n :]
        top = self.a_block.rmatvec(x) - self.b_block.matvec(y)
        bot = self.b_block.rmatvec(x) - self.a_block.matvec(y)
        return np.concatenate([top, bot])

    def to_dense(self):
        a = self.a_block.to_dense()
        b = self.b_block.to_dense()
        return np.block([[a, b], [-b.T, -a.T]])


@dataclass(frozen=True)
class AuxAssembly:
    """Structured auxiliary operators plus the exact desk-scale target."""

    a0: DiagPlusLowRank
    b0: LowRankMatrix
    f0: BlockJSymmetric
    f1: BlockJSymmetric
    w_bar_r: LowRankMatrix
    w_til_r: LowRankMatrix


def assemble_aux(inst: ProblemInstance, eps: float) -> AuxAssembly:
    """Build A0 = diag + P Q^T, B0 = Phi Psi^T and the block operators.

    The screened-interaction matrices are rank-truncated at ``eps`` with the
    rank capped by rank(V), and concatenated with the V factor:
    P = [L_V, Lw], Q = [L_V, -Rw], Phi = [L_V, Y], Psi = [L_V, -Z].
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = inst.n_ov
    delta = inst.energy_diagonal().entries()
    w_bar_r = truncated_svd(inst.w_bar, eps, max_rank=inst.r_v)
    w_til_r = truncated_svd(inst.w_til, eps, max_rank=inst.r_v)

    p = np.hstack([inst.l_v, w_bar_r.left])
    q = np.hstack([inst.l_v, -w_bar_r.right])
    phi = np.hstack([inst.l_v, w_til_r.left])
    psi = np.hstack([inst.l_v, -w_til_r.right])

    a0 = DiagPlusLowRank(delta, LowRankMatrix(p, q))
    b0 = LowRankMatrix(phi, psi)
    f0 = BlockJSymmetric(a0, b0, flavor="F0_structured", n=n)

    v_dense = inst.l_v @ inst.l_v.T
    a_exact = np.diag(delta) + v_dense - inst.w_bar
    b_exact = v_dense - inst.w_til
    f1 = BlockJSymmetric(
        DenseOperator(a_exact), DenseOperator(b_exact), flavor="F1_exact", n=n
    )
    return AuxAssembly(a0=a0, b0=b0, f0=f0, f1=f1, w_bar_r=w_bar_r, w_til_r=w_til_r)
