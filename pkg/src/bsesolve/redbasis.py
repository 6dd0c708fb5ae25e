"""Reduced-block screened interaction, Galerkin reduction, two-sided bounds.

Instead of rank-truncating the poorly compressible screened interaction, its
matrix is restricted to a dense active sub-block over the indices with the
smallest energy denominators (where the interior eigenvectors localize),
with the full diagonal kept.  The block size n_w = round(c_w*sqrt(2 r n))
balances the block storage against the low-rank factor storage.

The Galerkin stage projects the exact block operator onto the eigenvectors
of a simplified one and re-solves a small generalized eigenproblem; the pair
(auxiliary value, Galerkin value) empirically brackets the exact eigenvalue
from below and above, which two_sided_report records as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .lowrank import BlockJSymmetric, LowRankMatrix
from .problem import EnergyDiagonal, ProblemInstance


class RankDeficientBasisError(ValueError):
    """Galerkin basis columns are (numerically) linearly dependent."""


def choose_nw(c_w, r_v, n_ov) -> int:
    """Active block size: round-half-up of c_w*sqrt(2*r_v*n_ov), capped."""
    if c_w <= 0 or r_v <= 0 or n_ov <= 0:
        raise ValueError("choose_nw inputs must be positive")
    return min(int(math.floor(c_w * math.sqrt(2.0 * r_v * n_ov) + 0.5)), int(n_ov))


@dataclass(frozen=True)
class ReducedBlockSpec:
    c_w: float
    n_w: int
    permutation: np.ndarray  # composite indices sorted by ascending energy
    w_b: np.ndarray          # dense active block, permuted ordering
    w2: np.ndarray           # diagonal tail

    @property
    def n_ov(self):
        return self.permutation.shape[0]

    @property
    def active_idx(self):
        return self.permutation[: self.n_w]

    @property
    def tail_idx(self):
        return self.permutation[self.n_w :]

    def to_dense(self, n=None):
        """Reconstruct W_NW in the original ordering (test/oracle helper)."""
        n = self.n_ov if n is None else n
        out = np.zeros((n, n))
        act = self.active_idx
        out[np.ix_(act, act)] = self.w_b
        out[self.tail_idx, self.tail_idx] = self.w2
        return out


def build_reduced_block(w_bar, n_w, ordering, c_w=float("nan")) -> ReducedBlockSpec:
    """Keep the leading n_w x n_w block (energy-sorted) and the full diagonal."""
    if isinstance(ordering, EnergyDiagonal):
        delta = ordering.entries()
    else:
        delta = np.asarray(ordering, dtype=float)
    n = delta.shape[0]
    if not 0 <= n_w <= n:
        raise ValueError("n_w out of range")
    perm = np.argsort(delta, kind="stable").astype(np.int64)
    act = perm[:n_w]
    return ReducedBlockSpec(
        c_w=c_w,
        n_w=int(n_w),
        permutation=perm,
        w_b=np.ascontiguousarray(w_bar[np.ix_(act, act)]),
        w2=np.ascontiguousarray(np.diag(w_bar)[perm[n_w:]]),
    )


@dataclass(frozen=True)
class ReducedBlockOperator:
    """Applier of A_NW = diag + V - W_NW (symmetric)."""

    deps: np.ndarray
    l_v: np.ndarray
    spec: ReducedBlockSpec

    @property
    def shape(self):
        n = self.deps.shape[0]
        return (n, n)

    def matvec(self, x):
        if x.shape[0] != self.deps.shape[0]:
            raise ValueError("dimension mismatch")
        return _kernels.reduced_matvec(
            self.deps,
            self.l_v,
            self.spec.active_idx,
            self.spec.w_b,
            self.spec.tail_idx,
            self.spec.w2,
            x,
        )

    rmatvec = matvec

    def to_dense(self):
        n = self.deps.shape[0]
        return np.diag(self.deps) + self.l_v @ self.l_v.T - self.spec.to_dense(n)


def assemble_a_nw(inst: ProblemInstance, spec: ReducedBlockSpec) -> ReducedBlockOperator:
    if spec.n_ov != inst.n_ov:
        raise ValueError("spec size does not match instance")
    return ReducedBlockOperator(
        deps=inst.energy_diagonal().entries(), l_v=inst.l_v, spec=spec
    )


def assemble_f_nw(
    inst: ProblemInstance, spec: ReducedBlockSpec, b0: LowRankMatrix
) -> BlockJSymmetric:
    """2x2 block operator pairing A_NW with the unchanged B0 block."""
    return BlockJSymmetric(
        a_block=assemble_a_nw(inst, spec),
        b_block=b0,
        flavor="F_NW_reduced",
        n=inst.n_ov,
    )


@dataclass(frozen=True)
class ReducedModel:
    g1: np.ndarray
    m1: np.ndarray
    s1: np.ndarray
    gamma: np.ndarray           # all reduced eigenvalues, ascending
    gamma_positive: np.ndarray  # positive branch, ascending


def galerkin_project(f1, g1, symmetric=False, cond_guard=1e12) -> ReducedModel:
    """Project the operator onto span(g1): M1 = G^T F G, S1 = G^T G, then
    solve the small generalized eigenproblem densely."""
    g1 = np.asarray(g1, dtype=float)
    fg = np.column_stack([f1.matvec(g1[:, j]) for j in range(g1.shape[1])])
    m1 = g1.T @ fg
    s1 = g1.T @ g1
    sev = np.linalg.eigvalsh(0.5 * (s1 + s1.T))
    if sev[0] <= 0 or sev[-1] / sev[0] > cond_guard:
        raise RankDeficientBasisError(
            f"basis condition {sev[-1] / max(sev[0], 1e-300):.2e} exceeds guard"
        )
    if symmetric:
        gamma = scipy.linalg.eigh(0.5 * (m1 + m1.T), s1, eigvals_only=True)
    else:
        gamma = scipy.linalg.eig(m1, s1, right=False)
        gamma = np.sort(gamma.real)
    gamma = np.sort(gamma)
    return ReducedModel(
        g1=g1, m1=m1, s1=s1, gamma=gamma, gamma_positive=gamma[gamma > 0]
    )


@dataclass(frozen=True)
class BoundsReport:
    lambda_bar: np.ndarray
    omega: np.ndarray
    gamma_bar: np.ndarray
    lower_ok: np.ndarray
    upper_ok: np.ndarray
    margin_lower: np.ndarray  # omega - lambda_bar
    margin_upper: np.ndarray  # gamma_bar - omega

    @property
    def violations(self):
        return int(np.sum(~self.lower_ok) + np.sum(~self.upper_ok))

    def to_dict(self):
        return {
            "entries": [
                {
                    "index": k + 1,
                    "lambda_bar": float(self.lambda_bar[k]),
                    "omega": float(self.omega[k]),
                    "gamma_bar": float(self.gamma_bar[k]),
                    "lower_ok": bool(self.lower_ok[k]),
                    "upper_ok": bool(self.upper_ok[k]),
                    "margin_lower": float(self.margin_lower[k]),
                    "margin_upper": float(self.margin_upper[k]),
                }
                for k in range(len(self.omega))
            ],
            "violations": self.violations,
        }


def two_sided_report(lambda_bar, gamma_bar, omega, slack=0.0) -> BoundsReport:
    """Bracket diagnostic lambda_bar <= omega <= gamma_bar, index by index.

    The bracket is an empirical observation, never asserted here; the report
    just records where it holds and by what margin."""
    lambda_bar = np.asarray(lambda_bar, dtype=float)
    gamma_bar = np.asarray(gamma_bar, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if not (lambda_bar.shape == gamma_bar.shape == omega.shape):
        raise ValueError("arrays must be aligned by index")
    return BoundsReport(
        lambda_bar=lambda_bar,
        omega=omega,
        gamma_bar=gamma_bar,
        lower_ok=lambda_bar <= omega + slack,
        upper_ok=omega <= gamma_bar + slack,
        margin_lower=omega - lambda_bar,
        margin_upper=gamma_bar - omega,
    )
