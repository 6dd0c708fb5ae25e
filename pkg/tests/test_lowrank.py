import numpy as np
import pytest

from bsesolve import synthesize
from bsesolve.lowrank import (
    BlockJSymmetric,
    DiagPlusLowRank,
    LowRankMatrix,
    assemble_aux,
    truncated_svd,
)


class TestTruncatedSvd:
    def test_identity_full_rank(self):
        lr = truncated_svd(np.eye(3), eps=0.0)
        assert lr.rank == 3
        np.testing.assert_allclose(lr.to_dense(), np.eye(3), atol=1e-14)

    def test_outer_product_rank_one(self):
        rng = np.random.default_rng(0)
        u, v = rng.standard_normal(12), rng.standard_normal(9)
        m = np.outer(u, v)
        for eps in (0.0, 1e-8, 0.3):
            lr = truncated_svd(m, eps)
            assert lr.rank == 1
            np.testing.assert_allclose(lr.to_dense(), m, atol=1e-12)

    def test_zero_matrix_rank_zero(self):
        lr = truncated_svd(np.zeros((5, 4)), eps=0.1)
        assert lr.rank == 0
        np.testing.assert_array_equal(lr.matvec(np.ones(4)), np.zeros(5))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_relative_error_bound(self, seed):
        # oracle: reconstruct and measure directly
        rng = np.random.default_rng(seed)
        q1, _ = np.linalg.qr(rng.standard_normal((40, 40)))
        q2, _ = np.linalg.qr(rng.standard_normal((40, 40)))
        m = q1 @ np.diag(1.3 ** -np.arange(40)) @ q2.T
        lr = truncated_svd(m, eps=0.1)
        err = np.linalg.norm(m - lr.to_dense())
        assert err <= 0.1 * np.linalg.norm(m)
        assert lr.rank < 40

    def test_max_rank_binds(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((20, 20))
        lr = truncated_svd(m, eps=0.0, max_rank=4)
        assert lr.rank == 4

    @pytest.mark.parametrize("rho", [0.4, 0.5, 0.6])
    def test_idempotent_on_decaying_spectra(self, rho):
        # geometric decay below ~0.7 keeps re-truncation at the same rank
        rng = np.random.default_rng(17)
        q1, _ = np.linalg.qr(rng.standard_normal((30, 30)))
        q2, _ = np.linalg.qr(rng.standard_normal((30, 30)))
        m = q1 @ np.diag(rho ** np.arange(30)) @ q2.T
        lr = truncated_svd(m, eps=0.1)
        lr2 = truncated_svd(lr.to_dense(), eps=0.1)
        assert lr2.rank == lr.rank
        np.testing.assert_allclose(lr2.to_dense(), lr.to_dense(), atol=1e-12)

    def test_rejects_negative_eps(self):
        with pytest.raises(ValueError):
            truncated_svd(np.eye(2), eps=-0.1)


class TestOperators:
    def test_dplr_two_by_two(self):
        # diag(1,2) + [1;1][1;1]^T applied to (1,0) -> (2,1)
        op = DiagPlusLowRank(
            np.array([1.0, 2.0]),
            LowRankMatrix(np.ones((2, 1)), np.ones((2, 1))),
        )
        np.testing.assert_allclose(op.matvec(np.array([1.0, 0.0])), [2.0, 1.0])

    def test_rank_zero_is_diagonal(self):
        d = np.array([3.0, 4.0, 5.0])
        op = DiagPlusLowRank(d, LowRankMatrix(np.zeros((3, 0)), np.zeros((3, 0))))
        x = np.array([1.0, -1.0, 2.0])
        np.testing.assert_allclose(op.matvec(x), d * x)

    @pytest.mark.parametrize("seed", [0, 5])
    def test_structured_matvec_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        n, r = 50, 6
        d = rng.uniform(1, 2, n)
        p, q = rng.standard_normal((n, r)), rng.standard_normal((n, r))
        dense = np.diag(d) + p @ q.T  # oracle assembled from parts
        op = DiagPlusLowRank(d, LowRankMatrix(p, q))
        for _ in range(5):
            x = rng.standard_normal(n)
            assert np.abs(op.matvec(x) - dense @ x).max() <= 1e-12
            assert np.abs(op.rmatvec(x) - dense.T @ x).max() <= 1e-12

    def test_dimension_mismatch(self):
        op = DiagPlusLowRank(
            np.ones(4), LowRankMatrix(np.zeros((4, 0)), np.zeros((4, 0)))
        )
        with pytest.raises(ValueError):
            op.matvec(np.ones(3))


class TestAssembleAux:
    def test_zero_interaction_reduces_to_diagonal(self):
        inst = synthesize(2, 4, 2, seed=3)
        zeroed = type(inst)(
            n_o=inst.n_o,
            n_v=inst.n_v,
            eps_occ=inst.eps_occ,
            eps_virt=inst.eps_virt,
            l_v=np.zeros_like(inst.l_v),
            w_bar=np.zeros_like(inst.w_bar),
            w_til=np.zeros_like(inst.w_til),
        )
        aux = assemble_aux(zeroed, eps=0.1)
        delta = zeroed.energy_diagonal().entries()
        x = np.linspace(-1, 1, zeroed.n_ov)
        np.testing.assert_allclose(aux.a0.matvec(x), delta * x, atol=1e-15)
        np.testing.assert_array_equal(aux.b0.matvec(x), 0.0)

    def test_factor_widths(self):
        inst = synthesize(3, 8, 4, seed=1)
        aux = assemble_aux(inst, eps=0.1)
        assert aux.a0.lr.left.shape[1] == inst.r_v + aux.w_bar_r.rank
        assert aux.b0.left.shape[1] == inst.r_v + aux.w_til_r.rank

    def test_a0_matches_dense_assembly(self):
        inst = synthesize(5, 6, 4, seed=8)  # N_ov = 30
        aux = assemble_aux(inst, eps=0.1)
        delta = inst.energy_diagonal().entries()
        dense = (
            np.diag(delta)
            + inst.l_v @ inst.l_v.T
            - aux.w_bar_r.to_dense()
        )
        rng = np.random.default_rng(0)
        for _ in range(4):
            x = rng.standard_normal(inst.n_ov)
            assert np.abs(aux.a0.matvec(x) - dense @ x).max() <= 1e-12

    def test_f1_applies_exact_blocks(self):
        inst = synthesize(3, 5, 3, seed=4)
        aux = assemble_aux(inst, eps=0.1)
        delta = inst.energy_diagonal().entries()
        a = np.diag(delta) + inst.l_v @ inst.l_v.T - inst.w_bar
        b = inst.l_v @ inst.l_v.T - inst.w_til
        f1 = np.block([[a, b], [-b.T, -a.T]])
        rng = np.random.default_rng(1)
        xy = rng.standard_normal(2 * inst.n_ov)
        np.testing.assert_allclose(aux.f1.matvec(xy), f1 @ xy, atol=1e-12)

    def test_threshold_must_be_positive(self):
        inst = synthesize(2, 3, 2, seed=0)
        with pytest.raises(ValueError):
            assemble_aux(inst, eps=0.0)


class TestJSymmetry:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_spectrum_pairs_about_zero(self, seed):
        inst = synthesize(4, 12, 5, seed=seed)  # N_ov = 48 <= 60
        aux = assemble_aux(inst, eps=0.1)
        for op in (aux.f0, aux.f1):
            w = np.linalg.eigvals(op.to_dense())
            w = np.sort(w.real)
            np.testing.assert_allclose(w, -w[::-1], atol=1e-9)

    def test_decoupled_f0_spectrum_is_pm_a0(self):
        inst = synthesize(3, 6, 3, seed=2)
        aux = assemble_aux(inst, eps=0.1)
        f0 = BlockJSymmetric(
            aux.a0,
            LowRankMatrix(np.zeros((inst.n_ov, 0)), np.zeros((inst.n_ov, 0))),
            flavor="F0_structured",
            n=inst.n_ov,
        )
        w = np.sort(np.linalg.eigvals(f0.to_dense()).real)
        a_eigs = np.linalg.eigvalsh(0.5 * (aux.a0.to_dense() + aux.a0.to_dense().T))
        expected = np.sort(np.concatenate([a_eigs, -a_eigs]))
        np.testing.assert_allclose(w, expected, atol=1e-9)
