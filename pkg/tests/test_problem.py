import numpy as np
import pytest

from bsesolve import problem
from bsesolve.problem import (
    ConfigurationError,
    DimensionMismatchError,
    EnergyDiagonal,
    InvalidHeaderError,
    TruncatedPayloadError,
    load,
    save,
    synthesize,
)


class TestEnergyDiagonal:
    def test_kronecker_order_example(self):
        # eps_occ = (1, 2), eps_virt = (5, 7) -> (4, 6, 3, 5) in k(i,a) order
        d = EnergyDiagonal(np.array([1.0, 2.0]), np.array([5.0, 7.0]))
        np.testing.assert_array_equal(d.entries(), [4.0, 6.0, 3.0, 5.0])

    def test_single_pair(self):
        d = EnergyDiagonal(np.array([0.3]), np.array([0.3 + 2.5]))
        np.testing.assert_allclose(d.entries(), [2.5])

    def test_constant_shift(self):
        eo = np.linspace(-2, -1, 4)
        d = EnergyDiagonal(eo, eo + 3.0)
        # every virtual equals some occupied + g only on the matching index;
        # the constant-diagonal case needs a flat spectrum on each side
        flat = EnergyDiagonal(np.zeros(3), np.full(5, 1.7))
        np.testing.assert_allclose(flat.entries(), 1.7)

    @pytest.mark.parametrize("n_o,n_v", [(2, 3), (4, 4), (1, 7), (8, 8)])
    def test_matches_dense_kronecker_assembly(self, n_o, n_v):
        rng = np.random.default_rng(n_o * 10 + n_v)
        eo = np.sort(rng.uniform(-3, -1, n_o))
        ev = np.sort(rng.uniform(1, 3, n_v))
        dense = np.kron(np.eye(n_o), np.diag(ev)) - np.kron(np.diag(eo), np.eye(n_v))
        d = EnergyDiagonal(eo, ev)
        np.testing.assert_allclose(d.entries(), np.diag(dense), atol=1e-15)


class TestSynthesize:
    def test_small_instance_invariants(self):
        inst = synthesize(2, 3, 2, seed=7)
        assert inst.n_ov == 6
        assert np.all(inst.energy_diagonal().entries() > 0)
        inst.validate()

    def test_paper_scale_dimensions(self):
        # N_o = 9, N_b = 82 -> N_v = 73, N_ov = 657, full block dim 1314
        n_o, n_b = 9, 82
        inst = synthesize(n_o, n_b - n_o, 4, seed=0)
        assert inst.n_ov == 657
        assert 2 * inst.n_ov == 1314

    def test_deterministic_bitwise(self):
        a = synthesize(3, 5, 4, seed=123)
        b = synthesize(3, 5, 4, seed=123)
        for name in ("eps_occ", "eps_virt", "l_v", "w_bar", "w_til"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_energies_sorted_and_gapped(self):
        inst = synthesize(5, 9, 3, seed=2, gap=0.5)
        assert np.all(np.diff(inst.eps_occ) > 0)
        assert np.all(np.diff(inst.eps_virt) > 0)
        assert inst.eps_virt.min() - inst.eps_occ.max() >= 0.5 - 1e-12

    def test_symmetry_exact(self):
        inst = synthesize(4, 8, 5, seed=9)
        assert np.array_equal(inst.w_bar, inst.w_bar.T)
        assert np.array_equal(inst.w_til, inst.w_til.T)

    def test_lv_singular_values_decay_geometrically(self):
        inst = synthesize(4, 12, 6, seed=5)
        s = np.linalg.svd(inst.l_v, compute_uv=False)
        ratios = s[1:] / s[:-1]
        np.testing.assert_allclose(ratios, 0.6, atol=1e-8)

    def test_invalid_counts(self):
        with pytest.raises(ConfigurationError):
            synthesize(0, 3, 1)
        with pytest.raises(ConfigurationError):
            synthesize(2, 3, 1, gap=-1.0)


class TestContainerFormat:
    def test_round_trip_bitwise(self, tmp_path):
        inst = synthesize(3, 7, 4, seed=11, units="hartree")
        path = tmp_path / "x.bsep"
        save(inst, path)
        back = load(path)
        assert back.units == "hartree"
        for name in ("eps_occ", "eps_virt", "l_v", "w_bar", "w_til"):
            assert np.array_equal(getattr(inst, name), getattr(back, name)), name

    def test_rejects_unknown_magic(self, tmp_path):
        path = tmp_path / "bad.bsep"
        path.write_bytes(b"NOTAPROB" + b"\x00" * 64)
        with pytest.raises(InvalidHeaderError):
            load(path)

    def test_dimension_mismatch_reported(self, tmp_path):
        inst = synthesize(2, 4, 2, seed=0)
        path = tmp_path / "x.bsep"
        save(inst, path)
        raw = bytearray(path.read_bytes())
        # corrupt the manifest: claim n_v = 5 so N_ov no longer matches payload
        head = raw.index(b'"n_v": 4')
        raw[head : head + 8] = b'"n_v": 5'
        path.write_bytes(bytes(raw))
        with pytest.raises(DimensionMismatchError):
            load(path)

    def test_truncated_payload_reported(self, tmp_path):
        inst = synthesize(2, 4, 2, seed=0)
        path = tmp_path / "x.bsep"
        save(inst, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 16])
        with pytest.raises(TruncatedPayloadError):
            load(path)

    def test_trailing_junk_rejected(self, tmp_path):
        inst = synthesize(2, 4, 2, seed=0)
        path = tmp_path / "x.bsep"
        save(inst, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(InvalidHeaderError):
            load(path)

    def test_payload_is_little_endian_column_major(self, tmp_path):
        inst = synthesize(2, 3, 2, seed=1)
        path = tmp_path / "x.bsep"
        save(inst, path)
        raw = path.read_bytes()
        import json
        import struct

        mlen = struct.unpack("<Q", raw[8:16])[0]
        manifest = json.loads(raw[16 : 16 + mlen])
        off = 16 + mlen
        eps_occ = np.frombuffer(raw[off : off + 8 * inst.n_o], dtype="<f8")
        np.testing.assert_array_equal(eps_occ, inst.eps_occ)
        off += 8 * (inst.n_o + inst.n_v)
        l_v = np.frombuffer(
            raw[off : off + 8 * inst.n_ov * inst.r_v], dtype="<f8"
        ).reshape((inst.n_ov, inst.r_v), order="F")
        np.testing.assert_array_equal(l_v, inst.l_v)
        assert manifest["arrays"][0]["name"] == "eps_occ"
