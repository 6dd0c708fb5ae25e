"""Acceptance suite: one test per criterion, each printing a PASS line.

The suite is property-based on seeded synthetic instances (the frozen
regression family below) plus structural targets; run with -s to see the
per-criterion lines.
"""

import time

import numpy as np
import pytest

from bsesolve import synthesize
from bsesolve.dmrg import build_operator, dmrg_eig
from bsesolve.eigensolve import (
    dense_eig_oracle,
    positive_branch,
    shift_invert_bse,
    shift_invert_tda,
)
from bsesolve.lowrank import DiagPlusLowRank, LowRankMatrix, assemble_aux
from bsesolve.redbasis import (
    assemble_a_nw,
    assemble_f_nw,
    build_reduced_block,
    choose_nw,
    galerkin_project,
    two_sided_report,
)
from bsesolve.sherman import (
    precompute_bse,
    precompute_reduced_bse,
    precompute_reduced_tda,
    precompute_tda,
)
from bsesolve.tt import effective_rank, fold, prime_factorize, tt_svd, unfold

SUITE_SIZES = [(4, 15, 4), (4, 15, 8), (6, 20, 4), (6, 20, 8), (8, 30, 4), (8, 30, 8)]
M0 = 10
EPS = 0.1
TOL = 1e-8


def _report(criterion, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} {detail}".rstrip())
    assert ok, f"criterion {criterion} failed: {detail}"


@pytest.fixture(scope="module")
def suite():
    """The frozen 20-instance regression family with solver and oracle data."""
    data = []
    t_solve = 0.0
    for seed in range(20):
        n_o, n_v, r = SUITE_SIZES[seed % len(SUITE_SIZES)]
        inst = synthesize(n_o, n_v, r, seed=seed)
        aux = assemble_aux(inst, eps=EPS)
        t0 = time.perf_counter()
        tda_inv = precompute_tda(aux.a0)
        bse_inv = precompute_bse(aux.a0, aux.b0)
        tda_res = shift_invert_tda(tda_inv, M0, tol=TOL, seed=0)
        bse_res = shift_invert_bse(bse_inv, m0=M0, tol=TOL, seed=0)
        a0_spec = dense_eig_oracle(aux.a0.to_dense()).values
        f0_spec = dense_eig_oracle(aux.f0.to_dense()).values
        t_solve += time.perf_counter() - t0
        f1_spec = dense_eig_oracle(aux.f1.to_dense()).values
        data.append(
            {
                "inst": inst,
                "aux": aux,
                "tda_inv": tda_inv,
                "bse_inv": bse_inv,
                "tda_res": tda_res,
                "bse_res": bse_res,
                "a0_spec": a0_spec,
                "f0_spec": f0_spec,
                "f1_spec": f1_spec,
            }
        )
    return {"data": data, "t_solve": t_solve}


def test_criterion_1_oracle_equivalence(suite):
    worst = 0.0
    for cell in suite["data"]:
        ref_tda = cell["a0_spec"][:M0]
        rel = np.abs(cell["tda_res"].values - ref_tda) / np.abs(ref_tda)
        worst = max(worst, rel.max())
        assert cell["tda_res"].converged
        ref_bse = positive_branch(cell["f0_spec"], M0)
        rel = np.abs(cell["bse_res"].values - ref_bse) / np.abs(ref_bse)
        worst = max(worst, rel.max())
        assert cell["bse_res"].converged
    ok = worst <= 1e-8 and suite["t_solve"] <= 60.0
    _report(1, ok, f"max rel err {worst:.2e}, solve+oracle {suite['t_solve']:.1f}s")


def test_criterion_2_inverse_correctness():
    t0 = time.perf_counter()
    inst = synthesize(6, 20, 8, seed=3)
    aux = assemble_aux(inst, eps=EPS)
    deps = inst.energy_diagonal()
    spec = build_reduced_block(
        inst.w_bar, choose_nw(1.0, inst.r_v, inst.n_ov), deps
    )
    a_nw = assemble_a_nw(inst, spec)
    f_nw = assemble_f_nw(inst, spec, aux.b0)
    pairs = [
        (precompute_tda(aux.a0), aux.a0, 1),
        (precompute_bse(aux.a0, aux.b0), aux.f0, 2),
        (
            precompute_reduced_tda(
                deps.entries(), spec.active_idx, spec.w_b, spec.tail_idx,
                spec.w2, inst.l_v, forward=a_nw,
            ),
            a_nw,
            1,
        ),
        (
            precompute_reduced_bse(
                deps.entries(), spec.active_idx, spec.w_b, spec.tail_idx,
                spec.w2, inst.l_v, aux.b0, forward=f_nw,
            ),
            f_nw,
            2,
        ),
    ]
    rng = np.random.default_rng(0)
    worst = 0.0
    for inv, fwd, blocks in pairs:
        n = blocks * inst.n_ov
        for _ in range(100):
            u = rng.standard_normal(n)
            res = np.linalg.norm(fwd.matvec(inv.apply(u)) - u) / np.linalg.norm(u)
            worst = max(worst, res)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= 10.0
    _report(2, ok, f"max residual {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_spectrum_pairing(suite):
    worst = 0.0
    for cell in suite["data"]:
        for spec in (cell["f0_spec"], cell["f1_spec"]):
            s = np.sort(spec)
            worst = max(worst, np.abs(s + s[::-1]).max())
    ok = worst <= 1e-9
    _report(3, ok, f"max pairing defect {worst:.2e}")


def _bounds_triple(inst, aux):
    deps = inst.energy_diagonal()
    spec = build_reduced_block(
        inst.w_bar, choose_nw(1.0, inst.r_v, inst.n_ov), deps
    )
    f_nw = assemble_f_nw(inst, spec, aux.b0)
    inv = precompute_reduced_bse(
        deps.entries(), spec.active_idx, spec.w_b, spec.tail_idx, spec.w2,
        inst.l_v, aux.b0, forward=f_nw,
    )
    aux_res = shift_invert_bse(inv, m0=M0, tol=TOL, seed=0)
    gam = galerkin_project(aux.f1, aux_res.vectors).gamma_positive[:M0]
    return aux_res.values, gam


def test_criterion_4_reduced_basis_improvement(suite):
    improved = 0
    brackets = 0
    for cell in suite["data"]:
        lam, gam = _bounds_triple(cell["inst"], cell["aux"])
        om = positive_branch(cell["f1_spec"], M0)
        if np.abs(gam - om).max() < np.abs(lam - om).max():
            improved += 1
        rep = two_sided_report(lam, gam, om)
        brackets += rep.violations == 0
    # frozen positive case for the (empirical) two-sided bracket
    inst42 = synthesize(4, 16, 8, seed=42)
    aux42 = assemble_aux(inst42, eps=EPS)
    lam, gam = _bounds_triple(inst42, aux42)
    om = positive_branch(dense_eig_oracle(aux42.f1.to_dense()).values, M0)
    rep42 = two_sided_report(lam, gam, om)
    ok = improved >= 18 and rep42.violations == 0
    _report(
        4,
        ok,
        f"improvement on {improved}/20, brackets hold on {brackets}/20 "
        f"(monitored), seed-42 violations {rep42.violations}",
    )


def test_criterion_5_qtt_kernel_suite():
    rng = np.random.default_rng(0)
    lengths = [16, 24, 60, 64, 128, 360, 512]
    worst = 0.0
    for k in range(1000):
        n = lengths[k % len(lengths)]
        v = rng.standard_normal(n)
        shape = prime_factorize(n)
        folded = fold(v, shape)
        assert np.array_equal(unfold(folded), v)  # bitwise round trip
        eps = (0.05, 0.1, 0.3)[k % 3]
        x = tt_svd(v, shape, eps=eps)
        err = np.linalg.norm(x.unfold() - v)
        worst = max(worst, err / (eps * np.linalg.norm(v)))
    exact_uniform = effective_rank((7, 7, 7, 7), 5) == pytest.approx(7.0, abs=1e-12)
    root = effective_rank((2, 4), 3)
    exact_root = abs(root - (-1.0 + np.sqrt(15.0))) <= 1e-12
    ok = worst <= 1.0 and exact_uniform and exact_root
    _report(5, ok, f"worst err/bound ratio {worst:.3f}")


def test_criterion_6_dmrg_accuracy():
    t0 = time.perf_counter()
    inst = synthesize(16, 16, 8, seed=0)  # N_ov = 256
    op = build_operator(inst, eps=0.1)
    a_exact = (
        np.diag(inst.energy_diagonal().entries())
        + inst.l_v @ inst.l_v.T
        - inst.w_bar
    )
    oracle = np.linalg.eigvalsh(a_exact)[:M0]
    res2 = dmrg_eig(op, m0=M0, eps=0.1, n_sweeps=2, seed=0)
    res1 = dmrg_eig(op, m0=M0, eps=0.1, n_sweeps=1, seed=0)
    rel2 = (np.abs(res2.values - oracle) / np.abs(oracle)).max()
    rel1 = (np.abs(res1.values - oracle) / np.abs(oracle)).max()
    elapsed = time.perf_counter() - t0
    ok = rel2 <= 0.01 and rel1 >= rel2 and elapsed <= 30.0
    _report(
        6, ok, f"2-sweep rel {rel2:.2e}, 1-sweep rel {rel1:.2e}, {elapsed:.1f}s"
    )


def _median_time(fn, reps=5):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def test_criterion_7_complexity_smoke():
    rng = np.random.default_rng(0)
    r = 8

    apply_times = []
    for n in (40_000, 80_000):
        d = rng.uniform(1.0, 3.0, n)
        p = 0.3 * rng.standard_normal((n, r))
        inv = precompute_tda(DiagPlusLowRank(d, LowRankMatrix(p, 0.5 * p)))
        u = rng.standard_normal(n)
        inv.apply(u)  # warm up (jit compile, caches)

        def apply_block(inv=inv, u=u):
            for _ in range(20):
                inv.apply(u)

        apply_times.append(_median_time(apply_block))
    apply_factor = apply_times[1] / apply_times[0]

    setup_times = []
    for n in (8192, 16384):
        d = rng.uniform(1.0, 3.0, n)
        lv = 0.3 * rng.standard_normal((n, r))
        n_w = choose_nw(1.0, r, n)
        perm = np.argsort(d, kind="stable").astype(np.int64)
        active, tail = perm[:n_w], perm[n_w:]
        w_b = 0.05 * rng.standard_normal((n_w, n_w))
        w_b = 0.5 * (w_b + w_b.T)
        w2 = 0.05 * rng.standard_normal(n - n_w)

        def setup(d=d, active=active, w_b=w_b, tail=tail, w2=w2, lv=lv):
            precompute_reduced_tda(d, active, w_b, tail, w2, lv)

        setup()  # warm up
        setup_times.append(_median_time(setup, reps=3))
    setup_factor = setup_times[1] / setup_times[0]

    ok = apply_factor <= 3.0 and setup_factor <= 3.0 * 2**1.5
    _report(
        7,
        ok,
        f"apply x{apply_factor:.2f} (limit 3), setup x{setup_factor:.2f} "
        f"(limit {3 * 2 ** 1.5:.2f})",
    )


def test_criterion_8_energy_diagonal_compressibility():
    worst = 0
    for n_o, n_v, r, seed in [(4, 16, 4, 1), (8, 16, 6, 2), (16, 16, 8, 3),
                              (8, 32, 6, 4), (16, 32, 8, 5)]:
        inst = synthesize(n_o, n_v, r, seed=seed)
        op = build_operator(inst, eps=0.1)
        worst = max(worst, max(op.deps_tt.ranks))
    ok = worst <= 10
    _report(8, ok, f"max energy-diagonal TT rank {worst} (tolerance 1e-6)")
