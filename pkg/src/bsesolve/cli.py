"""Command-line front end: instance generation, solver dispatch, benchmarks.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 solver non-convergence
(the partial record is still written), 5 dense-oracle size guard.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time

import numpy as np

from . import dmrg, eigensolve, problem, redbasis, sherman
from .lowrank import assemble_aux
from .problem import HARTREE_TO_EV

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NOCONV = 4
EXIT_GUARD = 5

METHODS = ("dense", "lowrank-inv", "redblock-inv", "lowrank-fwd", "qtt-dmrg")


class UsageError(ValueError):
    pass


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dense_exact_blocks(inst):
    delta = inst.energy_diagonal().entries()
    v = inst.l_v @ inst.l_v.T
    a = np.diag(delta) + v - inst.w_bar
    b = v - inst.w_til
    return a, b


def _dense_f_matrix(a, b):
    return np.block([[a, b], [-b.T, -a.T]])


def _oracle_values(mat, model, m0):
    res = eigensolve.dense_eig_oracle(mat)
    if model == "bse":
        return eigensolve.positive_branch(res.values, m0)
    return res.values[:m0]


def _solve_dispatch(inst, args):
    """Run one solve; returns (values, result_like, target_dense_fn, stats)."""
    model, method, m0 = args.model, args.method, args.m0
    if method in ("lowrank-fwd", "qtt-dmrg") and model != "tda":
        raise UsageError(f"--method {method} supports --model tda only")
    a_exact, b_exact = None, None
    t0 = time.perf_counter()

    if method == "dense":
        a_exact, b_exact = _dense_exact_blocks(inst)
        target = a_exact if model == "tda" else _dense_f_matrix(a_exact, b_exact)
        setup_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = eigensolve.dense_eig_oracle(target)
        values = (
            res.values[:m0]
            if model == "tda"
            else eigensolve.positive_branch(res.values, m0)
        )
        result = eigensolve.EigenResult(
            values=values, iterations=0, method="dense", converged=True
        )
        return result, setup_s, time.perf_counter() - t1, lambda: target, None

    if method in ("lowrank-inv", "lowrank-fwd"):
        aux = assemble_aux(inst, args.eps)
        if method == "lowrank-fwd":
            setup_s = time.perf_counter() - t0
            t1 = time.perf_counter()
            res = eigensolve.forward_tda(aux.a0, m0, tol=args.tol, seed=args.seed)
            return res, setup_s, time.perf_counter() - t1, aux.a0.to_dense, None
        if model == "tda":
            inv = sherman.precompute_tda(aux.a0)
            setup_s = time.perf_counter() - t0
            t1 = time.perf_counter()
            res = eigensolve.shift_invert_tda(inv, m0, tol=args.tol, seed=args.seed)
            return res, setup_s, time.perf_counter() - t1, aux.a0.to_dense, None
        inv = sherman.precompute_bse(aux.a0, aux.b0)
        setup_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = eigensolve.shift_invert_bse(inv, m0=m0, tol=args.tol, seed=args.seed)
        return res, setup_s, time.perf_counter() - t1, aux.f0.to_dense, None

    if method == "redblock-inv":
        aux = assemble_aux(inst, args.eps)
        deps = inst.energy_diagonal()
        n_w = redbasis.choose_nw(args.c_w, inst.r_v, inst.n_ov)
        spec = redbasis.build_reduced_block(inst.w_bar, n_w, deps, c_w=args.c_w)
        stats = {"n_w": n_w}
        entries = deps.entries()
        if model == "tda":
            fwd = redbasis.assemble_a_nw(inst, spec)
            inv = sherman.precompute_reduced_tda(
                entries, spec.active_idx, spec.w_b, spec.tail_idx, spec.w2,
                inst.l_v, forward=fwd,
            )
            setup_s = time.perf_counter() - t0
            t1 = time.perf_counter()
            res = eigensolve.shift_invert_tda(inv, m0, tol=args.tol, seed=args.seed)
            return res, setup_s, time.perf_counter() - t1, fwd.to_dense, stats
        fwd = redbasis.assemble_f_nw(inst, spec, aux.b0)
        inv = sherman.precompute_reduced_bse(
            entries, spec.active_idx, spec.w_b, spec.tail_idx, spec.w2,
            inst.l_v, aux.b0, forward=fwd,
        )
        setup_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = eigensolve.shift_invert_bse(inv, m0=m0, tol=args.tol, seed=args.seed)
        return res, setup_s, time.perf_counter() - t1, fwd.to_dense, stats

    if method == "qtt-dmrg":
        op = dmrg.build_operator(inst, args.eps)
        setup_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        res = dmrg.dmrg_eig(op, m0, eps=args.eps, n_sweeps=args.sweeps, seed=args.seed)
        stats = {
            "component_ranks": op.component_ranks(),
            "operator_entries": op.storage_entries(),
        }

        def exact_dense():
            a_ex, _ = _dense_exact_blocks(inst)
            return a_ex

        return res, setup_s, time.perf_counter() - t1, exact_dense, stats

    raise UsageError(f"unknown method {method}")


def _run_record(inst, args, path):
    res, setup_s, solve_s, target_dense, stats = _solve_dispatch(inst, args)
    values = np.asarray(res.values, dtype=float)
    record = {
        "method": args.method,
        "model": args.model,
        "instance": str(path),
        "instance_digest": _digest(path),
        "n_o": inst.n_o,
        "n_v": inst.n_v,
        "n_ov": inst.n_ov,
        "units": inst.units,
        "m0": args.m0,
        "eps": None if args.method == "dense" else args.eps,
        "c_w": args.c_w if args.method == "redblock-inv" else None,
        "tol": None if args.method in ("dense", "qtt-dmrg") else args.tol,
        "sweeps": args.sweeps if args.method == "qtt-dmrg" else None,
        "seed": args.seed,
        "eigenvalues": [float(v) for v in values],
        "eigenvalues_ev": (
            [float(v * HARTREE_TO_EV) for v in values]
            if args.in_ev and inst.units == "hartree"
            else None
        ),
        "residuals": (
            [float(r) for r in res.residuals] if res.residuals is not None else None
        ),
        "iterations": int(res.iterations),
        "converged": bool(res.converged),
        "wall_times": {"setup_s": setup_s, "solve_s": solve_s, "oracle_s": None},
        "oracle": None,
        "stats": stats,
        "telemetry": res.history if args.method == "qtt-dmrg" else None,
        "warnings": list(res.warnings),
    }
    if args.in_ev and inst.units != "hartree":
        record["warnings"].append("--in-ev ignored: instance is not hartree-tagged")
    if args.oracle:
        t2 = time.perf_counter()
        ref = _oracle_values(target_dense(), args.model, args.m0)
        record["wall_times"]["oracle_s"] = time.perf_counter() - t2
        k = min(len(ref), len(values))
        err = np.abs(values[:k] - ref[:k])
        record["oracle"] = {
            "values": [float(v) for v in ref],
            "max_abs_err": float(err.max()) if k else float("nan"),
            "max_rel_err": float((err / np.abs(ref[:k])).max()) if k else float("nan"),
        }
    return record


def cmd_gen(args):
    for flag, val in (("--n-o", args.n_o), ("--n-v", args.n_v), ("--rank", args.rank)):
        if val < 1:
            raise UsageError(f"{flag} must be >= 1 (got {val})")
    if args.gap <= 0:
        raise UsageError(f"--gap must be positive (got {args.gap})")
    inst = problem.synthesize(
        args.n_o, args.n_v, args.rank, gap=args.gap, seed=args.seed, units=args.units
    )
    problem.save(inst, args.out)
    summary = {
        "path": args.out,
        "n_o": inst.n_o,
        "n_v": inst.n_v,
        "r_v": inst.r_v,
        "n_ov": inst.n_ov,
        "units": inst.units,
        "seed": args.seed,
        "sha256": _digest(args.out),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_solve(args):
    inst = problem.load(args.infile)
    record = _run_record(inst, args, args.infile)
    payload = json.dumps(record, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return EXIT_OK if record["converged"] else EXIT_NOCONV


def cmd_bench(args):
    with open(args.manifest) as fh:
        man = json.load(fh)
    ns = argparse.Namespace(
        model=man.get("model", "tda"),
        m0=int(man.get("m0", 10)),
        eps=float(man.get("eps", 0.1)),
        c_w=float(man.get("c_w", 1.0)),
        tol=float(man.get("tol", 1e-8)),
        sweeps=int(man.get("sweeps", 2)),
        seed=int(man.get("seed", 0)),
        oracle=bool(man.get("oracle", True)),
        in_ev=False,
    )
    rows = []
    solve_times = {}
    for inst_path in man["instances"]:
        for method in man["methods"]:
            if method not in METHODS:
                raise UsageError(f"unknown method {method!r} in manifest")
            row = {
                "instance": inst_path,
                "n_ov": "",
                "method": method,
                "m0": ns.m0,
                "eps": ns.eps,
                "setup_s": "",
                "solve_s": "",
                "max_abs_err": "",
                "status": "ok",
                "inv_le_fwd": "",
            }
            try:
                inst = problem.load(inst_path)
                cell = argparse.Namespace(method=method, **vars(ns))
                rec = _run_record(inst, cell, inst_path)
                row["n_ov"] = rec["n_ov"]
                row["setup_s"] = f"{rec['wall_times']['setup_s']:.6f}"
                row["solve_s"] = f"{rec['wall_times']['solve_s']:.6f}"
                if rec["oracle"] is not None:
                    row["max_abs_err"] = f"{rec['oracle']['max_abs_err']:.3e}"
                if not rec["converged"]:
                    row["status"] = "no-convergence"
                solve_times[(inst_path, method)] = rec["wall_times"]["solve_s"]
            except (problem.InstanceFormatError, OSError) as exc:
                row["status"] = "error"
                row["max_abs_err"] = ""
            except eigensolve.DenseGuardError:
                row["status"] = "guard"
            rows.append(row)
    # monitored comparison: inverse-based solve is expected not to be slower
    for row in rows:
        if row["method"] == "lowrank-fwd" and row["status"] == "ok":
            t_inv = solve_times.get((row["instance"], "lowrank-inv"))
            if t_inv is not None:
                row["inv_le_fwd"] = str(t_inv <= float(row["solve_s"])).lower()
    fieldnames = [
        "instance", "n_ov", "method", "m0", "eps",
        "setup_s", "solve_s", "max_abs_err", "status", "inv_le_fwd",
    ]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_bounds(args):
    inst = problem.load(args.infile)
    if 2 * inst.n_ov > 4096:
        raise eigensolve.DenseGuardError("instance too large for the dense oracle")
    aux = assemble_aux(inst, args.eps)
    deps = inst.energy_diagonal()
    n_w = redbasis.choose_nw(args.c_w, inst.r_v, inst.n_ov)
    spec = redbasis.build_reduced_block(inst.w_bar, n_w, deps, c_w=args.c_w)
    fwd = redbasis.assemble_f_nw(inst, spec, aux.b0)
    inv = sherman.precompute_reduced_bse(
        deps.entries(), spec.active_idx, spec.w_b, spec.tail_idx, spec.w2,
        inst.l_v, aux.b0, forward=fwd,
    )
    aux_res = eigensolve.shift_invert_bse(
        inv, m0=args.m0, tol=args.tol, seed=args.seed
    )
    model = redbasis.galerkin_project(aux.f1, aux_res.vectors)
    gamma = model.gamma_positive[: args.m0]
    omega = eigensolve.positive_branch(
        eigensolve.dense_eig_oracle(aux.f1.to_dense()).values, args.m0
    )
    report = redbasis.two_sided_report(aux_res.values, gamma, omega)
    payload = {
        "instance": str(args.infile),
        "instance_digest": _digest(args.infile),
        "m0": args.m0,
        "eps": args.eps,
        "c_w": args.c_w,
        "n_w": n_w,
        "converged": bool(aux_res.converged),
        **report.to_dict(),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if aux_res.converged else EXIT_NOCONV


def build_parser():
    p = argparse.ArgumentParser(
        prog="bsesolve",
        description="Structured eigensolvers for block eigenproblems",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance file")
    g.add_argument("--n-o", type=int, required=True, dest="n_o")
    g.add_argument("--n-v", type=int, required=True, dest="n_v")
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gap", type=float, default=1.0)
    g.add_argument("--units", choices=("abstract", "hartree"), default="abstract")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance with one method")
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--model", choices=("tda", "bse"), default="tda")
    s.add_argument("--m0", type=int, default=10)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--c-w", type=float, default=1.0, dest="c_w")
    s.add_argument("--sweeps", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--in-ev", action="store_true", dest="in_ev")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a methods x instances benchmark table")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("bounds", help="two-sided eigenvalue bound report")
    d.add_argument("--in", dest="infile", required=True)
    d.add_argument("--m0", type=int, default=10)
    d.add_argument("--eps", type=float, default=0.1)
    d.add_argument("--c-w", type=float, default=1.0, dest="c_w")
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (problem.InstanceFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except eigensolve.DenseGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, problem.ConfigurationError, redbasis.RankDeficientBasisError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
