"""Command-line interface: verify, converge, run, mesh-info.

Exit codes: 0 success, 1 check failure (failed residual, divergence,
validation violations), 2 usage or configuration errors. Heavy imports
happen inside the command handlers so that --threads can cap the linear
algebra thread pools before numpy is loaded.
"""

import argparse
import os
import sys

__all__ = ["main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sbpwave",
        description="Gauss-Lobatto SBP multiblock Laplacian and acoustic wave solver.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap library thread pools")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the operator/identity verification suite")
    p_verify.add_argument("--p", required=True, help="comma-separated operator orders, e.g. 5,7,9")
    p_verify.add_argument("--pairs", type=int, default=100, help="random probe pairs per identity")
    p_verify.add_argument(
        "--perturb-weights", action="store_true",
        help="test hook: perturb a quadrature weight (checks must then fail)",
    )
    p_verify.set_defaults(func=cmd_verify)

    p_conv = sub.add_parser("converge", help="circle convergence study against the analytic solution")
    p_conv.add_argument("--p", type=int, required=True, help="operator order")
    p_conv.add_argument("--levels", type=int, required=True, help="number of refinement levels (>= 2)")
    p_conv.add_argument("--out", required=True, help="output CSV path (figure written alongside)")
    p_conv.add_argument("--start-refinement", type=int, default=1,
                        help="first refinement level (the origin source needs >= 1 for even node counts)")
    p_conv.add_argument("--cfl", type=float, default=0.2, help="fraction of the RK4 stability limit")
    p_conv.add_argument("--t-end", type=float, default=0.8, help="measurement time")
    p_conv.set_defaults(func=cmd_converge)

    p_run = sub.add_parser("run", help="time-step a mesh/config pair, writing snapshots")
    p_run.add_argument("--mesh", required=True, help="mesh JSON file")
    p_run.add_argument("--config", required=True, help="simulation config JSON file")
    p_run.add_argument("--out-dir", required=True, help="snapshot/report directory")
    p_run.set_defaults(func=cmd_run)

    p_info = sub.add_parser("mesh-info", help="summarize and validate a mesh file")
    p_info.add_argument("--mesh", required=True, help="mesh JSON file")
    p_info.add_argument("--p", type=int, default=None, help="operator order for grid-dependent checks")
    p_info.add_argument("--dump-operators", default=None,
                        help="directory for coordinate-format dumps of the assembled operators (needs --p)")
    p_info.set_defaults(func=cmd_info)
    return parser


def cmd_verify(args) -> int:
    try:
        orders = [int(tok) for tok in args.p.split(",") if tok.strip()]
    except ValueError:
        print(f"error: cannot parse order list {args.p!r}", file=sys.stderr)
        return 2
    if not orders:
        print("error: empty order list", file=sys.stderr)
        return 2
    if any(p not in (5, 7, 9) for p in orders):
        print(f"error: supported orders are 5, 7, 9 (got {orders})", file=sys.stderr)
        return 2

    from .reports import verification_checks

    checks = verification_checks(orders, pairs=args.pairs, perturb=args.perturb_weights)
    failed = 0
    for chk in checks:
        status = "PASS" if chk.passed else "FAIL"
        failed += not chk.passed
        suffix = f" [{chk.note}]" if chk.note else ""
        print(f"[{status}] {chk.name}: {chk.value:.3e} (tol {chk.tol:.1e}){suffix}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def cmd_converge(args) -> int:
    if args.levels < 2:
        print("error: need at least 2 levels for a convergence study", file=sys.stderr)
        return 2
    from pathlib import Path

    from .plots import convergence_figure
    from .reports import convergence_study, write_convergence_csv

    refinements = list(range(args.start_refinement, args.start_refinement + args.levels))

    def progress(row, dt, n_steps):
        rate = f"{row.rate_q:6.2f}" if row.rate_q == row.rate_q else "     -"
        print(
            f"refinement {row.refinement}: blocks={row.n_blocks:5d} N={row.n_dofs:7d} "
            f"steps={n_steps:6d} log10(err)={row.log10_error:7.3f} q={rate}"
        )

    try:
        rows = convergence_study(
            args.p, refinements, t_end=args.t_end, cfl_fraction=args.cfl, progress=progress
        )
    except Exception as exc:
        print(f"error: convergence study failed: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    write_convergence_csv(rows, out)
    fig_path = out.with_suffix(".png")
    convergence_figure(rows, fig_path)
    print(f"wrote {out} and {fig_path}")
    if any(r.diverged for r in rows):
        bad = next(r for r in rows if r.diverged)
        print(f"error: stepping diverged at refinement {bad.refinement}; "
              f"row recorded with nan marker", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    from .assembly import ConfigurationError, InconsistentMeshError
    from .mesh import MeshError, load_mesh
    from .reports import load_config, run_simulation
    from .wave import DivergenceError

    try:
        mesh = load_mesh(args.mesh)
        config = load_config(args.config)
    except (MeshError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_simulation(mesh, config, args.out_dir)
    except (ConfigurationError, InconsistentMeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"N_dofs={report['n_dofs']} dt={report['dt']:.6e} steps={report['steps']} "
        f"stepping={report['wall_time']['stepping']:.2f}s -> {args.out_dir}"
    )
    if report["diverged"]:
        print(f"error: diverged ({report['diverged']}); last good snapshot retained", file=sys.stderr)
        return 1
    return 0


def cmd_info(args) -> int:
    from .mesh import MeshError, load_mesh, validate_mesh

    try:
        mesh = load_mesh(args.mesh)
    except (MeshError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"blocks: {mesh.n_blocks}")
    print(f"interfaces: {len(mesh.interfaces)}")
    kinds = {}
    for blk in mesh.blocks:
        for e in blk.edges:
            kinds[e.kind] = kinds.get(e.kind, 0) + 1
    print("edge kinds: " + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items())))
    tags = {}
    for tag in mesh.boundary_tags.values():
        tags[tag] = tags.get(tag, 0) + 1
    print("boundary tags: " + (", ".join(f"{t}={c}" for t, c in sorted(tags.items())) or "(none)"))

    op = None
    if args.p is not None:
        from .sbp1d import make_operator

        op = make_operator(args.p)
    violations = validate_mesh(mesh, op)
    if violations:
        print(f"validation: {len(violations)} violation(s)")
        for v in violations:
            print(f"  - {v}")
        return 1
    print("validation: OK")

    if args.dump_operators is not None:
        if op is None:
            print("error: --dump-operators requires --p", file=sys.stderr)
            return 2
        from pathlib import Path

        from scipy import sparse

        from .assembly import build_global_operators, dump_operator

        gops = build_global_operators(mesh, op)
        out = Path(args.dump_operators)
        out.mkdir(parents=True, exist_ok=True)
        dump_operator(gops.d_l_reduced, out / "laplacian_reduced.txt")
        dump_operator(gops.embedding.matrix, out / "embedding.txt")
        dump_operator(sparse.diags(gops.h_reduced), out / "norm_reduced.txt")
        print(f"N_dofs: {gops.n_reduced} (non-reduced {gops.embedding.n_full})")
        print(f"wrote operator dumps to {out}")
    elif op is not None:
        from .assembly import build_global_operators

        gops = build_global_operators(mesh, op)
        print(f"N_dofs: {gops.n_reduced} (non-reduced {gops.embedding.n_full})")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
