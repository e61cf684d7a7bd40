"""Command-line interface.

    adaptix bench --n 200 --steps 50 --threads 8 --target-elems 550000 --out DIR
    adaptix verify FILE
    adaptix adapt --mesh FILE --metric FILE --out FILE

Exit code 0 means every invariant check passed.
"""

from __future__ import annotations

import argparse
import sys

from .bench import BenchConfig, run_benchmark
from .io import read_mesh, read_metric_csv, write_mesh
from .kernels import KernelParams, adapt
from .mesh import verify
from .runtime import ThreadTeam


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptix",
                                description="anisotropic mesh adaptation benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the synthetic moving-front benchmark")
    b.add_argument("--n", type=int, default=50, help="initial grid resolution (n x n cells)")
    b.add_argument("--steps", type=int, default=50, help="number of time steps")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--target-elems", type=int, default=None,
                   help="calibrate eta to hit this steady-state element count")
    b.add_argument("--out", type=str, default=None, help="report directory")
    b.add_argument("--vtk", action="store_true", help="write a VTK snapshot per step")
    b.add_argument("--eta", type=float, default=BenchConfig.eta)
    b.add_argument("--hmin", type=float, default=BenchConfig.h_min)
    b.add_argument("--hmax", type=float, default=BenchConfig.h_max)
    b.add_argument("--period", type=float, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--check", action="store_true",
                   help="verify conformity after every kernel phase")

    v = sub.add_parser("verify", help="check a mesh file for conformity")
    v.add_argument("file")

    a = sub.add_parser("adapt", help="adapt a mesh file to a metric file")
    a.add_argument("--mesh", required=True)
    a.add_argument("--metric", required=True, help="per-vertex m00,m01,m11 CSV")
    a.add_argument("--out", required=True)
    a.add_argument("--threads", type=int, default=1)
    a.add_argument("--max-iters", type=int, default=20)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "bench":
        config = BenchConfig(n=args.n, steps=args.steps, threads=args.threads,
                             period=args.period, eta=args.eta, h_min=args.hmin,
                             h_max=args.hmax, target_elements=args.target_elems,
                             out_dir=args.out, vtk=args.vtk, check=args.check,
                             seed=args.seed)
        report = run_benchmark(config)
        means = report.mean_seconds()
        print(f"eta={report.eta_used:.6g} deterministic={report.deterministic}")
        for ph, sec in means.items():
            print(f"  mean {ph:8s} {sec * 1e3:9.2f} ms/step")
        print(f"steady-state elements: {report.steady_state_elements()}")
        for note in report.notes:
            print(f"note: {note}")
        return 0

    if args.command == "verify":
        mesh = read_mesh(args.file)
        report = verify(mesh)
        print(f"{args.file}: {mesh.stats_line()}: {report}")
        return 0 if report.ok else 1

    if args.command == "adapt":
        mesh = read_mesh(args.mesh)
        rep = verify(mesh)
        if not rep.ok:
            print(f"input mesh not conforming: {rep}", file=sys.stderr)
            return 1
        metric = read_metric_csv(args.metric, mesh)
        with ThreadTeam(args.threads) as team:
            result = adapt(mesh, metric, KernelParams(), team=team,
                           max_iterations=args.max_iters, check=True)
        write_mesh(mesh, args.out)
        print(f"adapted in {result.iterations} iteration(s): {mesh.stats_line()}, "
              f"mean quality {result.mean_quality:.3f}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
