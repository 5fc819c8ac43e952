"""``bench`` command-line entry point.

Exit status: 0 when every check passed, 1 on check failures, 2 on usage errors
(bad arguments, unreadable or malformed input files).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import FormatError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _scene(text: str):
    from .bench import parse_scene_spec

    try:
        return parse_scene_spec(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _generate(spec):
    from .bench import generate_scene

    spec = dict(spec)
    try:
        return generate_scene(spec.pop("kind"), **spec)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scene: {exc}") from None


def cmd_run(args) -> int:
    from .bench import emit_report, load_config, run_matrix

    try:
        config = load_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    if args.backend:
        config.backend = args.backend
    report = run_matrix(config)
    csv_bytes = emit_report(report, "csv")
    if config.csv:
        Path(config.csv).write_bytes(csv_bytes)
    if config.json:
        Path(config.json).write_bytes(emit_report(report, "json"))
    if not config.csv or args.verbose:
        sys.stdout.write(csv_bytes.decode())
    for row in report.rows:
        if row.status != "ok":
            print(f"FAIL {row.variant}: {row.status}", file=sys.stderr)
    return EXIT_OK if report.all_ok else EXIT_FAIL


def cmd_convert(args) -> int:
    import time

    from .grid import deserialize_dense
    from .tree import build_sparse, memory_bytes, serialize

    try:
        dense = deserialize_dense(Path(args.inp).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from None
    except FormatError as exc:
        raise UsageError(f"{args.inp}: {exc}") from None
    start = time.perf_counter()
    sparse = build_sparse(dense)
    ms = (time.perf_counter() - start) * 1e3
    ok = bool((sparse.to_dense().occupancy == dense.occupancy).all())
    Path(args.out).write_bytes(serialize(sparse))
    print(f"convert_ms\t{ms:.3f}\nleaves\t{sparse.leaf_count}\ninternals\t{sparse.internal_count}\n"
          f"dense_bytes\t{memory_bytes(dense)}\nsparse_bytes\t{memory_bytes(sparse)}\n"
          f"equivalent\t{int(ok)}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_render(args) -> int:
    from .bench import parse_variant
    from .render import Camera, render
    from .sampling import CascadeGrid, StepSchedule
    from .traversal import build_distance
    from .tree import build_sparse

    try:
        gk, an, kn = parse_variant(args.variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scene, grid = _generate(_scene(args.scene))
    if gk == "sparse":
        grid = grid.sparse() if isinstance(grid, CascadeGrid) else build_sparse(grid)
    elif an == "cd":
        if isinstance(grid, CascadeGrid):
            raise UsageError("cd analyzer does not support cascades")
        grid = build_distance(grid, args.backend)
    base = grid.levels[0] if isinstance(grid, CascadeGrid) else grid
    sched = StepSchedule.constant(args.dt or base.transform.voxel_size * 0.5)
    camera = Camera(width=args.width, height=args.height)
    image = render(scene, grid, camera, an, kn, sched, args.backend)
    out = Path(args.out)
    if out.suffix.lower() == ".png":
        try:
            image.write_png(out)
        except ImportError:
            raise UsageError("PNG output needs Pillow; install the 'png' extra") from None
    else:
        image.write_ppm(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .bench import verify_scene

    spec = _scene(args.scene)
    _generate(spec)  # validate before running the suite
    results = verify_scene(spec, n_rays=args.rays, seed=args.seed, backend=args.backend)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}\t{name}\t{detail}")
    return EXIT_OK if all(p for _, p, _ in results) else EXIT_FAIL


def cmd_generate(args) -> int:
    from .grid import serialize_dense
    from .sampling import CascadeGrid

    _, grid = _generate(_scene(args.scene))
    if isinstance(grid, CascadeGrid):
        raise UsageError("generate writes a single grid; drop the cascades parameter")
    Path(args.out).write_bytes(serialize_dense(grid))
    print(f"occupied\t{grid.count()}\nvoxels\t{grid.transform.n_voxels}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Occupancy-grid sampler benchmarks.")
    p.add_argument("--backend", choices=("compiled", "python"), default=None,
                   help="kernel backend (default: compiled when available)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the variant matrix from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("-v", "--verbose", action="store_true", help="echo CSV even when written to a file")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convert", help="convert a SOG0 dense grid into a SOG1 sparse grid")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("render", help="render a generated scene with one variant")
    s.add_argument("--scene", required=True, help="kind[:key=value,...], e.g. blobs:seed=3,fraction=0.05")
    s.add_argument("--variant", required=True, help="e.g. sparse+hdda+skip")
    s.add_argument("--out", required=True, help=".ppm, or .png with Pillow installed")
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--dt", type=float, default=0.0, help="constant step (default half a voxel)")
    s.set_defaults(func=cmd_render)

    v = sub.add_parser("verify", help="run equivalence checks on a generated scene")
    v.add_argument("--scene", required=True)
    v.add_argument("--rays", type=int, default=256)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="write a generated scene's occupancy as SOG0")
    g.add_argument("--scene", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
