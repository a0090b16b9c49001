"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 invariant violation or
singular system, 4 inter-rank protocol failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .bg_mesh import build_cartesian_mesh
from .config import EXPERIMENTS, RunConfig
from .errors import ConfigError, CutprepError
from .parallel import decompose, parse_rank_grid, run_parallel
from .pipeline import STAGES, run_serial

log = logging.getLogger("cutprep")


def build_parser():
    p = argparse.ArgumentParser(prog="cutprep", description="Immersed-boundary preprocessing on B-spline meshes.")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--ranks", help="rank grid, e.g. 2x2 (overrides the config)")
    p.add_argument("--export-mesh", metavar="PATH", help="legacy VTK file of the foreground mesh")
    p.add_argument("--export-clusters", metavar="PATH", help="JSON-lines dump of all clusters")
    p.add_argument("--export-enriched", metavar="PATH", help="enriched basis table")
    p.add_argument("--export-graphs", metavar="PATH", help="subphase graph edge list")
    p.add_argument("--stats", metavar="PATH", help="write the stats report here instead of stdout")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="run a verification experiment")
    p.add_argument("--seed", type=int, help="random seed for experiments")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan, run nothing")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _merge_args(cfg, args):
    if args.ranks:
        cfg.ranks = args.ranks
    if args.experiment:
        cfg.experiment = args.experiment
    if args.seed is not None:
        cfg.seed = args.seed
    for attr, name in (("export_mesh", "mesh"), ("export_clusters", "clusters"), ("export_enriched", "enriched"),
                       ("export_graphs", "graphs"), ("stats", "stats")):
        v = getattr(args, attr)
        if v:
            setattr(cfg.output, name, v)
    return cfg


def plan(cfg, rank_grid):
    m = cfg.mesh
    dec = decompose(m.dim, m.elements, m.origin, m.h, m.degree, rank_grid)
    lines = [f"mesh       dim={m.dim} elements={list(m.elements)} h={list(m.h)} degree={m.degree}",
             f"geometry   {len(cfg.geometries)} object(s): " + "; ".join(cfg.geometries),
             f"materials  {'identity' if cfg.material_map is None else cfg.material_map} void={cfg.void}",
             f"ranks      {'x'.join(map(str, rank_grid))}"]
    for c in dec.contexts:
        lines.append(f"  rank {c.rank}: owned {c.n_owned} held {c.n_held} neighbors {list(c.neighbors)}")
    lines.append("stages     " + " ".join(STAGES))
    return "\n".join(lines)


def run_pipeline(cfg, base_dir="."):
    m = cfg.mesh
    geoms = cfg.build_geometries(base_dir)
    mmap = cfg.build_material_map()
    rank_grid = parse_rank_grid(cfg.ranks, m.dim)
    if np.prod(rank_grid) == 1:
        bg = build_cartesian_mesh(m.dim, m.elements, m.origin, m.h, m.degree)
        res = run_serial(bg, geoms, mmap, tuple(cfg.void), cfg.enrich, cfg.bulk_order)
        return [res], None
    run = run_parallel(m.dim, m.elements, m.origin, m.h, m.degree, rank_grid, geoms, mmap,
                       tuple(cfg.void), cfg.enrich, cfg.bulk_order)
    return run.results, run.contexts


def run_experiment(cfg):
    from .verify import experiments as ex

    opts = dict(cfg.experiment_options)
    if cfg.experiment == "multibeam":
        return ex.run_multibeam_experiment(ex.MultibeamConfig(**opts))
    if cfg.experiment == "brickwall":
        opts.setdefault("seed", cfg.seed)
        if "deltas_over_h" in opts:
            opts["deltas_over_h"] = tuple(opts["deltas_over_h"])
        return ex.run_brickwall_experiment_2d(ex.BrickwallConfig(**opts))
    return ex.run_scaling_experiment(**opts)


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        base_dir = Path(args.config).parent if args.config else Path(".")
        _merge_args(cfg, args)
        if cfg.experiment is None:
            if not cfg.geometries:
                raise ConfigError("no geometries given; use --config or --experiment")
            cfg.validate()
            rank_grid = parse_rank_grid(cfg.ranks, cfg.mesh.dim)
            if args.dry_run:
                print(plan(cfg, rank_grid))
                return 0
            results, contexts = run_pipeline(cfg, base_dir)
            out = cfg.output
            if out.mesh:
                io.write_vtk(results, out.mesh)
            if out.clusters:
                io.write_clusters(results, out.clusters)
            if out.enriched:
                io.write_enriched(results, out.enriched)
            if out.graphs:
                io.write_graphs(results, out.graphs)
            _emit(io.format_stats(io.run_stats(results, contexts)), out.stats)
        else:
            if args.dry_run:
                print(f"experiment {cfg.experiment} seed={cfg.seed} options={cfg.experiment_options}")
                return 0
            report = run_experiment(cfg)
            _emit(json.dumps(report, indent=1, default=_jsonable) + "\n", cfg.output.stats)
        return 0
    except CutprepError as e:
        print(f"cutprep: error: {e}", file=sys.stderr)
        return getattr(e, "exit_code", 1)
    except TypeError as e:
        # unknown experiment options surface as dataclass/keyword errors
        print(f"cutprep: error: invalid experiment options: {e}", file=sys.stderr)
        return ConfigError.exit_code


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
