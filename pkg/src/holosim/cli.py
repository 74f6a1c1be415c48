"""Command-line entry point.

Subcommands
-----------
simulate           full run (one directory per replicate when ``replicates > 1``)
calibrate-effects  taxa-heritability profile over a grid of genetic effect sizes
synthesize-base    write a synthetic paired base population
replay-summary     recompute ``summary.jsonl`` from exported tables

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, DataError
from .genome import GeneticMap
from .io import generate_synthetic_base, load_base_inputs, write_base_inputs
from .microbiome import (cluster_taxa, default_qtl_o, select_genetic_clusters,
                         taxa_heritability_profile)
from .reporting import emit_plot_data, export_run, replay_summary, write_jsonl
from .rng import StreamFactory, make_rng
from .simulation import run_replicates, run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("holosim")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_inputs(p):
    p.add_argument("--base-genotypes", required=True, metavar="PATH")
    p.add_argument("--base-microbiota", required=True, metavar="PATH")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=_u64, help="overrides the config seed")
    p.add_argument("--out", required=True, metavar="DIR")


def build_parser():
    parser = argparse.ArgumentParser(prog="holosim",
                                     description="Transgenerational hologenomic simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate G0..G_n_gen and export every generation")
    _add_inputs(p)
    p.add_argument("--genetic-map", metavar="PATH",
                   help="TSV with chromosome, snp_id, position_morgans columns "
                        "(default: one 1-Morgan chromosome)")
    p.add_argument("--replicates", type=int, help="overrides the config replicate count")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replicates")
    p.add_argument("--export-clr", action="store_true")
    p.add_argument("--export-counts", action="store_true")

    p = sub.add_parser("calibrate-effects", help="taxa heritability per genetic effect size")
    _add_inputs(p)
    p.add_argument("--effect-sizes", type=_float_list, default=[0.1, 0.3, 0.5],
                   help="grid of sigma_beta*sqrt(QTL_o) values (default 0.1,0.3,0.5)")

    p = sub.add_parser("synthesize-base", help="write a synthetic base population")
    p.add_argument("--n-snps", type=int, default=1000)
    p.add_argument("--n-taxa", type=int, default=400)
    p.add_argument("--n-individuals", type=int, default=300)
    p.add_argument("--depth", type=int, default=5000)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("replay-summary", help="recompute summaries from an exported run")
    p.add_argument("run_dir", metavar="RUN_DIR")
    p.add_argument("--out", metavar="FILE", help="write JSONL here instead of stdout")
    return parser


def _resolve_config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "replicates", None) is not None:
        overrides.append(f"replicates={args.replicates}")
    return load_config(args.config, overrides)


def cmd_simulate(args):
    started = time.perf_counter()
    config = _resolve_config(args)
    base = load_base_inputs(args.base_genotypes, args.base_microbiota)
    gmap = GeneticMap.from_tsv(args.genetic_map, base.snp_ids) if args.genetic_map else None
    out = Path(args.out)
    if config.replicates == 1:
        records, effects = run_simulation(base, config, 0, gmap)
        export_run(records, effects, config, out, args.export_clr, args.export_counts, started)
        log.info("wrote %d generations to %s", len(records), out)
        return EXIT_OK
    reducer = _Exporter(out, config, args.export_clr, args.export_counts)
    result = run_replicates(base, config, parallelism=args.jobs, reducer=reducer, genetic_map=gmap)
    write_jsonl(out / "aggregate.jsonl", result.aggregate)
    for r, err in sorted(result.failures.items()):
        log.error("replicate %d failed: %s", r, err.strip().splitlines()[-1])
    return EXIT_RUNTIME if result.failures else EXIT_OK


class _Exporter:
    """Picklable reducer: export one replicate inside the worker, return nothing big."""

    def __init__(self, out, config, write_clr, write_counts):
        self.out, self.config = Path(out), config
        self.write_clr, self.write_counts = write_clr, write_counts

    def __call__(self, r, records, effects):
        export_run(records, effects, self.config, self.out / f"rep_{r:03d}",
                   self.write_clr, self.write_counts)
        return None


def cmd_calibrate(args):
    config = _resolve_config(args)
    base = load_base_inputs(args.base_genotypes, args.base_microbiota)
    streams = StreamFactory(config.seed, 0)
    clustering = cluster_taxa(base.taxa_counts, config.n_clusters)
    clustering = select_genetic_clusters(clustering, config.otu_g, streams.get("genetic_clusters"),
                                         config.cluster_size_min, config.cluster_size_max)
    qtl_o = config.qtl_o or default_qtl_o(base.n_snps, len(clustering.genetic_clusters),
                                          config.qtl_o_fraction)
    sigmas = np.asarray(args.effect_sizes) / np.sqrt(qtl_o)
    profile = taxa_heritability_profile(base, sigmas, config, streams, clustering)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_plot_data("heritability_density", profile, out / "heritability_density.tsv")
    med = profile.genetic_median()
    for es, s, m in zip(args.effect_sizes, sigmas, med):
        print(f"effect_size={es:g}\tsigma_beta={s:.6g}\tmedian_h2_genetic={m:.4f}")
    return EXIT_OK


def cmd_synthesize(args):
    base = generate_synthetic_base(args.n_snps, args.n_taxa, args.n_individuals,
                                   make_rng(args.seed), depth=args.depth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_base_inputs(base, out / "genotypes.tsv", out / "microbiota.tsv")
    print(f"wrote {out / 'genotypes.tsv'} and {out / 'microbiota.tsv'}")
    return EXIT_OK


def cmd_replay(args):
    rows = replay_summary(args.run_dir)
    if args.out:
        write_jsonl(args.out, rows)
    else:
        for row in rows:
            sys.stdout.write(json.dumps(row, sort_keys=True) + "\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "calibrate-effects": cmd_calibrate,
            "synthesize-base": cmd_synthesize, "replay-summary": cmd_replay}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the config-error code
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit code
        log.error("runtime failure: %s", exc, exc_info=args.verbose)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
