"""
Command-line entry point.

    slepian-qns dpss        --preset dpss128 --out run/
    slepian-qns filters     --preset fig1 --out run/
    slepian-qns simulate    --preset fig2 --out run/
    slepian-qns reconstruct --preset fig2 --dataset run/tomography.txt --out run/
    slepian-qns compare     --preset fig4e --out run/

``--config`` reads a YAML/JSON file that is merged over the preset, and
``--seed`` overrides its seed. Every run writes ``manifest.json`` with the
resolved configuration, its hash, the seed, package versions and the
SHA-256 of each output file. Exit status is 0 on success, 2 for invalid
input and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .errors import NumericalError, ValidationError
from .experiments import (
    PRESETS,
    Table,
    TomographyDataset,
    compare,
    dpss_tables,
    filter_tables,
    preset,
    reconstruct,
    reconstruction_tables,
    simulate,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("dpss", "filters", "simulate", "reconstruct", "compare")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slepian-qns", description="Slepian-sequence noise spectroscopy")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "dpss": "DPSS sequences, eigenvalues and DPSWF",
        "filters": "control waveforms and their filter functions",
        "simulate": "simulated three-axis tomography dataset",
        "reconstruct": "spectrum estimates from a tomography dataset",
        "compare": "DPSS vs CPMG vs A-S reconstructions of synthetic spectra",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, help="YAML or JSON config, merged over the preset")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a shipped configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        if name == "reconstruct":
            p.add_argument("--dataset", type=Path, required=True, help="tomography.txt from the simulate command")
    return parser


def _versions() -> dict:
    return {"slepian_qns": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_outputs(out: Path, tables: dict[str, Table], extra_json: dict | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, table in sorted(tables.items()):
        text = table.to_text()
        (out / f"{name}.txt").write_text(text)
        digests[f"{name}.txt"] = hashlib.sha256(text.encode()).hexdigest()
    for name, payload in sorted((extra_json or {}).items()):
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        (out / name).write_text(text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    return digests


def run(args: argparse.Namespace) -> dict[str, str]:
    """Execute one subcommand; returns output file digests."""
    base = preset(args.preset) if args.preset else None
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = load_config(args.config, base, overrides)
    extra = {}
    if args.command == "dpss":
        tables = dpss_tables(cfg)
    elif args.command == "filters":
        tables = filter_tables(cfg)
    elif args.command == "simulate":
        tables = {"tomography": simulate(cfg).table()}
    elif args.command == "reconstruct":
        dataset = TomographyDataset.read(args.dataset)
        tables = reconstruction_tables(reconstruct(cfg, dataset))
    else:
        result = compare(cfg)
        tables = reconstruction_tables(result.results)
        tables["scan_range"] = result.scan_ranges
        extra["report.json"] = result.metrics
    digests = _write_outputs(args.out, tables, extra)
    manifest = {
        "command": args.command,
        "preset": args.preset,
        "seed": cfg.seed,
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "versions": _versions(),
        "outputs": digests,
    }
    if args.command == "reconstruct":
        manifest["dataset_sha256"] = hashlib.sha256(args.dataset.read_bytes()).hexdigest()
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return digests


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        digests = run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name in digests:
        print(args.out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
