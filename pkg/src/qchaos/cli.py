"""Command line front end: ``qchaos <command> --config manifest.yaml``."""

from __future__ import annotations

import argparse
import json
import sys

from .ensemble import COMMANDS, ManifestError, manifest_from_dict, run_ensemble
from .register import ConfigError

import yaml


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="qchaos", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "eigenvalues with eigenstate entropy and participation",
        "strength": "strength-function pairs and Breit-Wigner fits",
        "evolve": "survival probability, entropy and participation versus time",
        "tc-scan": "measured and predicted critical time over n_grid",
        "jc-scan": "eigenstate entropy and gap ratio versus coupling",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="manifest file (YAML or JSON)")
        sp.add_argument("--out", help="output directory (overrides the manifest)")
        sp.add_argument("--realizations", type=int, help="number of disorder draws")
        sp.add_argument("--seed", type=_u64, help="master seed (overrides register)")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--store-components", type=_bool, metavar="BOOL",
                        help="evolve: write the top_m component trajectories")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            d = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        print(f"qchaos: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    if isinstance(d, dict):
        if args.realizations is not None:
            d["realizations"] = args.realizations
        if args.threads is not None:
            d["threads"] = args.threads
        if args.out is not None:
            d["out"] = args.out
        if args.store_components is not None:
            d["store_components"] = args.store_components
        if args.seed is not None and isinstance(d.get("register"), dict):
            d["register"]["master_seed"] = args.seed
    try:
        manifest = manifest_from_dict(d, command=args.command)
    except ManifestError as exc:
        print("qchaos: invalid manifest", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"qchaos: {exc}", file=sys.stderr)
        return 2
    summary = run_ensemble(manifest)
    json.dump(summary.to_dict(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 1 if summary.failures else 0


if __name__ == "__main__":
    sys.exit(main())
