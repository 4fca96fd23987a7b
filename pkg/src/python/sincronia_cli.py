#!/usr/bin/env python3
"""
Sincronia - Kuramoto model on uniform graphs and its continuum limit
"""

import argparse
import logging
import sys
from pathlib import Path

from config import COMMON_PARAMETERS, SCENARIO_PARAMETERS, __version__
from experiments import run_scenario
from scenario_config import ConfigError, ScenarioConfig, resolve_threads

DESCRIPTIONS = {
    'selfconsistency': 'Self-consistency constant C over a grid of pK/a',
    'simulate': 'Simulate one Kuramoto system and compare with the stable profile',
    'bifurcate': 'Phase gap of the extreme oscillators over a coupling sweep',
    'convergence': 'Distance between the Kuramoto model and the continuum limit as n grows',
    'permutation': 'Sorted random frequencies against their quantile targets',
    'instability': 'Perturb a stationary family and watch for escape',
}


def build_parser():
    parser = argparse.ArgumentParser(description='Kuramoto model on uniform graphs and its continuum limit')
    parser.add_argument('--version', action='version', version=f'sincronia {__version__}')
    sub = parser.add_subparsers(dest='scenario', required=True)
    for scenario, description in DESCRIPTIONS.items():
        p = sub.add_parser(scenario, help=description, description=description)
        p.add_argument('--config', type=Path, help='JSON file with scenario parameters')
        p.add_argument('--out-dir', type=Path, default=Path('results') / scenario,
                       help='Directory for CSV and JSON outputs (default: results/<scenario>)')
        p.add_argument('--threads', type=int, help='Worker count (default: $SINCRONIA_THREADS or physical cores)')
        p.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
        # flags stay None unless given so that config-file values survive
        for name, (kind, default, _) in {**COMMON_PARAMETERS, **SCENARIO_PARAMETERS[scenario]}.items():
            shown = ','.join(str(v) for v in default) if isinstance(default, list) else default
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None,
                           help=f"{kind} (default: {shown})")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')

    schema = ScenarioConfig.schema(args.scenario)
    overrides = {name: getattr(args, name) for name in schema}
    try:
        cfg = ScenarioConfig.load(args.scenario, args.config, overrides)
        threads = resolve_threads(args.threads)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 2

    print(f"🚀 sincronia {args.scenario} -> {args.out_dir} ({threads} threads)")
    print("=" * 60)
    manifest = run_scenario(cfg, args.out_dir, threads=threads)
    if manifest.passed:
        print("✅ All checks passed")
        return 0
    if manifest.error:
        print(f"❌ {manifest.error}")
    for name in manifest.failed:
        print(f"❌ {name}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
