import argparse
import json
import logging
from pathlib import Path

from src.errors import ConfigInvalidError, MeanFieldError
from src.models import MODEL_PRESETS
from src.runner.config import ExperimentConfig, load_config
from src.runner.manifest import build_manifest, write_manifest
from src.runner.report import evaluate_assertions, report, write_results
from src.runner.scenarios import SCENARIOS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_LEVELS = ('debug', 'info', 'warning', 'error')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def execute(config):
    """Run one validated config; returns (exit code, output directory)."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = SCENARIOS[config.command](config)
    try:
        scenario.setup(out_dir=out_dir)
        data = scenario.run()
    except (ConfigInvalidError, KeyError, ValueError) as exc:
        logger.error("invalid configuration: %s", exc)
        write_manifest(out_dir, build_manifest(config, 'config_invalid', f"{type(exc).__name__}: {exc}"))
        return EXIT_CONFIG, out_dir
    except MeanFieldError as exc:
        logger.error("%s failed: %s: %s", config.command, type(exc).__name__, exc)
        write_manifest(out_dir, build_manifest(config, 'runtime_failure', f"{type(exc).__name__}: {exc}"))
        return EXIT_RUNTIME, out_dir

    records = evaluate_assertions(data['summary'], config.assertions)
    write_results(out_dir, data, records)
    passed = all(r['passed'] for r in records)
    write_manifest(out_dir, build_manifest(config, 'passed' if passed else 'assertion_failed'))
    logger.info("%s finished: %d/%d assertions passed, results in %s", config.command,
                sum(r['passed'] for r in records), len(records), out_dir)
    return (EXIT_OK if passed else EXIT_ASSERTION), out_dir


def run_scenario(config_path, seed=None, threads=None, out=None):
    try:
        config = load_config(config_path).with_overrides(seed, threads, out)
    except ConfigInvalidError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG, None
    return execute(config)


def _read_json(path, field):
    try:
        with open(path) as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalidError(field, f"cannot read {path}: {exc}") from exc


def _time_list(text):
    try:
        return [float(t) for t in text.split(',') if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}") from exc


def raw_from_args(args):
    """Config document for a subcommand: the --config file overlaid with explicit flags."""
    raw = _read_json(args.config, 'config') if getattr(args, 'config', None) else {}
    base_dir = Path(args.config).parent if getattr(args, 'config', None) else Path('.')
    raw['command'] = args.command
    if getattr(args, 'model', None):
        params = raw.get('model', {}).get('params', {}) if raw.get('model', {}).get('name') == args.model else {}
        raw['model'] = {'name': args.model, 'params': params}
    if getattr(args, 'modulus', None):
        block = _read_json(args.modulus, 'modulus')
        raw['modulus'] = block.get('modulus', block)
    if getattr(args, 'metric', None):
        raw.setdefault('distance', {})['metric'] = args.metric
    if getattr(args, 'k', None) is not None:
        raw.setdefault('distance', {})['k'] = args.k
    for flag, key in (('in_a', 'a'), ('in_b', 'b')):
        if getattr(args, flag, None):
            raw.setdefault('inputs', {})[key] = str(Path(args.__dict__[flag]).resolve())
    for flag, key in (('gamma', 'gamma'), ('gamma_tilde', 'gamma_tilde')):
        if getattr(args, flag, None):
            raw.setdefault('initial', {})[key] = str(Path(args.__dict__[flag]).resolve())
    if getattr(args, 'f', None):
        raw['functional'] = {'name': args.f}
    if getattr(args, 'phi', None):
        raw['direction'] = {'name': args.phi}
    times = getattr(args, 't', None) or getattr(args, 't_grid', None)
    if times:
        raw['t_grid'] = times
    if args.seed is not None:
        raw['seed'] = args.seed
    return raw, base_dir


def _add_global_flags(parser, suppress):
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument('--seed', type=int, default=default(None), help='master seed (overrides the config)')
    parser.add_argument('--threads', type=int, default=default(None), help='worker threads for particle chunks')
    parser.add_argument('--out', default=default(None), help='output directory')
    parser.add_argument('--log-level', choices=LOG_LEVELS, default=default('info'))


def build_parser():
    parser = argparse.ArgumentParser(prog='main.py', description='Mean-field particle toolkit.')
    _add_global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', parents=[common], help='run a scenario config')
    p.add_argument('scenario', help='path to a .cfg file')

    p = sub.add_parser('validate-modulus', parents=[common], help='check a Dini modulus')
    p.add_argument('--config', required=True)

    p = sub.add_parser('simulate', parents=[common], help='simulate the particle system')
    p.add_argument('--model', required=True, choices=sorted(MODEL_PRESETS))
    p.add_argument('--config')

    p = sub.add_parser('wasserstein', parents=[common], help='distance between two point clouds')
    p.add_argument('--metric', choices=('wk', 'walpha'), default='wk')
    p.add_argument('--k', type=float)
    p.add_argument('--modulus', help='JSON file holding a modulus block')
    p.add_argument('--in-a', required=True)
    p.add_argument('--in-b', required=True)
    p.add_argument('--config')

    p = sub.add_parser('bismut', parents=[common], help='intrinsic derivative estimates')
    p.add_argument('--model', required=True, choices=sorted(MODEL_PRESETS))
    p.add_argument('--f')
    p.add_argument('--phi')
    p.add_argument('--t', type=_time_list)
    p.add_argument('--config')

    p = sub.add_parser('harnack', parents=[common], help='entropy-cost, log-Harnack and decay checks')
    p.add_argument('--model', required=True, choices=sorted(MODEL_PRESETS))
    p.add_argument('--gamma')
    p.add_argument('--gamma-tilde')
    p.add_argument('--t-grid', type=_time_list)
    p.add_argument('--config')

    p = sub.add_parser('check-assumptions', parents=[common], help='sample-based audit of a model')
    p.add_argument('--model', required=True, choices=sorted(MODEL_PRESETS))
    p.add_argument('--config')

    p = sub.add_parser('report', parents=[common], help='merge run directories into a report')
    p.add_argument('dirs', nargs='+')
    return parser


def dispatch(args):
    if args.command == 'run':
        return run_scenario(args.scenario, args.seed, args.threads, args.out)[0]
    if args.command == 'report':
        try:
            report(args.dirs, args.out)
        except MeanFieldError as exc:
            logger.error("report failed: %s", exc)
            return EXIT_RUNTIME
        return EXIT_OK
    try:
        raw, base_dir = raw_from_args(args)
        config = ExperimentConfig.from_dict(raw, base_dir=base_dir).with_overrides(None, args.threads, args.out)
    except ConfigInvalidError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    return execute(config)[0]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()), format=LOG_FORMAT)
    return dispatch(args)
