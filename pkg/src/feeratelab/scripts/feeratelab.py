# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from argparse import ArgumentParser, Namespace
from dataclasses import dataclass, replace
from functools import partial
from importlib.metadata import PackageNotFoundError, version as package_version
from logging import DEBUG, INFO, StreamHandler, getLogger
from pathlib import Path
from sys import stderr, stdout

import pandas as pd

from ..bcore import BCoreConfig, BCoreEngine, BCoreEra, BCoreMode
from ..btcflow import DEFAULT_BLOCK_WEIGHT, MINUTES_PER_BLOCK, BtcFlowConfig, BtcFlowEngine, BtcFlowPreset, build_flows
from ..btcflow import estimate as btcflow_estimate
from ..common_util import default_seed, read_config, require_number, write_config
from ..core_model import ChainView, EstimateRequest, FeeEngine, Transaction
from ..errors import ConfigError, FeeLabError, InvalidInputError
from ..fenn import FennAblation, FennEngine, FennHyper, FennModel, FennVariant, build_training_set, network_suite
from ..fenn import estimate_fee as fenn_estimate_fee
from ..harness import (
    RETRAIN_POLICIES,
    SplitSpec,
    ablation_experiment,
    compare_feerates,
    retrain_frequency_experiment,
    run_benchmark,
    timing_experiment,
)
from ..ingestion import SynthConfig, load_chain, reconstruct_mempool, synth_generate, write_chain, write_chain_json
from ..mslp import MslpConfig, MslpEngine, MslpModels
from ..mslp import estimate as mslp_estimate
from ..nn import layer_suite


##########################################################################################
# Constants
##########################################################################################

_run_config_name = 'run-config.json'
_mslp_checkpoint_name = 'mslp.ckpt'

'''
Engines evaluated by "--engines all".
'''
_all_engines = ('btcflow', 'bcore', 'mslp', 'fenn-adv')


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class RunConfig:
    '''
    Dataclass encoding an invocation, echoed into every output directory.

    subcommand - the subcommand that ran
    argv       - the full argument list (without program name)
    seed       - the resolved seed
    version    - package version that produced the outputs
    '''

    subcommand: str
    argv: list[str]
    seed: int
    version: str

    @staticmethod
    def from_path(path: Path) -> RunConfig:
        config_data = read_config(path, entries=('subcommand', 'argv', 'seed', 'version'))

        argv = config_data['argv']
        if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
            raise ConfigError(f'invalid argv entry: {argv}')

        return RunConfig(
            subcommand=str(config_data['subcommand']),
            argv=argv,
            seed=int(require_number(config_data, 'seed', minimum=0, integer=True)),
            version=str(config_data['version']),
        )

    def write(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)

        write_config(directory / _run_config_name, {
            'subcommand': self.subcommand,
            'argv': self.argv,
            'seed': self.seed,
            'version': self.version,
        })


##########################################################################################
# Internal functions
##########################################################################################

def _version() -> str:
    try:
        return package_version('feeratelab')

    except PackageNotFoundError:
        return 'unknown'

def _echo(parsed_args: Namespace, argv: list[str], directory: Path) -> None:
    seed = _seed(parsed_args)
    argv = list(argv)

    # Replays run with the resolved seed.
    if hasattr(parsed_args, 'seed') and parsed_args.seed is None:
        argv += ['--seed', str(seed)]

    RunConfig(parsed_args.command, argv, seed, _version()).write(directory)

def _seed(parsed_args: Namespace) -> int:
    seed = getattr(parsed_args, 'seed', None)

    return default_seed() if seed is None else seed

def _block_weight(parsed_args: Namespace, chain: ChainView) -> float:
    '''
    Block weight of the virtual block models, "auto" takes the heaviest block.
    '''

    if parsed_args.block_weight != 'auto':
        try:
            value = float(parsed_args.block_weight)

        except ValueError:
            raise InvalidInputError(f'invalid block weight: {parsed_args.block_weight}') from None

        return value

    heaviest = chain.max_block_weight()

    return float(heaviest) if heaviest > 0 else DEFAULT_BLOCK_WEIGHT

def _fenn_hyper(parsed_args: Namespace) -> FennHyper:
    hyper = FennHyper(seed=_seed(parsed_args), literal_lstm=parsed_args.literal_lstm)

    if parsed_args.epochs is not None:
        hyper = replace(hyper, epochs=parsed_args.epochs)

    if parsed_args.batch_size is not None:
        hyper = replace(hyper, batch_size=parsed_args.batch_size)

    if parsed_args.lr is not None:
        hyper = replace(hyper, lr=parsed_args.lr)

    return hyper

def _mslp_config(parsed_args: Namespace, chain: ChainView) -> MslpConfig:
    return MslpConfig(block_weight=_block_weight(parsed_args, chain), seed=_seed(parsed_args))

def _btcflow_config(parsed_args: Namespace, chain: ChainView) -> BtcFlowConfig:
    config = BtcFlowConfig.from_preset(BtcFlowPreset.from_string(parsed_args.preset), _block_weight(parsed_args, chain))

    if getattr(parsed_args, 'p', None) is not None:
        config = replace(config, p=parsed_args.p)

    return config

def _bcore_config(parsed_args: Namespace) -> BCoreConfig:
    return BCoreConfig(era=BCoreEra.from_string(parsed_args.era), mode=BCoreMode.from_string(parsed_args.mode))

def _make_engine(name: str, parsed_args: Namespace, chain: ChainView) -> FeeEngine:
    if name == 'btcflow':
        return BtcFlowEngine(_btcflow_config(parsed_args, chain))
    elif name == 'bcore':
        return BCoreEngine(_bcore_config(parsed_args))
    elif name == 'mslp':
        return MslpEngine(_mslp_config(parsed_args, chain))
    elif name == 'fenn':
        return FennEngine(FennVariant.Adv, FennAblation.Full, _fenn_hyper(parsed_args))
    elif name.startswith('fenn-'):
        return FennEngine(FennVariant.from_string(name.removeprefix('fenn-')), FennAblation.Full, _fenn_hyper(parsed_args))

    raise InvalidInputError(f'unknown engine: {name}')

def _engine_names(value: str) -> list[str]:
    if value == 'all':
        return list(_all_engines)

    names = [n.strip() for n in value.split(',') if len(n.strip()) != 0]
    if len(names) == 0:
        raise InvalidInputError('no engines selected')

    return names

def _int_list(value: str) -> list[int]:
    try:
        return [int(v) for v in value.split(',') if len(v.strip()) != 0]

    except ValueError:
        raise InvalidInputError(f'invalid integer list: {value}') from None

def _request_skeleton(parsed_args: Namespace, chain: ChainView, height: int) -> Transaction:
    return Transaction(
        txid='request',
        version=parsed_args.version,
        size=parsed_args.size,
        weight=parsed_args.weight,
        inputs=parsed_args.inputs,
        outputs=parsed_args.outputs,
        fee=None,
        first_seen_time=chain.block_at(height).timestamp,
        entry_height=height,
    )

def _cmd_ingest(parsed_args: Namespace, argv: list[str]) -> int:
    chain = load_chain(Path(parsed_args.data))

    print(f'info: {len(chain.blocks)} blocks, {len(chain.transactions)} transactions, tip height {chain.tip_height}', file=stdout)

    if parsed_args.out is not None:
        out = Path(parsed_args.out)

        if parsed_args.json:
            out.mkdir(parents=True, exist_ok=True)
            write_chain_json(chain, out / 'chain.json')
        else:
            write_chain(chain, out)

        _echo(parsed_args, argv, out)

    return 0

def _cmd_synth(parsed_args: Namespace, argv: list[str]) -> int:
    config = SynthConfig.from_path(Path(parsed_args.config)) if parsed_args.config is not None else SynthConfig()

    overrides = {
        'n_blocks': parsed_args.blocks,
        'seed': parsed_args.seed,
        'block_weight_limit': parsed_args.block_weight_limit,
        'tx_arrival_rate': parsed_args.arrival_rate,
        'feerate_drift': parsed_args.drift,
    }

    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})

    chain = synth_generate(config)
    out = Path(parsed_args.out)

    write_chain(chain, out)
    config.write(out / 'synth-config.json')
    _echo(parsed_args, argv, out)

    print(f'info: wrote {len(chain.blocks)} blocks and {len(chain.transactions)} transactions to {out}', file=stdout)

    return 0

def _cmd_train(parsed_args: Namespace, argv: list[str]) -> int:
    chain = load_chain(Path(parsed_args.data))
    until = parsed_args.until if parsed_args.until is not None else chain.tip_height + 1

    out = Path(parsed_args.out)
    out.mkdir(parents=True, exist_ok=True)

    if parsed_args.engine == 'mslp':
        engine = MslpEngine(_mslp_config(parsed_args, chain))
        engine.fit(chain, until)
        engine.models.save(out / _mslp_checkpoint_name)

        print(f'info: MSLP ranges trained: {sum(engine.models.is_trained(r) for r in engine.models.models)}', file=stdout)
    else:
        engine = FennEngine(
            FennVariant.from_string(parsed_args.variant),
            FennAblation.from_string(parsed_args.ablation),
            _fenn_hyper(parsed_args),
            window=parsed_args.window,
        )

        engine.fit(chain, until)
        engine.model.save(out)

        history = pd.DataFrame({'epoch': range(1, len(engine.model.loss_history) + 1), 'loss': engine.model.loss_history})
        history.to_csv(out / 'loss.csv', index=False)

        print(f'info: {engine.name} trained in {engine.model.train_seconds:.2f}s, final loss {engine.model.loss_history[-1]:.6f}', file=stdout)

    _echo(parsed_args, argv, out)

    return 0

def _cmd_estimate(parsed_args: Namespace, argv: list[str]) -> int:
    chain = load_chain(Path(parsed_args.data))
    height = parsed_args.height if parsed_args.height is not None else chain.tip_height

    view = chain.as_of(height)
    mempool = reconstruct_mempool(view, height)
    skeleton = _request_skeleton(parsed_args, view, height)

    if parsed_args.minutes is None and parsed_args.blocks is None:
        raise InvalidInputError('either --blocks or --minutes is required')

    if parsed_args.engine == 'btcflow':
        config = _btcflow_config(parsed_args, view)
        minutes = parsed_args.minutes if parsed_args.minutes is not None else parsed_args.blocks * MINUTES_PER_BLOCK

        flows = build_flows(view, mempool, minutes, config)
        result = btcflow_estimate(EstimateRequest(skeleton, horizon_minutes=minutes), flows, config)

        if result.low_confidence:
            print('warn: no projected outflow, estimate is the highest feerate scale', file=stderr)

        print(f'{result.feerate:g}', file=stdout)

        return 0

    if parsed_args.blocks is None:
        raise InvalidInputError(f'engine {parsed_args.engine} needs --blocks')

    request = EstimateRequest(skeleton, horizon_blocks=parsed_args.blocks)

    if parsed_args.engine == 'bcore':
        engine = BCoreEngine(_bcore_config(parsed_args))
        engine.fit(view, height + 1)

        print(f'{engine.estimate_feerate(request.blocks, view, mempool, skeleton):g}', file=stdout)

        return 0

    if parsed_args.model is None:
        raise InvalidInputError(f'engine {parsed_args.engine} needs --model')

    model_path = Path(parsed_args.model)

    if parsed_args.engine == 'mslp':
        if model_path.is_dir():
            model_path = model_path / _mslp_checkpoint_name

        models = MslpModels.load(model_path)
        feerate = mslp_estimate(request, mempool, models, models.config_for(_mslp_config(parsed_args, view)))

        print(f'{feerate:g}', file=stdout)
    else:
        fee = fenn_estimate_fee(request, mempool, view, FennModel.load(model_path))

        print(f'{fee:g}', file=stdout)

    return 0

def _cmd_evaluate(parsed_args: Namespace, argv: list[str]) -> int:
    chain = load_chain(Path(parsed_args.data))
    split = SplitSpec(parsed_args.train, parsed_args.test, parsed_args.offset)

    out = Path(parsed_args.out)
    out.mkdir(parents=True, exist_ok=True)

    _echo(parsed_args, argv, out)

    engines = [_make_engine(n, parsed_args, chain) for n in _engine_names(parsed_args.engines)]

    report = run_benchmark(chain, engines, split, parallel=parsed_args.parallel, keep_predictions=parsed_args.dump_predictions)
    report.to_csv(out / 'report.csv')

    print(report.format_table(), file=stdout)

    if parsed_args.dump_predictions:
        report.write_predictions(out / 'predictions.csv')

    hyper = _fenn_hyper(parsed_args)

    if parsed_args.retrain_policies is not None:
        factory = partial(FennEngine, FennVariant.Adv, FennAblation.Full, hyper, None, split.train_blocks)

        retrain = retrain_frequency_experiment(chain, factory, split, _int_list(parsed_args.retrain_policies), parsed_args.parallel)
        retrain.to_csv(out / 'retrain.csv')

        print(retrain.format_table(), file=stdout)

    if parsed_args.ablations:
        ablation = ablation_experiment(chain, split, hyper=hyper, parallel=parsed_args.parallel)
        ablation.to_csv(out / 'ablation.csv')

        print(ablation.format_table(), file=stdout)

    if parsed_args.timing:
        train_heights, _ = split.heights(chain)
        dataset = build_training_set(chain.as_of(train_heights[-1]), hyper.sequence_length)

        timing = timing_experiment(dataset, hyper=hyper)
        timing.to_csv(out / 'timing.csv', index=False)

        print(timing.to_string(index=False), file=stdout)

    return 0

def _cmd_compare(parsed_args: Namespace, argv: list[str]) -> int:
    chain = load_chain(Path(parsed_args.data))
    theta = parsed_args.theta

    if parsed_args.heights is not None:
        heights = _int_list(parsed_args.heights)
    else:
        last = chain.tip_height - theta
        heights = [h for h in chain.heights.tolist() if last - parsed_args.count < h <= last]

    engines = [_make_engine(n, parsed_args, chain) for n in ('btcflow', 'bcore', 'mslp')]

    frame = compare_feerates(chain, heights, theta, engines)

    out = Path(parsed_args.out)
    out.mkdir(parents=True, exist_ok=True)

    frame.to_csv(out / 'compare.csv', index=False)
    _echo(parsed_args, argv, out)

    print(frame.to_string(index=False, float_format=lambda v: f'{v:.4g}'), file=stdout)

    return 0

def _cmd_gradcheck(parsed_args: Namespace, argv: list[str]) -> int:
    seed = _seed(parsed_args)

    reports = layer_suite(seed, parsed_args.tolerance) + network_suite(seed, parsed_args.tolerance)
    failed = 0

    for name, report in reports:
        status = 'info' if report.passed else 'error'
        print(f'{status}: {name}: max relative error {report.max_rel_error:.3e} over {report.checked} entries', file=stdout if report.passed else stderr)

        if not report.passed:
            failed += 1

    if failed != 0:
        print(f'error: {failed} gradient checks failed', file=stderr)

        return 2

    return 0

def _add_model_options(parser: ArgumentParser) -> None:
    parser.add_argument('--block-weight', default='auto', help='Virtual block weight, "auto" takes the heaviest block')
    parser.add_argument('--preset', default='standard', choices=tuple(p.name.lower() for p in BtcFlowPreset), help='BtcFlow probability preset')
    parser.add_argument('--era', default='pre15', choices=('pre15', 'post15'), help='BCore estimator generation')
    parser.add_argument('--mode', default='conservative', choices=('conservative', 'economical'), help='BCore horizon combination')
    parser.add_argument('--epochs', type=int, help='Training epochs of the FENN networks')
    parser.add_argument('--batch-size', type=int, help='Mini-batch size of the FENN networks')
    parser.add_argument('--lr', type=float, help='Learning rate of the FENN networks')
    parser.add_argument('--literal-lstm', action='store_true', help='LSTM output from the previous cell state')
    parser.add_argument('--seed', type=int, help='Seed of every seeded path')

def _build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='feeratelab', description='Bitcoin transaction fee estimation toolkit.')

    parser.add_argument('-v', '--verbose', action='store_true', help='Enable debug logging')
    parser.add_argument('--replay', help='Re-run the invocation echoed in a run-config.json')

    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('ingest', help='Load and validate a chain')
    p.add_argument('-d', '--data', required=True, help='Chain directory (chain.csv, txs.csv) or JSON file')
    p.add_argument('-o', '--out', help='Write the normalized chain here')
    p.add_argument('--json', action='store_true', help='Write chain.json instead of CSV')
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser('synth', help='Generate a synthetic chain')
    p.add_argument('-o', '--out', required=True, help='Output directory')
    p.add_argument('-c', '--config', help='Synthetic chain config (JSON)')
    p.add_argument('--blocks', type=int, help='Number of blocks')
    p.add_argument('--seed', type=int, help='Generator seed')
    p.add_argument('--block-weight-limit', type=int, help='Weight capacity of a block')
    p.add_argument('--arrival-rate', type=float, help='Transaction arrivals per minute')
    p.add_argument('--drift', type=float, help='Log-space feerate drift per block')
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser('train', help='Train an MSLP or FENN model')
    p.add_argument('-e', '--engine', required=True, choices=('mslp', 'fenn'), help='Engine to train')
    p.add_argument('-d', '--data', required=True, help='Chain directory or JSON file')
    p.add_argument('-o', '--out', required=True, help='Model output directory')
    p.add_argument('--until', type=int, help='Train on blocks strictly below this height')
    p.add_argument('--variant', default='adv', choices=tuple(v.label for v in FennVariant), help='FENN sequence module')
    p.add_argument('--ablation', default='full', choices=tuple(a.label for a in FennAblation), help='FENN feature groups')
    p.add_argument('--window', type=int, help='Train on transactions entering within this many blocks')
    _add_model_options(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser('estimate', help='Estimate the feerate or fee of a transaction')
    p.add_argument('-e', '--engine', required=True, choices=('btcflow', 'bcore', 'mslp', 'fenn'), help='Engine to query')
    p.add_argument('-d', '--data', required=True, help='Chain directory or JSON file')
    p.add_argument('--height', type=int, help='Query right after this block (default: tip)')
    p.add_argument('--blocks', type=int, help='Confirmation target in blocks')
    p.add_argument('--minutes', type=float, help='Confirmation target in minutes (BtcFlow)')
    p.add_argument('--p', type=float, help='BtcFlow probability threshold')
    p.add_argument('-m', '--model', help='Trained model (MSLP checkpoint or FENN directory)')
    p.add_argument('--inputs', type=int, default=1, help='Input count of the transaction')
    p.add_argument('--outputs', type=int, default=2, help='Output count of the transaction')
    p.add_argument('--size', type=int, default=250, help='Size in bytes of the transaction')
    p.add_argument('--weight', type=int, default=1000, help='Weight of the transaction')
    p.add_argument('--version', type=int, default=2, help='Version of the transaction')
    _add_model_options(p)
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser('evaluate', help='Benchmark engines on a train/test split')
    p.add_argument('-d', '--data', required=True, help='Chain directory or JSON file')
    p.add_argument('-o', '--out', required=True, help='Report output directory')
    p.add_argument('--engines', default='all', help='Comma-separated engines or "all"')
    p.add_argument('--train', type=int, default=180, help='Training blocks')
    p.add_argument('--test', type=int, default=45, help='Test blocks')
    p.add_argument('--offset', type=int, default=0, help='Blocks skipped at the start')
    p.add_argument('--retrain-policies', nargs='?', const=','.join(str(v) for v in RETRAIN_POLICIES), help='Retraining intervals of the FENN policy experiment')
    p.add_argument('--ablations', action='store_true', help='Run the feature group ablation')
    p.add_argument('--timing', action='store_true', help='Time the training of every FENN variant')
    p.add_argument('--dump-predictions', action='store_true', help='Write predictions.csv')
    p.add_argument('--parallel', action='store_true', help='Evaluate engines in worker processes')
    _add_model_options(p)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser('compare', help='Compare baseline feerates with confirmed feerates')
    p.add_argument('-d', '--data', required=True, help='Chain directory or JSON file')
    p.add_argument('-o', '--out', required=True, help='Output directory')
    p.add_argument('--theta', type=int, default=1, help='Confirmation target in blocks')
    p.add_argument('--heights', help='Comma-separated query heights')
    p.add_argument('--count', type=int, default=45, help='Trailing query heights when --heights is absent')
    _add_model_options(p)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser('gradcheck', help='Check the analytic gradients')
    p.add_argument('--tolerance', type=float, default=1e-4, help='Relative error threshold')
    p.add_argument('--seed', type=int, help='Seed of the random inputs')
    p.set_defaults(handler=_cmd_gradcheck)

    return parser

def _setup_logging(verbose: bool) -> None:
    lg = getLogger()
    lg.setLevel(DEBUG if verbose else INFO)

    if not any(isinstance(h, StreamHandler) for h in lg.handlers):
        lg.addHandler(StreamHandler(stderr))


##########################################################################################
# Main
##########################################################################################

def main(args: list[str]) -> int:
    '''
    Main function.

    Arguments:
        args - list of string arguments from the CLI
    '''

    parser = _build_parser()

    try:
        parsed_args = parser.parse_args(args[1:])

    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1

    _setup_logging(parsed_args.verbose)

    if parsed_args.replay is not None:
        try:
            run_config = RunConfig.from_path(Path(parsed_args.replay))

        except FeeLabError as exc:
            print(f'error: failed to read run config: {parsed_args.replay}: {exc}', file=stderr)

            return 1

        print(f'info: replaying {run_config.subcommand} (version {run_config.version})', file=stdout)

        return main([args[0]] + run_config.argv)

    if parsed_args.command is None:
        parser.print_usage(file=stderr)

        return 1

    try:
        return parsed_args.handler(parsed_args, args[1:])

    except FeeLabError as exc:
        print(f'error: {parsed_args.command} failed: {exc}', file=stderr)

        return 1

    except Exception as exc:
        print(f'error: internal failure in {parsed_args.command}: {exc}', file=stderr)

        return 2
