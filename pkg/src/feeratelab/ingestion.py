# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import asdict, dataclass, field
from hashlib import sha256
from heapq import heappop, heappush
from json import JSONDecodeError, dump as jdump, loads as jloads
from logging import getLogger
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np
import pandas as pd

from .common_util import default_seed, read_config, require_number, write_config
from .core_model import (
    Block,
    BucketScheme,
    ChainView,
    MempoolSnapshot,
    Transaction,
)
from .errors import ConfigError, InvalidInputError, ParseError


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'ingestion: '

'''
File names of the CSV dump format.
'''
CHAIN_FILE = 'chain.csv'
TXS_FILE = 'txs.csv'

'''
Column layout of the block file: name, integer, required.
'''
_block_columns = (
    ('height',       True,  True),
    ('timestamp',    False, True),
    ('interval',     False, True),
    ('size',         True,  True),
    ('difficulty',   False, True),
    ('total_weight', True,  True),
    ('tx_count',     True,  True),
    ('mean_feerate', False, True),
)

'''
Column layout of the transaction file (txid is handled separately).
'''
_tx_columns = (
    ('version',         True,  True),
    ('size',            True,  True),
    ('weight',          True,  True),
    ('inputs',          True,  True),
    ('outputs',         True,  True),
    ('fee',             True,  True),
    ('first_seen_time', False, True),
    ('entry_height',    True,  False),
    ('leave_height',    True,  False),
    ('confirm_height',  True,  False),
    ('confirm_time',    False, False),
)

_synth_entries = (
    'n-blocks',
    'mean-block-interval',
    'block-weight-limit',
    'tx-arrival-rate',
    'feerate-log-mean',
    'feerate-log-sigma',
    'feerate-drift',
    'extra-inputs-mean',
    'extra-outputs-mean',
    'witness-share',
    'version2-share',
    'difficulty',
    'start-height',
    'genesis-time',
    'seed',
)


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class SynthConfig:
    '''
    Dataclass encoding the synthetic chain generator parameters.

    n_blocks            - number of blocks to generate
    mean_block_interval - mean seconds between blocks (exponential)
    block_weight_limit  - weight capacity of a single block
    tx_arrival_rate     - mean transaction arrivals per minute (Poisson)
    feerate_log_mean    - log-space mean of the log-normal feerate
    feerate_log_sigma   - log-space deviation of the log-normal feerate
    feerate_drift       - log-space shift of the feerate mean per block
    extra_inputs_mean   - Poisson mean of the inputs beyond the first
    extra_outputs_mean  - Poisson mean of the outputs beyond the first
    witness_share       - share of the input bytes that is witness data
    version2_share      - share of version 2 transactions
    difficulty          - constant mining difficulty
    start_height        - height of the first block
    genesis_time        - unix time of the first block
    seed                - RNG seed
    '''

    n_blocks: int = 225
    mean_block_interval: float = 600.0
    block_weight_limit: int = 120_000
    tx_arrival_rate: float = 25.0
    feerate_log_mean: float = 3.0
    feerate_log_sigma: float = 1.0
    feerate_drift: float = 0.0
    extra_inputs_mean: float = 1.0
    extra_outputs_mean: float = 1.0
    witness_share: float = 0.6
    version2_share: float = 0.7
    difficulty: float = 5.0e13
    start_height: int = 0
    genesis_time: float = 1_600_000_000.0
    seed: int = field(default_factory=default_seed)

    def __post_init__(self):
        if self.n_blocks < 0:
            raise ConfigError(f'invalid block count: {self.n_blocks}')

        for name in ('mean_block_interval', 'block_weight_limit', 'tx_arrival_rate', 'feerate_log_sigma', 'difficulty'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'invalid {name}: {getattr(self, name)}')

        for name in ('extra_inputs_mean', 'extra_outputs_mean'):
            if getattr(self, name) < 0:
                raise ConfigError(f'invalid {name}: {getattr(self, name)}')

        for name in ('witness_share', 'version2_share'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f'invalid {name}: {getattr(self, name)}')

        if self.seed < 0:
            raise ConfigError(f'invalid seed: {self.seed}')

    @staticmethod
    def from_path(path: Path) -> SynthConfig:
        '''
        Create a synthetic chain config from a JSON file.

        Arguments:
            path - path to the config

        Missing entries fall back to their defaults.
        '''

        config_data = read_config(path, entries=(), optional=_synth_entries)

        values = dict()
        for entry in config_data.keys():
            integer = entry in ('n-blocks', 'block-weight-limit', 'start-height', 'seed')
            minimum = None if entry in ('feerate-log-mean', 'feerate-drift') else 0

            values[entry.replace('-', '_')] = require_number(config_data, entry, minimum=minimum, integer=integer)

        return SynthConfig(**values)

    def to_json(self) -> dict[str, Any]:
        return {k.replace('_', '-'): v for k, v in asdict(self).items()}

    def write(self, path: Path) -> None:
        write_config(path, self.to_json())


##########################################################################################
# Internal functions
##########################################################################################

def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)

    except pd.errors.EmptyDataError:
        raise ParseError(f'missing header: {path}', row=1) from None

    except pd.errors.ParserError as err:
        raise ParseError(f'malformed CSV: {path}: {err}') from err

def _normalize(frame: pd.DataFrame, columns: Iterable[str]) -> pd.DataFrame:
    '''
    Check for the required columns and turn every cell into a stripped string.

    Unknown columns are dropped, None and NaN become the empty string.
    '''

    for column in columns:
        if not column in frame.columns:
            raise ParseError('column missing from header', row=1, field=column)

    def _cell(value: Any) -> str:
        if value is None or (isinstance(value, float) and np.isnan(value)):
            return ''

        return str(value).strip()

    return pd.DataFrame({c: frame[c].astype(object).map(_cell) for c in columns}, index=frame.index)

def _parse_column(frame: pd.DataFrame, column: str, integer: bool, required: bool, row_offset: int) -> np.ndarray:
    '''
    Parse a numeric column, absent cells are NaN.

    Arguments:
        frame      - normalized frame
        column     - column name
        integer    - does the column hold integers?
        required   - may cells be absent?
        row_offset - row number of the first record (for the error message)
    '''

    raw = frame[column]
    absent = (raw == '').to_numpy()
    values = pd.to_numeric(raw.mask(raw == ''), errors='coerce').to_numpy(dtype=np.float64)

    bad = np.isnan(values) & ~absent
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ParseError(f'not a number: {raw.iloc[row]!r}', row=row + row_offset, field=column)

    if required and np.any(absent):
        row = int(np.argmax(absent))
        raise ParseError('required value missing', row=row + row_offset, field=column)

    if integer:
        fractional = ~absent & (np.floor(values) != values)
        if np.any(fractional):
            row = int(np.argmax(fractional))
            raise ParseError(f'not an integer: {raw.iloc[row]!r}', row=row + row_offset, field=column)

    return values

def _optional_int(value: float) -> int:
    return None if np.isnan(value) else int(value)

def _optional_float(value: float) -> float:
    return None if np.isnan(value) else float(value)

def _build_blocks(frame: pd.DataFrame, row_offset: int) -> list[Block]:
    names = [c[0] for c in _block_columns]
    frame = _normalize(frame, names)

    columns = {name: _parse_column(frame, name, integer, required, row_offset) for name, integer, required in _block_columns}

    return [
        Block(
            height=int(columns['height'][i]),
            timestamp=float(columns['timestamp'][i]),
            interval=float(columns['interval'][i]),
            size=int(columns['size'][i]),
            difficulty=float(columns['difficulty'][i]),
            total_weight=int(columns['total_weight'][i]),
            tx_count=int(columns['tx_count'][i]),
            mean_feerate=float(columns['mean_feerate'][i]),
        ) for i in range(len(frame))
    ]

def _build_transactions(frame: pd.DataFrame, blocks: list[Block], row_offset: int) -> dict[str, Transaction]:
    names = ['txid'] + [c[0] for c in _tx_columns]
    frame = _normalize(frame, names)

    txids = frame['txid'].tolist()
    for i, txid in enumerate(txids):
        if len(txid) == 0:
            raise ParseError('required value missing', row=i + row_offset, field='txid')

    columns = {name: _parse_column(frame, name, integer, required, row_offset) for name, integer, required in _tx_columns}

    entry = columns['entry_height']
    if np.any(np.isnan(entry)):
        derived = entry_heights_of(blocks, columns['first_seen_time'], row_offset)
        entry = np.where(np.isnan(entry), derived, entry)

    transactions = dict()

    for i, txid in enumerate(txids):
        if txid in transactions:
            raise ParseError(f'duplicate txid: {txid}', row=i + row_offset, field='txid')

        transactions[txid] = Transaction(
            txid=txid,
            version=int(columns['version'][i]),
            size=int(columns['size'][i]),
            weight=int(columns['weight'][i]),
            inputs=int(columns['inputs'][i]),
            outputs=int(columns['outputs'][i]),
            fee=int(columns['fee'][i]),
            first_seen_time=float(columns['first_seen_time'][i]),
            entry_height=int(entry[i]),
            leave_height=_optional_int(columns['leave_height'][i]),
            confirm_height=_optional_int(columns['confirm_height'][i]),
            confirm_time=_optional_float(columns['confirm_time'][i]),
        )

    return transactions

def _block_frame(chain: ChainView) -> pd.DataFrame:
    names = [c[0] for c in _block_columns]

    return pd.DataFrame([[getattr(b, n) for n in names] for b in chain.blocks], columns=names)

def _tx_frame(chain: ChainView) -> pd.DataFrame:
    names = ['txid'] + [c[0] for c in _tx_columns]
    frame = pd.DataFrame([[getattr(t, n) for n in names] for t in chain.transactions.values()], columns=names)

    for name in ('entry_height', 'leave_height', 'confirm_height'):
        frame[name] = frame[name].astype('Int64')

    return frame

def _load_csv(directory: Path) -> ChainView:
    chain_path = directory / CHAIN_FILE
    txs_path = directory / TXS_FILE

    for p in (chain_path, txs_path):
        if not p.is_file():
            raise InvalidInputError(f'dump file missing: {p}')

    # header is row 1, the first record row 2
    blocks = _build_blocks(_read_frame(chain_path), row_offset=2)
    transactions = _build_transactions(_read_frame(txs_path), blocks, row_offset=2)

    return ChainView(blocks, transactions)

def _load_json(path: Path) -> ChainView:
    try:
        dump = jloads(path.read_text(encoding='utf-8'))

    except JSONDecodeError as err:
        raise ParseError(f'failed to decode JSON dump: {path}: {err}') from err

    if not isinstance(dump, dict) or not 'blocks' in dump or not 'transactions' in dump:
        raise ParseError(f'JSON dump needs blocks and transactions lists: {path}')

    block_names = [c[0] for c in _block_columns]
    tx_names = ['txid'] + [c[0] for c in _tx_columns]

    # records are numbered from 1
    blocks = _build_blocks(pd.DataFrame.from_records(dump['blocks'], columns=block_names), row_offset=1)
    tx_records = [{k: v for k, v in r.items() if k in tx_names} for r in dump['transactions']]
    transactions = _build_transactions(pd.DataFrame.from_records(tx_records, columns=tx_names), blocks, row_offset=1)

    return ChainView(blocks, transactions)


##########################################################################################
# Functions
##########################################################################################

def entry_heights_of(blocks: list[Block], first_seen: np.ndarray, row_offset: int = 1) -> np.ndarray:
    '''
    Map first-seen times to entry heights.

    Arguments:
        blocks     - blocks ordered by height
        first_seen - first-seen unix times
        row_offset - row number of the first time (for the error message)

    The entry height is the height of the latest block with a timestamp
    not after the first-seen time. A time before the first block maps to
    the height preceding it.
    '''

    if len(blocks) == 0:
        raise ParseError('cannot derive entry height without blocks', row=row_offset, field='entry_height')

    heights = np.array([b.height for b in blocks], dtype=np.int64)
    timestamps = np.array([b.timestamp for b in blocks], dtype=np.float64)

    idx = np.searchsorted(timestamps, first_seen, side='right') - 1

    return np.where(idx < 0, heights[0] - 1, heights[np.maximum(idx, 0)]).astype(np.float64)

def load_chain(path: Path) -> ChainView:
    '''
    Load a chain dump.

    Arguments:
        path - directory holding chain.csv and txs.csv, or a JSON dump file
    '''

    if path.is_dir():
        chain = _load_csv(path)
    elif path.is_file() and path.suffix == '.json':
        chain = _load_json(path)
    else:
        raise InvalidInputError(f'not a dump directory or JSON file: {path}')

    getLogger(__name__).info(_log_prefix + f'loaded {len(chain.blocks)} blocks and {len(chain.transactions)} transactions from: {path}')

    return chain

def write_chain(chain: ChainView, directory: Path) -> None:
    '''
    Write a chain in the CSV dump format.

    Arguments:
        chain     - the chain
        directory - output directory (created if missing)
    '''

    directory.mkdir(parents=True, exist_ok=True)

    _block_frame(chain).to_csv(directory / CHAIN_FILE, index=False)
    _tx_frame(chain).to_csv(directory / TXS_FILE, index=False)

def write_chain_json(chain: ChainView, path: Path) -> None:
    '''
    Write a chain in the JSON dump format.

    Arguments:
        chain - the chain
        path  - output file
    '''

    dump = {
        'blocks': [asdict(b) for b in chain.blocks],
        'transactions': [asdict(t) for t in chain.transactions.values()],
    }

    with open(path, mode='w', encoding='utf-8') as f:
        jdump(dump, fp=f, indent=1)
        f.write('\n')

def reconstruct_mempool(chain: ChainView, height: int, scheme: BucketScheme = None) -> MempoolSnapshot:
    '''
    Reconstruct the mempool right after a block.

    Arguments:
        chain  - the chain
        height - block height of the snapshot
        scheme - bucket scheme of the aggregates (geometric if None)

    Members are the transactions that have entered at or before height and
    have neither confirmed nor left at or before height.
    '''

    if height > chain.tip_height:
        raise InvalidInputError(f'height beyond tip: {height} > {chain.tip_height}')

    if scheme is None:
        scheme = BucketScheme.geometric()

    columns = chain.tx_columns()

    return MempoolSnapshot.from_columns(columns, columns.mempool_mask(height), height, scheme)

def mempool_series(chain: ChainView, heights: Iterable[int], scheme: BucketScheme = None) -> Iterator[MempoolSnapshot]:
    '''
    Yield the mempool snapshots of a range of heights.
    '''

    for height in heights:
        yield reconstruct_mempool(chain, height, scheme)

def synth_generate(config: SynthConfig) -> ChainView:
    '''
    Generate a synthetic chain.

    Arguments:
        config - the generator parameters

    Blocks arrive with exponential intervals, transactions with a Poisson
    process. Each block takes pending transactions in strict feerate order
    and stops at the first one that does not fit.
    '''

    lg = getLogger(__name__)

    if config.n_blocks == 0:
        return ChainView([], {})

    rng = np.random.default_rng(config.seed)

    intervals = rng.exponential(config.mean_block_interval, size=config.n_blocks)
    intervals[0] = config.mean_block_interval
    timestamps = config.genesis_time + np.cumsum(intervals) - intervals[0]

    span_minutes = (timestamps[-1] - timestamps[0]) / 60.0
    num_txs = int(rng.poisson(config.tx_arrival_rate * span_minutes))

    arrival = np.sort(rng.uniform(timestamps[0], timestamps[-1], size=num_txs))

    inputs = 1 + rng.poisson(config.extra_inputs_mean, size=num_txs)
    outputs = 1 + rng.poisson(config.extra_outputs_mean, size=num_txs)
    size = 10 + 68 * inputs + 31 * outputs + rng.integers(0, 8, size=num_txs)
    witness = np.round(config.witness_share * 68 * inputs).astype(np.int64)
    weight = 4 * size - 3 * witness
    version = np.where(rng.random(size=num_txs) < config.version2_share, 2, 1)

    # index of the block an arrival has seen last
    entry_idx = np.searchsorted(timestamps, arrival, side='right') - 1

    log_mean = config.feerate_log_mean + config.feerate_drift * entry_idx
    feerate = np.maximum(np.exp(log_mean + config.feerate_log_sigma * rng.standard_normal(size=num_txs)), 1.0)
    fee = np.round(feerate * weight / 4).astype(np.int64)

    confirm_idx = np.full(num_txs, -1, dtype=np.int64)
    block_rows = [(0, 0, 0, 0.0)]

    pending = []
    next_tx = 0

    for k in range(1, config.n_blocks):
        while next_tx < num_txs and entry_idx[next_tx] < k:
            heappush(pending, (-fee[next_tx] / weight[next_tx], next_tx))
            next_tx += 1

        used = 0
        included = []

        while len(pending) != 0:
            idx = pending[0][1]
            if used + weight[idx] > config.block_weight_limit:
                break

            heappop(pending)
            used += int(weight[idx])
            included.append(idx)

        included = np.array(included, dtype=np.int64)
        confirm_idx[included] = k

        mean_feerate = float(np.mean(fee[included] / (weight[included] / 4))) if len(included) != 0 else 0.0
        block_rows.append((int(size[included].sum()), used, len(included), mean_feerate))

    blocks = [
        Block(
            height=config.start_height + k,
            timestamp=float(timestamps[k]),
            interval=float(intervals[k]) if k != 0 else 0.0,
            size=row[0],
            difficulty=float(config.difficulty),
            total_weight=row[1],
            tx_count=row[2],
            mean_feerate=row[3],
        ) for k, row in enumerate(block_rows)
    ]

    transactions = dict()

    for i in range(num_txs):
        txid = sha256(f'{config.seed}:{i}'.encode('utf-8')).hexdigest()
        confirmed = confirm_idx[i] >= 0

        transactions[txid] = Transaction(
            txid=txid,
            version=int(version[i]),
            size=int(size[i]),
            weight=int(weight[i]),
            inputs=int(inputs[i]),
            outputs=int(outputs[i]),
            fee=int(fee[i]),
            first_seen_time=float(arrival[i]),
            entry_height=config.start_height + int(entry_idx[i]),
            leave_height=config.start_height + int(confirm_idx[i]) if confirmed else None,
            confirm_height=config.start_height + int(confirm_idx[i]) if confirmed else None,
            confirm_time=float(timestamps[confirm_idx[i]]) if confirmed else None,
        )

    lg.info(_log_prefix + f'generated {config.n_blocks} blocks and {num_txs} transactions (seed={config.seed})')

    return ChainView(blocks, transactions)
