# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass, field
from enum import IntEnum, unique
from logging import getLogger

import numpy as np

from .core_model import (
    NO_HEIGHT,
    BucketScheme,
    ChainView,
    EstimateRequest,
    FeeEngine,
    MempoolSnapshot,
    Transaction,
    feerate_to_fee,
)
from .errors import InsufficientDataError, InvalidInputError


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'BCore: '

'''
Tracked confirmation intervals of the horizons after the 0.15 rework.
'''
_horizon_intervals = (12, 48, 1008)


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class BCoreEra(IntEnum):
    '''
    Enumerator for the estimator generation.

    Pre15  - single decayed statistic
    Post15 - short, medium and long horizon statistics
    '''

    Pre15  = 0
    Post15 = 1

    @staticmethod
    def from_string(label: str) -> BCoreEra:
        if label == 'pre15':
            return BCoreEra.Pre15
        elif label == 'post15':
            return BCoreEra.Post15
        else:
            raise InvalidInputError(f'unknown era: {label}')

@unique
class BCoreMode(IntEnum):
    '''
    Enumerator for the horizon combination rule.
    '''

    Conservative = 0
    Economical   = 1

    @staticmethod
    def from_string(label: str) -> BCoreMode:
        if label == 'conservative':
            return BCoreMode.Conservative
        elif label == 'economical':
            return BCoreMode.Economical
        else:
            raise InvalidInputError(f'unknown mode: {label}')

@unique
class BCoreHorizon(IntEnum):
    Short  = 0
    Medium = 1
    Long   = 2

    @property
    def max_interval(self) -> int:
        return _horizon_intervals[self.value]

    @property
    def decay(self) -> float:
        return 0.5 ** (1.0 / self.max_interval)


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class BCoreConfig:
    '''
    Dataclass encoding the estimator constants.

    alpha        - per-block decay of the single pre-0.15 statistic
    p1           - decayed count a bucket set needs before it is judged
    p2           - success ratio a bucket set needs to pass
    max_interval - longest tracked confirmation interval (pre-0.15)
    era          - estimator generation
    mode         - horizon combination rule (post-0.15)
    scheme       - bucket scheme of the statistics
    '''

    alpha: float = 0.998
    p1: float = 10.0
    p2: float = 0.95
    max_interval: int = 24
    era: BCoreEra = BCoreEra.Pre15
    mode: BCoreMode = BCoreMode.Conservative
    scheme: BucketScheme = field(default_factory=BucketScheme.geometric)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError(f'invalid decay: {self.alpha}')

        if self.p1 < 0:
            raise InvalidInputError(f'invalid sufficiency threshold: {self.p1}')

        if not 0.0 < self.p2 <= 1.0:
            raise InvalidInputError(f'invalid success ratio: {self.p2}')

        if self.max_interval < 1:
            raise InvalidInputError(f'invalid max interval: {self.max_interval}')

    def tracks(self) -> list[tuple[str, float, int]]:
        '''
        Statistics tracked by this config: label, decay, max interval.
        '''

        if self.era == BCoreEra.Pre15:
            return [('single', self.alpha, self.max_interval)]

        return [(h.name.lower(), h.decay, h.max_interval) for h in BCoreHorizon]

@dataclass(frozen=True, eq=False)
class BucketStats:
    '''
    Dataclass encoding the decayed per-bucket statistics.

    scheme   - bucket scheme
    tx_ct    - decayed confirmed count per bucket (txCtAvg)
    avg      - decayed feerate sum per bucket
    conf_avg - decayed count confirmed within theta, row theta - 1
    tx_unct  - undecayed count waiting at least theta, row theta - 1
    '''

    scheme: BucketScheme
    tx_ct: np.ndarray
    avg: np.ndarray
    conf_avg: np.ndarray
    tx_unct: np.ndarray

    @property
    def max_interval(self) -> int:
        return self.conf_avg.shape[0]

    @staticmethod
    def empty(scheme: BucketScheme, max_interval: int) -> BucketStats:
        return BucketStats(
            scheme=scheme,
            tx_ct=np.zeros(scheme.count),
            avg=np.zeros(scheme.count),
            conf_avg=np.zeros((max_interval, scheme.count)),
            tx_unct=np.zeros((max_interval, scheme.count)),
        )


##########################################################################################
# Class definitions
##########################################################################################

class BucketStatsAccumulator:
    '''
    Incremental builder of the decayed bucket statistics.

    Blocks are fed oldest to newest. Every block first decays what is
    already there, then adds its own confirmations at full weight.
    '''

    def __init__(self, scheme: BucketScheme, alpha: float, max_interval: int, count_evicted: bool = False):
        '''
        Constructor.

        Arguments:
            scheme        - bucket scheme
            alpha         - per-block decay
            max_interval  - longest tracked confirmation interval
            count_evicted - count evicted transactions as unconfirmed
        '''

        self.scheme = scheme
        self.alpha = alpha
        self.max_interval = max_interval
        self.count_evicted = count_evicted

        self.last_height = None

        self._tx_ct = np.zeros(scheme.count)
        self._avg = np.zeros(scheme.count)
        self._conf_exact = np.zeros((max_interval, scheme.count))
        self._tx_unct = np.zeros((max_interval, scheme.count))

    def decay_block(self) -> None:
        self._tx_ct *= self.alpha
        self._avg *= self.alpha
        self._conf_exact *= self.alpha

    def process_block(self, height: int, feerates: np.ndarray, waits: np.ndarray) -> None:
        '''
        Add the confirmations of a block.

        Arguments:
            height   - block height
            feerates - feerates of the transactions confirmed in the block
            waits    - their confirmation intervals in blocks
        '''

        if self.last_height is not None:
            if height <= self.last_height:
                raise InvalidInputError(f'block {height} already processed (last {self.last_height})')

            for _ in range(height - self.last_height):
                self.decay_block()

        self.last_height = height

        waits = np.maximum(np.asarray(waits, dtype=np.int64), 1)
        tracked = waits <= self.max_interval

        if not np.any(tracked):
            return

        positions = self.scheme.positions_of(np.asarray(feerates)[tracked])
        rates = np.asarray(feerates, dtype=np.float64)[tracked]

        np.add.at(self._tx_ct, positions, 1.0)
        np.add.at(self._avg, positions, rates)
        np.add.at(self._conf_exact, (waits[tracked] - 1, positions), 1.0)

    def record_mempool(self, mempool: MempoolSnapshot, evicted_feerates: np.ndarray = None, evicted_waits: np.ndarray = None) -> None:
        '''
        Recount the unconfirmed transactions at the tip.

        Arguments:
            mempool          - mempool at the tip
            evicted_feerates - feerates of recently evicted transactions
            evicted_waits    - how long they waited before eviction
        '''

        waits = mempool.height - mempool.entry_heights
        feerates = mempool.feerates

        if self.count_evicted and evicted_feerates is not None and len(evicted_feerates) != 0:
            waits = np.concatenate([waits, evicted_waits])
            feerates = np.concatenate([feerates, evicted_feerates])

        histogram = np.zeros((self.max_interval + 1, self.scheme.count))

        if len(feerates) != 0:
            capped = np.clip(waits, 0, self.max_interval).astype(np.int64)
            np.add.at(histogram, (capped, self.scheme.positions_of(feerates)), 1.0)

        # a transaction waiting w blocks counts for every theta <= w
        self._tx_unct = np.cumsum(histogram[::-1], axis=0)[::-1][1:]

    def stats(self) -> BucketStats:
        return BucketStats(
            scheme=self.scheme,
            tx_ct=self._tx_ct.copy(),
            avg=self._avg.copy(),
            conf_avg=np.cumsum(self._conf_exact, axis=0),
            tx_unct=self._tx_unct.copy(),
        )

class BCoreEngine(FeeEngine):
    '''
    Decayed bucket statistics estimator behind the common engine interface.
    '''

    name = 'bcore'

    def __init__(self, config: BCoreConfig = None):
        self.config = BCoreConfig() if config is None else config

        self._accumulators = None
        self._stats_cache = None

    def _reset(self) -> None:
        self._stats_cache = None

        count_evicted = self.config.era == BCoreEra.Post15

        self._accumulators = [
            BucketStatsAccumulator(self.config.scheme, alpha, max_interval, count_evicted) for _, alpha, max_interval in self.config.tracks()
        ]

    def _advance(self, chain: ChainView, low: int, high: int) -> None:
        columns = chain.tx_columns()

        for block in chain.blocks_between(low, high - 1):
            confirmed = columns.confirm_height == block.height

            feerates = columns.feerate[confirmed]
            waits = block.height - columns.entry_height[confirmed]

            for acc in self._accumulators:
                acc.process_block(block.height, feerates, waits)

    def fit(self, chain: ChainView, until_height: int) -> None:
        self._reset()

        first = chain.blocks[0].height if len(chain.blocks) != 0 else until_height
        self._advance(chain, first, until_height)

        getLogger(__name__).info(_log_prefix + f'statistics built from blocks below {until_height}')

    def update(self, chain: ChainView, height: int) -> None:
        if self._accumulators is None:
            self._reset()

        last = self._accumulators[0].last_height

        if last is not None:
            low = last + 1
        elif len(chain.blocks) != 0:
            low = chain.blocks[0].height
        else:
            return

        if low < height:
            self._advance(chain, low, height)
            self._stats_cache = None

    def _stats_at(self, chain: ChainView, mempool: MempoolSnapshot) -> list[tuple[BucketStats, int]]:
        if self._stats_cache is not None and self._stats_cache[0] is mempool:
            return self._stats_cache[1]

        columns = chain.tx_columns()
        result = []

        for acc in self._accumulators:
            evicted = (columns.confirm_height == NO_HEIGHT) & (columns.leave_height <= mempool.height) & (columns.leave_height > mempool.height - acc.max_interval)

            acc.record_mempool(
                mempool,
                evicted_feerates=columns.feerate[evicted],
                evicted_waits=columns.leave_height[evicted] - columns.entry_height[evicted],
            )

            result.append((acc.stats(), acc.max_interval))

        self._stats_cache = (mempool, result)

        return result

    def estimate_feerate(self, theta: int, chain: ChainView, mempool: MempoolSnapshot, tx: Transaction = None) -> float:
        if self._accumulators is None:
            self._reset()

        request = EstimateRequest(tx, horizon_blocks=theta)

        if self.config.era == BCoreEra.Pre15:
            stats, _ = self._stats_at(chain, mempool)[0]

            return estimate(request, stats, self.config)

        return combine_horizons(request, self._stats_at(chain, mempool), self.config)

    def estimate_fee(self, tx: Transaction, theta: int, chain: ChainView, mempool: MempoolSnapshot) -> float:
        return feerate_to_fee(tx.weight, self.estimate_feerate(theta, chain, mempool, tx))


##########################################################################################
# Functions
##########################################################################################

def accumulate_stats(chain: ChainView, mempool: MempoolSnapshot, config: BCoreConfig = None, alpha: float = None, max_interval: int = None) -> BucketStats:
    '''
    Replay a chain into decayed bucket statistics.

    Arguments:
        chain        - the chain, the tip is its last block
        mempool      - the mempool at the tip
        config       - estimator constants
        alpha        - decay override (horizon statistics)
        max_interval - max interval override (horizon statistics)
    '''

    if config is None:
        config = BCoreConfig()

    if len(chain.blocks) == 0:
        raise InvalidInputError('cannot accumulate statistics of an empty chain')

    acc = BucketStatsAccumulator(
        config.scheme,
        config.alpha if alpha is None else alpha,
        config.max_interval if max_interval is None else max_interval,
        count_evicted=config.era == BCoreEra.Post15,
    )

    columns = chain.tx_columns()

    for block in chain.blocks:
        confirmed = columns.confirm_height == block.height
        acc.process_block(block.height, columns.feerate[confirmed], block.height - columns.entry_height[confirmed])

    evicted = (columns.confirm_height == NO_HEIGHT) & (columns.leave_height <= mempool.height) & (columns.leave_height > mempool.height - acc.max_interval)
    acc.record_mempool(mempool, columns.feerate[evicted], columns.leave_height[evicted] - columns.entry_height[evicted])

    return acc.stats()

def estimate(request: EstimateRequest, stats: BucketStats, config: BCoreConfig = None) -> float:
    '''
    Scan the buckets from high to low feerate and pick the median feerate of
    the last bucket set that confirms within theta often enough.

    Arguments:
        request - block-denominated request
        stats   - the bucket statistics
        config  - estimator constants
    '''

    if config is None:
        config = BCoreConfig()

    theta = request.blocks

    if theta > stats.max_interval:
        raise InsufficientDataError(f'target {theta} beyond tracked interval {stats.max_interval}')

    conf = stats.conf_avg[theta - 1]
    unct = stats.tx_unct[theta - 1]

    passing = None

    current = []
    n_tx = n_conf = n_unct = 0.0

    for position in range(stats.scheme.count - 1, -1, -1):
        current.append(position)

        n_tx += stats.tx_ct[position]
        n_conf += conf[position]
        n_unct += unct[position]

        # an empty set is never judged, even with p1 at zero
        if n_tx <= 0.0 or n_tx < config.p1:
            continue

        ratio = n_conf / (n_tx + n_unct)
        if ratio < config.p2:
            break

        passing = current
        current = []
        n_tx = n_conf = n_unct = 0.0

    if passing is None:
        raise InsufficientDataError(f'no bucket set passes for target {theta}')

    ascending = np.array(sorted(passing))
    counts = stats.tx_ct[ascending]

    median = int(ascending[np.argmax(np.cumsum(counts) >= counts.sum() / 2.0)])

    return float(stats.avg[median] / stats.tx_ct[median])

def combine_horizons(request: EstimateRequest, horizon_stats: list[tuple[BucketStats, int]], config: BCoreConfig) -> float:
    '''
    Combine the horizon estimates.

    Arguments:
        request       - block-denominated request
        horizon_stats - statistics and tracked interval, shortest horizon first
        config        - estimator constants

    Conservative takes the maximum over the horizons covering theta and
    skips horizons without enough data, economical takes the shortest
    horizon covering theta.
    '''

    applicable = [s for s, max_interval in horizon_stats if request.blocks <= max_interval]

    if len(applicable) == 0:
        raise InsufficientDataError(f'no horizon covers target {request.blocks}')

    if config.mode == BCoreMode.Economical:
        return estimate(request, applicable[0], config)

    estimates = []

    for stats in applicable:
        try:
            estimates.append(estimate(request, stats, config))

        except InsufficientDataError as err:
            getLogger(__name__).debug(_log_prefix + f'skipping horizon: {err}')

    if len(estimates) == 0:
        raise InsufficientDataError(f'no horizon has enough data for target {request.blocks}')

    return max(estimates)
