# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass
from enum import IntEnum, unique
from logging import getLogger

import numpy as np
from scipy.stats import poisson

from .core_model import (
    BucketScheme,
    ChainView,
    EstimateRequest,
    FeeEngine,
    MempoolSnapshot,
    Transaction,
    feerate_to_fee,
)
from .errors import InvalidInputError


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'BtcFlow: '

'''
Consensus block weight limit.
'''
DEFAULT_BLOCK_WEIGHT = 4_000_000

'''
Nominal minutes per block.
'''
MINUTES_PER_BLOCK = 10.0


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class BtcFlowPreset(IntEnum):
    '''
    Enumerator for the named drain probabilities.
    '''

    Optimistic = 0
    Standard   = 1
    Cautious   = 2

    @staticmethod
    def from_string(label: str) -> BtcFlowPreset:
        try:
            return {
                'optimistic': BtcFlowPreset.Optimistic,
                'standard': BtcFlowPreset.Standard,
                'cautious': BtcFlowPreset.Cautious,
            }[label]

        except KeyError:
            raise InvalidInputError(f'unknown preset: {label}') from None

    @property
    def probability(self) -> float:
        return (0.5, 0.8, 0.9)[self.value]


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class BtcFlowConfig:
    '''
    Dataclass encoding the flow estimator constants.

    block_weight - weight units drained by a single block (BLOCK)
    p            - probability threshold of the block count
    u_min        - lowest integer feerate scale
    u_max        - highest integer feerate scale
    '''

    block_weight: float = DEFAULT_BLOCK_WEIGHT
    p: float = 0.8
    u_min: int = 1
    u_max: int = 1000

    def __post_init__(self):
        if not self.block_weight > 0:
            raise InvalidInputError(f'invalid block weight: {self.block_weight}')

        if not 0.0 <= self.p <= 1.0:
            raise InvalidInputError(f'invalid probability: {self.p}')

    @staticmethod
    def from_preset(preset: BtcFlowPreset, block_weight: float = DEFAULT_BLOCK_WEIGHT) -> BtcFlowConfig:
        return BtcFlowConfig(block_weight=block_weight, p=preset.probability)

    @property
    def scheme(self) -> BucketScheme:
        return BucketScheme.integer_ceil(self.u_min, self.u_max)

@dataclass(frozen=True, eq=False)
class FlowModel:
    '''
    Dataclass encoding inflow speed and mempool volume per integer scale.

    minutes - expected confirmation time the inflow was measured for
    scheme  - the integer-ceil scheme
    inflow  - weight units per minute, position u - u_min
    state   - weight units in the mempool, position u - u_min
    '''

    minutes: float
    scheme: BucketScheme
    inflow: np.ndarray
    state: np.ndarray

    def inflow_at(self, scale: int) -> float:
        return float(self.inflow[scale - self.scheme.first_index])

    def state_at(self, scale: int) -> float:
        return float(self.state[scale - self.scheme.first_index])

    def cumulative(self) -> tuple[np.ndarray, np.ndarray]:
        '''
        Inflow and mempool volume at or above each scale (I and M).
        '''

        inflow_above = self.minutes * np.cumsum(self.inflow[::-1])[::-1]
        state_above = np.cumsum(self.state[::-1])[::-1]

        return inflow_above, state_above

@dataclass(frozen=True)
class FlowEstimate:
    '''
    Dataclass encoding the estimator result.

    scale          - the minimal draining integer scale
    outflow        - modelled outflow in weight units
    low_confidence - no scale can be guaranteed to drain
    '''

    scale: int
    outflow: float
    low_confidence: bool

    @property
    def feerate(self) -> float:
        return float(self.scale)


##########################################################################################
# Class definitions
##########################################################################################

class BtcFlowEngine(FeeEngine):
    '''
    Flow estimator behind the common engine interface.

    Block-denominated requests are converted with ten minutes per block, the
    resulting feerate is floored before the fee conversion.
    '''

    name = 'btcflow'

    def __init__(self, config: BtcFlowConfig = None):
        self.config = BtcFlowConfig() if config is None else config

        self._mempool = None
        self._flows = dict()

    def fit(self, chain: ChainView, until_height: int) -> None:
        getLogger(__name__).debug(_log_prefix + f'nothing to fit (until height {until_height})')

    def estimate_fee(self, tx: Transaction, theta: int, chain: ChainView, mempool: MempoolSnapshot) -> float:
        minutes = theta * MINUTES_PER_BLOCK

        request = EstimateRequest(tx, horizon_minutes=minutes)
        if self._mempool is not mempool:
            self._mempool, self._flows = mempool, dict()

        flows = self._flows.get(minutes)
        if flows is None:
            flows = self._flows[minutes] = build_flows(chain, mempool, minutes, self.config)

        result = estimate(request, flows, self.config)

        return feerate_to_fee(tx.weight, result.feerate, floor=True)


##########################################################################################
# Functions
##########################################################################################

def build_flows(chain: ChainView, mempool: MempoolSnapshot, minutes: float, config: BtcFlowConfig = None) -> FlowModel:
    '''
    Measure inflow speed and mempool volume per integer scale.

    Arguments:
        chain   - chain as known at the mempool height
        mempool - the current mempool
        minutes - expected confirmation time (vartheta)
        config  - the estimator constants

    The inflow is taken over the transactions first seen within the trailing
    2 * minutes before the block of the mempool height.
    '''

    if not minutes > 0:
        raise InvalidInputError(f'invalid minutes: {minutes}')

    if config is None:
        config = BtcFlowConfig()

    scheme = config.scheme

    if len(chain.blocks) == 0:
        inflow = np.zeros(scheme.count)
    else:
        now = chain.block_at(mempool.height).timestamp if chain.has_block(mempool.height) else chain.blocks[-1].timestamp
        columns = chain.tx_columns()

        recent = (columns.first_seen_time > now - 2.0 * minutes * 60.0) & (columns.first_seen_time <= now) & ~np.isnan(columns.fee)

        _, weights = scheme.aggregate(columns.feerate[recent], columns.weight[recent])
        inflow = weights / (2.0 * minutes)

    _, state = scheme.aggregate(mempool.feerates, mempool.weights)

    return FlowModel(minutes=float(minutes), scheme=scheme, inflow=inflow, state=state)

def block_count_exceedance(minutes: float, k: int) -> float:
    '''
    Probability that more than k blocks arrive within some minutes, 1 - P(x <= k).

    Arguments:
        minutes - time interval (vartheta)
        k       - block count
    '''

    if not minutes > 0:
        raise InvalidInputError(f'invalid minutes: {minutes}')

    if k < 0:
        raise InvalidInputError(f'invalid block count: {k}')

    return float(poisson.sf(k, minutes / MINUTES_PER_BLOCK))

def poisson_block_count(minutes: float, p: float) -> int:
    '''
    Block count reached with probability p within some minutes.

    Arguments:
        minutes - time interval (vartheta)
        p       - probability threshold

    Block arrivals are Poisson with ten minutes mean spacing. The result is
    the smallest k with P(x > k) <= p.
    '''

    if not minutes > 0:
        raise InvalidInputError(f'invalid minutes: {minutes}')

    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f'invalid probability: {p}')

    k = 0
    while block_count_exceedance(minutes, k) > p:
        k += 1

    return k

def model_outflow(block_count: int, config: BtcFlowConfig) -> float:
    if block_count < 0:
        raise InvalidInputError(f'invalid block count: {block_count}')

    return block_count * config.block_weight

def estimate(request: EstimateRequest, flows: FlowModel, config: BtcFlowConfig = None) -> FlowEstimate:
    '''
    Find the minimal integer scale whose higher-feerate volume drains.

    Arguments:
        request - time-denominated request
        flows   - flows measured for the same minutes
        config  - the estimator constants

    Returns the smallest scale u with I(u) + M(u) <= O. If even the highest
    scale fails it is returned, a zero outflow is flagged low-confidence.
    '''

    if config is None:
        config = BtcFlowConfig()

    if request.minutes != flows.minutes:
        raise InvalidInputError(f'flows measured for {flows.minutes} minutes, request asks for {request.minutes}')

    outflow = model_outflow(poisson_block_count(request.minutes, config.p), config)

    if outflow == 0:
        getLogger(__name__).debug(_log_prefix + f'zero outflow for {request.minutes} minutes at p={config.p}')

        return FlowEstimate(scale=config.u_max, outflow=outflow, low_confidence=True)

    inflow_above, state_above = flows.cumulative()
    failing = np.flatnonzero(inflow_above + state_above > outflow)

    if len(failing) == 0:
        scale = config.u_min
    elif failing[-1] == len(inflow_above) - 1:
        scale = config.u_max
    else:
        scale = config.u_min + int(failing[-1]) + 1

    return FlowEstimate(scale=scale, outflow=outflow, low_confidence=False)
