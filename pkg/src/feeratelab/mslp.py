# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass, field, replace
from enum import IntEnum, unique
from logging import getLogger
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .common_util import default_seed
from .core_model import (
    NO_HEIGHT,
    ChainView,
    EstimateRequest,
    FeeEngine,
    MempoolSnapshot,
    Transaction,
    feerate_to_fee,
)
from .errors import (
    InvalidInputError,
    MaxFeerateReachedError,
    OutOfBoundaryError,
    UntrainedModelError,
)
from .nn import Activation, AdamHyper, AdamState, Dense, ParamSet, adam_step, bce_with_logits, load_checkpoint, save_checkpoint


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'MSLP: '

DEFAULT_BLOCK_WEIGHT = 4_000_000

'''
Per range checkpoint entry: w_feerate, w_loc_b, w_loc_s, bias, mean[3], std[3].
'''
_entry_size = 10

_geometry_name = 'geometry'


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class MslpRange(IntEnum):
    '''
    Enumerator for the virtual block ranges sharing one model.
    '''

    Blocks1to4   = 0
    Blocks5to8   = 1
    Blocks9to12  = 2
    Blocks13Plus = 3

    @staticmethod
    def from_block(loc_b: int) -> MslpRange:
        if loc_b < 1:
            raise InvalidInputError(f'invalid virtual block: {loc_b}')

        return MslpRange(min((loc_b - 1) // 4, 3))

    @property
    def label(self) -> str:
        return ('[1-4]', '[5-8]', '[9-12]', '[13+]')[self.value]


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class MslpConfig:
    '''
    Dataclass encoding the virtual block estimator constants.

    block_weight   - weight of a virtual block (BLOCK)
    slice_weight   - weight of a virtual slice (SLICE), BLOCK / 10 if None
    epochs         - training epochs per range
    batch_size     - mini-batch size
    lr             - Adam learning rate
    step           - feerate search increment
    max_increments - search increments before giving up
    seed           - training seed
    '''

    block_weight: float = DEFAULT_BLOCK_WEIGHT
    slice_weight: float = None
    epochs: int = 20
    batch_size: int = 1000
    lr: float = 0.01
    step: float = 0.1
    max_increments: int = 10_000
    seed: int = field(default_factory=default_seed)

    def __post_init__(self):
        if not self.block_weight > 0:
            raise InvalidInputError(f'invalid block weight: {self.block_weight}')

        if self.slice_weight is None:
            object.__setattr__(self, 'slice_weight', self.block_weight / 10)

        if not self.slice_weight > 0:
            raise InvalidInputError(f'invalid slice weight: {self.slice_weight}')

        ratio = self.block_weight / self.slice_weight
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidInputError(f'slice weight {self.slice_weight} does not divide block weight {self.block_weight}')

        if self.epochs < 1 or self.batch_size < 1 or self.max_increments < 0:
            raise InvalidInputError('invalid training or search parameters')

@dataclass(frozen=True)
class VirtualPosition:
    loc_b: int
    loc_s: int

@dataclass(frozen=True)
class MslpInstance:
    '''
    Dataclass encoding one labelled queue observation.

    feerate - feerate of the transaction
    loc_b   - virtual block position at the observation height
    loc_s   - virtual slice position at the observation height
    hit     - 1 if the transaction confirmed within loc_b blocks
    '''

    feerate: float
    loc_b: int
    loc_s: int
    hit: int

@dataclass(frozen=True, eq=False)
class MslpInstanceSet:
    '''
    Array-backed list of MSLP instances.
    '''

    feerate: np.ndarray
    loc_b: np.ndarray
    loc_s: np.ndarray
    hit: np.ndarray

    @staticmethod
    def empty() -> MslpInstanceSet:
        return MslpInstanceSet(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @staticmethod
    def concat(parts: Iterable[MslpInstanceSet]) -> MslpInstanceSet:
        parts = list(parts)
        if len(parts) == 0:
            return MslpInstanceSet.empty()

        return MslpInstanceSet(
            feerate=np.concatenate([p.feerate for p in parts]),
            loc_b=np.concatenate([p.loc_b for p in parts]),
            loc_s=np.concatenate([p.loc_s for p in parts]),
            hit=np.concatenate([p.hit for p in parts]),
        )

    @staticmethod
    def from_instances(instances: Iterable[MslpInstance]) -> MslpInstanceSet:
        instances = list(instances)

        return MslpInstanceSet(
            feerate=np.array([i.feerate for i in instances], dtype=np.float64),
            loc_b=np.array([i.loc_b for i in instances], dtype=np.int64),
            loc_s=np.array([i.loc_s for i in instances], dtype=np.int64),
            hit=np.array([i.hit for i in instances], dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.feerate)

    def __iter__(self) -> Iterator[MslpInstance]:
        for i in range(len(self)):
            yield MslpInstance(float(self.feerate[i]), int(self.loc_b[i]), int(self.loc_s[i]), int(self.hit[i]))

    def select(self, mask: np.ndarray) -> MslpInstanceSet:
        return MslpInstanceSet(self.feerate[mask], self.loc_b[mask], self.loc_s[mask], self.hit[mask])

    def features(self) -> np.ndarray:
        return np.stack([self.feerate, self.loc_b.astype(np.float64), self.loc_s.astype(np.float64)], axis=1)

@dataclass(frozen=True, eq=False)
class RangeModel:
    '''
    Dataclass encoding a trained single-layer perceptron of one range.
    '''

    params: ParamSet
    mean: np.ndarray
    std: np.ndarray

    def activation(self, x: np.ndarray) -> np.ndarray:
        '''
        Pre-threshold activation for raw inputs [feerate, loc_b, loc_s].
        '''

        y, _ = _perceptron().forward(self.params, (x - self.mean) / self.std)

        return y[:, 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.activation(x) >= 0.0).astype(np.int64)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.params['mslp.W'][0], self.params['mslp.b'], self.mean, self.std])

    @staticmethod
    def from_vector(vector: np.ndarray) -> RangeModel:
        if vector.shape != (_entry_size,):
            raise InvalidInputError(f'invalid range model vector shape: {vector.shape}')

        params = ParamSet()
        params['mslp.W'] = vector[0:3].reshape(1, 3)
        params['mslp.b'] = vector[3:4]

        return RangeModel(params=params, mean=vector[4:7].copy(), std=vector[7:10].copy())


##########################################################################################
# Class definitions
##########################################################################################

class MslpModels:
    '''
    The four range models, untrained ranges are None.

    The virtual block and slice weights the models were trained with travel
    with them, None when unknown.
    '''

    def __init__(self, models: dict[MslpRange, RangeModel] = None, block_weight: float = None, slice_weight: float = None):
        self.models = {r: None for r in MslpRange}
        self.block_weight = block_weight
        self.slice_weight = slice_weight

        if models is not None:
            self.models.update(models)

    def config_for(self, config: MslpConfig) -> MslpConfig:
        '''
        Config with the virtual block geometry the models were trained with.

        Arguments:
            config - config to adjust
        '''

        if self.block_weight is None:
            return config

        return replace(config, block_weight=self.block_weight, slice_weight=self.slice_weight)

    def is_trained(self, r: MslpRange) -> bool:
        return self.models[r] is not None

    def model_for(self, loc_b: int) -> RangeModel:
        r = MslpRange.from_block(loc_b)

        if self.models[r] is None:
            raise UntrainedModelError(f'no model trained for range {r.label}')

        return self.models[r]

    def save(self, path: Path) -> None:
        '''
        Write the trained ranges as a checkpoint, one entry per range plus
        the virtual block geometry.
        '''

        params = ParamSet()

        if self.block_weight is not None:
            params[_geometry_name] = np.array([self.block_weight, self.slice_weight], dtype=np.float64)

        for r, model in self.models.items():
            if model is not None:
                params[f'range.{r.label}'] = model.to_vector()

        save_checkpoint(path, params)

    @staticmethod
    def load(path: Path) -> MslpModels:
        params = load_checkpoint(path)
        labels = {r.label: r for r in MslpRange}

        block_weight = slice_weight = None

        models = dict()
        for name, vector in params.items():
            if name == _geometry_name:
                if vector.shape != (2,):
                    raise InvalidInputError(f'invalid geometry entry shape: {vector.shape}')

                block_weight, slice_weight = float(vector[0]), float(vector[1])
                continue

            label = name.removeprefix('range.')
            if not label in labels:
                raise InvalidInputError(f'unknown range in checkpoint: {name}')

            models[labels[label]] = RangeModel.from_vector(vector)

        return MslpModels(models, block_weight, slice_weight)

class MslpEngine(FeeEngine):
    '''
    Virtual block estimator behind the common engine interface.
    '''

    name = 'mslp'

    def __init__(self, config: MslpConfig = None):
        self.config = MslpConfig() if config is None else config
        self.models = None

    def fit(self, chain: ChainView, until_height: int) -> None:
        view = chain.as_of(until_height - 1)
        heights = [b.height for b in view.blocks if b.height < until_height - 1]

        instances = build_training_instances(view, self.config, heights)
        self.models = train(instances, self.config)

    def estimate_fee(self, tx: Transaction, theta: int, chain: ChainView, mempool: MempoolSnapshot) -> float:
        if self.models is None:
            raise UntrainedModelError('engine has not been fitted')

        feerate = estimate(EstimateRequest(tx, horizon_blocks=theta), mempool, self.models, self.config)

        return feerate_to_fee(tx.weight, feerate)


##########################################################################################
# Internal functions
##########################################################################################

def _perceptron() -> Dense:
    return Dense(3, 1, Activation.Linear, prefix='mslp')

def _weight_at_or_above(feerates: np.ndarray, weights: np.ndarray, queries: np.ndarray) -> np.ndarray:
    '''
    Total weight of the members with a feerate at or above each query.
    '''

    order = np.argsort(feerates, kind='stable')
    ascending = feerates[order]

    # suffix[i] is the weight of ascending[i:]
    suffix = np.concatenate([np.cumsum(weights[order][::-1])[::-1], [0.0]])

    return suffix[np.searchsorted(ascending, queries, side='left')]

def _positions(weight: np.ndarray, config: MslpConfig) -> tuple[np.ndarray, np.ndarray]:
    loc_b = np.floor(weight / config.block_weight).astype(np.int64) + 1
    loc_s = np.floor(weight / config.slice_weight).astype(np.int64) + 1

    return loc_b, loc_s


##########################################################################################
# Functions
##########################################################################################

def virtual_position(mempool: MempoolSnapshot, feerate: float, config: MslpConfig = None) -> VirtualPosition:
    '''
    Queue position of a feerate in the current mempool.

    Arguments:
        mempool - the current mempool
        feerate - the feerate (r')
        config  - estimator constants

    Block and slice indices are one-based, a weight filling exactly k blocks
    lands in block k + 1.
    '''

    if config is None:
        config = MslpConfig()

    if feerate < 0:
        raise InvalidInputError(f'negative feerate: {feerate}')

    weight = _weight_at_or_above(mempool.feerates, mempool.weights, np.array([feerate]))
    loc_b, loc_s = _positions(weight, config)

    return VirtualPosition(loc_b=int(loc_b[0]), loc_s=int(loc_s[0]))

def label_hit(loc_b: np.ndarray, height: int, confirm_height: np.ndarray) -> np.ndarray:
    return (loc_b >= confirm_height - height).astype(np.int64)

def build_training_instances(chain: ChainView, config: MslpConfig = None, heights: Iterable[int] = None) -> MslpInstanceSet:
    '''
    Label the queue observations of past heights.

    Arguments:
        chain   - the chain (confirmations beyond its tip are unknown)
        config  - estimator constants
        heights - observation heights, every block below the tip if None

    Every transaction waiting in the mempool at a height yields one instance.
    Transactions that never confirm have no label and are skipped, but still
    take their place in the queue.
    '''

    if config is None:
        config = MslpConfig()

    if heights is None:
        heights = [b.height for b in chain.blocks if b.height < chain.tip_height]

    columns = chain.tx_columns()
    parts = []

    for height in heights:
        mask = columns.mempool_mask(height)
        if not np.any(mask):
            continue

        feerates = columns.feerate[mask]
        weights = columns.weight[mask]
        confirm = columns.confirm_height[mask]

        labelled = confirm != NO_HEIGHT
        if not np.any(labelled):
            continue

        loc_b, loc_s = _positions(_weight_at_or_above(feerates, weights, feerates[labelled]), config)

        parts.append(MslpInstanceSet(
            feerate=feerates[labelled],
            loc_b=loc_b,
            loc_s=loc_s,
            hit=label_hit(loc_b, height, confirm[labelled]),
        ))

    instances = MslpInstanceSet.concat(parts)

    getLogger(__name__).info(_log_prefix + f'{len(instances)} training instances over {len(parts)} heights')

    return instances

def train_range(instances: MslpInstanceSet, config: MslpConfig, seed: int) -> RangeModel:
    '''
    Fit one perceptron with logistic loss on standardized inputs.
    '''

    rng = np.random.default_rng(seed)

    x = instances.features()
    y = instances.hit.astype(np.float64)[:, None]

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)

    xs = (x - mean) / std

    layer = _perceptron()
    params = ParamSet()
    layer.init_params(params, rng)

    state = AdamState.for_params(params)
    hyper = AdamHyper(lr=config.lr)

    for _ in range(config.epochs):
        order = rng.permutation(len(xs))

        for start in range(0, len(xs), config.batch_size):
            batch = order[start:start + config.batch_size]

            logits, cache = layer.forward(params, xs[batch])
            _, dlogits = bce_with_logits(logits, y[batch])

            grads = params.zeros_like()
            layer.backward(params, cache, dlogits, grads)

            adam_step(params, grads, state, hyper)

    return RangeModel(params=params, mean=mean, std=std)

def train(instances: MslpInstanceSet, config: MslpConfig = None) -> MslpModels:
    '''
    Train one perceptron per virtual block range, empty ranges stay untrained.

    Arguments:
        instances - labelled instances
        config    - estimator constants
    '''

    if config is None:
        config = MslpConfig()

    lg = getLogger(__name__)

    ranges = np.minimum((instances.loc_b - 1) // 4, 3)
    models = dict()

    for r in MslpRange:
        selected = instances.select(ranges == r.value)

        if len(selected) == 0:
            lg.warning(_log_prefix + f'no instances for range {r.label}, leaving it untrained')
            continue

        models[r] = train_range(selected, config, config.seed + r.value)

        lg.debug(_log_prefix + f'trained range {r.label} on {len(selected)} instances')

    return MslpModels(models, config.block_weight, config.slice_weight)

def search_grid(seed: float, config: MslpConfig) -> np.ndarray:
    '''
    The candidate feerates seed + k * step for k = 0..max_increments.
    '''

    return np.round(seed + np.arange(config.max_increments + 1) * config.step, 10)

def estimate(request: EstimateRequest, mempool: MempoolSnapshot, models: MslpModels, config: MslpConfig = None) -> float:
    '''
    Search the smallest feerate the model of virtual block theta accepts.

    Arguments:
        request - block-denominated request
        mempool - the current mempool
        models  - trained range models
        config  - estimator constants

    The search starts at the lowest feerate of the last slice of virtual
    block theta. When that block is not full the search starts at zero from
    the actual last slice. Theta beyond the last virtual block is an error.
    '''

    if config is None:
        config = MslpConfig()

    theta = request.blocks
    total = mempool.total_weight

    last_block = int(np.floor(total / config.block_weight)) + 1
    if theta > last_block:
        raise OutOfBoundaryError(f'target {theta} beyond the last virtual block {last_block}')

    model = models.model_for(theta)

    if total >= theta * config.block_weight:
        order = np.argsort(-mempool.feerates, kind='stable')
        covered = np.cumsum(mempool.weights[order])

        idx = int(np.searchsorted(covered, theta * config.block_weight - 1, side='right'))
        start = float(mempool.feerates[order][idx])
        loc_s = int(round(theta * config.block_weight / config.slice_weight))
    else:
        start = 0.0
        loc_s = int(np.floor(total / config.slice_weight)) + 1

    grid = search_grid(start, config)

    x = np.stack([grid, np.full(len(grid), float(theta)), np.full(len(grid), float(loc_s))], axis=1)
    accepted = np.flatnonzero(model.predict(x))

    if len(accepted) == 0:
        raise MaxFeerateReachedError(f'no feerate accepted within {config.max_increments} increments of {start}')

    return float(grid[accepted[0]])
