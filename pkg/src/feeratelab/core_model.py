# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import IntEnum, unique
from functools import cached_property
from math import ceil, floor as mfloor, log
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, ValidationError


##########################################################################################
# Constants
##########################################################################################

'''
Weight units per virtual byte.
'''
WEIGHT_PER_VBYTE = 4

'''
Sentinel used in column arrays for an absent block height.
'''
NO_HEIGHT = np.iinfo(np.int64).max

'''
Relative tolerance of the feerate invariant.
'''
_feerate_rtol = 1e-9


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class BucketKind(IntEnum):
    '''
    Enumerator for the feerate bucketing scheme.

    IntegerCeil - one bucket per integer feerate scale (ceil of the feerate)
    Geometric   - buckets with geometrically growing boundaries
    '''

    IntegerCeil = 0
    Geometric   = 1

    @staticmethod
    def from_string(label: str) -> BucketKind:
        if label == 'integer-ceil':
            return BucketKind.IntegerCeil
        elif label == 'geometric':
            return BucketKind.Geometric
        else:
            raise InvalidInputError(f'unknown bucket kind: {label}')


##########################################################################################
# Functions
##########################################################################################

def compute_feerate(fee: float, weight: float) -> float:
    '''
    Compute the feerate in satoshi per vByte.

    Arguments:
        fee    - transaction fee in satoshi
        weight - transaction weight in weight units
    '''

    if weight is None or weight <= 0:
        raise InvalidInputError(f'invalid weight: {weight}')

    return fee / (weight / WEIGHT_PER_VBYTE)

def feerate_to_fee(weight: float, feerate: float, floor: bool = False) -> float:
    '''
    Convert a feerate (sat/vB) into the fee (satoshi) of a transaction.

    Arguments:
        weight  - transaction weight
        feerate - feerate in satoshi per vByte
        floor   - use the integer part of the feerate
    '''

    if weight is None or not weight > 0:
        raise InvalidInputError(f'invalid weight: {weight}')

    if floor:
        feerate = mfloor(feerate)

    return weight / WEIGHT_PER_VBYTE * feerate

def bucket_of(feerate: float, scheme: BucketScheme) -> int:
    '''
    Map a feerate to its bucket index under a scheme.

    Arguments:
        feerate - feerate in satoshi per vByte
        scheme  - the bucket scheme
    '''

    return scheme.bucket_of(feerate)


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class Transaction:
    '''
    Dataclass encoding a single transfer record.

    txid            - opaque transaction identifier
    version         - protocol-related transaction version
    size            - raw size in bytes
    weight          - weight in weight units
    inputs          - input count
    outputs         - output count
    fee             - fee in satoshi (None for a request skeleton)
    first_seen_time - unix time the transaction was first observed
    entry_height    - height of the latest block when entering the mempool
    leave_height    - height when leaving the mempool (optional)
    confirm_height  - height of the confirming block (optional)
    confirm_time    - unix time of the confirming block (optional)
    '''

    txid: str
    version: int
    size: int
    weight: int
    inputs: int
    outputs: int
    fee: int
    first_seen_time: float
    entry_height: int
    leave_height: int = None
    confirm_height: int = None
    confirm_time: float = None

    @property
    def feerate(self) -> float:
        if self.fee is None:
            return None

        return compute_feerate(self.fee, self.weight)

    @property
    def vsize(self) -> float:
        return self.weight / WEIGHT_PER_VBYTE

    @property
    def is_confirmed(self) -> bool:
        return self.confirm_height is not None

    @property
    def is_evicted(self) -> bool:
        return self.confirm_height is None and self.leave_height is not None

    def skeleton(self) -> Transaction:
        '''
        Strip the fee and everything after mempool entry.

        The result is what an estimator may see of a transaction it is
        asked to price.
        '''

        return replace(self, fee=None, leave_height=None, confirm_height=None, confirm_time=None)

    def validate(self) -> None:
        '''
        Check the transaction invariants, raise a ValidationError on breach.
        '''

        if self.weight is None or self.weight <= 0:
            raise ValidationError(f'tx {self.txid}: weight must be positive: {self.weight}')

        if self.size is None or self.size <= 0:
            raise ValidationError(f'tx {self.txid}: size must be positive: {self.size}')

        if self.fee is not None and self.fee < 0:
            raise ValidationError(f'tx {self.txid}: negative fee: {self.fee}')

        if self.inputs < 1 or self.outputs < 1:
            raise ValidationError(f'tx {self.txid}: needs at least one input and output')

        if self.confirm_height is not None:
            if self.confirm_height < self.entry_height:
                raise ValidationError(f'tx {self.txid}: confirmed before entering: {self.confirm_height} < {self.entry_height}')

            if self.leave_height is not None and self.leave_height != self.confirm_height:
                raise ValidationError(f'tx {self.txid}: leave height differs from confirm height')

        if self.leave_height is not None and self.leave_height < self.entry_height:
            raise ValidationError(f'tx {self.txid}: left before entering: {self.leave_height} < {self.entry_height}')

@dataclass(frozen=True)
class Block:
    '''
    Dataclass encoding the per-block network features.

    height       - block height
    timestamp    - unix time of the block
    interval     - seconds to the previous block
    size         - overall size of the block transactions in bytes
    difficulty   - mining difficulty
    total_weight - sum of transaction weight in the block
    tx_count     - number of transactions in the block
    mean_feerate - average feerate of the block transactions
    '''

    height: int
    timestamp: float
    interval: float
    size: int
    difficulty: float
    total_weight: int
    tx_count: int
    mean_feerate: float

    def validate(self) -> None:
        if self.interval < 0:
            raise ValidationError(f'block {self.height}: negative interval: {self.interval}')

        if self.tx_count < 0:
            raise ValidationError(f'block {self.height}: negative tx count: {self.tx_count}')

    def features(self) -> tuple[float, ...]:
        '''
        Network feature row of the block.
        '''

        return (
            float(self.interval),
            float(self.size),
            float(self.difficulty),
            float(self.total_weight),
            float(self.tx_count),
            float(self.mean_feerate),
        )

@dataclass(frozen=True, eq=False)
class TxColumns:
    '''
    Column-wise copy of the transactions of a chain.

    Absent heights are stored as NO_HEIGHT, absent fees as NaN.
    '''

    txids: list[str]
    version: np.ndarray
    size: np.ndarray
    weight: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    fee: np.ndarray
    feerate: np.ndarray
    first_seen_time: np.ndarray
    entry_height: np.ndarray
    leave_height: np.ndarray
    confirm_height: np.ndarray

    @staticmethod
    def from_transactions(transactions: Sequence[Transaction]) -> TxColumns:
        def _heights(values: Iterable[int]) -> np.ndarray:
            return np.array([NO_HEIGHT if v is None else v for v in values], dtype=np.int64)

        weight = np.array([t.weight for t in transactions], dtype=np.float64)
        fee = np.array([np.nan if t.fee is None else t.fee for t in transactions], dtype=np.float64)

        return TxColumns(
            txids=[t.txid for t in transactions],
            version=np.array([t.version for t in transactions], dtype=np.int64),
            size=np.array([t.size for t in transactions], dtype=np.float64),
            weight=weight,
            inputs=np.array([t.inputs for t in transactions], dtype=np.int64),
            outputs=np.array([t.outputs for t in transactions], dtype=np.int64),
            fee=fee,
            feerate=fee / (weight / WEIGHT_PER_VBYTE) if len(transactions) != 0 else np.zeros(0),
            first_seen_time=np.array([t.first_seen_time for t in transactions], dtype=np.float64),
            entry_height=np.array([t.entry_height for t in transactions], dtype=np.int64),
            leave_height=_heights(t.leave_height for t in transactions),
            confirm_height=_heights(t.confirm_height for t in transactions),
        )

    def __len__(self) -> int:
        return len(self.txids)

    def mempool_mask(self, height: int) -> np.ndarray:
        '''
        Membership mask of the mempool right after block height.
        '''

        return (self.entry_height <= height) & (self.confirm_height > height) & (self.leave_height > height)

@dataclass(frozen=True)
class BucketScheme:
    '''
    Dataclass encoding a feerate bucketing scheme.

    kind  - integer-ceil or geometric
    r_min - lower feerate bound (u_min for integer-ceil)
    r_max - upper feerate bound (u_max for integer-ceil)
    ratio - boundary growth factor of the geometric scheme
    '''

    kind: BucketKind
    r_min: float
    r_max: float
    ratio: float = 1.05

    def __post_init__(self):
        if self.r_min <= 0 or self.r_max <= self.r_min:
            raise InvalidInputError(f'invalid bucket bounds: [{self.r_min}, {self.r_max}]')

        if self.kind == BucketKind.Geometric and self.ratio <= 1.0:
            raise InvalidInputError(f'invalid bucket ratio: {self.ratio}')

        if self.kind == BucketKind.IntegerCeil and (int(self.r_min) != self.r_min or int(self.r_max) != self.r_max):
            raise InvalidInputError('integer-ceil bounds have to be integers')

    @staticmethod
    def integer_ceil(u_min: int = 1, u_max: int = 1000) -> BucketScheme:
        return BucketScheme(BucketKind.IntegerCeil, u_min, u_max)

    @staticmethod
    def geometric(r_min: float = 1.0, r_max: float = 10000.0, ratio: float = 1.05) -> BucketScheme:
        return BucketScheme(BucketKind.Geometric, r_min, r_max, ratio)

    @cached_property
    def count(self) -> int:
        '''
        Number of buckets.
        '''

        if self.kind == BucketKind.IntegerCeil:
            return int(self.r_max - self.r_min) + 1

        return int(ceil(log(self.r_max / self.r_min) / log(self.ratio)))

    @property
    def first_index(self) -> int:
        '''
        Index of the lowest bucket (u_min for integer-ceil, zero otherwise).
        '''

        return int(self.r_min) if self.kind == BucketKind.IntegerCeil else 0

    @cached_property
    def boundaries(self) -> np.ndarray:
        '''
        The count + 1 bucket boundaries, strictly increasing.

        Bucket i (array position) covers [boundaries[i], boundaries[i + 1]).
        For integer-ceil bucket u covers (u - 1, u].
        '''

        if self.kind == BucketKind.IntegerCeil:
            return np.arange(self.r_min - 1, self.r_max + 1, dtype=np.float64)

        return self.r_min * np.power(self.ratio, np.arange(self.count + 1, dtype=np.float64))

    def lower(self, index: int) -> float:
        return float(self.boundaries[index - self.first_index])

    def upper(self, index: int) -> float:
        return float(self.boundaries[index - self.first_index + 1])

    def indices_of(self, feerates: np.ndarray) -> np.ndarray:
        '''
        Vectorized bucket_of().

        Arguments:
            feerates - array of feerates
        '''

        r = np.asarray(feerates, dtype=np.float64)

        if np.any(np.isnan(r)) or np.any(r < 0):
            raise InvalidInputError('feerate has to be a non-negative number')

        if self.kind == BucketKind.IntegerCeil:
            return np.clip(np.ceil(r), self.r_min, self.r_max).astype(np.int64)

        idx = np.searchsorted(self.boundaries, r, side='right') - 1

        return np.clip(idx, 0, self.count - 1).astype(np.int64)

    def positions_of(self, feerates: np.ndarray) -> np.ndarray:
        '''
        Zero-based array positions of the buckets of some feerates.
        '''

        return self.indices_of(feerates) - self.first_index

    def bucket_of(self, feerate: float) -> int:
        return int(self.indices_of(np.array([feerate]))[0])

    def aggregate(self, feerates: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        '''
        Count and weight per bucket position.

        Arguments:
            feerates - member feerates
            weights  - member weights
        '''

        positions = self.positions_of(feerates)

        counts = np.bincount(positions, minlength=self.count).astype(np.float64)
        weight_sums = np.bincount(positions, weights=np.asarray(weights, dtype=np.float64), minlength=self.count)

        return counts, weight_sums

@dataclass(frozen=True, eq=False)
class MempoolSnapshot:
    '''
    Dataclass encoding the unconfirmed transaction set right after a block.

    height         - block height of the snapshot
    txids          - member transaction identifiers
    scheme         - bucket scheme of the aggregates
    bucket_counts  - member count per bucket position
    bucket_weights - member weight per bucket position
    feerates       - member feerates (same order as entry_heights/weights)
    weights        - member weights
    entry_heights  - member entry heights
    '''

    height: int
    txids: frozenset[str]
    scheme: BucketScheme
    bucket_counts: np.ndarray
    bucket_weights: np.ndarray
    feerates: np.ndarray
    weights: np.ndarray
    entry_heights: np.ndarray

    @staticmethod
    def from_columns(columns: TxColumns, mask: np.ndarray, height: int, scheme: BucketScheme) -> MempoolSnapshot:
        feerates = columns.feerate[mask]
        weights = columns.weight[mask]
        counts, weight_sums = scheme.aggregate(feerates, weights)

        return MempoolSnapshot(
            height=height,
            txids=frozenset(np.asarray(columns.txids, dtype=object)[mask]) if len(columns) != 0 else frozenset(),
            scheme=scheme,
            bucket_counts=counts,
            bucket_weights=weight_sums,
            feerates=feerates,
            weights=weights,
            entry_heights=columns.entry_height[mask],
        )

    @staticmethod
    def from_transactions(height: int, transactions: Iterable[Transaction], scheme: BucketScheme) -> MempoolSnapshot:
        members = list(transactions)
        columns = TxColumns.from_transactions(members)

        return MempoolSnapshot.from_columns(columns, np.ones(len(members), dtype=bool), height, scheme)

    @property
    def count(self) -> int:
        return len(self.txids)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def verify(self, transactions: Mapping[str, Transaction]) -> None:
        '''
        Check that the aggregates equal a recount from the member transactions.

        Arguments:
            transactions - transaction lookup holding every member
        '''

        counts = np.zeros(self.scheme.count)
        weights = np.zeros(self.scheme.count)

        for txid in self.txids:
            tx = transactions[txid]
            position = self.scheme.bucket_of(tx.feerate) - self.scheme.first_index

            counts[position] += 1
            weights[position] += tx.weight

        if not np.array_equal(counts, self.bucket_counts) or not np.allclose(weights, self.bucket_weights):
            raise ValidationError(f'mempool aggregates at height {self.height} do not match members')

@dataclass(frozen=True)
class EstimateRequest:
    '''
    Dataclass encoding a fee estimation request.

    tx_skeleton     - transaction without fee and confirmation fields
    horizon_blocks  - expected confirmation interval in blocks (theta)
    horizon_minutes - expected confirmation interval in minutes (vartheta)
    '''

    tx_skeleton: Transaction
    horizon_blocks: int = None
    horizon_minutes: float = None

    def __post_init__(self):
        if (self.horizon_blocks is None) == (self.horizon_minutes is None):
            raise InvalidInputError('exactly one of horizon blocks and horizon minutes has to be set')

        if self.horizon_blocks is not None and (int(self.horizon_blocks) != self.horizon_blocks or self.horizon_blocks < 1):
            raise InvalidInputError(f'invalid horizon blocks: {self.horizon_blocks}')

        if self.horizon_minutes is not None and not self.horizon_minutes > 0:
            raise InvalidInputError(f'invalid horizon minutes: {self.horizon_minutes}')

    @property
    def blocks(self) -> int:
        if self.horizon_blocks is None:
            raise InvalidInputError('request is not block denominated')

        return int(self.horizon_blocks)

    @property
    def minutes(self) -> float:
        if self.horizon_minutes is None:
            raise InvalidInputError('request is not time denominated')

        return float(self.horizon_minutes)


##########################################################################################
# Class definitions
##########################################################################################

class ChainView:
    '''
    Ordered blocks plus the transaction records, the ground truth replay source.
    '''

    def __init__(self, blocks: Sequence[Block], transactions: Mapping[str, Transaction], validate: bool = True):
        '''
        Constructor.

        Arguments:
            blocks       - blocks ordered by height
            transactions - map from txid to transaction
            validate     - check all invariants
        '''

        self.blocks = tuple(blocks)
        self.transactions = dict(transactions)

        self._index = {b.height: i for i, b in enumerate(self.blocks)}

        if validate:
            self.validate()

    @property
    def tip_height(self) -> int:
        '''
        Maximum block height, -1 for an empty chain.
        '''

        if len(self.blocks) == 0:
            return -1

        return self.blocks[-1].height

    @cached_property
    def heights(self) -> np.ndarray:
        return np.array([b.height for b in self.blocks], dtype=np.int64)

    @cached_property
    def timestamps(self) -> np.ndarray:
        return np.array([b.timestamp for b in self.blocks], dtype=np.float64)

    def validate(self) -> None:
        '''
        Check all chain invariants, raise a ValidationError on breach.
        '''

        previous = None

        for block in self.blocks:
            block.validate()

            if previous is not None and block.height <= previous:
                raise ValidationError(f'block heights not strictly increasing: {previous} -> {block.height}')

            previous = block.height

        for txid, tx in self.transactions.items():
            if txid != tx.txid:
                raise ValidationError(f'transaction stored under foreign id: {txid}')

            tx.validate()

            if tx.confirm_height is not None and not tx.confirm_height in self._index:
                raise ValidationError(f'tx {txid}: confirm height {tx.confirm_height} not in chain')

    def has_block(self, height: int) -> bool:
        return height in self._index

    def block_at(self, height: int) -> Block:
        try:
            return self.blocks[self._index[height]]

        except KeyError:
            raise InvalidInputError(f'no block at height {height}') from None

    def blocks_between(self, low: int, high: int) -> list[Block]:
        '''
        Blocks with low <= height <= high, ordered by height.
        '''

        return [b for b in self.blocks if low <= b.height <= high]

    def tx_columns(self) -> TxColumns:
        '''
        Column-wise view of all transactions (computed once).
        '''

        if not hasattr(self, '_columns'):
            self._columns = TxColumns.from_transactions(list(self.transactions.values()))

        return self._columns

    def max_block_weight(self) -> int:
        if len(self.blocks) == 0:
            return 0

        return max(b.total_weight for b in self.blocks)

    def as_of(self, height: int) -> ChainView:
        '''
        View of the chain as known right after block height.

        Arguments:
            height - the block height

        Later blocks are dropped, transactions entering later are dropped,
        and confirmations or evictions after height are hidden.
        '''

        blocks = [b for b in self.blocks if b.height <= height]

        def _hide(tx: Transaction) -> Transaction:
            confirm_hidden = tx.confirm_height is not None and tx.confirm_height > height
            leave_hidden = tx.leave_height is not None and tx.leave_height > height

            if not confirm_hidden and not leave_hidden:
                return tx

            return replace(
                tx,
                confirm_height=None if confirm_hidden else tx.confirm_height,
                confirm_time=None if confirm_hidden else tx.confirm_time,
                leave_height=None if leave_hidden else tx.leave_height,
            )

        transactions = {k: _hide(v) for k, v in self.transactions.items() if v.entry_height <= height}

        return ChainView(blocks, transactions, validate=False)

class FeeEngine(ABC):
    '''
    Common interface of the fee estimators.

    The harness calls fit() once with the training cut, update() before
    every query height, and estimate_fee() per queried transaction.
    '''

    name: str = 'engine'

    @abstractmethod
    def fit(self, chain: ChainView, until_height: int) -> None:
        '''
        Fit the engine on blocks strictly below until_height.
        '''

    def update(self, chain: ChainView, height: int) -> None:
        '''
        Advance online state to a query height (blocks strictly below height).
        '''

        return None

    @abstractmethod
    def estimate_fee(self, tx: Transaction, theta: int, chain: ChainView, mempool: MempoolSnapshot) -> float:
        '''
        Estimate the fee in satoshi for confirmation within theta blocks.

        Arguments:
            tx      - skeleton of the transaction to price
            theta   - expected confirmation interval in blocks
            chain   - chain view as of the query height
            mempool - mempool snapshot at the query height
        '''
