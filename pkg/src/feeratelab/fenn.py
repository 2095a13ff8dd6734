# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import asdict, dataclass, field
from enum import IntEnum, unique
from json import dumps as jdumps, loads as jloads
from logging import getLogger
from pathlib import Path
from time import perf_counter
from typing import Any

import numpy as np

from .common_util import default_seed
from .core_model import (
    NO_HEIGHT,
    BucketScheme,
    ChainView,
    EstimateRequest,
    FeeEngine,
    MempoolSnapshot,
    Transaction,
)
from .errors import InsufficientHistoryError, InvalidInputError, ParseError, TrainingDivergedError, UntrainedModelError
from .nn import (
    Activation,
    AdamHyper,
    AdamState,
    AdditiveAttention,
    Dense,
    Lstm,
    ParamSet,
    SelfAttention,
    WeightedAttention,
    adam_step,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'FENN: '

_checkpoint_name = 'fenn.ckpt'
_meta_name = 'model.json'

'''
Width of the transaction vector [inputs, outputs, size, weight, version, theta].
'''
TX_FEATURES = 6

'''
Width of a block row [interval, size, difficulty, weight, tx count, mean feerate].
'''
BLOCK_FEATURES = 6

'''
Hidden units of the prediction head.
'''
HEAD_UNITS = (64, 8, 1)


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class FennVariant(IntEnum):
    '''
    Enumerator for the sequence module of the network.

    Lstm    - final LSTM hidden state
    Adv     - additive attention over the block rows
    Self    - self-attention over the block rows, mean pooled
    Wht     - weighted attention over the LSTM hidden states
    LstmAdv - additive attention over the LSTM hidden states
    '''

    Lstm    = 0
    Adv     = 1
    Self    = 2
    Wht     = 3
    LstmAdv = 4

    @staticmethod
    def from_string(label: str) -> FennVariant:
        for v in FennVariant:
            if v.label == label:
                return v

        raise InvalidInputError(f'unknown variant: {label}')

    @property
    def label(self) -> str:
        return self.name.lower()

@unique
class FennAblation(IntEnum):
    '''
    Enumerator for the feature groups fed to the network.

    Tx    - transaction features only
    MemTx - transaction and mempool features
    BloTx - transaction and block sequence features
    Full  - all feature groups
    '''

    Tx    = 0
    MemTx = 1
    BloTx = 2
    Full  = 3

    @staticmethod
    def from_string(label: str) -> FennAblation:
        for a in FennAblation:
            if a.label == label:
                return a

        raise InvalidInputError(f'unknown ablation: {label}')

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def uses_mempool(self) -> bool:
        return self in (FennAblation.MemTx, FennAblation.Full)

    @property
    def uses_blocks(self) -> bool:
        return self in (FennAblation.BloTx, FennAblation.Full)


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class FennHyper:
    '''
    Dataclass encoding the network hyper-parameters.

    epochs          - training epochs
    batch_size      - mini-batch size
    lr              - Adam learning rate
    hidden          - hidden units of the sequence module
    d_k             - key width of the self-attention
    sequence_length - trailing blocks in the network sequence
    head_activation - activation of the hidden head layers
    literal_lstm    - use tanh(c_(t-1)) in the LSTM output
    seed            - initialisation and shuffling seed
    '''

    epochs: int = 100
    batch_size: int = 1000
    lr: float = 1e-3
    hidden: int = 64
    d_k: int = 64
    sequence_length: int = 3
    head_activation: Activation = Activation.ReLU
    literal_lstm: bool = False
    seed: int = field(default_factory=default_seed)

    def __post_init__(self):
        for name in ('epochs', 'batch_size', 'hidden', 'd_k', 'sequence_length'):
            if getattr(self, name) < 1:
                raise InvalidInputError(f'invalid {name}: {getattr(self, name)}')

        if not self.lr > 0:
            raise InvalidInputError(f'invalid learning rate: {self.lr}')

    def to_json(self) -> dict[str, Any]:
        data = {k.replace('_', '-'): v for k, v in asdict(self).items()}
        data['head-activation'] = self.head_activation.name.lower()

        return data

    @staticmethod
    def from_json(data: dict[str, Any]) -> FennHyper:
        values = {k.replace('-', '_'): v for k, v in data.items()}
        values['head_activation'] = Activation.from_string(values['head_activation'])

        return FennHyper(**values)

@dataclass(frozen=True, eq=False)
class FennFeatures:
    '''
    Dataclass encoding the raw (unstandardized) inputs of one or more requests.

    tx  - transaction vectors (batch, 6)
    mem - mempool bucket counts (batch, buckets)
    seq - network sequences, oldest block first (batch, steps, 6)
    '''

    tx: np.ndarray
    mem: np.ndarray
    seq: np.ndarray

    def __len__(self) -> int:
        return self.tx.shape[0]

@dataclass(frozen=True, eq=False)
class FennDataset:
    '''
    Dataclass encoding the training instances.

    features - raw inputs
    target   - paid fee in satoshi
    txids    - transaction of each instance
    '''

    features: FennFeatures
    target: np.ndarray
    txids: list[str]

    def __len__(self) -> int:
        return len(self.target)

    def select(self, idx: np.ndarray) -> FennDataset:
        f = self.features

        return FennDataset(
            features=FennFeatures(f.tx[idx], f.mem[idx], f.seq[idx]),
            target=self.target[idx],
            txids=[self.txids[i] for i in idx],
        )

@dataclass(frozen=True, eq=False)
class Standardizer:
    '''
    Dataclass encoding per-feature mean and deviation, zero deviation maps to one.
    '''

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(values: np.ndarray) -> Standardizer:
        flat = values.reshape(-1, values.shape[-1]) if values.ndim > 1 else values.reshape(-1, 1)

        mean = flat.mean(axis=0) if len(flat) != 0 else np.zeros(flat.shape[1])
        std = flat.std(axis=0) if len(flat) != 0 else np.ones(flat.shape[1])

        return Standardizer(mean=mean, std=np.where(std > 0.0, std, 1.0))

    def transform(self, values: np.ndarray) -> np.ndarray:
        if values.ndim == 1:
            return (values - self.mean[0]) / self.std[0]

        return (values - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        if values.ndim == 1:
            return values * self.std[0] + self.mean[0]

        return values * self.std + self.mean


##########################################################################################
# Class definitions
##########################################################################################

class FennNetwork:
    '''
    The differentiable graph: sequence module, feature fusion and head.

    Masked feature groups enter the head as zeros, a masked block group
    skips the sequence module entirely.
    '''

    def __init__(self, variant: FennVariant, ablation: FennAblation, hyper: FennHyper, mem_dim: int):
        self.variant = variant
        self.ablation = ablation
        self.hyper = hyper
        self.mem_dim = mem_dim

        hidden = hyper.hidden

        self.lstm = None
        self.attention = None

        if variant in (FennVariant.Lstm, FennVariant.Wht, FennVariant.LstmAdv):
            self.lstm = Lstm(BLOCK_FEATURES, hidden, prefix='lstm', literal=hyper.literal_lstm)

        if variant == FennVariant.Adv:
            self.attention = AdditiveAttention(BLOCK_FEATURES, hidden, prefix='additive')
        elif variant == FennVariant.Self:
            self.attention = SelfAttention(BLOCK_FEATURES, hyper.d_k, hidden, prefix='self')
        elif variant == FennVariant.Wht:
            self.attention = WeightedAttention(hidden, prefix='weighted')
        elif variant == FennVariant.LstmAdv:
            self.attention = AdditiveAttention(hidden, hidden, prefix='additive')

        self.seq_dim = hidden if self.attention is None else self.attention.out_dim

        in_dim = TX_FEATURES + mem_dim + self.seq_dim
        units = (in_dim,) + HEAD_UNITS

        self.head = [
            Dense(units[k], units[k + 1], hyper.head_activation if k < len(HEAD_UNITS) - 1 else Activation.Linear, prefix=f'head{k}')
            for k in range(len(HEAD_UNITS))
        ]

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        params = ParamSet()

        if self.lstm is not None:
            self.lstm.init_params(params, rng)

        if self.attention is not None:
            self.attention.init_params(params, rng)

        for layer in self.head:
            layer.init_params(params, rng)

        return params

    def _sequence_forward(self, params: ParamSet, seq: np.ndarray) -> tuple[np.ndarray, dict[str, Any]]:
        cache = dict()
        x = seq

        if self.lstm is not None:
            x, cache['lstm'] = self.lstm.forward(params, x)

            if self.attention is None:
                return x[:, -1, :], cache

        out, cache['attention'] = self.attention.forward(params, x)

        if self.variant == FennVariant.Self:
            out = out.mean(axis=1)

        return out, cache

    def _sequence_backward(self, params: ParamSet, cache: dict[str, Any], dout: np.ndarray, grads: ParamSet) -> None:
        if self.attention is None:
            steps = cache['lstm']['x'].shape[1]

            dhs = np.zeros((dout.shape[0], steps, self.hyper.hidden))
            dhs[:, -1, :] = dout

            self.lstm.backward(params, cache['lstm'], dhs, grads)

            return

        if self.variant == FennVariant.Self:
            steps = cache['attention']['x'].shape[1]
            dout = np.repeat(dout[:, None, :] / steps, steps, axis=1)

        dx = self.attention.backward(params, cache['attention'], dout, grads)

        if self.lstm is not None:
            self.lstm.backward(params, cache['lstm'], dx, grads)

    def forward(self, params: ParamSet, tx: np.ndarray, mem: np.ndarray, seq: np.ndarray) -> tuple[np.ndarray, dict[str, Any]]:
        '''
        Forward pass over standardized inputs, returns the standardized log fee.
        '''

        batch = tx.shape[0]
        cache = dict()

        if not self.ablation.uses_mempool:
            mem = np.zeros((batch, self.mem_dim))

        if self.ablation.uses_blocks:
            seq_out, cache['sequence'] = self._sequence_forward(params, seq)
        else:
            seq_out = np.zeros((batch, self.seq_dim))

        x = np.concatenate([tx, mem, seq_out], axis=1)
        cache['head'] = []

        for layer in self.head:
            x, layer_cache = layer.forward(params, x)
            cache['head'].append(layer_cache)

        return x[:, 0], cache

    def backward(self, params: ParamSet, cache: dict[str, Any], dpred: np.ndarray) -> ParamSet:
        grads = params.zeros_like()

        dx = dpred[:, None]
        for layer, layer_cache in zip(reversed(self.head), reversed(cache['head'])):
            dx = layer.backward(params, layer_cache, dx, grads)

        if self.ablation.uses_blocks:
            self._sequence_backward(params, cache['sequence'], dx[:, TX_FEATURES + self.mem_dim:], grads)

        return grads

class FennModel:
    '''
    Trained network together with its standardization statistics.
    '''

    def __init__(self, variant: FennVariant, ablation: FennAblation, hyper: FennHyper, mem_dim: int):
        self.variant = variant
        self.ablation = ablation
        self.hyper = hyper
        self.mem_dim = mem_dim

        self.network = FennNetwork(variant, ablation, hyper, mem_dim)
        self.params = self.network.init_params(np.random.default_rng(hyper.seed))

        self.scalers: dict[str, Standardizer] = dict()

        self.loss_history: list[float] = []
        self.train_seconds = 0.0

    def fit_scalers(self, dataset: FennDataset) -> None:
        f = dataset.features

        self.scalers = {
            'tx': Standardizer.fit(f.tx),
            'mem': Standardizer.fit(f.mem),
            'seq': Standardizer.fit(f.seq),
            'target': Standardizer.fit(np.log1p(dataset.target)),
        }

    def standardized(self, features: FennFeatures) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if features.mem.shape[1] != self.mem_dim:
            raise InvalidInputError(f'mempool vector width {features.mem.shape[1]} != {self.mem_dim}')

        if features.seq.shape[1] != self.hyper.sequence_length:
            raise InvalidInputError(f'sequence length {features.seq.shape[1]} != {self.hyper.sequence_length}')

        return (
            self.scalers['tx'].transform(features.tx),
            self.scalers['mem'].transform(features.mem),
            self.scalers['seq'].transform(features.seq),
        )

    def loss_and_grads(self, params: ParamSet, dataset: FennDataset) -> tuple[float, ParamSet]:
        '''
        Training loss (MSE on the standardized log fee) and its gradients.
        '''

        tx, mem, seq = self.standardized(dataset.features)
        target = self.scalers['target'].transform(np.log1p(dataset.target))

        pred, cache = self.network.forward(params, tx, mem, seq)
        loss, dpred = mse_loss(pred, target)

        return loss, self.network.backward(params, cache, dpred)

    def predict(self, features: FennFeatures) -> np.ndarray:
        '''
        Predicted fee in satoshi, clamped at zero.
        '''

        tx, mem, seq = self.standardized(features)
        pred, _ = self.network.forward(self.params, tx, mem, seq)

        return np.maximum(np.expm1(self.scalers['target'].inverse(pred)), 0.0)

    def save(self, directory: Path) -> None:
        '''
        Write the checkpoint and the model description into a directory.
        '''

        directory.mkdir(parents=True, exist_ok=True)

        params = self.params.copy()
        for name, scaler in self.scalers.items():
            params[f'scaler.{name}.mean'] = scaler.mean
            params[f'scaler.{name}.std'] = scaler.std

        save_checkpoint(directory / _checkpoint_name, params)

        meta = {
            'variant': self.variant.label,
            'ablation': self.ablation.label,
            'mem-dim': self.mem_dim,
            'hyper': self.hyper.to_json(),
            'loss-history': self.loss_history,
            'train-seconds': self.train_seconds,
        }

        (directory / _meta_name).write_text(jdumps(meta, indent=4, sort_keys=True) + '\n', encoding='utf-8')

    @staticmethod
    def load(directory: Path) -> FennModel:
        meta_path = directory / _meta_name
        if not meta_path.is_file():
            raise ParseError(f'model description not found: {meta_path}')

        meta = jloads(meta_path.read_text(encoding='utf-8'))

        model = FennModel(
            FennVariant.from_string(meta['variant']),
            FennAblation.from_string(meta['ablation']),
            FennHyper.from_json(meta['hyper']),
            int(meta['mem-dim']),
        )

        stored = load_checkpoint(directory / _checkpoint_name)

        for name in model.params.names():
            if not name in stored:
                raise ParseError(f'checkpoint lacks parameter: {name}')

            model.params[name] = stored[name]

        for name in ('tx', 'mem', 'seq', 'target'):
            model.scalers[name] = Standardizer(mean=stored[f'scaler.{name}.mean'], std=stored[f'scaler.{name}.std'])

        model.loss_history = list(meta['loss-history'])
        model.train_seconds = float(meta['train-seconds'])

        return model

class FennEngine(FeeEngine):
    '''
    FENN estimator behind the common engine interface.

    window - when set, only instances entering within this many blocks before
             the cut are used for training
    '''

    def __init__(self, variant: FennVariant = FennVariant.Adv, ablation: FennAblation = FennAblation.Full, hyper: FennHyper = None,
                 scheme: BucketScheme = None, window: int = None, model: FennModel = None):
        self.variant = variant
        self.ablation = ablation
        self.hyper = FennHyper() if hyper is None else hyper
        self.scheme = BucketScheme.geometric() if scheme is None else scheme
        self.window = window
        self.model = model

        self._mempool = None
        self._context = None

        suffix = '' if ablation == FennAblation.Full else f'_{ablation.label}'
        self.name = f'fenn-{variant.label}{suffix}'

    def fit(self, chain: ChainView, until_height: int) -> None:
        view = chain.as_of(until_height - 1)
        min_entry = None if self.window is None else until_height - self.window

        dataset = build_training_set(view, self.hyper.sequence_length, self.scheme, min_entry_height=min_entry)

        self.model = train(dataset, self.variant, self.hyper, self.ablation)

    def estimate_fee(self, tx: Transaction, theta: int, chain: ChainView, mempool: MempoolSnapshot) -> float:
        if self.model is None:
            raise UntrainedModelError('engine has not been fitted')

        if self._mempool is not mempool:
            self._context = extract_features(chain, mempool, tx, theta, self.scheme, self.model.hyper.sequence_length)
            self._mempool = mempool

        features = FennFeatures(tx=_tx_vector(tx, theta)[None, :], mem=self._context.mem, seq=self._context.seq)

        return float(self.model.predict(features)[0])


##########################################################################################
# Internal functions
##########################################################################################

def _block_table(chain: ChainView) -> tuple[np.ndarray, dict[int, int]]:
    table = np.array([b.features() for b in chain.blocks], dtype=np.float64).reshape(-1, BLOCK_FEATURES)

    return table, {b.height: i for i, b in enumerate(chain.blocks)}

def _sequence_rows(chain: ChainView, end_heights: np.ndarray, length: int, row_of: dict[int, int]) -> np.ndarray:
    '''
    Row indices of the trailing blocks, -1 where the history is incomplete.
    '''

    rows = np.full((len(end_heights), length), -1, dtype=np.int64)

    for i, h in enumerate(end_heights):
        candidate = [row_of.get(int(h) - length + 1 + k, -1) for k in range(length)]
        if min(candidate) >= 0:
            rows[i] = candidate

    return rows

def _tx_vector(tx: Transaction, theta: float) -> np.ndarray:
    return np.array([tx.inputs, tx.outputs, tx.size, tx.weight, tx.version, theta], dtype=np.float64)


##########################################################################################
# Functions
##########################################################################################

def extract_features(chain: ChainView, mempool: MempoolSnapshot, tx: Transaction, theta: int, scheme: BucketScheme = None,
                     length: int = 3) -> FennFeatures:
    '''
    Build the raw inputs of a single request.

    Arguments:
        chain   - chain as known at the mempool height
        mempool - mempool at the entry height (current tip at inference)
        tx      - the transaction skeleton
        theta   - expected confirmation interval in blocks
        scheme  - bucket scheme of the mempool vector (geometric if None)
        length  - blocks in the network sequence

    The network sequence ends at the block of the mempool height.
    '''

    if scheme is None:
        scheme = BucketScheme.geometric()

    table, row_of = _block_table(chain)
    rows = _sequence_rows(chain, np.array([mempool.height]), length, row_of)

    if rows[0, 0] < 0:
        raise InsufficientHistoryError(f'need {length} blocks ending at height {mempool.height}')

    if mempool.scheme == scheme:
        counts = mempool.bucket_counts
    else:
        counts, _ = scheme.aggregate(mempool.feerates, mempool.weights)

    return FennFeatures(
        tx=_tx_vector(tx, theta)[None, :],
        mem=np.asarray(counts, dtype=np.float64)[None, :],
        seq=table[rows[0]][None, :, :],
    )

def build_training_set(chain: ChainView, length: int = 3, scheme: BucketScheme = None, min_entry_height: int = None) -> FennDataset:
    '''
    One instance per confirmed transaction with a full block history.

    Arguments:
        chain            - the chain (confirmations beyond its tip are unknown)
        length           - blocks in the network sequence
        scheme           - bucket scheme of the mempool vector
        min_entry_height - skip transactions entering below this height

    Theta is the realized interval h_c - h_e and the target the paid fee.
    '''

    if scheme is None:
        scheme = BucketScheme.geometric()

    columns = chain.tx_columns()
    table, row_of = _block_table(chain)

    eligible = (columns.confirm_height != NO_HEIGHT) & np.isfinite(columns.fee)
    if min_entry_height is not None:
        eligible &= columns.entry_height >= min_entry_height

    idx = np.flatnonzero(eligible)
    entries = columns.entry_height[idx]

    rows = _sequence_rows(chain, entries, length, row_of) if len(idx) != 0 else np.zeros((0, length), dtype=np.int64)
    complete = rows[:, 0] >= 0

    idx, entries, rows = idx[complete], entries[complete], rows[complete]

    mem = np.zeros((len(idx), scheme.count))
    for height in np.unique(entries):
        mask = columns.mempool_mask(int(height))
        counts, _ = scheme.aggregate(columns.feerate[mask], columns.weight[mask])
        mem[entries == height] = counts

    theta = (columns.confirm_height[idx] - entries).astype(np.float64)

    tx = np.stack([
        columns.inputs[idx].astype(np.float64),
        columns.outputs[idx].astype(np.float64),
        columns.size[idx],
        columns.weight[idx],
        columns.version[idx].astype(np.float64),
        theta,
    ], axis=1) if len(idx) != 0 else np.zeros((0, TX_FEATURES))

    seq = table[rows] if len(idx) != 0 else np.zeros((0, length, BLOCK_FEATURES))

    dataset = FennDataset(
        features=FennFeatures(tx=tx, mem=mem, seq=seq),
        target=columns.fee[idx],
        txids=[columns.txids[i] for i in idx],
    )

    getLogger(__name__).info(_log_prefix + f'{len(dataset)} training instances')

    return dataset

def train(dataset: FennDataset, variant: FennVariant = FennVariant.Adv, hyper: FennHyper = None, ablation: FennAblation = FennAblation.Full) -> FennModel:
    '''
    Train a network on a dataset.

    Arguments:
        dataset  - training instances
        variant  - sequence module
        hyper    - hyper-parameters
        ablation - feature groups to use
    '''

    if hyper is None:
        hyper = FennHyper()

    if len(dataset) == 0:
        raise InvalidInputError('cannot train on an empty dataset')

    lg = getLogger(__name__)

    model = FennModel(variant, ablation, hyper, dataset.features.mem.shape[1])
    model.fit_scalers(dataset)

    tx, mem, seq = model.standardized(dataset.features)
    target = model.scalers['target'].transform(np.log1p(dataset.target))

    rng = np.random.default_rng(hyper.seed + 1)
    state = AdamState.for_params(model.params)
    adam = AdamHyper(lr=hyper.lr)

    start = perf_counter()

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0

        for first in range(0, len(order), hyper.batch_size):
            batch = order[first:first + hyper.batch_size]

            pred, cache = model.network.forward(model.params, tx[batch], mem[batch], seq[batch])
            loss, dpred = mse_loss(pred, target[batch])

            if not np.isfinite(loss):
                raise TrainingDivergedError(f'non-finite loss in epoch {epoch + 1}')

            grads = model.network.backward(model.params, cache, dpred)
            adam_step(model.params, grads, state, adam)

            total += loss * len(batch)

        model.loss_history.append(total / len(dataset))

    model.train_seconds = perf_counter() - start

    lg.info(_log_prefix + f'{variant.label}/{ablation.label}: {hyper.epochs} epochs in {model.train_seconds:.2f}s, final loss {model.loss_history[-1]:.6f}')

    return model

def estimate_fee(request: EstimateRequest, mempool: MempoolSnapshot, chain: ChainView, model: FennModel, scheme: BucketScheme = None) -> float:
    '''
    Predict the fee of a request.

    Arguments:
        request - block-denominated request
        mempool - the current mempool
        chain   - chain as known at the mempool height
        model   - trained model
        scheme  - bucket scheme of the mempool vector
    '''

    features = extract_features(chain, mempool, request.tx_skeleton, request.blocks, scheme, model.hyper.sequence_length)

    return float(model.predict(features)[0])

def ablate(dataset: FennDataset, ablation: FennAblation, variant: FennVariant = FennVariant.Adv, hyper: FennHyper = None) -> FennModel:
    '''
    Train the same pipeline with only some feature groups wired into the graph.
    '''

    return train(dataset, variant, hyper, ablation)

def random_dataset(count: int, mem_dim: int, length: int = 3, seed: int = 0) -> FennDataset:
    '''
    Random instances with plausible magnitudes, for gradient checks and timing.
    '''

    rng = np.random.default_rng(seed)

    inputs = rng.integers(1, 4, size=count)
    outputs = rng.integers(1, 4, size=count)
    size = 10 + 68 * inputs + 31 * outputs
    weight = 4 * size - 3 * rng.integers(0, size // 2 + 1)

    tx = np.stack([inputs, outputs, size, weight, rng.integers(1, 3, size=count), rng.integers(1, 10, size=count)], axis=1).astype(np.float64)
    mem = rng.poisson(20.0, size=(count, mem_dim)).astype(np.float64)

    seq = np.stack([
        rng.exponential(600.0, size=(count, length)),
        rng.normal(1e5, 1e4, size=(count, length)),
        np.full((count, length), 5e13),
        rng.normal(4e5, 4e4, size=(count, length)),
        rng.poisson(300.0, size=(count, length)),
        rng.lognormal(3.0, 0.5, size=(count, length)),
    ], axis=2)

    target = np.round(weight / 4.0 * rng.lognormal(3.0, 1.0, size=count))

    return FennDataset(features=FennFeatures(tx=tx, mem=mem, seq=seq), target=target, txids=[f'random{i}' for i in range(count)])

def network_suite(seed: int = 0, tolerance: float = 1e-4, variants: tuple[FennVariant, ...] = tuple(FennVariant)) -> list[tuple[str, Any]]:
    '''
    Finite-difference check of the full training graph of each variant.

    Uses a tanh head, small sequence modules and a few random instances.
    '''

    from .nn import grad_check

    hyper = FennHyper(epochs=1, batch_size=4, hidden=4, d_k=4, head_activation=Activation.Tanh, seed=seed)
    dataset = random_dataset(4, 5, hyper.sequence_length, seed)

    reports = []

    for variant in variants:
        model = FennModel(variant, FennAblation.Full, hyper, dataset.features.mem.shape[1])
        model.fit_scalers(dataset)

        report = grad_check(lambda p: model.loss_and_grads(p, dataset), model.params, tolerance=tolerance, max_entries=32, seed=seed)
        reports.append((f'fenn-{variant.label}', report))

    return reports
