# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass, field
from logging import getLogger
from multiprocessing import Pool
from pathlib import Path
from time import perf_counter
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import pandas as pd

from .core_model import WEIGHT_PER_VBYTE, ChainView, FeeEngine, Transaction
from .errors import FeeLabError, InsufficientDataError, InvalidInputError
from .ingestion import reconstruct_mempool


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'harness: '

'''
Retraining intervals (in blocks) of the update policy experiment.
'''
RETRAIN_POLICIES = (1, 3, 5, 9, 15, 45)

_report_columns = (
    'engine',
    'policy',
    'rmse',
    'mape',
    'mape_excluded',
    'answered',
    'failed',
    'coverage',
    'train_events',
    'train_seconds',
    'latency_mean_ms',
    'latency_p95_ms',
    'latency_max_ms',
)

_prediction_columns = ('txid', 'engine', 'theta', 'true_fee', 'pred_fee')


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class Metrics:
    '''
    Dataclass encoding the error of a prediction vector.

    rmse     - root mean squared error
    mape     - mean absolute percentage error (NaN if nothing is scorable)
    excluded - zero-truth entries left out of the MAPE
    '''

    rmse: float
    mape: float
    excluded: int = 0

@dataclass(frozen=True)
class SplitSpec:
    '''
    Dataclass encoding the train/test block split.

    train_blocks - leading blocks used for fitting
    test_blocks  - following blocks whose entering transactions are queried
    offset       - blocks skipped at the start of the chain
    '''

    train_blocks: int = 180
    test_blocks: int = 45
    offset: int = 0

    def __post_init__(self):
        if self.train_blocks < 1 or self.test_blocks < 1 or self.offset < 0:
            raise InvalidInputError(f'invalid split: {self.train_blocks}/{self.test_blocks}+{self.offset}')

    def heights(self, chain: ChainView) -> tuple[list[int], list[int]]:
        '''
        Train and test heights of a chain.
        '''

        available = len(chain.blocks) - self.offset
        if self.train_blocks + self.test_blocks > available:
            raise InsufficientDataError(f'split needs {self.train_blocks + self.test_blocks} blocks, chain has {available}')

        heights = [b.height for b in chain.blocks[self.offset:self.offset + self.train_blocks + self.test_blocks]]

        return heights[:self.train_blocks], heights[self.train_blocks:]

@dataclass(frozen=True)
class Query:
    '''
    Dataclass encoding one test transaction.

    tx    - the full transaction record (ground truth)
    theta - realized confirmation interval in blocks
    '''

    tx: Transaction
    theta: int

@dataclass
class EngineResult:
    '''
    Dataclass encoding the outcome of one engine run.
    '''

    engine: str
    metrics: Metrics
    answered: int
    failed: int
    train_events: int
    train_seconds: float
    latencies: np.ndarray
    policy: int = None
    failures: dict[str, int] = field(default_factory=dict)
    predictions: list[tuple[str, str, int, float, float]] = field(default_factory=list)

    @property
    def coverage(self) -> float:
        total = self.answered + self.failed

        return 100.0 * self.answered / total if total != 0 else 0.0

    def row(self) -> dict[str, Any]:
        lat = self.latencies * 1e3

        return {
            'engine': self.engine,
            'policy': self.policy,
            'rmse': self.metrics.rmse,
            'mape': self.metrics.mape,
            'mape_excluded': self.metrics.excluded,
            'answered': self.answered,
            'failed': self.failed,
            'coverage': self.coverage,
            'train_events': self.train_events,
            'train_seconds': self.train_seconds,
            'latency_mean_ms': float(lat.mean()) if lat.size != 0 else float('nan'),
            'latency_p95_ms': float(np.percentile(lat, 95)) if lat.size != 0 else float('nan'),
            'latency_max_ms': float(lat.max()) if lat.size != 0 else float('nan'),
        }

@dataclass
class BenchmarkReport:
    '''
    Dataclass encoding the results of a benchmark, one entry per engine run.
    '''

    results: list[EngineResult]

    def result(self, engine: str, policy: int = None) -> EngineResult:
        for r in self.results:
            if r.engine == engine and r.policy == policy:
                return r

        raise InvalidInputError(f'no result for engine {engine}')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.results], columns=list(_report_columns))

    def to_csv(self, path: Path) -> None:
        self.to_frame().to_csv(path, index=False)

    def format_table(self) -> str:
        frame = self.to_frame()

        if frame['policy'].isna().all():
            frame = frame.drop(columns=['policy'])

        return frame.to_string(index=False, float_format=lambda v: f'{v:.4g}')

    def predictions(self) -> pd.DataFrame:
        rows = [p for r in self.results for p in r.predictions]

        return pd.DataFrame(rows, columns=list(_prediction_columns))

    def write_predictions(self, path: Path) -> None:
        self.predictions().to_csv(path, index=False)


##########################################################################################
# Internal functions
##########################################################################################

def _test_queries(chain: ChainView, test_heights: Sequence[int]) -> dict[int, list[Query]]:
    '''
    Confirmed transactions entering at the test heights, grouped by entry height.
    '''

    wanted = set(test_heights)
    grouped = {h: [] for h in test_heights}

    for tx in chain.transactions.values():
        if not tx.entry_height in wanted or tx.confirm_height is None:
            continue

        theta = tx.confirm_height - tx.entry_height
        if theta < 1:
            continue

        grouped[tx.entry_height].append(Query(tx=tx, theta=theta))

    for queries in grouped.values():
        queries.sort(key=lambda q: q.tx.txid)

    return grouped

def _evaluate_engine(engine: FeeEngine, chain: ChainView, split: SplitSpec, policy: int, keep_predictions: bool) -> EngineResult:
    '''
    Fit and query a single engine over the test window.

    Arguments:
        engine           - the engine
        chain            - the full chain
        split            - train/test split
        policy           - retrain every this many test blocks (None fits once)
        keep_predictions - record per-transaction predictions
    '''

    lg = getLogger(__name__)

    _, test_heights = split.heights(chain)
    queries = _test_queries(chain, test_heights)

    truth, preds = [], []
    latencies, predictions = [], []
    failures = dict()

    train_events = 0
    train_seconds = 0.0

    refits = set(retrain_heights(test_heights, policy)) if policy is not None else {test_heights[0]}

    for height in test_heights:
        if height in refits:
            start = perf_counter()
            engine.fit(chain, height)
            train_seconds += perf_counter() - start
            train_events += 1

        if len(queries[height]) == 0:
            continue

        view = chain.as_of(height)
        mempool = reconstruct_mempool(view, height)

        engine.update(view, height)

        for query in queries[height]:
            skeleton = query.tx.skeleton()

            start = perf_counter()

            try:
                pred = engine.estimate_fee(skeleton, query.theta, view, mempool)

            except FeeLabError as e:
                reason = type(e).__name__
                failures[reason] = failures.get(reason, 0) + 1

                continue

            finally:
                latencies.append(perf_counter() - start)

            truth.append(query.tx.fee)
            preds.append(pred)

            if keep_predictions:
                predictions.append((query.tx.txid, engine.name, query.theta, float(query.tx.fee), float(pred)))

    failed = sum(failures.values())

    if len(truth) != 0:
        result_metrics = metrics(np.array(truth, dtype=np.float64), np.array(preds, dtype=np.float64))
    else:
        result_metrics = Metrics(rmse=float('nan'), mape=float('nan'))

    if failed != 0:
        lg.warning(_log_prefix + f'{engine.name}: {failed} failed queries {failures}')

    lg.info(_log_prefix + f'{engine.name}: RMSE {result_metrics.rmse:.2f}, MAPE {result_metrics.mape:.2f}, {len(truth)} answered')

    return EngineResult(
        engine=engine.name,
        metrics=result_metrics,
        answered=len(truth),
        failed=failed,
        train_events=train_events,
        train_seconds=train_seconds,
        latencies=np.array(latencies, dtype=np.float64),
        policy=policy,
        failures=failures,
        predictions=predictions,
    )

def _baseline_feerate(engine: FeeEngine, reference: Transaction, theta: int, chain: ChainView, mempool) -> float:
    try:
        fee = engine.estimate_fee(reference, theta, chain, mempool)

    except FeeLabError:
        return float('nan')

    return fee * WEIGHT_PER_VBYTE / reference.weight


##########################################################################################
# Functions
##########################################################################################

def metrics(truth: np.ndarray, predictions: np.ndarray) -> Metrics:
    '''
    RMSE and MAPE (in percent) of fee predictions.

    Zero-truth entries are left out of the MAPE and counted.
    '''

    truth = np.asarray(truth, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)

    if truth.shape != predictions.shape:
        raise InvalidInputError(f'length mismatch: {truth.shape} != {predictions.shape}')

    if truth.size == 0:
        raise InvalidInputError('no values to score')

    diff = truth - predictions
    rmse = float(np.sqrt(np.mean(diff * diff)))

    scorable = truth != 0.0
    excluded = int(truth.size - np.count_nonzero(scorable))

    if excluded == truth.size:
        mape = float('nan')
    else:
        mape = float(100.0 * np.mean(np.abs(diff[scorable]) / np.abs(truth[scorable])))

    return Metrics(rmse=rmse, mape=mape, excluded=excluded)

def retrain_heights(test_heights: Sequence[int], policy: int) -> list[int]:
    '''
    Heights at which a model is (re)trained when retraining every policy blocks.
    '''

    if policy < 1:
        raise InvalidInputError(f'invalid retrain interval: {policy}')

    return list(test_heights[::policy])

def run_benchmark(chain: ChainView, engines: Sequence[FeeEngine], split: SplitSpec = None, parallel: bool = False,
                  keep_predictions: bool = False, policy: int = None) -> BenchmarkReport:
    '''
    Fit every engine on the training blocks and score it on the test transactions.

    Arguments:
        chain            - the full chain
        engines          - engines to evaluate
        split            - train/test split
        parallel         - evaluate the engines in worker processes
        keep_predictions - record per-transaction predictions
        policy           - retrain every this many test blocks

    Every query is answered from the chain as known right after the entry
    height of the transaction, with theta set to its realized interval.
    '''

    if split is None:
        split = SplitSpec()

    split.heights(chain)

    pool_args = [(e, chain, split, policy, keep_predictions) for e in engines]

    if parallel and len(engines) > 1:
        with Pool(processes=len(engines)) as pool:
            results = pool.starmap(_evaluate_engine, pool_args)
    else:
        results = [_evaluate_engine(*args) for args in pool_args]

    return BenchmarkReport(results=list(results))

def retrain_frequency_experiment(chain: ChainView, engine_factory: Callable[[], FeeEngine], split: SplitSpec = None,
                                 policies: Iterable[int] = RETRAIN_POLICIES, parallel: bool = False) -> BenchmarkReport:
    '''
    Score a model retrained at different intervals across the test window.

    Arguments:
        chain          - the full chain
        engine_factory - builds a fresh engine (its training window slides with the cut)
        split          - train/test split
        policies       - retraining intervals in blocks
        parallel       - evaluate the policies in worker processes
    '''

    if split is None:
        split = SplitSpec()

    split.heights(chain)

    pool_args = [(engine_factory(), chain, split, p, False) for p in policies]

    if parallel and len(pool_args) > 1:
        with Pool() as pool:
            results = pool.starmap(_evaluate_engine, pool_args)
    else:
        results = [_evaluate_engine(*args) for args in pool_args]

    return BenchmarkReport(results=list(results))

def ablation_experiment(chain: ChainView, split: SplitSpec = None, ablations: Iterable[Any] = None, hyper: Any = None,
                        parallel: bool = False) -> BenchmarkReport:
    '''
    Score the additive attention network with restricted feature groups.
    '''

    from .fenn import FennAblation, FennEngine, FennVariant

    if ablations is None:
        ablations = tuple(FennAblation)

    engines = [FennEngine(FennVariant.Adv, a, hyper) for a in ablations]

    return run_benchmark(chain, engines, split, parallel=parallel)

def timing_experiment(dataset: Any, variants: Iterable[Any] = None, hyper: Any = None) -> pd.DataFrame:
    '''
    Wall-clock training time of the network variants on identical data.

    Arguments:
        dataset  - training instances shared by all variants
        variants - variants to time (all if None)
        hyper    - hyper-parameters shared by all variants
    '''

    from .fenn import FennVariant, train

    if variants is None:
        variants = tuple(FennVariant)

    rows = []

    for variant in variants:
        model = train(dataset, variant, hyper)

        rows.append({
            'variant': variant.label,
            'train_seconds': model.train_seconds,
            'epochs': len(model.loss_history),
            'final_loss': model.loss_history[-1],
        })

    return pd.DataFrame(rows, columns=['variant', 'train_seconds', 'epochs', 'final_loss'])

def compare_feerates(chain: ChainView, heights: Iterable[int], theta: int, engines: Sequence[FeeEngine], fit_height: int = None) -> pd.DataFrame:
    '''
    Baseline feerate estimates next to the feerates actually confirmed.

    Arguments:
        chain      - the full chain
        heights    - query heights
        theta      - confirmation target in blocks
        engines    - feerate-based engines
        fit_height - training cut (first query height if None)

    For each query height h, the estimates for theta blocks are listed next to
    the minimum and median feerate confirmed in block h + theta.
    '''

    heights = sorted(heights)
    if len(heights) == 0:
        raise InvalidInputError('no query heights')

    if fit_height is None:
        fit_height = heights[0]

    for engine in engines:
        engine.fit(chain, fit_height)

    columns = chain.tx_columns()
    reference = Transaction(
        txid='reference', version=2, size=250, weight=1000, inputs=1, outputs=2,
        fee=None, first_seen_time=0.0, entry_height=heights[0],
    )

    rows = []

    for height in heights:
        view = chain.as_of(height)
        mempool = reconstruct_mempool(view, height)

        row = {'height': height, 'theta': theta}

        for engine in engines:
            engine.update(view, height)
            row[engine.name] = _baseline_feerate(engine, reference, theta, view, mempool)

        confirmed = columns.feerate[columns.confirm_height == height + theta]

        row['confirmed_min'] = float(confirmed.min()) if confirmed.size != 0 else float('nan')
        row['confirmed_median'] = float(np.median(confirmed)) if confirmed.size != 0 else float('nan')

        rows.append(row)

    return pd.DataFrame(rows)
