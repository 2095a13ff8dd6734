# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from typing import Callable

import pytest

from feeratelab.core_model import Block, ChainView, Transaction
from feeratelab.ingestion import SynthConfig, synth_generate


##########################################################################################
# Internal functions
##########################################################################################

def _block(height: int, timestamp: float = None, **kwargs) -> Block:
    values = dict(
        height=height,
        timestamp=1_600_000_000.0 + 600.0 * height if timestamp is None else timestamp,
        interval=600.0,
        size=1000 + height,
        difficulty=5.0e13,
        total_weight=4000 + 10 * height,
        tx_count=3 + height,
        mean_feerate=10.0 + height,
    )
    values.update(kwargs)

    return Block(**values)

def _tx(txid: str, entry_height: int, feerate: float = 10.0, weight: int = 400, confirm_height: int = None, **kwargs) -> Transaction:
    values = dict(
        txid=txid,
        version=2,
        size=weight // 4 if weight >= 4 else 1,
        weight=weight,
        inputs=1,
        outputs=2,
        fee=int(round(feerate * weight / 4)),
        first_seen_time=1_600_000_000.0 + 600.0 * entry_height + 1.0,
        entry_height=entry_height,
        leave_height=confirm_height,
        confirm_height=confirm_height,
        confirm_time=None,
    )
    values.update(kwargs)

    return Transaction(**values)


##########################################################################################
# Fixtures
##########################################################################################

@pytest.fixture
def make_block() -> Callable[..., Block]:
    return _block

@pytest.fixture
def make_tx() -> Callable[..., Transaction]:
    return _tx

@pytest.fixture
def make_chain() -> Callable[..., ChainView]:
    def _chain(heights, transactions) -> ChainView:
        return ChainView([_block(h) for h in heights], {t.txid: t for t in transactions})

    return _chain

@pytest.fixture
def small_chain() -> ChainView:
    '''
    Five blocks and five transactions with hand-checkable mempools.
    '''

    transactions = [
        _tx('a', 0, feerate=5.0, confirm_height=2),
        _tx('b', 1, feerate=20.0, confirm_height=2),
        _tx('c', 1, feerate=2.5, weight=800, confirm_height=4),
        _tx('d', 2, feerate=12.0, confirm_height=3),
        _tx('e', 3, feerate=1.5),
    ]

    return ChainView([_block(h) for h in range(5)], {t.txid: t for t in transactions})

@pytest.fixture(scope='session')
def synth_chain() -> ChainView:
    '''
    A small congested synthetic chain.
    '''

    config = SynthConfig(n_blocks=24, tx_arrival_rate=4.0, block_weight_limit=16_000, seed=11)

    return synth_generate(config)
