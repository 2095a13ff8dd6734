# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


import numpy as np
import pytest

from feeratelab.btcflow import (
    BtcFlowConfig,
    BtcFlowEngine,
    BtcFlowPreset,
    FlowModel,
    block_count_exceedance,
    build_flows,
    estimate,
    model_outflow,
    poisson_block_count,
)
from feeratelab.core_model import BucketScheme, ChainView, EstimateRequest, MempoolSnapshot
from feeratelab.errors import InvalidInputError
from feeratelab.ingestion import reconstruct_mempool


def _flows(minutes: float, config: BtcFlowConfig, inflow: dict = None, state: dict = None) -> FlowModel:
    scheme = config.scheme

    v = np.zeros(scheme.count)
    s = np.zeros(scheme.count)

    for u, value in (inflow or {}).items():
        v[u - scheme.first_index] = value

    for u, value in (state or {}).items():
        s[u - scheme.first_index] = value

    return FlowModel(minutes=minutes, scheme=scheme, inflow=v, state=s)

def _request(make_tx, minutes: float) -> EstimateRequest:
    return EstimateRequest(make_tx('q', 0).skeleton(), horizon_minutes=minutes)

@pytest.mark.parametrize('minutes, expected', [
    (10.0, [0.632, 0.264, 0.080, 0.019, 0.004]),
    (20.0, [0.864, 0.594, 0.323, 0.143, 0.053]),
])
def test_block_count_exceedance_table(minutes, expected):
    computed = [block_count_exceedance(minutes, k) for k in range(5)]

    assert computed == pytest.approx(expected, abs=1e-3)

def test_block_count_exceedance_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        block_count_exceedance(10.0, -1)

@pytest.mark.parametrize('minutes, p, expected', [
    (10.0, 0.8, 0),
    (10.0, 0.5, 1),
    (20.0, 0.8, 1),
    (60.0, 0.5, 6),
    (10.0, 0.9, 0),
    (10.0, 0.3, 1),
    (10.0, 0.1, 2),
    (10.0, 0.05, 3),
    (10.0, 0.01, 4),
])
def test_poisson_block_count(minutes, p, expected):
    assert poisson_block_count(minutes, p) == expected

def test_poisson_block_count_grows_with_time():
    counts = [poisson_block_count(m, 0.8) for m in (10.0, 30.0, 60.0, 120.0, 240.0)]

    assert counts == sorted(counts)
    assert counts[-1] > counts[0]

def test_poisson_block_count_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        poisson_block_count(0.0, 0.5)

    with pytest.raises(InvalidInputError):
        poisson_block_count(10.0, 1.5)

@pytest.mark.parametrize('count, block_weight, expected', [
    (0, 4e6, 0.0),
    (1, 4e6, 4e6),
    (3, 2e6, 6e6),
])
def test_model_outflow(count, block_weight, expected):
    assert model_outflow(count, BtcFlowConfig(block_weight=block_weight)) == expected

def test_build_flows_empty():
    config = BtcFlowConfig()
    mempool = MempoolSnapshot.from_transactions(0, [], config.scheme)

    flows = build_flows(ChainView([], {}), mempool, 10.0, config)

    assert not np.any(flows.inflow)
    assert not np.any(flows.state)

def test_build_flows_inflow(make_block, make_tx):
    blocks = [make_block(0, timestamp=1000.0), make_block(1, timestamp=1600.0)]
    transactions = [
        make_tx('a', 0, feerate=2.3, weight=400, first_seen_time=1500.0),
        make_tx('b', 0, feerate=2.3, weight=400, first_seen_time=1550.0),
        make_tx('old', 0, feerate=2.3, weight=400, first_seen_time=100.0),
    ]

    chain = ChainView(blocks, {t.txid: t for t in transactions})
    config = BtcFlowConfig()

    flows = build_flows(chain, reconstruct_mempool(chain, 1, config.scheme), 10.0, config)

    assert flows.inflow_at(3) == pytest.approx(40.0)
    assert flows.state_at(3) == pytest.approx(1200.0)
    assert flows.inflow.sum() == pytest.approx(40.0)

def test_build_flows_state(make_tx):
    config = BtcFlowConfig()
    mempool = MempoolSnapshot.from_transactions(0, [
        make_tx('a', 0, feerate=5.0, weight=600),
        make_tx('b', 0, feerate=4.2, weight=400),
    ], config.scheme)

    flows = build_flows(ChainView([], {}), mempool, 10.0, config)

    assert flows.state_at(5) == pytest.approx(1000.0)
    assert flows.state.sum() == pytest.approx(1000.0)

def test_estimate_nothing_to_drain(make_tx):
    config = BtcFlowConfig(p=0.5)

    result = estimate(_request(make_tx, 10.0), _flows(10.0, config), config)

    assert result.outflow == 4e6
    assert result.scale == 1
    assert not result.low_confidence

def test_estimate_mempool_above_outflow(make_tx):
    config = BtcFlowConfig(p=0.5)
    flows = _flows(10.0, config, state={10: 5e6, 5: 1e6})

    assert estimate(_request(make_tx, 10.0), flows, config).feerate == 11.0

def test_estimate_inflow_and_mempool(make_tx):
    config = BtcFlowConfig(p=0.5)
    flows = _flows(10.0, config, inflow={20: 1e5}, state={20: 3.5e6})

    assert estimate(_request(make_tx, 10.0), flows, config).feerate == 21.0

def test_estimate_without_outflow(make_tx):
    config = BtcFlowConfig(p=0.8)

    result = estimate(_request(make_tx, 10.0), _flows(10.0, config), config)

    assert result.low_confidence
    assert result.scale == config.u_max

def test_estimate_saturated(make_tx):
    config = BtcFlowConfig(p=0.5)
    flows = _flows(10.0, config, state={config.u_max: 9e6})

    result = estimate(_request(make_tx, 10.0), flows, config)

    assert result.scale == config.u_max
    assert not result.low_confidence

def test_estimate_minutes_mismatch(make_tx):
    config = BtcFlowConfig()

    with pytest.raises(InvalidInputError):
        estimate(_request(make_tx, 20.0), _flows(10.0, config), config)

def _drain_boundary(flows: FlowModel, config: BtcFlowConfig, outflow: float) -> int:
    '''
    Lowest scale whose volume at or above it drains, checked scale by scale.
    '''

    if outflow == 0:
        return config.u_max

    for u in range(config.u_min, config.u_max + 1):
        above = range(u, config.u_max + 1)
        volume = sum(flows.minutes * flows.inflow_at(v) + flows.state_at(v) for v in above)

        if volume <= outflow:
            return u

    return config.u_max

@pytest.mark.parametrize('seed', range(100))
def test_estimate_matches_scale_scan(make_tx, seed):
    rng = np.random.default_rng(seed)

    minutes = float(rng.choice([10.0, 20.0, 30.0, 60.0]))
    config = BtcFlowConfig(block_weight=float(rng.integers(1, 5)) * 1000.0, p=float(rng.choice([0.5, 0.8, 0.9])), u_max=12)

    scales = rng.integers(config.u_min, config.u_max + 1, size=6)
    inflow = {int(u): float(rng.integers(0, 40)) for u in scales[:3]}
    state = {int(u): float(rng.integers(0, 3000)) for u in scales[3:]}

    flows = _flows(minutes, config, inflow, state)
    result = estimate(_request(make_tx, minutes), flows, config)

    outflow = poisson_block_count(minutes, config.p) * config.block_weight

    assert result.outflow == outflow
    assert result.scale == _drain_boundary(flows, config, outflow)

def test_preset():
    assert BtcFlowPreset.from_string('optimistic').probability == 0.5
    assert BtcFlowConfig.from_preset(BtcFlowPreset.Cautious).p == 0.9

    with pytest.raises(InvalidInputError):
        BtcFlowPreset.from_string('reckless')

def test_engine_floors_feerate(small_chain):
    engine = BtcFlowEngine(BtcFlowConfig(block_weight=1000, p=0.5))
    engine.fit(small_chain, 2)

    view = small_chain.as_of(2)
    mempool = reconstruct_mempool(view, 2)
    tx = small_chain.transactions['d'].skeleton()

    fee = engine.estimate_fee(tx, 3, view, mempool)

    assert fee >= 0
    assert fee % (tx.weight / 4) == 0
