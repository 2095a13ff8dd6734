# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from collections import Counter

import numpy as np
import pytest

from feeratelab.core_model import BucketScheme, EstimateRequest, MempoolSnapshot
from feeratelab.errors import InvalidInputError, OutOfBoundaryError, UntrainedModelError
from feeratelab.ingestion import reconstruct_mempool
from feeratelab.mslp import (
    MslpConfig,
    MslpEngine,
    MslpInstanceSet,
    MslpModels,
    MslpRange,
    RangeModel,
    build_training_instances,
    estimate,
    label_hit,
    search_grid,
    train,
    virtual_position,
)
from feeratelab.nn import ParamSet


def _mempool(make_tx, members) -> MempoolSnapshot:
    transactions = [make_tx(f'm{i}', 0, feerate=r, weight=w) for i, (r, w) in enumerate(members)]

    return MempoolSnapshot.from_transactions(0, transactions, BucketScheme.geometric())

def _threshold_model(threshold: float) -> RangeModel:
    '''
    A model accepting exactly the feerates at or above threshold.
    '''

    params = ParamSet()
    params['mslp.W'] = np.array([[1.0, 0.0, 0.0]])
    params['mslp.b'] = np.array([-threshold])

    return RangeModel(params=params, mean=np.zeros(3), std=np.ones(3))

def _request(make_tx, theta: int) -> EstimateRequest:
    return EstimateRequest(make_tx('q', 0).skeleton(), horizon_blocks=theta)

def _training_config(**kwargs) -> MslpConfig:
    values = dict(epochs=200, batch_size=32, lr=0.05, seed=0)
    values.update(kwargs)

    return MslpConfig(**values)

def test_virtual_position_empty(make_tx):
    position = virtual_position(_mempool(make_tx, []), 10.0)

    assert (position.loc_b, position.loc_s) == (1, 1)

def test_virtual_position(make_tx):
    mempool = _mempool(make_tx, [(20.0, 6_000_000), (2.0, 1_000_000)])

    position = virtual_position(mempool, 10.0)

    assert (position.loc_b, position.loc_s) == (2, 16)

def test_virtual_position_full_block(make_tx):
    mempool = _mempool(make_tx, [(20.0, 4_000_000)])

    assert virtual_position(mempool, 10.0).loc_b == 2
    assert virtual_position(mempool, 20.0).loc_b == 2
    assert virtual_position(mempool, 25.0).loc_b == 1

def test_virtual_position_negative(make_tx):
    with pytest.raises(InvalidInputError):
        virtual_position(_mempool(make_tx, []), -1.0)

def test_label_hit():
    assert label_hit(np.array([5]), 10, np.array([14])).tolist() == [1]
    assert label_hit(np.array([2]), 10, np.array([16])).tolist() == [0]

def _enumerate_instances(chain, config: MslpConfig, heights) -> list[tuple]:
    '''
    Brute-force labels straight from the transaction records.
    '''

    expected = []
    for height in heights:
        members = [t for t in chain.transactions.values()
                   if t.entry_height <= height and (t.confirm_height is None or t.confirm_height > height)]

        for tx in members:
            if tx.confirm_height is None:
                continue

            above = sum(m.weight for m in members if m.feerate >= tx.feerate)
            loc_b = int(above // config.block_weight) + 1
            loc_s = int(above // config.slice_weight) + 1

            expected.append((tx.feerate, loc_b, loc_s, int(loc_b >= tx.confirm_height - height)))

    return expected

def test_training_instances_match_enumeration(make_chain, make_tx):
    chain = make_chain(range(4), [
        make_tx('a', 0, feerate=6.0, weight=800, confirm_height=2),
        make_tx('b', 1, feerate=9.0, weight=1200, confirm_height=3),
        make_tx('p', 1, feerate=12.0, weight=600),
    ])

    config = MslpConfig(block_weight=1000, seed=0)
    instances = build_training_instances(chain, config)

    got = [(i.feerate, i.loc_b, i.loc_s, i.hit) for i in instances]

    assert Counter(got) == Counter(_enumerate_instances(chain, config, range(3)))
    assert len(got) == 4

@pytest.mark.parametrize('seed', range(100))
def test_training_instances_match_enumeration_random(make_chain, make_tx, seed):
    rng = np.random.default_rng(seed)
    tip = 5

    transactions = []
    for i in range(int(rng.integers(1, 16))):
        entry = int(rng.integers(0, tip))
        confirm = None if rng.random() < 0.2 else int(rng.integers(entry + 1, tip + 1))

        transactions.append(make_tx(f't{i}', entry, feerate=float(rng.integers(1, 21)),
                                    weight=4 * int(rng.integers(25, 300)), confirm_height=confirm))

    chain = make_chain(range(tip + 1), transactions)
    config = MslpConfig(block_weight=1000, seed=0)

    got = [(i.feerate, i.loc_b, i.loc_s, i.hit) for i in build_training_instances(chain, config)]

    assert Counter(got) == Counter(_enumerate_instances(chain, config, range(tip)))

def test_train_constant_label():
    rng = np.random.default_rng(0)
    feerate = rng.uniform(1.0, 30.0, size=200)

    instances = MslpInstanceSet(feerate, np.ones(200, dtype=np.int64), np.ones(200, dtype=np.int64), np.ones(200, dtype=np.int64))
    models = train(instances, _training_config())

    assert np.all(models.model_for(1).predict(instances.features()) == 1)

def test_train_separable():
    rng = np.random.default_rng(1)
    feerate = np.concatenate([rng.uniform(0.0, 5.0, size=200), rng.uniform(15.0, 20.0, size=200)])
    hit = (feerate > 10.0).astype(np.int64)

    loc_b = rng.integers(1, 5, size=400)
    instances = MslpInstanceSet(feerate, loc_b, 10 * loc_b, hit)

    models = train(instances, _training_config())

    assert np.array_equal(models.model_for(1).predict(instances.features()), hit)
    assert models.is_trained(MslpRange.Blocks1to4)
    assert not models.is_trained(MslpRange.Blocks13Plus)

def test_untrained_range():
    with pytest.raises(UntrainedModelError):
        MslpModels().model_for(13)

def test_range_of_block():
    assert MslpRange.from_block(4) == MslpRange.Blocks1to4
    assert MslpRange.from_block(5) == MslpRange.Blocks5to8
    assert MslpRange.from_block(40) == MslpRange.Blocks13Plus

def test_search_grid():
    assert search_grid(11.9, MslpConfig(max_increments=2)).tolist() == [11.9, 12.0, 12.1]

def test_estimate_steps_until_accepted(make_tx):
    config = MslpConfig(block_weight=1000, seed=0)
    mempool = _mempool(make_tx, [(11.9, 1000), (30.0, 400)])
    models = MslpModels({MslpRange.Blocks1to4: _threshold_model(12.05)})

    # the block is filled from the top: 400 at 30.0, then 11.9
    assert estimate(_request(make_tx, 1), mempool, models, config) == pytest.approx(12.1)

def test_estimate_partial_block(make_tx):
    config = MslpConfig(block_weight=1000, seed=0)
    mempool = _mempool(make_tx, [(5.0, 400)])
    models = MslpModels({MslpRange.Blocks1to4: _threshold_model(0.25)})

    assert estimate(_request(make_tx, 1), mempool, models, config) == pytest.approx(0.3)

def test_estimate_out_of_boundary(make_tx):
    config = MslpConfig(block_weight=1000, seed=0)
    mempool = _mempool(make_tx, [(5.0, 1000)])
    models = MslpModels({r: _threshold_model(1.0) for r in MslpRange})

    with pytest.raises(OutOfBoundaryError):
        estimate(_request(make_tx, 3), mempool, models, config)

def test_estimate_untrained(make_tx):
    config = MslpConfig(block_weight=1000, seed=0)
    mempool = _mempool(make_tx, [(5.0, 10_000)])
    models = MslpModels({MslpRange.Blocks1to4: _threshold_model(1.0)})

    with pytest.raises(UntrainedModelError):
        estimate(_request(make_tx, 6), mempool, models, config)

def test_models_checkpoint(tmp_path):
    models = MslpModels({MslpRange.Blocks5to8: _threshold_model(7.0)})
    models.save(tmp_path / 'mslp.ckpt')

    loaded = MslpModels.load(tmp_path / 'mslp.ckpt')

    assert loaded.is_trained(MslpRange.Blocks5to8)
    assert not loaded.is_trained(MslpRange.Blocks1to4)
    assert np.array_equal(loaded.model_for(6).to_vector(), models.model_for(6).to_vector())

def test_checkpoint_keeps_block_geometry(tmp_path):
    models = MslpModels({MslpRange.Blocks1to4: _threshold_model(3.0)}, block_weight=1000, slice_weight=100)
    models.save(tmp_path / 'mslp.ckpt')

    loaded = MslpModels.load(tmp_path / 'mslp.ckpt')

    assert (loaded.block_weight, loaded.slice_weight) == (1000.0, 100.0)

    config = loaded.config_for(MslpConfig(block_weight=4_000_000, seed=0))

    assert (config.block_weight, config.slice_weight) == (1000.0, 100.0)

def test_checkpoint_without_geometry_keeps_config():
    config = MslpConfig(block_weight=2000, seed=0)

    assert MslpModels().config_for(config) is config

def test_engine_round_trip(synth_chain, make_tx):
    config = MslpConfig(block_weight=16_000, epochs=2, seed=0)

    engine = MslpEngine(config)
    engine.fit(synth_chain, 12)

    assert engine.models.is_trained(MslpRange.Blocks1to4)
    assert (engine.models.block_weight, engine.models.slice_weight) == (16_000, 1600)

    view = synth_chain.as_of(12)
    mempool = reconstruct_mempool(view, 12)
    tx = make_tx('q', 12).skeleton()

    try:
        fee = engine.estimate_fee(tx, 1, view, mempool)

    except (OutOfBoundaryError, UntrainedModelError):
        pytest.skip('no answer at this height')

    assert fee >= 0
