# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


import numpy as np
import pytest

from feeratelab.core_model import BucketScheme, EstimateRequest, MempoolSnapshot
from feeratelab.errors import InsufficientHistoryError, InvalidInputError
from feeratelab.fenn import (
    FennAblation,
    FennDataset,
    FennEngine,
    FennFeatures,
    FennHyper,
    FennModel,
    FennVariant,
    Standardizer,
    build_training_set,
    estimate_fee,
    extract_features,
    network_suite,
    random_dataset,
    train,
)
from feeratelab.ingestion import reconstruct_mempool
from feeratelab.nn import Activation


def _small_hyper(**kwargs) -> FennHyper:
    values = dict(epochs=5, batch_size=16, lr=1e-2, hidden=4, d_k=4, seed=0)
    values.update(kwargs)

    return FennHyper(**values)

def _perturbed(features: FennFeatures, mem: bool = False, seq: bool = False) -> FennFeatures:
    return FennFeatures(
        tx=features.tx,
        mem=features.mem * 3.0 + 7.0 if mem else features.mem,
        seq=features.seq[:, ::-1, :] * 2.0 + 1.0 if seq else features.seq,
    )

def _untrained(ablation: FennAblation, dataset: FennDataset) -> FennModel:
    model = FennModel(FennVariant.Adv, ablation, _small_hyper(head_activation=Activation.Tanh), dataset.features.mem.shape[1])
    model.fit_scalers(dataset)

    return model

def test_variant_and_ablation_labels():
    assert FennVariant.from_string('lstmadv') == FennVariant.LstmAdv
    assert FennAblation.from_string('memtx') == FennAblation.MemTx

    with pytest.raises(InvalidInputError):
        FennVariant.from_string('transformer')

    with pytest.raises(InvalidInputError):
        FennAblation.from_string('mem')

def test_engine_name():
    assert FennEngine(FennVariant.Adv).name == 'fenn-adv'
    assert FennEngine(FennVariant.Self, FennAblation.MemTx).name == 'fenn-self_memtx'

def test_standardizer_constant_column():
    scaler = Standardizer.fit(np.array([[1.0, 5.0], [3.0, 5.0]]))

    assert scaler.std.tolist() == [1.0, 1.0]
    assert scaler.transform(np.array([[2.0, 5.0]])).tolist() == [[0.0, 0.0]]

def test_extract_features(make_chain, make_tx):
    chain = make_chain(range(4), [])
    scheme = BucketScheme.geometric()
    mempool = MempoolSnapshot.from_transactions(3, [], scheme)

    tx = make_tx('q', 3, weight=1520, size=380, inputs=2, outputs=2).skeleton()
    features = extract_features(chain, mempool, tx, 3, scheme)

    assert features.tx.tolist() == [[2.0, 2.0, 380.0, 1520.0, 2.0, 3.0]]
    assert features.mem.shape == (1, scheme.count)
    assert not np.any(features.mem)
    assert features.seq[0].tolist() == [list(chain.block_at(h).features()) for h in (1, 2, 3)]

def test_extract_features_short_history(make_chain, make_tx):
    chain = make_chain(range(2), [])
    mempool = MempoolSnapshot.from_transactions(1, [], BucketScheme.geometric())

    with pytest.raises(InsufficientHistoryError):
        extract_features(chain, mempool, make_tx('q', 1).skeleton(), 1)

def test_build_training_set(make_chain, make_tx):
    chain = make_chain(range(98, 104), [
        make_tx('x', 100, feerate=7.0, weight=800, confirm_height=103),
        make_tx('y', 99, feerate=3.0, confirm_height=101),
        make_tx('pending', 100, feerate=1.0),
    ])

    dataset = build_training_set(chain, 3, BucketScheme.geometric())

    # y lacks a full history, pending has no label
    assert dataset.txids == ['x']
    assert dataset.target.tolist() == [1400.0]
    assert dataset.features.tx[0, -1] == 3.0
    assert dataset.features.mem.sum() == 3.0
    assert dataset.features.seq[0].tolist() == [list(chain.block_at(h).features()) for h in (98, 99, 100)]

def test_build_training_set_window(make_chain, make_tx):
    chain = make_chain(range(10), [
        make_tx('early', 3, confirm_height=4),
        make_tx('late', 7, confirm_height=9),
    ])

    dataset = build_training_set(chain, 3, min_entry_height=5)

    assert dataset.txids == ['late']

def test_train_rejects_empty_dataset(make_chain, make_tx):
    chain = make_chain(range(6), [make_tx('pending', 3)])

    dataset = build_training_set(chain, 3)

    assert len(dataset) == 0

    with pytest.raises(InvalidInputError):
        train(dataset, FennVariant.Adv, _small_hyper())

def test_training_reduces_loss():
    dataset = random_dataset(64, 5, seed=0)
    model = train(dataset, FennVariant.Adv, _small_hyper(epochs=30))

    assert len(model.loss_history) == 30
    assert model.loss_history[-1] < model.loss_history[0]
    assert model.train_seconds > 0.0

def test_constant_target_is_learned():
    count = 32

    features = FennFeatures(
        tx=np.tile([1.0, 2.0, 250.0, 1000.0, 2.0, 1.0], (count, 1)),
        mem=np.full((count, 5), 4.0),
        seq=np.tile([600.0, 1e5, 5e13, 4e5, 300.0, 12.0], (count, 3, 1)),
    )
    dataset = FennDataset(features=features, target=np.full(count, 500.0), txids=[f't{i}' for i in range(count)])

    model = train(dataset, FennVariant.Lstm, _small_hyper(epochs=500, batch_size=count))

    assert model.predict(features) == pytest.approx(np.full(count, 500.0), rel=5e-2)

def test_training_is_deterministic():
    dataset = random_dataset(32, 5, seed=1)

    first = train(dataset, FennVariant.Self, _small_hyper())
    second = train(dataset, FennVariant.Self, _small_hyper())

    assert first.params.equals(second.params)
    assert first.loss_history == second.loss_history

def test_model_save_load(tmp_path):
    dataset = random_dataset(32, 5, seed=2)
    model = train(dataset, FennVariant.Wht, _small_hyper(literal_lstm=True))

    model.save(tmp_path / 'model')
    loaded = FennModel.load(tmp_path / 'model')

    assert loaded.variant == FennVariant.Wht
    assert loaded.hyper == model.hyper
    assert loaded.params.equals(model.params)
    assert np.array_equal(loaded.predict(dataset.features), model.predict(dataset.features))

def test_prediction_is_clamped():
    dataset = random_dataset(16, 5, seed=3)
    model = train(dataset, FennVariant.Adv, _small_hyper(epochs=1))

    model.params['head2.W'] = np.zeros((1, 8))
    model.params['head2.b'] = np.array([-1e3])

    assert np.all(model.predict(dataset.features) == 0.0)

def test_masked_groups_are_ignored():
    dataset = random_dataset(8, 5, seed=4)
    features = dataset.features

    tx_only = _untrained(FennAblation.Tx, dataset)
    assert np.array_equal(tx_only.predict(_perturbed(features, mem=True, seq=True)), tx_only.predict(features))

    mem_tx = _untrained(FennAblation.MemTx, dataset)
    assert np.array_equal(mem_tx.predict(_perturbed(features, seq=True)), mem_tx.predict(features))

    full = _untrained(FennAblation.Full, dataset)
    assert not np.allclose(full.predict(_perturbed(features, mem=True)), full.predict(features))
    assert not np.allclose(full.predict(_perturbed(features, seq=True)), full.predict(features))

def test_mempool_width_mismatch():
    dataset = random_dataset(8, 5, seed=5)
    model = _untrained(FennAblation.Full, dataset)

    narrow = FennFeatures(tx=dataset.features.tx, mem=dataset.features.mem[:, :3], seq=dataset.features.seq)

    with pytest.raises(InvalidInputError):
        model.predict(narrow)

def test_network_gradients():
    for name, report in network_suite(seed=0):
        assert report.passed, f'{name}: {report.max_rel_error:.3e} at {report.worst_param}'

def test_engine_on_synthetic_chain(synth_chain, make_tx):
    engine = FennEngine(FennVariant.Lstm, hyper=_small_hyper(epochs=2, batch_size=64))
    engine.fit(synth_chain, 16)

    view = synth_chain.as_of(16)
    mempool = reconstruct_mempool(view, 16)

    fee = engine.estimate_fee(make_tx('q', 16).skeleton(), 2, view, mempool)

    assert np.isfinite(fee)
    assert fee >= 0.0

    request = EstimateRequest(make_tx('q', 16).skeleton(), horizon_blocks=2)

    assert estimate_fee(request, mempool, view, engine.model) == pytest.approx(fee)
