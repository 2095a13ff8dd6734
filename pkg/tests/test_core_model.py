# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


import numpy as np
import pytest

from feeratelab.core_model import (
    BucketKind,
    BucketScheme,
    ChainView,
    EstimateRequest,
    MempoolSnapshot,
    bucket_of,
    compute_feerate,
    feerate_to_fee,
)
from feeratelab.errors import InvalidInputError, ValidationError


@pytest.mark.parametrize('fee, weight, expected', [
    (1000, 400, 10.0),
    (0, 400, 0.0),
    (2500, 1000, 10.0),
])
def test_compute_feerate(fee, weight, expected):
    assert compute_feerate(fee, weight) == pytest.approx(expected)

def test_compute_feerate_zero_weight():
    with pytest.raises(InvalidInputError):
        compute_feerate(100, 0)

@pytest.mark.parametrize('weight, feerate, floor, expected', [
    (400, 10.0, False, 1000.0),
    (400, 10.9, True, 1000.0),
    (4, 1.0, False, 1.0),
])
def test_feerate_to_fee(weight, feerate, floor, expected):
    assert feerate_to_fee(weight, feerate, floor) == pytest.approx(expected)

def test_feerate_to_fee_zero_weight():
    with pytest.raises(InvalidInputError):
        feerate_to_fee(0, 10.0)

def test_feerate_to_fee_integer_inputs():
    rng = np.random.default_rng(0)

    for weight, feerate in rng.integers(1, 400_000, size=(200, 2)):
        assert feerate_to_fee(int(weight), int(feerate)) == int(weight) / 4 * int(feerate)
        assert feerate_to_fee(int(weight), int(feerate) + 0.75, floor=True) == int(weight) / 4 * int(feerate)

def test_bucket_of_integer_ceil():
    scheme = BucketScheme.integer_ceil(1, 1000)

    assert bucket_of(2.3, scheme) == 3
    assert bucket_of(3.0, scheme) == 3
    assert bucket_of(0.2, scheme) == 1
    assert bucket_of(5000.0, scheme) == 1000

def test_bucket_of_geometric():
    scheme = BucketScheme.geometric(r_min=1.0)

    assert bucket_of(1.0, scheme) == 0
    assert bucket_of(1.11, scheme) == 2
    assert bucket_of(1.05 ** 10 + 1e-9, scheme) == 10

def test_bucket_of_negative_feerate():
    with pytest.raises(InvalidInputError):
        bucket_of(-0.5, BucketScheme.geometric())

def test_geometric_boundaries_increase():
    scheme = BucketScheme.geometric()

    assert scheme.kind == BucketKind.Geometric
    assert len(scheme.boundaries) == scheme.count + 1
    assert np.all(np.diff(scheme.boundaries) > 0)
    assert scheme.boundaries[-1] >= 10000.0

def test_bucket_kind_from_string():
    assert BucketKind.from_string('integer-ceil') == BucketKind.IntegerCeil

    with pytest.raises(InvalidInputError):
        BucketKind.from_string('linear')

def test_invalid_scheme_bounds():
    with pytest.raises(InvalidInputError):
        BucketScheme.geometric(r_min=10.0, r_max=1.0)

def test_transaction_invariants(make_tx):
    make_tx('ok', 3, confirm_height=5).validate()

    with pytest.raises(ValidationError):
        make_tx('early', 3, confirm_height=2).validate()

    with pytest.raises(ValidationError):
        make_tx('light', 3, weight=0, size=10).validate()

    with pytest.raises(ValidationError):
        make_tx('neg', 3, fee=-1).validate()

def test_skeleton_strips_fee_and_confirmation(make_tx):
    skeleton = make_tx('x', 3, confirm_height=5).skeleton()

    assert skeleton.fee is None
    assert skeleton.feerate is None
    assert skeleton.confirm_height is None
    assert skeleton.leave_height is None
    assert skeleton.entry_height == 3

def test_chain_rejects_unordered_blocks(make_block):
    with pytest.raises(ValidationError):
        ChainView([make_block(2), make_block(1)], {})

def test_chain_rejects_unknown_confirm_height(make_block, make_tx):
    tx = make_tx('x', 0, confirm_height=7)

    with pytest.raises(ValidationError):
        ChainView([make_block(0), make_block(1)], {'x': tx})

def test_as_of_hides_future(small_chain):
    view = small_chain.as_of(2)

    assert view.tip_height == 2
    assert set(view.transactions) == {'a', 'b', 'c', 'd'}
    assert view.transactions['a'].confirm_height == 2
    assert view.transactions['d'].confirm_height is None
    assert view.transactions['c'].confirm_height is None

def test_mempool_verify(small_chain):
    scheme = BucketScheme.geometric()
    columns = small_chain.tx_columns()

    snapshot = MempoolSnapshot.from_columns(columns, columns.mempool_mask(1), 1, scheme)
    snapshot.verify(small_chain.transactions)

    assert snapshot.txids == frozenset({'a', 'b', 'c'})
    assert snapshot.total_weight == pytest.approx(1600.0)

    broken = MempoolSnapshot(
        height=snapshot.height,
        txids=snapshot.txids,
        scheme=scheme,
        bucket_counts=snapshot.bucket_counts + 1,
        bucket_weights=snapshot.bucket_weights,
        feerates=snapshot.feerates,
        weights=snapshot.weights,
        entry_heights=snapshot.entry_heights,
    )

    with pytest.raises(ValidationError):
        broken.verify(small_chain.transactions)

def test_request_needs_exactly_one_horizon(make_tx):
    tx = make_tx('x', 0).skeleton()

    with pytest.raises(InvalidInputError):
        EstimateRequest(tx)

    with pytest.raises(InvalidInputError):
        EstimateRequest(tx, horizon_blocks=2, horizon_minutes=20.0)

    with pytest.raises(InvalidInputError):
        EstimateRequest(tx, horizon_blocks=0)

    assert EstimateRequest(tx, horizon_minutes=30.0).minutes == 30.0

    with pytest.raises(InvalidInputError):
        EstimateRequest(tx, horizon_minutes=30.0).blocks
