# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from pathlib import Path

import numpy as np
import pytest

from feeratelab.core_model import BucketScheme
from feeratelab.errors import ConfigError, InvalidInputError, ParseError, ValidationError
from feeratelab.ingestion import (
    SynthConfig,
    entry_heights_of,
    load_chain,
    mempool_series,
    reconstruct_mempool,
    synth_generate,
    write_chain,
    write_chain_json,
)


_chain_header = 'height,timestamp,interval,size,difficulty,total_weight,tx_count,mean_feerate\n'
_txs_header = 'txid,version,size,weight,inputs,outputs,fee,first_seen_time,entry_height,leave_height,confirm_height,confirm_time\n'


def _write_dump(directory: Path, chain_rows: str, tx_rows: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)

    (directory / 'chain.csv').write_text(_chain_header + chain_rows, encoding='utf-8')
    (directory / 'txs.csv').write_text(_txs_header + tx_rows, encoding='utf-8')

    return directory

def test_header_only_dump(tmp_path):
    chain = load_chain(_write_dump(tmp_path / 'empty', '', ''))

    assert len(chain.blocks) == 0
    assert len(chain.transactions) == 0
    assert chain.tip_height == -1

def test_two_block_fixture(tmp_path):
    chain_rows = (
        '100,1600000000,0,500,5e13,2000,1,8.0\n'
        '101,1600000600,600,250,5e13,1000,1,4.0\n'
    )
    tx_rows = (
        'aa,2,250,1000,1,2,1000,1599999990,99,,100,1600000000\n'
        'bb,2,250,1000,1,2,1000,1600000100,100,101,101,1600000600\n'
        'cc,1,250,1000,2,1,500,1600000700,,,,\n'
    )

    chain = load_chain(_write_dump(tmp_path / 'fixture', chain_rows, tx_rows))

    assert chain.tip_height == 101
    assert len(chain.transactions) == 3
    assert chain.transactions['bb'].confirm_height == 101
    assert chain.transactions['bb'].feerate == pytest.approx(4.0)
    assert chain.transactions['cc'].entry_height == 101
    assert chain.transactions['cc'].confirm_height is None

def test_zero_weight_is_rejected(tmp_path):
    chain_rows = '0,1600000000,0,250,5e13,1000,0,0\n'
    tx_rows = 'aa,2,250,0,1,2,1000,1600000001,0,,,\n'

    with pytest.raises(ValidationError):
        load_chain(_write_dump(tmp_path / 'bad', chain_rows, tx_rows))

def test_parse_error_names_row_and_field(tmp_path):
    chain_rows = '0,1600000000,0,250,5e13,1000,0,0\n'
    tx_rows = (
        'aa,2,250,1000,1,2,1000,1600000001,0,,,\n'
        'bb,2,250,1000,1,2,abc,1600000002,0,,,\n'
    )

    with pytest.raises(ParseError) as info:
        load_chain(_write_dump(tmp_path / 'bad', chain_rows, tx_rows))

    assert info.value.row == 3
    assert info.value.field == 'fee'

def test_missing_column(tmp_path):
    directory = tmp_path / 'bad'
    directory.mkdir()

    (directory / 'chain.csv').write_text('height,timestamp\n0,1600000000\n', encoding='utf-8')
    (directory / 'txs.csv').write_text(_txs_header, encoding='utf-8')

    with pytest.raises(ParseError) as info:
        load_chain(directory)

    assert info.value.row == 1

def test_missing_dump(tmp_path):
    with pytest.raises(InvalidInputError):
        load_chain(tmp_path / 'nothing')

def test_entry_heights_of(make_block):
    blocks = [make_block(5, timestamp=100.0), make_block(6, timestamp=200.0), make_block(7, timestamp=300.0)]

    heights = entry_heights_of(blocks, np.array([50.0, 150.0, 300.0]))

    assert heights.tolist() == [4, 5, 7]

def test_mempool_membership(make_chain, make_tx):
    chain = make_chain(range(9, 13), [
        make_tx('waiting', 10, confirm_height=12),
        make_tx('confirmed', 10, confirm_height=11),
    ])

    snapshot = reconstruct_mempool(chain, 11)

    assert 'waiting' in snapshot.txids
    assert not 'confirmed' in snapshot.txids

def test_mempool_matches_recount(small_chain):
    snapshot = reconstruct_mempool(small_chain, 2)

    assert snapshot.count == 2
    assert snapshot.txids == frozenset({'c', 'd'})

    snapshot.verify(small_chain.transactions)

def test_mempool_series(small_chain):
    counts = [s.count for s in mempool_series(small_chain, range(5), BucketScheme.integer_ceil())]

    assert counts == [1, 3, 2, 2, 1]

def test_mempool_beyond_tip(small_chain):
    with pytest.raises(InvalidInputError):
        reconstruct_mempool(small_chain, 5)

def test_synth_empty():
    chain = synth_generate(SynthConfig(n_blocks=0, seed=1))

    assert len(chain.blocks) == 0
    assert len(chain.transactions) == 0

def test_synth_is_deterministic(tmp_path):
    config = SynthConfig(n_blocks=15, tx_arrival_rate=3.0, seed=5)

    write_chain_json(synth_generate(config), tmp_path / 'first.json')
    write_chain_json(synth_generate(config), tmp_path / 'second.json')

    assert (tmp_path / 'first.json').read_bytes() == (tmp_path / 'second.json').read_bytes()

def test_synth_seeds_differ():
    first = synth_generate(SynthConfig(n_blocks=10, tx_arrival_rate=3.0, seed=1))
    second = synth_generate(SynthConfig(n_blocks=10, tx_arrival_rate=3.0, seed=2))

    assert set(first.transactions) != set(second.transactions)

def test_synth_blocks_respect_capacity():
    config = SynthConfig(n_blocks=20, tx_arrival_rate=10.0, block_weight_limit=30_000, seed=3)
    chain = synth_generate(config)

    assert all(b.total_weight <= config.block_weight_limit for b in chain.blocks)
    assert all(t.confirm_height is None or t.confirm_height > t.entry_height for t in chain.transactions.values())

def test_synth_congestion():
    config = SynthConfig(n_blocks=30, tx_arrival_rate=25.0, block_weight_limit=40_000, seed=4)
    chain = synth_generate(config)

    # pending transactions count with their wait so far
    waits = [
        (t.confirm_height if t.confirm_height is not None else chain.tip_height) - t.entry_height
        for t in chain.transactions.values() if t.entry_height < chain.tip_height
    ]

    assert np.median(waits) > 1

def test_csv_dump_reloads(tmp_path, synth_chain):
    write_chain(synth_chain, tmp_path / 'dump')
    chain = load_chain(tmp_path / 'dump')

    assert chain.tip_height == synth_chain.tip_height
    assert set(chain.transactions) == set(synth_chain.transactions)

    for txid, tx in synth_chain.transactions.items():
        loaded = chain.transactions[txid]

        assert (loaded.fee, loaded.weight, loaded.entry_height, loaded.confirm_height) == (tx.fee, tx.weight, tx.entry_height, tx.confirm_height)
        assert loaded.first_seen_time == pytest.approx(tx.first_seen_time)

def test_json_dump_reloads(tmp_path, synth_chain):
    write_chain_json(synth_chain, tmp_path / 'chain.json')
    chain = load_chain(tmp_path / 'chain.json')

    assert chain.heights.tolist() == synth_chain.heights.tolist()
    assert chain.timestamps == pytest.approx(synth_chain.timestamps)
    assert len(chain.transactions) == len(synth_chain.transactions)

def test_synth_config_from_path(tmp_path):
    path = tmp_path / 'synth.json'
    path.write_text('{"n-blocks": 12, "tx-arrival-rate": 2.5, "seed": 9}\n', encoding='utf-8')

    config = SynthConfig.from_path(path)

    assert config.n_blocks == 12
    assert config.tx_arrival_rate == 2.5
    assert config.seed == 9

def test_synth_config_rejects_unknown_entry(tmp_path):
    path = tmp_path / 'synth.json'
    path.write_text('{"n-blockz": 12}\n', encoding='utf-8')

    with pytest.raises(ConfigError):
        SynthConfig.from_path(path)
