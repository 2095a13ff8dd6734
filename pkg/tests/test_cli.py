# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from io import StringIO
from json import loads as jloads
from pathlib import Path

import pandas as pd
import pytest

from feeratelab.scripts import feeratelab as cli
from feeratelab.scripts.feeratelab import main


@pytest.fixture(scope='module')
def dump(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp('synth')

    assert main(['feeratelab', 'synth', '-o', str(out), '--blocks', '20', '--seed', '1', '--arrival-rate', '3']) == 0

    return out

@pytest.fixture
def cli_out(monkeypatch) -> StringIO:
    out = StringIO()
    monkeypatch.setattr(cli, 'stdout', out)

    return out

def test_synth_writes_outputs(dump):
    for name in ('chain.csv', 'txs.csv', 'synth-config.json', 'run-config.json'):
        assert (dump / name).is_file()

    run_config = jloads((dump / 'run-config.json').read_text(encoding='utf-8'))

    assert run_config['subcommand'] == 'synth'
    assert run_config['seed'] == 1

def test_replay_reproduces_synth(dump, tmp_path):
    before = (dump / 'chain.csv').read_bytes()

    assert main(['feeratelab', '--replay', str(dump / 'run-config.json')]) == 0
    assert (dump / 'chain.csv').read_bytes() == before

def test_ingest(dump, cli_out):
    assert main(['feeratelab', 'ingest', '-d', str(dump)]) == 0
    assert 'tip height 19' in cli_out.getvalue()

def test_estimate_btcflow(dump, cli_out):
    assert main(['feeratelab', 'estimate', '-e', 'btcflow', '-d', str(dump), '--blocks', '2']) == 0

    value = float(cli_out.getvalue().strip().splitlines()[-1])

    assert value >= 1.0

def test_estimate_needs_horizon(dump):
    assert main(['feeratelab', 'estimate', '-e', 'btcflow', '-d', str(dump)]) == 1

def test_estimate_needs_model(dump):
    assert main(['feeratelab', 'estimate', '-e', 'mslp', '-d', str(dump), '--blocks', '2']) == 1

def test_train_and_estimate_fenn(dump, tmp_path, cli_out):
    model = tmp_path / 'fenn'

    assert main(['feeratelab', 'train', '-e', 'fenn', '-d', str(dump), '-o', str(model), '--variant', 'lstm',
                 '--epochs', '2', '--batch-size', '64', '--seed', '3']) == 0
    assert (model / 'loss.csv').is_file()

    cli_out.seek(0)
    cli_out.truncate()

    assert main(['feeratelab', 'estimate', '-e', 'fenn', '-d', str(dump), '--blocks', '2', '-m', str(model)]) == 0
    assert float(cli_out.getvalue().strip().splitlines()[-1]) >= 0.0

def test_evaluate_writes_report(dump, tmp_path):
    out = tmp_path / 'report'

    assert main(['feeratelab', 'evaluate', '-d', str(dump), '-o', str(out), '--engines', 'btcflow,bcore',
                 '--train', '10', '--test', '5', '--dump-predictions']) == 0

    report = pd.read_csv(out / 'report.csv')

    assert report['engine'].tolist() == ['btcflow', 'bcore']
    assert (out / 'predictions.csv').is_file()
    assert (out / 'run-config.json').is_file()

def test_evaluate_split_too_long(dump, tmp_path):
    assert main(['feeratelab', 'evaluate', '-d', str(dump), '-o', str(tmp_path / 'report'), '--engines', 'btcflow',
                 '--train', '180', '--test', '45']) == 1

def test_gradcheck():
    assert main(['feeratelab', 'gradcheck', '--seed', '0']) == 0

def test_missing_data(tmp_path):
    assert main(['feeratelab', 'ingest', '-d', str(tmp_path / 'missing')]) == 1

def test_unknown_flag():
    assert main(['feeratelab', 'synth', '--frobnicate']) == 1

def test_no_command():
    assert main(['feeratelab']) == 1

def test_help():
    assert main(['feeratelab', '--help']) == 0
