# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


##########################################################################################
# Imports
##########################################################################################

from json import JSONDecodeError, dump as jdump, loads as jloads
from os import environ as os_environ
from pathlib import Path
from typing import Any, Iterable

from .errors import ConfigError


##########################################################################################
# Constants
##########################################################################################

'''
Environment variable that overrides the default seed of every seeded path.
'''
_seed_variable = 'FEERATE_LAB_SEED'

_fallback_seed = 0


##########################################################################################
# Functions
##########################################################################################

def default_seed() -> int:
    '''
    Get the default seed.

    Returns the value of FEERATE_LAB_SEED if set, zero otherwise.
    '''

    raw = os_environ.get(_seed_variable)
    if raw is None or len(raw.strip()) == 0:
        return _fallback_seed

    try:
        seed = int(raw)

    except ValueError as err:
        raise ConfigError(f'invalid {_seed_variable}: {raw}: {err}') from err

    if seed < 0:
        raise ConfigError(f'invalid {_seed_variable}: {raw}: negative seed')

    return seed

def read_config(path: Path, entries: Iterable[str], optional: Iterable[str] = ()) -> dict[str, Any]:
    '''
    Read a JSON config object from a path.

    Arguments:
        path     - path from where we read the config
        entries  - entries that have to be present
        optional - entries that may be present

    Unknown entries are rejected, so that a typo does not silently fall back
    to a default value.
    '''

    if not path.is_file():
        raise ConfigError(f'config path is not a file: {path}')

    try:
        config_data = jloads(path.read_text(encoding='utf-8'))

    except JSONDecodeError as err:
        raise ConfigError(f'failed to decode config: {path}: {err}') from err

    if not isinstance(config_data, dict):
        raise ConfigError(f'config is not a JSON object: {path}')

    entries = tuple(entries)
    known = set(entries) | set(optional)

    for entry in entries:
        if not entry in config_data:
            raise ConfigError(f'config entry missing: {entry}')

    for entry in config_data.keys():
        if not entry in known:
            raise ConfigError(f'unknown config entry: {entry}')

    return config_data

def write_config(path: Path, config_data: dict[str, Any]) -> None:
    '''
    Write a JSON config object to a path.

    Arguments:
        path        - path to which we write
        config_data - the JSON-serializable config
    '''

    with open(path, mode='w', encoding='utf-8') as f:
        jdump(config_data, fp=f, indent=4, sort_keys=True)
        f.write('\n')

def require_number(config_data: dict[str, Any], entry: str, minimum: float = None, integer: bool = False) -> float:
    '''
    Fetch a numeric config entry and check its type and range.

    Arguments:
        config_data - the decoded config
        entry       - name of the entry
        minimum     - smallest allowed value (inclusive), or None
        integer     - does the entry have to be an integer?
    '''

    value = config_data[entry]

    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f'invalid {entry} type: {type(value)}')

    if integer and not isinstance(value, int):
        raise ConfigError(f'invalid {entry}: not an integer: {value}')

    if minimum is not None and value < minimum:
        raise ConfigError(f'invalid {entry}: {value} < {minimum}')

    return value
