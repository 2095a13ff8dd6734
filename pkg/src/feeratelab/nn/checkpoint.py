# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from ctypes import addressof, c_char, c_uint8, c_uint16, c_uint32, memmove, sizeof, LittleEndianStructure
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .common import ParamSet


##########################################################################################
# Constants
##########################################################################################

_magic = b'FEELABCK'
_version = 1


##########################################################################################
# Class definitions
##########################################################################################

class CheckpointHeader(LittleEndianStructure):
    _pack_ = 1
    _fields_ = (
        ('magic', c_char * 8),
        ('version', c_uint32),
        ('entry_count', c_uint32),
    )

    def serialize(self) -> bytearray:
        self_size = sizeof(CheckpointHeader)
        buf = (c_uint8 * self_size)()

        memmove(addressof(buf), addressof(self), self_size)

        return bytearray(buf)

class EntryHeader(LittleEndianStructure):
    '''
    Per-parameter header, followed by the name, the dims as little-endian
    uint64 and the values as little-endian float64.
    '''

    _pack_ = 1
    _fields_ = (
        ('name_len', c_uint16),
        ('ndim', c_uint8),
    )

    def serialize(self) -> bytearray:
        self_size = sizeof(EntryHeader)
        buf = (c_uint8 * self_size)()

        memmove(addressof(buf), addressof(self), self_size)

        return bytearray(buf)


##########################################################################################
# Functions
##########################################################################################

def serialize_params(params: ParamSet) -> bytes:
    '''
    Encode a parameter set in the checkpoint format.
    '''

    out = CheckpointHeader(magic=_magic, version=_version, entry_count=len(params)).serialize()

    for name, value in params.items():
        encoded = name.encode('utf-8')

        out += EntryHeader(name_len=len(encoded), ndim=value.ndim).serialize()
        out += encoded
        out += np.asarray(value.shape, dtype='<u8').tobytes()
        out += np.ascontiguousarray(value, dtype='<f8').tobytes()

    return bytes(out)

def deserialize_params(data: bytes) -> ParamSet:
    '''
    Decode a parameter set from the checkpoint format.
    '''

    header_size = sizeof(CheckpointHeader)
    if len(data) < header_size:
        raise ParseError('checkpoint truncated in header')

    header = CheckpointHeader.from_buffer_copy(data[:header_size])

    if header.magic != _magic:
        raise ParseError(f'bad checkpoint magic: {header.magic!r}')

    if header.version != _version:
        raise ParseError(f'unsupported checkpoint version: {header.version}')

    params = ParamSet()
    offset = header_size
    entry_size = sizeof(EntryHeader)

    for _ in range(header.entry_count):
        if offset + entry_size > len(data):
            raise ParseError('checkpoint truncated in entry header')

        entry = EntryHeader.from_buffer_copy(data[offset:offset + entry_size])
        offset += entry_size

        if offset + entry.name_len + 8 * entry.ndim > len(data):
            raise ParseError('checkpoint truncated in entry name or shape')

        try:
            name = data[offset:offset + entry.name_len].decode('utf-8')

        except UnicodeDecodeError:
            raise ParseError(f'invalid entry name at offset {offset}') from None

        offset += entry.name_len

        shape = tuple(int(d) for d in np.frombuffer(data, dtype='<u8', count=entry.ndim, offset=offset))
        offset += 8 * entry.ndim

        count = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * count > len(data):
            raise ParseError(f'checkpoint truncated in values of {name}')

        params[name] = np.frombuffer(data, dtype='<f8', count=count, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * count

    if offset != len(data):
        raise ParseError(f'trailing bytes in checkpoint: {len(data) - offset}')

    return params

def save_checkpoint(path: Path, params: ParamSet) -> None:
    path.write_bytes(serialize_params(params))

def load_checkpoint(path: Path) -> ParamSet:
    if not path.is_file():
        raise ParseError(f'checkpoint not found: {path}')

    return deserialize_params(path.read_bytes())
