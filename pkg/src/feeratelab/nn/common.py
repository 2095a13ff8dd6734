# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from enum import IntEnum, unique
from typing import Iterator

import numpy as np
from scipy.special import expit

from ..errors import InvalidInputError, TrainingDivergedError


##########################################################################################
# Constants
##########################################################################################

'''
Tensors are plain float64 numpy arrays in row-major layout.
'''
Tensor = np.ndarray

DTYPE = np.float64


##########################################################################################
# Enumerator definitions
##########################################################################################

@unique
class Activation(IntEnum):
    Linear  = 0
    ReLU    = 1
    Tanh    = 2
    Sigmoid = 3

    @staticmethod
    def from_string(label: str) -> Activation:
        try:
            return {
                'linear': Activation.Linear,
                'relu': Activation.ReLU,
                'tanh': Activation.Tanh,
                'sigmoid': Activation.Sigmoid,
            }[label]

        except KeyError:
            raise InvalidInputError(f'unknown activation: {label}') from None

    def apply(self, z: Tensor) -> Tensor:
        if self == Activation.Linear:
            return z
        elif self == Activation.ReLU:
            return np.maximum(z, 0.0)
        elif self == Activation.Tanh:
            return np.tanh(z)
        else:
            return expit(z)

    def derivative(self, z: Tensor, y: Tensor) -> Tensor:
        '''
        Derivative of the activation.

        Arguments:
            z - pre-activation
            y - activation output
        '''

        if self == Activation.Linear:
            return np.ones_like(z)
        elif self == Activation.ReLU:
            return (z > 0.0).astype(DTYPE)
        elif self == Activation.Tanh:
            return 1.0 - y * y
        else:
            return y * (1.0 - y)


##########################################################################################
# Class definitions
##########################################################################################

class ParamSet:
    '''
    Ordered set of named parameter tensors.

    Names are dotted, the part before the first dot names the owning layer.
    '''

    def __init__(self):
        self._tensors: dict[str, Tensor] = dict()

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        value = np.asarray(value, dtype=DTYPE)

        if name in self._tensors and self._tensors[name].shape != value.shape:
            raise InvalidInputError(f'shape mismatch for {name}: {value.shape} != {self._tensors[name].shape}')

        self._tensors[name] = value

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors.keys())

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def add_uniform(self, name: str, shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> None:
        '''
        Add a tensor initialised uniformly in +-sqrt(1 / fan_in).

        Arguments:
            name   - parameter name
            shape  - tensor shape
            fan_in - number of inputs feeding one output
            rng    - seeded generator
        '''

        if name in self._tensors:
            raise InvalidInputError(f'duplicate parameter: {name}')

        bound = np.sqrt(1.0 / fan_in)
        self._tensors[name] = rng.uniform(-bound, bound, size=shape).astype(DTYPE)

    def add_zeros(self, name: str, shape: tuple[int, ...]) -> None:
        if name in self._tensors:
            raise InvalidInputError(f'duplicate parameter: {name}')

        self._tensors[name] = np.zeros(shape, dtype=DTYPE)

    def zeros_like(self) -> ParamSet:
        result = ParamSet()

        for name, value in self._tensors.items():
            result._tensors[name] = np.zeros_like(value)

        return result

    def copy(self) -> ParamSet:
        result = ParamSet()

        for name, value in self._tensors.items():
            result._tensors[name] = value.copy()

        return result

    def size(self) -> int:
        return int(sum(v.size for v in self._tensors.values()))

    def flat(self) -> Tensor:
        '''
        All parameters concatenated in insertion order.
        '''

        if len(self._tensors) == 0:
            return np.zeros(0, dtype=DTYPE)

        return np.concatenate([v.ravel() for v in self._tensors.values()])

    def check_finite(self) -> None:
        for name, value in self._tensors.items():
            if not np.all(np.isfinite(value)):
                raise TrainingDivergedError(f'non-finite values in {name}')

    def equals(self, other: ParamSet) -> bool:
        '''
        Bitwise equality of names, shapes and values.
        '''

        if self.names() != other.names():
            return False

        return all(np.array_equal(v, other[k]) for k, v in self._tensors.items())


##########################################################################################
# Functions
##########################################################################################

def check_shape(x: Tensor, ndim: int, last_dim: int, what: str) -> None:
    '''
    Check the rank and the feature dimension of an input.

    Arguments:
        x        - the input
        ndim     - expected rank
        last_dim - expected size of the last axis
        what     - name of the consumer (for the error message)
    '''

    if x.ndim != ndim or x.shape[-1] != last_dim:
        raise InvalidInputError(f'{what}: shape mismatch: got {x.shape}, expected rank {ndim} with last axis {last_dim}')

def softmax(z: Tensor, axis: int = -1) -> Tensor:
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)

    return e / np.sum(e, axis=axis, keepdims=True)

def softmax_backward(weights: Tensor, dweights: Tensor) -> Tensor:
    '''
    Gradient wrt the softmax logits (softmax over the last axis).
    '''

    return weights * (dweights - np.sum(dweights * weights, axis=-1, keepdims=True))
