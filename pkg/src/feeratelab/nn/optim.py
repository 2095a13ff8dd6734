# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, TrainingDivergedError
from .common import ParamSet


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class AdamHyper:
    '''
    Dataclass encoding the Adam hyper-parameters.
    '''

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidInputError(f'invalid learning rate: {self.lr}')

        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidInputError(f'invalid moment decay: {self.beta1}, {self.beta2}')

@dataclass
class AdamState:
    '''
    Dataclass encoding the first and second moments and the step count.
    '''

    m: ParamSet
    v: ParamSet
    step: int = 0

    @staticmethod
    def for_params(params: ParamSet) -> AdamState:
        return AdamState(m=params.zeros_like(), v=params.zeros_like())


##########################################################################################
# Functions
##########################################################################################

def adam_step(params: ParamSet, grads: ParamSet, state: AdamState, hyper: AdamHyper) -> tuple[ParamSet, AdamState]:
    '''
    Apply one bias-corrected Adam update in place.

    Arguments:
        params - parameters to update
        grads  - gradients with the same names and shapes
        state  - moments, updated in place
        hyper  - hyper-parameters
    '''

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f'non-finite gradient for {name} at step {state.step + 1}')

    state.step += 1

    correction1 = 1.0 - hyper.beta1 ** state.step
    correction2 = 1.0 - hyper.beta2 ** state.step

    for name in params.names():
        g = grads[name]

        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * (g * g)

        state.m[name] = m
        state.v[name] = v

        params[name] = params[name] - hyper.lr * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)

    return params, state
