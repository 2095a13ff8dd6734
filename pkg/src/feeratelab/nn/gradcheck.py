# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


from __future__ import annotations


##########################################################################################
# Imports
##########################################################################################

from dataclasses import dataclass
from logging import getLogger
from typing import Callable

import numpy as np

from .common import ParamSet


##########################################################################################
# Constants
##########################################################################################

_log_prefix = 'gradcheck: '

'''
Denominator floor of the relative error.
'''
_error_floor = 1e-5


##########################################################################################
# Dataclass definitions
##########################################################################################

@dataclass(frozen=True)
class GradCheckReport:
    '''
    Dataclass encoding the outcome of a finite-difference check.

    max_rel_error - worst relative error over all checked entries
    worst_param   - parameter name of the worst entry
    checked       - number of checked entries
    tolerance     - pass threshold
    '''

    max_rel_error: float
    worst_param: str
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


##########################################################################################
# Functions
##########################################################################################

def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), _error_floor)

def grad_check(loss_and_grads: Callable[[ParamSet], tuple[float, ParamSet]], params: ParamSet, tolerance: float = 1e-4,
               step: float = 1e-5, max_entries: int = None, seed: int = 0) -> GradCheckReport:
    '''
    Compare analytic gradients with central finite differences.

    Arguments:
        loss_and_grads - maps parameters to (scalar loss, gradients)
        params         - the point to check at (restored afterwards)
        tolerance      - pass threshold of the relative error
        step           - finite-difference step
        max_entries    - entries checked per tensor (None checks all)
        seed           - seed of the entry sampling
    '''

    rng = np.random.default_rng(seed)

    _, analytic = loss_and_grads(params)

    worst, worst_name, checked = 0.0, None, 0

    for name in params.names():
        tensor = params[name]
        flat = tensor.reshape(-1)

        if max_entries is None or flat.size <= max_entries:
            entries = np.arange(flat.size)
        else:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        grad = analytic[name].reshape(-1)

        for idx in entries:
            original = flat[idx]

            flat[idx] = original + step
            loss_plus, _ = loss_and_grads(params)

            flat[idx] = original - step
            loss_minus, _ = loss_and_grads(params)

            flat[idx] = original

            err = relative_error(grad[idx], (loss_plus - loss_minus) / (2.0 * step))
            checked += 1

            if err > worst or worst_name is None:
                worst, worst_name = err, name

    report = GradCheckReport(max_rel_error=worst, worst_param=worst_name, checked=checked, tolerance=tolerance)

    getLogger(__name__).debug(_log_prefix + f'{checked} entries, max relative error {worst:.3e} at {worst_name}')

    return report

def layer_suite(seed: int = 0, tolerance: float = 1e-4) -> list[tuple[str, GradCheckReport]]:
    '''
    Finite-difference check of every layer type on small random inputs.

    The loss of each layer is a fixed random projection of its output.
    '''

    from .attention import AdditiveAttention, SelfAttention, WeightedAttention
    from .common import Activation
    from .layers import Dense, Lstm

    rng = np.random.default_rng(seed)

    batch, steps, width = 3, 4, 5

    cases = (
        ('dense', Dense(width, 4, Activation.Tanh), (batch, width)),
        ('dense-sigmoid', Dense(width, 4, Activation.Sigmoid), (batch, width)),
        ('lstm', Lstm(width, 4), (batch, steps, width)),
        ('lstm-literal', Lstm(width, 4, literal=True), (batch, steps, width)),
        ('additive-attention', AdditiveAttention(width, 6), (batch, steps, width)),
        ('self-attention', SelfAttention(width, 4, 3), (batch, steps, width)),
        ('weighted-attention', WeightedAttention(width), (batch, steps, width)),
    )

    reports = []

    for name, layer, shape in cases:
        params = ParamSet()
        layer.init_params(params, rng)

        x = rng.normal(size=shape)

        out, _ = layer.forward(params, x)
        projection = rng.normal(size=out.shape)

        def _loss_and_grads(p: ParamSet, layer=layer, x=x, projection=projection) -> tuple[float, ParamSet]:
            y, cache = layer.forward(p, x)

            grads = p.zeros_like()
            layer.backward(p, cache, projection, grads)

            return float(np.sum(y * projection)), grads

        reports.append((name, grad_check(_loss_and_grads, params, tolerance=tolerance, seed=seed)))

    return reports
